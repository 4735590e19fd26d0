//! Dense linear algebra: solves, Lyapunov and Riccati equations, matrix
//! exponential and a small convex QP solver.

mod care;
mod linalg;
mod mat;
mod poly;
mod qp;

pub use care::{lqr_gain, riccati_residual, solve_care, solve_care_with, CareOptions};
pub use linalg::{expm, inverse, rank, solve_linear, solve_lyapunov, Lu, PIVOT_FLOOR};
pub use mat::Mat;
pub use poly::{char_poly, is_hurwitz, routh_hurwitz_stable};
pub use qp::{lambda_max, solve_qp, QpProblem, QpSolution, EQ_TOL};
