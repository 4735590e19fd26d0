//! Continuous-time algebraic Riccati equation
//! `AᵀP + PA − PBR⁻¹BᵀP + Q = 0` by Newton–Kleinman iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::linalg::{inverse, solve_lyapunov, Lu};
use super::mat::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CareOptions {
    pub max_iter: usize,
    /// Relative step tolerance on successive iterates.
    pub tol: f64,
}

impl Default for CareOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-13,
        }
    }
}

/// Riccati residual `AᵀP + PA − PBR⁻¹BᵀP + Q`.
pub fn riccati_residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let rinv_bt = Lu::factor(r)?.solve_mat(&b.transpose())?;
    Ok(a
        .transpose()
        .matmul(p)
        .add(&p.matmul(a))
        .sub(&p.matmul(b).matmul(&rinv_bt).matmul(p))
        .add(q))
}

fn check_shapes(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<()> {
    let n = a.rows();
    let m = b.cols();
    if !a.is_square() || b.rows() != n || q.rows() != n || q.cols() != n {
        return Err(Error::Dimension("CARE state operands".into()));
    }
    if r.rows() != m || r.cols() != m {
        return Err(Error::Dimension("CARE input weight".into()));
    }
    Ok(())
}

/// Bass gain for shift `σ`: with `−(A + σI)` Hurwitz, the zero-state-cost
/// Riccati solution of the shifted pair `(A + σI, B)` is `W⁻¹` where
/// `(A + σI)W + W(A + σI)ᵀ = BR⁻¹Bᵀ`, and `F₀ = R⁻¹BᵀW⁻¹` puts every
/// eigenvalue of `A − BF₀` at `−λ − 2σ`.
fn bass_gain(a: &Mat, brb: &Mat, rinv_bt: &Mat, sigma: f64) -> Option<Mat> {
    let shifted = a.add(&Mat::identity(a.rows()).scale(sigma));
    // solve_lyapunov solves `Mᵀ W + W M = −C`; pass M = (A + σI)ᵀ.
    let w = solve_lyapunov(&shifted.transpose(), &brb.scale(-1.0)).ok()?;
    let gain = rinv_bt.matmul(&inverse(&w).ok()?);
    gain.is_finite().then_some(gain)
}

/// Smallest `σ` with `−(A + σI)` Hurwitz, i.e. `−min Re λ(A)`.
fn shift_threshold(a: &Mat) -> f64 {
    let n = a.rows();
    let hurwitz_at = |s: f64| super::is_hurwitz(&a.add(&Mat::identity(n).scale(s)).scale(-1.0));
    let (mut lo, mut hi) = (-a.norm_inf() - 1.0, a.norm_inf() + 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if hurwitz_at(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Initial stabilizing gain. The conservative shift `1 + ‖A‖∞` is tried
/// first; when it leaves the Gramian numerically singular (typical with a
/// single input) tighter shifts just past `−min Re λ(A)` follow.
fn initial_gain(a: &Mat, b: &Mat, r: &Mat, rinv_bt: &Mat) -> Result<Mat> {
    let n = a.rows();
    let brb = b.matmul(rinv_bt);
    let stabilizes = |f: &Mat| super::is_hurwitz(&a.sub(&b.matmul(f)));
    if let Some(f) = bass_gain(a, &brb, rinv_bt, 1.0 + a.norm_inf()).filter(|f| stabilizes(f)) {
        return Ok(f);
    }
    let base = shift_threshold(a).max(0.0);
    for margin in [1.0, 0.3, 0.1, 0.03, 0.01] {
        if let Some(f) = bass_gain(a, &brb, rinv_bt, base + margin).filter(|f| stabilizes(f)) {
            return Ok(f);
        }
    }
    // Uncontrollable modes leave W singular: fall back to F₀ = 0 when the
    // open loop is already stable.
    if super::is_hurwitz(a) {
        return Ok(Mat::zeros(r.rows(), n));
    }
    Err(Error::NoStabilizingSolution { iterations: 0, residual: f64::INFINITY })
}

/// Stabilizing solution `P ⪰ 0` of the CARE.
pub fn solve_care(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    solve_care_with(a, b, q, r, CareOptions::default())
}

pub fn solve_care_with(a: &Mat, b: &Mat, q: &Mat, r: &Mat, opts: CareOptions) -> Result<Mat> {
    check_shapes(a, b, q, r)?;
    let rinv_bt = Lu::factor(r)?.solve_mat(&b.transpose())?;
    let mut gain = initial_gain(a, b, r, &rinv_bt)?;
    let mut p_prev: Option<Mat> = None;
    let mut best: Option<(f64, Mat)> = None;
    for _ in 0..opts.max_iter {
        let closed = a.sub(&b.matmul(&gain));
        let rhs = q.add(&gain.transpose().matmul(r).matmul(&gain));
        let p = solve_lyapunov(&closed, &rhs)?;
        if !p.is_finite() {
            break;
        }
        gain = rinv_bt.matmul(&p);
        if let Some(prev) = &p_prev {
            let step = p.sub(prev).frobenius_norm();
            if step <= opts.tol * (1.0 + p.frobenius_norm()) {
                return Ok(p);
            }
        }
        let res = riccati_residual(a, b, q, r, &p)?.frobenius_norm();
        if best.as_ref().is_none_or(|(r, _)| res < *r) {
            best = Some((res, p.clone()));
        }
        p_prev = Some(p);
    }
    // Once rounding stalls the iteration, keep the best iterate if its
    // residual is negligible next to the size of the equation's terms.
    let brb = b.matmul(&rinv_bt).frobenius_norm();
    match best {
        Some((res, p)) => {
            let pn = p.frobenius_norm();
            let scale = q.frobenius_norm() + pn * (2.0 * a.frobenius_norm() + pn * brb);
            if res <= 1e-12 * (1.0 + scale) {
                Ok(p)
            } else {
                Err(Error::NoStabilizingSolution { iterations: opts.max_iter, residual: res })
            }
        }
        None => Err(Error::NoStabilizingSolution { iterations: opts.max_iter, residual: f64::INFINITY }),
    }
}

/// Optimal state-feedback gain `F = R⁻¹BᵀP`; the control is `u = −F x`.
pub fn lqr_gain(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    let p = solve_care(a, b, q, r)?;
    Lu::factor(r)?.solve_mat(&b.transpose().matmul(&p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn double_integrator() -> (Mat, Mat) {
        (
            Mat::from_rows(&[[0.0, 1.0], [0.0, 0.0]]),
            Mat::from_rows(&[[0.0], [1.0]]),
        )
    }

    #[test]
    fn double_integrator_closed_form() {
        let (a, b) = double_integrator();
        let p = solve_care(&a, &b, &Mat::identity(2), &Mat::identity(1)).unwrap();
        let s3 = 3f64.sqrt();
        assert_abs_diff_eq!(p[(0, 0)], s3, epsilon = 1e-12);
        assert_abs_diff_eq!(p[(0, 1)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[(1, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[(1, 1)], s3, epsilon = 1e-12);
        let f = lqr_gain(&a, &b, &Mat::identity(2), &Mat::identity(1)).unwrap();
        assert_abs_diff_eq!(f[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f[(0, 1)], s3, epsilon = 1e-12);
    }

    #[test]
    fn stable_plant_without_state_cost_has_zero_solution() {
        let a = Mat::identity(2).scale(-1.0);
        let b = Mat::identity(2);
        let p = solve_care(&a, &b, &Mat::zeros(2, 2), &Mat::identity(2)).unwrap();
        assert!(p.max_abs() < 1e-12);
        let f = lqr_gain(&a, &b, &Mat::zeros(2, 2), &Mat::identity(2)).unwrap();
        assert!(f.max_abs() < 1e-12);
    }

    #[test]
    fn unstabilizable_pair_is_rejected() {
        let a = Mat::from_rows(&[[1.0, 0.0], [0.0, 2.0]]);
        let b = Mat::from_rows(&[[1.0], [0.0]]);
        assert!(solve_care(&a, &b, &Mat::identity(2), &Mat::identity(1)).is_err());
    }

    #[test]
    fn bad_shapes() {
        let (a, b) = double_integrator();
        assert!(matches!(
            solve_care(&a, &b, &Mat::identity(3), &Mat::identity(1)),
            Err(Error::Dimension(_))
        ));
    }

    mod props {
        use super::*;
        use crate::numerics::is_hurwitz;
        use proptest::prelude::*;

        fn system(max_n: usize) -> impl Strategy<Value = (Mat, Mat, Mat, Mat)> {
            (2..=max_n, 1usize..=3).prop_flat_map(|(n, m)| {
                (
                    prop::collection::vec(-1.5..1.5f64, n * n),
                    prop::collection::vec(-1.5..1.5f64, n * m),
                    prop::collection::vec(-1.0..1.0f64, n * n),
                    prop::collection::vec(0.5..2.0f64, m),
                )
                    .prop_map(move |(a, b, g, r)| {
                        let g = Mat::from_row_major(n, n, g).unwrap();
                        (
                            Mat::from_row_major(n, n, a).unwrap(),
                            Mat::from_row_major(n, m, b).unwrap(),
                            g.transpose().matmul(&g).add(&Mat::identity(n).scale(0.1)),
                            Mat::diag(&r),
                        )
                    })
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn solution_is_symmetric_with_small_residual((a, b, q, r) in system(6)) {
                let p = solve_care(&a, &b, &q, &r).unwrap();
                prop_assert!(p.sub(&p.transpose()).max_abs() <= 1e-12 * (1.0 + p.max_abs()));
                let res = riccati_residual(&a, &b, &q, &r, &p).unwrap().frobenius_norm();
                prop_assert!(res <= 1e-8 * (1.0 + q.frobenius_norm()), "residual {res:e}");
            }

            #[test]
            fn lqr_closed_loop_is_hurwitz((a, b, q, r) in system(4)) {
                let f = lqr_gain(&a, &b, &q, &r).unwrap();
                prop_assert!(is_hurwitz(&a.sub(&b.matmul(&f))));
            }
        }
    }
}
