//! Convex QP with equality and box constraints:
//!
//! ```text
//! minimize    ½ zᵀHz + fᵀz
//! subject to  Aeq z = beq,  lb ≤ z ≤ ub
//! ```
//!
//! The equality-constrained minimizer comes from one KKT solve. When it
//! violates a bound, accelerated projected gradient with the fixed step
//! `1/λ_max(H)` refines it; every iterate is projected exactly onto the
//! intersection of the affine set and the box by a semismooth Newton method
//! on the projection's dual.

use crate::error::{Error, Result};

use super::linalg::{solve_linear, Lu};
use super::mat::{dot, norm2, norm_inf, Mat};

/// Equality residual accepted for a returned solution.
pub const EQ_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub h: Mat,
    pub f: Vec<f64>,
    pub aeq: Mat,
    pub beq: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub z: Vec<f64>,
    /// `‖Aeq z − beq‖∞`.
    pub eq_residual: f64,
    /// Infinity norm of the projected-gradient mapping at `z`.
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl QpProblem {
    /// Box-constrained problem without equality rows.
    pub fn boxed(h: Mat, f: Vec<f64>, lb: Vec<f64>, ub: Vec<f64>) -> Self {
        let n = f.len();
        Self {
            h,
            f,
            aeq: Mat::zeros(0, n),
            beq: Vec::new(),
            lb,
            ub,
        }
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.h.rows() != n || self.h.cols() != n {
            return Err(Error::Dimension("QP Hessian".into()));
        }
        if self.aeq.cols() != n || self.aeq.rows() != self.beq.len() {
            return Err(Error::Dimension("QP equality block".into()));
        }
        if self.aeq.rows() > n {
            return Err(Error::Dimension("more equality rows than variables".into()));
        }
        if self.lb.len() != n || self.ub.len() != n {
            return Err(Error::Dimension("QP bounds".into()));
        }
        if !self.h.is_symmetric(1e-10 * (1.0 + self.h.max_abs())) {
            return Err(Error::InvalidConfig("QP Hessian is not symmetric".into()));
        }
        if self.lb.iter().zip(&self.ub).any(|(l, u)| !(l <= u)) {
            return Err(Error::Infeasible("lower bound above upper bound".into()));
        }
        if self.f.iter().chain(&self.beq).any(|v| !v.is_finite()) || !self.h.is_finite() {
            return Err(Error::NonFinite("QP data".into()));
        }
        Ok(())
    }

    fn objective_gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut g = self.h.matvec(z);
        for (gi, fi) in g.iter_mut().zip(&self.f) {
            *gi += fi;
        }
        g
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        0.5 * dot(z, &self.h.matvec(z)) + dot(&self.f, z)
    }

    fn within_bounds(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.lb.iter().zip(&self.ub))
            .all(|(v, (l, u))| l <= v && v <= u)
    }

    pub fn eq_residual(&self, z: &[f64]) -> f64 {
        let az = self.aeq.matvec(z);
        az.iter()
            .zip(&self.beq)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Selects a maximal linearly independent subset of the rows of `a`
/// (modified Gram–Schmidt).
fn independent_rows(a: &Mat) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut keep = Vec::new();
    for i in 0..a.rows() {
        let row = a.row(i);
        let scale = norm2(row);
        if scale == 0.0 {
            continue;
        }
        let mut v = row.to_vec();
        for q in &basis {
            let c = dot(&v, q);
            for (vj, qj) in v.iter_mut().zip(q) {
                *vj -= c * qj;
            }
        }
        let norm = norm2(&v);
        if norm > 1e-10 * scale {
            basis.push(v.iter().map(|x| x / norm).collect());
            keep.push(i);
        }
    }
    keep
}

/// Reduces the equality block to independent rows, rejecting inconsistent
/// systems.
fn reduce_equalities(p: &QpProblem) -> Result<(Mat, Vec<f64>)> {
    let n = p.n();
    let keep = independent_rows(&p.aeq);
    let mut data = Vec::with_capacity(keep.len() * n);
    for &i in &keep {
        data.extend_from_slice(p.aeq.row(i));
    }
    let a = Mat::from_row_major(keep.len(), n, data)?;
    let b: Vec<f64> = keep.iter().map(|&i| p.beq[i]).collect();
    if keep.len() < p.aeq.rows() {
        // Dropped rows must be implied by the kept ones.
        let z0 = min_norm_solution(&a, &b)?;
        if p.eq_residual(&z0) > EQ_TOL * (1.0 + norm_inf(&p.beq)) {
            return Err(Error::Infeasible(
                "equality constraints are inconsistent".into(),
            ));
        }
    }
    Ok((a, b))
}

fn min_norm_solution(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    if a.rows() == 0 {
        return Ok(vec![0.0; a.cols()]);
    }
    let gram = a.matmul(&a.transpose());
    let y = solve_linear(&gram, b)?;
    Ok(a.transpose().matvec(&y))
}

fn kkt_solve(h: &Mat, f: &[f64], a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    let n = f.len();
    let m = a.rows();
    let mut k = Mat::zeros(n + m, n + m);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = h[(i, j)];
        }
    }
    for r in 0..m {
        for j in 0..n {
            k[(n + r, j)] = a[(r, j)];
            k[(j, n + r)] = a[(r, j)];
        }
    }
    let mut rhs: Vec<f64> = f.iter().map(|v| -v).collect();
    rhs.extend_from_slice(b);
    let mut sol = solve_linear(&k, &rhs)?;
    sol.truncate(n);
    Ok(sol)
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn lambda_max(h: &Mat) -> f64 {
    let n = h.rows();
    if n == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.618_034).fract()).collect();
    let norm = norm2(&v);
    v.iter_mut().for_each(|x| *x /= norm);
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let w = h.matvec(&v);
        let wn = norm2(&w);
        if wn == 0.0 {
            return 0.0;
        }
        let next = dot(&v, &w);
        v = w.iter().map(|x| x / wn).collect();
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Power iteration approaches from below; nudge up, capped by ‖H‖∞.
    lambda.max(h.norm_inf().min(lambda * 1.01))
}

/// Euclidean projection onto `{z : A z = b, lb ≤ z ≤ ub}`.
struct Projector<'a> {
    a: &'a Mat,
    b: &'a [f64],
    lb: &'a [f64],
    ub: &'a [f64],
    at: Mat,
    gram_scale: f64,
    lambda: Vec<f64>,
}

impl<'a> Projector<'a> {
    fn new(a: &'a Mat, b: &'a [f64], lb: &'a [f64], ub: &'a [f64]) -> Self {
        Self {
            a,
            b,
            lb,
            ub,
            at: a.transpose(),
            gram_scale: a.matmul(&a.transpose()).max_abs().max(1.0),
            lambda: vec![0.0; a.rows()],
        }
    }

    fn clip(&self, t: &[f64]) -> (Vec<f64>, Vec<bool>) {
        let mut free = vec![false; t.len()];
        let z = t
            .iter()
            .zip(self.lb.iter().zip(self.ub))
            .enumerate()
            .map(|(i, (&ti, (&l, &u)))| {
                if ti < l {
                    l
                } else if ti > u {
                    u
                } else {
                    free[i] = true;
                    ti
                }
            })
            .collect();
        (z, free)
    }

    fn shifted(&self, w: &[f64], lambda: &[f64]) -> Vec<f64> {
        let atl = self.at.matvec(lambda);
        w.iter().zip(atl).map(|(x, y)| x + y).collect()
    }

    /// Dual objective `Σ hᵢ(tᵢ) − bᵀλ`, with `hᵢ' = clip`.
    fn dual_value(&self, t: &[f64], lambda: &[f64]) -> f64 {
        let h: f64 = t
            .iter()
            .zip(self.lb.iter().zip(self.ub))
            .map(|(&ti, (&l, &u))| {
                if ti < l {
                    l * ti - 0.5 * l * l
                } else if ti > u {
                    u * ti - 0.5 * u * u
                } else {
                    0.5 * ti * ti
                }
            })
            .sum();
        h - dot(self.b, lambda)
    }

    fn project(&mut self, w: &[f64]) -> Result<Vec<f64>> {
        if self.a.rows() == 0 {
            return Ok(self.clip(w).0);
        }
        let m = self.a.rows();
        let scale = 1.0 + norm_inf(self.b) + norm_inf(w);
        let mut lambda = self.lambda.clone();
        for _ in 0..200 {
            let t = self.shifted(w, &lambda);
            let (z, free) = self.clip(&t);
            let az = self.a.matvec(&z);
            let g: Vec<f64> = az.iter().zip(self.b).map(|(x, y)| x - y).collect();
            if norm_inf(&g) <= 1e-13 * scale {
                self.lambda = lambda;
                return Ok(z);
            }
            let mut jac = Mat::zeros(m, m);
            for r in 0..m {
                for c in r..m {
                    let s: f64 = (0..w.len())
                        .filter(|&j| free[j])
                        .map(|j| self.a[(r, j)] * self.a[(c, j)])
                        .sum();
                    jac[(r, c)] = s;
                    jac[(c, r)] = s;
                }
            }
            // Regularize relative to the full Gram scale so an empty free set
            // still yields a (long) descent direction.
            let mu = 1e-10 * self.gram_scale;
            for r in 0..m {
                jac[(r, r)] += mu;
            }
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let dir = Lu::factor(&jac)?.solve(&neg_g)?;
            let base = self.dual_value(&t, &lambda);
            let slope = dot(&g, &dir);
            let mut step = 1.0;
            let mut progressed = false;
            for _ in 0..60 {
                let trial: Vec<f64> = lambda.iter().zip(&dir).map(|(l, d)| l + step * d).collect();
                let tt = self.shifted(w, &trial);
                let value = self.dual_value(&tt, &trial);
                // Near the solution the dual decrease drops below rounding;
                // a shrinking residual then certifies progress instead.
                let shrinks = || {
                    let zt = self.clip(&tt).0;
                    let gt = self.a.matvec(&zt);
                    let rt = gt.iter().zip(self.b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                    rt < (1.0 - 1e-4 * step) * norm_inf(&g)
                };
                if value <= base + 1e-4 * step * slope || shrinks() {
                    progressed = value < base || shrinks();
                    lambda = trial;
                    break;
                }
                step *= 0.5;
            }
            if !progressed {
                // Stalled at rounding level; keep the iterate if it is close.
                if norm_inf(&g) <= 1e-10 * scale {
                    self.lambda = lambda;
                    return Ok(z);
                }
                break;
            }
            if norm_inf(&lambda) > 1e12 * scale {
                break;
            }
        }
        Err(Error::Infeasible(
            "equality constraints cannot be met inside the bounds".into(),
        ))
    }
}

/// Solves a convex QP; see the module docs for the method.
pub fn solve_qp(p: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution> {
    p.validate()?;
    let (a, b) = reduce_equalities(p)?;

    let start = match kkt_solve(&p.h, &p.f, &a, &b) {
        Ok(z) => z,
        Err(Error::SingularMatrix { .. }) => min_norm_solution(&a, &b)?,
        Err(e) => return Err(e),
    };
    let finish = |z: Vec<f64>, kkt_residual: f64, iterations: usize| {
        let eq_residual = p.eq_residual(&z);
        QpSolution {
            z,
            eq_residual,
            kkt_residual,
            iterations,
        }
    };
    if p.within_bounds(&start) {
        let g = p.objective_gradient(&start);
        // Gradient component left after removing the multiplier term.
        let at = a.transpose();
        let lagr = if a.rows() > 0 {
            let gram = a.matmul(&at);
            let y = solve_linear(&gram, &a.matvec(&g))?;
            let aty = at.matvec(&y);
            g.iter().zip(aty).map(|(x, y)| x - y).collect::<Vec<_>>()
        } else {
            g
        };
        return Ok(finish(start, norm_inf(&lagr), 0));
    }

    let mut proj = Projector::new(&a, &b, &p.lb, &p.ub);
    let lip = lambda_max(&p.h).max(1e-12);
    let step = 1.0 / lip;
    let mut z = proj.project(&start)?;
    let mut y = z.clone();
    let mut t = 1.0f64;
    let mapping = |proj: &mut Projector, x: &[f64]| -> Result<(Vec<f64>, f64)> {
        let g = p.objective_gradient(x);
        let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
        let next = proj.project(&trial)?;
        let r = x
            .iter()
            .zip(&next)
            .fold(0.0f64, |m, (xi, ni)| m.max((xi - ni).abs()))
            * lip;
        Ok((next, r))
    };
    for it in 1..=max_iter {
        let (z_next, r_y) = mapping(&mut proj, &y)?;
        if r_y <= tol {
            let (_, r_z) = mapping(&mut proj, &z_next)?;
            if r_z <= tol {
                return Ok(finish(z_next, r_z, it));
            }
        }
        let restart = y
            .iter()
            .zip(&z_next)
            .zip(&z)
            .map(|((yi, zn), zi)| (yi - zn) * (zn - zi))
            .sum::<f64>()
            > 0.0;
        let t_next = if restart {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
        };
        let beta = if restart { 0.0 } else { (t - 1.0) / t_next };
        y = z_next
            .iter()
            .zip(&z)
            .map(|(zn, zi)| zn + beta * (zn - zi))
            .collect();
        z = z_next;
        t = t_next;
    }
    let (_, residual) = mapping(&mut proj, &z)?;
    if residual <= tol {
        return Ok(finish(z, residual, max_iter));
    }
    Err(Error::MaxIterations {
        iterations: max_iter,
        residual,
    })
}
