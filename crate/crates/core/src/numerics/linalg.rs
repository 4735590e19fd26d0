use crate::error::{Error, Result};

use super::mat::{norm_inf, Mat};

/// Pivot magnitude below which a matrix is treated as singular.
pub const PIVOT_FLOOR: f64 = 1e-12;

/// LU factorization with partial pivoting, `PA = LU`, stored compactly.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Mat) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "LU of a {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let mut lu = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot > PIVOT_FLOOR) {
                return Err(Error::SingularMatrix { column: k, pivot });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let l = lu[i * n + k] / d;
                lu[i * n + k] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= l * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::Dimension(format!("rhs of length {} for n={n}", b.len())));
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        Ok(x)
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: &Mat) -> Result<Mat> {
        let bt = b.transpose();
        let mut xt = Vec::with_capacity(b.rows() * b.cols());
        for j in 0..b.cols() {
            xt.extend(self.solve(bt.row(j))?);
        }
        Ok(Mat::from_row_major(b.cols(), b.rows(), xt)?.transpose())
    }
}

/// Solves `A x = b` by LU with partial pivoting, followed by one step of
/// iterative refinement.
pub fn solve_linear(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    let lu = Lu::factor(a)?;
    let mut x = lu.solve(b)?;
    let ax = a.matvec(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    if norm_inf(&r) > 0.0 {
        let dx = lu.solve(&r)?;
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear solve".into()));
    }
    Ok(x)
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    Lu::factor(a)?.solve_mat(&Mat::identity(a.rows()))
}

/// Numerical rank by Gaussian elimination with full pivoting.
pub fn rank(a: &Mat, tol: f64) -> usize {
    let (m, n) = (a.rows(), a.cols());
    let mut w = a.as_slice().to_vec();
    let scale = a.max_abs().max(1.0);
    let mut r = 0;
    let mut cols_used = vec![false; n];
    let mut rows_used = vec![false; m];
    for _ in 0..m.min(n) {
        let mut best = (0, 0, 0.0);
        for i in (0..m).filter(|&i| !rows_used[i]) {
            for j in (0..n).filter(|&j| !cols_used[j]) {
                let v = w[i * n + j].abs();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if best.2 <= tol * scale {
            break;
        }
        let (pi, pj, _) = best;
        rows_used[pi] = true;
        cols_used[pj] = true;
        r += 1;
        let d = w[pi * n + pj];
        for i in (0..m).filter(|&i| !rows_used[i]) {
            let l = w[i * n + pj] / d;
            for j in 0..n {
                w[i * n + j] -= l * w[pi * n + j];
            }
        }
    }
    r
}

/// Solves the continuous Lyapunov equation `Aᵀ X + X A = -M` for symmetric `M`.
///
/// Small systems only: the Kronecker form is an `n² × n²` dense solve.
pub fn solve_lyapunov(a: &Mat, m: &Mat) -> Result<Mat> {
    let n = a.rows();
    if !a.is_square() || m.rows() != n || m.cols() != n {
        return Err(Error::Dimension("Lyapunov operands".into()));
    }
    let nn = n * n;
    let mut k = Mat::zeros(nn, nn);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for l in 0..n {
                // (Aᵀ X)_ij = Σ_l A_li X_lj ; (X A)_ij = Σ_l X_il A_lj
                k[(row, l * n + j)] += a[(l, i)];
                k[(row, i * n + l)] += a[(l, j)];
            }
        }
    }
    let rhs: Vec<f64> = m.as_slice().iter().map(|v| -v).collect();
    let x = solve_linear(&k, &rhs)?;
    Ok(Mat::from_row_major(n, n, x)?.symmetrize())
}

/// Matrix exponential by scaling and squaring with a degree-18 Taylor
/// polynomial. Adequate for the small, well-scaled matrices used here.
pub fn expm(a: &Mat) -> Mat {
    assert!(a.is_square());
    let n = a.rows();
    let norm = a.norm_inf();
    let mut s = 0u32;
    if norm > 0.5 {
        s = (norm / 0.5).log2().ceil() as u32;
    }
    let scaled = a.scale(1.0 / f64::from(2u32.pow(s)));
    let mut term = Mat::identity(n);
    let mut sum = Mat::identity(n);
    for k in 1..=18 {
        term = term.matmul(&scaled).scale(1.0 / f64::from(k));
        sum = sum.add(&term);
    }
    for _ in 0..s {
        sum = sum.matmul(&sum);
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_solve() {
        let x = solve_linear(&Mat::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn diagonal_solve() {
        let a = Mat::from_rows(&[[2.0, 0.0], [0.0, 4.0]]);
        let x = solve_linear(&a, &[2.0, 8.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn singular_is_reported() {
        let a = Mat::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(
            solve_linear(&a, &[1.0, 1.0]),
            Err(Error::SingularMatrix { column: 1, .. })
        ));
    }

    #[test]
    fn random_well_conditioned_recovers_known_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = 8;
            let mut a = Mat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] = rng.random_range(-1.0..1.0);
                }
                a[(i, i)] += 4.0;
            }
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let b = a.matvec(&xs);
            let x = solve_linear(&a, &b).unwrap();
            for (u, v) in x.iter().zip(&xs) {
                assert_abs_diff_eq!(u, v, epsilon = 1e-9);
            }
            let r: Vec<f64> = a.matvec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
            assert!(norm_inf(&r) <= 1e-9 * (1.0 + norm_inf(&b)));
        }
    }

    #[test]
    fn rank_detects_dependence() {
        let a = Mat::from_rows(&[[1.0, 2.0, 1.0], [0.0, 1.0, 0.0], [2.0, 5.0, 2.0]]);
        assert_eq!(rank(&a, 1e-12), 2);
        assert_eq!(rank(&Mat::identity(4), 1e-12), 4);
    }

    #[test]
    fn lyapunov_residual() {
        let a = Mat::from_rows(&[[-1.0, 2.0], [0.0, -3.0]]);
        let m = Mat::identity(2);
        let x = solve_lyapunov(&a, &m).unwrap();
        let res = a.transpose().matmul(&x).add(&x.matmul(&a)).add(&m);
        assert!(res.max_abs() < 1e-12);
    }

    #[test]
    fn expm_of_rotation_generator() {
        let t = 0.7;
        let a = Mat::from_rows(&[[0.0, -t], [t, 0.0]]);
        let e = expm(&a);
        assert_abs_diff_eq!(e[(0, 0)], t.cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[(1, 0)], t.sin(), epsilon = 1e-14);
    }
}
