use super::mat::Mat;

/// Characteristic polynomial coefficients `[1, c₁, …, cₙ]` of
/// `det(sI − A) = sⁿ + c₁sⁿ⁻¹ + … + cₙ` (Faddeev–LeVerrier).
pub fn char_poly(a: &Mat) -> Vec<f64> {
    assert!(a.is_square());
    let n = a.rows();
    let mut coeffs = vec![1.0];
    let mut m = Mat::identity(n);
    for k in 1..=n {
        let am = a.matmul(&m);
        let c = -am.trace() / k as f64;
        coeffs.push(c);
        m = am.add(&Mat::identity(n).scale(c));
    }
    coeffs
}

/// Routh–Hurwitz test: true iff every root of the polynomial (leading
/// coefficient first) has strictly negative real part.
pub fn routh_hurwitz_stable(coeffs: &[f64]) -> bool {
    let Some(&lead) = coeffs.first() else {
        return false;
    };
    if lead == 0.0 {
        return false;
    }
    let c: Vec<f64> = coeffs.iter().map(|v| v / lead).collect();
    let deg = c.len() - 1;
    if deg == 0 {
        return true;
    }
    if c.iter().any(|&v| !(v > 0.0)) {
        return false;
    }
    let width = deg / 2 + 1;
    let mut prev: Vec<f64> = (0..width).map(|i| c.get(2 * i).copied().unwrap_or(0.0)).collect();
    let mut cur: Vec<f64> = (0..width)
        .map(|i| c.get(2 * i + 1).copied().unwrap_or(0.0))
        .collect();
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for _ in 1..deg {
        if !(cur[0] > 1e-14 * scale) {
            return false;
        }
        let next: Vec<f64> = (0..width)
            .map(|i| {
                let a = prev.get(i + 1).copied().unwrap_or(0.0);
                let b = cur.get(i + 1).copied().unwrap_or(0.0);
                (cur[0] * a - prev[0] * b) / cur[0]
            })
            .collect();
        prev = cur;
        cur = next;
    }
    cur[0] > 0.0
}

/// True iff all eigenvalues of `A` lie in the open left half-plane.
pub fn is_hurwitz(a: &Mat) -> bool {
    routh_hurwitz_stable(&char_poly(a))
}
