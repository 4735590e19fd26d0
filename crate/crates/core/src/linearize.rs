//! Feedback-linearizing control for the bicycle with outputs `(x, y)` and
//! inputs `(a, β̇)`.
//!
//! Both outputs have relative degree two:
//!
//! ```text
//! [ẍ, ÿ]ᵀ = A(s) u + b(s)
//! A(s) = [[cos θ, −V sin θ], [sin θ, V cos θ]],   θ = ψ + β
//! ```
//!
//! so `det A = V` and the control `u = A⁻¹(v − b)` renders `ẍ = v₁, ÿ = v₂`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Mat;
use crate::vehicle::{ControlInput, VehicleParams, VehicleState};

/// Normal-form state `ξ = (x, ẋ, y, ẏ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearState(pub [f64; 4]);

impl LinearState {
    pub const fn new(x: f64, xdot: f64, y: f64, ydot: f64) -> Self {
        Self([x, xdot, y, ydot])
    }

    pub fn position(&self) -> (f64, f64) {
        (self.0[0], self.0[2])
    }

    pub fn sub(&self, other: &LinearState) -> [f64; 4] {
        std::array::from_fn(|i| self.0[i] - other.0[i])
    }

    pub fn distance(&self, other: &LinearState) -> f64 {
        self.sub(other).iter().map(|d| d * d).sum::<f64>().sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|d| d * d).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Virtual input `v = (ẍ, ÿ)` commanded to the linearized system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VirtualInput(pub [f64; 2]);

impl VirtualInput {
    pub const fn new(v1: f64, v2: f64) -> Self {
        Self([v1, v2])
    }
}

/// Which drift vector the nominal controller cancels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftForm {
    /// Chain-rule expansion through `ψ̇ = (V/l_r) sin β`.
    #[default]
    Exact,
    /// `(−(V/l_r) sin θ, (V/l_r) sin θ)`, the simplified form some
    /// derivations write down. Kept for comparison runs.
    AsPrinted,
}

impl std::str::FromStr for DriftForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "as_printed" => Ok(Self::AsPrinted),
            other => Err(Error::InvalidConfig(format!("unknown drift form {other:?}"))),
        }
    }
}

/// Decoupling matrix and drift term at one state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decoupling {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
}

impl Decoupling {
    pub fn det(&self) -> f64 {
        self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0]
    }

    pub fn a_mat(&self) -> Mat {
        Mat::from_rows(&self.a)
    }

    /// `A u + b`: output accelerations produced by `u` at this state.
    pub fn apply(&self, u: &ControlInput) -> [f64; 2] {
        [
            self.a[0][0] * u.a + self.a[0][1] * u.b + self.b[0],
            self.a[1][0] * u.a + self.a[1][1] * u.b + self.b[1],
        ]
    }
}

/// Additive corrections `(Δβ, Δα)` to the nominal law.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Corrections {
    pub beta: [f64; 2],
    pub alpha: [[f64; 2]; 2],
}

/// Anything that yields state-dependent corrections.
pub trait Correction {
    fn corrections(&self, s: &VehicleState) -> Corrections;
}

impl Correction for Corrections {
    fn corrections(&self, _s: &VehicleState) -> Corrections {
        *self
    }
}

pub fn extract_linear_state(s: &VehicleState) -> LinearState {
    let course = s.course();
    LinearState([s.x, s.v * course.cos(), s.y, s.v * course.sin()])
}

pub fn decoupling_terms(s: &VehicleState, p: &VehicleParams, form: DriftForm) -> Decoupling {
    let (sin_c, cos_c) = s.course().sin_cos();
    let v = s.v;
    let a = [[cos_c, -v * sin_c], [sin_c, v * cos_c]];
    let b = match form {
        DriftForm::Exact => {
            // ẍ picks up −V sin θ · ψ̇, ÿ picks up V cos θ · ψ̇.
            let k = v * v / p.l_r * s.beta.sin();
            [-k * sin_c, k * cos_c]
        }
        DriftForm::AsPrinted => {
            let k = v / p.l_r * sin_c;
            [-k, k]
        }
    };
    Decoupling { a, b }
}

/// Nominal parts `β_m = −A⁻¹b` and `α_m = A⁻¹` of the control law.
fn nominal_parts(d: &Decoupling, speed: f64, eps_v: f64) -> Result<([f64; 2], [[f64; 2]; 2])> {
    if !(speed.abs() >= eps_v) {
        return Err(Error::SpeedTooLow {
            speed,
            floor: eps_v,
        });
    }
    let det = d.det();
    let inv = [
        [d.a[1][1] / det, -d.a[0][1] / det],
        [-d.a[1][0] / det, d.a[0][0] / det],
    ];
    let beta = [
        -(inv[0][0] * d.b[0] + inv[0][1] * d.b[1]),
        -(inv[1][0] * d.b[0] + inv[1][1] * d.b[1]),
    ];
    Ok((beta, inv))
}

fn affine_law(beta: [f64; 2], alpha: [[f64; 2]; 2], v: &VirtualInput) -> ControlInput {
    ControlInput::new(
        beta[0] + (alpha[0][0] * v.0[0] + alpha[0][1] * v.0[1]),
        beta[1] + (alpha[1][0] * v.0[0] + alpha[1][1] * v.0[1]),
    )
}

/// `u = A⁻¹(v − b)` from the model's decoupling terms.
pub fn nominal_control(
    s: &VehicleState,
    v: &VirtualInput,
    p: &VehicleParams,
    form: DriftForm,
    eps_v: f64,
) -> Result<ControlInput> {
    let d = decoupling_terms(s, p, form);
    let (beta, alpha) = nominal_parts(&d, s.v, eps_v)?;
    Ok(affine_law(beta, alpha, v))
}

/// `û = (β_m + Δβ) + (α_m + Δα) v`.
pub fn corrected_control<C: Correction + ?Sized>(
    s: &VehicleState,
    v: &VirtualInput,
    policy: &C,
    p: &VehicleParams,
    form: DriftForm,
    eps_v: f64,
) -> Result<ControlInput> {
    let d = decoupling_terms(s, p, form);
    let (beta, alpha) = nominal_parts(&d, s.v, eps_v)?;
    let c = policy.corrections(s);
    let beta = [beta[0] + c.beta[0], beta[1] + c.beta[1]];
    let alpha = [
        [alpha[0][0] + c.alpha[0][0], alpha[0][1] + c.alpha[0][1]],
        [alpha[1][0] + c.alpha[1][0], alpha[1][1] + c.alpha[1][1]],
    ];
    Ok(affine_law(beta, alpha, v))
}

/// Model-side settings of the linearizing controller.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linearizer {
    pub model: VehicleParams,
    pub drift: DriftForm,
    /// Speed floor below which the decoupling matrix counts as singular.
    pub eps_v: f64,
}

impl Default for Linearizer {
    fn default() -> Self {
        Self {
            model: VehicleParams::default(),
            drift: DriftForm::Exact,
            eps_v: 1e-3,
        }
    }
}

impl Linearizer {
    pub fn nominal(&self, s: &VehicleState, v: &VirtualInput) -> Result<ControlInput> {
        nominal_control(s, v, &self.model, self.drift, self.eps_v)
    }

    pub fn corrected<C: Correction + ?Sized>(
        &self,
        s: &VehicleState,
        v: &VirtualInput,
        policy: &C,
    ) -> Result<ControlInput> {
        corrected_control(s, v, policy, &self.model, self.drift, self.eps_v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::rk4_flow;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    const P: VehicleParams = VehicleParams { l_r: 0.5, l_f: 0.5 };

    fn random_state(rng: &mut impl Rng) -> VehicleState {
        VehicleState::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-3.1..3.1),
            rng.random_range(0.5..5.0),
            rng.random_range(-1.0..1.0),
        )
    }

    #[test]
    fn linear_state_examples() {
        assert_eq!(
            extract_linear_state(&VehicleState::new(0.0, 0.0, 0.0, 1.0, 0.0)),
            LinearState::new(0.0, 1.0, 0.0, 0.0)
        );
        let xi = extract_linear_state(&VehicleState::new(2.0, 3.0, FRAC_PI_2, 2.0, 0.0));
        assert_abs_diff_eq!(xi.0[1], 0.0, epsilon = 1e-15);
        assert_eq!([xi.0[0], xi.0[2], xi.0[3]], [2.0, 3.0, 2.0]);
        let xi = extract_linear_state(&VehicleState::new(0.0, 0.0, FRAC_PI_4, 2f64.sqrt(), 0.0));
        assert_abs_diff_eq!(xi.0[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(xi.0[3], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn decoupling_examples() {
        let d = decoupling_terms(&VehicleState::new(0.0, 0.0, 0.0, 1.0, 0.0), &P, DriftForm::Exact);
        assert_eq!(d.a, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(d.b, [0.0, 0.0]);

        let d = decoupling_terms(&VehicleState::new(0.0, 0.0, 0.7, 3.0, 0.0), &P, DriftForm::Exact);
        assert_eq!(d.b, [0.0, 0.0]);

        let d = decoupling_terms(&VehicleState::new(0.0, 0.0, 0.0, 2.0, 0.1), &P, DriftForm::Exact);
        let s = 0.1f64.sin();
        assert_abs_diff_eq!(d.b[0], -8.0 * s * s, epsilon = 1e-14);
        assert_abs_diff_eq!(d.b[1], 8.0 * s * 0.1f64.cos(), epsilon = 1e-14);

        let d = decoupling_terms(&VehicleState::new(0.0, 0.0, 0.2, 2.0, 0.1), &P, DriftForm::AsPrinted);
        let k = 2.0 / 0.5 * 0.3f64.sin();
        assert_abs_diff_eq!(d.b[0], -k, epsilon = 1e-14);
        assert_abs_diff_eq!(d.b[1], k, epsilon = 1e-14);
    }

    #[test]
    fn det_equals_speed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let s = random_state(&mut rng);
            let d = decoupling_terms(&s, &P, DriftForm::Exact);
            assert!((d.det() - s.v).abs() <= 1e-12);
        }
    }

    #[test]
    fn nominal_examples() {
        let lin = Linearizer::default();
        let u = lin
            .nominal(&VehicleState::new(0.0, 0.0, 0.0, 1.0, 0.0), &VirtualInput::new(1.0, 0.0))
            .unwrap();
        assert_eq!(u, ControlInput::new(1.0, 0.0));
        let u = lin
            .nominal(&VehicleState::new(0.0, 0.0, 0.0, 2.0, 0.0), &VirtualInput::new(0.0, 2.0))
            .unwrap();
        assert_eq!(u, ControlInput::new(0.0, 1.0));
        assert!(matches!(
            lin.nominal(&VehicleState::new(0.0, 0.0, 0.0, 1e-6, 0.0), &VirtualInput::default()),
            Err(Error::SpeedTooLow { .. })
        ));
    }

    #[test]
    fn reconstruction_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for form in [DriftForm::Exact, DriftForm::AsPrinted] {
            for _ in 0..200 {
                let s = random_state(&mut rng);
                let v = VirtualInput::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                let u = nominal_control(&s, &v, &P, form, 1e-3).unwrap();
                let out = decoupling_terms(&s, &P, form).apply(&u);
                assert!((out[0] - v.0[0]).abs() <= 1e-10);
                assert!((out[1] - v.0[1]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn zero_corrections_match_nominal_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lin = Linearizer::default();
        for _ in 0..200 {
            let s = random_state(&mut rng);
            let v = VirtualInput::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let a = lin.nominal(&s, &v).unwrap();
            let b = lin.corrected(&s, &v, &Corrections::default()).unwrap();
            assert_eq!(a.a.to_bits(), b.a.to_bits());
            assert_eq!(a.b.to_bits(), b.b.to_bits());
        }
    }

    #[test]
    fn constant_offset_correction() {
        let lin = Linearizer::default();
        let s = VehicleState::new(1.0, 2.0, 0.4, 1.7, 0.2);
        let v = VirtualInput::new(0.3, -0.8);
        let c = Corrections {
            beta: [1.0, 0.0],
            alpha: [[0.0; 2]; 2],
        };
        let u0 = lin.nominal(&s, &v).unwrap();
        let u1 = lin.corrected(&s, &v, &c).unwrap();
        assert_abs_diff_eq!(u1.a, u0.a + 1.0, epsilon = 1e-14);
        assert_eq!(u1.b, u0.b);
    }

    #[test]
    fn matched_plant_output_acceleration_is_virtual_input() {
        // Fourth-order central stencil for the second derivative of the
        // simulated position around s, with u held.
        let lin = Linearizer::default();
        let s = VehicleState::new(0.0, 0.0, 0.3, 2.0, 0.15);
        let v = VirtualInput::new(0.7, -1.1);
        let u = lin.corrected(&s, &v, &Corrections::default()).unwrap();
        let h = 1e-3;
        let at = |k: f64| rk4_flow(&s, &u, &P, k * h);
        let (p2, p1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
        let stencil = |f: fn(&VehicleState) -> f64| {
            (-f(&p2) + 16.0 * f(&p1) - 30.0 * f(&s) + 16.0 * f(&m1) - f(&m2)) / (12.0 * h * h)
        };
        let xdd = stencil(|q| q.x);
        let ydd = stencil(|q| q.y);
        assert!((xdd - v.0[0]).abs() < 1e-6, "{xdd}");
        assert!((ydd - v.0[1]).abs() < 1e-6, "{ydd}");
    }
}
