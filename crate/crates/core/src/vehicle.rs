//! Kinematic bicycle plant, RK4 stepping, steering geometry and a synthetic
//! gas/brake actuator.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar bicycle state: position, heading, speed and slip angle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
    pub beta: f64,
}

impl VehicleState {
    pub const fn new(x: f64, y: f64, psi: f64, v: f64, beta: f64) -> Self {
        Self { x, y, psi, v, beta }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.x, self.y, self.psi, self.v, self.beta]
    }

    pub fn from_array(s: [f64; 5]) -> Self {
        Self::new(s[0], s[1], s[2], s[3], s[4])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFiniteState);
        }
        if self.beta.abs() >= FRAC_PI_2 {
            return Err(Error::SlipOutOfRange(self.beta));
        }
        Ok(())
    }

    /// Direction of travel `ψ + β`.
    pub fn course(&self) -> f64 {
        self.psi + self.beta
    }
}

/// Nonlinear inputs: longitudinal acceleration `a` and slip rate `b = β̇`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub a: f64,
    pub b: f64,
}

impl ControlInput {
    pub const fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Center of mass to rear axle, m.
    pub l_r: f64,
    /// Center of mass to front axle, m.
    pub l_f: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self { l_r: 0.5, l_f: 0.5 }
    }
}

impl VehicleParams {
    pub fn new(l_r: f64, l_f: f64) -> Result<Self> {
        let p = Self { l_r, l_f };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_r > 0.0 && self.l_f > 0.0) || !self.l_r.is_finite() || !self.l_f.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "axle distances must be positive (l_r={}, l_f={})",
                self.l_r, self.l_f
            )));
        }
        Ok(())
    }
}

/// `(ẋ, ẏ, ψ̇, V̇, β̇)` of the kinematic bicycle.
pub fn bicycle_deriv(s: &VehicleState, u: &ControlInput, p: &VehicleParams) -> [f64; 5] {
    let course = s.course();
    [
        s.v * course.cos(),
        s.v * course.sin(),
        s.v / p.l_r * s.beta.sin(),
        u.a,
        u.b,
    ]
}

fn axpy(s: &[f64; 5], k: &[f64; 5], h: f64) -> VehicleState {
    VehicleState::from_array(std::array::from_fn(|i| s[i] + h * k[i]))
}

/// One classical RK4 step with `u` held over the step. Accepts either sign
/// of `dt`, so it can integrate backwards for central differences.
pub fn rk4_flow(s: &VehicleState, u: &ControlInput, p: &VehicleParams, dt: f64) -> VehicleState {
    let x = s.to_array();
    let k1 = bicycle_deriv(s, u, p);
    let k2 = bicycle_deriv(&axpy(&x, &k1, 0.5 * dt), u, p);
    let k3 = bicycle_deriv(&axpy(&x, &k2, 0.5 * dt), u, p);
    let k4 = bicycle_deriv(&axpy(&x, &k3, dt), u, p);
    VehicleState::from_array(std::array::from_fn(|i| {
        x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    }))
}

/// Advances the plant by `dt > 0` with zero-order-hold input.
pub fn step_rk4(
    s: &VehicleState,
    u: &ControlInput,
    p: &VehicleParams,
    dt: f64,
) -> Result<VehicleState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
    }
    let next = rk4_flow(s, u, p, dt);
    if !next.is_finite() {
        return Err(Error::NonFiniteState);
    }
    Ok(next)
}

/// Slip angle produced by a front steering angle.
pub fn beta_from_steering(delta_f: f64, p: &VehicleParams) -> Result<f64> {
    if !(delta_f.abs() < FRAC_PI_2) {
        return Err(Error::SteeringOutOfRange(delta_f));
    }
    Ok((p.l_r / (p.l_f + p.l_r) * delta_f.tan()).atan())
}

/// Front steering angle that produces slip angle `beta`; exact inverse of
/// [`beta_from_steering`].
pub fn steering_from_beta(beta: f64, p: &VehicleParams) -> Result<f64> {
    if !(beta.abs() < FRAC_PI_2) {
        return Err(Error::SlipOutOfRange(beta));
    }
    Ok(((p.l_f + p.l_r) / p.l_r * beta.tan()).atan())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActuatorParams {
    /// Acceleration at full gas, m/s².
    pub a_gas_max: f64,
    /// Deceleration at full brake, m/s².
    pub a_brake_max: f64,
    /// First-order lag time constant, s. Zero means no lag.
    pub tau: f64,
}

impl Default for ActuatorParams {
    fn default() -> Self {
        Self {
            a_gas_max: 4.0,
            a_brake_max: 8.0,
            tau: 0.1,
        }
    }
}

impl ActuatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_gas_max > 0.0 && self.a_brake_max > 0.0 && self.tau >= 0.0) {
            return Err(Error::InvalidConfig(format!("bad actuator parameters {self:?}")));
        }
        Ok(())
    }

    /// Width of the realizable acceleration range.
    pub fn full_scale(&self) -> f64 {
        self.a_gas_max + self.a_brake_max
    }

    /// Steady-state acceleration for a held pedal pair.
    pub fn target(&self, gas: f64, brake: f64) -> f64 {
        self.a_gas_max * gas - self.a_brake_max * brake
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActuatorState {
    pub gas: f64,
    pub brake: f64,
    /// Realized acceleration (the lag state), m/s².
    pub accel: f64,
}

/// Applies a pedal pair for `dt`: the realized acceleration relaxes toward
/// `a_gas_max·gas − a_brake_max·brake` with time constant `tau`.
pub fn actuator_step(
    act: &ActuatorState,
    params: &ActuatorParams,
    gas: f64,
    brake: f64,
    dt: f64,
) -> Result<ActuatorState> {
    for (name, value) in [("gas", gas), ("brake", brake)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::ActionOutOfRange { name, value });
        }
    }
    let target = params.target(gas, brake);
    let gain = if params.tau > 0.0 {
        (dt / params.tau).min(1.0)
    } else {
        1.0
    };
    let accel = (act.accel + gain * (target - act.accel))
        .clamp(-params.a_brake_max, params.a_gas_max);
    Ok(ActuatorState { gas, brake, accel })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const P: VehicleParams = VehicleParams { l_r: 0.5, l_f: 0.5 };

    #[test]
    fn straight_line_derivative() {
        let d = bicycle_deriv(&VehicleState::new(0.0, 0.0, 0.0, 1.0, 0.0), &ControlInput::default(), &P);
        assert_eq!(d, [1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn heading_along_y() {
        let s = VehicleState::new(0.0, 0.0, FRAC_PI_2, 2.0, 0.0);
        let d = bicycle_deriv(&s, &ControlInput::new(1.0, 0.0), &P);
        assert_abs_diff_eq!(d[0], 0.0, epsilon = 1e-15);
        assert_eq!(d[1..], [2.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn slip_substitution() {
        let s = VehicleState::new(0.0, 0.0, 0.0, 1.0, 0.1);
        let d = bicycle_deriv(&s, &ControlInput::default(), &P);
        assert_eq!(d, [0.1f64.cos(), 0.1f64.sin(), 2.0 * 0.1f64.sin(), 0.0, 0.0]);
    }

    #[test]
    fn rk4_rest_and_line() {
        let rest = VehicleState::new(1.0, 2.0, 0.3, 0.0, 0.0);
        assert_eq!(step_rk4(&rest, &ControlInput::default(), &P, 0.02).unwrap(), rest);
        let s = step_rk4(
            &VehicleState::new(0.0, 0.0, 0.0, 1.0, 0.0),
            &ControlInput::default(),
            &P,
            0.02,
        )
        .unwrap();
        assert_eq!(s.x, 0.02);
        assert_eq!(s.y, 0.0);
        assert!(step_rk4(&rest, &ControlInput::default(), &P, 0.0).is_err());
    }

    #[test]
    fn circle_closes_after_one_period() {
        // Constant slip: ψ̇ = V sinβ / l_r, radius l_r / sinβ.
        let beta: f64 = 0.3;
        let v = 1.5;
        let omega = v * beta.sin() / P.l_r;
        let period = 2.0 * std::f64::consts::PI / omega;
        let dt = 0.002;
        let steps = (period / dt).floor() as usize;
        let mut s = VehicleState::new(0.0, 0.0, 0.0, v, beta);
        let radius = P.l_r / beta.sin();
        // Center lies to the left of the course direction.
        let (cx, cy) = (-radius * beta.sin(), radius * beta.cos());
        for _ in 0..steps {
            s = step_rk4(&s, &ControlInput::default(), &P, dt).unwrap();
            let dist = ((s.x - cx).powi(2) + (s.y - cy).powi(2)).sqrt();
            assert!((dist - radius).abs() < 1e-6);
        }
        s = step_rk4(&s, &ControlInput::default(), &P, period - steps as f64 * dt).unwrap();
        assert!(s.x.abs() < 1e-6 && s.y.abs() < 1e-6, "{s:?}");
        assert_eq!(s.v, v);
    }

    #[test]
    fn steering_examples() {
        assert_eq!(beta_from_steering(0.0, &P).unwrap(), 0.0);
        let d: f64 = 0.3;
        assert_abs_diff_eq!(beta_from_steering(d, &P).unwrap(), (0.5 * d.tan()).atan(), epsilon = 1e-15);
        assert_abs_diff_eq!(steering_from_beta((0.5 * d.tan()).atan(), &P).unwrap(), d, epsilon = 1e-15);
        assert_eq!(steering_from_beta(0.0, &P).unwrap(), 0.0);
        assert!(matches!(beta_from_steering(2.0, &P), Err(Error::SteeringOutOfRange(_))));
        assert!(matches!(steering_from_beta(-1.6, &P), Err(Error::SlipOutOfRange(_))));
    }

    #[test]
    fn actuator_examples() {
        let ap = ActuatorParams::default();
        let a0 = ActuatorState::default();
        assert_eq!(actuator_step(&a0, &ap, 0.0, 0.0, 0.02).unwrap().accel, 0.0);

        let mut a = a0;
        for _ in 0..(5.0 * ap.tau / 0.001) as usize {
            a = actuator_step(&a, &ap, 1.0, 0.0, 0.001).unwrap();
        }
        assert!((a.accel - 4.0).abs() <= 0.01 * 4.0);

        let mut a = a0;
        for _ in 0..2000 {
            a = actuator_step(&a, &ap, 0.5, 0.5, 0.01).unwrap();
        }
        assert_abs_diff_eq!(a.accel, -2.0, epsilon = 1e-9);
        assert!(matches!(
            actuator_step(&a0, &ap, 1.2, 0.0, 0.01),
            Err(Error::ActionOutOfRange { name: "gas", .. })
        ));
    }

    proptest! {
        #[test]
        fn steering_round_trip(delta in (-FRAC_PI_2 + 1e-6)..(FRAC_PI_2 - 1e-6), lr in 0.1f64..2.0, lf in 0.1f64..2.0) {
            let p = VehicleParams { l_r: lr, l_f: lf };
            let beta = beta_from_steering(delta, &p).unwrap();
            let back = beta_from_steering(steering_from_beta(beta, &p).unwrap(), &p).unwrap();
            prop_assert!((back - beta).abs() <= 1e-12);
        }

        #[test]
        fn speed_conserved_without_input(v in -5.0f64..5.0, beta in -1.2f64..1.2, psi in -3.0f64..3.0) {
            let mut s = VehicleState::new(0.0, 0.0, psi, v, beta);
            for _ in 0..50 {
                s = step_rk4(&s, &ControlInput::default(), &P, 0.02).unwrap();
            }
            prop_assert_eq!(s.v, v);
            prop_assert_eq!(s.beta, beta);
        }

        #[test]
        fn actuator_stays_in_range(cmds in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..50), dt in 0.001f64..0.5) {
            let ap = ActuatorParams::default();
            let mut a = ActuatorState::default();
            for (g, b) in cmds {
                a = actuator_step(&a, &ap, g, b, dt).unwrap();
                prop_assert!(a.accel >= -ap.a_brake_max && a.accel <= ap.a_gas_max);
            }
        }
    }
}
