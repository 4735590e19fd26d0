use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::pointwise_loss;
use crate::error::{Error, Result};
use crate::linearize::{extract_linear_state, Correction, LinearState, Linearizer, VirtualInput};
use crate::numerics::Mat;
use crate::planner::{track, LinearModel, PlanResult};
use crate::prenet::PedalChain;
use crate::vehicle::{actuator_step, step_rk4, ActuatorState, ControlInput, VehicleParams, VehicleState};

/// Uniform start-state perturbation `±widths` on `(x, y, ψ, V, β)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartPerturbation {
    pub widths: [f64; 5],
}

/// Everything an episode needs besides the policy and the noise.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub plant: VehicleParams,
    pub linearizer: Linearizer,
    pub plan: PlanResult,
    pub gain: Mat,
    pub model: LinearModel,
    pub start: VehicleState,
    pub start_perturbation: Option<StartPerturbation>,
    /// Episodes stop with `EpisodeDiverged` once `‖ξ‖` exceeds this.
    pub blowup: f64,
    /// Route the acceleration channel through the pedal network and the
    /// lagged actuator instead of applying it directly.
    pub pedals: Option<PedalChain>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub state: VehicleState,
    pub xi: LinearState,
    pub xi_ref: LinearState,
    pub v: VirtualInput,
    /// Control actually applied to the plant, noise included.
    pub u: ControlInput,
    pub w: [f64; 2],
    pub reward: f64,
    pub loss: f64,
}

/// Step tuples for `k = 0..N−2` plus the state reached after the last one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub steps: Vec<StepRecord>,
    pub final_state: VehicleState,
    pub episode_return: f64,
}

impl EpisodeRecord {
    /// Number of visited states, `N`.
    pub fn len(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn total_loss(&self) -> f64 {
        self.steps.iter().map(|s| s.loss).sum()
    }

    pub fn mean_loss(&self) -> f64 {
        if self.steps.is_empty() {
            0.0
        } else {
            self.total_loss() / self.steps.len() as f64
        }
    }
}

fn diverged(step: usize, xi: &LinearState) -> Error {
    Error::EpisodeDiverged { step, norm: xi.norm() }
}

/// Rolls the plant along the plan under tracker, policy and exploration
/// noise `w ~ N(0, σ_w² I)`; reward is `−‖ξ_k − ξ_ref,k‖₂`.
pub fn run_episode<C: Correction + ?Sized>(
    sc: &Scenario,
    policy: &C,
    sigma_w: f64,
    seed: u64,
) -> Result<EpisodeRecord> {
    if !(sigma_w >= 0.0) {
        return Err(Error::InvalidConfig(format!("exploration noise must be >= 0, got {sigma_w}")));
    }
    let n = sc.plan.len();
    if n < 2 {
        return Err(Error::InvalidConfig("plan must contain at least two states".into()));
    }
    let dt = sc.model.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = sc.start;
    if let Some(p) = &sc.start_perturbation {
        let mut a = x.to_array();
        for (ai, w) in a.iter_mut().zip(p.widths) {
            if w > 0.0 {
                *ai += rng.random_range(-w..=w);
            }
        }
        x = VehicleState::from_array(a);
    }
    if x.v.abs() < sc.linearizer.eps_v {
        return Err(Error::SpeedTooLow { speed: x.v, floor: sc.linearizer.eps_v });
    }
    let noise = Normal::new(0.0, sigma_w.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut actuator = ActuatorState::default();

    let mut steps = Vec::with_capacity(n - 1);
    let mut xi = extract_linear_state(&x);
    let mut episode_return = 0.0;
    for k in 0..n - 1 {
        if !xi.is_finite() || xi.norm() > sc.blowup {
            return Err(diverged(k, &xi));
        }
        let xi_ref = sc.plan.states[k];
        let v = track(&xi, &xi_ref, &sc.plan.inputs[k], &sc.gain);
        let u_nom = sc.linearizer.corrected(&x, &v, policy).map_err(|_| diverged(k, &xi))?;
        let w = if sigma_w > 0.0 {
            [noise.sample(&mut rng), noise.sample(&mut rng)]
        } else {
            [0.0, 0.0]
        };
        let u = ControlInput::new(u_nom.a + w[0], u_nom.b + w[1]);
        let applied = match &sc.pedals {
            None => u,
            Some(chain) => {
                let (gas, brake) = chain.net.accel_to_action(u.a);
                actuator = actuator_step(&actuator, &chain.actuator, gas, brake, dt)?;
                ControlInput::new(actuator.accel, u.b)
            }
        };
        let next = step_rk4(&x, &applied, &sc.plant, dt).map_err(|_| diverged(k, &xi))?;
        let xi_next = extract_linear_state(&next);
        let reward = -xi.distance(&xi_ref);
        episode_return += reward;
        steps.push(StepRecord {
            k,
            t: k as f64 * dt,
            state: x,
            xi,
            xi_ref,
            v,
            u: applied,
            w,
            reward,
            loss: pointwise_loss(&xi, &xi_next, &v, &sc.model),
        });
        x = next;
        xi = xi_next;
    }
    if !xi.is_finite() || xi.norm() > sc.blowup {
        return Err(diverged(n - 1, &xi));
    }
    Ok(EpisodeRecord { steps, final_state: x, episode_return })
}
