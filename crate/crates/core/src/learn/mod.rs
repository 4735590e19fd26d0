//! Learned corrections to the nominal linearizing controller: the policy
//! network, the discrete linearization loss, episode rollouts and an
//! evolution-strategies trainer.

mod episode;
mod es;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use episode::{run_episode, EpisodeRecord, Scenario, StartPerturbation, StepRecord};
pub use es::{CurvePoint, EsTrainer, TrainOutcome, Trainer, TrainerConfig};

use crate::error::{Error, Result};
use crate::linearize::{Correction, Corrections, LinearState, VirtualInput};
use crate::net::{Activation, Architecture, Mlp};
use crate::planner::LinearModel;
use crate::vehicle::VehicleState;

pub const POLICY_HIDDEN: usize = 32;
pub const DEFAULT_OUT_GAIN: f64 = 0.1;

/// `‖ξ_next − Āξ_k − B̄v_k‖₂²`.
pub fn pointwise_loss(xi_k: &LinearState, xi_next: &LinearState, v_k: &VirtualInput, m: &LinearModel) -> f64 {
    let pred = m.step(xi_k, v_k);
    xi_next.sub(&pred).iter().map(|d| d * d).sum()
}

/// State-to-corrections network: 5 → 32 → 32 → 6 with tanh hidden units.
/// Outputs are `(Δβ₁, Δβ₂, Δα₁₁, Δα₁₂, Δα₂₁, Δα₂₂)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionPolicy {
    pub net: Mlp,
}

pub fn policy_architecture(out_gain: f64) -> Architecture {
    Architecture {
        sizes: vec![5, POLICY_HIDDEN, POLICY_HIDDEN, 6],
        hidden: Activation::Tanh,
        out_gain,
    }
}

impl CorrectionPolicy {
    /// All parameters zero: the nominal controller.
    pub fn zero(out_gain: f64) -> Self {
        Self { net: Mlp::zeros(policy_architecture(out_gain)) }
    }

    /// Random hidden layers and a zero output layer, so the policy still
    /// starts as the nominal controller but has non-degenerate features.
    pub fn init(out_gain: f64, rng: &mut impl Rng) -> Self {
        Self { net: Mlp::random(policy_architecture(out_gain), true, rng) }
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        let sizes = &net.architecture.sizes;
        if sizes.first() != Some(&5) || sizes.last() != Some(&6) {
            return Err(Error::Dimension(format!("policy network must map 5 -> 6, got {sizes:?}")));
        }
        Ok(Self { net })
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.net)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::ModelFile { path: path.to_path_buf(), reason };
        let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        let net: Mlp = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let net = Mlp::from_params(net.architecture, net.params).map_err(|e| bad(e.to_string()))?;
        Self::from_net(net).map_err(|e| bad(e.to_string()))
    }
}

pub fn policy_corrections(policy: &CorrectionPolicy, s: &VehicleState) -> Corrections {
    let y = policy.net.forward(&s.to_array());
    Corrections {
        beta: [y[0], y[1]],
        alpha: [[y[2], y[3]], [y[4], y[5]]],
    }
}

impl Correction for CorrectionPolicy {
    fn corrections(&self, s: &VehicleState) -> Corrections {
        policy_corrections(self, s)
    }
}
