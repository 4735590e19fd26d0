use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{StartPerturbation, TrainerConfig};
use crate::linearize::{DriftForm, LinearState};
use crate::numerics::Mat;
use crate::planner::Waypoint;
use crate::prenet::{CollectConfig, PrenetTrainConfig};
use crate::vehicle::{ActuatorParams, VehicleParams, VehicleState};

/// The defaults file shipped with the crate.
pub const DEFAULT_CONFIG: &str = include_str!("../../config/default.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; the CLI `--seed` flag overrides it and every derived seed.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub drift: DriftForm,
    pub plant: VehicleParams,
    pub model: VehicleParams,
    pub scenario: ScenarioConfig,
    pub planner: PlannerConfig,
    pub tracker: TrackerConfig,
    pub trainer: TrainerConfig,
    pub prenet: PrenetConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Plant start `(x, y, ψ, V, β)`.
    pub start: [f64; 5],
    /// Target normal-form state `(x, ẋ, y, ẏ)`.
    pub target: [f64; 4],
    /// Episode duration, s.
    pub duration: f64,
    pub dt: f64,
    pub eps_v: f64,
    pub blowup: f64,
    /// Half-widths of a uniform start perturbation; all zero disables it.
    #[serde(default)]
    pub start_perturbation: [f64; 5],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub qf: Vec<Vec<f64>>,
    pub v_bnds: f64,
    #[serde(default)]
    pub waypoints: Vec<Waypoint>,
    /// Re-plan every this many steps during episodes; 0 disables.
    #[serde(default)]
    pub replan_every: usize,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrenetConfig {
    pub actuator: ActuatorParams,
    pub collect: CollectConfig,
    pub train: PrenetTrainConfig,
    pub input_scale: f64,
    /// Commands used for the round-trip check, spread evenly on this range.
    pub round_trip_range: [f64; 2],
    pub round_trip_samples: usize,
}

pub fn to_mat(rows: &[Vec<f64>], r: usize, c: usize, name: &str) -> Result<Mat> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidConfig(format!("{name} must be {r}x{c}")));
    }
    Mat::from_row_major(r, c, rows.concat()).map_err(|e| Error::InvalidConfig(format!("{name}: {e}")))
}

fn check_psd(m: &Mat, name: &str, strict: bool) -> Result<()> {
    if !m.is_symmetric(1e-12) {
        return Err(Error::InvalidConfig(format!("{name} must be symmetric")));
    }
    // Semidefinite Cholesky: a negative pivot means an indefinite matrix.
    let n = m.rows();
    let mut l = Mat::zeros(n, n);
    let scale = m.max_abs().max(1.0);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -1e-12 * scale || (strict && d <= 1e-14 * scale) {
            let kind = if strict { "positive definite" } else { "positive semidefinite" };
            return Err(Error::InvalidConfig(format!("{name} must be {kind}")));
        }
        let d = d.max(0.0).sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = if d > 0.0 { v / d } else { 0.0 };
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Sets the master seed and every seed derived from it.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.trainer.seed = seed;
        self.prenet.collect.seed = seed;
        self.prenet.train.seed = seed;
    }

    /// Number of planned states, `round(T/dt) − 1`.
    pub fn horizon(&self) -> usize {
        ((self.scenario.duration / self.scenario.dt).round() as i64 - 1).max(0) as usize
    }

    pub fn start_state(&self) -> VehicleState {
        VehicleState::from_array(self.scenario.start)
    }

    pub fn target(&self) -> LinearState {
        LinearState(self.scenario.target)
    }

    pub fn start_perturbation(&self) -> Option<StartPerturbation> {
        let w = self.scenario.start_perturbation;
        w.iter().any(|&v| v > 0.0).then_some(StartPerturbation { widths: w })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        self.plant.validate()?;
        self.model.validate()?;
        let sc = &self.scenario;
        if !(sc.dt > 0.0 && sc.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", sc.dt));
        }
        if !(sc.duration > 0.0 && sc.duration.is_finite()) {
            return bad("duration must be positive".into());
        }
        if self.horizon() < 2 {
            return bad("duration/dt gives fewer than two planned states".into());
        }
        if !(sc.eps_v > 0.0) || !(sc.blowup > 0.0) {
            return bad("eps_v and blowup must be positive".into());
        }
        if sc.start.iter().chain(&sc.target).any(|v| !v.is_finite()) {
            return bad("start and target must be finite".into());
        }
        if sc.start_perturbation.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return bad("start_perturbation widths must be non-negative".into());
        }
        if sc.start[3].abs() < sc.eps_v {
            return bad("start speed must be at least eps_v".into());
        }
        let p = &self.planner;
        check_psd(&to_mat(&p.q, 4, 4, "planner.q")?, "planner.q", false)?;
        check_psd(&to_mat(&p.qf, 4, 4, "planner.qf")?, "planner.qf", false)?;
        check_psd(&to_mat(&p.r, 2, 2, "planner.r")?, "planner.r", true)?;
        if !(p.v_bnds > 0.0) || !(p.qp_tol > 0.0) || p.qp_max_iter == 0 {
            return bad("planner v_bnds, qp_tol and qp_max_iter must be positive".into());
        }
        check_psd(&to_mat(&self.tracker.q, 4, 4, "tracker.q")?, "tracker.q", false)?;
        check_psd(&to_mat(&self.tracker.r, 2, 2, "tracker.r")?, "tracker.r", true)?;
        self.trainer.validate()?;
        let pn = &self.prenet;
        pn.actuator.validate()?;
        if !(pn.input_scale > 0.0 && pn.input_scale.is_finite()) {
            return bad("prenet.input_scale must be positive".into());
        }
        if pn.round_trip_samples == 0 || !(pn.round_trip_range[0] < pn.round_trip_range[1]) {
            return bad("prenet round-trip range must be non-empty".into());
        }
        Ok(())
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_toml(DEFAULT_CONFIG).expect("shipped defaults parse")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.horizon(), 249);
        assert_eq!(cfg.plant.l_r, 1.0);
        assert_eq!(cfg.model.l_r, 0.5);
        let text = cfg.to_toml().unwrap();
        let again = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml().unwrap(), text);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = ExperimentConfig::default();
        cfg.scenario.dt = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let mut cfg = ExperimentConfig::default();
        cfg.planner.r = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.planner.q = vec![vec![1.0; 3]; 4];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.trainer.population = 1;
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_toml("seed = 1\nbogus = 2").is_err());
    }

    #[test]
    fn seed_override_reaches_every_stage() {
        let mut cfg = ExperimentConfig::default();
        cfg.set_seed(42);
        assert_eq!(cfg.trainer.seed, 42);
        assert_eq!(cfg.prenet.collect.seed, 42);
        assert_eq!(cfg.prenet.train.seed, 42);
    }
}
