//! Experiment runner behind the `lfbl` CLI: builds the scenario from a
//! config, runs plan/baseline/train/eval/prenet and writes the artifacts.

mod config;
pub mod io;
pub mod plot;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{
    to_mat, ExperimentConfig, PlannerConfig, PrenetConfig, ScenarioConfig, TrackerConfig, DEFAULT_CONFIG,
};

use crate::error::{Error, Result};
use crate::learn::{run_episode, CorrectionPolicy, EpisodeRecord, EsTrainer, Scenario, Trainer};
use crate::linearize::{extract_linear_state, Correction, LinearState, Linearizer};
use crate::numerics::Mat;
use crate::planner::{plan, tracker_gain, LinearModel, PlanResult, PlanSettings};
use crate::prenet::{
    collect_data, round_trip_mae, train_prenet, write_dataset, PedalChain, PreNet,
};

pub fn plan_settings(cfg: &ExperimentConfig, n: usize) -> Result<PlanSettings> {
    let p = &cfg.planner;
    let mut s = PlanSettings::new(n, cfg.scenario.dt);
    s.q = to_mat(&p.q, 4, 4, "planner.q")?;
    s.r = to_mat(&p.r, 2, 2, "planner.r")?;
    s.qf = to_mat(&p.qf, 4, 4, "planner.qf")?;
    s.v_bnds = p.v_bnds;
    s.waypoints = p.waypoints.clone();
    s.qp_tol = p.qp_tol;
    s.qp_max_iter = p.qp_max_iter;
    Ok(s)
}

/// Reference plan from the normal-form image of the start state.
pub fn build_plan(cfg: &ExperimentConfig) -> Result<PlanResult> {
    let x0 = extract_linear_state(&cfg.start_state());
    plan(&x0, &cfg.target(), &plan_settings(cfg, cfg.horizon())?)
}

pub fn build_gain(cfg: &ExperimentConfig) -> Result<Mat> {
    tracker_gain(&to_mat(&cfg.tracker.q, 4, 4, "tracker.q")?, &to_mat(&cfg.tracker.r, 2, 2, "tracker.r")?)
}

pub fn linearizer(cfg: &ExperimentConfig) -> Linearizer {
    Linearizer { model: cfg.model, drift: cfg.drift, eps_v: cfg.scenario.eps_v }
}

pub fn build_scenario(cfg: &ExperimentConfig, pedals: Option<PedalChain>) -> Result<Scenario> {
    cfg.validate()?;
    Ok(Scenario {
        plant: cfg.plant,
        linearizer: linearizer(cfg),
        plan: build_plan(cfg)?,
        gain: build_gain(cfg)?,
        model: LinearModel::new(cfg.scenario.dt)?,
        start: cfg.start_state(),
        start_perturbation: cfg.start_perturbation(),
        blowup: cfg.scenario.blowup,
        pedals,
    })
}

fn truncate(plan: &PlanResult, states: usize) -> PlanResult {
    PlanResult {
        states: plan.states[..states].to_vec(),
        inputs: plan.inputs[..states - 1].to_vec(),
        ..plan.clone()
    }
}

/// One episode, re-planning from the current state every
/// `planner.replan_every` steps when that is non-zero.
pub fn rollout<C: Correction + ?Sized>(
    cfg: &ExperimentConfig,
    sc: &Scenario,
    policy: &C,
    sigma_w: f64,
    seed: u64,
) -> Result<EpisodeRecord> {
    let every = cfg.planner.replan_every;
    if every == 0 {
        return run_episode(sc, policy, sigma_w, seed);
    }
    let n = sc.plan.len();
    let mut seg_sc = sc.clone();
    let mut done = 0;
    let mut steps = Vec::with_capacity(n - 1);
    let mut episode_return = 0.0;
    let mut final_state = sc.start;
    while done < n - 1 {
        let remaining = n - done;
        let reference = if done == 0 {
            sc.plan.clone()
        } else {
            let mut s = plan_settings(cfg, remaining)?;
            s.waypoints.retain(|w| w.step > done && w.step < n - 1);
            s.waypoints.iter_mut().for_each(|w| w.step -= done);
            plan(&extract_linear_state(&final_state), &cfg.target(), &s)?
        };
        let seg = every.min(remaining - 1);
        seg_sc.plan = truncate(&reference, seg + 1);
        seg_sc.start = final_state;
        if done > 0 {
            seg_sc.start_perturbation = None;
        }
        let rec = run_episode(&seg_sc, policy, sigma_w, seed.wrapping_add(done as u64))?;
        for mut s in rec.steps {
            s.k += done;
            s.t = s.k as f64 * sc.model.dt;
            steps.push(s);
        }
        episode_return += rec.episode_return;
        final_state = rec.final_state;
        done += seg;
    }
    Ok(EpisodeRecord { steps, final_state, episode_return })
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    Ok(cfg.out_dir.clone())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEcho {
    pub plant_l_r: f64,
    pub model_l_r: f64,
    pub drift: crate::linearize::DriftForm,
    pub start: [f64; 5],
    pub target: [f64; 4],
    pub duration: f64,
    pub dt: f64,
    pub horizon: usize,
}

impl ScenarioEcho {
    fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            plant_l_r: cfg.plant.l_r,
            model_l_r: cfg.model.l_r,
            drift: cfg.drift,
            start: cfg.scenario.start,
            target: cfg.scenario.target,
            duration: cfg.scenario.duration,
            dt: cfg.scenario.dt,
            horizon: cfg.horizon(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub states: usize,
    pub objective: f64,
    pub eq_residual: f64,
    pub kkt_residual: f64,
    pub dynamics_residual: f64,
    pub max_input: f64,
    pub qp_iterations: usize,
    pub file: String,
}

pub fn cmd_plan(cfg: &ExperimentConfig) -> Result<PlanSummary> {
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    let plan = build_plan(cfg)?;
    let model = LinearModel::new(cfg.scenario.dt)?;
    let path = dir.join("plan.csv");
    io::write_plan(&path, &plan, cfg.scenario.dt)?;
    Ok(PlanSummary {
        states: plan.len(),
        objective: plan.objective,
        eq_residual: plan.eq_residual,
        kkt_residual: plan.kkt_residual,
        dynamics_residual: plan.dynamics_residual(&model),
        max_input: plan.max_input(),
        qp_iterations: plan.iterations,
        file: file_name(&path),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub step: usize,
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub scenario: ScenarioEcho,
    /// Returns of repeated noise-free zero-policy episodes.
    pub returns: Vec<f64>,
    pub constant: bool,
    pub mean_pointwise_loss: f64,
    /// Where the episode blew up, if it did.
    pub diverged: Option<Divergence>,
    pub files: Vec<String>,
}

impl BaselineReport {
    pub fn episode_return(&self) -> Option<f64> {
        if self.diverged.is_some() {
            None
        } else {
            self.returns.first().copied()
        }
    }
}

const BASELINE_REPEATS: usize = 3;

/// Zero-policy, noise-free episodes. Divergence is recorded in the report
/// rather than returned as an error.
pub fn cmd_baseline(cfg: &ExperimentConfig) -> Result<BaselineReport> {
    let sc = build_scenario(cfg, None)?;
    let dir = out_dir(cfg)?;
    let zero = CorrectionPolicy::zero(cfg.trainer.out_gain);
    let mut returns = Vec::with_capacity(BASELINE_REPEATS);
    let mut first = None;
    let mut diverged = None;
    for i in 0..BASELINE_REPEATS {
        match rollout(cfg, &sc, &zero, 0.0, cfg.seed.wrapping_add(i as u64)) {
            Ok(rec) => {
                returns.push(rec.episode_return);
                first.get_or_insert(rec);
            }
            Err(Error::EpisodeDiverged { step, norm }) => {
                diverged = Some(Divergence { step, norm });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let mut files = Vec::new();
    if let Some(rec) = &first {
        let path = dir.join("baseline.csv");
        io::write_episode(&path, rec, cfg.scenario.dt)?;
        files.push(file_name(&path));
    }
    let report = BaselineReport {
        scenario: ScenarioEcho::of(cfg),
        constant: returns.windows(2).all(|w| w[0] == w[1]),
        returns,
        mean_pointwise_loss: first.as_ref().map_or(f64::NAN, |r| r.mean_loss()),
        diverged,
        files,
    };
    io::write_json(&dir.join("baseline.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: ScenarioEcho,
    pub baseline_return: f64,
    pub learned_return: f64,
    /// `|baseline| / |learned|`.
    pub improvement_factor: f64,
    pub best_training_return: f64,
    pub initial_training_return: f64,
    pub epochs: usize,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub command: String,
    pub wall_clock_s: f64,
}

fn write_timing(dir: &Path, command: &str, start: Instant) -> Result<()> {
    let t = Timing { command: command.into(), wall_clock_s: start.elapsed().as_secs_f64() };
    io::write_json(&dir.join(format!("timing_{command}.json")), &t)
}

pub fn improvement_factor(baseline: f64, learned: f64) -> f64 {
    baseline.abs() / learned.abs()
}

pub struct TrainArtifacts {
    pub report: RunReport,
    pub policy: CorrectionPolicy,
    pub baseline: EpisodeRecord,
    pub learned: EpisodeRecord,
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainArtifacts> {
    let start = Instant::now();
    let sc = build_scenario(cfg, None)?;
    let dir = out_dir(cfg)?;
    let zero = CorrectionPolicy::zero(cfg.trainer.out_gain);
    let baseline = rollout(cfg, &sc, &zero, 0.0, cfg.seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.trainer.seed);
    let init = CorrectionPolicy::init(cfg.trainer.out_gain, &mut rng);
    let trainer = EsTrainer { cfg: cfg.trainer.clone() };
    let outcome = trainer.train(&sc, init)?;
    let learned = rollout(cfg, &sc, &outcome.policy, 0.0, cfg.seed)?;

    let curve_path = dir.join("learning_curve.csv");
    io::write_curve(&curve_path, &outcome.curve)?;
    let policy_path = dir.join("policy.json");
    outcome.policy.save(&policy_path)?;
    let baseline_path = dir.join("baseline.csv");
    io::write_episode(&baseline_path, &baseline, cfg.scenario.dt)?;
    let learned_path = dir.join("learned.csv");
    io::write_episode(&learned_path, &learned, cfg.scenario.dt)?;
    let cmp_path = dir.join("trajectories.csv");
    io::write_comparison(&cmp_path, &sc.plan, Some(&baseline), Some(&learned), cfg.scenario.dt)?;

    let report = RunReport {
        scenario: ScenarioEcho::of(cfg),
        baseline_return: baseline.episode_return,
        learned_return: learned.episode_return,
        improvement_factor: improvement_factor(baseline.episode_return, learned.episode_return),
        best_training_return: outcome.best_return,
        initial_training_return: outcome.initial_return,
        epochs: cfg.trainer.epochs,
        files: [&curve_path, &policy_path, &baseline_path, &learned_path, &cmp_path]
            .iter()
            .map(|p| file_name(p))
            .collect(),
    };
    io::write_json(&dir.join("report.json"), &report)?;
    write_timing(&dir, "train", start)?;
    Ok(TrainArtifacts { report, policy: outcome.policy, baseline, learned })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: ScenarioEcho,
    pub policy_file: String,
    pub direct_return: f64,
    pub prenet_return: Option<f64>,
    /// `prenet_return / direct_return`; above 1 means the pedal chain hurt.
    pub degradation_factor: Option<f64>,
    pub files: Vec<String>,
}

pub fn cmd_eval(
    cfg: &ExperimentConfig,
    policy_path: &Path,
    prenet_path: Option<&Path>,
) -> Result<EvalReport> {
    let policy = CorrectionPolicy::load(policy_path)?;
    let sc = build_scenario(cfg, None)?;
    let dir = out_dir(cfg)?;
    let direct = rollout(cfg, &sc, &policy, 0.0, cfg.seed)?;
    let direct_path = dir.join("eval_direct.csv");
    io::write_episode(&direct_path, &direct, cfg.scenario.dt)?;
    let mut files = vec![file_name(&direct_path)];
    let mut prenet_return = None;
    if let Some(path) = prenet_path {
        let net = PreNet::load(path)?;
        let chained = Scenario {
            pedals: Some(PedalChain { net, actuator: cfg.prenet.actuator }),
            ..sc.clone()
        };
        let rec = rollout(cfg, &chained, &policy, 0.0, cfg.seed)?;
        let p = dir.join("eval_prenet.csv");
        io::write_episode(&p, &rec, cfg.scenario.dt)?;
        files.push(file_name(&p));
        prenet_return = Some(rec.episode_return);
    }
    let report = EvalReport {
        scenario: ScenarioEcho::of(cfg),
        policy_file: file_name(policy_path),
        direct_return: direct.episode_return,
        prenet_return,
        degradation_factor: prenet_return.map(|p| p / direct.episode_return),
        files,
    };
    io::write_json(&dir.join("eval.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrenetReport {
    pub samples: usize,
    pub epochs_completed: usize,
    pub final_mse: f64,
    pub round_trip_mae: f64,
    pub full_scale: f64,
    /// `round_trip_mae / full_scale`.
    pub mae_fraction: f64,
    pub files: Vec<String>,
}

pub fn round_trip_commands(cfg: &PrenetConfig) -> Vec<f64> {
    let [lo, hi] = cfg.round_trip_range;
    let n = cfg.round_trip_samples;
    (0..n)
        .map(|i| if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

pub fn cmd_prenet(cfg: &ExperimentConfig) -> Result<(PrenetReport, PreNet)> {
    cfg.validate()?;
    let start = Instant::now();
    let dir = out_dir(cfg)?;
    let pn = &cfg.prenet;
    let data = collect_data(&pn.actuator, &cfg.plant, &pn.collect)?;
    let mut rng = ChaCha8Rng::seed_from_u64(pn.train.seed);
    let fit = train_prenet(&data, PreNet::init(pn.input_scale, &mut rng), &pn.train)?;

    let data_path = dir.join("prenet_dataset.csv");
    write_dataset(&data_path, &data)?;
    let net_path = dir.join("prenet.json");
    fit.net.save(&net_path)?;
    let loss_path = dir.join("prenet_loss.csv");
    io::write_losses(&loss_path, &fit.losses)?;
    let mae = round_trip_mae(&fit.net, &pn.actuator, &round_trip_commands(pn), pn.collect.dt)?;
    let report = PrenetReport {
        samples: data.len(),
        epochs_completed: fit.losses.len(),
        final_mse: fit.final_mse(),
        round_trip_mae: mae,
        full_scale: pn.actuator.full_scale(),
        mae_fraction: mae / pn.actuator.full_scale(),
        files: [&data_path, &net_path, &loss_path].iter().map(|p| file_name(p)).collect(),
    };
    io::write_json(&dir.join("prenet_report.json"), &report)?;
    write_timing(&dir, "prenet", start)?;
    if let Some(epoch) = fit.non_finite_epoch {
        return Err(Error::NonFiniteLoss { epoch });
    }
    Ok((report, fit.net))
}

/// Planned, baseline and (when a policy is given) learned paths as SVG.
pub fn cmd_plot(cfg: &ExperimentConfig, policy_path: Option<&Path>) -> Result<PathBuf> {
    let sc = build_scenario(cfg, None)?;
    let dir = out_dir(cfg)?;
    let path_of = |rec: &EpisodeRecord| -> Vec<(f64, f64)> {
        rec.steps
            .iter()
            .map(|s| (s.state.x, s.state.y))
            .chain(std::iter::once((rec.final_state.x, rec.final_state.y)))
            .collect()
    };
    let planned: Vec<(f64, f64)> = sc.plan.states.iter().map(LinearState::position).collect();
    let mut series = vec![plot::Series { label: "planned", color: "black", points: planned }];
    let zero = CorrectionPolicy::zero(cfg.trainer.out_gain);
    if let Ok(rec) = rollout(cfg, &sc, &zero, 0.0, cfg.seed) {
        series.push(plot::Series { label: "nominal", color: "#d62728", points: path_of(&rec) });
    }
    if let Some(p) = policy_path {
        let policy = CorrectionPolicy::load(p)?;
        if let Ok(rec) = rollout(cfg, &sc, &policy, 0.0, cfg.seed) {
            series.push(plot::Series { label: "learned", color: "#1f77b4", points: path_of(&rec) });
        }
    }
    let out = dir.join("paths.svg");
    std::fs::write(&out, plot::paths_svg("x-y paths", &series))?;
    Ok(out)
}
