use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_episode, CorrectionPolicy, Scenario};
use crate::error::{Error, Result};
use crate::net::Mlp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    /// Perturbed candidates per epoch; antithetic, so must be even.
    pub population: usize,
    /// Parameter perturbation scale.
    pub sigma_es: f64,
    pub step_size: f64,
    pub epochs: usize,
    pub episodes_per_eval: usize,
    /// Exploration noise on the applied control.
    pub sigma_w: f64,
    pub seed: u64,
    pub out_gain: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            population: 32,
            sigma_es: 0.02,
            step_size: 0.01,
            epochs: 200,
            episodes_per_eval: 5,
            sigma_w: 0.01,
            seed: 0,
            out_gain: super::DEFAULT_OUT_GAIN,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.population < 2 || self.population % 2 != 0 {
            return bad("population must be an even number of at least 2");
        }
        if !(self.sigma_es > 0.0 && self.sigma_es.is_finite()) {
            return bad("sigma_es must be positive");
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be positive");
        }
        if self.epochs == 0 || self.episodes_per_eval == 0 {
            return bad("epochs and episodes_per_eval must be positive");
        }
        if !(self.sigma_w >= 0.0 && self.sigma_w.is_finite()) {
            return bad("sigma_w must be non-negative");
        }
        if !self.out_gain.is_finite() || self.out_gain <= 0.0 {
            return bad("out_gain must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub mean_return: f64,
    pub best_return: f64,
    pub mean_pointwise_loss: f64,
    pub step_size: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub policy: CorrectionPolicy,
    pub curve: Vec<CurvePoint>,
    /// Evaluation of the initial policy under the training noise.
    pub initial_return: f64,
    pub best_return: f64,
}

/// Anything that improves a correction policy on a scenario.
pub trait Trainer {
    fn train(&self, sc: &Scenario, init: CorrectionPolicy) -> Result<TrainOutcome>;
}

/// Antithetic evolution strategies with centered-rank fitness shaping and
/// elitist best-so-far retention.
#[derive(Clone, Debug)]
pub struct EsTrainer {
    pub cfg: TrainerConfig,
}

struct Evaluation {
    mean_return: f64,
    mean_loss: f64,
}

fn evaluate(sc: &Scenario, policy: &CorrectionPolicy, sigma_w: f64, seeds: &[u64]) -> Result<Evaluation> {
    let mut total = 0.0;
    let mut loss = 0.0;
    for &seed in seeds {
        match run_episode(sc, policy, sigma_w, seed) {
            Ok(rec) => {
                total += rec.episode_return;
                loss += rec.mean_loss();
            }
            Err(Error::EpisodeDiverged { .. }) => {
                return Ok(Evaluation { mean_return: f64::NEG_INFINITY, mean_loss: f64::INFINITY })
            }
            Err(e) => return Err(e),
        }
    }
    let n = seeds.len() as f64;
    Ok(Evaluation { mean_return: total / n, mean_loss: loss / n })
}

/// Centered ranks in `[−0.5, 0.5]`; NaN sorts lowest.
fn centered_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| key(values[a]).total_cmp(&key(values[b])).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    if n == 1 {
        return ranks;
    }
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r as f64 / (n - 1) as f64 - 0.5;
    }
    ranks
}

fn with_params(template: &CorrectionPolicy, params: Vec<f64>) -> CorrectionPolicy {
    CorrectionPolicy {
        net: Mlp { architecture: template.net.architecture.clone(), params },
    }
}

impl Trainer for EsTrainer {
    fn train(&self, sc: &Scenario, init: CorrectionPolicy) -> Result<TrainOutcome> {
        let cfg = &self.cfg;
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let dim = init.num_params();
        let pairs = cfg.population / 2;

        let draw_seeds = |rng: &mut ChaCha8Rng| -> Vec<u64> {
            (0..cfg.episodes_per_eval).map(|_| rng.random()).collect()
        };
        let initial = evaluate(sc, &init, cfg.sigma_w, &draw_seeds(&mut rng))?;
        let mut theta = init.net.params.clone();
        let mut best = init.clone();
        let mut best_return = initial.mean_return;
        let mut step = cfg.step_size;
        let mut curve = Vec::with_capacity(cfg.epochs);

        for epoch in 1..=cfg.epochs {
            let noise: Vec<Vec<f64>> = (0..pairs)
                .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            let seeds = draw_seeds(&mut rng);
            let candidates: Vec<Vec<f64>> = noise
                .iter()
                .flat_map(|eps| {
                    [1.0, -1.0].map(|sign| {
                        theta.iter().zip(eps).map(|(t, e)| t + sign * cfg.sigma_es * e).collect()
                    })
                })
                .collect();
            let fitness: Vec<f64> = candidates
                .par_iter()
                .map(|p| evaluate(sc, &with_params(&init, p.clone()), cfg.sigma_w, &seeds).map(|e| e.mean_return))
                .collect::<Result<Vec<_>>>()?;

            let ranks = centered_ranks(&fitness);
            let mut grad = vec![0.0; dim];
            for (i, eps) in noise.iter().enumerate() {
                let w = ranks[2 * i] - ranks[2 * i + 1];
                for (g, e) in grad.iter_mut().zip(eps) {
                    *g += w * e;
                }
            }
            let scale = step / (cfg.population as f64 * cfg.sigma_es);
            let proposal: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + scale * g).collect();

            let eval = if proposal.iter().all(|p| p.is_finite()) {
                Some(evaluate(sc, &with_params(&init, proposal.clone()), cfg.sigma_w, &seeds)?)
            } else {
                None
            };
            match eval {
                Some(ev) if ev.mean_return.is_finite() && ev.mean_loss.is_finite() => {
                    theta = proposal;
                    if ev.mean_return > best_return {
                        best_return = ev.mean_return;
                        best = with_params(&init, theta.clone());
                    }
                    curve.push(CurvePoint {
                        epoch,
                        mean_return: ev.mean_return,
                        best_return,
                        mean_pointwise_loss: ev.mean_loss,
                        step_size: step,
                    });
                }
                other => {
                    // Reject the update and retry from the same point with
                    // half the step.
                    let (mean_return, mean_loss) = other
                        .map(|e| (e.mean_return, e.mean_loss))
                        .unwrap_or((f64::NAN, f64::NAN));
                    curve.push(CurvePoint {
                        epoch,
                        mean_return,
                        best_return,
                        mean_pointwise_loss: mean_loss,
                        step_size: step,
                    });
                    step *= 0.5;
                }
            }
        }
        Ok(TrainOutcome { policy: best, curve, initial_return: initial.mean_return, best_return })
    }
}
