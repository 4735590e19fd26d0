//! Inverse actuator model: commanded acceleration to a gas/brake pair.
//!
//! Training data comes from holding random pedal pairs on the synthetic
//! lagged actuator and recording the mean `ΔV/dt` over the hold.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Activation, Architecture, Mlp};
use crate::vehicle::{actuator_step, step_rk4, ActuatorParams, ActuatorState, ControlInput, VehicleParams, VehicleState};

pub const PRENET_HIDDEN: usize = 200;
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActuationSample {
    pub acceleration: f64,
    pub gas: f64,
    pub brake: f64,
}

/// How random pedal pairs are drawn during collection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PedalSampling {
    /// One pedal at a time, chosen with equal probability.
    #[default]
    Exclusive,
    /// Gas and brake drawn independently.
    Independent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectConfig {
    pub n: usize,
    pub hold_steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub sampling: PedalSampling,
    /// Speed the vehicle is reset to before every hold window.
    pub start_speed: f64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            n: 5000,
            hold_steps: 10,
            dt: 0.05,
            seed: 0,
            sampling: PedalSampling::Exclusive,
            start_speed: 5.0,
        }
    }
}

pub fn collect_data(
    actuator: &ActuatorParams,
    vehicle: &VehicleParams,
    cfg: &CollectConfig,
) -> Result<Vec<ActuationSample>> {
    actuator.validate()?;
    vehicle.validate()?;
    if cfg.n == 0 || cfg.hold_steps < 2 || !(cfg.dt > 0.0) {
        return Err(Error::InvalidConfig("collection needs n >= 1, hold_steps >= 2, dt > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let (gas, brake) = match cfg.sampling {
            PedalSampling::Independent => (rng.random::<f64>(), rng.random::<f64>()),
            PedalSampling::Exclusive => {
                let level = rng.random::<f64>();
                if rng.random::<bool>() {
                    (level, 0.0)
                } else {
                    (0.0, level)
                }
            }
        };
        let mut act = ActuatorState::default();
        let mut s = VehicleState::new(0.0, 0.0, 0.0, cfg.start_speed, 0.0);
        let mut dv = 0.0;
        for _ in 0..cfg.hold_steps {
            act = actuator_step(&act, actuator, gas, brake, cfg.dt)?;
            let next = step_rk4(&s, &ControlInput::new(act.accel, 0.0), vehicle, cfg.dt)?;
            dv += (next.v - s.v) / cfg.dt;
            s = next;
        }
        out.push(ActuationSample { acceleration: dv / cfg.hold_steps as f64, gas, brake });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreNet {
    /// Multiplier applied to the acceleration before the first layer.
    pub input_scale: f64,
    pub net: Mlp,
}

pub fn prenet_architecture() -> Architecture {
    Architecture {
        sizes: vec![1, PRENET_HIDDEN, 2],
        hidden: Activation::LeakyRelu { slope: LEAKY_SLOPE },
        out_gain: 1.0,
    }
}

impl PreNet {
    /// He-scaled hidden weights with biases spread over the input range so
    /// the initial kinks cover it.
    pub fn init(input_scale: f64, rng: &mut impl Rng) -> Self {
        let mut net = Mlp::random(prenet_architecture(), false, rng);
        let he = Normal::new(0.0, std::f64::consts::SQRT_2).expect("positive std");
        for i in 0..PRENET_HIDDEN {
            net.params[i] = he.sample(rng);
            net.params[PRENET_HIDDEN + i] = rng.random_range(-1.0..1.0);
        }
        Self { input_scale, net }
    }

    /// Raw `(gas, brake)` prediction.
    pub fn predict(&self, accel: f64) -> [f64; 2] {
        let y = self.net.forward(&[accel * self.input_scale]);
        [y[0], y[1]]
    }

    /// Prediction clamped to `[0, 1]²`.
    pub fn accel_to_action(&self, accel: f64) -> (f64, f64) {
        let [g, b] = self.predict(accel);
        (clamp_unit(g), clamp_unit(b))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::ModelFile { path: path.to_path_buf(), reason };
        let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        let raw: PreNet = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let net = Mlp::from_params(raw.net.architecture, raw.net.params).map_err(|e| bad(e.to_string()))?;
        if net.input_dim() != 1 || net.output_dim() != 2 || !raw.input_scale.is_finite() {
            return Err(bad("pedal network must map 1 -> 2".into()));
        }
        Ok(Self { input_scale: raw.input_scale, net })
    }
}

fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Pedal network plus the actuator it drives.
#[derive(Clone, Debug, PartialEq)]
pub struct PedalChain {
    pub net: PreNet,
    pub actuator: ActuatorParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrenetTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for PrenetTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.05,
            batch: 32,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrenetFit {
    /// Last parameters whose epoch loss was finite.
    pub net: PreNet,
    /// Mean training MSE per completed epoch.
    pub losses: Vec<f64>,
    /// Epoch at which a non-finite loss stopped training.
    pub non_finite_epoch: Option<usize>,
}

impl PrenetFit {
    pub fn final_mse(&self) -> f64 {
        self.losses.last().copied().unwrap_or(f64::NAN)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &PrenetTrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            params[i] -= cfg.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + cfg.eps);
        }
    }
}

/// Mean squared error over both outputs.
pub fn prenet_mse(net: &PreNet, data: &[ActuationSample]) -> f64 {
    let sum: f64 = data
        .iter()
        .map(|s| {
            let [g, b] = net.predict(s.acceleration);
            (g - s.gas).powi(2) + (b - s.brake).powi(2)
        })
        .sum();
    sum / (2 * data.len()) as f64
}

/// Accumulates the gradient of the summed squared error over `batch` and
/// returns that sum.
pub fn prenet_batch_grad(net: &PreNet, batch: &[ActuationSample], grad: &mut [f64]) -> f64 {
    let mut sse = 0.0;
    for s in batch {
        let x = [s.acceleration * net.input_scale];
        let y = net.net.forward(&x);
        let e = [y[0] - s.gas, y[1] - s.brake];
        sse += e[0] * e[0] + e[1] * e[1];
        net.net.accumulate_grad(&x, &[2.0 * e[0], 2.0 * e[1]], grad);
    }
    sse
}

/// Mini-batch Adam on the MSE between predicted and recorded pedals.
pub fn train_prenet(data: &[ActuationSample], init: PreNet, cfg: &PrenetTrainConfig) -> Result<PrenetFit> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("prenet training needs at least one sample".into()));
    }
    if cfg.epochs == 0 || cfg.batch == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidConfig("epochs, batch and lr must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = init;
    let mut checkpoint = net.clone();
    let mut adam = Adam::new(net.net.num_params());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut grad = vec![0.0; net.net.num_params()];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<ActuationSample> = chunk.iter().map(|&i| data[i]).collect();
            grad.iter_mut().for_each(|g| *g = 0.0);
            sse += prenet_batch_grad(&net, &batch, &mut grad);
            let scale = 1.0 / (2 * batch.len()) as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut net.net.params, &grad, cfg);
        }
        let loss = sse / (2 * data.len()) as f64;
        if !loss.is_finite() || net.net.params.iter().any(|p| !p.is_finite()) {
            return Ok(PrenetFit { net: checkpoint, losses, non_finite_epoch: Some(epoch) });
        }
        losses.push(loss);
        checkpoint = net.clone();
    }
    Ok(PrenetFit { net, losses, non_finite_epoch: None })
}

/// Acceleration the actuator settles at under a held pedal pair.
pub fn steady_state_accel(actuator: &ActuatorParams, gas: f64, brake: f64, dt: f64) -> Result<f64> {
    let mut act = ActuatorState::default();
    let steps = if actuator.tau > 0.0 { (40.0 * actuator.tau / dt).ceil() as usize } else { 1 };
    for _ in 0..steps.max(1) {
        act = actuator_step(&act, actuator, gas, brake, dt)?;
    }
    Ok(act.accel)
}

/// Mean absolute error between commanded and reproduced steady-state
/// acceleration.
pub fn round_trip_mae(net: &PreNet, actuator: &ActuatorParams, commands: &[f64], dt: f64) -> Result<f64> {
    let mut total = 0.0;
    for &a in commands {
        let (g, b) = net.accel_to_action(a);
        total += (steady_state_accel(actuator, g, b, dt)? - a).abs();
    }
    Ok(total / commands.len().max(1) as f64)
}

pub fn write_dataset(path: &Path, data: &[ActuationSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in data {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<ActuationSample>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}
