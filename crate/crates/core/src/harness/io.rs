use std::fs::File;
use std::path::Path;

use csv::Writer;

use crate::error::Result;
use crate::learn::{CurvePoint, EpisodeRecord};
use crate::linearize::extract_linear_state;
use crate::planner::PlanResult;

fn f(v: f64) -> String {
    format!("{v}")
}

fn writer(path: &Path) -> Result<Writer<File>> {
    Ok(Writer::from_path(path)?)
}

pub const PLAN_COLUMNS: [&str; 8] = ["k", "t", "x", "xdot", "y", "ydot", "v1", "v2"];

/// One row per planned state; the last row has no input.
pub fn write_plan(path: &Path, plan: &PlanResult, dt: f64) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(PLAN_COLUMNS)?;
    for (k, s) in plan.states.iter().enumerate() {
        let (v1, v2) = plan
            .inputs
            .get(k)
            .map_or((String::new(), String::new()), |v| (f(v.0[0]), f(v.0[1])));
        w.write_record([
            k.to_string(),
            f(k as f64 * dt),
            f(s.0[0]),
            f(s.0[1]),
            f(s.0[2]),
            f(s.0[3]),
            v1,
            v2,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const EPISODE_COLUMNS: [&str; 17] = [
    "k", "t", "x", "y", "psi", "v", "beta", "xi_x", "xi_xdot", "xi_y", "xi_ydot", "v1", "v2", "a", "b",
    "reward", "loss",
];

/// One row per step plus a final state-only row.
pub fn write_episode(path: &Path, rec: &EpisodeRecord, dt: f64) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(EPISODE_COLUMNS)?;
    for s in &rec.steps {
        let st = s.state;
        w.write_record([
            s.k.to_string(),
            f(s.t),
            f(st.x),
            f(st.y),
            f(st.psi),
            f(st.v),
            f(st.beta),
            f(s.xi.0[0]),
            f(s.xi.0[1]),
            f(s.xi.0[2]),
            f(s.xi.0[3]),
            f(s.v.0[0]),
            f(s.v.0[1]),
            f(s.u.a),
            f(s.u.b),
            f(s.reward),
            f(s.loss),
        ])?;
    }
    let k = rec.steps.len();
    let st = rec.final_state;
    let xi = extract_linear_state(&st);
    let mut last = vec![
        k.to_string(),
        f(k as f64 * dt),
        f(st.x),
        f(st.y),
        f(st.psi),
        f(st.v),
        f(st.beta),
        f(xi.0[0]),
        f(xi.0[1]),
        f(xi.0[2]),
        f(xi.0[3]),
    ];
    last.resize(EPISODE_COLUMNS.len(), String::new());
    w.write_record(&last)?;
    w.flush()?;
    Ok(())
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["epoch", "mean_return", "best_return", "mean_pointwise_loss", "step_size"])?;
    for p in curve {
        w.write_record([
            p.epoch.to_string(),
            f(p.mean_return),
            f(p.best_return),
            f(p.mean_pointwise_loss),
            f(p.step_size),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_losses(path: &Path, losses: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["epoch", "mse"])?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), f(*l)])?;
    }
    w.flush()?;
    Ok(())
}

/// Planned, baseline and learned positions side by side.
pub fn write_comparison(
    path: &Path,
    plan: &PlanResult,
    baseline: Option<&EpisodeRecord>,
    learned: Option<&EpisodeRecord>,
    dt: f64,
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["k", "t", "plan_x", "plan_y", "baseline_x", "baseline_y", "learned_x", "learned_y"])?;
    let pos = |rec: Option<&EpisodeRecord>, k: usize| -> (String, String) {
        rec.and_then(|r| {
            if k < r.steps.len() {
                Some((r.steps[k].state.x, r.steps[k].state.y))
            } else if k == r.steps.len() {
                Some((r.final_state.x, r.final_state.y))
            } else {
                None
            }
        })
        .map_or((String::new(), String::new()), |(x, y)| (f(x), f(y)))
    };
    for (k, s) in plan.states.iter().enumerate() {
        let (bx, by) = pos(baseline, k);
        let (lx, ly) = pos(learned, k);
        w.write_record([k.to_string(), f(k as f64 * dt), f(s.0[0]), f(s.0[2]), bx, by, lx, ly])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}
