//! Planning and tracking in normal-form coordinates.
//!
//! The linearized car is two decoupled double integrators
//! `ξ̇ = A′ξ + B′v` with `ξ = (x, ẋ, y, ẏ)`. Plans come from a condensed,
//! box-constrained finite-horizon LQR QP over the exact discretization; the
//! tracker is the continuous-time LQR gain on `(A′, B′)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linearize::{LinearState, VirtualInput};
use crate::numerics::{lqr_gain, solve_qp, Mat, QpProblem};

/// Continuous and discrete normal-form matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub a_prime: Mat,
    pub b_prime: Mat,
    pub c_prime: Mat,
    pub abar: Mat,
    pub bbar: Mat,
    pub dt: f64,
}

pub fn normal_form_a() -> Mat {
    Mat::from_rows(&[
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, 0.0],
    ])
}

pub fn normal_form_b() -> Mat {
    Mat::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
}

pub fn normal_form_c() -> Mat {
    Mat::from_rows(&[[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
}

/// Exact zero-order-hold discretization of the normal form:
/// per axis `[[1, dt], [0, 1]]` and `[dt²/2, dt]ᵀ`.
pub fn discretize(dt: f64) -> (Mat, Mat) {
    let a = Mat::from_rows(&[[1.0, dt], [0.0, 1.0]]);
    let b = Mat::from_rows(&[[0.5 * dt * dt], [dt]]);
    (Mat::block_diag(&[&a, &a]), Mat::block_diag(&[&b, &b]))
}

impl LinearModel {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
        }
        let (abar, bbar) = discretize(dt);
        Ok(Self {
            a_prime: normal_form_a(),
            b_prime: normal_form_b(),
            c_prime: normal_form_c(),
            abar,
            bbar,
            dt,
        })
    }

    /// `Ā ξ + B̄ v`.
    pub fn step(&self, xi: &LinearState, v: &VirtualInput) -> LinearState {
        let ax = self.abar.matvec(&xi.0);
        let bv = self.bbar.matvec(&v.0);
        LinearState(std::array::from_fn(|i| ax[i] + bv[i]))
    }
}

/// Interior position constraint `(x, y)` at a step index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub step: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanSettings {
    /// Number of planned states, including both endpoints.
    pub n: usize,
    pub q: Mat,
    pub r: Mat,
    pub qf: Mat,
    /// Infinity-norm bound on every virtual input.
    pub v_bnds: f64,
    pub dt: f64,
    pub waypoints: Vec<Waypoint>,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
}

impl PlanSettings {
    pub fn new(n: usize, dt: f64) -> Self {
        Self {
            n,
            q: Mat::zeros(4, 4),
            r: Mat::identity(2),
            qf: Mat::zeros(4, 4),
            v_bnds: 10.0,
            dt,
            waypoints: Vec::new(),
            qp_tol: 1e-9,
            qp_max_iter: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub states: Vec<LinearState>,
    pub inputs: Vec<VirtualInput>,
    pub objective: f64,
    pub eq_residual: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl PlanResult {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `max_k ‖ξ_{k+1} − Āξ_k − B̄v_k‖∞`.
    pub fn dynamics_residual(&self, model: &LinearModel) -> f64 {
        self.inputs
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let pred = model.step(&self.states[k], v);
                pred.sub(&self.states[k + 1])
                    .iter()
                    .fold(0.0f64, |m, d| m.max(d.abs()))
            })
            .fold(0.0, f64::max)
    }

    pub fn max_input(&self) -> f64 {
        self.inputs
            .iter()
            .flat_map(|v| v.0)
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn quad(q: &Mat, x: &[f64]) -> f64 {
    x.iter().zip(q.matvec(x)).map(|(a, b)| a * b).sum()
}

/// `Σₖ ξₖᵀQξₖ + Σₖ vₖᵀRvₖ + ξ_{N−1}ᵀQ_f ξ_{N−1}`.
pub fn plan_objective(states: &[LinearState], inputs: &[VirtualInput], s: &PlanSettings) -> f64 {
    let state_cost: f64 = states.iter().map(|x| quad(&s.q, &x.0)).sum();
    let input_cost: f64 = inputs.iter().map(|v| quad(&s.r, &v.0)).sum();
    let terminal = states.last().map_or(0.0, |x| quad(&s.qf, &x.0));
    state_cost + input_cost + terminal
}

fn check_settings(s: &PlanSettings) -> Result<()> {
    if s.n < 2 {
        return Err(Error::InvalidConfig(format!("horizon needs at least 2 states, got {}", s.n)));
    }
    if (s.q.rows(), s.q.cols()) != (4, 4)
        || (s.qf.rows(), s.qf.cols()) != (4, 4)
        || (s.r.rows(), s.r.cols()) != (2, 2)
    {
        return Err(Error::Dimension("planner weights must be 4x4 (Q, Qf) and 2x2 (R)".into()));
    }
    if !(s.v_bnds > 0.0) {
        return Err(Error::InvalidConfig("v_bnds must be positive".into()));
    }
    for w in &s.waypoints {
        if w.step == 0 || w.step >= s.n - 1 {
            return Err(Error::InvalidConfig(format!(
                "waypoint step {} must be interior to the horizon",
                w.step
            )));
        }
    }
    Ok(())
}

/// Condensed QP: decision variables are the stacked inputs
/// `z = (v₀, …, v_{N−2})` and states are eliminated through
/// `ξₖ = Āᵏξ₀ + Σ_{j<k} Ā^{k−1−j}B̄ vⱼ`.
fn condense(x0: &LinearState, xf: &LinearState, s: &PlanSettings, model: &LinearModel) -> QpProblem {
    let steps = s.n - 1;
    let nz = 2 * steps;
    // reach[j] = Ā^j B̄ (4x2), free[k] = Āᵏ ξ₀.
    let mut reach = Vec::with_capacity(steps);
    let mut m = model.bbar.clone();
    for _ in 0..steps {
        reach.push(m.clone());
        m = model.abar.matmul(&m);
    }
    let mut free = Vec::with_capacity(s.n);
    let mut x = x0.0.to_vec();
    for _ in 0..s.n {
        free.push(x.clone());
        x = model.abar.matvec(&x);
    }

    let mut h = Mat::zeros(nz, nz);
    let mut f = vec![0.0; nz];
    let has_state_cost = s.q.max_abs() > 0.0 || s.qf.max_abs() > 0.0;
    if has_state_cost {
        let q_at = |k: usize| if k == s.n - 1 { s.q.add(&s.qf) } else { s.q.clone() };
        // Block (i, j), i ≤ j, d = j − i: Σ_{k=j+1}^{N−1} reach[k−1−i]ᵀ Q_k reach[k−1−j].
        for d in 0..steps {
            let mut acc = Mat::zeros(2, 2);
            // t = k − 1 − j runs 0..=N−2−j; accumulate in t and emit block
            // (i, j) with j = N−2−t.
            let q_mid = s.q.clone();
            let q_end = q_at(s.n - 1);
            let mut partial: Vec<Mat> = Vec::with_capacity(steps - d);
            for t in 0..steps - d {
                acc = acc.add(&reach[t + d].transpose().matmul(&q_mid).matmul(&reach[t]));
                partial.push(acc.clone());
            }
            for j in d..steps {
                let i = j - d;
                let last = steps - 1 - j;
                // Replace the final Q by Q + Qf at the terminal state.
                let mut blk = partial[last].clone();
                let corr = reach[last + d]
                    .transpose()
                    .matmul(&q_end.sub(&q_mid))
                    .matmul(&reach[last]);
                blk = blk.add(&corr);
                for a in 0..2 {
                    for b in 0..2 {
                        h[(2 * i + a, 2 * j + b)] = 2.0 * blk[(a, b)];
                        h[(2 * j + b, 2 * i + a)] = 2.0 * blk[(a, b)];
                    }
                }
            }
        }
        for i in 0..steps {
            let mut g = [0.0; 2];
            for k in i + 1..s.n {
                let qx = q_at(k).matvec(&free[k]);
                let col = reach[k - 1 - i].transpose().matvec(&qx);
                g[0] += col[0];
                g[1] += col[1];
            }
            f[2 * i] = 2.0 * g[0];
            f[2 * i + 1] = 2.0 * g[1];
        }
    }
    for i in 0..steps {
        for a in 0..2 {
            for b in 0..2 {
                h[(2 * i + a, 2 * i + b)] += 2.0 * s.r[(a, b)];
            }
        }
    }
    // Symmetrize against round-off in the accumulated blocks.
    let h = h.symmetrize();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs = Vec::new();
    for w in &s.waypoints {
        for (axis, target) in [(0usize, w.x), (2usize, w.y)] {
            let mut row = vec![0.0; nz];
            for j in 0..w.step {
                let blk = &reach[w.step - 1 - j];
                row[2 * j] = blk[(axis, 0)];
                row[2 * j + 1] = blk[(axis, 1)];
            }
            rows.push(row);
            rhs.push(target - free[w.step][axis]);
        }
    }
    for r in 0..4 {
        let mut row = vec![0.0; nz];
        for j in 0..steps {
            let blk = &reach[steps - 1 - j];
            row[2 * j] = blk[(r, 0)];
            row[2 * j + 1] = blk[(r, 1)];
        }
        rows.push(row);
        rhs.push(xf.0[r] - free[steps][r]);
    }
    let aeq = Mat::from_row_major(rows.len(), nz, rows.concat()).expect("finite rows");
    QpProblem {
        h,
        f,
        aeq,
        beq: rhs,
        lb: vec![-s.v_bnds; nz],
        ub: vec![s.v_bnds; nz],
    }
}

/// Necessary condition for reachability: each equality row `aᵢᵀz = bᵢ`
/// needs `‖z‖∞ ≥ |bᵢ| / ‖aᵢ‖₁`.
fn check_reachable(p: &QpProblem, v_bnds: f64) -> Result<()> {
    for i in 0..p.aeq.rows() {
        let l1: f64 = p.aeq.row(i).iter().map(|v| v.abs()).sum();
        let b = p.beq[i].abs();
        let needed = if l1 > 0.0 { b / l1 } else if b > 0.0 { f64::INFINITY } else { 0.0 };
        if needed > v_bnds * (1.0 + 1e-12) {
            return Err(Error::Infeasible(format!(
                "endpoint unreachable: needs |v| >= {needed:.6e} but v_bnds = {v_bnds:.6e}"
            )));
        }
    }
    Ok(())
}

/// Fixed-endpoint, input-bounded finite-horizon LQR plan from `x0` to `xf`.
pub fn plan(x0: &LinearState, xf: &LinearState, s: &PlanSettings) -> Result<PlanResult> {
    check_settings(s)?;
    let model = LinearModel::new(s.dt)?;
    let qp = condense(x0, xf, s, &model);
    check_reachable(&qp, s.v_bnds)?;
    let sol = solve_qp(&qp, s.qp_tol, s.qp_max_iter)?;

    let inputs: Vec<VirtualInput> = sol
        .z
        .chunks_exact(2)
        .map(|c| VirtualInput::new(c[0], c[1]))
        .collect();
    let mut states = Vec::with_capacity(s.n);
    states.push(*x0);
    for v in &inputs {
        let next = model.step(states.last().unwrap(), v);
        states.push(next);
    }
    let terminal_gap = states[s.n - 1]
        .sub(xf)
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()));
    if terminal_gap > 1e-8 * (1.0 + xf.norm()) {
        return Err(Error::Infeasible(format!("terminal gap {terminal_gap:e} after solve")));
    }
    states[s.n - 1] = *xf;
    let objective = plan_objective(&states, &inputs, s);
    Ok(PlanResult {
        states,
        inputs,
        objective,
        eq_residual: sol.eq_residual,
        kkt_residual: sol.kkt_residual,
        iterations: sol.iterations,
    })
}

/// Continuous-time LQR tracking gain `F = R⁻¹B′ᵀP` (2x4).
pub fn tracker_gain(q: &Mat, r: &Mat) -> Result<Mat> {
    lqr_gain(&normal_form_a(), &normal_form_b(), q, r)
}

/// `v = v_ref − F (ξ − ξ_ref)`.
pub fn track(xi: &LinearState, xi_ref: &LinearState, v_ref: &VirtualInput, gain: &Mat) -> VirtualInput {
    let err = xi.sub(xi_ref);
    let fe = gain.matvec(&err);
    VirtualInput::new(v_ref.0[0] - fe[0], v_ref.0[1] - fe[1])
}
