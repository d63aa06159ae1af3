//! Meeting-time gradients, the W-map and its Jacobian, bivalued jump
//! matrices and periodic variational branches.
//!
//! At a transversal point of `Γ` the W-map Jacobian is
//! `W_x = (f(x) − f(J(x)))∇τᵀ + I_x(E + f∇τᵀ)`, which is the saltation
//! matrix minus the identity.
//!
//! At a grazing point `∇τ` is unbounded and so is `W_x` (the flow-back time
//! has a square-root singularity, which only moves the phase). The grazing
//! limit replaces the divergent phase column: `E + D = M₀ + f(x*)ℓᵀ` with
//! `M₀ = lim J_x(x̄)(E + f(x̄)∇τ(x̄)ᵀ)` over transversal hit points `x̄ → x*`
//! and `ℓ = f/|f|²`. Floquet multipliers do not depend on the choice of `ℓ`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graze::{PointType, Side};
use crate::integrate::{first_meeting, flow, simulate, DiscontinuityEvent, SimOptions, Trajectory};
use crate::system::{Matrix, StateVec, SystemDef};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinOptions {
    pub sim: SimOptions,
    /// Agreement required between directional limits and the FD check.
    pub a2_tol: f64,
    pub deltas: [f64; 3],
    pub fan: usize,
    /// Meeting-time horizon used when no cycle fixes it.
    pub horizon: f64,
    pub max_branch_events: usize,
    /// Step of the one-sided difference in the grazing cross-check.
    pub fd_step: f64,
}

impl Default for LinOptions {
    fn default() -> Self {
        LinOptions {
            sim: SimOptions::default(),
            a2_tol: 1e-3,
            deltas: [1e-2, 1e-3, 1e-4],
            fan: 32,
            horizon: 1.0,
            max_branch_events: 8,
            fd_step: 1e-6,
        }
    }
}

/// `∇τ = −∇Φ / ⟨∇Φ, f⟩` at a point of patch `index`.
pub fn grad_tau(sys: &SystemDef, x: &StateVec, index: usize, opts: &SimOptions) -> Result<StateVec> {
    let grad = sys.patch(index).grad_at(x);
    let f = sys.field(x);
    let ip = grad.dot(&f);
    if ip.abs() <= opts.graze_rel_tol * grad.norm() * f.norm() {
        return Err(Error::SingularTau { point: x.iter().copied().collect() });
    }
    Ok(-grad / ip)
}

/// Nearest meeting of the solution through `(θ, x)` with a patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Meeting {
    pub index: usize,
    pub tau: f64,
    pub point: StateVec,
    pub tangential: bool,
}

/// Search both time directions up to `horizon` for the nearest meeting with
/// patch `patch` (or any patch). A meeting only found between one and two
/// horizons away violates the meeting-time bound.
pub fn nearest_meeting(
    sys: &SystemDef,
    x: &StateVec,
    theta: f64,
    patch: Option<usize>,
    horizon: f64,
    opts: &SimOptions,
) -> Result<Option<Meeting>> {
    let search = |h: f64| -> Result<Option<Meeting>> {
        let mut best: Option<Meeting> = None;
        let indices: Vec<usize> = match patch {
            Some(i) => vec![i],
            None => (0..sys.discontinuities.len()).collect(),
        };
        for i in indices {
            let p = sys.patch(i);
            for t_lim in [theta + h, theta - h] {
                if let Some(hit) = first_meeting(sys, p, x, theta, t_lim, opts)? {
                    if best.as_ref().is_none_or(|b| (hit.tau - theta).abs() < (b.tau - theta).abs()) {
                        best = Some(Meeting { index: i, tau: hit.tau, point: hit.x, tangential: hit.tangential });
                    }
                }
            }
        }
        Ok(best)
    };
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::A3Violation { horizon });
    }
    if let Some(m) = search(horizon)? {
        return Ok(Some(m));
    }
    if search(2.0 * horizon)?.is_some() {
        return Err(Error::A3Violation { horizon });
    }
    Ok(None)
}

/// `W(x) = ψ(θ) − x`: flow to the meeting, jump, flow back to `θ`. Zero when
/// the solution does not meet the surface near `θ`.
pub fn w_map(sys: &SystemDef, x: &StateVec, theta: f64, patch: Option<usize>, horizon: f64, opts: &SimOptions) -> Result<StateVec> {
    match nearest_meeting(sys, x, theta, patch, horizon, opts)? {
        None => Ok(StateVec::zeros(x.len())),
        Some(m) => {
            let post = sys.jump(m.index).apply(&m.point);
            let back = flow(sys, &post, m.tau, theta, opts)?;
            Ok(back - x)
        }
    }
}

/// Saltation matrix `S = J_x(E + f∇τᵀ) − f(J(x))∇τᵀ` at a transversal point.
pub fn saltation(sys: &SystemDef, x: &StateVec, index: usize, opts: &SimOptions) -> Result<Matrix> {
    let gt = grad_tau(sys, x, index, opts)?;
    let n = x.len();
    let f = sys.field(x);
    let jump = sys.jump(index);
    let jx = jump.jacobian(x);
    let f_post = sys.field(&jump.apply(x));
    let proj = Matrix::identity(n, n) + &f * gt.transpose();
    Ok(jx * proj - f_post * gt.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WMode {
    TransversalAnalytic,
    GrazingLimit,
    FiniteDifferenceCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum A2Status {
    NotRequired,
    Verified { tolerance: f64, directional_spread: f64, fd_defect: f64, directions: usize },
    Failed { witness: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WJacobianResult {
    pub matrix: Matrix,
    pub mode: WMode,
    pub condition_a2: A2Status,
}

/// Jacobian of the W-map at a point `x` of patch `index`.
pub fn w_jacobian(sys: &SystemDef, x: &StateVec, theta: f64, index: usize, horizon: f64, opts: &LinOptions) -> Result<WJacobianResult> {
    let patch = sys.patch(index);
    if patch.phi_at(x).abs() > opts.sim.graze_phi_tol || !(patch.contains)(x, opts.sim.boundary_tol) {
        return Err(Error::NotOnSurface { point: x.iter().copied().collect() });
    }
    let n = x.len();
    match saltation(sys, x, index, &opts.sim) {
        Ok(s) => Ok(WJacobianResult {
            matrix: s - Matrix::identity(n, n),
            mode: WMode::TransversalAnalytic,
            condition_a2: A2Status::NotRequired,
        }),
        Err(Error::SingularTau { .. }) => grazing_limit(sys, x, theta, index, horizon, opts),
        Err(e) => Err(e),
    }
}

/// Central finite differences of `w_map` (used as an independent check).
pub fn w_jacobian_fd(sys: &SystemDef, x: &StateVec, theta: f64, index: usize, horizon: f64, h: f64, opts: &SimOptions) -> Result<WJacobianResult> {
    let n = x.len();
    let mut m = Matrix::zeros(n, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let wp = w_map(sys, &xp, theta, Some(index), horizon, opts)?;
        let wm = w_map(sys, &xm, theta, Some(index), horizon, opts)?;
        m.set_column(j, &((wp - wm) / (2.0 * h)));
    }
    Ok(WJacobianResult { matrix: m, mode: WMode::FiniteDifferenceCheck, condition_a2: A2Status::NotRequired })
}

fn fan_directions(f: &StateVec, grad: &StateVec, count: usize) -> Vec<StateVec> {
    let n = f.len();
    let u1 = f.normalize();
    let w = grad - &u1 * grad.dot(&u1);
    let mut dirs = Vec::new();
    if w.norm() > 0.0 {
        let u2 = w.normalize();
        for k in 0..count {
            let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            dirs.push(&u1 * a.cos() + &u2 * a.sin());
        }
    }
    if n > 2 {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..count {
            let v = StateVec::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
            dirs.push(v.normalize());
        }
    }
    dirs
}

/// Value at `σ = 0` of the quadratic through three samples `(σ_k, y_k)`.
fn extrapolate_zero(s: [f64; 3], y: [&Matrix; 3]) -> Matrix {
    let l0 = s[1] * s[2] / ((s[0] - s[1]) * (s[0] - s[2]));
    let l1 = s[0] * s[2] / ((s[1] - s[0]) * (s[1] - s[2]));
    let l2 = s[0] * s[1] / ((s[2] - s[0]) * (s[2] - s[1]));
    y[0] * l0 + y[1] * l1 + y[2] * l2
}

struct Directional {
    direction: StateVec,
    limit: Matrix,
}

fn grazing_limit(sys: &SystemDef, x_star: &StateVec, theta: f64, index: usize, horizon: f64, opts: &LinOptions) -> Result<WJacobianResult> {
    let n = x_star.len();
    let f_star = sys.field(x_star);
    let grad = sys.patch(index).grad_at(x_star);
    if f_star.norm() == 0.0 {
        return Err(Error::SingularTau { point: x_star.iter().copied().collect() });
    }
    let jump = sys.jump(index);
    let sim = &opts.sim;

    let dirs = fan_directions(&f_star, &grad, opts.fan);
    let candidates: Vec<Option<Directional>> = dirs
        .par_iter()
        .map(|v| -> Result<Option<Directional>> {
            let mut sig = [0.0; 3];
            let mut mats = Vec::with_capacity(3);
            for (k, &d) in opts.deltas.iter().enumerate() {
                let x0 = x_star + v * d;
                let Some(m) = nearest_meeting(sys, &x0, theta, Some(index), horizon, sim)? else {
                    return Ok(None);
                };
                let Ok(gt) = grad_tau(sys, &m.point, index, sim) else {
                    return Ok(None);
                };
                let proj = Matrix::identity(n, n) + sys.field(&m.point) * gt.transpose();
                mats.push(jump.jacobian(&m.point) * proj);
                sig[k] = (&m.point - x_star).norm();
            }
            if sig[0] == sig[1] || sig[1] == sig[2] || sig[0] == sig[2] {
                return Ok(None);
            }
            Ok(Some(Directional { direction: v.clone(), limit: extrapolate_zero(sig, [&mats[0], &mats[1], &mats[2]]) }))
        })
        .collect::<Result<Vec<_>>>()?;
    let admissible: Vec<Directional> = candidates.into_iter().flatten().collect();
    if admissible.is_empty() {
        return Ok(WJacobianResult {
            matrix: Matrix::zeros(n, n),
            mode: WMode::GrazingLimit,
            condition_a2: A2Status::Failed { witness: "no direction of the fan produces transversal meetings".into() },
        });
    }

    let mut spread: f64 = 0.0;
    let mut witness = None;
    for a in 0..admissible.len() {
        for b in a + 1..admissible.len() {
            let d = (&admissible[a].limit - &admissible[b].limit).amax();
            if d > spread {
                spread = d;
                witness = Some((a, b));
            }
        }
    }
    let m0 = admissible.iter().fold(Matrix::zeros(n, n), |acc, d| acc + &d.limit) / admissible.len() as f64;
    let ell = &f_star / f_star.norm_squared();
    let e_plus_d = &m0 + &f_star * ell.transpose();

    // one-sided differences of Q(x) = J(x̄(x)), projected off f(x*)
    let fhat = f_star.normalize();
    let p = Matrix::identity(n, n) - &fhat * fhat.transpose();
    let q_star = jump.apply(x_star);
    let mut fd_defect: f64 = 0.0;
    for d in &admissible {
        let x0 = x_star + &d.direction * opts.fd_step;
        let Some(m) = nearest_meeting(sys, &x0, theta, Some(index), horizon, sim)? else {
            continue;
        };
        let q = jump.apply(&m.point);
        let fd = (q - &q_star) / opts.fd_step;
        let predicted = &e_plus_d * &d.direction;
        fd_defect = fd_defect.max((&p * (fd - predicted)).amax());
    }

    let condition_a2 = if spread <= opts.a2_tol && fd_defect <= opts.a2_tol {
        A2Status::Verified { tolerance: opts.a2_tol, directional_spread: spread, fd_defect, directions: admissible.len() }
    } else {
        let detail = match witness {
            Some((a, b)) if spread > opts.a2_tol => format!(
                "directional limits along {:?} and {:?} differ by {spread:e}",
                admissible[a].direction.as_slice(),
                admissible[b].direction.as_slice()
            ),
            _ => format!("finite-difference cross-check differs by {fd_defect:e}"),
        };
        A2Status::Failed { witness: detail }
    };
    Ok(WJacobianResult { matrix: e_plus_d - Matrix::identity(n, n), mode: WMode::GrazingLimit, condition_a2 })
}

/// Branch label of a bivalued point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchChoice {
    N1,
    N2,
}

/// Linearized jump matrix `B_i` of an event: `W_x` at α points; the zero
/// matrix on branch N1 and `W_x` on branch N2 at β/γ points.
pub fn b_matrix(sys: &SystemDef, event: &DiscontinuityEvent, branch: BranchChoice, horizon: f64, opts: &LinOptions) -> Result<(Matrix, WMode, A2Status)> {
    let n = event.pre_state.len();
    if event.point_type.is_bivalued() && branch == BranchChoice::N1 {
        return Ok((Matrix::zeros(n, n), WMode::TransversalAnalytic, A2Status::NotRequired));
    }
    let w = w_jacobian(sys, &event.pre_state, event.theta, event.patch_index, horizon, opts)?;
    if let A2Status::Failed { witness } = &w.condition_a2 {
        return Err(Error::A2Failed { detail: witness.clone() });
    }
    Ok((w.matrix, w.mode, w.condition_a2))
}

/// A cycle sampled once over `[0, ω]`, shared by all of its branches.
#[derive(Debug, Clone)]
pub struct CycleData {
    pub sys: SystemDef,
    pub zeta: StateVec,
    pub period: f64,
    pub traj: Trajectory,
}

impl CycleData {
    pub fn new(sys: &SystemDef, zeta: &StateVec, period: f64, opts: &SimOptions) -> Result<Self> {
        let traj = simulate(sys, zeta, 0.0, period, opts)?;
        Ok(CycleData { sys: sys.clone(), zeta: zeta.clone(), period, traj })
    }

    /// `A(t) = ∂f/∂x` along the periodic extension of the cycle; inside arc
    /// `k` (clamped to it) so jump instants use the matching one-sided state.
    pub fn a_on_arc(&self, arc: usize, t: f64) -> Matrix {
        let a = &self.traj.arcs[arc];
        self.sys.jacobian(&a.state_at(t.clamp(a.t_start, a.t_end)))
    }

    pub fn a_of_t(&self, t: f64) -> Matrix {
        let s = t.rem_euclid(self.period);
        self.sys.jacobian(&self.traj.state_after(s))
    }

    /// Meeting-time horizon `0.9·min(θ_{i+1} − θ_i)` over the periodic event set.
    pub fn horizon(&self) -> f64 {
        let th: Vec<f64> = self.traj.events.iter().map(|e| e.theta).collect();
        if th.len() < 2 {
            return 0.9 * self.period;
        }
        let mut gap = th[0] + self.period - th[th.len() - 1];
        for w in th.windows(2) {
            gap = gap.min(w[1] - w[0]);
        }
        0.9 * gap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchJump {
    pub theta: f64,
    pub patch: String,
    pub point_type: PointType,
    pub choice: Option<BranchChoice>,
    pub matrix: Matrix,
    pub mode: WMode,
    pub condition_a2: A2Status,
}

/// One periodic linear impulsive system `u' = A(t)u`, `Δu = D_i u` at `θ_i`.
#[derive(Debug, Clone)]
pub struct VariationalBranch {
    pub branch_id: usize,
    pub cycle: Arc<CycleData>,
    /// Jumps in `(0, ω]`, in time order.
    pub jumps: Vec<BranchJump>,
}

impl VariationalBranch {
    pub fn period(&self) -> f64 {
        self.cycle.period
    }

    pub fn p(&self) -> usize {
        self.jumps.len()
    }

    pub fn jump_times(&self) -> Vec<f64> {
        self.jumps.iter().map(|j| j.theta).collect()
    }

    pub fn jump_matrices(&self) -> Vec<Matrix> {
        self.jumps.iter().map(|j| j.matrix.clone()).collect()
    }

    /// `D_i` for any integer shift of the period (`D_{i+p} = D_i`).
    pub fn jump_matrix(&self, i: isize) -> &Matrix {
        let p = self.jumps.len() as isize;
        &self.jumps[i.rem_euclid(p) as usize].matrix
    }

    pub fn a_of_t(&self, t: f64) -> Matrix {
        self.cycle.a_of_t(t)
    }

    pub fn label(&self) -> String {
        self.jumps
            .iter()
            .filter_map(|j| j.choice.map(|c| format!("{}:{:?}", j.patch, c)))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// All variational branches of the cycle through `zeta`: one per assignment
/// of N1/N2 to its β/γ events.
pub fn assemble_branches(sys: &SystemDef, zeta: &StateVec, period: f64, opts: &LinOptions) -> Result<Vec<VariationalBranch>> {
    let cycle = Arc::new(CycleData::new(sys, zeta, period, &opts.sim)?);
    assemble_on(cycle, opts)
}

pub fn assemble_on(cycle: Arc<CycleData>, opts: &LinOptions) -> Result<Vec<VariationalBranch>> {
    let events = &cycle.traj.events;
    let bivalued: Vec<usize> = (0..events.len()).filter(|&i| events[i].point_type.is_bivalued()).collect();
    let l = bivalued.len();
    if l > opts.max_branch_events {
        return Err(Error::BranchBudget { count: l, max: opts.max_branch_events });
    }
    let horizon = cycle.horizon();
    let sys = &cycle.sys;

    // each distinct (event, choice) matrix is computed once
    let mut single: Vec<Option<(Matrix, WMode, A2Status)>> = Vec::new();
    for e in events.iter() {
        single.push(if e.point_type.is_bivalued() {
            None
        } else {
            Some(b_matrix(sys, e, BranchChoice::N2, horizon, opts)?)
        });
    }
    let mut on_n2: Vec<Option<(Matrix, WMode, A2Status)>> = vec![None; events.len()];
    for &i in &bivalued {
        on_n2[i] = Some(b_matrix(sys, &events[i], BranchChoice::N2, horizon, opts)?);
    }

    let n = cycle.zeta.len();
    let mut branches = Vec::with_capacity(1 << l);
    for mask in 0..(1usize << l) {
        let mut jumps = Vec::with_capacity(events.len());
        for (i, e) in events.iter().enumerate() {
            let (choice, (matrix, mode, a2)) = match bivalued.iter().position(|&b| b == i) {
                None => (None, single[i].clone().expect("single-valued matrix computed")),
                Some(bit) => {
                    if mask & (1 << bit) == 0 {
                        (Some(BranchChoice::N1), (Matrix::zeros(n, n), WMode::TransversalAnalytic, A2Status::NotRequired))
                    } else {
                        (Some(BranchChoice::N2), on_n2[i].clone().expect("bivalued matrix computed"))
                    }
                }
            };
            jumps.push(BranchJump {
                theta: e.theta,
                patch: e.patch.clone(),
                point_type: e.point_type,
                choice,
                matrix,
                mode,
                condition_a2: a2,
            });
        }
        branches.push(VariationalBranch { branch_id: mask + 1, cycle: cycle.clone(), jumps });
    }
    Ok(branches)
}

/// Classification side used for cycle events (always forward).
pub const CYCLE_SIDE: Side = Side::Forward;
