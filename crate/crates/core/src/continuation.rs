//! Periodic orbits of perturbed systems by damped Newton on the Poincaré
//! residual, and bifurcation scans over the parameter.
//!
//! Unknowns are the period `T` and the free coordinates of `ζ`; one
//! coordinate `ζ_j` is pinned. The residual `S = x(T, ζ) − ζ` is
//! discontinuous across changes of the event signature, so Jacobian probes
//! and line-search trials are locked to the event count of the seed.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::{monodromy, transition_matrix, stability_verdict, MonodromyResult, StabilityVerdict, DEFAULT_UNIT_TOL};
use crate::integrate::dopri::StepControl;
use crate::integrate::{simulate, SimOptions};
use crate::linearize::{assemble_on, CycleData, LinOptions, VariationalBranch};
use crate::system::{KnownCycle, Matrix, PerturbedFamily, StateVec, SystemDef};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonOptions {
    pub sim: SimOptions,
    pub tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
    pub det_floor: f64,
    /// Relative finite-difference step.
    pub fd_rel: f64,
    pub fd_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            sim: SimOptions::default(),
            tol: 1e-9,
            step_tol: 1e-10,
            max_iter: 50,
            det_floor: 1e-8,
            fd_rel: 1e-6,
            fd_halvings: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub value: StateVec,
    /// Discontinuity events on `(0, T]`, grazing contacts included.
    pub events: usize,
    /// How many of those events are grazing contacts.
    pub grazing: usize,
}

/// `S(T, ζ) = x(T; 0, ζ) − ζ`, with the post-jump state at `T`.
pub fn poincare_residual(sys: &SystemDef, period: f64, zeta: &StateVec, opts: &SimOptions) -> Result<Residual> {
    if !(period > 0.0) {
        return Err(Error::ResidualUnavailable(Box::new(Error::Invalid(format!("period {period} is not positive")))));
    }
    let tr = simulate(sys, zeta, 0.0, period, opts).map_err(|e| Error::ResidualUnavailable(Box::new(e)))?;
    let grazing = tr.count_events(|p| p.is_grazing());
    Ok(Residual { value: tr.final_state() - zeta, events: tr.events.len(), grazing })
}

/// Initial guess for Newton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub label: String,
    pub period: f64,
    pub zeta: StateVec,
    /// 0-based pinned coordinate.
    pub fixed_index: usize,
}

fn unknowns(seed_period: f64, zeta: &StateVec, j: usize) -> StateVec {
    let mut u = vec![seed_period];
    u.extend(zeta.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, v)| *v));
    StateVec::from_vec(u)
}

fn unpack(u: &StateVec, template: &StateVec, j: usize) -> (f64, StateVec) {
    let mut z = template.clone();
    let mut k = 1;
    for i in 0..z.len() {
        if i != j {
            z[i] = u[k];
            k += 1;
        }
    }
    (u[0], z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationJacobian {
    pub matrix: Matrix,
    pub det: f64,
    /// Columns that fell back to one-sided differences.
    pub one_sided: Vec<usize>,
}

/// Finite-difference Jacobian of `S` in the unknowns `(T, ζ_free)`, locked to
/// `events` per period. Each column tries central differences with up to
/// `fd_halvings` halvings, then a one-sided difference on the side that keeps
/// the signature.
pub fn continuation_jacobian(sys: &SystemDef, period: f64, zeta: &StateVec, j: usize, events: usize, opts: &NewtonOptions) -> Result<ContinuationJacobian> {
    let n = zeta.len();
    let u0 = unknowns(period, zeta, j);
    let eval = |u: &StateVec| -> Option<StateVec> {
        let (t, z) = unpack(u, zeta, j);
        match poincare_residual(sys, t, &z, &opts.sim) {
            Ok(r) if r.events == events => Some(r.value),
            _ => None,
        }
    };
    let base = eval(&u0).ok_or(Error::BranchCrossing { index: 0 })?;
    let columns: Vec<Result<(StateVec, bool)>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let h0 = opts.fd_rel * u0[k].abs().max(1.0);
            let mut h = h0;
            for _ in 0..=opts.fd_halvings {
                let mut up = u0.clone();
                let mut um = u0.clone();
                up[k] += h;
                um[k] -= h;
                if let (Some(sp), Some(sm)) = (eval(&up), eval(&um)) {
                    return Ok(((sp - sm) / (2.0 * h), false));
                }
                h *= 0.5;
            }
            for s in [1.0, -1.0] {
                let mut u = u0.clone();
                u[k] += s * h0;
                if let Some(v) = eval(&u) {
                    return Ok(((v - &base) / (s * h0), true));
                }
            }
            Err(Error::BranchCrossing { index: k })
        })
        .collect();
    let mut m = Matrix::zeros(n, n);
    let mut one_sided = Vec::new();
    for (k, c) in columns.into_iter().enumerate() {
        let (col, os) = c?;
        m.set_column(k, &col);
        if os {
            one_sided.push(k);
        }
    }
    let det = m.determinant();
    Ok(ContinuationJacobian { matrix: m, det, one_sided })
}

/// Determinant of the continuation Jacobian assembled from a monodromy
/// matrix: columns `f(ζ)` and `(U − E)e_i` for the free coordinates `i ≠ j`.
pub fn a6_from_monodromy(sys: &SystemDef, zeta: &StateVec, u: &Matrix, j: usize) -> f64 {
    let n = zeta.len();
    let mut m = Matrix::zeros(n, n);
    m.set_column(0, &sys.field(zeta));
    let ue = u - Matrix::identity(n, n);
    let mut k = 1;
    for i in 0..n {
        if i != j {
            m.set_column(k, &ue.column(i));
            k += 1;
        }
    }
    m.determinant()
}

/// A6 determinant of a branch with the section placed at phase `s` of the
/// cycle: `ζ` is the cycle state just after `s` and `U = U(s + ω, s)`.
pub fn a6_at_phase(branch: &VariationalBranch, s: f64, j: usize, ctl: &StepControl) -> Result<f64> {
    let cycle = &branch.cycle;
    let zeta = cycle.traj.state_after(s.rem_euclid(cycle.period));
    let u = transition_matrix(branch, s, s + cycle.period, ctl)?;
    Ok(a6_from_monodromy(&cycle.sys, &zeta, &u, j))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub mu: f64,
    pub period: f64,
    pub zeta: StateVec,
    pub fixed_index: usize,
    pub events_per_period: usize,
    pub residual_norm: f64,
    pub iterations: usize,
    pub seed: String,
    /// Continuation determinant; from the linearization when the orbit grazes.
    pub det_a6: Option<f64>,
    pub stability: Option<StabilityVerdict>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn trial(sys: &SystemDef, u: &StateVec, template: &StateVec, j: usize, events: usize, opts: &SimOptions) -> Option<StateVec> {
    let (t, z) = unpack(u, template, j);
    match poincare_residual(sys, t, &z, opts) {
        Ok(r) if r.events == events => Some(r.value),
        _ => None,
    }
}

/// Damped Newton from `seed`, locked to the seed's event count. Stops when
/// `|S| ≤ tol` and the last step is below `step_tol`, or when `|S| ≤ tol`
/// and no further decrease is possible (the integration noise floor).
pub fn find_periodic(sys: &SystemDef, mu: f64, seed: &Seed, opts: &NewtonOptions) -> Result<PeriodicOrbit> {
    let j = seed.fixed_index;
    let template = seed.zeta.clone();
    let first = poincare_residual(sys, seed.period, &seed.zeta, &opts.sim)?;
    let lock = first.events;
    let mut u = unknowns(seed.period, &seed.zeta, j);
    let mut s = first.value;
    let mut det = None;
    let mut iterations = 0;
    let mut converged = s.norm() <= opts.tol;
    let mut small_since = 0;

    while !converged {
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence { iterations, residual: s.norm() });
        }
        iterations += 1;
        let (t, z) = unpack(&u, &template, j);
        let jac = continuation_jacobian(sys, t, &z, j, lock, opts)?;
        det = Some(jac.det);
        if jac.det.abs() < opts.det_floor {
            return Err(Error::A6Violation { det: jac.det, floor: opts.det_floor });
        }
        let delta = jac
            .matrix
            .clone()
            .lu()
            .solve(&(-&s))
            .ok_or(Error::A6Violation { det: jac.det, floor: opts.det_floor })?;
        let r = s.norm();
        let mut lambda = 1.0;
        let mut accepted = None;
        while lambda >= 1.0 / 1024.0 {
            let ut = &u + &delta * lambda;
            if let Some(st) = trial(sys, &ut, &template, j, lock, &opts.sim) {
                if st.norm() < r {
                    accepted = Some((ut, st));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            None if r <= opts.tol => converged = true,
            None => return Err(Error::NoConvergence { iterations, residual: r }),
            Some((ut, st)) => {
                let step = (&ut - &u).norm();
                u = ut;
                s = st;
                if s.norm() <= opts.tol {
                    small_since += 1;
                    converged = step <= opts.step_tol || small_since > 3;
                }
            }
        }
    }
    let (period, zeta) = unpack(&u, &template, j);
    Ok(PeriodicOrbit {
        mu,
        period,
        zeta,
        fixed_index: j,
        events_per_period: lock,
        residual_norm: s.norm(),
        iterations,
        seed: seed.label.clone(),
        det_a6: det,
        stability: None,
        notes: Vec::new(),
    })
}

/// Coordinate to pin: the one along which the flow crosses the section fastest.
pub fn pinned_coordinate(sys: &SystemDef, zeta: &StateVec) -> usize {
    sys.field(zeta).iamax()
}

/// Seed from a known cycle, moved along the cycle to the middle of its
/// longest event-free stretch so that `ζ` lies off every surface.
pub fn generating_seed(sys: &SystemDef, cycle: &KnownCycle, opts: &SimOptions) -> Result<Seed> {
    let tr = simulate(sys, &cycle.zeta, 0.0, cycle.period, opts)?;
    let w = cycle.period;
    let th: Vec<f64> = tr.events.iter().map(|e| e.theta).collect();
    let mid = if th.is_empty() {
        0.0
    } else {
        let mut best = (th[0] + w - th[th.len() - 1], 0.5 * (th[th.len() - 1] + th[0] + w));
        for p in th.windows(2) {
            if p[1] - p[0] > best.0 {
                best = (p[1] - p[0], 0.5 * (p[0] + p[1]));
            }
        }
        best.1.rem_euclid(w)
    };
    let zeta = if mid == 0.0 { cycle.zeta.clone() } else { tr.state_after(mid) };
    Ok(Seed { label: cycle.label.clone(), period: w, fixed_index: pinned_coordinate(sys, &zeta), zeta })
}

/// Seeds displaced from `base` along each free coordinate and both signs.
/// The displacement grows by decades from `10·event_tol`; once the event
/// signature (events, grazing contacts) differs from the base, every decade
/// up to `1e-3` with that new signature becomes a seed.
pub fn perturbed_seeds(sys: &SystemDef, base: &Seed, opts: &SimOptions) -> Vec<Seed> {
    let signature = |z: &StateVec| poincare_residual(sys, base.period, z, opts).ok().map(|r| (r.events, r.grazing));
    let base_sig = signature(&base.zeta);
    let mut out = Vec::new();
    for i in (0..base.zeta.len()).filter(|&i| i != base.fixed_index) {
        for sign in [1.0, -1.0] {
            let mut changed = None;
            let mut d = 10.0 * opts.event_tol;
            while d <= 1e-3 * (1.0 + 1e-9) {
                let mut z = base.zeta.clone();
                z[i] += sign * d;
                let sig = signature(&z);
                let keep = match changed {
                    None => sig.is_some() && sig != base_sig,
                    Some(c) => sig == Some(c),
                };
                if keep {
                    changed = sig;
                    out.push(Seed {
                        label: format!("{}{}{:.0e}@x{}", base.label, if sign > 0.0 { "+" } else { "-" }, d, i + 1),
                        period: base.period,
                        zeta: z,
                        fixed_index: base.fixed_index,
                    });
                }
                d *= 10.0;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub verdict: StabilityVerdict,
    pub monodromy: Vec<MonodromyResult>,
    /// A6 determinant per branch, from the branch monodromy.
    pub det_a6_branches: Vec<f64>,
}

/// Branch monodromies, verdict and linearized A6 determinants of a cycle.
pub fn analyze_cycle(sys: &SystemDef, zeta: &StateVec, period: f64, fixed_index: usize, lin: &LinOptions, unit_tol: f64) -> Result<StabilityReport> {
    let cycle = Arc::new(CycleData::new(sys, zeta, period, &lin.sim)?);
    let branches = assemble_on(cycle, lin)?;
    let ctl = lin.sim.control();
    let mono: Vec<MonodromyResult> = branches.par_iter().map(|b| monodromy(b, &ctl)).collect::<Result<_>>()?;
    let det_a6_branches = mono.iter().map(|m| a6_from_monodromy(sys, zeta, &m.monodromy, fixed_index)).collect();
    Ok(StabilityReport { verdict: stability_verdict(&mono, unit_tol), monodromy: mono, det_a6_branches })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanOptions {
    pub newton: NewtonOptions,
    pub lin: LinOptions,
    pub unit_tol: f64,
    pub dedup: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { newton: NewtonOptions::default(), lin: LinOptions::default(), unit_tol: DEFAULT_UNIT_TOL, dedup: 1e-4 }
    }
}

impl ScanOptions {
    pub fn with_sim(mut self, sim: SimOptions) -> Self {
        self.newton.sim = sim;
        self.lin.sim = sim;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub mu: f64,
    pub orbits: Vec<PeriodicOrbit>,
    /// Seeds that did not converge, with the reason.
    pub failures: Vec<String>,
}

fn same_orbit(a: &PeriodicOrbit, b: &PeriodicOrbit, radius: f64) -> bool {
    (a.period - b.period).abs() <= radius && (&a.zeta - &b.zeta).amax() <= radius
}

/// Periodic orbits of the family at one parameter value.
pub fn orbits_at(family: &PerturbedFamily, mu: f64, opts: &ScanOptions) -> Result<ScanCell> {
    let sys = family.at(mu);
    let sim = &opts.newton.sim;
    let mut seeds = Vec::new();
    for c in &family.base.meta.cycles {
        let g = generating_seed(&sys, c, sim).or_else(|_| generating_seed(&family.base, c, sim))?;
        let extra = perturbed_seeds(&sys, &g, sim);
        seeds.push(g);
        seeds.extend(extra);
    }
    let found: Vec<Result<PeriodicOrbit>> = seeds.par_iter().map(|s| find_periodic(&sys, mu, s, &opts.newton)).collect();
    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in seeds.iter().zip(found) {
        match r {
            Ok(o) => {
                if !orbits.iter().any(|p| same_orbit(p, &o, opts.dedup)) {
                    orbits.push(o);
                }
            }
            Err(e) => failures.push(format!("{}: {e}", seed.label)),
        }
    }
    let mut kept = Vec::with_capacity(orbits.len());
    for mut o in orbits {
        match analyze_cycle(&sys, &o.zeta, o.period, o.fixed_index, &opts.lin, opts.unit_tol) {
            Ok(rep) => {
                let grazes = rep.monodromy.first().is_some_and(|m| !m.label.is_empty());
                if grazes || o.det_a6.is_none() {
                    o.det_a6 = rep.det_a6_branches.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs()));
                }
                o.stability = Some(rep.verdict);
                if let Some(d) = o.det_a6.filter(|d| d.abs() < opts.newton.det_floor) {
                    failures.push(format!("{}: {}", o.seed, Error::A6Violation { det: d, floor: opts.newton.det_floor }));
                    continue;
                }
            }
            Err(e) => o.notes.push(format!("stability unavailable: {e}")),
        }
        kept.push(o);
    }
    let orbits = kept;
    Ok(ScanCell { mu, orbits, failures })
}

/// Scan a parameter grid; cells run in parallel and keep grid order.
pub fn bifurcation_scan(family: &PerturbedFamily, grid: &[f64], opts: &ScanOptions) -> Result<Vec<ScanCell>> {
    if let Some(mu) = grid.iter().find(|m| !m.is_finite()) {
        return Err(Error::Invalid(format!("parameter value {mu} is not finite")));
    }
    grid.par_iter().map(|&mu| orbits_at(family, mu, opts)).collect()
}
