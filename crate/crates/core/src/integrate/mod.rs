//! Flow between surfaces, event location, jumps and trajectory assembly.
//!
//! Event detection runs on the dense output of every accepted step. Each
//! step is split into eight sub-intervals; a sign change of `⟨∇Φ, f⟩` with
//! `|Φ|` below the grazing threshold at its root is a tangential contact,
//! otherwise a sign change of `Φ` is refined with Brent's method.

pub mod bdist;
pub mod dopri;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graze::{self, PointType, Side};
use crate::system::{StateVec, SurfacePatch, SystemDef};
pub use bdist::{b_distance, BDistance, Window};
use dopri::{DenseStep, Flow, StepControl};

/// Numerical settings shared by simulation and everything built on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    /// Bound on `|Φ|` at a located transversal crossing.
    pub event_tol: f64,
    /// Bracket width of the crossing time.
    pub time_tol: f64,
    /// `|Φ|` below which a tangential extremum counts as a contact.
    pub graze_phi_tol: f64,
    /// Relative tangency threshold on `⟨∇Φ, f⟩ / (‖∇Φ‖‖f‖)`.
    pub graze_rel_tol: f64,
    pub boundary_tol: f64,
    pub blowup: f64,
    pub max_events: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            rtol: 1e-11,
            atol: 1e-12,
            h_max: 0.05,
            event_tol: 1e-10,
            time_tol: 1e-10,
            graze_phi_tol: 1e-8,
            graze_rel_tol: 1e-7,
            boundary_tol: 1e-9,
            blowup: 1e6,
            max_events: 100_000,
        }
    }
}

impl SimOptions {
    /// Every tolerance multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        SimOptions {
            rtol: self.rtol * s,
            atol: self.atol * s,
            event_tol: self.event_tol * s,
            time_tol: self.time_tol * s,
            graze_phi_tol: self.graze_phi_tol * s,
            graze_rel_tol: self.graze_rel_tol * s,
            boundary_tol: self.boundary_tol * s,
            ..*self
        }
    }

    pub fn control(&self) -> StepControl {
        StepControl { rtol: self.rtol, atol: self.atol, h_max: self.h_max, ..StepControl::default() }
    }

    fn rearm_band(&self) -> f64 {
        10.0 * self.event_tol
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("h_max", self.h_max),
            ("event_tol", self.event_tol),
            ("time_tol", self.time_tol),
            ("graze_phi_tol", self.graze_phi_tol),
            ("graze_rel_tol", self.graze_rel_tol),
            ("boundary_tol", self.boundary_tol),
            ("blowup", self.blowup),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Invalid(format!("tolerance {name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ArcExit {
    TimeLimit,
    SurfaceHit { patch: String, index: usize },
    BlowUp,
}

/// A smooth piece of a solution. Steps are stored in ascending time order
/// whatever the integration direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub t_start: f64,
    pub t_end: f64,
    pub steps: Vec<DenseStep>,
    pub exit: ArcExit,
}

impl Arc {
    /// Dense-output state at `t ∈ [t_start, t_end]`.
    pub fn state_at(&self, t: f64) -> StateVec {
        let i = self.steps.partition_point(|s| s.hi() < t).min(self.steps.len() - 1);
        self.steps[i].eval(t)
    }

    pub fn start_state(&self) -> StateVec {
        self.state_at(self.t_start)
    }

    pub fn end_state(&self) -> StateVec {
        self.state_at(self.t_end)
    }

    /// Step nodes `(t, x)` inside the arc, ascending, end points included.
    pub fn nodes(&self) -> Vec<(f64, StateVec)> {
        let mut out = vec![(self.t_start, self.start_state())];
        for s in &self.steps {
            let t = s.hi();
            if t > self.t_start && t < self.t_end {
                out.push((t, s.eval(t)));
            }
        }
        if self.t_end > self.t_start {
            out.push((self.t_end, self.end_state()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscontinuityEvent {
    pub theta: f64,
    pub pre_state: StateVec,
    pub post_state: StateVec,
    pub patch: String,
    pub patch_index: usize,
    pub point_type: PointType,
    pub axial: bool,
    /// 1-based vanishing coordinates of `∇Φ̃`.
    pub zero_coords: Vec<usize>,
    /// 1-based vanishing coordinates of `∇Φ`.
    pub surface_zero_coords: Vec<usize>,
    pub transversality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// A piecewise continuous solution. Arcs and events are in ascending time
/// order for both directions; `x0` is the state given at `t0` and `x1` the
/// state reached at `t1` (after any event at `t1`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub direction: Direction,
    pub t0: f64,
    pub t1: f64,
    pub x0: StateVec,
    pub x1: StateVec,
    pub arcs: Vec<Arc>,
    pub events: Vec<DiscontinuityEvent>,
    pub b_sequence: Vec<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> &StateVec {
        &self.x1
    }

    pub fn t_lo(&self) -> f64 {
        self.t0.min(self.t1)
    }

    pub fn t_hi(&self) -> f64 {
        self.t0.max(self.t1)
    }

    /// Left-continuous state: at an event time this is the pre-jump state.
    pub fn state_at(&self, t: f64) -> StateVec {
        if self.arcs.is_empty() {
            return self.x0.clone();
        }
        let i = self.arcs.partition_point(|a| a.t_end < t).min(self.arcs.len() - 1);
        let arc = &self.arcs[i];
        arc.state_at(t.clamp(arc.t_start, arc.t_end))
    }

    /// Right-continuous state: at an event time this is the post-jump state.
    pub fn state_after(&self, t: f64) -> StateVec {
        if t >= self.t_hi() {
            return if self.direction == Direction::Forward { self.x1.clone() } else { self.x0.clone() };
        }
        if self.arcs.is_empty() {
            return self.x0.clone();
        }
        let i = self.arcs.partition_point(|a| a.t_end <= t).min(self.arcs.len() - 1);
        let arc = &self.arcs[i];
        arc.state_at(t.clamp(arc.t_start, arc.t_end))
    }

    /// Number of events with the given type predicate.
    pub fn count_events(&self, pred: impl Fn(PointType) -> bool) -> usize {
        self.events.iter().filter(|e| pred(e.point_type)).count()
    }
}

/// Location of the first event in an arc.
#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub index: usize,
    pub tau: f64,
    pub x: StateVec,
    pub tangential: bool,
}

struct TimeTol {
    dx: f64,
}

impl roots::Convergency<f64> for TimeTol {
    fn is_root_found(&mut self, y: f64) -> bool {
        y == 0.0
    }
    fn is_converged(&mut self, x1: f64, x2: f64) -> bool {
        (x1 - x2).abs() <= self.dx
    }
    fn is_iteration_limit_reached(&mut self, iter: usize) -> bool {
        iter > 200
    }
}

fn brent(a: f64, b: f64, dx: f64, f: impl Fn(f64) -> f64) -> Option<f64> {
    let mut conv = TimeTol { dx };
    roots::find_root_brent(a, b, f, &mut conv).ok()
}

fn opposite(a: f64, b: f64) -> bool {
    (a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0) || (b == 0.0 && a != 0.0)
}

const SUBDIV: usize = 8;

/// First event of `patch` inside one step (in integration order), as a
/// fraction of the step and a tangential flag.
fn scan_step(sys: &SystemDef, step: &DenseStep, patch: &SurfacePatch, opts: &SimOptions) -> Option<(f64, bool)> {
    let h = (step.t_to - step.t_from).abs();
    let dx = 0.1 * opts.time_tol / h.max(f64::MIN_POSITIVE);
    let phi = |th: f64| patch.phi_at(&step.eval_theta(th));
    let g = |th: f64| {
        let x = step.eval_theta(th);
        patch.grad_at(&x).dot(&sys.field(&x))
    };
    let admit_crossing = |a: f64, b: f64| -> Option<(f64, bool)> {
        let th = brent(a, b, dx, phi)?;
        let x = step.eval_theta(th);
        (patch.contains)(&x, opts.boundary_tol).then_some((th, false))
    };

    let mut th_a = 0.0;
    let mut phi_a = phi(0.0);
    let mut g_a = g(0.0);
    for k in 1..=SUBDIV {
        let th_b = k as f64 / SUBDIV as f64;
        let phi_b = phi(th_b);
        let g_b = g(th_b);
        if opposite(g_a, g_b) {
            if let Some(th_e) = brent(th_a, th_b, dx, g) {
                let x_e = step.eval_theta(th_e);
                let phi_e = patch.phi_at(&x_e);
                if phi_e.abs() <= opts.graze_phi_tol && (patch.contains)(&x_e, opts.boundary_tol) {
                    return Some((th_e, true));
                }
                if opposite(phi_a, phi_e) {
                    if let Some(hit) = admit_crossing(th_a, th_e) {
                        return Some(hit);
                    }
                }
                if opposite(phi_e, phi_b) {
                    if let Some(hit) = admit_crossing(th_e, th_b) {
                        return Some(hit);
                    }
                }
            } else if opposite(phi_a, phi_b) {
                if let Some(hit) = admit_crossing(th_a, th_b) {
                    return Some(hit);
                }
            }
        } else if opposite(phi_a, phi_b) {
            if let Some(hit) = admit_crossing(th_a, th_b) {
                return Some(hit);
            }
        }
        th_a = th_b;
        phi_a = phi_b;
        g_a = g_b;
    }
    None
}

/// Integrate one smooth arc from `(t0, x0)` toward `t_max`, stopping at the
/// first event on an armed surface of `surfaces`.
pub(crate) fn run_arc(
    sys: &SystemDef,
    surfaces: &[&SurfacePatch],
    armed: &mut [bool],
    x0: &StateVec,
    t0: f64,
    t_max: f64,
    opts: &SimOptions,
) -> Result<(Arc, Option<Hit>)> {
    let mut steps: Vec<DenseStep> = Vec::new();
    let mut hit: Option<Hit> = None;
    let mut blown = false;
    let f = sys.f.clone();
    let band = opts.rearm_band();
    let fwd = t_max >= t0;

    let reached = dopri::integrate(move |_, y| f(y), t0, x0, t_max, &opts.control(), |step| {
        let mut best: Option<(f64, usize, bool)> = None;
        for (i, patch) in surfaces.iter().enumerate() {
            if !armed[i] {
                continue;
            }
            if let Some((th, tangential)) = scan_step(sys, step, patch, opts) {
                if best.is_none_or(|(b, _, _)| th < b) {
                    best = Some((th, i, tangential));
                }
            }
        }
        steps.push(step.clone());
        if let Some((th, index, tangential)) = best {
            let tau = step.time_of(th);
            hit = Some(Hit { index, tau, x: step.eval_theta(th), tangential });
            return Ok(Flow::Stop);
        }
        let y = step.y_to();
        if y.iter().any(|v| !v.is_finite()) || y.norm() > opts.blowup {
            blown = true;
            return Ok(Flow::Stop);
        }
        for (i, patch) in surfaces.iter().enumerate() {
            if !armed[i] && patch.phi_at(&y).abs() > band {
                armed[i] = true;
            }
        }
        Ok(Flow::Continue)
    })?;

    let (t_end, exit) = match &hit {
        Some(h) => {
            let label = surfaces[h.index].label.clone();
            (h.tau, ArcExit::SurfaceHit { patch: label, index: h.index })
        }
        None if blown => (reached, ArcExit::BlowUp),
        None => (t_max, ArcExit::TimeLimit),
    };
    if !fwd {
        steps.reverse();
    }
    let (lo, hi) = if fwd { (t0, t_end) } else { (t_end, t0) };
    if steps.is_empty() {
        return Err(Error::Invalid("empty integration window".into()));
    }
    Ok((Arc { t_start: lo, t_end: hi, steps, exit }, hit))
}

fn initial_arming(surfaces: &[&SurfacePatch], x: &StateVec, opts: &SimOptions) -> Vec<bool> {
    surfaces.iter().map(|p| p.phi_at(x).abs() > opts.rearm_band()).collect()
}

/// A state within the re-arming band of an armed patch at the end of the
/// window is an event at the window end.
fn terminal_hit(surfaces: &[&SurfacePatch], armed: &[bool], x: &StateVec, t: f64, opts: &SimOptions) -> Option<Hit> {
    surfaces.iter().enumerate().find_map(|(i, p)| {
        (armed[i] && p.phi_at(x).abs() <= opts.rearm_band() && (p.contains)(x, opts.boundary_tol))
            .then(|| Hit { index: i, tau: t, x: x.clone(), tangential: false })
    })
}

/// One smooth arc of forward-time flow, with events on `Γ`.
pub fn integrate_arc(sys: &SystemDef, x0: &StateVec, t0: f64, t_max: f64, opts: &SimOptions) -> Result<Arc> {
    if !(t_max > t0) {
        return Err(Error::Invalid(format!("integrate_arc needs t_max > t0 (got {t0}, {t_max})")));
    }
    let surfaces: Vec<&SurfacePatch> = sys.discontinuities.iter().map(|d| &d.patch).collect();
    let mut armed = initial_arming(&surfaces, x0, opts);
    Ok(run_arc(sys, &surfaces, &mut armed, x0, t0, t_max, opts)?.0)
}

/// Meeting time of an arc with `patch`: crossing time to the time tolerance,
/// or the time of least `|Φ|` for a tangential contact.
pub fn locate_crossing(sys: &SystemDef, arc: &Arc, patch: &SurfacePatch, opts: &SimOptions) -> Result<(f64, StateVec)> {
    let x_start = arc.start_state();
    if patch.phi_at(&x_start).abs() <= opts.event_tol && (patch.contains)(&x_start, opts.boundary_tol) {
        return Ok((arc.t_start, x_start));
    }
    for step in &arc.steps {
        if let Some((th, _)) = scan_step(sys, step, patch, opts) {
            let t = step.time_of(th);
            if t >= arc.t_start - opts.time_tol && t <= arc.t_end + opts.time_tol {
                return Ok((t, step.eval_theta(th)));
            }
        }
    }
    let x_end = arc.end_state();
    if patch.phi_at(&x_end).abs() <= opts.rearm_band() && (patch.contains)(&x_end, opts.boundary_tol) {
        return Ok((arc.t_end, x_end));
    }
    Err(Error::NotFound { patch: patch.label.clone() })
}

fn make_event(sys: &SystemDef, hit: &Hit, pre: StateVec, post: StateVec, side: Side, opts: &SimOptions) -> DiscontinuityEvent {
    let on_image = side == Side::Backward;
    let at = if on_image { post.clone() } else { pre.clone() };
    let at = &at;
    let point_type = graze::classify_on(sys, hit.index, at, side, opts);
    let axial = graze::axial_on(sys, hit.index, at, opts);
    let surface = if on_image { sys.image(hit.index) } else { sys.patch(hit.index) };
    DiscontinuityEvent {
        theta: hit.tau,
        pre_state: pre,
        post_state: post,
        patch: surface.label.clone(),
        patch_index: hit.index,
        point_type,
        axial: axial.axial,
        zero_coords: axial.image_zero_coords,
        surface_zero_coords: axial.surface_zero_coords,
        transversality: graze::transversality(sys, hit.index, at, side),
    }
}

/// Forward solution on `[t0, t_end]` with jumps `x(θ+) = J(x(θ))`.
/// A grazing contact with zero jump is recorded with `post = pre`.
pub fn simulate(sys: &SystemDef, x0: &StateVec, t0: f64, t_end: f64, opts: &SimOptions) -> Result<Trajectory> {
    if !(t_end > t0) {
        return Err(Error::Invalid(format!("simulate needs t_end > t0 (got {t0}, {t_end})")));
    }
    check_state(sys, x0)?;
    let surfaces: Vec<&SurfacePatch> = sys.discontinuities.iter().map(|d| &d.patch).collect();
    let mut armed = initial_arming(&surfaces, x0, opts);
    let mut arcs = Vec::new();
    let mut events: Vec<DiscontinuityEvent> = Vec::new();
    let mut t = t0;
    let mut x = x0.clone();

    while t < t_end {
        let (arc, hit) = run_arc(sys, &surfaces, &mut armed, &x, t, t_end, opts)?;
        let exit = arc.exit.clone();
        let end = arc.end_state();
        let t_arc_end = arc.t_end;
        arcs.push(arc);
        let hit = match (hit, exit) {
            (_, ArcExit::BlowUp) => return Err(Error::BlowUp { t: t_arc_end, bound: opts.blowup }),
            (Some(h), _) => Some(h),
            (None, _) => terminal_hit(&surfaces, &armed, &end, t_end, opts),
        };
        let Some(hit) = hit else {
            x = end;
            break;
        };
        if events.len() >= opts.max_events {
            return Err(Error::EventBudget { max: opts.max_events, t: hit.tau });
        }
        let pre = hit.x.clone();
        let mut ev = make_event(sys, &hit, pre.clone(), pre.clone(), Side::Forward, opts);
        if !ev.point_type.is_grazing() {
            ev.post_state = sys.jump(hit.index).apply(&pre);
            check_state(sys, &ev.post_state)?;
        }
        x = ev.post_state.clone();
        t = hit.tau;
        events.push(ev);
        armed = initial_arming(&surfaces, &x, opts);
    }
    let b_sequence = events.iter().map(|e| e.theta).collect();
    Ok(Trajectory { direction: Direction::Forward, t0, t1: t_end, x0: x0.clone(), x1: x, arcs, events, b_sequence })
}

fn check_state(sys: &SystemDef, x: &StateVec) -> Result<()> {
    if x.len() != sys.dim {
        return Err(Error::Invalid(format!("state has dimension {}, system {} expects {}", x.len(), sys.name(), sys.dim)));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "state".into(), point: x.iter().copied().collect() });
    }
    Ok(())
}

/// Solve `J(y) = x` for `y` on patch `index` by damped Gauss–Newton on the
/// stacked system `[J(y) − x; Φ(y)]`. Seeds are `x` and its coordinate
/// reflections; the first root inside the patch is returned.
pub fn invert_jump(sys: &SystemDef, index: usize, x: &StateVec, opts: &SimOptions) -> Result<StateVec> {
    let jump = sys.jump(index);
    let patch = sys.patch(index);
    let n = x.len();
    let residual = |y: &StateVec| -> StateVec {
        let mut r = StateVec::zeros(n + 1);
        r.rows_mut(0, n).copy_from(&(jump.apply(y) - x));
        r[n] = patch.phi_at(y);
        r
    };
    let mut seeds = vec![x.clone()];
    for i in 0..n {
        let mut s = x.clone();
        s[i] = -s[i];
        if s != *x {
            seeds.push(s);
        }
    }
    let tol = 1e-12 * x.norm().max(1.0);
    let mut best = f64::INFINITY;
    for seed in seeds {
        let mut y = seed;
        let mut r = residual(&y);
        for _ in 0..100 {
            if r.norm() <= tol {
                break;
            }
            let mut jac = nalgebra::DMatrix::zeros(n + 1, n);
            jac.view_mut((0, 0), (n, n)).copy_from(&jump.jacobian(&y));
            jac.row_mut(n).copy_from(&patch.grad_at(&y).transpose());
            let svd = jac.svd(true, true);
            let Ok(dy) = svd.solve(&(-&r), 1e-14) else { break };
            let mut lambda = 1.0;
            let mut improved = false;
            while lambda > 1e-6 {
                let y_try = &y + &dy * lambda;
                let r_try = residual(&y_try);
                if r_try.norm() < r.norm() {
                    y = y_try;
                    r = r_try;
                    improved = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !improved {
                break;
            }
        }
        best = best.min(r.norm());
        if r.norm() <= 1e-9 * x.norm().max(1.0) && (patch.contains)(&y, opts.boundary_tol.max(1e-8)) {
            return Ok(y);
        }
    }
    Err(Error::InversionFailure { patch: patch.label.clone(), residual: best })
}

/// Reverse-time solution from `(t0, x0)` down to `t_end < t0`. Events live
/// on the image surfaces `Γ̃`; each hit is undone with the inverse jump. A
/// start point on `Γ̃` is taken as a post-jump state and inverted at `t0`.
pub fn simulate_backward(sys: &SystemDef, x0: &StateVec, t0: f64, t_end: f64, opts: &SimOptions) -> Result<Trajectory> {
    if !(t_end < t0) {
        return Err(Error::Invalid(format!("simulate_backward needs t_end < t0 (got {t0}, {t_end})")));
    }
    check_state(sys, x0)?;
    let surfaces: Vec<&SurfacePatch> = sys.discontinuities.iter().map(|d| &d.image).collect();
    let mut arcs = Vec::new();
    let mut events: Vec<DiscontinuityEvent> = Vec::new();
    let mut t = t0;
    let mut x = x0.clone();

    let mut pending = surfaces.iter().enumerate().find_map(|(i, p)| {
        (p.phi_at(x0).abs() <= opts.rearm_band() && (p.contains)(x0, opts.boundary_tol))
            .then(|| Hit { index: i, tau: t0, x: x0.clone(), tangential: false })
    });
    let mut armed = initial_arming(&surfaces, x0, opts);

    loop {
        if let Some(hit) = pending.take() {
            if events.len() >= opts.max_events {
                return Err(Error::EventBudget { max: opts.max_events, t: hit.tau });
            }
            let post = hit.x.clone();
            let mut ev = make_event(sys, &hit, post.clone(), post.clone(), Side::Backward, opts);
            if !ev.point_type.is_grazing() {
                ev.pre_state = invert_jump(sys, hit.index, &post, opts)?;
            }
            x = ev.pre_state.clone();
            t = hit.tau;
            events.push(ev);
            armed = initial_arming(&surfaces, &x, opts);
        }
        if t <= t_end {
            break;
        }
        let (arc, hit) = run_arc(sys, &surfaces, &mut armed, &x, t, t_end, opts)?;
        let exit = arc.exit.clone();
        let start = arc.start_state();
        let t_arc = arc.t_start;
        arcs.push(arc);
        match (hit, exit) {
            (_, ArcExit::BlowUp) => return Err(Error::BlowUp { t: t_arc, bound: opts.blowup }),
            (Some(h), _) => pending = Some(h),
            (None, _) => {
                pending = terminal_hit(&surfaces, &armed, &start, t_end, opts);
                x = start;
                t = t_end;
                if pending.is_none() {
                    break;
                }
            }
        }
    }
    arcs.reverse();
    events.reverse();
    let b_sequence = events.iter().map(|e| e.theta).collect();
    Ok(Trajectory { direction: Direction::Backward, t0, t1: t_end, x0: x0.clone(), x1: x, arcs, events, b_sequence })
}

/// Event-free flow `φ(t1 − t0, x0)` in either time direction.
pub fn flow(sys: &SystemDef, x0: &StateVec, t0: f64, t1: f64, opts: &SimOptions) -> Result<StateVec> {
    if t1 == t0 {
        return Ok(x0.clone());
    }
    let f = sys.f.clone();
    let mut last = x0.clone();
    dopri::integrate(move |_, y| f(y), t0, x0, t1, &opts.control(), |s| {
        last = s.y_to();
        Ok(Flow::Continue)
    })?;
    Ok(last)
}

/// Event-free flow that also reports the first meeting with `patch`
/// (restricted to the patch) within `[t0, t_limit]`.
pub fn first_meeting(
    sys: &SystemDef,
    patch: &SurfacePatch,
    x0: &StateVec,
    t0: f64,
    t_limit: f64,
    opts: &SimOptions,
) -> Result<Option<Hit>> {
    if patch.phi_at(x0).abs() <= opts.event_tol && (patch.contains)(x0, opts.boundary_tol) {
        return Ok(Some(Hit { index: 0, tau: t0, x: x0.clone(), tangential: false }));
    }
    let mut armed = vec![true];
    let (_, hit) = run_arc(sys, &[patch], &mut armed, x0, t0, t_limit, opts)?;
    Ok(hit)
}

/// `‖x(t₂, x(t₁, x₀)) − x(t₁ + t₂, x₀)‖`.
pub fn group_property_check(sys: &SystemDef, x0: &StateVec, t1: f64, t2: f64, opts: &SimOptions) -> Result<f64> {
    let x_t1 = if t1 > 0.0 { simulate(sys, x0, 0.0, t1, opts)?.x1 } else { x0.clone() };
    let a = if t2 > 0.0 { simulate(sys, &x_t1, 0.0, t2, opts)?.x1 } else { x_t1 };
    let b = if t1 + t2 > 0.0 { simulate(sys, x0, 0.0, t1 + t2, opts)?.x1 } else { x0.clone() };
    Ok((a - b).norm())
}
