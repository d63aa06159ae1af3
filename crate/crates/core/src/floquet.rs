//! Transition matrices, monodromy and Floquet multipliers of variational
//! branches.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::dopri::{self, Flow, StepControl};
use crate::integrate::ArcExit;
use crate::linearize::VariationalBranch;
use crate::system::{Matrix, StateVec};

/// Piece of `[t0, t1]` lying inside one arc of one period copy.
struct Piece {
    arc: usize,
    shift: f64,
    from: f64,
    to: f64,
    /// Index of the jump applied at `to`, if the piece ends at one.
    jump: Option<usize>,
}

fn pieces(branch: &VariationalBranch, t0: f64, t1: f64) -> Vec<Piece> {
    let cycle = &branch.cycle;
    let w = cycle.period;
    let arcs = &cycle.traj.arcs;
    let eps = 1e-12 * w.max(1.0);
    let mut out = Vec::new();
    let mut t = t0;
    let mut k = (t0 / w).floor();
    while t1 - t > eps {
        let shift = k * w;
        for (i, arc) in arcs.iter().enumerate() {
            let a = shift + arc.t_start;
            let b = shift + arc.t_end;
            if b <= t + eps || t1 - t <= eps {
                continue;
            }
            let to = b.min(t1);
            let ends_on_jump = (to - b).abs() <= eps && matches!(arc.exit, ArcExit::SurfaceHit { .. });
            // arc i of a forward run ends at event i
            let jump = (ends_on_jump && i < branch.jumps.len()).then_some(i);
            out.push(Piece { arc: i, shift, from: t.max(a), to, jump });
            t = to;
        }
        k += 1.0;
    }
    out
}

fn to_matrix(v: &StateVec, n: usize) -> Matrix {
    Matrix::from_column_slice(n, n, v.as_slice())
}

/// `U(t1, t0)` of the branch: `U' = A(t)U` between jumps and
/// `U ← (E + D_i)U` at every jump time in `(t0, t1]`.
pub fn transition_matrix(branch: &VariationalBranch, t0: f64, t1: f64, ctl: &StepControl) -> Result<Matrix> {
    if !(t1 >= t0) {
        return Err(Error::Invalid(format!("transition interval [{t0}, {t1}] is not ordered")));
    }
    let cycle = &branch.cycle;
    let n = cycle.zeta.len();
    let id = Matrix::identity(n, n);
    let mut u = id.clone();
    for p in pieces(branch, t0, t1) {
        if p.to > p.from {
            let y0 = StateVec::from_column_slice(u.as_slice());
            let mut last = y0.clone();
            let rhs = |t: f64, y: &StateVec| {
                let a = cycle.a_on_arc(p.arc, t - p.shift);
                let m = a * to_matrix(y, n);
                StateVec::from_column_slice(m.as_slice())
            };
            dopri::integrate(rhs, p.from, &y0, p.to, ctl, |step| {
                last = step.y_to();
                Ok(Flow::Continue)
            })?;
            u = to_matrix(&last, n);
        }
        if let Some(j) = p.jump {
            u = (&id + &branch.jumps[j].matrix) * u;
        }
    }
    Ok(u)
}

/// `∫ tr A(t) dt` over `[t0, t1]`.
pub fn trace_integral(branch: &VariationalBranch, t0: f64, t1: f64, ctl: &StepControl) -> Result<f64> {
    let cycle = &branch.cycle;
    let mut total = 0.0;
    for p in pieces(branch, t0, t1) {
        if p.to <= p.from {
            continue;
        }
        let y0 = StateVec::zeros(1);
        let mut last = 0.0;
        let rhs = |t: f64, _: &StateVec| StateVec::from_element(1, cycle.a_on_arc(p.arc, t - p.shift).trace());
        dopri::integrate(rhs, p.from, &y0, p.to, ctl, |step| {
            last = step.y_to()[0];
            Ok(Flow::Continue)
        })?;
        total += last;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
}

impl Multiplier {
    fn new(z: Complex<f64>) -> Self {
        Multiplier { re: z.re, im: z.im, modulus: z.norm() }
    }

    pub fn complex(&self) -> Complex<f64> {
        Complex::new(self.re, self.im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleCheck {
    pub det_monodromy: f64,
    pub predicted: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonodromyResult {
    pub branch_id: usize,
    pub label: String,
    pub period: f64,
    pub monodromy: Matrix,
    /// Sorted by decreasing modulus.
    pub multipliers: Vec<Multiplier>,
    pub eigen_residual: f64,
    pub liouville: LiouvilleCheck,
}

pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// Denominator floor of the Liouville relative error; branches with a
/// singular jump have a zero predicted determinant.
pub const LIOUVILLE_FLOOR: f64 = 1e-8;

/// Eigenvalues of a real square matrix: closed form for 2×2, Schur otherwise.
pub fn eigenvalues(m: &Matrix) -> Vec<Complex<f64>> {
    if m.nrows() == 2 {
        let half_tr = 0.5 * m.trace();
        let det = m.determinant();
        // ((a−d)/2)² + bc avoids the cancellation in (tr/2)² − det
        let half_gap = 0.5 * (m[(0, 0)] - m[(1, 1)]);
        let disc = half_gap * half_gap + m[(0, 1)] * m[(1, 0)];
        if disc >= 0.0 {
            let r = disc.sqrt();
            let q = if half_tr >= 0.0 { half_tr + r } else { half_tr - r };
            let other = if q != 0.0 { det / q } else { 0.0 };
            return vec![Complex::new(q, 0.0), Complex::new(other, 0.0)];
        }
        let r = (-disc).sqrt();
        return vec![Complex::new(half_tr, r), Complex::new(half_tr, -r)];
    }
    m.clone().complex_eigenvalues().iter().copied().collect()
}

/// Smallest singular value of `M − ρE`, the residual of the best unit
/// eigenvector for `ρ`.
pub fn eigen_residual(m: &Matrix, rho: Complex<f64>) -> f64 {
    let n = m.nrows();
    let c = nalgebra::DMatrix::<Complex<f64>>::from_fn(n, n, |i, j| {
        let d = if i == j { rho } else { Complex::new(0.0, 0.0) };
        Complex::new(m[(i, j)], 0.0) - d
    });
    c.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Monodromy matrix `U(ω, 0)` and multipliers of one branch.
pub fn monodromy(branch: &VariationalBranch, ctl: &StepControl) -> Result<MonodromyResult> {
    let w = branch.period();
    let u = transition_matrix(branch, 0.0, w, ctl)?;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "monodromy matrix".into(), point: branch.cycle.zeta.iter().copied().collect() });
    }
    let mut rho = eigenvalues(&u);
    rho.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
    let scale = u.norm().max(1.0);
    let residual = rho.iter().map(|&r| eigen_residual(&u, r)).fold(0.0, f64::max);
    if residual > EIGEN_RESIDUAL_TOL * scale {
        return Err(Error::EigenResidual { residual, tol: EIGEN_RESIDUAL_TOL * scale });
    }

    let n = u.nrows();
    let id = Matrix::identity(n, n);
    let jumps_det: f64 = branch.jumps.iter().map(|j| (&id + &j.matrix).determinant()).product();
    let predicted = trace_integral(branch, 0.0, w, ctl)?.exp() * jumps_det;
    let det_u = u.determinant();
    let rel_error = (det_u - predicted).abs() / predicted.abs().max(LIOUVILLE_FLOOR);

    Ok(MonodromyResult {
        branch_id: branch.branch_id,
        label: branch.label(),
        period: w,
        monodromy: u,
        multipliers: rho.into_iter().map(Multiplier::new).collect(),
        eigen_residual: residual,
        liouville: LiouvilleCheck { det_monodromy: det_u, predicted, rel_error },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Stable,
    UnstableIndicated,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchVerdict {
    pub branch_id: usize,
    pub label: String,
    pub multipliers: Vec<Multiplier>,
    /// Exactly one multiplier near 1 and all others strictly inside the unit circle.
    pub simple_unit_multiplier: bool,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub status: Verdict,
    pub unit_tol: f64,
    pub branches: Vec<BranchVerdict>,
}

pub const DEFAULT_UNIT_TOL: f64 = 5e-3;

fn branch_verdict(r: &MonodromyResult, unit_tol: f64) -> BranchVerdict {
    let near_one = r.multipliers.iter().filter(|m| (m.complex() - Complex::new(1.0, 0.0)).norm() <= unit_tol).count();
    let outside = r.multipliers.iter().any(|m| m.modulus > 1.0 + unit_tol);
    let rest_inside = r
        .multipliers
        .iter()
        .filter(|m| (m.complex() - Complex::new(1.0, 0.0)).norm() > unit_tol)
        .all(|m| m.modulus < 1.0 - unit_tol);
    let simple = near_one == 1 && rest_inside;
    let (verdict, note) = if outside {
        (Verdict::UnstableIndicated, None)
    } else if simple {
        (Verdict::Stable, None)
    } else if near_one >= 2 {
        (Verdict::Undecided, Some(format!("{near_one} multipliers within {unit_tol:e} of 1")))
    } else {
        (Verdict::Undecided, Some("a multiplier lies within the tolerance band of the unit circle".into()))
    };
    BranchVerdict {
        branch_id: r.branch_id,
        label: r.label.clone(),
        multipliers: r.multipliers.clone(),
        simple_unit_multiplier: simple,
        verdict,
        note,
    }
}

/// Stable when every branch has a simple unit multiplier and the rest inside
/// the unit circle; instability is indicated by any multiplier outside.
pub fn stability_verdict(results: &[MonodromyResult], unit_tol: f64) -> StabilityVerdict {
    let branches: Vec<BranchVerdict> = results.iter().map(|r| branch_verdict(r, unit_tol)).collect();
    let status = if branches.iter().any(|b| b.verdict == Verdict::UnstableIndicated) {
        Verdict::UnstableIndicated
    } else if !branches.is_empty() && branches.iter().all(|b| b.verdict == Verdict::Stable) {
        Verdict::Stable
    } else {
        Verdict::Undecided
    };
    StabilityVerdict { status, unit_tol, branches }
}
