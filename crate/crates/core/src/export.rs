//! CSV and JSON artifacts.
//!
//! CSV floats carry 17 significant digits (`{:.16e}`); JSON floats use
//! serde_json's shortest round-trip form.

use std::io::{self, Write};

use serde::Serialize;

use crate::continuation::ScanCell;
use crate::floquet::{MonodromyResult, StabilityVerdict};
use crate::integrate::Trajectory;
use crate::linearize::{A2Status, VariationalBranch, WMode};
use crate::system::Matrix;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

/// `t,x1..xn,arc_index`, one row per integrator node.
pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory) -> io::Result<()> {
    let n = traj.x0.len();
    let header: Vec<String> = std::iter::once("t".to_string()).chain(numbered("x", n)).chain(std::iter::once("arc_index".into())).collect();
    writeln!(w, "{}", header.join(","))?;
    for (k, arc) in traj.arcs.iter().enumerate() {
        for (t, x) in arc.nodes() {
            let mut row = vec![fmt_f64(t)];
            row.extend(x.iter().map(|v| fmt_f64(*v)));
            row.push(k.to_string());
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}

/// `theta,type,axial,transversality,pre_*,post_*,zero_coords`; zero
/// coordinates are 1-based and separated by `;`.
pub fn write_events_csv<W: Write>(mut w: W, traj: &Trajectory) -> io::Result<()> {
    let n = traj.x0.len();
    let mut header = vec!["theta".to_string(), "type".into(), "axial".into(), "transversality".into()];
    header.extend(numbered("pre_", n));
    header.extend(numbered("post_", n));
    header.push("zero_coords".into());
    writeln!(w, "{}", header.join(","))?;
    for e in &traj.events {
        let mut row = vec![fmt_f64(e.theta), e.point_type.as_str().to_string(), e.axial.to_string(), fmt_f64(e.transversality)];
        row.extend(e.pre_state.iter().map(|v| fmt_f64(*v)));
        row.extend(e.post_state.iter().map(|v| fmt_f64(*v)));
        row.push(e.zero_coords.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";"));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// `mu,orbit_id,T,zeta_1..zeta_n,events_per_period,det_A6,stable`.
pub fn write_bifurcation_csv<W: Write>(mut w: W, cells: &[ScanCell], dim: usize) -> io::Result<()> {
    let mut header = vec!["mu".to_string(), "orbit_id".into(), "T".into()];
    header.extend(numbered("zeta_", dim));
    header.extend(["events_per_period".to_string(), "det_A6".into(), "stable".into()]);
    writeln!(w, "{}", header.join(","))?;
    for c in cells {
        for (id, o) in c.orbits.iter().enumerate() {
            let mut row = vec![fmt_f64(c.mu), (id + 1).to_string(), fmt_f64(o.period)];
            row.extend(o.zeta.iter().map(|v| fmt_f64(*v)));
            row.push(o.events_per_period.to_string());
            row.push(o.det_a6.map(fmt_f64).unwrap_or_default());
            row.push(o.stability.as_ref().map(|s| verdict_str(s).to_string()).unwrap_or_else(|| "unknown".into()));
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}

fn verdict_str(s: &StabilityVerdict) -> &'static str {
    match s.status {
        crate::floquet::Verdict::Stable => "stable",
        crate::floquet::Verdict::UnstableIndicated => "unstable-indicated",
        crate::floquet::Verdict::Undecided => "undecided",
    }
}

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct JumpEntry {
    pub theta: f64,
    pub patch: String,
    pub point_type: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch: Option<String>,
    /// `D_i` (the W-map Jacobian), row-major.
    pub matrix: Vec<Vec<f64>>,
    pub mode: WMode,
    pub condition_a2: A2Status,
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchEntry {
    pub branch_id: usize,
    pub label: String,
    pub jumps: Vec<JumpEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearizationReport {
    pub system: String,
    pub zeta: Vec<f64>,
    pub period: f64,
    pub branches: Vec<BranchEntry>,
}

pub fn linearization_report(branches: &[VariationalBranch]) -> LinearizationReport {
    let (system, zeta, period) = match branches.first() {
        Some(b) => (b.cycle.sys.name().to_string(), b.cycle.zeta.iter().copied().collect(), b.cycle.period),
        None => (String::new(), Vec::new(), 0.0),
    };
    LinearizationReport {
        system,
        zeta,
        period,
        branches: branches
            .iter()
            .map(|b| BranchEntry {
                branch_id: b.branch_id,
                label: b.label(),
                jumps: b
                    .jumps
                    .iter()
                    .map(|j| JumpEntry {
                        theta: j.theta,
                        patch: j.patch.clone(),
                        point_type: j.point_type.as_str().to_string(),
                        branch: j.choice.map(|c| format!("{c:?}")),
                        matrix: rows(&j.matrix),
                        mode: j.mode,
                        condition_a2: j.condition_a2.clone(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonodromyEntry {
    pub branch_id: usize,
    pub label: String,
    pub monodromy: Vec<Vec<f64>>,
    pub multipliers: Vec<[f64; 2]>,
    pub eigen_residual: f64,
    pub liouville_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FloquetReport {
    pub system: String,
    pub period: f64,
    pub verdict: StabilityVerdict,
    pub branches: Vec<MonodromyEntry>,
    pub eigen_residual_tol: f64,
}

pub fn floquet_report(system: &str, results: &[MonodromyResult], verdict: StabilityVerdict) -> FloquetReport {
    FloquetReport {
        system: system.to_string(),
        period: results.first().map(|r| r.period).unwrap_or(0.0),
        verdict,
        branches: results
            .iter()
            .map(|r| MonodromyEntry {
                branch_id: r.branch_id,
                label: r.label.clone(),
                monodromy: rows(&r.monodromy),
                multipliers: r.multipliers.iter().map(|m| [m.re, m.im]).collect(),
                eigen_residual: r.eigen_residual,
                liouville_rel_error: r.liouville.rel_error,
            })
            .collect(),
        eigen_residual_tol: crate::floquet::EIGEN_RESIDUAL_TOL,
    }
}

pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, value).map_err(io::Error::other)?;
    writeln!(w)
}
