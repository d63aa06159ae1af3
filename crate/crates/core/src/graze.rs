//! Point taxonomy on `Γ`/`Γ̃` and grazing reports.
//!
//! A point of a patch is interior (α), a transversal boundary point (β) or a
//! tangential boundary point (γ). Primed types are the same cases on the
//! image surface `Γ̃`, met in reverse time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{SimOptions, Trajectory};
use crate::system::{StateVec, SurfacePatch, SystemDef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointType {
    #[serde(rename = "alpha")]
    Alpha,
    #[serde(rename = "beta")]
    Beta,
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "alpha'")]
    AlphaPrime,
    #[serde(rename = "beta'")]
    BetaPrime,
    #[serde(rename = "gamma'")]
    GammaPrime,
}

impl PointType {
    pub fn as_str(self) -> &'static str {
        match self {
            PointType::Alpha => "alpha",
            PointType::Beta => "beta",
            PointType::Gamma => "gamma",
            PointType::AlphaPrime => "alpha'",
            PointType::BetaPrime => "beta'",
            PointType::GammaPrime => "gamma'",
        }
    }

    /// β and γ points make the linearized jump bivalued.
    pub fn is_bivalued(self) -> bool {
        !matches!(self, PointType::Alpha | PointType::AlphaPrime)
    }

    pub fn is_grazing(self) -> bool {
        matches!(self, PointType::Gamma | PointType::GammaPrime)
    }

    fn primed(self) -> Self {
        match self {
            PointType::Alpha => PointType::AlphaPrime,
            PointType::Beta => PointType::BetaPrime,
            PointType::Gamma => PointType::GammaPrime,
            other => other,
        }
    }
}

impl std::fmt::Display for PointType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which surface family a point is tested against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `Γ`, met in forward time.
    Forward,
    /// `Γ̃`, met in reverse time.
    Backward,
}

fn surface(sys: &SystemDef, index: usize, side: Side) -> &SurfacePatch {
    match side {
        Side::Forward => sys.patch(index),
        Side::Backward => sys.image(index),
    }
}

/// `⟨∇Φ, f⟩` at `x` for patch `index` (or its image).
pub fn transversality(sys: &SystemDef, index: usize, x: &StateVec, side: Side) -> f64 {
    surface(sys, index, side).grad_at(x).dot(&sys.field(x))
}

/// Tangency test with the relative scale `‖∇Φ‖·‖f‖·tol`.
pub fn is_tangent(sys: &SystemDef, patch: &SurfacePatch, x: &StateVec, opts: &SimOptions) -> bool {
    let grad = patch.grad_at(x);
    let f = sys.field(x);
    grad.dot(&f).abs() <= opts.graze_rel_tol * grad.norm() * f.norm()
}

/// Type of `x`, assumed to lie on patch `index` (or its image).
pub fn classify_on(sys: &SystemDef, index: usize, x: &StateVec, side: Side, opts: &SimOptions) -> PointType {
    let patch = surface(sys, index, side);
    let t = if !(patch.boundary_test)(x, opts.boundary_tol) {
        PointType::Alpha
    } else if is_tangent(sys, patch, x, opts) {
        PointType::Gamma
    } else {
        PointType::Beta
    };
    match side {
        Side::Forward => t,
        Side::Backward => t.primed(),
    }
}

/// Find the patch containing `x` and classify it. Surface membership uses the
/// grazing threshold on `|Φ|`, which is looser than the event tolerance.
pub fn classify_point(sys: &SystemDef, x: &StateVec, side: Side, opts: &SimOptions) -> Result<(usize, PointType)> {
    for index in 0..sys.discontinuities.len() {
        let patch = surface(sys, index, side);
        if patch.phi_at(x).abs() <= opts.graze_phi_tol && (patch.contains)(x, opts.boundary_tol) {
            return Ok((index, classify_on(sys, index, x, side, opts)));
        }
    }
    Err(Error::NotOnSurface { point: x.iter().copied().collect() })
}

/// 1-based indices of the vanishing coordinates of `grad`.
pub fn zero_coords(grad: &StateVec, tol: f64) -> Vec<usize> {
    let scale = grad.norm();
    grad.iter()
        .enumerate()
        .filter(|(_, g)| g.abs() <= tol * scale.max(f64::MIN_POSITIVE))
        .map(|(i, _)| i + 1)
        .collect()
}

/// Axial flags for a grazing point on patch `index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxialInfo {
    /// Decided by the image gradient `∇Φ̃`.
    pub axial: bool,
    pub image_zero_coords: Vec<usize>,
    /// Same test on `∇Φ`; differs from the image test only when `Φ ≠ Φ̃`.
    pub surface_zero_coords: Vec<usize>,
}

pub fn axial_on(sys: &SystemDef, index: usize, x: &StateVec, opts: &SimOptions) -> AxialInfo {
    let image_zero_coords = zero_coords(&sys.image(index).grad_at(x), opts.boundary_tol);
    let surface_zero_coords = zero_coords(&sys.patch(index).grad_at(x), opts.boundary_tol);
    AxialInfo { axial: !image_zero_coords.is_empty(), image_zero_coords, surface_zero_coords }
}

/// Axial test at a point of `Γ` (or `Γ̃`).
pub fn axial_flag(sys: &SystemDef, x: &StateVec, opts: &SimOptions) -> Result<AxialInfo> {
    let index = classify_point(sys, x, Side::Forward, opts)
        .or_else(|_| classify_point(sys, x, Side::Backward, opts))?
        .0;
    Ok(axial_on(sys, index, x, opts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrazeReport {
    pub theta: f64,
    pub point: Vec<f64>,
    pub surface: String,
    pub inner_product: f64,
    pub axial: bool,
    pub zero_gradient_coords: Vec<usize>,
    pub surface_zero_gradient_coords: Vec<usize>,
    pub on_boundary: bool,
}

/// One report per γ/γ′ event of the trajectory.
pub fn find_grazing_on_orbit(traj: &Trajectory) -> Vec<GrazeReport> {
    traj.events
        .iter()
        .filter(|e| e.point_type.is_grazing())
        .map(|e| GrazeReport {
            theta: e.theta,
            point: e.pre_state.iter().copied().collect(),
            surface: e.patch.clone(),
            inner_product: e.transversality,
            axial: e.axial,
            zero_gradient_coords: e.zero_coords.clone(),
            surface_zero_gradient_coords: e.surface_zero_coords.clone(),
            on_boundary: true,
        })
        .collect()
}
