//! Built-in systems and the plugin registry.
//!
//! Every builtin carries analytic Jacobians. Plugins are plain constructor
//! functions registered by the host binary before scenarios are loaded.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};
use crate::system::{
    CoordBound, Discontinuity, JumpMap, KnownCycle, Matrix, Model, ParamMatField, ParamScalarField, ParamVecField,
    PerturbedFamily, Predicate, Sampler, StateVec, SurfacePatch, SystemDef, SystemMeta,
};

pub const BUILTIN_NAMES: [&str; 4] = ["spiral-impact", "nonaxial-circle", "perturbed-impact", "impact-cycle"];

fn v2(a: f64, b: f64) -> StateVec {
    StateVec::from_vec(vec![a, b])
}

fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix {
    Matrix::from_row_slice(2, 2, &[a, b, c, d])
}

/// Growth rate of the spiral `x'' − 0.001x' + x = 0`.
pub const SPIRAL_A: f64 = 0.0005;

pub fn spiral_beta() -> f64 {
    (1.0 - SPIRAL_A * SPIRAL_A).sqrt()
}

/// Position of the grazing line: the largest `x₁` reached by the orbit
/// through `(0, 1)`, where `x₂` vanishes.
pub fn spiral_graze_x1() -> f64 {
    let b = spiral_beta();
    let t_star = (PI / 2.0 + (SPIRAL_A / b).atan()) / b;
    (SPIRAL_A * t_star).exp()
}

/// Period of the spiral cycle through `(0, 1)`.
pub fn spiral_period() -> f64 {
    PI / spiral_beta()
}

const SPIRAL_R_QUAD: f64 = 0.9;

fn spiral_r_lin() -> f64 {
    (-0.0005 * PI).exp()
}

pub fn spiral_impact() -> SystemDef {
    let b = spiral_graze_x1();
    let r_lin = spiral_r_lin();
    let domain = vec![(-1.5, 1.5), (-1.5, 1.5)];
    let f = Arc::new(|x: &StateVec| v2(x[1], -x[0] + 0.001 * x[1]));
    let fj = Arc::new(|_: &StateVec| m2(0.0, 1.0, -1.0, 0.001));

    let g1 = SurfacePatch::hyperplane("Gamma1", vec![1.0, 0.0], b, vec![CoordBound::lower(1, 0.0)], domain.clone());
    let g1t = SurfacePatch::hyperplane("Gamma1~", vec![1.0, 0.0], b, vec![CoordBound::upper(1, 0.0)], domain.clone());
    let j1 = JumpMap::analytic(
        Arc::new(|x| v2(x[0], -SPIRAL_R_QUAD * x[1] * x[1])),
        Arc::new(|x| m2(1.0, 0.0, 0.0, -2.0 * SPIRAL_R_QUAD * x[1])),
    );
    let g2 = SurfacePatch::hyperplane("Gamma2", vec![1.0, 0.0], 0.0, vec![CoordBound::upper(1, 0.0)], domain.clone());
    let g2t = SurfacePatch::hyperplane("Gamma2~", vec![1.0, 0.0], 0.0, vec![CoordBound::lower(1, 0.0)], domain.clone());
    let j2 = JumpMap::analytic(Arc::new(move |x| v2(x[0], -r_lin * x[1])), Arc::new(move |_| m2(1.0, 0.0, 0.0, -r_lin)));

    SystemDef {
        dim: 2,
        f,
        f_jacobian: fj,
        discontinuities: vec![
            Discontinuity { patch: g1, jump: j1, image: g1t },
            Discontinuity { patch: g2, jump: j2, image: g2t },
        ],
        domain,
        meta: SystemMeta {
            name: "spiral-impact".into(),
            description: "Growing spiral with a quadratic impact law on the grazing line and a linear law on x1 = 0".into(),
            grazing_points: vec![v2(b, 0.0)],
            cycles: vec![KnownCycle { label: "grazing-cycle".into(), zeta: v2(0.0, 1.0), period: spiral_period() }],
            certificate: None,
        },
    }
}

pub const NONAXIAL_K: f64 = 0.11;

pub fn nonaxial_circle() -> SystemDef {
    let k = NONAXIAL_K;
    let domain = vec![(-1.5, 1.5), (-1.5, 1.5)];
    let x_star = v2(FRAC_1_SQRT_2, FRAC_1_SQRT_2);
    let gamma = SurfacePatch::hyperplane("Gamma", vec![1.0, 1.0], SQRT_2, vec![], domain.clone());
    // the line has no geometric boundary; its only zero-jump point is x*
    let boundary: Predicate = Arc::new(|x, tol| (x[1] - x[0]).abs() <= tol);
    let xs = x_star.clone();
    let sampler: Sampler = Arc::new(move |_| xs.clone());
    let gamma = gamma.with_boundary(boundary, Some(sampler));
    let image = SurfacePatch::hyperplane("Gamma~", vec![1.0, -1.0], 0.0, vec![CoordBound::lower(0, FRAC_1_SQRT_2)], domain.clone());
    let jump = JumpMap::analytic(
        Arc::new(move |x| {
            let d = x[1] - x[0];
            let v = FRAC_1_SQRT_2 + k * d * d;
            v2(v, v)
        }),
        Arc::new(move |x| {
            let d = x[1] - x[0];
            m2(-2.0 * k * d, 2.0 * k * d, -2.0 * k * d, 2.0 * k * d)
        }),
    );
    SystemDef {
        dim: 2,
        f: Arc::new(|x| v2(x[1], -x[0])),
        f_jacobian: Arc::new(|_| m2(0.0, 1.0, -1.0, 0.0)),
        discontinuities: vec![Discontinuity { patch: gamma, jump, image }],
        domain,
        meta: SystemMeta {
            name: "nonaxial-circle".into(),
            description: "Harmonic oscillator with a slanted impact line tangent to the unit circle".into(),
            grazing_points: vec![x_star],
            cycles: vec![KnownCycle { label: "grazing-cycle".into(), zeta: v2(0.0, 1.0), period: 2.0 * PI }],
            certificate: None,
        },
    }
}

/// Perturbation of the spiral system: only the jump laws depend on `μ`.
pub fn perturbed_impact() -> PerturbedFamily {
    let base = spiral_impact();
    let e = (0.0005 * PI).exp();
    let k1: ParamVecField = Arc::new(|x, _| v2(0.0, -x[1] * x[1]));
    let k1j: ParamMatField = Arc::new(|x, _| m2(0.0, 0.0, 0.0, -2.0 * x[1]));
    let k2: ParamVecField = Arc::new(move |x, _| v2(0.0, -(x[1] - e) * x[1]));
    let k2j: ParamMatField = Arc::new(move |x, _| m2(0.0, 0.0, 0.0, -(2.0 * x[1] - e)));
    let zero_phi: ParamScalarField = Arc::new(|_, _| 0.0);
    let mut base = base;
    base.meta.name = "perturbed-impact".into();
    base.meta.description = "Spiral impact system with parameter-dependent impact laws".into();
    PerturbedFamily {
        base,
        g: Arc::new(|_, _| StateVec::zeros(2)),
        g_jacobian: Some(Arc::new(|_, _| Matrix::zeros(2, 2))),
        k_jump: vec![k1, k2],
        k_jacobian: vec![Some(k1j), Some(k2j)],
        phi_pert: vec![zero_phi.clone(), zero_phi],
        mu_range: (-0.1, 0.1),
    }
}

pub const IMPACT_R: f64 = 0.9;
pub const IMPACT_EPS: f64 = 0.0001;

/// Weakly self-excited oscillator around `(1, 0)` with an impact wall at
/// `x₁ = 0`; the unit circle through the origin is a grazing cycle at `μ = 0`.
pub fn impact_cycle() -> PerturbedFamily {
    let domain = vec![(-0.5, 2.5), (-1.5, 1.5)];
    let f = Arc::new(|x: &StateVec| {
        let q = x[1] * x[1] + (x[0] - 1.0).powi(2) - 1.0;
        v2(x[1], -IMPACT_EPS * q * x[1] - x[0] + 1.0)
    });
    let fj = Arc::new(|x: &StateVec| {
        let q = x[1] * x[1] + (x[0] - 1.0).powi(2) - 1.0;
        m2(0.0, 1.0, -IMPACT_EPS * 2.0 * (x[0] - 1.0) * x[1] - 1.0, -IMPACT_EPS * (q + 2.0 * x[1] * x[1]))
    });
    let gamma = SurfacePatch::hyperplane("Gamma", vec![1.0, 0.0], 0.0, vec![CoordBound::upper(1, 0.0)], domain.clone());
    let image = SurfacePatch::hyperplane("Gamma~", vec![1.0, 0.0], 0.0, vec![CoordBound::upper(1, 0.0)], domain.clone());
    let jump = JumpMap::analytic(
        Arc::new(|x| v2(x[0], -IMPACT_R * x[1] * x[1])),
        Arc::new(|x| m2(1.0, 0.0, 0.0, -2.0 * IMPACT_R * x[1])),
    );
    let base = SystemDef {
        dim: 2,
        f,
        f_jacobian: fj,
        discontinuities: vec![Discontinuity { patch: gamma, jump, image }],
        domain,
        meta: SystemMeta {
            name: "impact-cycle".into(),
            description: "Self-excited oscillator with a quadratic impact law on x1 = 0".into(),
            grazing_points: vec![v2(0.0, 0.0)],
            cycles: vec![KnownCycle { label: "grazing-cycle".into(), zeta: v2(2.0, 0.0), period: 2.0 * PI }],
            certificate: None,
        },
    };
    PerturbedFamily {
        base,
        g: Arc::new(|x, mu| v2(0.0, IMPACT_EPS * (2.0 + mu) * x[1])),
        g_jacobian: Some(Arc::new(|_, mu| m2(0.0, 0.0, 0.0, IMPACT_EPS * (2.0 + mu)))),
        k_jump: vec![Arc::new(|x, mu| v2(0.0, -x[1].powi(4) + mu))],
        k_jacobian: vec![Some(Arc::new(|x, _| m2(0.0, 0.0, 0.0, -4.0 * x[1].powi(3))))],
        phi_pert: vec![Arc::new(|_, _| 0.0)],
        mu_range: (-0.5, 0.5),
    }
}

pub type PluginCtor = fn() -> Model;

fn plugins() -> &'static RwLock<BTreeMap<String, PluginCtor>> {
    static REG: OnceLock<RwLock<BTreeMap<String, PluginCtor>>> = OnceLock::new();
    REG.get_or_init(|| RwLock::new(BTreeMap::new()))
}

/// Register a compiled system under `plugin:<name>`.
pub fn register_plugin(name: &str, ctor: PluginCtor) {
    plugins().write().expect("plugin registry poisoned").insert(name.to_string(), ctor);
}

pub fn available() -> Vec<String> {
    let mut names: Vec<String> = BUILTIN_NAMES.iter().map(|s| s.to_string()).collect();
    names.extend(plugins().read().expect("plugin registry poisoned").keys().map(|k| format!("plugin:{k}")));
    names
}

/// Look up a builtin by name, or a registered plugin as `plugin:<name>`.
pub fn builtin_system(name: &str) -> Result<Model> {
    match name {
        "spiral-impact" => Ok(Model::System(spiral_impact())),
        "nonaxial-circle" => Ok(Model::System(nonaxial_circle())),
        "perturbed-impact" => Ok(Model::Family(perturbed_impact())),
        "impact-cycle" => Ok(Model::Family(impact_cycle())),
        other => {
            if let Some(p) = other.strip_prefix("plugin:") {
                if let Some(ctor) = plugins().read().expect("plugin registry poisoned").get(p) {
                    return Ok(ctor());
                }
            }
            Err(Error::UnknownSystem { name: other.to_string(), available: available().join(", ") })
        }
    }
}
