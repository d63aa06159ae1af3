//! Domain types for impulsive systems `x' = f(x)`, `Δx|Γ = J(x) − x`.
//!
//! Everything here is an immutable value built from `Arc`ed closures, so a
//! [`SystemDef`] can be cloned cheaply and shared across threads.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

pub type StateVec = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub type VecField = Arc<dyn Fn(&StateVec) -> StateVec + Send + Sync>;
pub type MatField = Arc<dyn Fn(&StateVec) -> Matrix + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(&StateVec) -> f64 + Send + Sync>;
/// Predicate with an absolute tolerance argument.
pub type Predicate = Arc<dyn Fn(&StateVec, f64) -> bool + Send + Sync>;
pub type Sampler = Arc<dyn Fn(&mut dyn RngCore) -> StateVec + Send + Sync>;

pub type ParamVecField = Arc<dyn Fn(&StateVec, f64) -> StateVec + Send + Sync>;
pub type ParamMatField = Arc<dyn Fn(&StateVec, f64) -> Matrix + Send + Sync>;
pub type ParamScalarField = Arc<dyn Fn(&StateVec, f64) -> f64 + Send + Sync>;

/// Central-difference Jacobian with step `h = max(1e-6, 1e-6·|x_j|)`.
pub fn fd_jacobian(f: &dyn Fn(&StateVec) -> StateVec, x: &StateVec) -> Matrix {
    let n = x.len();
    let m = f(x).len();
    let mut jac = Matrix::zeros(m, n);
    for j in 0..n {
        let h = (1e-6 * x[j].abs()).max(1e-6);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Central-difference gradient of a scalar field (same step rule).
pub fn fd_gradient(phi: &dyn Fn(&StateVec) -> f64, x: &StateVec) -> StateVec {
    let n = x.len();
    let mut g = StateVec::zeros(n);
    for j in 0..n {
        let h = (1e-6 * x[j].abs()).max(1e-6);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        g[j] = (phi(&xp) - phi(&xm)) / (2.0 * h);
    }
    g
}

/// Bound on one coordinate of a surface patch. `lo`/`hi` are inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordBound {
    pub coord: usize,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl CoordBound {
    pub fn upper(coord: usize, hi: f64) -> Self {
        CoordBound { coord, lo: None, hi: Some(hi) }
    }
    pub fn lower(coord: usize, lo: f64) -> Self {
        CoordBound { coord, lo: Some(lo), hi: None }
    }
}

/// A piece of the discontinuity surface `Γ = Φ⁻¹(0)` with explicit bounds.
#[derive(Clone)]
pub struct SurfacePatch {
    pub label: String,
    pub phi: ScalarField,
    pub grad_phi: VecField,
    /// Membership of a point of `Φ⁻¹(0)` in the patch (closure included).
    pub contains: Predicate,
    /// Membership in `∂Γ`.
    pub boundary_test: Predicate,
    pub interior_sampler: Option<Sampler>,
    pub boundary_sampler: Option<Sampler>,
}

impl fmt::Debug for SurfacePatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SurfacePatch").field("label", &self.label).finish_non_exhaustive()
    }
}

impl SurfacePatch {
    /// Patch of the hyperplane `normal·x = offset` restricted by coordinate
    /// bounds, sampled inside `domain`.
    pub fn hyperplane(
        label: &str,
        normal: Vec<f64>,
        offset: f64,
        bounds: Vec<CoordBound>,
        domain: Vec<(f64, f64)>,
    ) -> Self {
        let nrm = StateVec::from_vec(normal);
        let nn = nrm.norm_squared();
        let n_phi = nrm.clone();
        let n_grad = nrm.clone();
        let b_contains = bounds.clone();
        let b_boundary = bounds.clone();

        let contains: Predicate = Arc::new(move |x, tol| {
            b_contains.iter().all(|b| {
                b.lo.is_none_or(|lo| x[b.coord] >= lo - tol)
                    && b.hi.is_none_or(|hi| x[b.coord] <= hi + tol)
            })
        });
        let contains_inner = contains.clone();
        let boundary_test: Predicate = Arc::new(move |x, tol| {
            contains_inner(x, tol)
                && b_boundary.iter().any(|b| {
                    b.lo.is_some_and(|lo| (x[b.coord] - lo).abs() <= tol)
                        || b.hi.is_some_and(|hi| (x[b.coord] - hi).abs() <= tol)
                })
        });

        let project = {
            let nrm = nrm.clone();
            move |p: StateVec| -> StateVec {
                let d = nrm.dot(&p) - offset;
                p - &nrm * (d / nn)
            }
        };
        let interior_sampler: Sampler = {
            let domain = domain.clone();
            let contains = contains.clone();
            let project = project.clone();
            Arc::new(move |rng: &mut dyn RngCore| {
                let mut last = None;
                for _ in 0..1000 {
                    let p = sample_box(&domain, rng);
                    let q = project(p);
                    if contains(&q, 0.0) {
                        return q;
                    }
                    last = Some(q);
                }
                last.expect("at least one sample drawn")
            })
        };
        let boundary_sampler: Option<Sampler> = if bounds.is_empty() {
            None
        } else {
            let domain = domain.clone();
            let nrm = nrm.clone();
            let bounds = bounds.clone();
            Some(Arc::new(move |rng: &mut dyn RngCore| {
                let candidates: Vec<(usize, f64)> = bounds
                    .iter()
                    .flat_map(|b| {
                        b.lo.map(|v| (b.coord, v)).into_iter().chain(b.hi.map(|v| (b.coord, v)))
                    })
                    .collect();
                let (coord, value) = candidates[rng.random_range(0..candidates.len())];
                let mut p = sample_box(&domain, rng);
                p[coord] = value;
                // project along the normal with the pinned coordinate frozen
                let mut m = nrm.clone();
                m[coord] = 0.0;
                let mm = m.norm_squared();
                if mm > 0.0 {
                    let d = nrm.dot(&p) - offset;
                    p -= &m * (d / mm);
                }
                p
            }))
        };

        SurfacePatch {
            label: label.to_string(),
            phi: Arc::new(move |x| n_phi.dot(x) - offset),
            grad_phi: Arc::new(move |_| n_grad.clone()),
            contains,
            boundary_test,
            interior_sampler: Some(interior_sampler),
            boundary_sampler,
        }
    }

    /// Replace the boundary description (predicate and sampler).
    pub fn with_boundary(mut self, test: Predicate, sampler: Option<Sampler>) -> Self {
        self.boundary_test = test;
        self.boundary_sampler = sampler;
        self
    }

    pub fn phi_at(&self, x: &StateVec) -> f64 {
        (self.phi)(x)
    }

    pub fn grad_at(&self, x: &StateVec) -> StateVec {
        (self.grad_phi)(x)
    }
}

fn sample_box(domain: &[(f64, f64)], rng: &mut dyn RngCore) -> StateVec {
    StateVec::from_iterator(
        domain.len(),
        domain.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()),
    )
}

/// Draw a uniform point of the box `domain`.
pub fn sample_domain(domain: &[(f64, f64)], rng: &mut dyn RngCore) -> StateVec {
    sample_box(domain, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    FiniteDifference,
}

/// The jump `J` on one patch, with its Jacobian.
#[derive(Clone)]
pub struct JumpMap {
    pub j_of: VecField,
    pub j_jacobian: MatField,
    pub provenance: Provenance,
}

impl fmt::Debug for JumpMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JumpMap").field("provenance", &self.provenance).finish_non_exhaustive()
    }
}

impl JumpMap {
    pub fn analytic(j_of: VecField, j_jacobian: MatField) -> Self {
        JumpMap { j_of, j_jacobian, provenance: Provenance::Analytic }
    }

    /// Jump with a finite-difference Jacobian.
    pub fn from_map(j_of: VecField) -> Self {
        let inner = j_of.clone();
        JumpMap {
            j_of,
            j_jacobian: Arc::new(move |x| fd_jacobian(&|y| inner(y), x)),
            provenance: Provenance::FiniteDifference,
        }
    }

    pub fn identity() -> Self {
        JumpMap::analytic(Arc::new(|x| x.clone()), Arc::new(|x| Matrix::identity(x.len(), x.len())))
    }

    pub fn apply(&self, x: &StateVec) -> StateVec {
        (self.j_of)(x)
    }

    pub fn jacobian(&self, x: &StateVec) -> Matrix {
        (self.j_jacobian)(x)
    }
}

/// A surface patch together with the jump applied on it and the image patch
/// `Γ̃ = J(Γ)`.
#[derive(Debug, Clone)]
pub struct Discontinuity {
    pub patch: SurfacePatch,
    pub jump: JumpMap,
    pub image: SurfacePatch,
}

/// A periodic orbit known in closed form, used to seed analyses.
#[derive(Debug, Clone)]
pub struct KnownCycle {
    pub label: String,
    pub zeta: StateVec,
    pub period: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SystemMeta {
    pub name: String,
    pub description: String,
    pub grazing_points: Vec<StateVec>,
    pub cycles: Vec<KnownCycle>,
    /// Declared invariant-region certificate; lets C3/C9/C10 be reported as declared.
    pub certificate: Option<String>,
}

/// Complete model of an impulsive system with variable impulse moments.
#[derive(Clone)]
pub struct SystemDef {
    pub dim: usize,
    pub f: VecField,
    pub f_jacobian: MatField,
    pub discontinuities: Vec<Discontinuity>,
    /// Box used for sampling diagnostics.
    pub domain: Vec<(f64, f64)>,
    pub meta: SystemMeta,
}

impl fmt::Debug for SystemDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemDef")
            .field("name", &self.meta.name)
            .field("dim", &self.dim)
            .field("discontinuities", &self.discontinuities)
            .finish_non_exhaustive()
    }
}

impl SystemDef {
    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn field(&self, x: &StateVec) -> StateVec {
        (self.f)(x)
    }

    pub fn jacobian(&self, x: &StateVec) -> Matrix {
        (self.f_jacobian)(x)
    }

    pub fn patch(&self, index: usize) -> &SurfacePatch {
        &self.discontinuities[index].patch
    }

    pub fn image(&self, index: usize) -> &SurfacePatch {
        &self.discontinuities[index].image
    }

    pub fn jump(&self, index: usize) -> &JumpMap {
        &self.discontinuities[index].jump
    }

    pub fn patch_index(&self, label: &str) -> Option<usize> {
        self.discontinuities.iter().position(|d| d.patch.label == label)
    }

    /// System with the same field and no discontinuities.
    pub fn without_surfaces(&self) -> SystemDef {
        let mut s = self.clone();
        s.discontinuities.clear();
        s
    }
}

/// Perturbed family `x' = f(x) + μ g(x,μ)`, `Δx|Γ(μ) = I(x) + μ K(x,μ)`,
/// `Γ(μ) = {Φ(x) + μ φ(x,μ) = 0}`.
#[derive(Clone)]
pub struct PerturbedFamily {
    pub base: SystemDef,
    pub g: ParamVecField,
    pub g_jacobian: Option<ParamMatField>,
    /// One jump perturbation per discontinuity of `base`.
    pub k_jump: Vec<ParamVecField>,
    pub k_jacobian: Vec<Option<ParamMatField>>,
    /// One surface perturbation per discontinuity of `base`.
    pub phi_pert: Vec<ParamScalarField>,
    pub mu_range: (f64, f64),
}

impl fmt::Debug for PerturbedFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbedFamily")
            .field("base", &self.base.meta.name)
            .field("mu_range", &self.mu_range)
            .finish_non_exhaustive()
    }
}

impl PerturbedFamily {
    /// Unperturbed family around `base`.
    pub fn trivial(base: SystemDef) -> Self {
        let k = base.discontinuities.len();
        let n = base.dim;
        PerturbedFamily {
            base,
            g: Arc::new(move |_, _| StateVec::zeros(n)),
            g_jacobian: Some(Arc::new(move |_, _| Matrix::zeros(n, n))),
            k_jump: (0..k).map(|_| -> ParamVecField { Arc::new(move |_, _| StateVec::zeros(n)) }).collect(),
            k_jacobian: (0..k)
                .map(|_| -> Option<ParamMatField> { Some(Arc::new(move |_, _| Matrix::zeros(n, n))) })
                .collect(),
            phi_pert: (0..k).map(|_| -> ParamScalarField { Arc::new(|_, _| 0.0) }).collect(),
            mu_range: (-1.0, 1.0),
        }
    }

    /// The member of the family at parameter `mu`.
    pub fn at(&self, mu: f64) -> SystemDef {
        if mu == 0.0 {
            return self.base.clone();
        }
        let mut sys = self.base.clone();
        let f0 = self.base.f.clone();
        let g = self.g.clone();
        sys.f = Arc::new(move |x| f0(x) + g(x, mu) * mu);
        let fj0 = self.base.f_jacobian.clone();
        sys.f_jacobian = match &self.g_jacobian {
            Some(gj) => {
                let gj = gj.clone();
                Arc::new(move |x| fj0(x) + gj(x, mu) * mu)
            }
            None => {
                let g = self.g.clone();
                Arc::new(move |x| fj0(x) + fd_jacobian(&|y| g(y, mu), x) * mu)
            }
        };
        for (i, disc) in sys.discontinuities.iter_mut().enumerate() {
            let j0 = disc.jump.j_of.clone();
            let k = self.k_jump[i].clone();
            let jj0 = disc.jump.j_jacobian.clone();
            let j_of: VecField = Arc::new(move |x| j0(x) + k(x, mu) * mu);
            let j_jacobian: MatField = match &self.k_jacobian[i] {
                Some(kj) => {
                    let kj = kj.clone();
                    Arc::new(move |x| jj0(x) + kj(x, mu) * mu)
                }
                None => {
                    let k = self.k_jump[i].clone();
                    Arc::new(move |x| jj0(x) + fd_jacobian(&|y| k(y, mu), x) * mu)
                }
            };
            disc.jump = JumpMap { j_of, j_jacobian, provenance: disc.jump.provenance };

            let phi0 = disc.patch.phi.clone();
            let grad0 = disc.patch.grad_phi.clone();
            let p = self.phi_pert[i].clone();
            let p2 = p.clone();
            disc.patch.phi = Arc::new(move |x| phi0(x) + mu * p(x, mu));
            disc.patch.grad_phi =
                Arc::new(move |x| grad0(x) + fd_gradient(&|y| p2(y, mu), x) * mu);
        }
        sys.meta.name = format!("{}@mu={}", self.base.meta.name, mu);
        sys
    }
}

/// Either a single system or a parameter family.
#[derive(Debug, Clone)]
pub enum Model {
    System(SystemDef),
    Family(PerturbedFamily),
}

impl Model {
    pub fn base(&self) -> &SystemDef {
        match self {
            Model::System(s) => s,
            Model::Family(f) => &f.base,
        }
    }

    pub fn at(&self, mu: f64) -> SystemDef {
        match self {
            Model::System(s) => s.clone(),
            Model::Family(f) => f.at(mu),
        }
    }

    /// View as a family (a plain system becomes a trivial family).
    pub fn family(&self) -> PerturbedFamily {
        match self {
            Model::System(s) => PerturbedFamily::trivial(s.clone()),
            Model::Family(f) => f.clone(),
        }
    }
}
