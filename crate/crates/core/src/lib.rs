//! Impulsive differential equations with state-dependent jumps and grazing
//! periodic orbits.
//!
//! A system is `x' = f(x)` away from the surfaces `Γ_i = {Φ_i = 0}` and
//! `x⁺ = J_i(x)` on them. The crate simulates such systems in both time
//! directions, classifies contact points, linearizes around grazing cycles
//! (one variational branch per choice at each bivalued event), computes
//! Floquet multipliers and continues periodic orbits of perturbed families.
//!
//! ```
//! use grazing_core::builtins::{spiral_impact, spiral_period};
//! use grazing_core::integrate::{simulate, SimOptions};
//! use grazing_core::system::StateVec;
//!
//! let sys = spiral_impact();
//! let x0 = StateVec::from_vec(vec![0.0, 1.0]);
//! let tr = simulate(&sys, &x0, 0.0, spiral_period(), &SimOptions::default()).unwrap();
//! assert_eq!(tr.events.len(), 2);
//! assert!((tr.final_state() - &x0).norm() < 1e-7);
//! ```

pub mod builtins;
pub mod conditions;
pub mod continuation;
pub mod error;
pub mod export;
pub mod floquet;
pub mod graze;
pub mod integrate;
pub mod linearize;
pub mod system;

pub use builtins::{builtin_system, register_plugin};
pub use error::{Error, ErrorKind, Result};
pub use graze::PointType;
pub use integrate::{simulate, simulate_backward, SimOptions, Trajectory};
pub use system::{Model, PerturbedFamily, StateVec, SystemDef};
