//! Coupled replicator dynamics on the assignment manifold, their Lagrangian
//! mechanics, and the S-flow metric-data-labeling pipeline.
//!
//! The state space is the product of open probability simplices, realized as
//! row-stochastic positive matrices and equipped with the Fisher-Rao product
//! metric ([`manifold`]). Affinity maps couple the per-node replicator
//! equations over a graph ([`affinity`]); the resulting flow is the velocity
//! of a classical Lagrangian system whose potential is minus half the summed
//! assignment variances ([`mechanics`]). Geometric and classical integrators,
//! plus the Jacobi-metric reparametrization under which admissible flows move
//! at constant speed, live in [`integrate`]; the data-labeling pipeline and
//! the critical-set analysis in [`labeling`]; executable verification of the
//! structural claims in [`verify`].
//!
//! Evolving a two-node flow under symmetric averaging, the energy of each
//! state paired with its own velocity stays pinned at zero:
//!
//! ```
//! use afmech_core::affinity::OmegaAffinity;
//! use afmech_core::integrate::{integrate_first_order, IntegratorConfig, Method};
//! use afmech_core::manifold::AssignmentMatrix;
//! use afmech_core::mechanics::{energy, flow_field, LagrangianState};
//! use ndarray::array;
//!
//! let omega = OmegaAffinity::new(array![[0.5, 0.5], [0.5, 0.5]])?;
//! let w0 = AssignmentMatrix::new(array![[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]])?;
//! let cfg = IntegratorConfig {
//!     method: Method::Rk4,
//!     h: 0.01,
//!     t_end: 1.0,
//!     record_stride: 10,
//!     eps_conv: 1e-3,
//! };
//! let trajectory = integrate_first_order(&omega, &w0, &cfg)?;
//! for w in &trajectory.states {
//!     let v = flow_field(&omega, w)?;
//!     let e = energy(&omega, &LagrangianState::new(w.clone(), v)?)?;
//!     assert!(e.abs() <= 1e-12);
//! }
//! # Ok::<(), afmech_core::AfError>(())
//! ```

pub mod affinity;
pub mod error;
pub mod integrate;
pub mod io;
pub mod labeling;
pub mod manifold;
pub mod mechanics;
pub mod verify;

pub use error::{AfError, Result};
pub use manifold::{AssignmentMatrix, SimplexPoint, TangentMatrix, TangentVector};
