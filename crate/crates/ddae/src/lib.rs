//! Numerical stability and accuracy analysis of the Theta method for
//! delay differential-algebraic systems.
//!
//! The crate covers four layers:
//!
//! - [`dde_scalar`]: closed-form stability analysis of the Theta method on
//!   the scalar test ODE and the scalar test delay differential equation,
//!   including stability-region rasterization.
//! - [`ddae_core`]: nonlinear delay DAE systems in Hessenberg form, their
//!   delay structure, equilibria and linearization into the matrix family
//!   (E, A0, A1..Ar).
//! - [`theta_integrator`]: fixed-step time-domain integration of those
//!   systems by the Theta method with linear delay interpolation and a
//!   per-step Newton solve.
//! - [`pencil_analysis`]: characteristic roots of the linearized delay
//!   system (Chebyshev collocation seeds plus Newton refinement), the
//!   block pencil of the Theta-discretized recurrence, the logarithmic
//!   back-transform, deformation reports and damping-matching searches.
//!
//! The `ddae` binary (see [`cli`]) drives all of it and writes plain
//! CSV/PGM/JSON outputs together with a reproducible run manifest.

pub mod cli;
pub mod dde_scalar;
pub mod ddae_core;
pub mod export;
pub mod model_io;
pub mod pencil_analysis;
pub mod theta_integrator;

pub use dde_scalar::ThetaParams;
pub use ddae_core::{DdaeSystem, DelaySpec, EquilibriumPoint, LinearDelayModel};
pub use pencil_analysis::{DeformationReport, DiscretePencil, EigenSpectrum};
pub use theta_integrator::SimulationResult;
