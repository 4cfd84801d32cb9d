//! Numerical laboratory for the generalized Lagrangian mean curvature flow
//! of closed curves in flat almost Calabi-Yau space.
//!
//! The flow moves an immersed curve by `dF/dt = K = H - n pi_nu(grad psi)`,
//! where `psi = Re W / n` comes from a holomorphic polynomial weight on the
//! volume form. The crate simulates the flow, verifies its evolution
//! identities against finite differences, tracks the Gaussian-density
//! monotone quantity, and post-processes blow-ups into singularity reports
//! with tangent-cone angle spectra.

pub mod ambient;
pub mod archive;
pub mod config;
pub mod curve;
pub mod density;
pub mod error;
pub mod flow;
pub mod frame;
pub mod product;
pub mod singularity;
pub mod spline;
pub mod verify;

pub use ambient::AmbientSpace;
pub use curve::ImmersedCurve;
pub use flow::{FlowConfig, FlowOutcome, FlowTrace, TerminationEvent};
pub use frame::FrameData;
