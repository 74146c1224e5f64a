//! Bike-rider two-mass model on an elliptic-torus pump track.
//!
//! The bike is a point mass on a fixed riding line of the torus surface; the
//! rider is a second point mass on a massless link of variable length `l`.
//! Driving `l'' = u` ("pumping") accelerates the bike through banked curves
//! without pedalling. The crate provides the kinematics, the equations of
//! motion, an RK4 rollout, a single-shooting optimal-control solver, and the
//! motion-capture pipeline that produces the link bounds.
//!
//! Geometry, dynamics and the integrator step are generic over [`Real`]
//! (`f32`, `f64`, or [`Dual`] for forward-mode derivatives); the aliases
//! below fix the scalar for the common cases.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod format;
pub mod geometry;
pub mod mocap;
pub mod ocp;
pub mod scalar;
pub mod simulate;

pub use config::ScenarioConfig;
pub use dynamics::{Control, EomCoefficients, State, StateDerivative, SystemParams};
pub use error::{Error, Result};
pub use geometry::{SurfaceCoord, TrackGeometry, Vec3};
pub use scalar::{Dual, Real};
pub use simulate::{Bounds, Scenario, Trajectory};

pub type TrackGeometry64 = TrackGeometry<f64>;
pub type TrackGeometry32 = TrackGeometry<f32>;
pub type SystemParams64 = SystemParams<f64>;
pub type SystemParams32 = SystemParams<f32>;
pub type State64 = State<f64>;
pub type State32 = State<f32>;
pub type Control64 = Control<f64>;
pub type Control32 = Control<f32>;
pub type Vec3_64 = Vec3<f64>;
pub type Vec3_32 = Vec3<f32>;
pub type EomCoefficients64 = EomCoefficients<f64>;
pub type EomCoefficients32 = EomCoefficients<f32>;
