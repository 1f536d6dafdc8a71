//! Generalized kicked-top quantum sensor: open-system dynamics with a
//! parameter derivative, quantum Fisher information, and cross-entropy
//! reinforcement learning of kick schedules.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

pub mod classical;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod metrology;
pub mod net;
pub mod policy;
pub mod quasiprob;
pub mod scalar;
pub mod spin;
pub mod trainer;

pub use dynamics::{Decoherence, DynamicsParams};
pub use env::{Action, EnvConfig, RewardMode};
pub use error::{Error, Result};
pub use policy::{Kick, KickPolicy};
pub use scalar::Real;
pub use spin::{CoherentStateParams, SpinQuantum};
pub use trainer::TrainerConfig;

pub type DensityMatrix = spin::DensityMatrix<f64>;
pub type SpinOperators = spin::SpinOperators<f64>;
pub type StateWithDerivative = dynamics::StateWithDerivative<f64>;
pub type Propagators = dynamics::Propagators<f64>;
pub type Environment = env::Environment<f64>;
pub type PolicyNetwork = net::PolicyNetwork<f64>;
