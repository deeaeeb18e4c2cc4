//! Exact best-of-n policies over finite response spaces, win-rate and KL
//! analytics against the optimal exponential tilt, seeded Monte Carlo, and
//! tabular training of BoNBoN-style alignment objectives.

pub mod analytics;
pub mod policy;
pub mod sampling;
pub mod space;
pub mod synth;
pub mod tilt;
pub mod training;

pub use policy::{bon_policy_exact, tilted_policy, worst_of_n_policy_exact, DiscretePolicy, PolicyError};
pub use sampling::{PreferenceDataset, PreferenceRecord, Rng};
pub use space::{ResponseSpace, SpaceError, SpaceRecord};
pub use tilt::TiltFunction;
