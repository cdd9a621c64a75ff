//! Actor-critic machinery: the policy/value network, categorical sampling,
//! n-step advantages, clipped RMSprop updates and checkpoints.

pub mod a2c;
pub mod checkpoint;
pub mod dist;
pub mod net;

pub use a2c::{A2c, A2cConfig, Losses, Sample, Step, Trajectory, UpdateOutcome};
pub use checkpoint::Checkpoint;
pub use net::{Architecture, Forward, PolicyValueNet};
