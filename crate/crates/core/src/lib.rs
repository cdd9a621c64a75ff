//! Multi-cell 5G downlink simulator with an O-RAN style control loop for
//! PMI selection.
//!
//! The crate is organized bottom-up: [`topology`] and [`channel`] produce link
//! gains and fading matrices, [`codebook`], [`phy`] and [`csi`] turn them into
//! precoders, SINR and CSI reports, [`sim`] ties these into a per-TTI network
//! environment, [`bus`] carries reports and directives, [`xapp`] and [`rl`]
//! implement the agents, and [`harness`] runs experiments.

pub mod bus;
pub mod channel;
pub mod cmat;
pub mod codebook;
pub mod csi;
pub mod error;
pub mod harness;
pub mod phy;
pub mod rl;
pub mod rng;
pub mod sim;
pub mod topology;
pub mod xapp;

pub use error::{Error, Result};
