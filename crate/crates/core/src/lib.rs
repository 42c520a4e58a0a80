//! Multi-power-mode job assignment for server farms.
//!
//! The crate computes the MPMP priority indices of a farm instance, runs the
//! MPMP, JSQ and PAS dispatch policies in a discrete-event simulator, and
//! checks them against exact Markov-chain and Markov-decision-process solves
//! on small instances.

pub mod error;
pub mod indices;
pub mod markov;
pub mod model;
pub mod numfmt;
pub mod oracle;
pub mod policies;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
