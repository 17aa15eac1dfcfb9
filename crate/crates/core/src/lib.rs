//! Leader-follower network aggregative games under stochastic communication.
//!
//! Followers run projected sub-gradient steps on stale views of their
//! neighbors; a leader wakes periodically and steps on the true aggregate.

pub mod comm;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod game;
pub mod harness;
pub mod schedule;
pub mod smallcell;

pub use error::{Agent, Error, Result};
