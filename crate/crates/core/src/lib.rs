//! Global EDF scheduling of soft real-time sporadic tasks on uniform
//! heterogeneous multiprocessors, with exact rational arithmetic throughout.

// Error values carry the offending rationals.
#![allow(clippy::result_large_err)]

pub mod bounds;
pub mod model;
pub mod oracle;
pub mod rational;
pub mod seed;
pub mod simulator;
pub mod taskgen;

pub use model::{Platform, SpeedClass, SporadicTask, SystemFile, TaskId, TaskSystem};
pub use rational::{rat, Rational};
