//! Discrete-event simulation of buses moving through phase-type patches.

mod config;
mod engine;
mod observables;

pub use config::{Init, SimConfig, SimModel, SpeedMod, TerminusMode};
pub use engine::{Event, EventKind, Simulator};
pub use observables::Observable;
