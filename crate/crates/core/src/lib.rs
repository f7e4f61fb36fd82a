//! Patch-based phase-type models of a transit route, built from raw AVL traces.
//!
//! The pipeline turns GPS reports into a route graph, cuts the route into
//! patches, fits Erlang or hyper-Erlang crossing times per patch, and then
//! simulates the fleet to estimate headway-regularity metrics with a small
//! steady-state property language.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fitting;
pub mod ingest;
pub mod mapgen;
pub mod mcheck;
pub mod patches;
pub mod pipeline;
pub mod presets;
pub mod sim;
pub mod synth;

pub use error::{Error, Result};
pub use fitting::{
    anderson_darling, derive_timetable, extract_crossing_times, fit_erlang, fit_hyper_erlang,
    Erlang, GofReport, HyperErlang, PatchModel, PhaseType, Timetable,
};
pub use ingest::{AffineTransform, AvlRecord, Fix, Schema, TimeWindow, TraceSet};
pub use mapgen::{Raster, RouteGraph, RouteModel, SkeletonMask};
pub use mcheck::{EstimateResult, EstimatorConfig, Verdict};
pub use patches::{BinCounts, PatchStructure};
pub use sim::{SimConfig, SimModel, Simulator};
