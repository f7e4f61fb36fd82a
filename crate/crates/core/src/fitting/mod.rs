//! Crossing-time extraction and phase-type fitting per patch.

mod crossings;
mod dist;
mod erlang;
mod gof;
mod hyper;
mod model;

pub use crossings::{extract_crossing_times, CrossingParams};
pub use dist::{Erlang, HyperErlang, PhaseType};
pub use erlang::{
    erlang_profile_loglik, fit_erlang, fit_erlang_capped, fit_erlang_weighted, DEFAULT_K_CAP,
};
pub use gof::{ad_pvalue, ad_statistic, anderson_darling, cdf_comparison, GofReport};
pub use hyper::{fit_hyper_erlang, fit_hyper_erlang_traced, HyperFit, HyperFitOptions};
pub use model::{derive_timetable, PatchModel, Timetable};
