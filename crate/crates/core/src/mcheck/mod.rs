//! Steady-state properties: a small expression language over simulator
//! state and a batch-means estimator.

mod ast;
mod check;
mod estimator;
mod eval;
mod lexer;

pub use ast::{parse_quatex, Assertion, BinOp, CmpOp, Def, Expr, Program};
pub use check::{check_assertions, headway_properties, results_tsv};
pub use estimator::{
    estimate_all, estimate_steady_state, t_interval, BatchMeans, EstimateResult, EstimatorConfig,
    SteadyStateQuery, Verdict,
};
pub use eval::{compile, Compiled};
pub use lexer::Pos;
