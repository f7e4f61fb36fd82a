use std::collections::HashMap;

use super::ast::Program;
use super::estimator::{estimate_all, EstimateResult, EstimatorConfig, SteadyStateQuery};
use super::eval::compile;
use crate::error::{Error, Result};
use crate::sim::{Observable, SimModel};

impl SteadyStateQuery {
    /// Compiles `S[func(), clock] < threshold` against `model`.
    pub fn from_program(
        prog: &Program,
        func: &str,
        clock: &str,
        threshold: f64,
        model: &SimModel,
    ) -> Result<Self> {
        let (n, beta) = (model.n(), model.beta());
        let resolve = |name: &str| Observable::parse(name, n, beta);
        let mut constants = HashMap::new();
        constants.insert("mu_tot".to_string(), model.mu_tot());
        let f = compile(prog, func, &resolve, &constants)?;
        let clock_obs = resolve(clock)?;
        if !clock_obs.is_clock() {
            return Err(Error::Config(format!("`{clock}` cannot serve as a clock")));
        }
        if !threshold.is_finite() {
            return Err(Error::Config("threshold must be finite".into()));
        }
        let patch = match clock_obs {
            Observable::C(j) => Some(j),
            _ => f.vars().into_iter().find_map(|v| match v {
                Observable::Y(j) | Observable::H(j) | Observable::C(j) => Some(*j),
                _ => None,
            }),
        };
        Ok(SteadyStateQuery {
            name: func.to_string(),
            f,
            clock: clock_obs,
            threshold,
            patch,
        })
    }
}

/// Estimates every assertion of `prog` on a single trajectory.
pub fn check_assertions(
    model: &SimModel,
    prog: &Program,
    cfg: &EstimatorConfig,
) -> Result<Vec<EstimateResult>> {
    let qs = prog
        .assertions
        .iter()
        .map(|a| SteadyStateQuery::from_program(prog, &a.func, &a.clock, a.threshold, model))
        .collect::<Result<Vec<_>>>()?;
    estimate_all(model, &qs, cfg)
}

/// The three headway requirements for every patch: excess waiting time
/// below 75 s and extreme waits and thin hours each below 5%.
pub fn headway_properties(n: usize) -> String {
    let mut defs = String::new();
    let mut asserts = String::new();
    for j in 1..=n {
        defs += &format!(
            "ewt_{j}() = 0.5 * (s.rval(\"y_{j}\") - mu_tot) * (s.rval(\"y_{j}\") - mu_tot) / mu_tot;\n\
             evwt_{j}() = if {{s.rval(\"y_{j}\") > 900}} then 1 else 0 fi;\n\
             bph_{j}() = if {{s.rval(\"H_{j}\") < 6}} then 1 else 0 fi;\n"
        );
        asserts += &format!(
            "S [ ewt_{j}(), \"c_{j}\" ] < 75;\n\
             S [ evwt_{j}(), \"c_{j}\" ] < 0.05;\n\
             S [ bph_{j}(), \"time\" ] < 0.05;\n"
        );
    }
    defs + &asserts
}

/// Results as TSV with a header line.
pub fn results_tsv(results: &[EstimateResult]) -> String {
    let mut s = String::from(EstimateResult::TSV_HEADER);
    s.push('\n');
    for r in results {
        s += &r.tsv_row();
        s.push('\n');
    }
    s
}
