//! The stages from traces to a fitted patch model, each callable on its own
//! so a run can resume from any stored intermediate.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fitting::{
    anderson_darling, extract_crossing_times, fit_erlang_capped, fit_hyper_erlang, CrossingParams,
    GofReport, HyperFitOptions, PatchModel, PhaseType,
};
use crate::ingest::TraceSet;
use crate::mapgen::{
    build_graph, derive_route_model, gaussian_blur, rasterize_heatmap, skeletonize, GraphParams,
    HeatmapParams, Raster, RouteGraph, RouteModel, RouteParams, SkeletonMask, TerminusRule,
};
use crate::patches::{
    bin_counts, jenks_cluster, merge_adjacent_cluster, BinCounts, PatchStructure,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clustering {
    Jenks,
    MergeAdjacent,
}

#[derive(Debug, Clone)]
pub struct PipelineParams {
    pub heatmap: HeatmapParams,
    /// Blur standard deviation in cells.
    pub sigma: f64,
    /// Skeleton threshold as a fraction of the blurred maximum.
    pub tau: f64,
    /// Erosion per thinning pass, same units as `tau`.
    pub eta: f64,
    pub graph: GraphParams,
    /// Snapping radius in cells.
    pub reject_cells: f64,
    pub terminus_rule: TerminusRule,
    pub min_separation: f64,
    pub start_hint: Option<(f64, f64)>,
    pub gamma: usize,
    pub n: usize,
    pub clustering: Clustering,
    pub crossings: CrossingParams,
    /// Branches per patch; 1 fits a plain Erlang.
    pub branches: usize,
    pub hyper: HyperFitOptions,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            heatmap: HeatmapParams::default(),
            sigma: 2.0,
            tau: 0.02,
            eta: 0.01,
            graph: GraphParams::default(),
            reject_cells: 3.0,
            terminus_rule: TerminusRule::Dwell,
            min_separation: 0.25,
            start_hint: None,
            gamma: 50,
            n: 10,
            clustering: Clustering::Jenks,
            crossings: CrossingParams::default(),
            branches: 1,
            hyper: HyperFitOptions::default(),
        }
    }
}

/// Everything a full run produces, in stage order.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub heatmap: Raster,
    pub blurred: Raster,
    pub skeleton: SkeletonMask,
    pub graph: RouteGraph,
    pub route: RouteModel,
    pub counts: BinCounts,
    pub patches: PatchStructure,
    pub observations: Vec<Vec<f64>>,
    pub model: PatchModel,
    pub gof: Vec<Option<GofReport>>,
}

/// Rasters are kept at PGM precision so that stored and in-memory runs agree.
pub fn heatmap(ts: &TraceSet, p: &PipelineParams) -> Result<Raster> {
    Ok(rasterize_heatmap(ts, &p.heatmap)?.quantized())
}

pub fn blur(r: &Raster, p: &PipelineParams) -> Raster {
    gaussian_blur(r, p.sigma).quantized()
}

pub fn skeleton(blurred: &Raster, p: &PipelineParams) -> Result<SkeletonMask> {
    let max = blurred.max();
    skeletonize(blurred, p.tau * max, p.eta * max)
}

pub fn graph(mask: &SkeletonMask, p: &PipelineParams) -> Result<RouteGraph> {
    build_graph(mask, &p.graph)
}

pub fn route(
    g: &RouteGraph,
    ts: &TraceSet,
    cell_size: f64,
    p: &PipelineParams,
) -> Result<RouteModel> {
    let mut rp = RouteParams::with_radius(p.reject_cells * cell_size);
    rp.max_gap = p.crossings.max_gap;
    rp.rule = p.terminus_rule;
    rp.min_separation = p.min_separation;
    rp.start_hint = p.start_hint;
    derive_route_model(g, ts, &rp)
}

pub fn patches(
    ts: &TraceSet,
    rm: &RouteModel,
    p: &PipelineParams,
) -> Result<(BinCounts, PatchStructure)> {
    let counts = bin_counts(ts, rm, p.gamma)?;
    let ps = match p.clustering {
        Clustering::Jenks => jenks_cluster(&counts, p.n)?,
        Clustering::MergeAdjacent => merge_adjacent_cluster(&counts)?,
    };
    Ok((counts, ps))
}

pub fn observations(
    ts: &TraceSet,
    rm: &RouteModel,
    ps: &PatchStructure,
    p: &PipelineParams,
) -> Vec<Vec<f64>> {
    extract_crossing_times(ts, rm, ps, &p.crossings)
}

/// Patches holding the two terminus edges. Each terminus edge may overlap
/// several patches; the one with the most measurements per unit span wins,
/// since dwelling buses pile up reports there.
pub fn terminus_patches(rm: &RouteModel, ps: &PatchStructure, counts: &BinCounts) -> [usize; 2] {
    let gamma = counts.gamma() as f64;
    let density = |j: usize| {
        let (a, b) = (ps.start(j), ps.start(j) + ps.span(j));
        let lo = (a * gamma).round() as usize;
        let hi = ((b * gamma).round() as usize)
            .max(lo + 1)
            .min(counts.gamma());
        counts.counts[lo..hi].iter().sum::<u64>() as f64 / (b - a)
    };
    let pick = |from: f64, to: f64, skip: Option<usize>| {
        (0..ps.n())
            .filter(|&j| ps.start(j) < to && ps.start(j) + ps.span(j) > from)
            .filter(|&j| Some(j) != skip)
            .max_by(|&a, &b| density(a).total_cmp(&density(b)).then(b.cmp(&a)))
    };
    let span =
        |e: &crate::mapgen::DirectedEdge| (e.offset / rm.total, (e.offset + e.length) / rm.total);
    let (a0, a1) = span(&rm.dirs[0].edges[0]);
    let (b0, b1) = span(&rm.dirs[1].edges[0]);
    let t0 = pick(a0, a1, None).unwrap_or(0);
    let t1 = pick(b0, b1, Some(t0))
        .unwrap_or_else(|| ps.patch_of(b0.min(1.0 - 1e-12)).unwrap_or(ps.n() / 2));
    [t0, t1]
}

/// Fits every patch and scores the fit. Patches with fewer than three
/// crossings get no goodness-of-fit row.
pub fn fit(
    obs: &[Vec<f64>],
    termini: [usize; 2],
    p: &PipelineParams,
) -> Result<(PatchModel, Vec<Option<GofReport>>)> {
    let mut dists = Vec::with_capacity(obs.len());
    for (j, o) in obs.iter().enumerate() {
        let d = if p.branches <= 1 {
            fit_erlang_capped(o, p.hyper.k_cap).map(PhaseType::Erlang)
        } else {
            fit_hyper_erlang(o, p.branches, &p.hyper)
        }
        .map_err(|e| Error::invalid(format!("patch {}: {e}", j + 1)))?;
        dists.push(d);
    }
    let gof = obs
        .iter()
        .zip(&dists)
        .map(|(o, d)| anderson_darling(o, d).ok())
        .collect();
    Ok((PatchModel::new(dists, termini)?, gof))
}

pub fn run(ts: &TraceSet, p: &PipelineParams) -> Result<PipelineOutput> {
    let heat = heatmap(ts, p)?;
    let blurred = blur(&heat, p);
    let skel = skeleton(&blurred, p)?;
    let g = graph(&skel, p)?;
    let rm = route(&g, ts, heat.cell_size, p)?;
    let (counts, ps) = patches(ts, &rm, p)?;
    let obs = observations(ts, &rm, &ps, p);
    let termini = terminus_patches(&rm, &ps, &counts);
    let (model, gof) = fit(&obs, termini, p)?;
    Ok(PipelineOutput {
        heatmap: heat,
        blurred,
        skeleton: skel,
        graph: g,
        route: rm,
        counts,
        patches: ps,
        observations: obs,
        model,
        gof,
    })
}

/// One `patch<TAB>duration` row per crossing, patches 1-based.
pub fn observations_tsv(obs: &[Vec<f64>]) -> String {
    let mut s = String::from("patch\tduration\n");
    for (j, o) in obs.iter().enumerate() {
        for x in o {
            let _ = writeln!(s, "{}\t{x}", j + 1);
        }
    }
    s
}

pub fn parse_observations_tsv(text: &str, n: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![Vec::new(); n];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("patch")) {
            continue;
        }
        let bad = || Error::invalid(format!("observations line {}: `{line}`", i + 1));
        let (a, b) = line.split_once('\t').ok_or_else(bad)?;
        let j: usize = a.trim().parse().map_err(|_| bad())?;
        let x: f64 = b.trim().parse().map_err(|_| bad())?;
        if j == 0 || j > n {
            return Err(bad());
        }
        out[j - 1].push(x);
    }
    Ok(out)
}

pub fn gof_tsv(gof: &[Option<GofReport>]) -> String {
    let mut s = String::from(GofReport::TSV_HEADER);
    s.push('\n');
    for (j, g) in gof.iter().enumerate() {
        if let Some(g) = g {
            s += &g.tsv_row(j + 1);
            s.push('\n');
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observations_round_trip() {
        let obs = vec![vec![1.5, 2.0], vec![], vec![300.0]];
        let text = observations_tsv(&obs);
        assert_eq!(parse_observations_tsv(&text, 3).unwrap(), obs);
        assert!(parse_observations_tsv("patch\tduration\n4\t1\n", 3).is_err());
    }
}
