use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use patchmc::fitting::{cdf_comparison, CrossingParams, PatchModel};
use patchmc::ingest::{
    filter_window, normalize_coordinates, parse_records, write_records, Column, Schema, TimeFormat,
    TimeWindow, TraceSet, Weekdays,
};
use patchmc::mapgen::{
    GraphParams, HeatmapParams, Raster, RouteGraph, RouteModel, SkeletonMask, TerminusRule,
};
use patchmc::mcheck::{check_assertions, headway_properties, parse_quatex, results_tsv};
use patchmc::patches::PatchStructure;
use patchmc::pipeline::{self, Clustering, PipelineParams};
use patchmc::sim::{Event, Init, SimConfig, SimModel, Simulator, SpeedMod, TerminusMode};
use patchmc::{presets, EstimatorConfig, Verdict};

use crate::config::{clock_time, Settings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Stage {
    Ingest,
    Heatmap,
    Blur,
    Skeleton,
    Graph,
    Route,
    Patches,
    Fit,
    Check,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Heatmap,
        Stage::Blur,
        Stage::Skeleton,
        Stage::Graph,
        Stage::Route,
        Stage::Patches,
        Stage::Fit,
        Stage::Check,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Heatmap => "heatmap",
            Stage::Blur => "blur",
            Stage::Skeleton => "skeleton",
            Stage::Graph => "graph",
            Stage::Route => "route",
            Stage::Patches => "patches",
            Stage::Fit => "fit",
            Stage::Check => "check",
        }
    }
}

pub const TRACES: &str = "traces.csv";
pub const HEATMAP: &str = "heatmap.pgm";
pub const BLURRED: &str = "blurred.pgm";
pub const SKELETON: &str = "skeleton.pgm";
pub const GRAPH: &str = "graph.txt";
pub const ROUTE: &str = "route.txt";
pub const PATCHES: &str = "patches.txt";
pub const OBSERVATIONS: &str = "observations.tsv";
pub const MODEL: &str = "model.txt";
pub const GOF: &str = "gof.tsv";
pub const RESULTS: &str = "results.tsv";

pub struct Run {
    pub s: Settings,
    pub input: Option<PathBuf>,
    pub dir: PathBuf,
}

/// Outcome of a run: whether every assertion held (or was never observed).
pub type Passed = bool;

impl Run {
    pub fn new(s: Settings, input: Option<PathBuf>) -> Result<Self> {
        let dir = s.out_dir();
        fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Run { s, input, dir })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn read(&self, name: &str) -> Result<String> {
        let p = self.path(name);
        fs::read_to_string(&p).with_context(|| format!("cannot read {}", p.display()))
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))
    }

    pub fn params(&self) -> Result<PipelineParams> {
        let s = &self.s;
        let d = PipelineParams::default();
        let heat = HeatmapParams::default();
        Ok(PipelineParams {
            heatmap: HeatmapParams {
                cell_size: s.cell_size.or(heat.cell_size),
                delta: s.delta.unwrap_or(heat.delta),
                boost: s.boost.unwrap_or(heat.boost),
                max_gap: s.max_gap.unwrap_or(heat.max_gap),
                max_jump: s.max_jump.unwrap_or(heat.max_jump),
                ..heat
            },
            sigma: s.sigma.unwrap_or(d.sigma),
            tau: s.tau.unwrap_or(d.tau),
            eta: s.eta.unwrap_or(d.eta),
            graph: GraphParams {
                eps: s.eps.unwrap_or(d.graph.eps),
                m: s.m.unwrap_or(d.graph.m),
            },
            reject_cells: s.reject_cells.unwrap_or(d.reject_cells),
            terminus_rule: match s.terminus_rule.as_deref() {
                None | Some("dwell") => TerminusRule::Dwell,
                Some("extremes") => TerminusRule::PathExtremes,
                Some(o) => bail!("unknown terminus_rule `{o}`"),
            },
            gamma: s.gamma.unwrap_or(d.gamma),
            n: s.n.unwrap_or(d.n),
            clustering: match s.clustering.as_deref() {
                None | Some("jenks") => Clustering::Jenks,
                Some("merge") => Clustering::MergeAdjacent,
                Some(o) => bail!("unknown clustering `{o}`"),
            },
            crossings: CrossingParams {
                max_gap: s.max_gap.unwrap_or(d.crossings.max_gap),
                max_jump: s.max_jump.unwrap_or(d.crossings.max_jump),
            },
            branches: s.branches.unwrap_or(d.branches),
            hyper: patchmc::fitting::HyperFitOptions {
                seed: s.seed.unwrap_or(0),
                ..d.hyper
            },
            ..d
        })
    }

    fn schema(&self) -> Result<Schema> {
        let s = &self.s;
        let d = Schema::default();
        let col =
            |v: &Option<String>, dflt: Column| v.as_deref().map_or(dflt, |c| c.parse().unwrap());
        let delimiter = match s.delimiter {
            Some(c) if c.is_ascii() => c as u8,
            Some(c) => bail!("delimiter `{c}` is not ASCII"),
            None => d.delimiter,
        };
        Ok(Schema {
            delimiter,
            has_header: s.header.unwrap_or(d.has_header),
            vehicle: col(&s.col_vehicle, d.vehicle),
            x: col(&s.col_x, d.x),
            y: col(&s.col_y, d.y),
            t: col(&s.col_t, d.t),
            route: match (&s.col_route, &s.route_value) {
                (Some(c), Some(v)) => Some((c.parse().unwrap(), v.clone())),
                (None, None) => None,
                _ => bail!("col_route and route_value go together"),
            },
            time_format: match s.time_format.as_deref() {
                None | Some("unix") => TimeFormat::UnixSeconds,
                Some("iso8601") => TimeFormat::Iso8601,
                Some(o) => bail!("unknown time_format `{o}`"),
            },
        })
    }

    fn raster(&self, name: &str) -> Result<Raster> {
        let p = self.path(name);
        Raster::read_pgm(&p).with_context(|| format!("cannot read {}", p.display()))
    }

    fn mask(&self) -> Result<SkeletonMask> {
        let p = self.path(SKELETON);
        SkeletonMask::read_pgm(&p).with_context(|| format!("cannot read {}", p.display()))
    }

    fn traces(&self) -> Result<TraceSet> {
        let p = self.path(TRACES);
        let f = fs::File::open(&p).with_context(|| format!("cannot open {}", p.display()))?;
        Ok(parse_records(f, &Schema::default())?.0)
    }

    fn graph(&self) -> Result<RouteGraph> {
        RouteGraph::from_text(&self.read(GRAPH)?).map_err(|e| anyhow!("{GRAPH}: {e}"))
    }

    fn route(&self, g: &RouteGraph) -> Result<RouteModel> {
        RouteModel::from_text(&self.read(ROUTE)?, g).map_err(|e| anyhow!("{ROUTE}: {e}"))
    }

    fn patches(&self) -> Result<(PatchStructure, Option<[usize; 2]>)> {
        let text = self.read(PATCHES)?;
        let ps = PatchStructure::from_text(&text)?;
        let termini = text.lines().find_map(|l| {
            let f: Vec<&str> = l.trim_start_matches('#').split_whitespace().collect();
            match f[..] {
                ["termini", a, b] => {
                    Some([a.parse::<usize>().ok()? - 1, b.parse::<usize>().ok()? - 1])
                }
                _ => None,
            }
        });
        Ok((ps, termini))
    }

    pub fn run(&self, stage: Stage) -> Result<Passed> {
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Heatmap => {
                let r = pipeline::heatmap(&self.traces()?, &self.params()?)?;
                r.write_pgm(&self.path(HEATMAP))?;
                Ok(true)
            }
            Stage::Blur => {
                let r = self.raster(HEATMAP)?;
                pipeline::blur(&r, &self.params()?).write_pgm(&self.path(BLURRED))?;
                Ok(true)
            }
            Stage::Skeleton => {
                let r = self.raster(BLURRED)?;
                pipeline::skeleton(&r, &self.params()?)?.write_pgm(&self.path(SKELETON))?;
                Ok(true)
            }
            Stage::Graph => {
                let m = self.mask()?;
                let g = pipeline::graph(&m, &self.params()?)?;
                self.write(GRAPH, &g.to_text())?;
                Ok(true)
            }
            Stage::Route => {
                let m = self.mask()?;
                let rm = pipeline::route(
                    &self.graph()?,
                    &self.traces()?,
                    m.cell_size,
                    &self.params()?,
                )?;
                self.write(ROUTE, &rm.to_text())?;
                Ok(true)
            }
            Stage::Patches => {
                let g = self.graph()?;
                let rm = self.route(&g)?;
                let (counts, ps) = pipeline::patches(&self.traces()?, &rm, &self.params()?)?;
                let t = pipeline::terminus_patches(&rm, &ps, &counts);
                let mut text = format!("# termini {} {}\n", t[0] + 1, t[1] + 1);
                let _ = writeln!(
                    text,
                    "# counts {}",
                    counts
                        .counts
                        .iter()
                        .map(u64::to_string)
                        .collect::<Vec<_>>()
                        .join(" ")
                );
                text += &ps.to_text();
                self.write(PATCHES, &text)?;
                Ok(true)
            }
            Stage::Fit => self.fit(),
            Stage::Check => self.check(),
        }
    }

    fn ingest(&self) -> Result<Passed> {
        let input = self
            .input
            .as_ref()
            .ok_or_else(|| anyhow!("--input is required"))?;
        let f =
            fs::File::open(input).with_context(|| format!("cannot open {}", input.display()))?;
        let (mut ts, report) = parse_records(f, &self.schema()?)?;
        if self.s.window_start.is_some() || self.s.window_end.is_some() || self.s.weekdays.is_some()
        {
            let start = self.s.window_start.as_deref().map_or(Ok(0), clock_time)?;
            let end = self
                .s
                .window_end
                .as_deref()
                .map_or(Ok(86_400), clock_time)?;
            let days = match &self.s.weekdays {
                Some(w) => w.parse::<Weekdays>()?,
                None => Weekdays::ALL,
            };
            ts = filter_window(
                &ts,
                &TimeWindow::new(start, end, days)?,
                self.s.tz_offset.unwrap_or(0),
            );
        }
        if self.s.normalize.unwrap_or(false) {
            let (n, tf) = normalize_coordinates(&ts)?;
            ts = n;
            self.write(
                "transform.txt",
                &format!(
                    "scale {}\noffset {} {}\n",
                    tf.scale, tf.offset_x, tf.offset_y
                ),
            )?;
        }
        let mut buf = Vec::new();
        write_records(&ts, &mut buf)?;
        fs::write(self.path(TRACES), buf)?;
        eprintln!(
            "ingest: {} rows, {} kept, {} malformed, {} duplicates, {} other route, {} in window",
            report.rows,
            report.accepted,
            report.malformed,
            report.duplicates,
            report.other_route,
            ts.len()
        );
        Ok(true)
    }

    fn fit(&self) -> Result<Passed> {
        let p = self.params()?;
        let g = self.graph()?;
        let rm = self.route(&g)?;
        let (ps, termini) = self.patches()?;
        let ts = self.traces()?;
        let obs = pipeline::observations(&ts, &rm, &ps, &p);
        let termini = termini.ok_or_else(|| anyhow!("{PATCHES} has no `# termini` line"))?;
        let (model, gof) = pipeline::fit(&obs, termini, &p)?;
        self.write(OBSERVATIONS, &pipeline::observations_tsv(&obs))?;
        self.write(MODEL, &model.to_text())?;
        self.write(GOF, &pipeline::gof_tsv(&gof))?;
        for (j, (o, d)) in obs.iter().zip(&model.dists).enumerate() {
            self.write(&format!("cdf_{:02}.tsv", j + 1), &cdf_comparison(o, d, 200))?;
        }
        Ok(true)
    }

    /// The model to simulate and its route spans.
    fn sim_model(&self) -> Result<SimModel> {
        let s = &self.s;
        let (pm, spans, beta, r) = match s.preset.as_deref() {
            Some(name) => {
                let p = presets::by_name(name).ok_or_else(|| anyhow!("unknown preset `{name}`"))?;
                (
                    p.model.clone(),
                    Some(p.spans()),
                    s.beta.unwrap_or(p.beta),
                    s.r.or(Some(p.r)),
                )
            }
            None => {
                let pm = PatchModel::from_text(&self.read(MODEL)?)?;
                let spans = self
                    .patches()
                    .ok()
                    .map(|(ps, _)| (0..ps.n()).map(|j| ps.span(j)).collect::<Vec<_>>())
                    .filter(|v| v.len() == pm.n());
                let beta = s.beta.ok_or_else(|| anyhow!("--beta is required"))?;
                (pm, spans, beta, s.r)
            }
        };
        let mut cfg = SimConfig::new(beta, s.seed()?);
        cfg.r = r;
        cfg.spans = spans;
        cfg.timetable = s.timetable.unwrap_or(true);
        cfg.terminus_mode = match s.terminus_mode.as_deref() {
            None | Some("scheduled") => TerminusMode::Scheduled,
            Some("dwell-then-gate") => TerminusMode::DwellThenGate,
            Some(o) => bail!("unknown terminus_mode `{o}`"),
        };
        cfg.holding = s.theta_h;
        cfg.speedmod = s.theta_s.map(|theta| SpeedMod {
            theta,
            slowdown: s.slowdown.unwrap_or(0.9),
        });
        cfg.init = match s.init.as_deref() {
            None | Some("uniform") => Init::Uniform,
            Some("single-terminus") => Init::SingleTerminus,
            Some(o) => bail!("unknown init `{o}`"),
        };
        Ok(SimModel::new(pm, cfg)?)
    }

    fn check(&self) -> Result<Passed> {
        let model = self.sim_model()?;
        let text = match &self.s.properties {
            Some(p) => {
                fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?
            }
            None => headway_properties(model.n()),
        };
        let prog = parse_quatex(&text)?;
        let mut cfg = EstimatorConfig::default();
        if let Some(w) = self.s.max_wall {
            cfg.max_wall = Duration::from_secs_f64(w);
        }
        cfg.max_sim_time = self.s.max_sim_time;
        if let Some(t) = self.s.rel_half_width {
            cfg.target_rel_half_width = t;
        }
        let results = check_assertions(&model, &prog, &cfg)?;
        let tsv = results_tsv(&results);
        self.write(RESULTS, &tsv)?;
        print!("{tsv}");
        Ok(results
            .iter()
            .all(|r| matches!(r.verdict, Verdict::Satisfied | Verdict::Unobserved)))
    }

    pub fn simulate(&self) -> Result<()> {
        let model = self.sim_model()?;
        let duration = self.s.duration.unwrap_or(10.0 * model.timetable.r);
        let mut sim = Simulator::new(&model);
        let mut log = String::from(Event::TSV_HEADER);
        log.push('\n');
        let mut departures = vec![0u64; model.n()];
        sim.run_until(duration, |e| {
            log += &e.tsv_row();
            log.push('\n');
            if let patchmc::sim::EventKind::Depart { from, .. } = e.kind {
                departures[from] += 1;
            }
        });
        self.write("events.tsv", &log)?;
        println!("simulated {duration} s, {} events", sim.events());
        for (j, d) in departures.iter().enumerate() {
            println!("patch {}\t{d} departures", j + 1);
        }
        Ok(())
    }
}

pub fn synth(out: &Path, seed: u64, loops: Option<usize>) -> Result<()> {
    let mut spec = patchmc::synth::SynthSpec::eight_patch_loop(seed);
    if let Some(l) = loops {
        spec.loops = l;
    }
    let (ts, truth) = spec.generate()?;
    fs::create_dir_all(out)?;
    let mut buf = Vec::new();
    write_records(&ts, &mut buf)?;
    fs::write(out.join("synthetic.csv"), buf)?;
    let mut t = format!("loop_length {}\nhalf {}\n", truth.loop_length, truth.half);
    for (j, (b, m)) in truth.breaks.iter().zip(&truth.means).enumerate() {
        let _ = writeln!(t, "patch {} start {b} mean {m}", j + 1);
    }
    fs::write(out.join("truth.txt"), t)?;
    Ok(())
}
