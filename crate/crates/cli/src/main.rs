use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod config;
mod stages;

use config::Settings;
use stages::{Run, Stage};

#[derive(Parser)]
#[command(
    name = "patchmc",
    version,
    about = "AVL traces to patch models to headway checks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML file with default settings; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Raw AVL file (ingest and pipeline)
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse, filter and optionally normalise raw AVL records
    Ingest(Common),
    Heatmap(Common),
    Blur(Common),
    Skeleton(Common),
    Graph(Common),
    /// Snap traces to the graph and find termini and directions
    Route(Common),
    /// Bin counts and patch boundaries
    Patches(Common),
    /// Crossing times, per-patch fits and goodness of fit
    Fit(Common),
    /// Estimate the headway properties; exits 1 if any is violated
    Check(Common),
    /// Run the fleet and write the event log
    Simulate(Common),
    /// Every stage from ingest to check
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Skip the stages before this one and reuse their artifacts
        #[arg(long, value_enum)]
        resume_from: Option<Stage>,
    },
    /// Write a synthetic eight-patch loop as AVL records
    Synth {
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        loops: Option<usize>,
    },
}

fn setup(c: Common) -> Result<Run> {
    let s = match &c.config {
        Some(path) => c.settings.over(Settings::load(path)?),
        None => c.settings,
    };
    Run::new(s, c.input)
}

fn stage(c: Common, st: Stage) -> Result<bool, (String, anyhow::Error)> {
    let run = setup(c).map_err(|e| ("setup".to_string(), e))?;
    run.run(st).map_err(|e| (st.name().to_string(), e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res: Result<bool, (String, anyhow::Error)> = match cli.cmd {
        Cmd::Ingest(c) => stage(c, Stage::Ingest),
        Cmd::Heatmap(c) => stage(c, Stage::Heatmap),
        Cmd::Blur(c) => stage(c, Stage::Blur),
        Cmd::Skeleton(c) => stage(c, Stage::Skeleton),
        Cmd::Graph(c) => stage(c, Stage::Graph),
        Cmd::Route(c) => stage(c, Stage::Route),
        Cmd::Patches(c) => stage(c, Stage::Patches),
        Cmd::Fit(c) => stage(c, Stage::Fit),
        Cmd::Check(c) => stage(c, Stage::Check),
        Cmd::Simulate(c) => setup(c)
            .and_then(|r| r.simulate())
            .map(|_| true)
            .map_err(|e| ("simulate".to_string(), e)),
        Cmd::Pipeline {
            common,
            resume_from,
        } => (|| {
            let run = setup(common).map_err(|e| ("setup".to_string(), e))?;
            let from = resume_from.unwrap_or(Stage::Ingest);
            let mut ok = true;
            for st in Stage::ALL.into_iter().filter(|&s| s >= from) {
                eprintln!("stage {}", st.name());
                ok &= run.run(st).map_err(|e| (st.name().to_string(), e))?;
            }
            Ok(ok)
        })(),
        Cmd::Synth { out, seed, loops } => stages::synth(&out, seed, loops)
            .map(|_| true)
            .map_err(|e| ("synth".to_string(), e)),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err((st, e)) => {
            eprintln!("patchmc: stage `{st}` failed: {e:#}");
            ExitCode::from(2)
        }
    }
}
