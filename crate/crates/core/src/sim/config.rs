use crate::error::{Error, Result};
use crate::fitting::{derive_timetable, PatchModel, PhaseType, Timetable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Init {
    /// Every bus at the start of patch 1, gated by its own slot.
    SingleTerminus,
    /// Buses spread evenly around the loop, ordered to match their slots.
    #[default]
    Uniform,
}

/// How a terminus patch behaves while the timetable is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TerminusMode {
    /// The terminus sojourn is the wait for the slot: the bus leaves at the
    /// later of its arrival and its scheduled time.
    #[default]
    Scheduled,
    /// Sample the terminus distribution, then wait for the slot.
    DwellThenGate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedMod {
    /// Route-fraction gap to the follower above which a bus slows down.
    pub theta: f64,
    pub slowdown: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub beta: usize,
    pub timetable: bool,
    /// Loop duration for the timetable and `mu_tot`; defaults to the sum of
    /// patch means.
    pub r: Option<f64>,
    pub terminus_mode: TerminusMode,
    pub holding: Option<f64>,
    pub speedmod: Option<SpeedMod>,
    pub init: Init,
    pub seed: u64,
    /// Route-fraction span of each patch; defaults to proportional to the
    /// patch means.
    pub spans: Option<Vec<f64>>,
}

impl SimConfig {
    pub fn new(beta: usize, seed: u64) -> Self {
        SimConfig {
            beta,
            timetable: true,
            r: None,
            terminus_mode: TerminusMode::default(),
            holding: None,
            speedmod: None,
            init: Init::default(),
            seed,
            spans: None,
        }
    }
}

/// Frozen inputs of a simulation run.
#[derive(Debug, Clone)]
pub struct SimModel {
    pub patches: PatchModel,
    pub cfg: SimConfig,
    pub timetable: Timetable,
    pub starts: Vec<f64>,
    pub spans: Vec<f64>,
    /// Branches per patch as `(k, rate, cumulative weight)`.
    pub(crate) branches: Vec<Vec<(u32, f64, f64)>>,
}

impl SimModel {
    pub fn new(patches: PatchModel, cfg: SimConfig) -> Result<Self> {
        if cfg.beta == 0 {
            return Err(Error::Config("need at least one bus".into()));
        }
        if let Some(h) = cfg.holding {
            if !(h >= 0.0 && h.is_finite()) {
                return Err(Error::Config(format!("holding threshold {h} must be >= 0")));
            }
        }
        if let Some(s) = cfg.speedmod {
            if !(s.theta > 0.0 && s.theta < 1.0) {
                return Err(Error::Config(
                    "speed-modification theta must be in (0, 1)".into(),
                ));
            }
            if !(s.slowdown > 0.0 && s.slowdown <= 1.0) {
                return Err(Error::Config("slowdown factor must be in (0, 1]".into()));
            }
        }
        let n = patches.n();
        let spans = match &cfg.spans {
            Some(s) => {
                if s.len() != n {
                    return Err(Error::Config(format!(
                        "{} patch spans given for {n} patches",
                        s.len()
                    )));
                }
                let total: f64 = s.iter().sum();
                if s.iter().any(|&v| !(v > 0.0)) || (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(
                        "patch spans must be positive and sum to 1".into(),
                    ));
                }
                s.clone()
            }
            None => {
                let r = patches.r();
                patches.means.iter().map(|m| m / r).collect()
            }
        };
        let mut starts = Vec::with_capacity(n);
        let mut acc = 0.0;
        for s in &spans {
            starts.push(acc);
            acc += s;
        }
        let timetable = derive_timetable(&patches, cfg.beta, cfg.r)?;
        let branches = patches
            .dists
            .iter()
            .map(|d| {
                let mut acc = 0.0;
                let br = match d {
                    PhaseType::Erlang(e) => vec![(*e, 1.0)],
                    PhaseType::Hyper(h) => h.branches.clone(),
                };
                br.iter()
                    .map(|(e, a)| {
                        acc += a;
                        (e.k, e.rate, acc)
                    })
                    .collect()
            })
            .collect();
        Ok(SimModel {
            patches,
            cfg,
            timetable,
            starts,
            spans,
            branches,
        })
    }

    pub fn n(&self) -> usize {
        self.patches.n()
    }

    pub fn beta(&self) -> usize {
        self.cfg.beta
    }

    pub fn mu_tot(&self) -> f64 {
        self.timetable.mu_tot
    }

    /// Terminus patch whose sojourn is replaced by the slot wait.
    pub(crate) fn scheduled_terminus(&self, j: usize) -> bool {
        self.cfg.timetable
            && self.cfg.terminus_mode == TerminusMode::Scheduled
            && self.patches.is_terminus(j)
    }

    /// Slot for bus `i` leaving terminus `j` on lap `d`; departures must
    /// come strictly after it.
    pub(crate) fn slot(&self, i: usize, j: usize, d: i64) -> f64 {
        self.timetable.r * d as f64 + self.timetable.h(i, j)
    }
}
