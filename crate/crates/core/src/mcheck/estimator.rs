use std::time::{Duration, Instant};

use statrs::distribution::{ContinuousCDF, StudentsT};

use super::eval::Compiled;
use crate::error::{Error, Result};
use crate::sim::{Observable, SimModel, Simulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Satisfied,
    Violated,
    Undecided,
    /// The event never contributed a nonzero sample.
    Unobserved,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Satisfied => "satisfied",
            Verdict::Violated => "violated",
            Verdict::Undecided => "undecided",
            Verdict::Unobserved => "unobserved",
        }
    }

    /// Decision rule against `F < threshold`.
    pub fn decide(estimate: f64, half_width: f64, threshold: f64) -> Verdict {
        if estimate + half_width < threshold {
            Verdict::Satisfied
        } else if estimate - half_width >= threshold {
            Verdict::Violated
        } else {
            Verdict::Undecided
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    /// Simulated seconds discarded first; defaults to ten loop durations.
    pub warmup: Option<f64>,
    pub min_batches: usize,
    pub target_rel_half_width: f64,
    pub confidence: f64,
    pub max_wall: Duration,
    /// Optional cap on simulated time, for reproducible bounded runs.
    pub max_sim_time: Option<f64>,
    /// Batch size in clock units; defaults to one loop duration for `time`
    /// and 8 departures for counters.
    pub initial_batch: Option<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            warmup: None,
            min_batches: 32,
            target_rel_half_width: 0.1,
            confidence: 0.95,
            max_wall: Duration::from_secs(300),
            max_sim_time: None,
            initial_batch: None,
        }
    }
}

/// A steady-state property `S[F, C] < threshold` ready to evaluate.
#[derive(Debug, Clone)]
pub struct SteadyStateQuery {
    pub name: String,
    pub f: Compiled<Observable>,
    pub clock: Observable,
    pub threshold: f64,
    /// Zero-based patch the property refers to, if any.
    pub patch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub name: String,
    pub patch: Option<usize>,
    pub threshold: f64,
    /// `None` when the event was never observed.
    pub estimate: Option<f64>,
    pub half_width: f64,
    pub rel_half_width: f64,
    pub batches: usize,
    /// Clock increment accumulated after warmup.
    pub clock_total: f64,
    pub sim_time: f64,
    pub verdict: Verdict,
    pub observed: bool,
    /// Samples dropped because a state variable was undefined.
    pub skipped: u64,
}

impl EstimateResult {
    pub const TSV_HEADER: &'static str =
        "id\tpatch\testimate\thalf_width\tverdict\tbatches\tsim_time";

    pub fn tsv_row(&self) -> String {
        let patch = self.patch.map_or("-".to_string(), |p| (p + 1).to_string());
        match self.estimate {
            Some(e) => format!(
                "{}\t{patch}\t{e:.6}\t{:.6}\t{}\t{}\t{:.1}",
                self.name,
                self.half_width,
                self.verdict.as_str(),
                self.batches,
                self.sim_time
            ),
            None => format!(
                "{}\t{patch}\t-\t-\t-\t{}\t{:.1}",
                self.name, self.batches, self.sim_time
            ),
        }
    }
}

/// Non-overlapping batch means over a clock-weighted stream. Batches hold
/// equal clock increments; an increment that crosses a batch boundary is
/// split. When `2 * k` batches are full, neighbours are merged pairwise and
/// the batch size doubles, so between `k` and `2k` batches are kept.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    size: f64,
    k: usize,
    cur_w: f64,
    cur_sum: f64,
    means: Vec<f64>,
}

impl BatchMeans {
    pub fn new(size: f64, k: usize) -> Self {
        assert!(size > 0.0 && k >= 1);
        BatchMeans {
            size,
            k,
            cur_w: 0.0,
            cur_sum: 0.0,
            means: Vec::new(),
        }
    }

    pub fn push(&mut self, mut dc: f64, f: f64) {
        loop {
            let room = self.size - self.cur_w;
            if dc < room {
                self.cur_w += dc;
                self.cur_sum += dc * f;
                return;
            }
            self.cur_sum += room * f;
            self.means.push(self.cur_sum / self.size);
            self.cur_w = 0.0;
            self.cur_sum = 0.0;
            dc -= room;
            if self.means.len() == 2 * self.k {
                self.means = self.means.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect();
                self.size *= 2.0;
            }
        }
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn batch_size(&self) -> f64 {
        self.size
    }

    /// Mean of batch means and the Student-t half-width at `confidence`.
    pub fn interval(&self, confidence: f64) -> Option<(f64, f64)> {
        t_interval(&self.means, confidence)
    }
}

/// Plain Student-t interval of a sample mean.
pub fn t_interval(xs: &[f64], confidence: f64) -> Option<(f64, f64)> {
    let k = xs.len();
    if k < 2 {
        return None;
    }
    let kf = k as f64;
    let mean = xs.iter().sum::<f64>() / kf;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (kf - 1.0);
    let t = StudentsT::new(0.0, 1.0, kf - 1.0)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + confidence / 2.0);
    Some((mean, t * (var / kf).sqrt()))
}

struct Running<'q> {
    q: &'q SteadyStateQuery,
    bm: BatchMeans,
    min_f: f64,
    max_f: f64,
    observed: bool,
    raw_c: f64,
    clock_total: f64,
    skipped: u64,
    done: bool,
    frozen_at: f64,
}

impl Running<'_> {
    fn summary(&self, cfg: &EstimatorConfig, sim_time: f64) -> EstimateResult {
        let k = self.bm.means().len();
        let constant = self.clock_total > 0.0 && self.min_f == self.max_f;
        let (est, hw) = if constant {
            (self.min_f, 0.0)
        } else {
            self.bm
                .interval(cfg.confidence)
                .unwrap_or((f64::NAN, f64::INFINITY))
        };
        let rel = if hw == 0.0 { 0.0 } else { hw / est.abs() };
        let verdict = if !self.observed {
            Verdict::Unobserved
        } else if est.is_nan() {
            Verdict::Undecided
        } else {
            Verdict::decide(est, hw, self.q.threshold)
        };
        EstimateResult {
            name: self.q.name.clone(),
            patch: self.q.patch,
            threshold: self.q.threshold,
            estimate: self.observed.then_some(est),
            half_width: hw,
            rel_half_width: rel,
            batches: k,
            clock_total: self.clock_total,
            sim_time,
            verdict,
            observed: self.observed,
            skipped: self.skipped,
        }
    }

    fn finished(&self, cfg: &EstimatorConfig, sim_time: f64) -> bool {
        if !self.observed || self.bm.means().len() < cfg.min_batches {
            return false;
        }
        let r = self.summary(cfg, sim_time);
        // An estimate sitting at rounding noise never reaches a relative
        // target, so a half-width negligible against the threshold also counts.
        let negligible = r.half_width <= 1e-9 * self.q.threshold.abs();
        matches!(r.verdict, Verdict::Satisfied | Verdict::Violated)
            && (r.rel_half_width <= cfg.target_rel_half_width || negligible)
    }
}

pub fn estimate_steady_state(
    model: &SimModel,
    q: &SteadyStateQuery,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    Ok(estimate_all(model, std::slice::from_ref(q), cfg)?.remove(0))
}

/// Estimates several queries on one trajectory. Each query stops
/// accumulating once it meets the stopping rule; the run ends when all
/// observed queries have stopped or a budget runs out. A query whose event
/// was never seen keeps sampling as long as the run goes on.
pub fn estimate_all(
    model: &SimModel,
    qs: &[SteadyStateQuery],
    cfg: &EstimatorConfig,
) -> Result<Vec<EstimateResult>> {
    for q in qs {
        if !q.clock.is_clock() {
            return Err(Error::Config(format!(
                "`{}`: clock must be time or c_j",
                q.name
            )));
        }
    }
    let r = model.timetable.r;
    let mut run: Vec<Running> = qs
        .iter()
        .map(|q| {
            let size = cfg.initial_batch.unwrap_or(match q.clock {
                Observable::Time => r,
                _ => 8.0,
            });
            Running {
                q,
                bm: BatchMeans::new(size, cfg.min_batches.max(2)),
                min_f: f64::INFINITY,
                max_f: f64::NEG_INFINITY,
                observed: false,
                raw_c: 0.0,
                clock_total: 0.0,
                skipped: 0,
                done: false,
                frozen_at: f64::NAN,
            }
        })
        .collect();

    let start = Instant::now();
    let mut sim = Simulator::new(model);
    let warmup = cfg.warmup.unwrap_or(10.0 * r);
    sim.run_until(warmup, |_| {});
    let stall_after = warmup + 100.0 * r;
    let mut t_prev = warmup;
    let mut steps: u64 = 0;
    loop {
        let (t_next, _, dep) = sim.peek_event();
        if cfg.max_sim_time.is_some_and(|cap| t_next > cap) {
            break;
        }
        for st in run.iter_mut().filter(|s| !s.done) {
            let dc = match st.q.clock {
                Observable::Time => t_next - t_prev,
                Observable::C(j) => (dep == Some(j)) as u8 as f64,
                _ => unreachable!(),
            };
            if dc <= 0.0 {
                continue;
            }
            st.raw_c += dc;
            match st.q.f.eval(&|o| sim.value(*o, t_next))? {
                Some(x) => {
                    st.bm.push(dc, x);
                    st.clock_total += dc;
                    st.min_f = st.min_f.min(x);
                    st.max_f = st.max_f.max(x);
                    st.observed |= x != 0.0;
                }
                None => st.skipped += 1,
            }
        }
        sim.step();
        t_prev = t_next;
        steps += 1;
        if steps.is_multiple_of(1024) {
            let now = sim.time();
            if now > stall_after {
                if let Some(st) = run.iter().find(|s| s.raw_c == 0.0) {
                    return Err(Error::StalledClock(format!(
                        "clock of `{}` did not advance in {:.0} s of simulated time",
                        st.q.name,
                        now - warmup
                    )));
                }
            }
            for st in run.iter_mut().filter(|s| !s.done) {
                if st.finished(cfg, now) {
                    st.done = true;
                    st.frozen_at = now;
                }
            }
            let observed_left = run.iter().any(|s| !s.done && s.observed);
            let any_done = run.iter().any(|s| s.done);
            let waiting_only_unseen = run.iter().all(|s| s.done || !s.observed);
            if !observed_left && (run.iter().all(|s| s.done) || (any_done && waiting_only_unseen)) {
                break;
            }
            if start.elapsed() >= cfg.max_wall {
                break;
            }
        }
    }
    if run.iter().any(|s| s.raw_c == 0.0) {
        let st = run.iter().find(|s| s.raw_c == 0.0).unwrap();
        return Err(Error::StalledClock(format!(
            "clock of `{}` never advanced",
            st.q.name
        )));
    }
    let end = sim.time();
    Ok(run
        .iter()
        .map(|s| s.summary(cfg, if s.done { s.frozen_at } else { end }))
        .collect())
}
