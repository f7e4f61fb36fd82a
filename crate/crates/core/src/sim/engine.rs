use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::config::{Init, SimModel};
use super::observables::Observable;

const HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// A phase completed inside `patch`.
    Phase { patch: usize },
    /// The bus left `from` and entered `to`.
    Depart { from: usize, to: usize },
    /// The bus is ready to leave `patch` but gated until `until`.
    Hold { patch: usize, until: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub bus: usize,
    pub kind: EventKind,
    /// Lap counter of the bus after the event.
    pub lap: i64,
}

impl Event {
    pub const TSV_HEADER: &'static str = "t\tbus\tkind\tpatch\tlap";

    /// One-based bus and patch numbers.
    pub fn tsv_row(&self) -> String {
        let (kind, patch) = match self.kind {
            EventKind::Phase { patch } => ("phase", patch),
            EventKind::Depart { from, .. } => ("depart", from),
            EventKind::Hold { patch, .. } => ("hold", patch),
        };
        format!(
            "{:.3}\t{}\t{kind}\t{}\t{}",
            self.t,
            self.bus + 1,
            patch + 1,
            self.lap
        )
    }
}

#[derive(Debug, Clone)]
struct Bus {
    patch: usize,
    k: u32,
    rate: f64,
    done: u32,
    next: f64,
    /// Waiting at a gate rather than running a phase.
    gated: bool,
    lap: i64,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    model: SimModel,
    rng: ChaCha8Rng,
    t: f64,
    buses: Vec<Bus>,
    /// `[bus * n + patch]`: last departure of that bus from that patch.
    last_dep_bus: Vec<f64>,
    last_dep: Vec<f64>,
    count: Vec<u64>,
    /// Departures of the last hour per patch, `(time, bus)`.
    ring: Vec<VecDeque<(f64, usize)>>,
    events: u64,
}

impl Simulator {
    pub fn new(model: &SimModel) -> Self {
        Self::with_rng(model, ChaCha8Rng::seed_from_u64(model.cfg.seed))
    }

    /// Independent stream `rep` derived from the configured seed.
    pub fn replication(model: &SimModel, rep: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(model.cfg.seed);
        rng.set_stream(rep);
        Self::with_rng(model, rng)
    }

    fn with_rng(model: &SimModel, rng: ChaCha8Rng) -> Self {
        let n = model.n();
        let beta = model.beta();
        let mut sim = Simulator {
            model: model.clone(),
            rng,
            t: 0.0,
            buses: Vec::with_capacity(beta),
            last_dep_bus: vec![f64::NEG_INFINITY; beta * n],
            last_dep: vec![f64::NEG_INFINITY; n],
            count: vec![0; n],
            ring: vec![VecDeque::new(); n],
            events: 0,
        };
        for i in 0..beta {
            let (f, lap) = match model.cfg.init {
                Init::SingleTerminus => (0.0, 0),
                Init::Uniform => {
                    // Bus i runs r i / beta behind bus 0 on the timetable, so
                    // it starts that far behind on the loop.
                    let f = ((beta - i) % beta) as f64 / beta as f64;
                    (f, if f > 0.0 { -1 } else { 0 })
                }
            };
            let j = model.starts.partition_point(|&s| s <= f).saturating_sub(1);
            sim.buses.push(Bus {
                patch: j,
                k: 1,
                rate: 1.0,
                done: 0,
                next: 0.0,
                gated: false,
                lap,
            });
            let within = ((f - model.starts[j]) / model.spans[j]).clamp(0.0, 1.0);
            sim.enter(i, j, within);
        }
        sim
    }

    pub fn model(&self) -> &SimModel {
        &self.model
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Time and bus of the next event.
    pub fn peek(&self) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, b) in self.buses.iter().enumerate() {
            if b.next < best.0 {
                best = (b.next, i);
            }
        }
        best
    }

    /// Time, bus, and departing patch (if the event is a departure) of the
    /// next event, without changing the state.
    pub fn peek_event(&self) -> (f64, usize, Option<usize>) {
        let (t, i) = self.peek();
        let b = &self.buses[i];
        let finishing = b.gated || b.done + 1 >= b.k;
        let dep = (finishing && t >= self.gate(i)).then_some(b.patch);
        (t, i, dep)
    }

    /// Earliest time bus `i` may leave its patch, given the current state.
    fn gate(&self, i: usize) -> f64 {
        let t = self.buses[i].next;
        let j = self.buses[i].patch;
        let mut gate = f64::NEG_INFINITY;
        if self.model.cfg.timetable && self.model.patches.is_terminus(j) {
            gate = self.model.slot(i, j, self.buses[i].lap).next_up();
        }
        if let Some(theta) = self.model.cfg.holding {
            let last = self.last_dep[j];
            if last.is_finite() && t - last < theta {
                // Smallest time whose computed headway is at least theta.
                let mut g = last + theta;
                while g - last < theta {
                    g = g.next_up();
                }
                gate = gate.max(g);
            }
        }
        gate
    }

    pub fn step(&mut self) -> Event {
        let (t, i) = self.peek();
        debug_assert!(t >= self.t, "clock went backwards: {t} < {}", self.t);
        self.t = t;
        self.events += 1;
        let b = &mut self.buses[i];
        let kind = if !b.gated {
            b.done += 1;
            if b.done < b.k {
                let patch = b.patch;
                self.draw(i);
                EventKind::Phase { patch }
            } else {
                self.try_depart(i)
            }
        } else {
            self.try_depart(i)
        };
        Event {
            t,
            bus: i,
            kind,
            lap: self.buses[i].lap,
        }
    }

    /// Steps until the next event would come after `t_end`.
    pub fn run_until(&mut self, t_end: f64, mut on_event: impl FnMut(&Event)) {
        while self.peek().0 <= t_end {
            let e = self.step();
            on_event(&e);
        }
    }

    /// Value of `obs` in the current state with clocks read at `at`
    /// (normally the time of the next event).
    pub fn value(&self, obs: Observable, at: f64) -> f64 {
        let n = self.model.n();
        match obs {
            Observable::Time => at,
            Observable::MuTot => self.model.mu_tot(),
            Observable::Y(j) => at - self.last_dep[j],
            Observable::Z(i, j) => at - self.last_dep_bus[i * n + j],
            Observable::H(j) => self.hourly(j, at) as f64,
            Observable::C(j) => self.count[j] as f64,
            Observable::In(i, j) => (self.buses[i].patch == j) as u8 as f64,
            Observable::Phase(i) => self.buses[i].done as f64,
        }
    }

    fn hourly(&self, j: usize, at: f64) -> usize {
        let n = self.model.n();
        (0..self.buses.len())
            .filter(|&i| at - self.last_dep_bus[i * n + j] < HOUR)
            .count()
    }

    pub fn patch_of_bus(&self, i: usize) -> usize {
        self.buses[i].patch
    }

    /// Route progression of bus `i`: patch start plus the completed-phase
    /// share of its span.
    pub fn progression(&self, i: usize) -> f64 {
        let b = &self.buses[i];
        let m = &self.model;
        m.starts[b.patch] + m.spans[b.patch] * (b.done as f64 / b.k as f64)
    }

    /// Recounts derived quantities from scratch; panics on any mismatch.
    pub fn check_invariants(&self) {
        let n = self.model.n();
        for j in 0..n {
            let mut seen: Vec<usize> = self.ring[j]
                .iter()
                .filter(|(td, _)| self.t - td < HOUR)
                .map(|&(_, i)| i)
                .collect();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), self.hourly(j, self.t), "H_{} mismatch", j + 1);
            let y = (0..self.buses.len())
                .map(|i| self.t - self.last_dep_bus[i * n + j])
                .fold(f64::INFINITY, f64::min);
            assert_eq!(y, self.t - self.last_dep[j], "y_{} mismatch", j + 1);
        }
        for b in &self.buses {
            assert!(b.done < b.k || (b.gated && b.done == b.k) || b.gated);
            assert!(b.next >= self.t);
        }
    }

    fn speed_factor(&self, i: usize) -> f64 {
        let Some(s) = self.model.cfg.speedmod else {
            return 1.0;
        };
        let p = self.progression(i);
        let mut best: Option<f64> = None;
        for b in 0..self.buses.len() {
            if b == i {
                continue;
            }
            let gap = (p - self.progression(b)).rem_euclid(1.0);
            if best.is_none_or(|g| gap < g) {
                best = Some(gap);
            }
        }
        match best {
            Some(g) if g > s.theta => s.slowdown,
            _ => 1.0,
        }
    }

    fn draw(&mut self, i: usize) {
        let rate = self.buses[i].rate * self.speed_factor(i);
        let e: f64 = self.rng.sample(Exp1);
        let b = &mut self.buses[i];
        b.next = self.t + e / rate;
    }

    /// Puts bus `i` into patch `j` with `within` of the patch already done.
    fn enter(&mut self, i: usize, j: usize, within: f64) {
        let t = self.t;
        if self.model.scheduled_terminus(j) {
            let slot = self.model.slot(i, j, self.buses[i].lap);
            let b = &mut self.buses[i];
            *b = Bus {
                patch: j,
                k: 1,
                rate: 1.0,
                done: 0,
                next: t.next_up().max(slot.next_up()),
                gated: true,
                lap: b.lap,
            };
            return;
        }
        let br = &self.model.branches[j];
        let (k, rate) = if br.len() == 1 {
            (br[0].0, br[0].1)
        } else {
            let u: f64 = self.rng.random();
            let pick = br.iter().find(|b| u < b.2).unwrap_or(br.last().unwrap());
            (pick.0, pick.1)
        };
        let done = ((k as f64 * within).floor() as u32).min(k - 1);
        let b = &mut self.buses[i];
        b.patch = j;
        b.k = k;
        b.rate = rate;
        b.done = done;
        b.gated = false;
        self.draw(i);
    }

    fn try_depart(&mut self, i: usize) -> EventKind {
        let t = self.t;
        let j = self.buses[i].patch;
        let gate = self.gate(i);
        if t < gate {
            let b = &mut self.buses[i];
            b.gated = true;
            b.next = gate;
            return EventKind::Hold {
                patch: j,
                until: gate,
            };
        }
        let n = self.model.n();
        self.last_dep_bus[i * n + j] = t;
        self.last_dep[j] = t;
        self.count[j] += 1;
        let ring = &mut self.ring[j];
        ring.push_back((t, i));
        while ring.front().is_some_and(|&(td, _)| t - td >= HOUR) {
            ring.pop_front();
        }
        let to = (j + 1) % n;
        if to == 0 {
            self.buses[i].lap += 1;
        }
        self.enter(i, to, 0.0);
        EventKind::Depart { from: j, to }
    }
}
