//! Synthetic AVL traces from a known loop: buses run a closed polygon whose
//! patches have known Erlang sojourn laws, and report noisy positions at a
//! fixed period. Used by the end-to-end tests and the `synth` subcommand.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fitting::Erlang;
use crate::ingest::{Fix, TraceSet};

#[derive(Debug, Clone)]
pub struct SynthSpec {
    /// Closed polygon; the loop starts at the first vertex.
    pub vertices: Vec<(f64, f64)>,
    /// Patch breakpoints as loop fractions, `0 = b_0 < ... < b_n = 1`.
    pub breaks: Vec<f64>,
    pub dists: Vec<Erlang>,
    pub buses: usize,
    pub loops: usize,
    /// Reporting period in seconds.
    pub period: i64,
    /// Standard deviation of the position noise (world units).
    pub noise: f64,
    pub t0: i64,
    pub seed: u64,
}

/// What the generator knows and the pipeline should recover.
#[derive(Debug, Clone)]
pub struct SynthTruth {
    pub loop_length: f64,
    /// Loop distance from the start to the second terminus.
    pub half: f64,
    pub breaks: Vec<f64>,
    pub means: Vec<f64>,
    /// World position of every breakpoint `b_0 .. b_{n-1}`.
    pub break_points: Vec<(f64, f64)>,
}

impl SynthSpec {
    /// A 20 km octagon with termini at vertices 0 and 4 and eight patches:
    /// terminus, long, short slow stretch, long, in each direction.
    pub fn eight_patch_loop(seed: u64) -> Self {
        let side = 2500.0;
        let r = side / (2.0 * (std::f64::consts::PI / 8.0).sin());
        let vertices = (0..8)
            .map(|i| {
                let a = std::f64::consts::PI * (0.125 + 0.25 * i as f64);
                (10_000.0 + r * a.cos(), 10_000.0 + r * a.sin())
            })
            .collect();
        let breaks = vec![0.0, 0.01, 0.24, 0.25, 0.5, 0.51, 0.74, 0.75, 1.0];
        let dists = vec![
            Erlang::new(30, 30.0 / 900.0),
            Erlang::new(40, 40.0 / 1100.0),
            Erlang::new(20, 20.0 / 450.0),
            Erlang::new(50, 50.0 / 1200.0),
            Erlang::new(25, 25.0 / 900.0),
            Erlang::new(45, 45.0 / 1000.0),
            Erlang::new(15, 15.0 / 500.0),
            Erlang::new(35, 35.0 / 1150.0),
        ];
        SynthSpec {
            vertices,
            breaks,
            dists,
            buses: 6,
            loops: 40,
            period: 35,
            noise: 3.0,
            t0: 1_400_000_000,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.dists.len();
        let ok = self.vertices.len() >= 3
            && self.breaks.len() == n + 1
            && self.breaks[0] == 0.0
            && self.breaks[n] == 1.0
            && self.breaks.windows(2).all(|w| w[0] < w[1])
            && self.period > 0
            && self.buses > 0
            && self.loops > 0
            && self.noise >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("inconsistent synthetic loop specification"))
        }
    }

    fn sides(&self) -> Vec<f64> {
        let v = &self.vertices;
        (0..v.len())
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % v.len()]);
                (b.0 - a.0).hypot(b.1 - a.1)
            })
            .collect()
    }

    /// Point at loop distance `s` from the first vertex.
    fn point_at(&self, sides: &[f64], mut s: f64) -> (f64, f64) {
        let v = &self.vertices;
        for (i, &len) in sides.iter().enumerate() {
            if s <= len || i == sides.len() - 1 {
                let (a, b) = (v[i], v[(i + 1) % v.len()]);
                let t = (s / len).clamp(0.0, 1.0);
                return (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
            }
            s -= len;
        }
        unreachable!()
    }

    pub fn truth(&self) -> Result<SynthTruth> {
        self.validate()?;
        let sides = self.sides();
        let total: f64 = sides.iter().sum();
        let half = sides[..sides.len() / 2].iter().sum();
        Ok(SynthTruth {
            loop_length: total,
            half,
            breaks: self.breaks.clone(),
            means: self.dists.iter().map(Erlang::mean).collect(),
            break_points: self.breaks[..self.dists.len()]
                .iter()
                .map(|&b| self.point_at(&sides, b * total))
                .collect(),
        })
    }

    /// Each bus starts at the first vertex, staggered by one mean loop
    /// divided by the fleet size, and moves at constant speed within a
    /// patch.
    pub fn generate(&self) -> Result<(TraceSet, SynthTruth)> {
        let truth = self.truth()?;
        let sides = self.sides();
        let total = truth.loop_length;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::invalid(e.to_string()))?;
        let loop_mean: f64 = truth.means.iter().sum();
        let mut ts = TraceSet::new();
        for bus in 0..self.buses {
            // Knots (time, loop distance) at every patch boundary.
            let mut knots = vec![(bus as f64 * loop_mean / self.buses as f64, 0.0)];
            for lap in 0..self.loops {
                for (j, d) in self.dists.iter().enumerate() {
                    let t = knots.last().unwrap().0 + d.sample(&mut rng);
                    knots.push((t, (lap as f64 + self.breaks[j + 1]) * total));
                }
            }
            let mut fixes = Vec::new();
            let phase = (bus as i64 * 7) % self.period;
            let mut t = knots[0].0.ceil() as i64 + phase;
            let mut k = 0;
            let end = knots.last().unwrap().0;
            while (t as f64) < end {
                while knots[k + 1].0 < t as f64 {
                    k += 1;
                }
                let (ta, sa) = knots[k];
                let (tb, sb) = knots[k + 1];
                let s = sa + (sb - sa) * (t as f64 - ta) / (tb - ta);
                let (x, y) = self.point_at(&sides, s.rem_euclid(total));
                let (nx, ny) = if self.noise > 0.0 {
                    (noise.sample(&mut rng), noise.sample(&mut rng))
                } else {
                    (0.0, 0.0)
                };
                fixes.push(Fix::new(x + nx, y + ny, self.t0 + t));
                t += self.period;
            }
            ts.vehicles.insert(format!("bus{:02}", bus + 1), fixes);
        }
        Ok((ts, truth))
    }
}
