//! Cutting the route into patches from binned observation counts.

use crate::error::{Error, Result};
use crate::ingest::TraceSet;
use crate::mapgen::{RouteModel, RouteTracker};

/// Measurement counts in `gamma` equal slices of `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinCounts {
    pub counts: Vec<u64>,
}

impl BinCounts {
    pub fn gamma(&self) -> usize {
        self.counts.len()
    }

    pub fn from_fractions(fractions: impl IntoIterator<Item = f64>, gamma: usize) -> Self {
        let mut counts = vec![0u64; gamma];
        for f in fractions {
            let i = ((f * gamma as f64).floor() as usize).min(gamma - 1);
            counts[i] += 1;
        }
        BinCounts { counts }
    }
}

/// Counts raw (not interpolated) measurements per route-completion bin.
pub fn bin_counts(ts: &TraceSet, rm: &RouteModel, gamma: usize) -> Result<BinCounts> {
    if gamma < 2 {
        return Err(Error::invalid("gamma must be at least 2"));
    }
    let fractions = ts
        .vehicles
        .values()
        .flat_map(|v| RouteTracker::track(rm, v))
        .flatten();
    let c = BinCounts::from_fractions(fractions, gamma);
    if c.counts.iter().all(|&n| n == 0) {
        return Err(Error::Empty("no measurement matched the route".into()));
    }
    Ok(c)
}

/// Breakpoints `0 = b_0 < b_1 < ... < b_n = 1`; patch `j` is `[b_j, b_{j+1})`
/// (zero-based).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchStructure {
    pub breaks: Vec<f64>,
}

impl PatchStructure {
    pub fn new(breaks: Vec<f64>) -> Result<Self> {
        let ok = breaks.len() >= 2
            && breaks[0] == 0.0
            && *breaks.last().unwrap() == 1.0
            && breaks.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(Error::invalid("breakpoints must rise strictly from 0 to 1"));
        }
        Ok(PatchStructure { breaks })
    }

    /// From bin indices `0 = i_0 < ... < i_n = gamma`.
    pub fn from_bins(bins: &[usize], gamma: usize) -> Result<Self> {
        if bins.first() != Some(&0) || bins.last() != Some(&gamma) {
            return Err(Error::invalid(
                "bin boundaries must start at 0 and end at gamma",
            ));
        }
        Self::new(bins.iter().map(|&b| b as f64 / gamma as f64).collect())
    }

    pub fn n(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn start(&self, j: usize) -> f64 {
        self.breaks[j]
    }

    pub fn span(&self, j: usize) -> f64 {
        self.breaks[j + 1] - self.breaks[j]
    }

    /// Zero-based patch containing `f`.
    pub fn patch_of(&self, f: f64) -> Result<usize> {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::invalid(format!("fraction {f} outside [0, 1)")));
        }
        Ok(self.breaks.partition_point(|&b| b <= f) - 1)
    }

    pub fn to_text(&self) -> String {
        self.breaks.iter().map(|b| format!("{b}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let breaks = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad breakpoint `{l}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(breaks)
    }
}

/// Within-class sum of squared deviations via prefix sums.
struct Ssd {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Ssd {
    fn new(d: &[f64]) -> Self {
        let mut s1 = vec![0.0; d.len() + 1];
        let mut s2 = vec![0.0; d.len() + 1];
        for (i, &v) in d.iter().enumerate() {
            s1[i + 1] = s1[i] + v;
            s2[i + 1] = s2[i] + v * v;
        }
        Ssd { s1, s2 }
    }

    /// Cost of the class `d[i..j]`.
    fn cost(&self, i: usize, j: usize) -> f64 {
        let n = (j - i) as f64;
        let s = self.s1[j] - self.s1[i];
        (self.s2[j] - self.s2[i] - s * s / n).max(0.0)
    }
}

/// Optimal split of `d` into `k` contiguous classes. Returns the class start
/// indices after the first (`k - 1` values) and the objective. Ties go to
/// the leftmost split.
#[allow(clippy::needless_range_loop)]
pub fn fisher_breaks(d: &[f64], k: usize) -> (Vec<usize>, f64) {
    let m = d.len();
    assert!(k >= 1 && k <= m);
    let ssd = Ssd::new(d);
    // best[c][j]: classes c+1 covering d[0..j].
    let mut best = vec![vec![f64::INFINITY; m + 1]; k];
    let mut arg = vec![vec![0usize; m + 1]; k];
    for j in 1..=m {
        best[0][j] = ssd.cost(0, j);
    }
    for c in 1..k {
        for j in (c + 1)..=m {
            let (mut b, mut a) = (f64::INFINITY, 0);
            for s in c..j {
                let v = best[c - 1][s] + ssd.cost(s, j);
                if b.is_infinite() || v < b - 1e-9 * b.abs().max(1.0) {
                    b = v;
                    a = s;
                }
            }
            best[c][j] = b;
            arg[c][j] = a;
        }
    }
    let mut starts = vec![0; k - 1];
    let mut j = m;
    for c in (1..k).rev() {
        j = arg[c][j];
        starts[c - 1] = j;
    }
    (starts, best[k - 1][m])
}

/// Jenks natural breaks on the absolute differences between neighbouring
/// bins. A class boundary just before `d_i` becomes a breakpoint at bin `i`.
pub fn jenks_cluster(c: &BinCounts, n: usize) -> Result<PatchStructure> {
    let gamma = c.gamma();
    if n == 0 || n > gamma {
        return Err(Error::invalid(format!("need 1 <= n <= gamma, got n = {n}")));
    }
    if n == 1 {
        return PatchStructure::from_bins(&[0, gamma], gamma);
    }
    if n == gamma {
        return PatchStructure::from_bins(&(0..=gamma).collect::<Vec<_>>(), gamma);
    }
    let d: Vec<f64> = c
        .counts
        .windows(2)
        .map(|w| (w[1] as f64 - w[0] as f64).abs())
        .collect();
    let (starts, _) = fisher_breaks(&d, n);
    let mut bins = vec![0];
    bins.extend(starts);
    bins.push(gamma);
    PatchStructure::from_bins(&bins, gamma)
}

/// Greedy merging of the adjacent pair with the smallest combined count,
/// stopping before a merge would exceed the largest initial bin count.
pub fn merge_adjacent_cluster(c: &BinCounts) -> Result<PatchStructure> {
    let gamma = c.gamma();
    if gamma == 0 {
        return Err(Error::invalid("no bins"));
    }
    let cap = c.counts.iter().copied().max().unwrap_or(0);
    // (first bin, total count)
    let mut segs: Vec<(usize, u64)> = c.counts.iter().copied().enumerate().collect();
    while segs.len() > 1 {
        let (i, sum) = segs
            .windows(2)
            .enumerate()
            .map(|(i, w)| (i, w[0].1 + w[1].1))
            .min_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)))
            .unwrap();
        if sum > cap {
            break;
        }
        segs[i].1 = sum;
        segs.remove(i + 1);
    }
    let mut bins: Vec<usize> = segs.iter().map(|s| s.0).collect();
    bins.push(gamma);
    PatchStructure::from_bins(&bins, gamma)
}
