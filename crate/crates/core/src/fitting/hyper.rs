use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use super::dist::{log_sum_exp, Erlang, HyperErlang, PhaseType};
use super::erlang::{erlang_profile_loglik, fit_erlang_capped};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct HyperFitOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop a run when the mean per-observation log-likelihood gain drops
    /// below this.
    pub tol: f64,
    pub k_cap: u32,
}

impl Default for HyperFitOptions {
    fn default() -> Self {
        HyperFitOptions {
            restarts: 10,
            seed: 0,
            max_iter: 1000,
            tol: 1e-10,
            k_cap: super::DEFAULT_K_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HyperFit {
    pub dist: PhaseType,
    pub loglik: f64,
    /// Log-likelihood after every EM iteration, one vector per restart.
    pub traces: Vec<Vec<f64>>,
}

/// Best `m`-branch hyper-Erlang by multi-start EM. `m = 1` is exactly
/// [`super::fit_erlang`].
pub fn fit_hyper_erlang(obs: &[f64], m: usize, opts: &HyperFitOptions) -> Result<PhaseType> {
    fit_hyper_erlang_traced(obs, m, opts).map(|f| f.dist)
}

pub fn fit_hyper_erlang_traced(obs: &[f64], m: usize, opts: &HyperFitOptions) -> Result<HyperFit> {
    if m == 0 {
        return Err(Error::invalid("need at least one branch"));
    }
    if obs.len() < 2 * m {
        return Err(Error::invalid(format!(
            "{} observations are too few for {m} branches",
            obs.len()
        )));
    }
    let base = fit_erlang_capped(obs, opts.k_cap)?;
    if m == 1 {
        let d = PhaseType::Erlang(base);
        let loglik = d.loglik(obs);
        return Ok(HyperFit {
            dist: d,
            loglik,
            traces: vec![],
        });
    }
    let data = Data::new(obs);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(Vec<Branch>, f64)> = None;
    let mut traces = Vec::new();
    for r in 0..opts.restarts.max(1) {
        let init = match r {
            0 => quantile_split(&data, m, opts.k_cap),
            // Copies of the single Erlang: EM stays on this fixed point, which
            // guarantees the nesting bound against the one-branch fit.
            1 => scaled_copies(base, m, 0.0),
            2 => scaled_copies(base, m, 1.0),
            _ => random_centres(&data, m, &mut rng, opts.k_cap),
        };
        let Some(init) = init else { continue };
        let (fit, trace) = em(&data, init, opts);
        let ll = *trace.last().unwrap();
        traces.push(trace);
        if fit.iter().all(|b| b.alpha > 0.0) && best.as_ref().is_none_or(|(_, b)| ll > *b) {
            best = Some((fit, ll));
        }
    }
    let (branches, loglik) =
        best.ok_or_else(|| Error::invalid("every EM restart collapsed a branch"))?;
    let dist = PhaseType::Hyper(HyperErlang::new(
        branches.iter().map(|b| (b.erlang, b.alpha)).collect(),
    ));
    Ok(HyperFit {
        dist,
        loglik,
        traces,
    })
}

struct Data {
    x: Vec<f64>,
    ln_x: Vec<f64>,
}

impl Data {
    fn new(obs: &[f64]) -> Self {
        Data {
            x: obs.to_vec(),
            ln_x: obs.iter().map(|v| v.ln()).collect(),
        }
    }

    fn n(&self) -> usize {
        self.x.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct Branch {
    erlang: Erlang,
    alpha: f64,
}

impl Branch {
    fn ln_weighted_pdf(&self, x: f64, ln_x: f64) -> f64 {
        let k = self.erlang.k as f64;
        let l = self.erlang.rate;
        self.alpha.ln() + k * l.ln() - ln_gamma(k) + (k - 1.0) * ln_x - l * x
    }
}

/// Weighted refit with integer `k`. The profile likelihood is concave in
/// `k`, so climbing from the previous shape reaches the same optimum as a
/// scan from 1.
fn refit(d: &Data, w: &[f64], start: u32, cap: u32) -> Option<Erlang> {
    let tw: f64 = w.iter().sum();
    if !(tw > 0.0) {
        return None;
    }
    let mean = d.x.iter().zip(w).map(|(x, p)| x * p).sum::<f64>() / tw;
    let sum_ln: f64 = d.ln_x.iter().zip(w).map(|(l, p)| l * p).sum();
    if !(mean > 0.0) {
        return None;
    }
    let f = |k: u32| erlang_profile_loglik(k, tw, mean, sum_ln);
    let mut k = start.clamp(1, cap);
    let mut cur = f(k);
    while k < cap && f(k + 1) > cur {
        k += 1;
        cur = f(k);
    }
    while k > 1 && f(k - 1) >= cur {
        k -= 1;
        cur = f(k);
    }
    Some(Erlang::new(k, k as f64 / mean))
}

fn from_hard(d: &Data, labels: &[usize], m: usize, cap: u32) -> Option<Vec<Branch>> {
    let n = d.n() as f64;
    (0..m)
        .map(|b| {
            let w: Vec<f64> = labels.iter().map(|&l| (l == b) as u8 as f64).collect();
            let tw: f64 = w.iter().sum();
            let e = refit(d, &w, 1, cap)?;
            Some(Branch {
                erlang: e,
                alpha: tw / n,
            })
        })
        .collect()
}

fn quantile_split(d: &Data, m: usize, cap: u32) -> Option<Vec<Branch>> {
    let mut idx: Vec<usize> = (0..d.n()).collect();
    idx.sort_by(|&a, &b| d.x[a].total_cmp(&d.x[b]));
    let mut labels = vec![0; d.n()];
    for (rank, &i) in idx.iter().enumerate() {
        labels[i] = rank * m / d.n();
    }
    from_hard(d, &labels, m, cap)
}

fn scaled_copies(base: Erlang, m: usize, spread: f64) -> Option<Vec<Branch>> {
    let mean = base.mean();
    Some(
        (0..m)
            .map(|b| {
                let s = 1.0 + spread * (b as f64 / (m - 1) as f64 - 0.5);
                Branch {
                    erlang: Erlang::new(base.k, base.k as f64 / (mean * s)),
                    alpha: 1.0 / m as f64,
                }
            })
            .collect(),
    )
}

fn random_centres(d: &Data, m: usize, rng: &mut ChaCha8Rng, cap: u32) -> Option<Vec<Branch>> {
    let centres: Vec<f64> = (0..m).map(|_| d.ln_x[rng.random_range(0..d.n())]).collect();
    let labels: Vec<usize> = d
        .ln_x
        .iter()
        .map(|&l| {
            (0..m)
                .min_by(|&a, &b| (l - centres[a]).abs().total_cmp(&(l - centres[b]).abs()))
                .unwrap()
        })
        .collect();
    from_hard(d, &labels, m, cap)
}

fn loglik(d: &Data, branches: &[Branch], resp: Option<&mut [Vec<f64>]>) -> f64 {
    let mut terms = vec![0.0; branches.len()];
    let mut total = 0.0;
    let mut resp = resp;
    for i in 0..d.n() {
        for (t, b) in terms.iter_mut().zip(branches) {
            *t = b.ln_weighted_pdf(d.x[i], d.ln_x[i]);
        }
        let lse = log_sum_exp(&terms);
        total += lse;
        if let Some(r) = resp.as_deref_mut() {
            for (b, t) in terms.iter().enumerate() {
                r[b][i] = (t - lse).exp();
            }
        }
    }
    total
}

fn em(d: &Data, mut branches: Vec<Branch>, opts: &HyperFitOptions) -> (Vec<Branch>, Vec<f64>) {
    let m = branches.len();
    let n = d.n() as f64;
    let mut resp = vec![vec![0.0; d.n()]; m];
    let mut trace = vec![loglik(d, &branches, Some(&mut resp))];
    for _ in 0..opts.max_iter {
        let mut next = branches.clone();
        for (b, br) in next.iter_mut().enumerate() {
            let tw: f64 = resp[b].iter().sum();
            match refit(d, &resp[b], br.erlang.k, opts.k_cap) {
                Some(e) if tw > 1e-9 * n => {
                    br.erlang = e;
                    br.alpha = tw / n;
                }
                // A branch without support is dead; report the collapse.
                _ => {
                    br.alpha = 0.0;
                }
            }
        }
        if next.iter().any(|b| b.alpha == 0.0) {
            return (next, trace);
        }
        let s: f64 = next.iter().map(|b| b.alpha).sum();
        for b in &mut next {
            b.alpha /= s;
        }
        let ll = loglik(d, &next, Some(&mut resp));
        let prev = *trace.last().unwrap();
        branches = next;
        trace.push(ll);
        if (ll - prev) / n < opts.tol {
            break;
        }
    }
    (branches, trace)
}
