use statrs::function::gamma::ln_gamma;

use super::dist::Erlang;
use crate::error::{Error, Result};

pub const DEFAULT_K_CAP: u32 = 10_000;

/// Log-likelihood of shape `k` with the rate profiled out (`rate = k / mean`),
/// from weighted sufficient statistics: total weight `w`, weighted mean
/// `mean` and weighted sum of logs `sum_ln`.
pub fn erlang_profile_loglik(k: u32, w: f64, mean: f64, sum_ln: f64) -> f64 {
    let k = k as f64;
    w * (k * (k / mean).ln() - ln_gamma(k) - k) + (k - 1.0) * sum_ln
}

fn scan(w: f64, mean: f64, sum_ln: f64, cap: u32) -> u32 {
    let mut k = 1;
    let mut cur = erlang_profile_loglik(1, w, mean, sum_ln);
    while k < cap {
        let next = erlang_profile_loglik(k + 1, w, mean, sum_ln);
        if next <= cur {
            break;
        }
        cur = next;
        k += 1;
    }
    k
}

/// Raises `k` from 1 while the log-likelihood (with `rate = k / mean`)
/// improves and returns the last improving step.
pub fn fit_erlang(obs: &[f64]) -> Result<Erlang> {
    fit_erlang_capped(obs, DEFAULT_K_CAP)
}

pub fn fit_erlang_capped(obs: &[f64], cap: u32) -> Result<Erlang> {
    if obs.len() < 2 {
        return Err(Error::invalid("need at least two observations"));
    }
    if let Some(bad) = obs.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::invalid(format!("non-positive duration {bad}")));
    }
    let n = obs.len() as f64;
    let mean = obs.iter().sum::<f64>() / n;
    let sum_ln: f64 = obs.iter().map(|x| x.ln()).sum();
    let k = scan(n, mean, sum_ln, cap.max(1));
    Ok(Erlang::new(k, k as f64 / mean))
}

/// Same rule on weighted data; used by the mixture fit.
pub fn fit_erlang_weighted(obs: &[f64], weights: &[f64], cap: u32) -> Option<Erlang> {
    let w: f64 = weights.iter().sum();
    if !(w > 0.0) {
        return None;
    }
    let mean = obs.iter().zip(weights).map(|(x, p)| x * p).sum::<f64>() / w;
    let sum_ln: f64 = obs.iter().zip(weights).map(|(x, p)| p * x.ln()).sum();
    if !(mean > 0.0) {
        return None;
    }
    let k = scan(w, mean, sum_ln, cap.max(1));
    Some(Erlang::new(k, k as f64 / mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_known_shape() {
        let src = Erlang::new(5, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let obs: Vec<f64> = (0..100_000).map(|_| src.sample(&mut rng)).collect();
        let fit = fit_erlang(&obs).unwrap();
        assert_eq!(fit.k, 5);
        assert!((fit.rate - 0.1).abs() / 0.1 < 0.02);
        // Direct log-likelihood sums over k = 1..50 peak at the same k.
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        let best = (1..=50u32)
            .max_by(|&a, &b| {
                let la: f64 = obs
                    .iter()
                    .map(|&x| Erlang::new(a, a as f64 / mean).ln_pdf(x))
                    .sum();
                let lb: f64 = obs
                    .iter()
                    .map(|&x| Erlang::new(b, b as f64 / mean).ln_pdf(x))
                    .sum();
                la.total_cmp(&lb)
            })
            .unwrap();
        assert_eq!(best, fit.k);
    }

    #[test]
    fn rate_is_k_over_mean() {
        let obs = [3.0, 4.5, 5.0, 2.2, 6.1];
        let fit = fit_erlang(&obs).unwrap();
        let mean = obs.iter().sum::<f64>() / 5.0;
        assert_eq!(fit.rate, fit.k as f64 / mean);
    }

    #[test]
    fn input_checks() {
        assert!(fit_erlang(&[1.0]).is_err());
        assert!(fit_erlang(&[1.0, 0.0]).is_err());
        assert!(fit_erlang(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn constant_sample_hits_cap() {
        let fit = fit_erlang_capped(&[10.0; 20], 500).unwrap();
        assert_eq!(fit.k, 500);
    }

    #[test]
    fn unit_weights_match_plain_fit() {
        let obs = [12.0, 15.5, 9.0, 11.1, 13.3, 14.0];
        let a = fit_erlang(&obs).unwrap();
        let b = fit_erlang_weighted(&obs, &[1.0; 6], DEFAULT_K_CAP).unwrap();
        assert_eq!(a.k, b.k);
        assert!((a.rate - b.rate).abs() < 1e-12);
    }
}
