use super::dist::PhaseType;
use crate::error::{Error, Result};

const CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GofReport {
    pub n_obs: usize,
    pub a2: f64,
    pub p: f64,
    pub mean: f64,
    pub sd: f64,
    pub cv: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Some `u_i` hit the clamping window.
    pub clamped: bool,
}

impl GofReport {
    pub const TSV_HEADER: &'static str = "patch\tn_obs\tA2\tp\tmean\tsd\tcv\tskew\tkurt";

    pub fn tsv_row(&self, patch: usize) -> String {
        format!(
            "{patch}\t{}\t{:.6}\t{:.6}\t{:.4}\t{:.4}\t{:.6}\t{:.6}\t{:.6}",
            self.n_obs,
            self.a2,
            self.p,
            self.mean,
            self.sd,
            self.cv,
            self.skewness,
            self.excess_kurtosis
        )
    }
}

/// A² from CDF values sorted ascending. Returns the statistic and whether
/// any value had to be clamped away from 0 or 1.
pub fn ad_statistic(u: &[f64]) -> (f64, bool) {
    let n = u.len();
    let mut clamped = false;
    let c: Vec<f64> = u
        .iter()
        .map(|&v| {
            let w = v.clamp(CLAMP, 1.0 - CLAMP);
            clamped |= w != v;
            w
        })
        .collect();
    let s: f64 = (0..n)
        .map(|i| (2 * i + 1) as f64 * (c[i].ln() + (1.0 - c[n - 1 - i]).ln()))
        .sum();
    (-(n as f64) - s / n as f64, clamped)
}

/// Upper tail of the limiting A² law for a fully specified null
/// (Marsaglia and Marsaglia's two-piece approximation).
pub fn ad_pvalue(a2: f64) -> f64 {
    let z = a2;
    if !(z > 0.0) {
        return 1.0;
    }
    let cdf = if z < 2.0 {
        (-1.2337141 / z).exp() / z.sqrt()
            * (2.00012
                + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z)
                    * z)
    } else {
        (-(1.0776
            - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z)
            .exp())
        .exp()
    };
    (1.0 - cdf).clamp(0.0, 1.0)
}

pub fn anderson_darling(obs: &[f64], dist: &PhaseType) -> Result<GofReport> {
    let n = obs.len();
    if n < 3 {
        return Err(Error::invalid(
            "Anderson-Darling needs at least three observations",
        ));
    }
    let mut sorted = obs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let u: Vec<f64> = sorted.iter().map(|&x| dist.cdf(x)).collect();
    let (a2, clamped) = ad_statistic(&u);
    let nf = n as f64;
    let mean = obs.iter().sum::<f64>() / nf;
    let m = |p: i32| obs.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / nf;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    let sd = (m2 * nf / (nf - 1.0)).sqrt();
    Ok(GofReport {
        n_obs: n,
        a2,
        p: ad_pvalue(a2),
        mean,
        sd,
        cv: sd / mean,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        clamped,
    })
}

/// Empirical step points and fitted CDF samples for plotting, as TSV with
/// columns `series t cdf`.
pub fn cdf_comparison(obs: &[f64], dist: &PhaseType, samples: usize) -> String {
    let mut sorted = obs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out = String::from("series\tt\tcdf\n");
    for (i, x) in sorted.iter().enumerate() {
        out += &format!("empirical\t{x}\t{}\n", (i + 1) as f64 / n);
    }
    let hi = sorted
        .last()
        .copied()
        .unwrap_or(dist.mean())
        .max(dist.mean())
        * 1.2;
    for s in 0..=samples {
        let t = hi * s as f64 / samples.max(1) as f64;
        out += &format!("fitted\t{t}\t{}\n", dist.cdf(t));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::Erlang;

    #[test]
    fn uniform_grid_matches_direct_sum() {
        let n = 40;
        let u: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        let (a2, clamped) = ad_statistic(&u);
        assert!(!clamped);
        // Equivalent form: -n - (1/n) sum (2i-1) ln u_i + (2(n-i)+1) ln(1-u_i).
        let mut direct = -(n as f64);
        for i in 1..=n {
            let ui = u[i - 1];
            direct -= ((2 * i - 1) as f64 * ui.ln() + (2 * (n - i) + 1) as f64 * (1.0 - ui).ln())
                / n as f64;
        }
        assert!((a2 - direct).abs() < 1e-9);
    }

    #[test]
    fn pvalues_against_tabulated_fits() {
        assert!((ad_pvalue(0.777) - 0.4974).abs() < 1e-3);
        assert!((ad_pvalue(0.108) - 0.9999).abs() < 1e-3);
        assert!((ad_pvalue(2.6455) - 0.0416).abs() < 1e-3);
        assert_eq!(ad_pvalue(0.0), 1.0);
    }

    #[test]
    fn wrong_mean_scores_worse() {
        let d = PhaseType::Erlang(Erlang::new(20, 0.1));
        let obs: Vec<f64> = (1..=50).map(|i| 200.0 + (i as f64 - 25.0) * 3.0).collect();
        let good = anderson_darling(&obs, &d).unwrap();
        let bad = anderson_darling(&obs, &PhaseType::Erlang(Erlang::new(20, 0.05))).unwrap();
        assert!(bad.a2 > good.a2);
    }

    #[test]
    fn moments_of_symmetric_sample() {
        let obs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = anderson_darling(&obs, &PhaseType::Erlang(Erlang::new(3, 1.0))).unwrap();
        assert_eq!(r.mean, 3.0);
        assert!(r.skewness.abs() < 1e-12);
        assert!((r.sd - 2.5f64.sqrt()).abs() < 1e-12);
        assert!((r.excess_kurtosis - (-1.3)).abs() < 1e-12);
    }
}
