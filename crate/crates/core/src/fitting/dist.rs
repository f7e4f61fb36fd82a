use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::{gamma_lr, ln_gamma};

/// Sum of `k` exponential phases of rate `rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Erlang {
    pub k: u32,
    pub rate: f64,
}

impl Erlang {
    pub fn new(k: u32, rate: f64) -> Self {
        assert!(k >= 1 && rate > 0.0, "Erlang needs k >= 1 and rate > 0");
        Erlang { k, rate }
    }

    pub fn mean(&self) -> f64 {
        self.k as f64 / self.rate
    }

    pub fn variance(&self) -> f64 {
        self.k as f64 / (self.rate * self.rate)
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn cv(&self) -> f64 {
        1.0 / (self.k as f64).sqrt()
    }

    pub fn ln_pdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return f64::NEG_INFINITY;
        }
        let k = self.k as f64;
        if t == 0.0 {
            return if self.k == 1 {
                self.rate.ln()
            } else {
                f64::NEG_INFINITY
            };
        }
        k * self.rate.ln() + (k - 1.0) * t.ln() - self.rate * t - ln_gamma(k)
    }

    pub fn pdf(&self, t: f64) -> f64 {
        self.ln_pdf(t).exp()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            gamma_lr(self.k as f64, self.rate * t)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.k as f64, 1.0 / self.rate)
            .expect("valid gamma")
            .sample(rng)
    }
}

/// Probabilistic mixture of Erlang branches.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperErlang {
    pub branches: Vec<(Erlang, f64)>,
}

impl HyperErlang {
    pub fn new(branches: Vec<(Erlang, f64)>) -> Self {
        assert!(!branches.is_empty());
        let total: f64 = branches.iter().map(|b| b.1).sum();
        assert!(
            (total - 1.0).abs() < 1e-6 && branches.iter().all(|b| b.1 > 0.0),
            "weights must be positive and sum to 1"
        );
        HyperErlang { branches }
    }

    pub fn mean(&self) -> f64 {
        self.branches.iter().map(|(e, a)| a * e.mean()).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let second: f64 = self
            .branches
            .iter()
            .map(|(e, a)| a * (e.variance() + e.mean() * e.mean()))
            .sum();
        second - m * m
    }

    pub fn ln_pdf(&self, t: f64) -> f64 {
        let terms: Vec<f64> = self
            .branches
            .iter()
            .map(|(e, a)| a.ln() + e.ln_pdf(t))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn pdf(&self, t: f64) -> f64 {
        self.ln_pdf(t).exp()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        self.branches.iter().map(|(e, a)| a * e.cdf(t)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (e, a) in &self.branches {
            acc += a;
            if u < acc {
                return e.sample(rng);
            }
        }
        self.branches.last().unwrap().0.sample(rng)
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhaseType {
    Erlang(Erlang),
    Hyper(HyperErlang),
}

impl PhaseType {
    pub fn mean(&self) -> f64 {
        match self {
            PhaseType::Erlang(e) => e.mean(),
            PhaseType::Hyper(h) => h.mean(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            PhaseType::Erlang(e) => e.variance(),
            PhaseType::Hyper(h) => h.variance(),
        }
    }

    pub fn ln_pdf(&self, t: f64) -> f64 {
        match self {
            PhaseType::Erlang(e) => e.ln_pdf(t),
            PhaseType::Hyper(h) => h.ln_pdf(t),
        }
    }

    pub fn pdf(&self, t: f64) -> f64 {
        self.ln_pdf(t).exp()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            PhaseType::Erlang(e) => e.cdf(t),
            PhaseType::Hyper(h) => h.cdf(t),
        }
    }

    /// `(pdf, cdf)` at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        (self.pdf(t), self.cdf(t))
    }

    pub fn branches(&self) -> Vec<(Erlang, f64)> {
        match self {
            PhaseType::Erlang(e) => vec![(*e, 1.0)],
            PhaseType::Hyper(h) => h.branches.clone(),
        }
    }

    pub fn loglik(&self, obs: &[f64]) -> f64 {
        obs.iter().map(|&x| self.ln_pdf(x)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            PhaseType::Erlang(e) => e.sample(rng),
            PhaseType::Hyper(h) => h.sample(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k1_is_exponential() {
        let e = Erlang::new(1, 0.5);
        assert!((e.pdf(0.0) - 0.5).abs() < 1e-15);
        for t in [0.1, 1.0, 7.5] {
            assert!((e.pdf(t) - 0.5 * (-0.5 * t).exp()).abs() < 1e-15);
            assert!((e.cdf(t) - (1.0 - (-0.5 * t).exp())).abs() < 1e-14);
        }
    }

    #[test]
    fn table_two_patch_two_mean() {
        let e = Erlang::new(106, 0.4190);
        assert!((e.mean() - 253.0).abs() < 0.5);
    }

    #[test]
    fn large_k_is_finite() {
        let e = Erlang::new(5000, 10.0);
        let (p, c) = (e.pdf(500.0), e.cdf(500.0));
        assert!(p.is_finite() && p > 0.0);
        assert!((c - 0.5).abs() < 0.01);
        assert_eq!(Erlang::new(3, 1.0).pdf(-1.0), 0.0);
        assert_eq!(Erlang::new(3, 1.0).cdf(-1.0), 0.0);
    }

    #[test]
    fn one_branch_mixture_matches() {
        let e = Erlang::new(7, 0.03);
        let h = HyperErlang::new(vec![(e, 1.0)]);
        for t in [1.0, 50.0, 233.3, 900.0] {
            assert!((h.pdf(t) - e.pdf(t)).abs() < 1e-12);
            assert!((h.cdf(t) - e.cdf(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn cdf_integrates_pdf() {
        for e in [
            Erlang::new(1, 0.01),
            Erlang::new(44, 0.0482),
            Erlang::new(155, 0.337),
        ] {
            let hi = e.mean() + 20.0 * e.sd();
            assert!(e.cdf(hi) >= 1.0 - 1e-6);
            // Composite Simpson on a fine grid.
            let n = 20_000;
            let h = hi / n as f64;
            let mut s = e.pdf(0.0) + e.pdf(hi);
            for i in 1..n {
                s += e.pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            assert!((s * h / 3.0 - e.cdf(hi)).abs() < 1e-6, "{e:?}");
        }
    }
}
