use super::dist::{Erlang, HyperErlang, PhaseType};
use crate::error::{Error, Result};

/// Per-patch crossing-time laws with their means, plus the two terminus
/// patches (zero-based).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchModel {
    pub dists: Vec<PhaseType>,
    /// Usually the distribution means; a reference table may round them.
    pub means: Vec<f64>,
    pub termini: [usize; 2],
}

impl PatchModel {
    /// Means taken from the distributions.
    pub fn new(dists: Vec<PhaseType>, termini: [usize; 2]) -> Result<Self> {
        let means = dists.iter().map(PhaseType::mean).collect();
        Self::with_means(dists, means, termini)
    }

    pub fn with_means(dists: Vec<PhaseType>, means: Vec<f64>, termini: [usize; 2]) -> Result<Self> {
        let n = dists.len();
        if n == 0 {
            return Err(Error::invalid("patch model has no patches"));
        }
        if means.len() != n {
            return Err(Error::invalid("one mean per patch required"));
        }
        if termini.iter().any(|&t| t >= n) || termini[0] == termini[1] {
            return Err(Error::invalid(format!("bad terminus patches {termini:?}")));
        }
        for (j, (d, &m)) in dists.iter().zip(&means).enumerate() {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::invalid(format!(
                    "patch {}: mean {m} not positive",
                    j + 1
                )));
            }
            if ((d.mean() - m) / m).abs() > 0.02 {
                return Err(Error::invalid(format!(
                    "patch {}: mean {m} disagrees with its distribution ({})",
                    j + 1,
                    d.mean()
                )));
            }
        }
        Ok(PatchModel {
            dists,
            means,
            termini,
        })
    }

    pub fn n(&self) -> usize {
        self.dists.len()
    }

    /// Cumulative mean before patch `j`; `c(0) = 0`.
    pub fn c(&self, j: usize) -> f64 {
        self.means[..j].iter().sum()
    }

    pub fn r(&self) -> f64 {
        self.means.iter().sum()
    }

    pub fn is_terminus(&self, j: usize) -> bool {
        self.termini.contains(&j)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("termini {} {}\n", self.termini[0] + 1, self.termini[1] + 1);
        for (j, (d, m)) in self.dists.iter().zip(&self.means).enumerate() {
            s += &format!("patch {} mean {m} ", j + 1);
            match d {
                PhaseType::Erlang(e) => s += &format!("erlang {} {}\n", e.k, e.rate),
                PhaseType::Hyper(h) => {
                    s += &format!("hyper {}", h.branches.len());
                    for (e, a) in &h.branches {
                        s += &format!(" {} {} {a}", e.k, e.rate);
                    }
                    s += "\n";
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut termini = None;
        let mut rows: Vec<(usize, f64, PhaseType)> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: &str| Error::invalid(format!("model line {}: {m}", ln + 1));
            let tok: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| -> Result<f64> {
                tok.get(i)
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| bad("expected a number"))
            };
            let int = |i: usize| -> Result<usize> {
                tok.get(i)
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| bad("expected an integer"))
            };
            match tok[0] {
                "termini" => {
                    let (a, b) = (int(1)?, int(2)?);
                    if a == 0 || b == 0 {
                        return Err(bad("patch numbers start at 1"));
                    }
                    termini = Some([a - 1, b - 1]);
                }
                "patch" => {
                    let j = int(1)?;
                    if tok.get(2) != Some(&"mean") {
                        return Err(bad("expected `mean`"));
                    }
                    let mean = num(3)?;
                    let erl = |k: usize, rate: f64| -> Result<Erlang> {
                        if k == 0 || !(rate > 0.0) {
                            return Err(bad("need k >= 1 and rate > 0"));
                        }
                        Ok(Erlang::new(k as u32, rate))
                    };
                    let d = match tok.get(4).copied() {
                        Some("erlang") => PhaseType::Erlang(erl(int(5)?, num(6)?)?),
                        Some("hyper") => {
                            let m = int(5)?;
                            if tok.len() != 6 + 3 * m || m == 0 {
                                return Err(bad("hyper needs m triples of k rate weight"));
                            }
                            let mut br = Vec::new();
                            for b in 0..m {
                                let a = num(8 + 3 * b)?;
                                if !(a > 0.0) {
                                    return Err(bad("branch weights must be positive"));
                                }
                                br.push((erl(int(6 + 3 * b)?, num(7 + 3 * b)?)?, a));
                            }
                            let s: f64 = br.iter().map(|b| b.1).sum();
                            if (s - 1.0).abs() > 1e-6 {
                                return Err(bad("branch weights must sum to 1"));
                            }
                            for b in &mut br {
                                b.1 /= s;
                            }
                            PhaseType::Hyper(HyperErlang::new(br))
                        }
                        _ => return Err(bad("expected `erlang` or `hyper`")),
                    };
                    rows.push((j, mean, d));
                }
                other => return Err(bad(&format!("unknown keyword `{other}`"))),
            }
        }
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(i, r)| r.0 != i + 1) {
            return Err(Error::invalid("patches must be numbered 1..n without gaps"));
        }
        let termini = termini.ok_or_else(|| Error::invalid("missing `termini` line"))?;
        let (means, dists) = rows.into_iter().map(|r| (r.1, r.2)).unzip();
        Self::with_means(dists, means, termini)
    }
}

/// Implicit timetable: bus `i` (zero-based) is due to leave patch `j` on
/// lap `d` at `r d + h(i, j)`, with `h(i, j) = r i / beta + c_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Timetable {
    pub r: f64,
    pub beta: usize,
    pub mu_tot: f64,
    pub c: Vec<f64>,
}

impl Timetable {
    pub fn h(&self, i: usize, j: usize) -> f64 {
        self.r * i as f64 / self.beta as f64 + self.c[j]
    }
}

pub fn derive_timetable(pm: &PatchModel, beta: usize, r: Option<f64>) -> Result<Timetable> {
    if beta == 0 {
        return Err(Error::invalid("need at least one bus"));
    }
    let r = r.unwrap_or_else(|| pm.r());
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("loop duration {r} not positive")));
    }
    Ok(Timetable {
        r,
        beta,
        mu_tot: r / beta as f64,
        c: (0..pm.n()).map(|j| pm.c(j)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> PatchModel {
        PatchModel::new(
            vec![
                PhaseType::Erlang(Erlang::new(4, 0.02)),
                PhaseType::Hyper(HyperErlang::new(vec![
                    (Erlang::new(10, 0.0171), 0.4762),
                    (Erlang::new(84, 0.1961), 0.5238),
                ])),
                PhaseType::Erlang(Erlang::new(1, 0.01)),
            ],
            [0, 2],
        )
        .unwrap()
    }

    #[test]
    fn cumulative_means() {
        let m = model();
        assert_eq!(m.c(0), 0.0);
        assert!((m.c(1) - 200.0).abs() < 1e-9);
        assert!((m.r() - (m.c(2) + m.means[2])).abs() < 1e-9);
    }

    #[test]
    fn text_round_trip() {
        let m = model();
        let back = PatchModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back.termini, m.termini);
        assert_eq!(back.means, m.means);
        for (a, b) in back.dists.iter().zip(&m.dists) {
            assert!((a.mean() - b.mean()).abs() < 1e-9);
        }
    }

    #[test]
    fn loader_rejects_bad_input() {
        assert!(PatchModel::from_text("patch 1 mean 10 erlang 1 0.1\n").is_err());
        assert!(PatchModel::from_text("termini 1 2\npatch 1 mean 10 erlang 1 0.1\n").is_err());
        assert!(PatchModel::from_text(
            "termini 1 2\npatch 1 mean 10 erlang 1 0.1\npatch 2 mean 99 erlang 1 0.1\n"
        )
        .is_err());
    }

    #[test]
    fn timetable_single_bus() {
        let m = model();
        let tt = derive_timetable(&m, 1, None).unwrap();
        assert_eq!(tt.mu_tot, m.r());
        for j in 0..3 {
            assert_eq!(tt.h(0, j), m.c(j));
        }
        let tt = derive_timetable(&m, 4, Some(1000.0)).unwrap();
        assert_eq!(tt.mu_tot, 250.0);
        assert_eq!(tt.h(2, 1), 500.0 + m.c(1));
        assert!(derive_timetable(&m, 0, None).is_err());
    }
}
