//! Known per-patch parameter sets of two services, for rerunning the
//! model checks without the raw traces.

use crate::error::Result;
use crate::fitting::{Erlang, PatchModel, PhaseType};
use crate::sim::{SimConfig, SimModel};

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub model: PatchModel,
    pub beta: usize,
    /// Timetabled loop duration in seconds.
    pub r: f64,
    /// Patch lengths in km, in route order.
    pub lengths_km: Vec<f64>,
}

impl Preset {
    /// Timetable on, the reference fleet size and loop time, spans from the
    /// patch lengths.
    pub fn sim_config(&self, seed: u64) -> SimConfig {
        let mut cfg = SimConfig::new(self.beta, seed);
        cfg.r = Some(self.r);
        cfg.spans = Some(self.spans());
        cfg
    }

    pub fn sim_model(&self, cfg: SimConfig) -> Result<SimModel> {
        SimModel::new(self.model.clone(), cfg)
    }

    /// Route-fraction spans from the patch lengths.
    pub fn spans(&self) -> Vec<f64> {
        let total: f64 = self.lengths_km.iter().sum();
        let mut s: Vec<f64> = self.lengths_km.iter().map(|l| l / total).collect();
        // Make the spans sum to exactly one.
        let rest: f64 = s[..s.len() - 1].iter().sum();
        *s.last_mut().unwrap() = 1.0 - rest;
        s
    }
}

fn build(rows: &[(u32, f64, f64, f64)], termini: [usize; 2]) -> (PatchModel, Vec<f64>) {
    let dists = rows
        .iter()
        .map(|&(k, l, _, _)| PhaseType::Erlang(Erlang::new(k, l)))
        .collect();
    let means = rows.iter().map(|r| r.2).collect();
    let lengths = rows.iter().map(|r| r.3).collect();
    (
        PatchModel::with_means(dists, means, termini).expect("preset tables are valid"),
        lengths,
    )
}

/// Edinburgh Airlink 100, weekday midday: 10 patches with termini at the
/// airport (patch 1) and Waverley (patch 7), 11 buses.
pub fn airlink_midday() -> Preset {
    // (k, lambda, mu, length km)
    let rows = [
        (44, 0.0482, 912.0, 0.49),
        (106, 0.4190, 253.0, 3.46),
        (68, 0.1858, 366.0, 2.47),
        (73, 0.2011, 363.0, 3.46),
        (17, 0.0523, 325.0, 0.99),
        (37, 0.0710, 521.0, 1.48),
        (40, 0.0419, 954.0, 0.49),
        (30, 0.0765, 392.0, 1.48),
        (78, 0.1196, 652.0, 4.94),
        (101, 0.1895, 533.0, 5.43),
    ];
    let (model, lengths_km) = build(&rows, [0, 6]);
    Preset {
        name: "airlink",
        model,
        beta: 11,
        r: 5259.0,
        lengths_km,
    }
}

/// Seattle Bellevue Express 550, rush hour: 12 patches with termini in
/// patches 1 and 7, 12 buses.
pub fn bellevue_express_rush() -> Preset {
    let rows = [
        (2, 0.0044, 453.0, 0.67),
        (46, 0.1098, 419.0, 2.02),
        (155, 0.3370, 460.0, 7.73),
        (45, 0.1275, 353.0, 4.70),
        (38, 0.0784, 485.0, 3.70),
        (24, 0.0538, 446.0, 1.34),
        (1, 0.0010, 984.0, 0.34),
        (24, 0.0442, 543.0, 1.01),
        (20, 0.0361, 554.0, 3.36),
        (14, 0.0284, 493.0, 5.04),
        (28, 0.0482, 581.0, 8.06),
        (20, 0.0362, 552.0, 2.35),
    ];
    let (model, lengths_km) = build(&rows, [0, 6]);
    Preset {
        name: "bellevue",
        model,
        beta: 12,
        r: 6323.0,
        lengths_km,
    }
}

pub fn by_name(name: &str) -> Option<Preset> {
    match name {
        "airlink" => Some(airlink_midday()),
        "bellevue" | "seattle" => Some(bellevue_express_rush()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn airlink_headway() {
        let p = airlink_midday();
        assert!((p.r / p.beta as f64 - 478.09).abs() < 0.01);
        assert!((p.model.dists[1].mean() - 253.0).abs() < 0.5);
        assert!((p.spans().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bellevue_loop_sums_to_r() {
        let p = bellevue_express_rush();
        assert_eq!(p.model.r(), p.r);
        assert_eq!(p.model.n(), 12);
    }
}
