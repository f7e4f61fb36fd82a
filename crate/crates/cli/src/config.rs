//! Every stage parameter, settable from a TOML file (`key = value` lines)
//! and overridden by command-line flags of the same name.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;

macro_rules! settings {
    ($( $(#[doc = $doc:literal])* $name:ident : $ty:ty ),* $(,)?) => {
        #[derive(Debug, Clone, Default, Deserialize, Args)]
        #[serde(deny_unknown_fields)]
        pub struct Settings {
            $(
                $(#[doc = $doc])*
                #[arg(long)]
                pub $name: Option<$ty>,
            )*
        }

        impl Settings {
            /// Values from `self` win over those in `base`.
            pub fn over(self, base: Settings) -> Settings {
                Settings { $( $name: self.$name.or(base.$name), )* }
            }
        }
    };
}

settings! {
    /// Output directory for all artifacts
    out: PathBuf,
    /// Column delimiter of the input
    delimiter: char,
    /// Input has a header row
    header: bool,
    /// Vehicle id column (index or header name)
    col_vehicle: String,
    col_x: String,
    col_y: String,
    col_t: String,
    /// Route id column; rows whose value differs from `route_value` are dropped
    col_route: String,
    route_value: String,
    /// `unix` or `iso8601`
    time_format: String,
    /// Daily window start, `HH:MM`
    window_start: String,
    /// Daily window end, `HH:MM`
    window_end: String,
    /// Comma-separated weekdays, e.g. `mon,tue,wed`
    weekdays: String,
    /// Seconds added to UNIX time to get local time
    tz_offset: i64,
    /// Map coordinates to the unit square before the map stages
    normalize: bool,
    /// Heat map cell size in world units (default: longest extent / 1024)
    cell_size: f64,
    /// Weight added along interpolated segments
    delta: f64,
    /// Contrast boost
    boost: f64,
    /// Blur standard deviation in cells
    sigma: f64,
    /// Skeleton threshold, fraction of the blurred maximum
    tau: f64,
    /// Erosion per thinning pass, fraction of the blurred maximum
    eta: f64,
    /// RDP tolerance in cells
    eps: f64,
    /// Long-edge split divisor
    m: f64,
    /// Snapping radius in cells
    reject_cells: f64,
    /// `dwell` or `extremes`
    terminus_rule: String,
    /// Gaps longer than this many seconds break a trace
    max_gap: i64,
    /// Jumps longer than this (world units) break a trace
    max_jump: f64,
    /// Initial bin count
    gamma: usize,
    /// Final patch count
    n: usize,
    /// `jenks` or `merge`
    clustering: String,
    /// Hyper-Erlang branches per patch (1 = Erlang)
    branches: usize,
    /// Bus count
    beta: usize,
    /// Timetabled loop duration override (seconds)
    r: f64,
    /// Gate terminus departures on the implicit timetable
    timetable: bool,
    /// `scheduled` or `dwell-then-gate`
    terminus_mode: String,
    /// Holding threshold in seconds
    theta_h: f64,
    /// Speed-modification gap threshold as a route fraction
    theta_s: f64,
    /// Speed-modification rate factor
    slowdown: f64,
    /// `uniform` or `single-terminus`
    init: String,
    /// Random seed
    seed: u64,
    /// Wall-clock budget per check run, seconds
    max_wall: f64,
    /// Target relative confidence half-width
    rel_half_width: f64,
    /// Cap on simulated seconds per check run, for reproducible results
    max_sim_time: f64,
    /// Property file; default: EWT, EVWT and BPH for every patch
    properties: PathBuf,
    /// Use a built-in parameter set (`airlink`, `bellevue`) instead of model.txt
    preset: String,
    /// Simulated seconds for `simulate`
    duration: f64,
}

impl Settings {
    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("bad config {}", path.display()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn seed(&self) -> Result<u64> {
        match self.seed {
            Some(s) => Ok(s),
            None => bail!("--seed is required for simulation (or set `seed` in the config)"),
        }
    }
}

/// `HH:MM` or `HH:MM:SS` to seconds of the day.
pub fn clock_time(s: &str) -> Result<u32> {
    let parts: Vec<u32> = s
        .split(':')
        .map(|p| p.trim().parse::<u32>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad time of day `{s}`"))?;
    let secs = match parts[..] {
        [h, m] => h * 3600 + m * 60,
        [h, m, s] => h * 3600 + m * 60 + s,
        _ => bail!("bad time of day `{s}`"),
    };
    if secs > 86_400 {
        bail!("time of day `{s}` past midnight");
    }
    Ok(secs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: Settings = toml::from_str("gamma = 50\nn = 10\nseed = 3\n").unwrap();
        let flags = Settings {
            n: Some(12),
            ..Settings::default()
        };
        let s = flags.over(file);
        assert_eq!(s.gamma, Some(50));
        assert_eq!(s.n, Some(12));
        assert_eq!(s.seed, Some(3));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<Settings>("gama = 50\n").is_err());
    }

    #[test]
    fn clock_times() {
        assert_eq!(clock_time("10:00").unwrap(), 36_000);
        assert_eq!(clock_time("15:30:15").unwrap(), 55_815);
        assert!(clock_time("25").is_err());
    }
}
