use crate::ingest::{Fix, TraceSet};
use crate::mapgen::{RouteModel, RouteTracker};
use crate::patches::PatchStructure;

#[derive(Debug, Clone)]
pub struct CrossingParams {
    /// Seconds between records above which the timer is poisoned.
    pub max_gap: i64,
    /// Straight-line distance between records above which the timer is
    /// poisoned, in input units.
    pub max_jump: f64,
}

impl Default for CrossingParams {
    fn default() -> Self {
        CrossingParams {
            max_gap: 300,
            max_jump: 5000.0,
        }
    }
}

/// Per-patch crossing durations in seconds, zero-based by patch.
pub fn extract_crossing_times(
    ts: &TraceSet,
    rm: &RouteModel,
    ps: &PatchStructure,
    params: &CrossingParams,
) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); ps.n()];
    for fixes in ts.vehicles.values() {
        let fr = RouteTracker::track(rm, fixes);
        let matched: Vec<(Fix, f64)> = fixes
            .iter()
            .zip(fr)
            .filter_map(|(f, r)| r.map(|r| (*f, r)))
            .collect();
        crossings_of(&matched, ps, params, &mut out);
    }
    out
}

/// Crossing durations along one vehicle's matched records.
pub(crate) fn crossings_of(
    recs: &[(Fix, f64)],
    ps: &PatchStructure,
    params: &CrossingParams,
    out: &mut [Vec<f64>],
) {
    let n = ps.n();
    let Some(&(_, f0)) = recs.first() else { return };
    let patch = |f: f64| {
        ps.patch_of(f.rem_euclid(1.0).min(1.0 - f64::EPSILON))
            .unwrap_or(0)
    };
    let mut cur = patch(f0);
    // Entry time into `cur`, or None while poisoned (-1 in the usual
    // description).
    let mut entry: Option<i64> = None;
    for w in recs.windows(2) {
        let ((a, fa), (b, fb)) = (w[0], w[1]);
        let dt = b.t - a.t;
        if dt > params.max_gap || a.dist(&b) > params.max_jump {
            entry = None;
            cur = patch(fb);
            continue;
        }
        let mut delta = fb - fa;
        if delta > 0.5 {
            delta -= 1.0;
        } else if delta < -0.5 {
            delta += 1.0;
        }
        if delta < 0.0 {
            let p = patch(fb);
            if p != cur {
                entry = None;
                cur = p;
            }
            continue;
        }
        if dt <= 0 || delta == 0.0 {
            continue;
        }
        // Forward boundaries inside (fa, fa + delta], visited in order.
        let end = fa + delta;
        let mut bounds: Vec<(f64, usize)> = Vec::new();
        for wrap in [0.0, 1.0] {
            for j in 1..=n {
                let bj = ps.breaks[j] + wrap;
                if bj > fa && bj <= end {
                    bounds.push((bj, j % n));
                }
            }
        }
        bounds.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (bj, next) in bounds {
            // First whole second whose interpolated fraction reaches bj.
            let at = |s: i64| fa + delta * s as f64 / dt as f64;
            let mut s = (((bj - fa) / delta) * dt as f64).ceil() as i64;
            s = s.clamp(1, dt);
            while s > 1 && at(s - 1) >= bj {
                s -= 1;
            }
            while s < dt && at(s) < bj {
                s += 1;
            }
            let t = a.t + s;
            if let Some(t0) = entry {
                if t > t0 {
                    out[cur].push((t - t0) as f64);
                }
            }
            entry = Some(t);
            cur = next;
        }
    }
}
