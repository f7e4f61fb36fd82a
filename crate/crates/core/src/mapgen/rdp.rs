/// Distance from `p` to the infinite line through `a` and `b` (or to `a`
/// when the two coincide).
pub fn perpendicular_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return (p.0 - a.0).hypot(p.1 - a.1);
    }
    ((p.0 - a.0) * dy - (p.1 - a.1) * dx).abs() / len
}

/// Distance from `p` to the closed segment `ab`, and the clamped projection
/// parameter in `[0, 1]`.
pub fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let q = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - q.0).hypot(p.1 - q.1), t)
}

/// Ramer-Douglas-Peucker simplification. Returns indices of kept points;
/// both endpoints are always kept.
pub fn rdp(points: &[(f64, f64)], eps: f64) -> Vec<usize> {
    let n = points.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0, n - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (a, b) = (points[lo], points[hi]);
        let closed = a == b;
        let (mut best, mut at) = (-1.0, lo);
        for (i, &p) in points.iter().enumerate().take(hi).skip(lo + 1) {
            let d = if closed {
                (p.0 - a.0).hypot(p.1 - a.1)
            } else {
                segment_distance(p, a, b).0
            };
            if d > best {
                best = d;
                at = i;
            }
        }
        if best > eps {
            keep[at] = true;
            stack.push((lo, at));
            stack.push((at, hi));
        }
    }
    (0..n).filter(|&i| keep[i]).collect()
}
