use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt::Write as _;

use super::graph::RouteGraph;
use super::rdp::segment_distance;
use crate::error::{Error, Result};
use crate::ingest::{Fix, TraceSet};

/// Which of the two termini. `Start` is where route completion is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Terminus {
    Start = 0,
    End = 1,
}

impl Terminus {
    pub fn other(self) -> Terminus {
        match self {
            Terminus::Start => Terminus::End,
            Terminus::End => Terminus::Start,
        }
    }

    fn idx(self) -> usize {
        self as usize
    }
}

/// One graph edge traversed in a given orientation, placed on the loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectedEdge {
    pub edge: usize,
    pub forward: bool,
    pub from: (f64, f64),
    pub to: (f64, f64),
    pub length: f64,
    /// Loop distance from the start terminus to `from`.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    /// First edge is the terminus this direction leaves from.
    pub edges: Vec<DirectedEdge>,
    pub length: f64,
}

impl Direction {
    /// Nearest edge within `radius`: `(index, distance, along-edge length)`.
    fn snap(&self, p: (f64, f64), radius: f64) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, e) in self.edges.iter().enumerate() {
            let (d, t) = segment_distance(p, e.from, e.to);
            if d <= radius && best.is_none_or(|b| d < b.1) {
                best = Some((i, d, t * e.length));
            }
        }
        best
    }
}

/// The loop: start terminus, outbound edges, end terminus, inbound edges.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteModel {
    pub termini: [usize; 2],
    /// `dirs[0]` leaves the start terminus, `dirs[1]` leaves the end terminus.
    pub dirs: [Direction; 2],
    pub total: f64,
    pub reject_radius: f64,
}

/// A measurement too far from every edge of the current direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("measurement does not match the route")]
pub struct Unmatched;

impl RouteModel {
    fn direction(&self, t: Terminus) -> &Direction {
        &self.dirs[t.idx()]
    }

    fn terminus_distance(&self, t: Terminus, p: (f64, f64)) -> f64 {
        let e = &self.direction(t).edges[0];
        segment_distance(p, e.from, e.to).0
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "termini {} {}", self.termini[0], self.termini[1]);
        let _ = writeln!(s, "length {}", self.total);
        let _ = writeln!(s, "radius {}", self.reject_radius);
        for (k, d) in self.dirs.iter().enumerate() {
            let _ = write!(s, "dir {k}");
            for e in &d.edges {
                let _ = write!(s, " {}{}", e.edge, if e.forward { '+' } else { '-' });
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, g: &RouteGraph) -> std::result::Result<Self, String> {
        let mut radius = None;
        let mut seqs: [Option<Vec<(usize, bool)>>; 2] = [None, None];
        for line in text.lines() {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.first() {
                Some(&"radius") => {
                    radius = f.get(1).and_then(|v| v.parse::<f64>().ok());
                }
                Some(&"dir") => {
                    let k: usize = f
                        .get(1)
                        .and_then(|v| v.parse().ok())
                        .filter(|&k| k < 2)
                        .ok_or("bad direction index")?;
                    let mut seq = Vec::new();
                    for tok in &f[2..] {
                        let (id, sign) = tok.split_at(tok.len() - 1);
                        let id: usize = id.parse().map_err(|_| format!("bad edge `{tok}`"))?;
                        if id >= g.edges.len() {
                            return Err(format!("edge {id} not in graph"));
                        }
                        seq.push((id, sign == "+"));
                    }
                    seqs[k] = Some(seq);
                }
                _ => {}
            }
        }
        let radius = radius.ok_or("missing radius")?;
        match seqs {
            [Some(a), Some(b)] if !a.is_empty() && !b.is_empty() => Ok(assemble(g, &a, &b, radius)),
            _ => Err("need two non-empty directions".into()),
        }
    }
}

fn assemble(g: &RouteGraph, a: &[(usize, bool)], b: &[(usize, bool)], radius: f64) -> RouteModel {
    let mut offset = 0.0;
    let mut build = |seq: &[(usize, bool)]| {
        let start = offset;
        let edges: Vec<DirectedEdge> = seq
            .iter()
            .map(|&(id, forward)| {
                let e = &g.edges[id];
                let (u, v) = if forward { (e.a, e.b) } else { (e.b, e.a) };
                let de = DirectedEdge {
                    edge: id,
                    forward,
                    from: g.pos(u),
                    to: g.pos(v),
                    length: e.length,
                    offset,
                };
                offset += e.length;
                de
            })
            .collect();
        Direction {
            edges,
            length: offset - start,
        }
    };
    let da = build(a);
    let db = build(b);
    RouteModel {
        termini: [a[0].0, b[0].0],
        total: offset,
        dirs: [da, db],
        reject_radius: radius,
    }
}

/// Completion fraction of `p` for a vehicle whose last terminus was `last`.
pub fn route_completion(
    rm: &RouteModel,
    p: (f64, f64),
    last: Terminus,
) -> std::result::Result<f64, Unmatched> {
    let d = rm.direction(last);
    let (i, _, along) = d.snap(p, rm.reject_radius).ok_or(Unmatched)?;
    let f = (d.edges[i].offset + along) / rm.total;
    Ok(if f >= 1.0 { f - 1.0 } else { f })
}

/// Follows one vehicle along the route, switching direction whenever it
/// reaches the terminus it did not come from.
#[derive(Debug, Clone, Default)]
pub struct RouteTracker {
    pub last: Option<Terminus>,
}

impl RouteTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, rm: &RouteModel, p: (f64, f64)) -> Option<f64> {
        let r = rm.reject_radius;
        match self.last {
            None => {
                let d0 = rm.terminus_distance(Terminus::Start, p);
                let d1 = rm.terminus_distance(Terminus::End, p);
                if d0.min(d1) <= r {
                    self.last = Some(if d0 <= d1 {
                        Terminus::Start
                    } else {
                        Terminus::End
                    });
                }
            }
            Some(last) => {
                let other = last.other();
                let d_other = rm.terminus_distance(other, p);
                if d_other <= r {
                    let cur = rm.direction(last).snap(p, r).map_or(f64::INFINITY, |s| s.1);
                    if d_other <= cur {
                        self.last = Some(other);
                    }
                }
            }
        }
        route_completion(rm, p, self.last?).ok()
    }

    /// Fractions for a whole trace; `None` where a fix is unmatched.
    pub fn track(rm: &RouteModel, fixes: &[Fix]) -> Vec<Option<f64>> {
        let mut tr = RouteTracker::new();
        fixes.iter().map(|f| tr.observe(rm, (f.x, f.y))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminusRule {
    /// Highest dwell time per unit length.
    Dwell,
    /// The two end edges of a path-shaped graph.
    PathExtremes,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteParams {
    /// Measurements farther than this from every edge are ignored (world units).
    pub reject_radius: f64,
    pub max_gap: i64,
    pub rule: TerminusRule,
    /// The second terminus must be at least this fraction of the graph's
    /// eccentricity away from the first.
    pub min_separation: f64,
    /// If set, the terminus nearer to this point becomes the start.
    pub start_hint: Option<(f64, f64)>,
}

impl RouteParams {
    pub fn with_radius(reject_radius: f64) -> Self {
        RouteParams {
            reject_radius,
            max_gap: 300,
            rule: TerminusRule::Dwell,
            min_separation: 0.25,
            start_hint: None,
        }
    }
}

/// Nearest-edge lookup on a uniform bucket grid.
struct EdgeIndex<'a> {
    g: &'a RouteGraph,
    cell: f64,
    origin: (f64, f64),
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> EdgeIndex<'a> {
    fn new(g: &'a RouteGraph, radius: f64) -> Self {
        let cell = radius.max(g.total_length() / 4096.0).max(1e-9);
        let origin = g.nodes.iter().fold((f64::INFINITY, f64::INFINITY), |o, n| {
            (o.0.min(n.x), o.1.min(n.y))
        });
        let mut idx = EdgeIndex {
            g,
            cell,
            origin,
            buckets: HashMap::new(),
        };
        for e in &g.edges {
            let (a, b) = (g.pos(e.a), g.pos(e.b));
            let (lo, hi) = (
                idx.key((a.0.min(b.0) - radius, a.1.min(b.1) - radius)),
                idx.key((a.0.max(b.0) + radius, a.1.max(b.1) + radius)),
            );
            for kx in lo.0..=hi.0 {
                for ky in lo.1..=hi.1 {
                    idx.buckets.entry((kx, ky)).or_default().push(e.id);
                }
            }
        }
        idx
    }

    fn key(&self, p: (f64, f64)) -> (i64, i64) {
        (
            ((p.0 - self.origin.0) / self.cell).floor() as i64,
            ((p.1 - self.origin.1) / self.cell).floor() as i64,
        )
    }

    /// `(edge, along-edge distance from node a, distance)`.
    fn snap(&self, p: (f64, f64), radius: f64) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for &id in self.buckets.get(&self.key(p))? {
            let e = &self.g.edges[id];
            let (d, t) = segment_distance(p, self.g.pos(e.a), self.g.pos(e.b));
            if d <= radius && best.is_none_or(|b| d < b.2) {
                best = Some((id, t * e.length, d));
            }
        }
        best
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distances and `(previous node, edge)` links from one source.
type Tree = (Vec<f64>, Vec<Option<(usize, usize)>>);

struct ShortestPaths<'a> {
    adj: Vec<Vec<(usize, usize)>>,
    g: &'a RouteGraph,
    cache: HashMap<usize, Tree>,
}

impl<'a> ShortestPaths<'a> {
    fn new(g: &'a RouteGraph) -> Self {
        ShortestPaths {
            adj: g.adjacency(),
            g,
            cache: HashMap::new(),
        }
    }

    fn from(&mut self, src: usize) -> &Tree {
        let (adj, g) = (&self.adj, self.g);
        self.cache.entry(src).or_insert_with(|| {
            let n = g.nodes.len();
            let mut dist = vec![f64::INFINITY; n];
            let mut prev = vec![None; n];
            let mut heap = BinaryHeap::new();
            dist[src] = 0.0;
            heap.push(HeapItem(0.0, src));
            while let Some(HeapItem(d, u)) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for &(v, e) in &adj[u] {
                    let nd = d + g.edges[e].length;
                    if nd < dist[v] {
                        dist[v] = nd;
                        prev[v] = Some((u, e));
                        heap.push(HeapItem(nd, v));
                    }
                }
            }
            (dist, prev)
        })
    }

    fn dist(&mut self, a: usize, b: usize) -> f64 {
        self.from(a).0[b]
    }

    /// Directed edges along the shortest path from `a` to `b`.
    fn path(&mut self, a: usize, b: usize) -> Vec<(usize, bool)> {
        let g = self.g;
        let prev = &self.from(a).1;
        let mut out = Vec::new();
        let mut v = b;
        while v != a {
            match prev[v] {
                Some((u, e)) => {
                    out.push((e, g.edges[e].a == u));
                    v = u;
                }
                None => return Vec::new(),
            }
        }
        out.reverse();
        out
    }
}

/// A point on the graph: edge plus distance from its `a` node.
#[derive(Clone, Copy)]
struct OnEdge {
    edge: usize,
    s: f64,
}

fn push_step(seq: &mut Vec<(usize, bool)>, step: (usize, bool)) {
    if seq.last() != Some(&step) {
        seq.push(step);
    }
}

/// Appends the directed edges travelled between two snapped points.
fn connect(sp: &mut ShortestPaths, seq: &mut Vec<(usize, bool)>, p: OnEdge, q: OnEdge) {
    let g = sp.g;
    if p.edge == q.edge {
        if q.s != p.s {
            push_step(seq, (p.edge, q.s > p.s));
        }
        return;
    }
    let (ep, eq) = (&g.edges[p.edge], &g.edges[q.edge]);
    let exits = [(ep.a, p.s, false), (ep.b, ep.length - p.s, true)];
    let entries = [(eq.a, q.s, true), (eq.b, eq.length - q.s, false)];
    let mut best = (f64::INFINITY, 0, 0);
    for (i, &(u, cu, _)) in exits.iter().enumerate() {
        for (j, &(v, cv, _)) in entries.iter().enumerate() {
            let c = cu + sp.dist(u, v) + cv;
            if c < best.0 {
                best = (c, i, j);
            }
        }
    }
    if !best.0.is_finite() {
        return;
    }
    let (u, _, fwd_p) = exits[best.1];
    let (v, _, fwd_q) = entries[best.2];
    push_step(seq, (p.edge, fwd_p));
    for step in sp.path(u, v) {
        push_step(seq, step);
    }
    push_step(seq, (q.edge, fwd_q));
}

fn edge_distance_from(sp: &mut ShortestPaths, e0: usize, e: usize) -> f64 {
    let g = sp.g;
    let (a0, b0) = (g.edges[e0].a, g.edges[e0].b);
    let (a, b) = (g.edges[e].a, g.edges[e].b);
    [a0, b0]
        .iter()
        .flat_map(|&s| [a, b].map(|t| (s, t)))
        .map(|(s, t)| sp.dist(s, t))
        .fold(f64::INFINITY, f64::min)
}

fn pick_termini(
    g: &RouteGraph,
    score: &[f64],
    params: &RouteParams,
    sp: &mut ShortestPaths,
) -> Result<[usize; 2]> {
    let use_extremes = params.rule == TerminusRule::PathExtremes || score.iter().all(|&s| s <= 0.0);
    if use_extremes {
        let leaves: Vec<usize> = (0..g.nodes.len()).filter(|&n| g.degree(n) == 1).collect();
        let simple_path = leaves.len() == 2 && (0..g.nodes.len()).all(|n| g.degree(n) <= 2);
        if !simple_path {
            return Err(Error::Coverage(
                "no dwell information and the graph is not a simple path".into(),
            ));
        }
        let edge_at = |n: usize| {
            g.edges
                .iter()
                .find(|e| e.a == n || e.b == n)
                .map(|e| e.id)
                .unwrap()
        };
        return Ok([edge_at(leaves[0]), edge_at(leaves[1])]);
    }
    let by_score = |a: &usize, b: &usize| score[*b].total_cmp(&score[*a]).then(a.cmp(b));
    let mut order: Vec<usize> = (0..g.edges.len()).collect();
    order.sort_by(by_score);
    let t0 = order[0];
    let dist: Vec<f64> = (0..g.edges.len())
        .map(|e| edge_distance_from(sp, t0, e))
        .collect();
    let ecc = dist
        .iter()
        .copied()
        .filter(|d| d.is_finite())
        .fold(0.0, f64::max);
    let t1 = order
        .iter()
        .copied()
        .find(|&e| e != t0 && dist[e].is_finite() && dist[e] >= params.min_separation * ecc)
        .ok_or_else(|| Error::Coverage("no second terminus candidate".into()))?;
    Ok([t0, t1])
}

/// Finds the termini and the modal edge sequence in each direction.
pub fn derive_route_model(
    g: &RouteGraph,
    ts: &TraceSet,
    params: &RouteParams,
) -> Result<RouteModel> {
    if g.edges.len() < 2 {
        return Err(Error::Coverage("graph has fewer than two edges".into()));
    }
    let radius = params.reject_radius;
    let index = EdgeIndex::new(g, radius);
    let snapped: Vec<Vec<Option<OnEdge>>> = ts
        .vehicles
        .values()
        .map(|v| {
            v.iter()
                .map(|f| {
                    index
                        .snap((f.x, f.y), radius)
                        .map(|(edge, s, _)| OnEdge { edge, s })
                })
                .collect()
        })
        .collect();

    let mut dwell = vec![0.0; g.edges.len()];
    for (v, sn) in ts.vehicles.values().zip(&snapped) {
        for i in 1..v.len() {
            let dt = v[i].t - v[i - 1].t;
            if dt > params.max_gap {
                continue;
            }
            if let Some(p) = sn[i - 1] {
                dwell[p.edge] += dt as f64;
            }
        }
    }
    let score: Vec<f64> = dwell
        .iter()
        .zip(&g.edges)
        .map(|(d, e)| d / e.length)
        .collect();

    let mut sp = ShortestPaths::new(g);
    let mut termini = pick_termini(g, &score, params, &mut sp)?;
    if let Some(h) = params.start_hint {
        let d = |e: usize| {
            let e = &g.edges[e];
            segment_distance(h, g.pos(e.a), g.pos(e.b)).0
        };
        if d(termini[1]) < d(termini[0]) {
            termini.swap(0, 1);
        }
    }
    let which = |e: usize| termini.iter().position(|&t| t == e);

    // Terminus-to-terminus passages, keyed by the terminus left.
    let mut passages: [BTreeMap<Vec<(usize, bool)>, usize>; 2] = [BTreeMap::new(), BTreeMap::new()];
    for (v, sn) in ts.vehicles.values().zip(&snapped) {
        let mut from: Option<(usize, usize)> = None;
        for i in 0..v.len() {
            if i > 0 && v[i].t - v[i - 1].t > params.max_gap {
                from = None;
            }
            let Some(p) = sn[i] else { continue };
            match (which(p.edge), from) {
                (Some(k), Some((k0, _))) if k == k0 => from = Some((k, i)),
                (Some(k), None) => from = Some((k, i)),
                (Some(k), Some((k0, i0))) => {
                    let pts: Vec<OnEdge> = (i0..=i).filter_map(|j| sn[j]).collect();
                    let mut seq = Vec::new();
                    for w in pts.windows(2) {
                        connect(&mut sp, &mut seq, w[0], w[1]);
                    }
                    let valid = seq.first().map(|s| s.0) == Some(termini[k0])
                        && seq.last().map(|s| s.0) == Some(termini[k])
                        && is_walk(g, &seq)
                        && no_repeats(&seq);
                    if valid {
                        seq.pop();
                        *passages[k0].entry(seq).or_default() += 1;
                    }
                    from = Some((k, i));
                }
                (None, _) => {}
            }
        }
    }

    let modal = |m: &BTreeMap<Vec<(usize, bool)>, usize>| {
        m.iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(s, _)| s.clone())
    };
    let (Some(a), Some(b)) = (modal(&passages[0]), modal(&passages[1])) else {
        return Err(Error::Coverage(
            "no complete terminus-to-terminus passage in one of the directions".into(),
        ));
    };
    Ok(assemble(g, &a, &b, radius))
}

fn head(g: &RouteGraph, s: (usize, bool)) -> usize {
    let e = &g.edges[s.0];
    if s.1 {
        e.b
    } else {
        e.a
    }
}

fn tail(g: &RouteGraph, s: (usize, bool)) -> usize {
    let e = &g.edges[s.0];
    if s.1 {
        e.a
    } else {
        e.b
    }
}

fn is_walk(g: &RouteGraph, seq: &[(usize, bool)]) -> bool {
    seq.windows(2).all(|w| head(g, w[0]) == tail(g, w[1]))
}

fn no_repeats(seq: &[(usize, bool)]) -> bool {
    let mut seen = std::collections::HashSet::new();
    seq.iter().all(|s| seen.insert(s.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapgen::graph::{Edge, Node};

    /// Square loop of side 25 split into unit-free edges at the corners.
    fn square() -> RouteGraph {
        let pts = [(0.0, 0.0), (25.0, 0.0), (25.0, 25.0), (0.0, 25.0)];
        let nodes = pts
            .iter()
            .enumerate()
            .map(|(id, &(x, y))| Node { id, x, y })
            .collect();
        let edges = (0..4)
            .map(|id| Edge {
                id,
                a: id,
                b: (id + 1) % 4,
                length: 25.0,
            })
            .collect();
        RouteGraph { nodes, edges }
    }

    #[test]
    fn loop_fraction_by_arc_length() {
        let g = square();
        let rm = assemble(&g, &[(0, true), (1, true)], &[(2, true), (3, true)], 1.0);
        assert_eq!(rm.total, 100.0);
        assert_eq!(route_completion(&rm, (0.0, 0.0), Terminus::Start), Ok(0.0));
        assert_eq!(route_completion(&rm, (25.0, 25.0), Terminus::End), Ok(0.5));
        assert_eq!(
            route_completion(&rm, (12.5, 0.0), Terminus::Start),
            Ok(0.125)
        );
        assert_eq!(
            route_completion(&rm, (12.5, 10.0), Terminus::Start),
            Err(Unmatched)
        );
    }

    #[test]
    fn edge_start_offset_arithmetic() {
        let nodes: Vec<Node> = [0.0, 3.1, 6.2, 9.3, 12.4]
            .iter()
            .enumerate()
            .map(|(id, &x)| Node { id, x, y: 0.0 })
            .collect();
        let lens = [3.1, 3.1, 3.1, 3.1];
        let edges = (0..4)
            .map(|id| Edge {
                id,
                a: id,
                b: id + 1,
                length: lens[id],
            })
            .collect();
        let g = RouteGraph { nodes, edges };
        let rm = assemble(&g, &[(0, true)], &[(1, true), (2, true), (3, true)], 0.1);
        assert!((rm.total - 12.4).abs() < 1e-12);
        let f = route_completion(&rm, (3.1, 0.0), Terminus::End).unwrap();
        assert!((f - 0.25).abs() < 1e-12);
    }

    #[test]
    fn tracker_switches_at_other_terminus() {
        let g = square();
        let rm = assemble(&g, &[(0, true), (1, true)], &[(2, true), (3, true)], 1.0);
        let fixes: Vec<Fix> = [
            (3.0, 0.0),
            (25.0, 10.0),
            (24.0, 25.0),
            (0.0, 20.0),
            (5.0, 0.0),
        ]
        .iter()
        .enumerate()
        .map(|(t, &(x, y))| Fix::new(x, y, t as i64))
        .collect();
        let fr: Vec<f64> = RouteTracker::track(&rm, &fixes)
            .into_iter()
            .map(Option::unwrap)
            .collect();
        assert_eq!(fr, vec![0.03, 0.35, 0.51, 0.80, 0.05]);
    }

    #[test]
    fn tracker_waits_for_a_terminus() {
        let g = square();
        let rm = assemble(&g, &[(0, true), (1, true)], &[(2, true), (3, true)], 1.0);
        let mut tr = RouteTracker::new();
        assert_eq!(tr.observe(&rm, (25.0, 10.0)), None);
        assert!(tr.observe(&rm, (2.0, 0.0)).is_some());
    }

    #[test]
    fn text_round_trip() {
        let g = square();
        let rm = assemble(&g, &[(0, true), (1, true)], &[(2, true), (3, true)], 1.5);
        assert_eq!(RouteModel::from_text(&rm.to_text(), &g).unwrap(), rm);
    }
}
