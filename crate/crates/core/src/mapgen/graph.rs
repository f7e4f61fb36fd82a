use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use super::rdp::rdp;
use super::skeleton::{neighbour_count, SkeletonMask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub id: usize,
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

/// Undirected road graph in world coordinates. Ids equal vector positions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RouteGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    /// RDP tolerance in cells.
    pub eps: f64,
    /// Edges longer than twice the median are cut into pieces of about median / m.
    pub m: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams { eps: 1.0, m: 1.0 }
    }
}

impl RouteGraph {
    pub fn pos(&self, node: usize) -> (f64, f64) {
        let n = &self.nodes[node];
        (n.x, n.y)
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|e| e.a == node || e.b == node)
            .count()
    }

    /// `adjacency[node]` lists `(neighbour, edge id)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.a].push((e.b, e.id));
            adj[e.b].push((e.a, e.id));
        }
        adj
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for n in &self.nodes {
            let _ = writeln!(s, "node {} {} {}", n.id, n.x, n.y);
        }
        for e in &self.edges {
            let _ = writeln!(s, "edge {} {} {} {}", e.id, e.a, e.b, e.length);
        }
        s
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut g = RouteGraph::default();
        for (ln, line) in text.lines().enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || format!("line {}: cannot parse `{line}`", ln + 1);
            match f.first() {
                None => continue,
                Some(s) if s.starts_with('#') => continue,
                Some(&"node") if f.len() == 4 => {
                    let id: usize = f[1].parse().map_err(|_| bad())?;
                    if id != g.nodes.len() {
                        return Err(format!("line {}: node ids must be consecutive", ln + 1));
                    }
                    g.nodes.push(Node {
                        id,
                        x: f[2].parse().map_err(|_| bad())?,
                        y: f[3].parse().map_err(|_| bad())?,
                    });
                }
                Some(&"edge") if f.len() == 5 => {
                    let id: usize = f[1].parse().map_err(|_| bad())?;
                    if id != g.edges.len() {
                        return Err(format!("line {}: edge ids must be consecutive", ln + 1));
                    }
                    let e = Edge {
                        id,
                        a: f[2].parse().map_err(|_| bad())?,
                        b: f[3].parse().map_err(|_| bad())?,
                        length: f[4].parse().map_err(|_| bad())?,
                    };
                    if !(e.length > 0.0) || e.a == e.b {
                        return Err(format!("line {}: degenerate edge", ln + 1));
                    }
                    g.edges.push(e);
                }
                _ => return Err(bad()),
            }
        }
        if g.edges
            .iter()
            .any(|e| e.a >= g.nodes.len() || e.b >= g.nodes.len())
        {
            return Err("edge refers to a missing node".into());
        }
        Ok(g)
    }
}

type Pix = (usize, usize);

/// Chains of skeleton pixels between end/crossing clusters.
struct Tracer<'a> {
    mask: &'a SkeletonMask,
    cluster: HashMap<Pix, usize>,
}

impl Tracer<'_> {
    fn is_node(&self, p: Pix) -> bool {
        self.cluster.contains_key(&p)
    }

    fn walk(&self, start: Pix, first: Pix, used: &mut HashSet<(Pix, Pix)>) -> Vec<Pix> {
        let mut path = vec![start, first];
        let (mut prev, mut cur) = (start, first);
        while !self.is_node(cur) {
            let next = self
                .mask
                .neighbours(cur.0, cur.1)
                .find(|&q| q != prev && !(q == start && path.len() == 2));
            match next {
                Some(q) => {
                    path.push(q);
                    prev = cur;
                    cur = q;
                }
                None => break,
            }
            if cur == start {
                break;
            }
        }
        let n = path.len();
        used.insert((path[n - 1], path[n - 2]));
        path
    }
}

/// Turns a skeleton into a simplified graph: pixels with a neighbour count
/// other than 0 or 2 are ends or crossings, the runs between them become
/// polylines, and each polyline is simplified with RDP.
pub fn build_graph(mask: &SkeletonMask, params: &GraphParams) -> Result<RouteGraph> {
    if mask.count() == 0 {
        return Err(Error::Empty("skeleton mask has no set pixels".into()));
    }
    if !(params.m >= 1.0) || !(params.eps >= 0.0) {
        return Err(Error::invalid("need eps >= 0 and m >= 1"));
    }

    // Cluster adjacent node pixels into single crossings.
    let node_pixels: Vec<Pix> = mask
        .pixels()
        .filter(|&(x, y)| {
            let c = neighbour_count(mask, x, y);
            c != 0 && c != 2
        })
        .collect();
    let node_set: HashSet<Pix> = node_pixels.iter().copied().collect();
    let mut cluster: HashMap<Pix, usize> = HashMap::new();
    let mut members: Vec<Vec<Pix>> = Vec::new();
    for &p in &node_pixels {
        if cluster.contains_key(&p) {
            continue;
        }
        let id = members.len();
        let mut group = vec![p];
        cluster.insert(p, id);
        let mut i = 0;
        while i < group.len() {
            let q = group[i];
            for r in mask.neighbours(q.0, q.1) {
                if node_set.contains(&r) && !cluster.contains_key(&r) {
                    cluster.insert(r, id);
                    group.push(r);
                }
            }
            i += 1;
        }
        members.push(group);
    }

    let mut tracer = Tracer { mask, cluster };
    let mut chains: Vec<Vec<Pix>> = Vec::new();
    let mut used: HashSet<(Pix, Pix)> = HashSet::new();
    let mut on_chain: HashSet<Pix> = HashSet::new();
    for &p in &node_pixels {
        for q in mask.neighbours(p.0, p.1) {
            if tracer.is_node(q) {
                if tracer.cluster[&q] != tracer.cluster[&p] && p < q {
                    chains.push(vec![p, q]);
                }
                continue;
            }
            if used.contains(&(p, q)) {
                continue;
            }
            used.insert((p, q));
            let path = tracer.walk(p, q, &mut used);
            on_chain.extend(path.iter().copied());
            chains.push(path);
        }
    }
    // Pure cycles have no end or crossing pixel; seed one.
    for p in mask.pixels().collect::<Vec<_>>() {
        if on_chain.contains(&p) || tracer.is_node(p) || neighbour_count(mask, p.0, p.1) == 0 {
            continue;
        }
        let id = members.len();
        members.push(vec![p]);
        tracer.cluster.insert(p, id);
        let q = mask.neighbours(p.0, p.1).next().expect("degree two");
        let path = tracer.walk(p, q, &mut used);
        on_chain.extend(path.iter().copied());
        chains.push(path);
    }

    // Graph in pixel coordinates.
    let centroid = |g: &Vec<Pix>| -> (f64, f64) {
        let n = g.len() as f64;
        let (sx, sy) = g
            .iter()
            .fold((0.0, 0.0), |(a, b), p| (a + p.0 as f64, b + p.1 as f64));
        (sx / n, sy / n)
    };
    let mut pos: Vec<(f64, f64)> = members.iter().map(centroid).collect();
    let mut raw_edges: Vec<(usize, usize)> = Vec::new();
    for chain in &chains {
        let ca = tracer.cluster[&chain[0]];
        let cb = tracer.cluster[chain.last().unwrap()];
        // Interior pixels, trimmed of any that belong to the end clusters.
        let interior: Vec<Pix> = chain[1..chain.len() - 1]
            .iter()
            .copied()
            .filter(|p| !tracer.is_node(*p))
            .collect();
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(interior.len() + 2);
        pts.push(pos[ca]);
        pts.extend(interior.iter().map(|p| (p.0 as f64, p.1 as f64)));
        pts.push(pos[cb]);
        let mut keep = rdp(&pts, params.eps);
        if ca == cb {
            if interior.len() < 2 {
                continue;
            }
            // A loop back to its own node: pin the middle so it is not a self-loop.
            let mid = pts.len() / 2;
            if !keep.contains(&mid) {
                keep.push(mid);
                keep.sort_unstable();
            }
        }
        let mut ids = Vec::with_capacity(keep.len());
        for (k, &i) in keep.iter().enumerate() {
            if k == 0 {
                ids.push(ca);
            } else if k == keep.len() - 1 {
                ids.push(cb);
            } else {
                pos.push(pts[i]);
                ids.push(pos.len() - 1);
            }
        }
        raw_edges.extend(ids.windows(2).map(|w| (w[0], w[1])));
    }

    // Split long edges.
    let len_of = |pos: &Vec<(f64, f64)>, a: usize, b: usize| {
        (pos[a].0 - pos[b].0).hypot(pos[a].1 - pos[b].1)
    };
    let mut lengths: Vec<f64> = raw_edges
        .iter()
        .map(|&(a, b)| len_of(&pos, a, b))
        .filter(|&l| l > 0.0)
        .collect();
    lengths.sort_by(f64::total_cmp);
    let median = if lengths.is_empty() {
        0.0
    } else if lengths.len() % 2 == 1 {
        lengths[lengths.len() / 2]
    } else {
        0.5 * (lengths[lengths.len() / 2 - 1] + lengths[lengths.len() / 2])
    };
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for &(a, b) in &raw_edges {
        let l = len_of(&pos, a, b);
        if median > 0.0 && l > 2.0 * median {
            let pieces = ((l / (median / params.m)).round() as usize).max(2);
            let mut prev = a;
            for s in 1..pieces {
                let t = s as f64 / pieces as f64;
                let p = (
                    pos[a].0 + t * (pos[b].0 - pos[a].0),
                    pos[a].1 + t * (pos[b].1 - pos[a].1),
                );
                pos.push(p);
                edges.push((prev, pos.len() - 1));
                prev = pos.len() - 1;
            }
            edges.push((prev, b));
        } else {
            edges.push((a, b));
        }
    }

    // Drop self-loops and zero-length edges, collapse parallel edges.
    let mut seen = HashSet::new();
    edges.retain(|&(a, b)| a != b && len_of(&pos, a, b) > 0.0 && seen.insert((a.min(b), a.max(b))));
    if edges.is_empty() {
        return Err(Error::Empty("skeleton yields no edges".into()));
    }

    // Keep the component with the largest total length.
    let mut parent: Vec<usize> = (0..pos.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(a, b) in &edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut weight: HashMap<usize, f64> = HashMap::new();
    for &(a, b) in &edges {
        let r = find(&mut parent, a);
        *weight.entry(r).or_default() += len_of(&pos, a, b);
    }
    let best = weight
        .iter()
        .max_by(|x, y| x.1.total_cmp(y.1).then(y.0.cmp(x.0)))
        .map(|(&r, _)| r)
        .unwrap();

    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut g = RouteGraph::default();
    let cell = mask.cell_size;
    let mut node_id = |n: usize, g: &mut RouteGraph| -> usize {
        *remap.entry(n).or_insert_with(|| {
            let (x, y) = mask.world(pos[n].0, pos[n].1);
            g.nodes.push(Node {
                id: g.nodes.len(),
                x,
                y,
            });
            g.nodes.len() - 1
        })
    };
    for &(a, b) in &edges {
        if find(&mut parent, a) != best {
            continue;
        }
        let (na, nb) = (node_id(a, &mut g), node_id(b, &mut g));
        let id = g.edges.len();
        g.edges.push(Edge {
            id,
            a: na,
            b: nb,
            length: len_of(&pos, a, b) * cell,
        });
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(pixels: &[(usize, usize)]) -> SkeletonMask {
        let w = pixels.iter().map(|p| p.0).max().unwrap() + 3;
        let h = pixels.iter().map(|p| p.1).max().unwrap() + 3;
        SkeletonMask::from_pixels(w, h, pixels)
    }

    #[test]
    fn straight_run_is_one_edge() {
        let px: Vec<_> = (1..101).map(|x| (x, 1)).collect();
        let g = build_graph(&mask(&px), &GraphParams::default()).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert!((g.edges[0].length - 99.0).abs() < 1e-9);
    }

    #[test]
    fn l_shape_keeps_corner() {
        let mut px: Vec<_> = (1..51).map(|x| (x, 1)).collect();
        px.extend((2..51).map(|y| (50, y)));
        let g = build_graph(&mask(&px), &GraphParams::default()).unwrap();
        assert_eq!(g.nodes.len(), 3);
        // The corner node sits at the crossing cluster, within a cell of the
        // corner pixel centre (50.5, 1.5).
        assert!(g
            .nodes
            .iter()
            .any(|n| (n.x - 50.5).abs() <= 1.0 && (n.y - 1.5).abs() <= 1.0));
    }

    #[test]
    fn crossing_pixel_becomes_degree_three_node() {
        // A T: horizontal bar with a stem down from its middle.
        let mut px: Vec<_> = (1..40).map(|x| (x, 30)).collect();
        px.extend((1..30).map(|y| (20, y)));
        let g = build_graph(&mask(&px), &GraphParams::default()).unwrap();
        let deg3: Vec<_> = (0..g.nodes.len()).filter(|&n| g.degree(n) == 3).collect();
        assert_eq!(deg3.len(), 1);
        assert_eq!(g.edges.len(), 3);
    }

    #[test]
    fn cycle_has_nodes_and_no_self_loop() {
        let mut px = Vec::new();
        for x in 1..30 {
            px.push((x, 1));
            px.push((x, 20));
        }
        for y in 2..20 {
            px.push((1, y));
            px.push((29, y));
        }
        let g = build_graph(&mask(&px), &GraphParams::default()).unwrap();
        assert!(g.edges.iter().all(|e| e.a != e.b));
        assert!((0..g.nodes.len()).all(|n| g.degree(n) == 2));
        // Corner clusters shave a little off each corner.
        let full = 2.0 * (28.0 + 19.0);
        assert!((g.total_length() - full).abs() < 0.05 * full);
    }

    #[test]
    fn long_edges_split() {
        // One long arm and several short ones.
        let mut px: Vec<_> = (1..200).map(|x| (x, 10)).collect();
        for k in 0..3 {
            px.extend((11..16).map(|y| (20 + 40 * k, y)));
        }
        let g = build_graph(&mask(&px), &GraphParams::default()).unwrap();
        let mut lens: Vec<f64> = g.edges.iter().map(|e| e.length).collect();
        lens.sort_by(f64::total_cmp);
        let median = lens[lens.len() / 2];
        assert!(lens.iter().all(|&l| l <= 2.0 * median + 1e-9 || l < 50.0));
    }

    #[test]
    fn keeps_largest_component() {
        let mut px: Vec<_> = (1..60).map(|x| (x, 1)).collect();
        px.extend((1..6).map(|x| (x, 10)));
        let g = build_graph(&mask(&px), &GraphParams::default()).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert!((g.edges[0].length - 58.0).abs() < 1e-9);
    }

    #[test]
    fn text_round_trip() {
        let px: Vec<_> = (1..30).map(|x| (x, 1 + x / 10)).collect();
        let g = build_graph(&mask(&px), &GraphParams::default()).unwrap();
        assert_eq!(RouteGraph::from_text(&g.to_text()).unwrap(), g);
    }
}
