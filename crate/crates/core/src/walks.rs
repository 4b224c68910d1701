//! Simple random walks on graph trees and Brownian motion on weighted
//! metric trees approximated by walks on an edge subdivision.

use std::io::Write;

use rand::{Rng, RngCore};

use crate::embedding::GraphEmbedding;
use crate::gw::OrderedTree;
use crate::io::{fmt_f64, Csv};
use crate::reduced::{GraphSpatialTree, SkeletonPoint};
use crate::{Error, Result};

/// A walk observed at increasing times, optionally with its spatial image.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkPath {
    pub times: Vec<f64>,
    pub states: Vec<usize>,
    pub dim: usize,
    /// `dim` coordinates per state when present.
    pub image: Option<Vec<f64>>,
    /// Largest change of an edge length made by the subdivision (0 on graphs).
    pub rounding: f64,
}

impl WalkPath {
    fn unit_steps(states: Vec<usize>, dt: f64) -> Self {
        Self { times: (0..states.len()).map(|k| k as f64 * dt).collect(), states, dim: 0, image: None, rounding: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Attaches `position(state)` as the image.
    pub fn with_image<'a>(mut self, dim: usize, position: impl Fn(usize) -> &'a [f64]) -> Self {
        self.image = Some(self.states.iter().flat_map(|&s| position(s).to_vec()).collect());
        self.dim = dim;
        self
    }

    /// State occupied at time `t` (the last jump at or before `t`).
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s <= t).max(1) - 1;
        self.states[k]
    }

    /// Image at time `t`, linearly interpolated between jumps.
    pub fn image_at(&self, t: f64) -> Option<Vec<f64>> {
        let img = self.image.as_ref()?;
        let d = self.dim;
        let k = self.times.partition_point(|&s| s <= t).max(1) - 1;
        if k + 1 >= self.times.len() {
            return Some(img[k * d..(k + 1) * d].to_vec());
        }
        let w = ((t - self.times[k]) / (self.times[k + 1] - self.times[k])).clamp(0.0, 1.0);
        Some((0..d).map(|c| img[k * d + c] + w * (img[(k + 1) * d + c] - img[k * d + c])).collect())
    }

    /// CSV `t,state,x_1..x_d`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut header = vec!["t".to_string(), "state".to_string()];
        let d = if self.image.is_some() { self.dim } else { 0 };
        header.extend((1..=d).map(|i| format!("x_{i}")));
        let mut csv = Csv::new(w, &header)?;
        for k in 0..self.len() {
            let mut row = vec![fmt_f64(self.times[k]), self.states[k].to_string()];
            if let Some(img) = &self.image {
                row.extend(img[k * d..(k + 1) * d].iter().map(|x| fmt_f64(*x)));
            }
            csv.row(&row)?;
        }
        Ok(())
    }
}

/// Adjacency of a graph in compressed rows; neighbours of a tree vertex
/// are its parent first, then its children in order.
#[derive(Debug, Clone)]
pub struct WalkGraph {
    offsets: Vec<usize>,
    nbrs: Vec<usize>,
}

impl WalkGraph {
    pub fn from_tree(tree: &OrderedTree) -> Self {
        Self::induced(tree, &vec![true; tree.n()])
    }

    /// The subgraph on vertices with `keep[v]`; dropped vertices stay as
    /// isolated labels so vertex ids are unchanged.
    pub fn induced(tree: &OrderedTree, keep: &[bool]) -> Self {
        let mut offsets = Vec::with_capacity(tree.n() + 1);
        let mut nbrs = Vec::with_capacity(2 * tree.n());
        offsets.push(0);
        for v in 0..tree.n() {
            if keep[v] {
                if let Some(p) = tree.parent(v).filter(|&p| keep[p]) {
                    nbrs.push(p);
                }
                nbrs.extend(tree.children(v).iter().filter(|&&c| keep[c]));
            }
            offsets.push(nbrs.len());
        }
        Self { offsets, nbrs }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.nbrs[self.offsets[v]..self.offsets[v + 1]]
    }

    /// One uniform step; an isolated vertex stays put.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, v: usize, rng: &mut R) -> usize {
        let (a, b) = (self.offsets[v], self.offsets[v + 1]);
        match b - a {
            0 => v,
            1 => self.nbrs[a],
            d => self.nbrs[a + rng.random_range(0..d)],
        }
    }

    pub fn walk<R: Rng + ?Sized>(&self, start: usize, steps: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(steps + 1);
        let mut v = start;
        out.push(v);
        for _ in 0..steps {
            v = self.step(v, rng);
            out.push(v);
        }
        out
    }

    /// Walks from `start` until a vertex with `target[v]` is reached;
    /// returns that vertex and the step count, or `None` past `max_steps`.
    pub fn walk_until<R: Rng + ?Sized>(
        &self,
        start: usize,
        target: &[bool],
        max_steps: u64,
        rng: &mut R,
    ) -> Option<(usize, u64)> {
        let mut v = start;
        let mut k = 0;
        while !target[v] {
            if k == max_steps {
                return None;
            }
            v = self.step(v, rng);
            k += 1;
        }
        Some((v, k))
    }

    /// For each sorted step count, how many of `walks` walks from `start`
    /// sit at `start` after exactly that many steps.
    pub fn return_counts<R: Rng + ?Sized>(&self, start: usize, steps: &[usize], walks: usize, rng: &mut R) -> Vec<u64> {
        let mut counts = vec![0u64; steps.len()];
        let last = steps.last().copied().unwrap_or(0);
        for _ in 0..walks {
            let mut v = start;
            let mut next = 0;
            while next < steps.len() && steps[next] == 0 {
                counts[next] += 1;
                next += 1;
            }
            for k in 1..=last {
                v = self.step(v, rng);
                while next < steps.len() && steps[next] == k {
                    counts[next] += u64::from(v == start);
                    next += 1;
                }
            }
        }
        counts
    }
}

fn check_vertex(tree: &OrderedTree, v: usize) -> Result<()> {
    if v >= tree.n() {
        return Err(Error::InvalidParameter(format!("vertex {v} not in a tree of {} vertices", tree.n())));
    }
    Ok(())
}

/// Discrete-time simple random walk on the vertices of `tree`.
pub fn srw<R: Rng + ?Sized>(tree: &OrderedTree, start: usize, steps: usize, rng: &mut R) -> Result<WalkPath> {
    check_vertex(tree, start)?;
    Ok(WalkPath::unit_steps(WalkGraph::from_tree(tree).walk(start, steps, rng), 1.0))
}

/// Graph vertices lying on the arcs of a reduced discrete tree.
pub fn skeleton_vertices(tree: &OrderedTree, skeleton: &GraphSpatialTree) -> Result<Vec<bool>> {
    let origin = skeleton
        .origin_vertices()
        .ok_or_else(|| Error::InvalidParameter("skeleton was not reduced from a graph tree".into()))?;
    let mut keep = vec![false; tree.n()];
    for &o in &origin {
        check_vertex(tree, o)?;
        let mut v = o;
        // the skeleton is closed under taking ancestors
        while !keep[v] {
            keep[v] = true;
            match tree.parent(v) {
                Some(p) => v = p,
                None => break,
            }
        }
    }
    Ok(keep)
}

/// Simple random walk on the graph vertices of the skeleton.
pub fn srw_on_skeleton<R: Rng + ?Sized>(
    tree: &OrderedTree,
    skeleton: &GraphSpatialTree,
    start: usize,
    steps: usize,
    rng: &mut R,
) -> Result<WalkPath> {
    check_vertex(tree, start)?;
    let keep = skeleton_vertices(tree, skeleton)?;
    if !keep[start] {
        return Err(Error::InvalidParameter(format!("vertex {start} is not on the skeleton")));
    }
    Ok(WalkPath::unit_steps(WalkGraph::induced(tree, &keep).walk(start, steps, rng), 1.0))
}

/// Couples a walk on the full tree with one on the skeleton: each state is
/// projected to its deepest skeleton ancestor and repeats are dropped, with
/// the skeleton walk's clock counting its own jumps.
pub fn skeleton_trace(tree: &OrderedTree, skeleton: &GraphSpatialTree, path: &WalkPath) -> Result<WalkPath> {
    let keep = skeleton_vertices(tree, skeleton)?;
    let mut states: Vec<usize> = Vec::new();
    for &s in &path.states {
        let mut v = s;
        while !keep[v] {
            v = tree.parent(v).expect("the root is on every skeleton");
        }
        if states.last() != Some(&v) {
            states.push(v);
        }
    }
    Ok(WalkPath::unit_steps(states, 1.0))
}

/// `n^{-1/4} phi_n(X_{floor(t n^{3/2})})` at each requested time, for one
/// walk from the root.
pub fn rescaled_walk_observable<R: Rng + ?Sized>(
    tree: &OrderedTree,
    emb: &GraphEmbedding,
    t_grid: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let graph = WalkGraph::from_tree(tree);
    rescaled_walk_observable_on(&graph, emb, t_grid, rng)
}

/// `rescaled_walk_observable` with a prebuilt adjacency.
pub fn rescaled_walk_observable_on<R: Rng + ?Sized>(
    graph: &WalkGraph,
    emb: &GraphEmbedding,
    t_grid: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let n = graph.len() as f64;
    if t_grid.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::InvalidParameter("times must be nonnegative".into()));
    }
    let steps: Vec<u64> = t_grid.iter().map(|&t| (t * n.powf(1.5)).floor() as u64).collect();
    let mut order: Vec<usize> = (0..steps.len()).collect();
    order.sort_by_key(|&i| steps[i]);
    let scale = n.powf(-0.25);
    let mut out = vec![Vec::new(); steps.len()];
    let (mut v, mut k) = (0usize, 0u64);
    for i in order {
        while k < steps[i] {
            v = graph.step(v, rng);
            k += 1;
        }
        out[i] = emb.position(v).iter().map(|x| x * scale).collect();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReturnMode {
    Exact,
    MonteCarlo { walks: usize },
}

/// Largest tree handled by exact propagation.
pub const EXACT_RETURN_LIMIT: usize = 2000;

/// `P(X_{2m} = start)` for each `m`.
pub fn return_probability<R: Rng + ?Sized>(
    tree: &OrderedTree,
    start: usize,
    ms: &[usize],
    mode: ReturnMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let steps: Vec<usize> = ms.iter().map(|m| 2 * m).collect();
    return_probability_at_steps(tree, start, &steps, mode, rng)
}

/// `P(X_k = start)` for even step counts `k`; odd counts are refused since
/// a tree is bipartite.
pub fn return_probability_at_steps<R: Rng + ?Sized>(
    tree: &OrderedTree,
    start: usize,
    steps: &[usize],
    mode: ReturnMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_vertex(tree, start)?;
    if let Some(k) = steps.iter().find(|k| *k % 2 == 1) {
        return Err(Error::InvalidParameter(format!("odd step count {k}")));
    }
    let graph = WalkGraph::from_tree(tree);
    let mut order: Vec<usize> = (0..steps.len()).collect();
    order.sort_by_key(|&i| steps[i]);
    let sorted: Vec<usize> = order.iter().map(|&i| steps[i]).collect();
    let probs = match mode {
        ReturnMode::Exact => {
            if tree.n() > EXACT_RETURN_LIMIT {
                return Err(Error::InvalidParameter(format!(
                    "exact mode is limited to n <= {EXACT_RETURN_LIMIT}"
                )));
            }
            exact_return(&graph, start, &sorted)
        }
        ReturnMode::MonteCarlo { walks } => {
            if walks == 0 {
                return Err(Error::InvalidParameter("need at least one walk".into()));
            }
            graph.return_counts(start, &sorted, walks, rng).iter().map(|&c| c as f64 / walks as f64).collect()
        }
    };
    let mut out = vec![0.0; steps.len()];
    for (k, &i) in order.iter().enumerate() {
        out[i] = probs[k];
    }
    Ok(out)
}

/// Propagates the law of the walk one step at a time.
fn exact_return(graph: &WalkGraph, start: usize, sorted_steps: &[usize]) -> Vec<f64> {
    let n = graph.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    p[start] = 1.0;
    let mut out = Vec::with_capacity(sorted_steps.len());
    let mut k = 0;
    for &target in sorted_steps {
        while k < target {
            q.iter_mut().for_each(|x| *x = 0.0);
            for u in 0..n {
                let d = graph.degree(u);
                if d == 0 {
                    q[u] += p[u];
                    continue;
                }
                let share = p[u] / d as f64;
                for &w in graph.neighbors(u) {
                    q[w] += share;
                }
            }
            std::mem::swap(&mut p, &mut q);
            k += 1;
        }
        out.push(p[start]);
    }
    out
}

/// A weighted tree with every edge cut into equal pieces of length close
/// to `h`.
///
/// Edge `c` (above vertex `c`) gets `M_c = round(len / h)` pieces of length
/// `h_c = len / M_c`, so lengths are kept exactly. Nodes `0..V` are the
/// tree's vertices; the interior nodes of edge `c` follow, at `1..M_c`
/// pieces from the parent end. The walk jumps between neighbouring nodes
/// with the exit law of Brownian motion: from a vertex into leg `i` with
/// probability proportional to `1 / h_i`, and with the mean exit time of the
/// star `sum h_i / sum (1 / h_i)`. Hitting probabilities of nodes are
/// therefore exact, and times are divided by `Lambda` for the normalized
/// length measure.
#[derive(Debug, Clone)]
pub struct SubdividedTree {
    parent: Vec<usize>,
    segments: Vec<usize>,
    spacing: Vec<f64>,
    /// Per vertex, incident edges as (child vertex of the edge, entered
    /// from the parent end, cumulative exit weight).
    exits: Vec<Vec<(usize, bool, f64)>>,
    vertex_time: Vec<f64>,
    node_offset: Vec<usize>,
    nodes: usize,
    h: f64,
    total_length: f64,
    rounding: f64,
    spatial: Option<(usize, Vec<f64>)>,
}

/// Where a subdivision node sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSite {
    Vertex(usize),
    /// `k` of `segments` pieces along the edge above the vertex.
    Edge { vertex: usize, k: usize, segments: usize },
}

/// Time accumulated inside each edge and at each vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupation {
    /// Time spent on moves inside the edge above each vertex (index 0 unused).
    pub edge_time: Vec<f64>,
    pub vertex_time: Vec<f64>,
}

impl Occupation {
    pub fn new(vertices: usize) -> Self {
        Self { edge_time: vec![0.0; vertices], vertex_time: vec![0.0; vertices] }
    }

    pub fn total(&self) -> f64 {
        self.edge_time.iter().sum::<f64>() + self.vertex_time.iter().sum::<f64>()
    }
}

impl SubdividedTree {
    pub fn new(tree: &GraphSpatialTree, h: f64) -> Result<Self> {
        let min = tree.lengths().iter().copied().fold(f64::INFINITY, f64::min);
        if !(h > 0.0) || h >= min {
            return Err(Error::InvalidParameter(format!("step {h} must be below the shortest edge {min}")));
        }
        let nv = tree.vertex_count();
        let mut segments = vec![0; nv];
        let mut spacing = vec![0.0; nv];
        let mut node_offset = vec![0; nv];
        let mut legs: Vec<Vec<(usize, bool)>> = vec![Vec::new(); nv];
        let mut rounding: f64 = 0.0;
        let mut nodes = nv;
        for c in 1..nv {
            let len = tree.edge_length(c);
            let m = ((len / h).round() as usize).max(1);
            segments[c] = m;
            spacing[c] = len / m as f64;
            rounding = rounding.max((spacing[c] - h).abs());
            node_offset[c] = nodes;
            nodes += m - 1;
            legs[tree.parent(c).unwrap()].push((c, true));
            legs[c].push((c, false));
        }
        let mut exits = Vec::with_capacity(nv);
        let mut vertex_time = Vec::with_capacity(nv);
        for leg in &legs {
            let inv: f64 = leg.iter().map(|&(c, _)| 1.0 / spacing[c]).sum();
            let sum: f64 = leg.iter().map(|&(c, _)| spacing[c]).sum();
            let mut acc = 0.0;
            exits.push(
                leg.iter()
                    .map(|&(c, down)| {
                        acc += 1.0 / spacing[c] / inv;
                        (c, down, acc)
                    })
                    .collect::<Vec<_>>(),
            );
            vertex_time.push(if leg.is_empty() { 0.0 } else { sum / inv });
        }
        let mut sub = Self {
            parent: tree.parents().to_vec(),
            segments,
            spacing,
            exits,
            vertex_time,
            node_offset,
            nodes,
            h,
            total_length: tree.total_length(),
            rounding,
            spatial: None,
        };
        if let Some(dim) = tree.spatial().map(|s| s.dim) {
            let mut pts = vec![0.0; nodes * dim];
            for node in 0..nodes {
                let x = match sub.site(node) {
                    NodeSite::Vertex(0) => tree.spatial_at(0, 0.0),
                    NodeSite::Vertex(v) => tree.spatial_at(v, 1.0),
                    NodeSite::Edge { vertex, k, segments } => tree.spatial_at(vertex, k as f64 / segments as f64),
                }
                .unwrap();
                pts[node * dim..(node + 1) * dim].copy_from_slice(&x);
            }
            sub.spatial = Some((dim, pts));
        }
        Ok(sub)
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn vertex_count(&self) -> usize {
        self.parent.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Largest difference between a piece length and `h`.
    pub fn rounding(&self) -> f64 {
        self.rounding
    }

    pub fn segments(&self, v: usize) -> usize {
        self.segments[v]
    }

    /// Duration of one move inside the edge above `v`.
    pub fn edge_move_time(&self, v: usize) -> f64 {
        self.spacing[v] * self.spacing[v] / self.total_length
    }

    /// Mean duration of a move out of vertex `v`.
    pub fn vertex_move_time(&self, v: usize) -> f64 {
        self.vertex_time[v] / self.total_length
    }

    pub fn site(&self, node: usize) -> NodeSite {
        if node < self.parent.len() {
            return NodeSite::Vertex(node);
        }
        // the last edge starting at or before `node` owns it, since edges
        // without interior nodes start past the interior nodes before them
        let c = self.node_offset.partition_point(|&o| o <= node) - 1;
        NodeSite::Edge { vertex: c, k: node - self.node_offset[c] + 1, segments: self.segments[c] }
    }

    fn node_on_edge(&self, c: usize, k: usize) -> usize {
        if k == 0 {
            self.parent[c]
        } else if k == self.segments[c] {
            c
        } else {
            self.node_offset[c] + k - 1
        }
    }

    /// Nearest node to a skeleton point.
    pub fn node_at(&self, x: SkeletonPoint, tree: &GraphSpatialTree) -> usize {
        if x.vertex == 0 {
            return 0;
        }
        let m = self.segments[x.vertex];
        let k = ((x.offset / tree.edge_length(x.vertex)) * m as f64).round().clamp(0.0, m as f64) as usize;
        self.node_on_edge(x.vertex, k)
    }

    fn pick_exit<R: Rng + ?Sized>(&self, v: usize, rng: &mut R) -> (usize, usize) {
        let ex = &self.exits[v];
        let (c, down, _) = if ex.len() == 1 {
            ex[0]
        } else {
            let u: f64 = rng.random();
            *ex.iter().find(|e| u < e.2).unwrap_or(ex.last().unwrap())
        };
        (c, if down { 1 } else { self.segments[c] - 1 })
    }

    /// One move from `node`, with its duration.
    fn step<R: Rng + ?Sized>(&self, node: usize, rng: &mut R) -> (usize, f64) {
        match self.site(node) {
            NodeSite::Vertex(v) if self.exits[v].is_empty() => (v, 0.0),
            NodeSite::Vertex(v) => {
                let (c, k) = self.pick_exit(v, rng);
                (self.node_on_edge(c, k), self.vertex_move_time(v))
            }
            NodeSite::Edge { vertex, k, .. } => {
                let k = if rng.random::<bool>() { k + 1 } else { k - 1 };
                (self.node_on_edge(vertex, k), self.edge_move_time(vertex))
            }
        }
    }

    /// Position of a node under the tree's spatial map.
    pub fn position(&self, node: usize) -> Option<&[f64]> {
        self.spatial.as_ref().map(|(d, p)| &p[node * d..(node + 1) * d])
    }

    /// Walk for `t_max` time units from `start`, recording every move.
    pub fn walk<R: Rng + ?Sized>(&self, start: usize, t_max: f64, rng: &mut R) -> WalkPath {
        let mut states = vec![start];
        let mut times = vec![0.0];
        let (mut node, mut t) = (start, 0.0);
        loop {
            let (next, dt) = self.step(node, rng);
            if dt == 0.0 || t + dt > t_max {
                break;
            }
            node = next;
            t += dt;
            states.push(node);
            times.push(t);
        }
        let mut path = WalkPath { times, states, dim: 0, image: None, rounding: self.rounding };
        if let Some((dim, _)) = &self.spatial {
            path = path.with_image(*dim, |s| self.position(s).unwrap());
        }
        path
    }

    /// Runs from `start` until one of the `target` vertices is hit, and
    /// returns that vertex with the elapsed time, or `None` once more than
    /// `max_moves` moves were made. Moves inside an edge use one random bit
    /// each.
    pub fn run_until_hit<R: RngCore + ?Sized>(
        &self,
        start: usize,
        target: &[bool],
        max_moves: u64,
        mut occupation: Option<&mut Occupation>,
        rng: &mut R,
    ) -> Option<(usize, f64)> {
        let mut moves = 0u64;
        let mut time = 0.0;
        let mut bits = 0u64;
        let mut left = 0u32;
        // position: piece `k` of edge `c`, at a vertex when k is an end
        let (mut c, mut k) = match self.site(start) {
            NodeSite::Vertex(v) => (v, self.segments[v]),
            NodeSite::Edge { vertex, k, .. } => (vertex, k),
        };
        loop {
            let m = self.segments[c];
            if k == 0 || k == m {
                let v = if k == 0 { self.parent[c] } else { c };
                if target[v] {
                    return Some((v, time));
                }
                if moves >= max_moves || self.exits[v].is_empty() {
                    return None;
                }
                let dt = self.vertex_move_time(v);
                if let Some(o) = occupation.as_deref_mut() {
                    o.vertex_time[v] += dt;
                }
                time += dt;
                moves += 1;
                (c, k) = self.pick_exit(v, rng);
                continue;
            }
            let start_moves = moves;
            while k != 0 && k != m {
                if left == 0 {
                    bits = rng.next_u64();
                    left = 64;
                }
                if bits & 1 == 1 {
                    k += 1;
                } else {
                    k -= 1;
                }
                bits >>= 1;
                left -= 1;
                moves += 1;
            }
            let dt = (moves - start_moves) as f64 * self.edge_move_time(c);
            if let Some(o) = occupation.as_deref_mut() {
                o.edge_time[c] += dt;
            }
            time += dt;
            if moves > max_moves {
                return None;
            }
        }
    }
}

/// Brownian motion on `(T, d_T, nu)`, `nu` the normalized length measure,
/// approximated by the walk on the `h`-subdivision for `t_max` time units.
pub fn metric_tree_bm<R: Rng + ?Sized>(
    tree: &GraphSpatialTree,
    start: SkeletonPoint,
    t_max: f64,
    h: f64,
    rng: &mut R,
) -> Result<WalkPath> {
    if !(t_max > 0.0) {
        return Err(Error::InvalidParameter("t_max must be positive".into()));
    }
    let sub = SubdividedTree::new(tree, h)?;
    let node = sub.node_at(start, tree);
    Ok(sub.walk(node, t_max, rng))
}

/// First index of `path` whose state satisfies `hit`.
pub fn first_hit(path: &WalkPath, hit: impl Fn(usize) -> bool) -> Option<usize> {
    path.states.iter().position(|&s| hit(s))
}

/// `P(hit b before c)` from `a` for Brownian motion on a tree:
/// `d(b(a, b, c), c) / d(b, c)`.
pub fn hit_first_probability(tree: &GraphSpatialTree, a: usize, b: usize, c: usize) -> f64 {
    let (ab, ac, bc) = (tree.distance(a, b), tree.distance(a, c), tree.distance(b, c));
    0.5 * (ac + bc - ab) / bc
}

/// Expected time spent in each edge before hitting `killed` from `from`:
/// the integral of `2 d(b(x, from, killed), killed) nu(dx)` over the edge
/// above each vertex (index 0 holds 0).
pub fn green_occupation(tree: &GraphSpatialTree, from: usize, killed: usize) -> Vec<f64> {
    let total = tree.total_length();
    let d0 = tree.distance(from, killed);
    let mut out = vec![0.0; tree.vertex_count()];
    for c in 1..tree.vertex_count() {
        let p = tree.parent(c).unwrap();
        let len = tree.edge_length(c);
        // distance from the edge midpoint to a vertex w
        let mid = |w: usize| {
            if tree.is_ancestor(c, w) { tree.distance(p, w) - len / 2.0 } else { tree.distance(p, w) + len / 2.0 }
        };
        // the integrand is linear along the edge, so the midpoint rule is exact
        out[c] = (mid(killed) + d0 - mid(from)) * len / total;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{embed_brw, StepDist};
    use crate::gw::{dfs_tour, sample_conditioned_gw, OffspringDist};
    use crate::reduced::{random_binary_tree, reduce_discrete};
    use crate::rng::stream;
    use crate::stats::mean_se;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn path(n: usize) -> OrderedTree {
        let parents: Vec<usize> = (0..n).map(|v| v.saturating_sub(1)).collect();
        OrderedTree::from_parents(&parents).unwrap()
    }

    fn star(leaves: usize) -> OrderedTree {
        OrderedTree::from_parents(&vec![0; leaves + 1]).unwrap()
    }

    /// Expected hitting times of `target` by solving the Markov chain
    /// equations `h = 1 + P h` off the target.
    fn expected_hitting_times(tree: &OrderedTree, target: usize) -> Vec<f64> {
        let g = WalkGraph::from_tree(tree);
        let n = tree.n();
        let mut a = DMatrix::<f64>::identity(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for u in (0..n).filter(|&u| u != target) {
            b[u] = 1.0;
            for &w in g.neighbors(u) {
                if w != target {
                    a[(u, w)] -= 1.0 / g.degree(u) as f64;
                }
            }
        }
        a.lu().solve(&b).unwrap().iter().copied().collect()
    }

    #[test]
    fn path2_alternates() {
        let t = path(2);
        let w = srw(&t, 0, 10, &mut stream(60, 0)).unwrap();
        assert!(w.states.iter().enumerate().all(|(k, &s)| s == k % 2));
        assert_eq!(w.state_at(3.5), 1);
    }

    #[test]
    fn expected_return_time_to_root() {
        let t = path(3);
        let h = expected_hitting_times(&t, 0);
        // return time = 1 + hitting time from the only neighbour
        let oracle = 1.0 + h[1];
        assert!((oracle - 4.0).abs() < 1e-12);
        let g = WalkGraph::from_tree(&t);
        let mut rng = stream(61, 0);
        let samples: Vec<f64> = (0..100_000)
            .map(|_| {
                let first = g.step(0, &mut rng);
                1.0 + g.walk_until(first, &[true, false, false], u64::MAX, &mut rng).unwrap().1 as f64
            })
            .collect();
        let (m, se) = mean_se(&samples);
        assert!((m - oracle).abs() < 3.0 * se, "{m} +- {se}");
    }

    #[test]
    fn return_times_match_degree_formula() {
        let mut rng = stream(62, 0);
        for _ in 0..20 {
            let t = sample_conditioned_gw(30, &OffspringDist::poisson(), &mut rng).unwrap();
            let g = WalkGraph::from_tree(&t);
            let h = expected_hitting_times(&t, 0);
            let ret = 1.0 + g.neighbors(0).iter().map(|&w| h[w]).sum::<f64>() / g.degree(0) as f64;
            assert!((ret - 2.0 * (t.n() - 1) as f64 / t.degree(0) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn occupation_is_proportional_to_degree() {
        let mut rng = stream(63, 0);
        let t = sample_conditioned_gw(12, &OffspringDist::poisson(), &mut rng).unwrap();
        let g = WalkGraph::from_tree(&t);
        let (blocks, per) = (100, 10_000);
        let mut fractions = vec![Vec::new(); t.n()];
        let mut v = 0;
        for _ in 0..blocks {
            let mut counts = vec![0usize; t.n()];
            for _ in 0..per {
                v = g.step(v, &mut rng);
                counts[v] += 1;
            }
            for (u, c) in counts.iter().enumerate() {
                fractions[u].push(*c as f64 / per as f64);
            }
        }
        for u in 0..t.n() {
            let (m, se) = mean_se(&fractions[u]);
            let want = g.degree(u) as f64 / (2 * (t.n() - 1)) as f64;
            assert!((m - want).abs() < 3.0 * se + 1e-12, "{u}: {m} vs {want}");
        }
    }

    #[test]
    fn detailed_balance_flows() {
        let mut rng = stream(64, 0);
        let t = sample_conditioned_gw(10, &OffspringDist::poisson(), &mut rng).unwrap();
        let w = srw(&t, 0, 1_000_000, &mut rng).unwrap();
        let mut up = vec![0i64; t.n()];
        let mut down = vec![0i64; t.n()];
        for s in w.states.windows(2) {
            if t.parent(s[1]) == Some(s[0]) {
                down[s[1]] += 1;
            } else {
                up[s[0]] += 1;
            }
        }
        // crossings of an edge alternate direction, so the counts differ by at most one
        for v in 1..t.n() {
            assert!((up[v] - down[v]).abs() <= 1);
            assert!(down[v] > 0);
        }
    }

    #[test]
    fn skeleton_walks() {
        let mut rng = stream(65, 0);
        let t = sample_conditioned_gw(60, &OffspringDist::poisson(), &mut rng).unwrap();
        let tour = dfs_tour(&t);
        // marking every vertex spans the whole tree: identical paths under a shared stream
        let us: Vec<f64> = (0..=2 * t.n()).map(|k| k as f64 / (2 * t.n()) as f64).collect();
        let full = reduce_discrete(&t, &tour, &us).unwrap();
        let a = srw(&t, 0, 500, &mut stream(66, 0)).unwrap();
        let b = srw_on_skeleton(&t, &full, 0, 500, &mut stream(66, 0)).unwrap();
        assert_eq!(a, b);
        let small = reduce_discrete(&t, &tour, &[0.4]).unwrap();
        let keep = skeleton_vertices(&t, &small).unwrap();
        let off = (0..t.n()).find(|&v| !keep[v]).unwrap();
        assert!(srw_on_skeleton(&t, &small, off, 5, &mut rng).is_err());
        let w = srw_on_skeleton(&t, &small, 0, 200, &mut rng).unwrap();
        assert!(w.states.iter().all(|&s| keep[s]));
        let trace = skeleton_trace(&t, &small, &a).unwrap();
        assert!(trace.states.iter().all(|&s| keep[s]));
        assert!(trace.states.windows(2).all(|s| t.parent(s[0]) == Some(s[1]) || t.parent(s[1]) == Some(s[0])));
    }

    #[test]
    fn gamblers_ruin_on_a_skeleton_arc() {
        let l = 10;
        let t = path(l + 1);
        let tour = dfs_tour(&t);
        let arc = reduce_discrete(&t, &tour, &[0.5]).unwrap();
        assert_eq!(arc.lengths(), &[l as f64]);
        let keep = skeleton_vertices(&t, &arc).unwrap();
        let g = WalkGraph::induced(&t, &keep);
        let mut target = vec![false; t.n()];
        target[0] = true;
        target[l] = true;
        let mut rng = stream(67, 0);
        for a in [3, 7] {
            let runs = 40_000;
            let far = (0..runs).filter(|_| g.walk_until(a, &target, u64::MAX, &mut rng).unwrap().0 == l).count();
            let p = far as f64 / runs as f64;
            let want = a as f64 / l as f64;
            let se = (want * (1.0 - want) / runs as f64).sqrt();
            assert!((p - want).abs() < 3.0 * se, "{p} vs {want}");
        }
    }

    #[test]
    fn degree_three_exit_is_uniform() {
        // root - center with two children; the center has degree three
        let t = OrderedTree::from_parents(&[0, 0, 1, 1]).unwrap();
        let g = WalkGraph::from_tree(&t);
        let mut rng = stream(68, 0);
        let mut counts = [0usize; 3];
        for _ in 0..90_000 {
            let w = g.step(1, &mut rng);
            counts[[0, 2, 3].iter().position(|&x| x == w).unwrap()] += 1;
        }
        let r = crate::stats::chi_square_test(&counts, &[1.0, 1.0, 1.0]).unwrap();
        assert!(r.p_value > 0.001);
    }

    #[test]
    fn return_probability_examples() {
        let mut rng = stream(69, 0);
        assert_eq!(return_probability(&path(2), 0, &[1], ReturnMode::Exact, &mut rng).unwrap(), vec![1.0]);
        assert_eq!(return_probability(&star(3), 0, &[1], ReturnMode::Exact, &mut rng).unwrap(), vec![1.0]);
        assert!(return_probability_at_steps(&path(3), 0, &[3], ReturnMode::Exact, &mut rng).is_err());
        assert_eq!(return_probability(&path(3), 0, &[0], ReturnMode::Exact, &mut rng).unwrap(), vec![1.0]);
        // path-3 from an end: P(X_2 = 0) = 1/2
        let p = return_probability(&path(3), 0, &[1, 2], ReturnMode::Exact, &mut rng).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_return_matches_exact() {
        let mut rng = stream(70, 0);
        let t = sample_conditioned_gw(50, &OffspringDist::poisson(), &mut rng).unwrap();
        let ms = [1, 3, 10, 25];
        let exact = return_probability(&t, 0, &ms, ReturnMode::Exact, &mut rng).unwrap();
        let walks = 1_000_000;
        let mc = return_probability(&t, 0, &ms, ReturnMode::MonteCarlo { walks }, &mut rng).unwrap();
        for (e, m) in exact.iter().zip(&mc) {
            let se = (e * (1.0 - e) / walks as f64).sqrt();
            assert!((e - m).abs() < 3.0 * se, "{e} vs {m}");
        }
    }

    #[test]
    fn observable_starts_at_origin() {
        let mut rng = stream(71, 0);
        let t = sample_conditioned_gw(200, &OffspringDist::poisson(), &mut rng).unwrap();
        let emb = embed_brw(&t, &StepDist::gaussian(2), &mut rng).unwrap();
        let obs = rescaled_walk_observable(&t, &emb, &[0.5, 0.0, 1.0], &mut rng).unwrap();
        assert_eq!(obs[1], vec![0.0, 0.0]);
        assert_eq!(obs.len(), 3);
        let single = OrderedTree::singleton();
        let e1 = embed_brw(&single, &StepDist::gaussian(2), &mut rng).unwrap();
        let o1 = rescaled_walk_observable(&single, &e1, &[0.0, 1.0, 5.0], &mut rng).unwrap();
        assert!(o1.iter().all(|x| x == &vec![0.0, 0.0]));
    }

    fn adjacent(sub: &SubdividedTree, a: usize, b: usize) -> bool {
        let on = |node: usize| match sub.site(node) {
            NodeSite::Vertex(v) => vec![(v, sub.segments(v))],
            NodeSite::Edge { vertex, k, .. } => vec![(vertex, k)],
        };
        // compare as (edge, piece) positions, allowing either edge at a vertex
        let (pa, pb) = (on(a), on(b));
        let near = |(c, k): (usize, usize), node: usize| {
            (k > 0 && sub.node_on_edge(c, k - 1) == node) || (k < sub.segments(c) && sub.node_on_edge(c, k + 1) == node)
        };
        pa.into_iter().any(|p| near(p, b)) || pb.into_iter().any(|p| near(p, a))
    }

    fn edge_tree(len: f64) -> GraphSpatialTree {
        GraphSpatialTree::from_parts(vec![0, 0], vec![0.0, len]).unwrap()
    }

    #[test]
    fn single_edge_symmetry() {
        let t = edge_tree(1.0);
        let sub = SubdividedTree::new(&t, 0.01).unwrap();
        let start = sub.node_at(SkeletonPoint { vertex: 1, offset: 0.5 }, &t);
        let mut rng = stream(72, 0);
        let runs = 40_000;
        let zero = (0..runs)
            .filter(|_| sub.run_until_hit(start, &[true, true], u64::MAX, None, &mut rng).unwrap().0 == 0)
            .count();
        let p = zero as f64 / runs as f64;
        assert!((p - 0.5).abs() < 3.0 * (0.25 / runs as f64).sqrt());
        assert!(SubdividedTree::new(&t, 1.0).is_err());
    }

    #[test]
    fn single_edge_mean_lifetime() {
        let t = edge_tree(1.0);
        let sub = SubdividedTree::new(&t, 0.02).unwrap();
        let mut rng = stream(73, 0);
        let life: Vec<f64> = (0..20_000)
            .map(|_| sub.run_until_hit(0, &[false, true], u64::MAX, None, &mut rng).unwrap().1)
            .collect();
        let (m, _) = mean_se(&life);
        assert!((m - 1.0).abs() < 0.05, "{m}");
        assert!((green_occupation(&t, 0, 1)[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn y_tree_hitting_probabilities() {
        let (a, b, c) = (1.0, 0.6, 1.4);
        // root leg a, then two legs; the walk starts at the root leaf
        let t = GraphSpatialTree::from_parts(vec![0, 0, 1, 1], vec![0.0, a, b, c]).unwrap();
        let want = c / (b + c);
        assert!((hit_first_probability(&t, 0, 2, 3) - want).abs() < 1e-12);
        let sub = SubdividedTree::new(&t, 0.02).unwrap();
        let mut rng = stream(74, 0);
        let runs = 40_000;
        let target = [false, false, true, true];
        let hit_b = (0..runs).filter(|_| sub.run_until_hit(0, &target, u64::MAX, None, &mut rng).unwrap().0 == 2).count();
        let p = hit_b as f64 / runs as f64;
        assert!((p - want).abs() < 3.0 * (want * (1.0 - want) / runs as f64).sqrt(), "{p} vs {want}");
    }

    #[test]
    fn green_occupation_matches_simulation() {
        let mut rng = stream(75, 0);
        let t = random_binary_tree(3, 0.5, 1.5, &mut rng).unwrap();
        let leaves = t.leaves();
        let sub = SubdividedTree::new(&t, 0.05).unwrap();
        let mut occ = Occupation::new(t.vertex_count());
        let runs = 20_000;
        let mut target = vec![false; t.vertex_count()];
        target[leaves[1]] = true;
        for _ in 0..runs {
            sub.run_until_hit(leaves[0], &target, u64::MAX, Some(&mut occ), &mut rng).unwrap();
        }
        let want: f64 = green_occupation(&t, leaves[0], leaves[1]).iter().sum();
        let got = occ.total() / runs as f64;
        assert!((got / want - 1.0).abs() < 0.05, "{got} vs {want}");
    }

    #[test]
    fn hitting_estimates_are_step_stable() {
        let mut rng = stream(76, 0);
        let t = random_binary_tree(3, 0.5, 1.5, &mut rng).unwrap();
        let l = t.leaves();
        let mut target = vec![false; t.vertex_count()];
        target[l[1]] = true;
        target[l[2]] = true;
        let runs = 20_000;
        let est = |h: f64, rng: &mut crate::rng::SimRng| {
            let sub = SubdividedTree::new(&t, h).unwrap();
            let k = (0..runs).filter(|_| sub.run_until_hit(l[0], &target, u64::MAX, None, rng).unwrap().0 == l[1]).count();
            k as f64 / runs as f64
        };
        let (p1, p2) = (est(0.1, &mut rng), est(0.05, &mut rng));
        let se = ((p1 * (1.0 - p1) + p2 * (1.0 - p2)) / runs as f64).sqrt();
        assert!((p1 - p2).abs() < 3.0 * se);
    }

    #[test]
    fn recorded_walk_stays_on_subdivision() {
        let mut rng = stream(77, 0);
        let t = random_binary_tree(4, 0.5, 1.5, &mut rng).unwrap();
        let pos: Vec<f64> = (0..t.vertex_count()).map(|v| v as f64).collect();
        let t = t.with_linear_spatial(1, &pos, 3).unwrap();
        let w = metric_tree_bm(&t, SkeletonPoint { vertex: 0, offset: 0.0 }, 0.05, 0.1, &mut rng).unwrap();
        let sub = SubdividedTree::new(&t, 0.1).unwrap();
        assert!(w.states.windows(2).all(|s| adjacent(&sub, s[0], s[1])));
        assert!(w.rounding <= 0.05 + 1e-12);
        assert!((w.times[1] - sub.vertex_move_time(0)).abs() < 1e-15);
        assert!(w.times.windows(2).all(|x| x[1] > x[0]));
        assert_eq!(w.image.as_ref().unwrap().len(), w.len());
        // every interior node round-trips through its site
        for node in 0..sub.node_count() {
            if let NodeSite::Edge { vertex, k, .. } = sub.site(node) {
                assert_eq!(sub.node_on_edge(vertex, k), node);
            }
        }
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,state,x_1\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn observable_modulus_grows_with_window(seed in 0u64..1000) {
            let mut rng = stream(seed, 78);
            let t = sample_conditioned_gw(100, &OffspringDist::poisson(), &mut rng).unwrap();
            let emb = embed_brw(&t, &StepDist::gaussian(1), &mut rng).unwrap();
            let grid: Vec<f64> = (0..200).map(|k| k as f64 / 200.0).collect();
            let obs = rescaled_walk_observable(&t, &emb, &grid, &mut rng).unwrap();
            let modulus = |w: usize| {
                let mut m: f64 = 0.0;
                for i in 0..obs.len() {
                    for j in i + 1..(i + w).min(obs.len()) {
                        m = m.max((obs[i][0] - obs[j][0]).abs());
                    }
                }
                m
            };
            let levels: Vec<f64> = [2, 5, 10, 40].iter().map(|&w| modulus(w)).collect();
            prop_assert!(levels.windows(2).all(|x| x[0] <= x[1]));
        }

        #[test]
        fn walks_move_along_edges(seed in 0u64..1000, steps in 0usize..300) {
            let mut rng = stream(seed, 79);
            let t = sample_conditioned_gw(40, &OffspringDist::geometric(0.5).unwrap(), &mut rng).unwrap();
            let w = srw(&t, 0, steps, &mut rng).unwrap();
            prop_assert_eq!(w.len(), steps + 1);
            prop_assert!(w.states.windows(2).all(|s| t.parent(s[0]) == Some(s[1]) || t.parent(s[1]) == Some(s[0])));
        }
    }
}
