//! Reduced subtrees spanned by the root and finitely many marked points, the
//! graph-spatial-tree distances between them, and tour comparisons.

use serde::{Deserialize, Serialize};

use crate::embedding::{euclid, GraphEmbedding, Tour};
use crate::excursion::RealTree;
use crate::gw::{DiscreteTour, OrderedTree};
use crate::rmq::RangeMin;
use crate::{Error, Result};

/// Finite ordered tree with positive edge lengths and, optionally, a spatial
/// map sampled along each edge.
///
/// Vertices are labelled in depth-first order with the root at 0; the edge
/// above vertex `v` is edge `v - 1`, which fixes the canonical edge order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpatialTree {
    parent: Vec<usize>,
    children: Vec<Vec<usize>>,
    /// `lengths[v]` is the length of the edge above `v` (0 for the root).
    lengths: Vec<f64>,
    /// Index on the coding path of the tree point each vertex stands for.
    anchors: Vec<usize>,
    /// Vertex of each marked point, in the order the marks were given.
    marked: Vec<usize>,
    spatial: Option<Spatial>,
    /// Graph-tree vertex behind each vertex, for reduced discrete trees.
    origin: Option<Vec<usize>>,
}

/// Positions along every edge at the fractions `j / (samples + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spatial {
    pub dim: usize,
    pub samples: usize,
    /// Per edge, `samples + 2` points from the parent end to the child end.
    pub polylines: Vec<Vec<f64>>,
}

/// A point on the skeleton: distance `offset` from the parent end along the
/// edge above `vertex`. The root is `(0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkeletonPoint {
    pub vertex: usize,
    pub offset: f64,
}

impl GraphSpatialTree {
    /// Builds from parent links with lengths; vertices must be in depth-first
    /// order with children ordered by label.
    pub fn from_parts(parent: Vec<usize>, lengths: Vec<f64>) -> Result<Self> {
        let n = parent.len();
        if n == 0 || lengths.len() != n {
            return Err(Error::InvalidParameter("parent and length arrays must match".into()));
        }
        if lengths[1..].iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidParameter("edge lengths must be positive".into()));
        }
        let mut children = vec![Vec::new(); n];
        for v in 1..n {
            if parent[v] >= v {
                return Err(Error::InvalidParameter("vertices must be in depth-first order".into()));
            }
            children[parent[v]].push(v);
        }
        let t = Self { parent, children, lengths, anchors: (0..n).collect(), marked: vec![], spatial: None, origin: None };
        if t.preorder() != (0..n).collect::<Vec<_>>() {
            return Err(Error::InvalidParameter("vertices must be in depth-first order".into()));
        }
        Ok(t)
    }

    pub fn vertex_count(&self) -> usize {
        self.parent.len()
    }

    pub fn edge_count(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        if v == 0 { None } else { Some(self.parent[v]) }
    }

    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.children[v].len() + usize::from(v != 0)
    }

    /// Edge lengths in canonical order.
    pub fn lengths(&self) -> &[f64] {
        &self.lengths[1..]
    }

    pub fn edge_length(&self, v: usize) -> f64 {
        self.lengths[v]
    }

    /// `Lambda`, the total length.
    pub fn total_length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn marked(&self) -> &[usize] {
        &self.marked
    }

    pub fn spatial(&self) -> Option<&Spatial> {
        self.spatial.as_ref()
    }

    pub fn depth(&self, mut v: usize) -> f64 {
        let mut d = 0.0;
        while v != 0 {
            d += self.lengths[v];
            v = self.parent[v];
        }
        d
    }

    fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.parent.len());
        let mut stack = vec![0];
        while let Some(u) = stack.pop() {
            out.push(u);
            stack.extend(self.children[u].iter().rev());
        }
        out
    }

    /// `(u, v)` graph distance along the weighted tree.
    pub fn distance(&self, u: usize, v: usize) -> f64 {
        let (mut a, mut b) = (u, v);
        let (mut da, mut db) = (self.depth(a), self.depth(b));
        let mut d = 0.0;
        while a != b {
            // climb from the deeper end; ties climb both
            if da >= db {
                d += self.lengths[a];
                da -= self.lengths[a];
                a = self.parent[a];
            } else {
                d += self.lengths[b];
                db -= self.lengths[b];
                b = self.parent[b];
            }
        }
        d
    }

    /// Whether `a` lies on the path from the root to `b`.
    pub fn is_ancestor(&self, a: usize, mut b: usize) -> bool {
        loop {
            if a == b {
                return true;
            }
            if b == 0 {
                return false;
            }
            b = self.parent[b];
        }
    }

    pub fn leaves(&self) -> Vec<usize> {
        (1..self.vertex_count()).filter(|&v| self.children[v].is_empty()).collect()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.parent == other.parent
    }

    /// Multiplies lengths by `length_factor` and positions by `space_factor`.
    pub fn rescaled(&self, length_factor: f64, space_factor: f64) -> Self {
        let mut t = self.clone();
        for l in t.lengths.iter_mut() {
            *l *= length_factor;
        }
        if let Some(s) = t.spatial.as_mut() {
            for line in s.polylines.iter_mut() {
                for x in line.iter_mut() {
                    *x *= space_factor;
                }
            }
        }
        t
    }

    /// Spatial map interpolating linearly between the given vertex positions.
    pub fn with_linear_spatial(mut self, dim: usize, vertex_positions: &[f64], samples: usize) -> Result<Self> {
        if vertex_positions.len() != dim * self.vertex_count() {
            return Err(Error::InvalidParameter("one position per vertex required".into()));
        }
        let pos = |v: usize| &vertex_positions[v * dim..(v + 1) * dim];
        let polylines = (1..self.vertex_count())
            .map(|v| {
                let (a, b) = (pos(self.parent[v]), pos(v));
                (0..samples + 2)
                    .flat_map(|j| {
                        let f = j as f64 / (samples + 1) as f64;
                        (0..dim).map(move |c| a[c] + f * (b[c] - a[c]))
                    })
                    .collect()
            })
            .collect();
        self.spatial = Some(Spatial { dim, samples, polylines });
        Ok(self)
    }

    /// Spatial map read off a tour: along each edge the head process on the
    /// ancestral line of the child anchor, interpolated in height.
    pub fn with_tour_spatial(mut self, tour: &Tour, samples: usize) -> Result<Self> {
        let dim = tour.dim();
        let v = tour.v();
        let mut polylines = Vec::with_capacity(self.edge_count());
        for c in 1..self.vertex_count() {
            let (pa, ca) = (self.anchors[self.parent[c]], self.anchors[c]);
            let (lo, hi) = (v[pa], v[ca]);
            let line = tour.tree().ancestors(ca);
            let heights: Vec<f64> = line.iter().map(|&i| v[i]).collect();
            let mut poly = Vec::with_capacity((samples + 2) * dim);
            for j in 0..samples + 2 {
                let h = lo + (hi - lo) * j as f64 / (samples + 1) as f64;
                // ancestral heights are nondecreasing; interpolate between neighbours
                let k = heights.partition_point(|x| *x < h).min(line.len() - 1);
                if k == 0 || heights[k] == h {
                    poly.extend_from_slice(tour.r(line[k]));
                } else {
                    let (h0, h1) = (heights[k - 1], heights[k]);
                    let w = (h - h0) / (h1 - h0);
                    let (p, q) = (tour.r(line[k - 1]), tour.r(line[k]));
                    poly.extend((0..dim).map(|i| p[i] + w * (q[i] - p[i])));
                }
            }
            polylines.push(poly);
        }
        self.spatial = Some(Spatial { dim, samples, polylines });
        Ok(self)
    }

    /// Spatial map of a reduced discrete tree from the graph embedding of
    /// the underlying tree, interpolated along each skeleton path.
    pub fn with_graph_spatial(mut self, tree: &OrderedTree, emb: &GraphEmbedding, samples: usize) -> Result<Self> {
        let origin = self
            .origin_vertices()
            .ok_or_else(|| Error::InvalidParameter("not a reduced discrete tree".into()))?;
        let dim = emb.dim();
        let mut polylines = Vec::with_capacity(self.edge_count());
        for c in 1..self.vertex_count() {
            let (p, v) = (origin[self.parent[c]], origin[c]);
            let path = tree.root_path(v);
            let path = &path[tree.depth(p)..];
            let len = (path.len() - 1) as f64;
            let mut poly = Vec::with_capacity((samples + 2) * dim);
            for j in 0..samples + 2 {
                let x = len * j as f64 / (samples + 1) as f64;
                let k = (x.floor() as usize).min(path.len() - 2);
                let w = x - k as f64;
                let (a, b) = (emb.position(path[k]), emb.position(path[k + 1]));
                poly.extend((0..dim).map(|i| a[i] + w * (b[i] - a[i])));
            }
            polylines.push(poly);
        }
        self.spatial = Some(Spatial { dim, samples, polylines });
        Ok(self)
    }

    /// For a reduced discrete tree, the vertex of the underlying graph tree
    /// each vertex stands for (anchors index its contour).
    pub fn origin_vertices(&self) -> Option<Vec<usize>> {
        self.origin.clone()
    }

    /// Position at fraction `f` of the edge above `v`.
    pub fn spatial_at(&self, v: usize, f: f64) -> Option<Vec<f64>> {
        let s = self.spatial.as_ref()?;
        let dim = s.dim;
        if v == 0 {
            // the root; every polyline out of it starts there
            return Some(match self.children[0].first() {
                Some(&c) => s.polylines[c - 1][..dim].to_vec(),
                None => vec![0.0; dim],
            });
        }
        let line = &s.polylines[v - 1];
        let x = f.clamp(0.0, 1.0) * (s.samples + 1) as f64;
        let k = (x.floor() as usize).min(s.samples);
        let w = x - k as f64;
        Some((0..dim).map(|c| line[k * dim + c] + w * (line[(k + 1) * dim + c] - line[k * dim + c])).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Random binary tree with a degree-one root and `leaves` leaves, grown by
/// attaching each new leaf to the midpoint of a uniformly chosen edge; edge
/// lengths are then drawn uniformly from `[lo, hi)`.
pub fn random_binary_tree<R: rand::Rng + ?Sized>(leaves: usize, lo: f64, hi: f64, rng: &mut R) -> Result<GraphSpatialTree> {
    if leaves == 0 || !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParameter("need leaves >= 1 and 0 < lo < hi".into()));
    }
    // children lists over an arena; node 0 is the root
    let mut children: Vec<Vec<usize>> = vec![vec![1], vec![]];
    let mut parent = vec![0usize, 0];
    for _ in 1..leaves {
        let below = rng.random_range(1..children.len());
        let above = parent[below];
        let (mid, leaf) = (children.len(), children.len() + 1);
        let slot = children[above].iter().position(|&c| c == below).unwrap();
        children[above][slot] = mid;
        // new leaf goes left or right of the split edge
        children.push(if rng.random::<bool>() { vec![below, leaf] } else { vec![leaf, below] });
        children.push(vec![]);
        parent.push(above);
        parent.push(mid);
        parent[below] = mid;
    }
    let mut label = vec![0; children.len()];
    let mut order = Vec::new();
    let mut dfs = vec![0];
    while let Some(u) = dfs.pop() {
        label[u] = order.len();
        order.push(u);
        dfs.extend(children[u].iter().rev());
    }
    let mut par = vec![0; order.len()];
    let mut lengths = vec![0.0; order.len()];
    for &u in &order[1..] {
        par[label[u]] = label[parent[u]];
    }
    for l in lengths.iter_mut().skip(1) {
        *l = rng.random_range(lo..hi);
    }
    GraphSpatialTree::from_parts(par, lengths)
}

/// Builds the subtree of a coded tree spanned by the root and the marked
/// grid indices. Tree points closer than `tol` along a line are merged.
fn span_marks(values: &[f64], index: &RangeMin, marks: &[usize], tol: f64, binary: bool) -> Result<GraphSpatialTree> {
    struct Node {
        depth: f64,
        anchor: usize,
        children: Vec<usize>,
    }
    let mut nodes = vec![Node { depth: values[0], anchor: 0, children: vec![] }];
    let mut stack = vec![0usize];
    let mut mark_node = Vec::with_capacity(marks.len());
    for (i, &m) in marks.iter().enumerate() {
        if i > 0 {
            let l = index.argmin(marks[i - 1], m);
            let ld = values[l];
            let mut popped = None;
            while nodes[*stack.last().unwrap()].depth > ld + tol {
                popped = stack.pop();
            }
            let top = *stack.last().unwrap();
            if (nodes[top].depth - ld).abs() > tol {
                // new branch point on the edge from top to the popped node
                let below = popped.expect("a deeper node was popped");
                let b = nodes.len();
                nodes.push(Node { depth: ld, anchor: l, children: vec![below] });
                let slot = nodes[top].children.iter().position(|&c| c == below).unwrap();
                nodes[top].children[slot] = b;
                stack.push(b);
            }
        }
        let top = *stack.last().unwrap();
        if values[m] - nodes[top].depth > tol {
            let leaf = nodes.len();
            nodes.push(Node { depth: values[m], anchor: m, children: vec![] });
            nodes[top].children.push(leaf);
            stack.push(leaf);
            mark_node.push(leaf);
        } else {
            mark_node.push(top);
        }
    }
    for (k, node) in nodes.iter().enumerate().filter(|_| binary) {
        let degree = node.children.len() + usize::from(k != 0);
        if degree > 3 {
            return Err(Error::Degenerate(format!(
                "vertex at depth {} has degree {degree}",
                node.depth
            )));
        }
    }
    // relabel in depth-first order
    let mut label = vec![0; nodes.len()];
    let mut order = Vec::with_capacity(nodes.len());
    let mut dfs = vec![0];
    while let Some(u) = dfs.pop() {
        label[u] = order.len();
        order.push(u);
        dfs.extend(nodes[u].children.iter().rev());
    }
    let n = order.len();
    let mut parent = vec![0; n];
    let mut children = vec![Vec::new(); n];
    let mut lengths = vec![0.0; n];
    let mut anchors = vec![0; n];
    for &u in &order {
        anchors[label[u]] = nodes[u].anchor;
        for &c in &nodes[u].children {
            parent[label[c]] = label[u];
            children[label[u]].push(label[c]);
            lengths[label[c]] = nodes[c].depth - nodes[u].depth;
        }
    }
    Ok(GraphSpatialTree {
        parent,
        children,
        lengths,
        anchors,
        marked: mark_node.iter().map(|&u| label[u]).collect(),
        spatial: None,
        origin: None,
    })
}

/// Reduced subtree `T_v([u_1], ..., [u_k])` of a continuum tree.
///
/// Times are sorted first; vertices and edges follow the depth-first order
/// in which the sorted marks are met. Branch points closer than four grid
/// steps are merged, and a merge creating a vertex of degree four or more is
/// reported as degenerate.
pub fn reduce_continuum(tree: &RealTree, times: &[f64]) -> Result<GraphSpatialTree> {
    if times.is_empty() {
        return Err(Error::InvalidParameter("need at least one marked time".into()));
    }
    let mut marks = times.iter().map(|&t| tree.index(t)).collect::<Result<Vec<_>>>()?;
    marks.sort_unstable();
    span_marks(tree.values(), tree.range_min(), &marks, 4.0 * tree.grid_step(), true)
}

/// Reduced subtree of any coded tree, e.g. one coded by a discrete
/// contour: no merging and no degree check, since such trees need not be
/// binary.
pub fn reduce_coded(tree: &RealTree, times: &[f64]) -> Result<GraphSpatialTree> {
    if times.is_empty() {
        return Err(Error::InvalidParameter("need at least one marked time".into()));
    }
    let mut marks = times.iter().map(|&t| tree.index(t)).collect::<Result<Vec<_>>>()?;
    marks.sort_unstable();
    span_marks(tree.values(), tree.range_min(), &marks, 0.0, false)
}

/// Reduced subtree of a graph tree spanned by the root and the vertices
/// `V~_n(2n alpha_n(u_i))`, with integer edge lengths. Graph vertices may
/// have any degree, so no degeneracy check applies.
pub fn reduce_discrete(tree: &OrderedTree, tour: &DiscreteTour, us: &[f64]) -> Result<GraphSpatialTree> {
    let coded = contour_tree(tour)?;
    reduce_discrete_with(tree, tour, &coded, us)
}

/// The contour depths of a tour as a coded tree on the grid `k / 2n`.
pub fn contour_tree(tour: &DiscreteTour) -> Result<RealTree> {
    let depths: Vec<f64> = tour.depths.iter().map(|&d| d as f64).collect();
    RealTree::from_path(&depths, 1.0 / (2 * tour.n()) as f64)
}

/// `reduce_discrete` with a prebuilt contour index.
pub fn reduce_discrete_with(
    tree: &OrderedTree,
    tour: &DiscreteTour,
    coded: &RealTree,
    us: &[f64],
) -> Result<GraphSpatialTree> {
    if us.is_empty() {
        return Err(Error::InvalidParameter("need at least one marked point".into()));
    }
    if tour.n() != tree.n() {
        return Err(Error::InvalidParameter("tour does not belong to the tree".into()));
    }
    let mut marks = us.iter().map(|&u| tour.alpha_index(u)).collect::<Result<Vec<_>>>()?;
    marks.sort_unstable();
    let mut t = span_marks(coded.values(), coded.range_min(), &marks, 0.0, false)?;
    t.origin = Some(t.anchors.iter().map(|&k| tour.visits[k]).collect());
    Ok(t)
}

/// `d_1`: largest difference of corresponding edge lengths, infinite when
/// the shapes differ.
pub fn d1(a: &GraphSpatialTree, b: &GraphSpatialTree) -> f64 {
    if !a.same_shape(b) {
        return f64::INFINITY;
    }
    a.lengths().iter().zip(b.lengths()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// The homeomorphism between two trees of the same shape that is linear
/// along corresponding edges.
pub fn skeleton_map(a: &GraphSpatialTree, b: &GraphSpatialTree, x: SkeletonPoint) -> Result<SkeletonPoint> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch("skeleton map needs equal shapes".into()));
    }
    if x.vertex >= a.vertex_count() {
        return Err(Error::InvalidParameter(format!("no vertex {}", x.vertex)));
    }
    if x.vertex == 0 {
        return Ok(SkeletonPoint { vertex: 0, offset: 0.0 });
    }
    let f = x.offset / a.edge_length(x.vertex);
    Ok(SkeletonPoint { vertex: x.vertex, offset: f * b.edge_length(x.vertex) })
}

/// `d_2`: sup of the displacement between corresponding points, over the
/// stored samples of both trees.
pub fn d2(a: &GraphSpatialTree, b: &GraphSpatialTree) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch("d_2 needs equal shapes".into()));
    }
    let (sa, sb) = match (a.spatial(), b.spatial()) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::InvalidParameter("both trees need a spatial map".into())),
    };
    let mut fractions: Vec<f64> = (0..sa.samples + 2).map(|j| j as f64 / (sa.samples + 1) as f64).collect();
    fractions.extend((0..sb.samples + 2).map(|j| j as f64 / (sb.samples + 1) as f64));
    let mut sup = euclid(&a.spatial_at(0, 0.0).unwrap(), &b.spatial_at(0, 0.0).unwrap());
    for v in 1..a.vertex_count() {
        for &f in &fractions {
            sup = sup.max(euclid(&a.spatial_at(v, f).unwrap(), &b.spatial_at(v, f).unwrap()));
        }
    }
    Ok(sup)
}

/// `d_0 = (d_1 + d_2) ∧ 1`.
pub fn d0(a: &GraphSpatialTree, b: &GraphSpatialTree) -> Result<f64> {
    let l = d1(a, b);
    if !l.is_finite() {
        return Ok(1.0);
    }
    Ok((l + d2(a, b)?).min(1.0))
}

/// Largest distance from a point of the tree to the subtree spanned by the
/// root and the grid indices `marks`.
pub fn coverage_defect_marks(tree: &RealTree, marks: &[usize]) -> f64 {
    let mut marks = marks.to_vec();
    marks.sort_unstable();
    let v = tree.values();
    let mut worst: f64 = 0.0;
    let mut next = 0;
    for i in 0..v.len() {
        while next < marks.len() && marks[next] < i {
            next += 1;
        }
        // the nearest marks on either side reach highest into the arc to i
        let mut reach: f64 = 0.0;
        if next > 0 {
            reach = reach.max(tree.min_between(marks[next - 1], i));
        }
        if next < marks.len() {
            reach = reach.max(tree.min_between(i, marks[next]));
        }
        worst = worst.max(v[i] - reach);
    }
    worst
}

/// `Delta(T, skeleton)` for a skeleton built on the coding path of `tree`.
pub fn coverage_defect(tree: &RealTree, skeleton: &GraphSpatialTree) -> f64 {
    coverage_defect_marks(tree, skeleton.anchors())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceBound {
    /// Distortion of the shared-time correspondence.
    pub dis: f64,
    /// `||r - r'||_inf` on the grid.
    pub spatial_sup: f64,
    /// `4 ||v - v'||_inf + ||r - r'||_inf`.
    pub bound: f64,
}

/// Compares two tours through the correspondence pairing equal times.
pub fn tour_correspondence_bound(t1: &Tour, t2: &Tour) -> Result<CorrespondenceBound> {
    if t1.dim() != t2.dim() {
        return Err(Error::InvalidParameter("tours live in different dimensions".into()));
    }
    let tau1 = t1.grid_step() * (t1.len() - 1) as f64;
    let tau2 = t2.grid_step() * (t2.len() - 1) as f64;
    if (tau1 - tau2).abs() > 1e-9 * tau1.max(tau2) {
        return Err(Error::InvalidParameter(format!("durations differ: {tau1} vs {tau2}")));
    }
    let points = t1.len().max(t2.len());
    let (a, b) = (t1.resampled(points)?, t2.resampled(points)?);
    let sup_v = a.v().iter().zip(b.v()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let spatial_sup = (0..points).map(|i| euclid(a.r(i), b.r(i))).fold(0.0, f64::max);
    let mut dis: f64 = 0.0;
    for i in 0..points {
        for j in i + 1..points {
            dis = dis.max((a.tree().distance_between(i, j) - b.tree().distance_between(i, j)).abs());
        }
    }
    Ok(CorrespondenceBound { dis, spatial_sup, bound: 4.0 * sup_v + spatial_sup })
}
