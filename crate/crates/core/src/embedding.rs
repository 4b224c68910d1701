//! Spatial embeddings of trees: the Gaussian snake on excursion-coded trees
//! and branching random walks on graph trees, plus tour assembly.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::excursion::{Excursion, RealTree};
use crate::gw::{dfs_tour, OffspringDist, OrderedTree};
use crate::io::Csv;
use crate::{Error, Result};

/// Head process `r` of a continuum tree at the grid times, flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuumEmbedding {
    dim: usize,
    positions: Vec<f64>,
}

impl ContinuumEmbedding {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn from_positions(dim: usize, positions: Vec<f64>) -> Result<Self> {
        if dim == 0 || positions.len() % dim != 0 {
            return Err(Error::InvalidParameter(format!("{} coordinates do not split into dimension {dim}", positions.len())));
        }
        Ok(Self { dim, positions })
    }

    /// Writes `x_1..x_d` rows in grid order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|c| format!("x_{c}")).collect();
        let mut csv = Csv::new(w, &header)?;
        for p in self.positions.chunks_exact(self.dim) {
            csv.floats(p)?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<Self> {
        let (header, rows) = crate::io::read_float_rows(r)?;
        let dim = header.len();
        if dim == 0 || header.iter().enumerate().any(|(c, h)| *h != format!("x_{}", c + 1)) {
            return Err(Error::Parse("expected columns x_1..x_d".into()));
        }
        Self::from_positions(dim, rows.concat())
    }
}

/// Gaussian embedding of the tree coded by `values`: centered, with
/// `cov(r(s), r(t)) = m_v(s, t) I`.
///
/// Walks the grid keeping the realized points of the current ancestral line
/// on a stack. A rise adds an independent Gaussian increment. A fall lands
/// on an ancestral segment between two realized points and is filled in by
/// the Brownian bridge between them, which is the exact conditional law.
pub fn embed_path<R: Rng + ?Sized>(values: &[f64], dim: usize, rng: &mut R) -> Result<ContinuumEmbedding> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    let n = values.len();
    let mut positions = vec![0.0; n * dim];
    // (level, index into positions) of the realized ancestral points
    let mut stack: Vec<(f64, usize)> = vec![(values[0], 0)];
    for i in 1..n {
        let (a, b) = (values[i - 1], values[i]);
        let (prev, rest) = positions.split_at_mut(i * dim);
        let here = &mut rest[..dim];
        if b > a {
            let sd = (b - a).sqrt();
            let from = &prev[(i - 1) * dim..];
            for c in 0..dim {
                let g: f64 = rng.sample(StandardNormal);
                here[c] = from[c] + sd * g;
            }
            stack.push((b, i));
        } else if b == a {
            here.copy_from_slice(&prev[(i - 1) * dim..i * dim]);
            stack.push((b, i));
        } else {
            // lowest realized point strictly above b
            let mut upper = stack.pop().expect("stack holds the root");
            while let Some(&(level, _)) = stack.last() {
                if level > b {
                    upper = stack.pop().unwrap();
                } else {
                    break;
                }
            }
            let &(lower_level, lower) = stack.last().ok_or_else(|| {
                Error::InvalidExcursion("coding path dips below its starting level".into())
            })?;
            if lower_level == b {
                here.copy_from_slice(&prev[lower * dim..(lower + 1) * dim]);
            } else {
                let (hi_level, hi) = upper;
                let span = hi_level - lower_level;
                let w = (b - lower_level) / span;
                let sd = ((b - lower_level) * (hi_level - b) / span).sqrt();
                for c in 0..dim {
                    let g: f64 = rng.sample(StandardNormal);
                    let (p, q) = (prev[lower * dim + c], prev[hi * dim + c]);
                    here[c] = p + w * (q - p) + sd * g;
                }
            }
            stack.push((b, i));
        }
    }
    Ok(ContinuumEmbedding { dim, positions })
}

/// `embed_path` on an excursion.
pub fn embed_continuum<R: Rng + ?Sized>(exc: &Excursion, dim: usize, rng: &mut R) -> Result<ContinuumEmbedding> {
    embed_path(exc.values(), dim, rng)
}

/// Law of the spatial displacement `Y` along one edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum StepDist {
    /// Centered Gaussian with covariance `sd^2 I`.
    Gaussian { dim: usize, sd: f64 },
    /// Uniform on `{+-length e_i}`.
    Lattice { dim: usize, length: f64 },
    /// Independent coordinates, coordinate `i` equal to `low_i` with
    /// probability `p_i` and `high_i` otherwise.
    TwoPoint { coords: Vec<TwoPointCoord> },
    /// Finite table of atoms.
    Table { points: Vec<Vec<f64>>, probs: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPointCoord {
    pub low: f64,
    pub high: f64,
    pub p: f64,
}

impl TwoPointCoord {
    /// Centered two-point law on `{low, high}`.
    pub fn centered(low: f64, high: f64) -> Self {
        Self { low, high, p: high / (high - low) }
    }
}

impl StepDist {
    pub fn gaussian(dim: usize) -> Self {
        Self::Gaussian { dim, sd: 1.0 }
    }

    /// `+-1` in each coordinate independently.
    pub fn rademacher(dim: usize) -> Self {
        Self::TwoPoint { coords: vec![TwoPointCoord::centered(-1.0, 1.0); dim] }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { dim, .. } | Self::Lattice { dim, .. } => *dim,
            Self::TwoPoint { coords } => coords.len(),
            Self::Table { points, .. } => points.first().map_or(0, |p| p.len()),
        }
    }

    /// Multiplies every step by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            Self::Gaussian { dim, sd } => Self::Gaussian { dim: *dim, sd: sd * c },
            Self::Lattice { dim, length } => Self::Lattice { dim: *dim, length: length * c },
            Self::TwoPoint { coords } => Self::TwoPoint {
                coords: coords.iter().map(|k| TwoPointCoord { low: k.low * c, high: k.high * c, p: k.p }).collect(),
            },
            Self::Table { points, probs } => Self::Table {
                points: points.iter().map(|p| p.iter().map(|x| x * c).collect()).collect(),
                probs: probs.clone(),
            },
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Self::Gaussian { dim, .. } | Self::Lattice { dim, .. } => vec![0.0; *dim],
            Self::TwoPoint { coords } => coords.iter().map(|k| k.p * k.low + (1.0 - k.p) * k.high).collect(),
            Self::Table { points, probs } => {
                let mut m = vec![0.0; self.dim()];
                for (pt, p) in points.iter().zip(probs) {
                    for (mi, x) in m.iter_mut().zip(pt) {
                        *mi += p * x;
                    }
                }
                m
            }
        }
    }

    /// `Sigma_Y^2`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        match self {
            Self::Gaussian { sd, .. } => DMatrix::identity(d, d) * (sd * sd),
            Self::Lattice { length, .. } => DMatrix::identity(d, d) * (length * length / d as f64),
            Self::TwoPoint { coords } => DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                d,
                coords.iter().map(|k| {
                    let m = k.p * k.low + (1.0 - k.p) * k.high;
                    k.p * (k.low - m).powi(2) + (1.0 - k.p) * (k.high - m).powi(2)
                }),
            )),
            Self::Table { points, probs } => {
                let m = self.mean();
                let mut c = DMatrix::zeros(d, d);
                for (pt, p) in points.iter().zip(probs) {
                    for i in 0..d {
                        for j in 0..d {
                            c[(i, j)] += p * (pt[i] - m[i]) * (pt[j] - m[j]);
                        }
                    }
                }
                c
            }
        }
    }

    /// `Sigma_Y`, the symmetric square root of the covariance.
    pub fn sigma_y(&self) -> DMatrix<f64> {
        symmetric_sqrt(&self.covariance())
    }

    /// Checks centering and a positive definite covariance.
    pub fn validated(self) -> Result<Self> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidStep("dimension must be at least 1".into()));
        }
        if let Self::Table { points, probs } = &self {
            if points.len() != probs.len() || points.iter().any(|p| p.len() != d) {
                return Err(Error::InvalidStep("table points and probabilities disagree".into()));
            }
            if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidStep("table must be a probability vector".into()));
            }
        }
        if let Self::TwoPoint { coords } = &self {
            if coords.iter().any(|k| !(k.p > 0.0 && k.p < 1.0)) {
                return Err(Error::InvalidStep("two-point probabilities must lie in (0, 1)".into()));
            }
        }
        if self.mean().iter().any(|m| m.abs() > 1e-12) {
            return Err(Error::InvalidStep(format!("mean {:?} is not zero", self.mean())));
        }
        if self.covariance().cholesky().is_none() {
            return Err(Error::InvalidStep("covariance is not positive definite".into()));
        }
        Ok(self)
    }

    /// Whether the law has bounded support, which settles the tail condition.
    pub fn bounded_support(&self) -> bool {
        !matches!(self, Self::Gaussian { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Self::Gaussian { sd, .. } => {
                for x in out.iter_mut() {
                    let g: f64 = rng.sample(StandardNormal);
                    *x = sd * g;
                }
            }
            Self::Lattice { dim, length } => {
                out.fill(0.0);
                let k = rng.random_range(0..2 * dim);
                out[k / 2] = if k % 2 == 0 { *length } else { -length };
            }
            Self::TwoPoint { coords } => {
                for (x, k) in out.iter_mut().zip(coords) {
                    *x = if rng.random::<f64>() < k.p { k.low } else { k.high };
                }
            }
            Self::Table { points, probs } => {
                let mut u: f64 = rng.random();
                let mut pick = points.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    if u < *p {
                        pick = i;
                        break;
                    }
                    u -= p;
                }
                out.copy_from_slice(&points[pick]);
            }
        }
    }
}

fn symmetric_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Positions of the vertices of a graph tree, with the edge increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEmbedding {
    dim: usize,
    positions: Vec<f64>,
    /// Increment on the edge above each vertex (zero for the root).
    increments: Vec<f64>,
}

impl GraphEmbedding {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn position(&self, v: usize) -> &[f64] {
        &self.positions[v * self.dim..(v + 1) * self.dim]
    }

    pub fn increment(&self, v: usize) -> &[f64] {
        &self.increments[v * self.dim..(v + 1) * self.dim]
    }

    /// Positions from explicit edge increments (one row per vertex, the
    /// root's row ignored).
    pub fn from_increments(tree: &OrderedTree, dim: usize, mut increments: Vec<f64>) -> Result<Self> {
        if increments.len() != tree.n() * dim {
            return Err(Error::InvalidParameter("one increment per vertex required".into()));
        }
        increments[..dim].fill(0.0);
        let mut positions = vec![0.0; tree.n() * dim];
        for v in tree.preorder().into_iter().skip(1) {
            let p = tree.parent(v).unwrap();
            for c in 0..dim {
                positions[v * dim + c] = positions[p * dim + c] + increments[v * dim + c];
            }
        }
        Ok(Self { dim, positions, increments })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut header = vec!["vertex".to_string()];
        header.extend((1..=self.dim).map(|i| format!("x_{i}")));
        let mut csv = Csv::new(w, &header)?;
        for v in 0..self.n() {
            let mut row = vec![v.to_string()];
            row.extend(self.position(v).iter().map(|x| crate::io::fmt_f64(*x)));
            csv.row(&row)?;
        }
        Ok(())
    }
}

/// Branching random walk: every edge carries an independent draw of `step`.
pub fn embed_brw<R: Rng + ?Sized>(tree: &OrderedTree, step: &StepDist, rng: &mut R) -> Result<GraphEmbedding> {
    let dim = step.dim();
    let mut inc = vec![0.0; tree.n() * dim];
    for v in 1..tree.n() {
        step.sample(rng, &mut inc[v * dim..(v + 1) * dim]);
    }
    GraphEmbedding::from_increments(tree, dim, inc)
}

/// `sigma_T` and `Sigma_phi` of the invariance principle for GW trees with
/// offspring law `dist` embedded by steps `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConstants {
    pub sigma_t: f64,
    pub sigma_phi: DMatrix<f64>,
}

pub fn scaling_constants(dist: &OffspringDist, step: &StepDist) -> Result<ScalingConstants> {
    let sigma_z = dist.variance().sqrt();
    if !(sigma_z > 0.0) {
        return Err(Error::InvalidParameter("offspring variance must be positive".into()));
    }
    Ok(ScalingConstants { sigma_t: 2.0 / sigma_z, sigma_phi: step.sigma_y() * (2.0 / sigma_z).sqrt() })
}

/// A pair `(v, r)` on a common uniform grid.
#[derive(Debug, Clone)]
pub struct Tour {
    tree: RealTree,
    dim: usize,
    r: Vec<f64>,
}

impl Tour {
    pub fn new(v: &[f64], step: f64, dim: usize, r: Vec<f64>) -> Result<Self> {
        if r.len() != v.len() * dim || dim == 0 {
            return Err(Error::InvalidParameter("head process does not match the grid".into()));
        }
        Ok(Self { tree: RealTree::from_path(v, step)?, dim, r })
    }

    pub fn from_continuum(exc: &Excursion, emb: &ContinuumEmbedding) -> Result<Self> {
        Self::new(exc.values(), exc.grid_step(), emb.dim(), emb.positions().to_vec())
    }

    pub fn tree(&self) -> &RealTree {
        &self.tree
    }

    pub fn v(&self) -> &[f64] {
        self.tree.values()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn grid_step(&self) -> f64 {
        self.tree.grid_step()
    }

    pub fn r(&self, i: usize) -> &[f64] {
        &self.r[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> &[f64] {
        &self.r
    }

    /// Componentwise linear interpolation of `(v, r)` at time `t`.
    pub fn interpolate(&self, t: f64) -> Result<(f64, Vec<f64>)> {
        let tau = self.tree.tau();
        if !(0.0..=tau).contains(&t) {
            return Err(Error::OutOfRange(t, tau));
        }
        let x = t / self.grid_step();
        let i = (x.floor() as usize).min(self.len() - 2);
        let w = x - i as f64;
        let v = self.v()[i] * (1.0 - w) + self.v()[i + 1] * w;
        let r = (0..self.dim).map(|c| self.r(i)[c] * (1.0 - w) + self.r(i + 1)[c] * w).collect();
        Ok((v, r))
    }

    /// The tour resampled by linear interpolation onto `points` grid points.
    pub fn resampled(&self, points: usize) -> Result<Self> {
        if points == self.len() {
            return Ok(self.clone());
        }
        let step = self.tree.tau() / (points - 1) as f64;
        let mut v = Vec::with_capacity(points);
        let mut r = Vec::with_capacity(points * self.dim);
        for k in 0..points {
            let (vk, rk) = self.interpolate((k as f64 * step).min(self.tree.tau()))?;
            v.push(vk.max(0.0));
            r.extend(rk);
        }
        v[0] = 0.0;
        v[points - 1] = 0.0;
        Self::new(&v, step, self.dim, r)
    }

    /// Grid indices of the root-to-`[t]` arc, in increasing time.
    pub fn arc_indices(&self, t: f64) -> Result<Vec<usize>> {
        Ok(self.tree.ancestors(self.tree.index(t)?))
    }

    /// The image of the arc from the root to `[t]`: the stopped snake path.
    pub fn arc_extract(&self, t: f64) -> Result<Arc> {
        let indices = self.arc_indices(t)?;
        let heights = indices.iter().map(|&i| self.v()[i]).collect();
        let mut points = Vec::with_capacity(indices.len() * self.dim);
        for &i in &indices {
            points.extend_from_slice(self.r(i));
        }
        Ok(Arc { dim: self.dim, indices, heights, points })
    }

    /// `sup |r(s) - r(t)|` over grid pairs with `d_v(s, t) < delta`.
    pub fn spatial_modulus(&self, delta: f64) -> f64 {
        let n = self.len();
        let mut best: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                if self.tree.distance_between(i, j) < delta {
                    best = best.max(euclid(self.r(i), self.r(j)));
                }
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut header = vec!["t".to_string(), "v".to_string()];
        header.extend((1..=self.dim).map(|i| format!("r_{i}")));
        let mut csv = Csv::new(w, &header)?;
        for i in 0..self.len() {
            let mut row = vec![self.tree.time(i), self.v()[i]];
            row.extend_from_slice(self.r(i));
            csv.floats(&row)?;
        }
        Ok(())
    }
}

/// Ordered points of an arc from the root, with their tree heights.
#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub dim: usize,
    pub indices: Vec<usize>,
    pub heights: Vec<f64>,
    pub points: Vec<f64>,
}

impl Arc {
    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    /// The part of the arc at heights `>= level`.
    pub fn above(&self, level: f64) -> Arc {
        let first = self.heights.partition_point(|h| *h < level);
        Arc {
            dim: self.dim,
            indices: self.indices[first..].to_vec(),
            heights: self.heights[first..].to_vec(),
            points: self.points[first * self.dim..].to_vec(),
        }
    }
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `(n^{-1/2} V_n, n^{-1/4} R_n)` on the grid `k / 2n`.
pub fn normalized_tour(tree: &OrderedTree, emb: &GraphEmbedding) -> Result<Tour> {
    if emb.n() != tree.n() {
        return Err(Error::InvalidParameter(format!(
            "embedding has {} vertices, tree has {}",
            emb.n(),
            tree.n()
        )));
    }
    let n = tree.n() as f64;
    let tour = dfs_tour(tree);
    let (vs, rs) = (n.powf(-0.5), n.powf(-0.25));
    let v: Vec<f64> = tour.depths.iter().map(|&d| d as f64 * vs).collect();
    let mut r = Vec::with_capacity(v.len() * emb.dim());
    for &u in &tour.visits {
        r.extend(emb.position(u).iter().map(|x| x * rs));
    }
    Tour::new(&v, 1.0 / (2.0 * n), emb.dim(), r)
}
