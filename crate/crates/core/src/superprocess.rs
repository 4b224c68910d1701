//! Truncated Poisson forests of embedded clusters: level measures, range and
//! occupation mass of the resulting superprocess, started from a unit atom
//! at the origin.
//!
//! Clusters are drawn from the cluster measure conditioned on height above
//! the truncation `eps`. The measure gives mass `1/eps` to that event, so a
//! forest has Poisson(`1/eps`) clusters.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::embedding::{embed_continuum, ContinuumEmbedding};
use crate::excursion::{sample_normalized_excursion, Excursion, LEVY_HEIGHT_SCALE};
use crate::io::Csv;
use crate::stats::{chi_square_test, ChiSquareResult};
use crate::{Error, Result};

/// Default cluster length window `[L_MIN_FACTOR, L_MAX_FACTOR] * eps^2`.
pub const L_MIN_FACTOR: f64 = 0.01;
pub const L_MAX_FACTOR: f64 = 1.6e5;

/// Draws that may be rejected before the sampler gives up.
const MAX_ATTEMPTS: usize = 1_000_000;

/// Number of grid points for a cluster of length `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum GridPolicy {
    Fixed { points: usize },
    /// Time step at most `dt`, clamped to `[min, max]` points.
    Adaptive { dt: f64, min: usize, max: usize },
}

impl GridPolicy {
    pub fn points(&self, length: f64) -> usize {
        match *self {
            GridPolicy::Fixed { points } => points,
            GridPolicy::Adaptive { dt, min, max } => {
                let want = (length / dt).ceil() + 1.0;
                if want >= max as f64 { max } else { (want as usize).max(min) }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            GridPolicy::Fixed { points } => points >= 3,
            GridPolicy::Adaptive { dt, min, max } => dt > 0.0 && min >= 3 && max >= min,
        };
        if ok { Ok(()) } else { Err(Error::InvalidParameter(format!("bad grid policy {self:?}"))) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub eps: f64,
    pub dim: usize,
    pub l_min_factor: f64,
    pub l_max_factor: f64,
    pub grid: GridPolicy,
}

impl ForestConfig {
    pub fn new(eps: f64, dim: usize, grid_size: usize) -> Self {
        Self { eps, dim, l_min_factor: L_MIN_FACTOR, l_max_factor: L_MAX_FACTOR, grid: GridPolicy::Fixed { points: grid_size } }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps = {} must be positive", self.eps)));
        }
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if !(self.l_min_factor > 0.0 && self.l_max_factor > self.l_min_factor) {
            return Err(Error::InvalidParameter("need 0 < l_min_factor < l_max_factor".into()));
        }
        self.grid.validate()
    }

    pub fn length_bounds(&self) -> (f64, f64) {
        let e2 = self.eps * self.eps;
        (self.l_min_factor * e2, self.l_max_factor * e2)
    }
}

/// One embedded cluster: its tree path, head positions on the same grid,
/// and its height.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    exc: Excursion,
    emb: ContinuumEmbedding,
    height: f64,
}

impl Cluster {
    pub fn new(exc: Excursion, emb: ContinuumEmbedding) -> Result<Self> {
        if emb.len() != exc.len() {
            return Err(Error::ShapeMismatch(format!("{} positions for {} grid points", emb.len(), exc.len())));
        }
        let height = exc.height();
        Ok(Self { exc, emb, height })
    }

    pub fn exc(&self) -> &Excursion {
        &self.exc
    }

    pub fn emb(&self) -> &ContinuumEmbedding {
        &self.emb
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    /// Total mass `tau` of the cluster tree.
    pub fn tau(&self) -> f64 {
        self.exc.tau()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestSample {
    eps: f64,
    dim: usize,
    clusters: Vec<Cluster>,
}

#[derive(Serialize, Deserialize)]
struct ClusterEntry {
    tau: f64,
    height: f64,
    points: usize,
    excursion: String,
    embedding: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    eps: f64,
    dim: usize,
    clusters: Vec<ClusterEntry>,
}

impl ForestSample {
    pub fn new(eps: f64, dim: usize, clusters: Vec<Cluster>) -> Result<Self> {
        if let Some(c) = clusters.iter().find(|c| !(c.height > eps) || c.emb.dim() != dim) {
            return Err(Error::InvalidParameter(format!(
                "cluster of height {} in dimension {} does not belong to a forest truncated at {eps} in dimension {dim}",
                c.height,
                c.emb.dim()
            )));
        }
        Ok(Self { eps, dim, clusters })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// `sum_i tau_i`, the mass the occupation measure should carry.
    pub fn total_tau(&self) -> f64 {
        self.clusters.iter().map(Cluster::tau).sum()
    }

    /// Writes `manifest.json` and one excursion and one embedding CSV per
    /// cluster into `dir`; returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.clusters.len());
        for (i, c) in self.clusters.iter().enumerate() {
            let excursion = format!("cluster_{i:04}_excursion.csv");
            let embedding = format!("cluster_{i:04}_embedding.csv");
            c.exc.write_csv(BufWriter::new(File::create(dir.join(&excursion))?))?;
            c.emb.write_csv(BufWriter::new(File::create(dir.join(&embedding))?))?;
            entries.push(ClusterEntry { tau: c.tau(), height: c.height, points: c.exc.len(), excursion, embedding });
        }
        let path = dir.join("manifest.json");
        let manifest = Manifest { eps: self.eps, dim: self.dim, clusters: entries };
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        w.flush()?;
        Ok(path)
    }

    /// Reads a forest back from the manifest written by [`ForestSample::write`].
    pub fn read(manifest_path: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_reader(BufReader::new(File::open(manifest_path)?))?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let mut clusters = Vec::with_capacity(manifest.clusters.len());
        for e in &manifest.clusters {
            let exc = Excursion::read_csv(BufReader::new(File::open(dir.join(&e.excursion))?))?;
            let emb = ContinuumEmbedding::read_csv(BufReader::new(File::open(dir.join(&e.embedding))?))?;
            clusters.push(Cluster::new(exc, emb)?);
        }
        Self::new(manifest.eps, manifest.dim, clusters)
    }
}

/// Inverse-CDF draw from the density proportional to `L^{-3/2}` on `[lo, hi]`.
pub fn sample_cluster_length<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    let (a, b) = (lo.sqrt().recip(), hi.sqrt().recip());
    let u: f64 = rng.random();
    (a - u * (a - b)).powi(-2)
}

/// A cluster conditioned on height above `cfg.eps`: a length from the
/// excursion length law, a normalized excursion scaled diffusively to that
/// length, retried until its height exceeds `eps`, then embedded.
pub fn sample_cluster<R: Rng + ?Sized>(cfg: &ForestConfig, rng: &mut R) -> Result<Cluster> {
    cfg.validate()?;
    let (lo, hi) = cfg.length_bounds();
    for _ in 0..MAX_ATTEMPTS {
        let length = sample_cluster_length(lo, hi, rng);
        let e = sample_normalized_excursion(cfg.grid.points(length), rng)?;
        let exc = e.rescaled(length, LEVY_HEIGHT_SCALE * length.sqrt())?;
        if exc.height() > cfg.eps {
            let emb = embed_continuum(&exc, cfg.dim, rng)?;
            return Cluster::new(exc, emb);
        }
    }
    Err(Error::Conditioning(format!("no cluster above height {} in {MAX_ATTEMPTS} draws", cfg.eps)))
}

pub fn sample_forest<R: Rng + ?Sized>(cfg: &ForestConfig, rng: &mut R) -> Result<ForestSample> {
    cfg.validate()?;
    let mean = 1.0 / cfg.eps;
    let k = Poisson::new(mean).map_err(|e| Error::InvalidParameter(e.to_string()))?.sample(rng) as usize;
    let clusters = (0..k).map(|_| sample_cluster(cfg, rng)).collect::<Result<Vec<_>>>()?;
    ForestSample::new(cfg.eps, cfg.dim, clusters)
}

/// Forest truncated at `eps` with every cluster on a grid of `grid_size` points.
pub fn sample_truncated_forest<R: Rng + ?Sized>(eps: f64, d: usize, grid_size: usize, rng: &mut R) -> Result<ForestSample> {
    sample_forest(&ForestConfig::new(eps, d, grid_size), rng)
}

/// Weighted atoms in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMeasure {
    dim: usize,
    positions: Vec<f64>,
    weights: Vec<f64>,
}

impl LevelMeasure {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Writes `x_1..x_d,weight` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut header: Vec<String> = (1..=self.dim).map(|c| format!("x_{c}")).collect();
        header.push("weight".into());
        let mut csv = Csv::new(w, &header)?;
        let mut row = vec![0.0; self.dim + 1];
        for i in 0..self.len() {
            row[..self.dim].copy_from_slice(self.position(i));
            row[self.dim] = self.weights[i];
            csv.floats(&row)?;
        }
        Ok(())
    }
}

/// The superprocess at time `t`, discretized: every subtree above level `t`
/// of height at least `eps_lt` contributes an atom of weight `eps_lt` at the
/// head position of its root. At `t = 0` this is the unit atom at the origin.
pub fn level_measure(forest: &ForestSample, t: f64, eps_lt: f64) -> Result<LevelMeasure> {
    if !(t >= 0.0) || !(eps_lt > 0.0) {
        return Err(Error::InvalidParameter(format!("need t >= 0 and eps_lt > 0, got t = {t}, eps_lt = {eps_lt}")));
    }
    let dim = forest.dim;
    if t == 0.0 {
        return Ok(LevelMeasure { dim, positions: vec![0.0; dim], weights: vec![1.0] });
    }
    let mut positions = Vec::new();
    let mut weights = Vec::new();
    for c in &forest.clusters {
        if c.height < t + eps_lt {
            continue;
        }
        let step = c.exc.grid_step();
        for s in c.exc.decompose_above_level(t) {
            if s.height >= eps_lt {
                let i = (s.root_time / step).round() as usize;
                positions.extend_from_slice(c.emb.position(i));
                weights.push(eps_lt);
            }
        }
    }
    Ok(LevelMeasure { dim, positions, weights })
}

/// Distinct head positions at grid points of positive height, over all
/// clusters. Membership is exact (bitwise) equality.
#[derive(Debug, Clone)]
pub struct RangeCloud {
    dim: usize,
    points: Vec<f64>,
    index: HashSet<Box<[u64]>>,
}

impl RangeCloud {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && self.index.contains(&key(x))
    }

    /// Number of atoms of `m` outside the cloud.
    pub fn violations(&self, m: &LevelMeasure) -> usize {
        (0..m.len()).filter(|&i| !self.contains(m.position(i))).count()
    }
}

fn key(x: &[f64]) -> Box<[u64]> {
    // +0.0 and -0.0 are the same point
    x.iter().map(|c| (c + 0.0).to_bits()).collect()
}

pub fn range_cloud(forest: &ForestSample) -> RangeCloud {
    let dim = forest.dim;
    let mut points = Vec::new();
    let mut index = HashSet::new();
    for c in &forest.clusters {
        for (i, &v) in c.exc.values().iter().enumerate() {
            let x = c.emb.position(i);
            if v > 0.0 && index.insert(key(x)) {
                points.extend_from_slice(x);
            }
        }
    }
    RangeCloud { dim, points, index }
}

/// Midpoint Riemann sum over levels `(k + 1/2) t_step` of the total weight of
/// `level_measure(forest, ., eps_lt)`; estimates `sum_i tau_i`.
pub fn occupation_mass(forest: &ForestSample, eps_lt: f64, t_step: f64) -> Result<f64> {
    if !(eps_lt > 0.0 && t_step > 0.0) {
        return Err(Error::InvalidParameter("eps_lt and t_step must be positive".into()));
    }
    Ok(forest.clusters.iter().map(|c| c.exc.riemann_local_time(eps_lt, t_step)).sum())
}

/// Chi-square test of cluster heights against `P(h > x | h > eps) = eps / x`,
/// restricted to heights in `(eps, x_max]` and conditioned on that window, in
/// `bins` cells of equal probability. Heights above `x_max` are not used.
pub fn height_tail_test(heights: &[f64], eps: f64, x_max: f64, bins: usize) -> Result<ChiSquareResult> {
    if !(eps > 0.0 && x_max > eps) || bins == 0 {
        return Err(Error::InvalidParameter("need 0 < eps < x_max and at least one bin".into()));
    }
    // conditional CDF on the window is (1 - eps/x) / (1 - eps/x_max)
    let top = 1.0 - eps / x_max;
    let mut observed = vec![0usize; bins];
    for &h in heights {
        if h > eps && h <= x_max {
            let u = (1.0 - eps / h) / top;
            observed[((u * bins as f64) as usize).min(bins - 1)] += 1;
        }
    }
    chi_square_test(&observed, &vec![1.0 / bins as f64; bins])
}
