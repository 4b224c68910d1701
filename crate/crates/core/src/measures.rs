//! Gauge-function Hausdorff measure estimates along arcs by greedy
//! coverings, calibrated on Brownian paths, and a few metric diagnostics.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding::{euclid, Arc, Tour};
use crate::io::{fmt_f64, Csv};
use crate::stats::linear_fit;
use crate::{Error, Result};

/// Default upper end of the gauge domain, where `ln ln(1/x) >= ln 2`.
pub const DEFAULT_X_MAX: f64 = 0.1353352832366127; // e^-2

/// Time step of simulated paths relative to `delta^2 / d`. Steps that come
/// out longer than `delta / 2` are split by Brownian bridge midpoints, so
/// the spacing stays below `delta` without changing the law of the path.
/// A typical step is then `delta / 2` long.
pub const PATH_STEP_FACTOR: f64 = 0.25;

/// Below this tree height the relative error of an arc estimate is not
/// reported.
pub const DEFAULT_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub d: usize,
    pub delta: f64,
    pub kappa: f64,
    pub reps: usize,
    pub seed: u64,
}

/// `kappa x^2 ln ln(1/x)` on `(0, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gauge {
    pub kappa: f64,
    pub x_max: f64,
    /// Set when `kappa` was fitted; ties it to one dimension and radius.
    pub calibration: Option<CalibrationRecord>,
}

impl Gauge {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::InvalidParameter("kappa must be positive".into()));
        }
        Ok(Self { kappa, x_max: DEFAULT_X_MAX, calibration: None })
    }

    pub fn from_record(rec: CalibrationRecord) -> Result<Self> {
        Ok(Self { calibration: Some(rec), ..Self::new(rec.kappa)? })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut g = *self;
        g.kappa *= factor;
        if let Some(r) = g.calibration.as_mut() {
            r.kappa *= factor;
        }
        g
    }

    /// Checks that the gauge may be used in dimension `dim` at radius `delta`.
    pub fn check_use(&self, dim: usize, delta: f64) -> Result<()> {
        if let Some(r) = &self.calibration {
            if r.delta != delta {
                return Err(Error::GaugeMismatch { calibrated: r.delta, requested: delta });
            }
            if r.d != dim {
                return Err(Error::InvalidParameter(format!(
                    "gauge calibrated in dimension {}, used in {dim}",
                    r.d
                )));
            }
        }
        Ok(())
    }
}

pub fn gauge_eval(g: &Gauge, x: f64) -> Result<f64> {
    if !(x > 0.0) || x > g.x_max {
        return Err(Error::OutOfRange(x, g.x_max));
    }
    Ok(g.kappa * x * x * (1.0 / x).ln().ln())
}

/// Ordered points tracing an arc.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcSample {
    pub dim: usize,
    pub points: Vec<f64>,
}

impl ArcSample {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() % dim != 0 {
            return Err(Error::InvalidParameter("points do not match the dimension".into()));
        }
        Ok(Self { dim, points })
    }

    pub fn from_arc(arc: &Arc) -> Self {
        Self { dim: arc.dim, points: arc.points.clone() }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn max_spacing(&self) -> f64 {
        (1..self.len()).map(|k| euclid(self.point(k - 1), self.point(k))).fold(0.0, f64::max)
    }

    /// A straight segment from `a` to `b` in `pieces` equal steps.
    pub fn segment(a: &[f64], b: &[f64], pieces: usize) -> Self {
        let pts = (0..=pieces)
            .flat_map(|k| {
                let f = k as f64 / pieces as f64;
                a.iter().zip(b).map(move |(x, y)| x + f * (y - x))
            })
            .collect();
        Self { dim: a.len(), points: pts }
    }
}

/// Streaming greedy cover of an arc by consecutive pieces of diameter at
/// most `2 delta`.
///
/// Each point joins the current piece unless that would push the piece's
/// diameter above `2 delta`, in which case it starts a new piece. Having
/// diameter at most `2 delta` is inherited by sub-pieces, so this greedy
/// partition has the fewest pieces of any partition into consecutive runs;
/// counts are monotone in `delta` and along prefixes, and additive over
/// concatenation up to one piece. A straight segment of length `L` needs
/// `ceil(L / 2 delta)` pieces.
pub struct GreedyCover {
    dim: usize,
    delta: f64,
    count: usize,
    points: usize,
    /// Points of the current piece.
    piece: Vec<f64>,
    /// Distances of the piece's points to its first point, and their max.
    radii: Vec<f64>,
    reach: f64,
    last: Vec<f64>,
    /// When set, every accepted point is also appended here.
    record: Option<Vec<f64>>,
}

impl GreedyCover {
    pub fn new(dim: usize, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || dim == 0 {
            return Err(Error::InvalidParameter("delta and dimension must be positive".into()));
        }
        Ok(Self { dim, delta, count: 0, points: 0, piece: Vec::new(), radii: Vec::new(), reach: 0.0, last: Vec::new(), record: None })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if self.points > 0 {
            let gap = euclid(&self.last, x);
            if gap >= self.delta {
                return Err(Error::Resolution(format!("spacing {gap} is not below delta {}", self.delta)));
            }
        }
        self.last.clear();
        self.last.extend_from_slice(x);
        self.accept(x);
        Ok(())
    }

    /// `push` for a point already known to be closer than `delta` to the
    /// previous one. Callers restore `last` with `settle` when done.
    fn push_trusted(&mut self, x: &[f64]) {
        self.accept(x);
    }

    fn settle(&mut self, x: &[f64]) {
        self.last.clear();
        self.last.extend_from_slice(x);
    }

    fn accept(&mut self, x: &[f64]) {
        self.points += 1;
        if let Some(r) = self.record.as_mut() {
            r.extend_from_slice(x);
        }
        let d = self.dim;
        let width = 2.0 * self.delta;
        if self.count > 0 {
            let r = euclid(&self.piece[..d], x);
            let w2 = width * width;
            // the triangle inequality through the first point settles most pairs
            let fits = r + self.reach <= width
                || (r <= width
                    && self
                        .radii
                        .iter()
                        .zip(self.piece.chunks_exact(d))
                        .all(|(&ry, y)| r + ry <= width || dist2(y, x) <= w2));
            if fits {
                self.piece.extend_from_slice(x);
                self.radii.push(r);
                self.reach = self.reach.max(r);
                return;
            }
        }
        self.count += 1;
        self.piece.clear();
        self.piece.extend_from_slice(x);
        self.radii.clear();
        self.radii.push(0.0);
        self.reach = 0.0;
    }

    /// Gauge estimate of the arc fed so far; a single point measures 0.
    pub fn estimate(&self, g: &Gauge) -> Result<f64> {
        if self.points < 2 {
            return Ok(0.0);
        }
        Ok(self.count as f64 * gauge_eval(g, 2.0 * self.delta)?)
    }
}

pub fn cover_count(arc: &ArcSample, delta: f64) -> Result<usize> {
    let mut cover = GreedyCover::new(arc.dim, delta)?;
    for k in 0..arc.len() {
        cover.push(arc.point(k))?;
    }
    Ok(cover.count())
}

/// `cover_count(arc, delta) * gauge(2 delta)`, and 0 for a single point.
pub fn hausdorff_estimate(arc: &ArcSample, g: &Gauge, delta: f64) -> Result<f64> {
    g.check_use(arc.dim, delta)?;
    if arc.len() < 2 {
        return Ok(0.0);
    }
    Ok(cover_count(arc, delta)? as f64 * gauge_eval(g, 2.0 * delta)?)
}

/// Time step for paths covered at radius `delta` in dimension `d`.
pub fn path_step(d: usize, delta: f64) -> f64 {
    PATH_STEP_FACTOR * delta * delta / d as f64
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pushes `to` after `from`, first inserting Brownian bridge midpoints
/// (over time `dt`) while the step is at least `delta` long.
fn push_bridged<R: Rng + ?Sized>(cover: &mut GreedyCover, from: &[f64], to: &[f64], dt: f64, rng: &mut R) -> Result<()> {
    if dist2(from, to) >= cover.delta * cover.delta {
        let sd = (dt / 4.0).sqrt();
        let mid: Vec<f64> =
            from.iter().zip(to).map(|(a, b)| 0.5 * (a + b) + sd * rng.sample::<f64, _>(StandardNormal)).collect();
        push_bridged(cover, from, &mid, dt / 2.0, rng)?;
        return push_bridged(cover, &mid, to, dt / 2.0, rng);
    }
    cover.push_trusted(to);
    Ok(())
}

/// Feeds a standard Brownian path of the given duration, started at the
/// origin with step at most `dt`, into `cover`.
pub fn cover_brownian_path<R: Rng + ?Sized>(cover: &mut GreedyCover, duration: f64, dt: f64, rng: &mut R) -> Result<()> {
    let d = cover.dim;
    let steps = (duration / dt).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let sd = h.sqrt();
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    cover.push(&x)?;
    for _ in 0..steps {
        for c in 0..d {
            y[c] = x[c] + sd * rng.sample::<f64, _>(StandardNormal);
        }
        push_bridged(cover, &x, &y, h, rng)?;
        std::mem::swap(&mut x, &mut y);
    }
    cover.settle(&x);
    Ok(())
}

/// Simulated standard Brownian path as an arc sample, with the same
/// spacing rule as the covers use at radius `delta`.
pub fn brownian_path<R: Rng + ?Sized>(d: usize, duration: f64, delta: f64, rng: &mut R) -> ArcSample {
    let mut cover = GreedyCover::new(d, delta).expect("positive radius");
    cover.record = Some(Vec::new());
    cover_brownian_path(&mut cover, duration, path_step(d, delta), rng).expect("spacing is kept below delta");
    ArcSample { dim: d, points: cover.record.take().unwrap() }
}

/// Feeds the arc, refined by independent Brownian bridges in the height
/// variable so no piece spans more than `max_dt` of height, into `cover`.
/// The arc image of a snake is a Brownian path in height, so the bridges
/// have the exact conditional law.
pub fn cover_refined_arc<R: Rng + ?Sized>(
    cover: &mut GreedyCover,
    heights: &[f64],
    points: &[f64],
    max_dt: f64,
    rng: &mut R,
) -> Result<()> {
    let d = cover.dim;
    if heights.is_empty() {
        return Ok(());
    }
    cover.push(&points[..d])?;
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    for k in 1..heights.len() {
        let span = (heights[k] - heights[k - 1]).max(0.0);
        let pieces = (span / max_dt).ceil().max(1.0) as usize;
        let dt = span / pieces as f64;
        let end = &points[k * d..(k + 1) * d];
        x.copy_from_slice(&points[(k - 1) * d..k * d]);
        for j in 1..pieces {
            let remaining = (pieces - j + 1) as f64;
            // next point of a bridge from x to `end` over `remaining` steps
            let sd = (dt * (remaining - 1.0) / remaining).sqrt();
            for c in 0..d {
                y[c] = x[c] + (end[c] - x[c]) / remaining + sd * rng.sample::<f64, _>(StandardNormal);
            }
            push_bridged(cover, &x, &y, dt, rng)?;
            std::mem::swap(&mut x, &mut y);
        }
        push_bridged(cover, &x, end, dt, rng)?;
    }
    cover.settle(&points[(heights.len() - 1) * d..heights.len() * d]);
    Ok(())
}

/// Fits `kappa` on `reps` Brownian paths in `R^d` with durations cycling
/// through `0.1, 0.2, ..., 1.0`, so that the least-squares slope of the
/// estimate against duration is 1.
pub fn calibrate_kappa<R: Rng + ?Sized>(d: usize, delta: f64, reps: usize, seed: u64, rng: &mut R) -> Result<Gauge> {
    if d < 3 {
        return Err(Error::InvalidParameter(format!("calibration needs d >= 3, got {d}")));
    }
    if reps < 2 {
        return Err(Error::InvalidParameter("need at least two calibration paths".into()));
    }
    let unit = Gauge::new(1.0)?;
    gauge_eval(&unit, 2.0 * delta)?;
    let dt = path_step(d, delta);
    let mut ts = Vec::with_capacity(reps);
    let mut raw = Vec::with_capacity(reps);
    for k in 0..reps {
        let t = 0.1 * (1 + k % 10) as f64;
        let mut cover = GreedyCover::new(d, delta)?;
        cover_brownian_path(&mut cover, t, dt, rng)?;
        ts.push(t);
        raw.push(cover.estimate(&unit)?);
    }
    let fit = linear_fit(&ts, &raw)?;
    if !(fit.slope > 0.0) {
        return Err(Error::Degenerate("calibration slope is not positive".into()));
    }
    Gauge::from_record(CalibrationRecord { d, delta, kappa: 1.0 / fit.slope, reps, seed })
}

/// Gauge estimate of the tour's arc from the root to `[t]`.
pub fn root_arc_measure<R: Rng + ?Sized>(tour: &Tour, g: &Gauge, delta: f64, t: f64, rng: &mut R) -> Result<f64> {
    g.check_use(tour.dim(), delta)?;
    let arc = tour.arc_extract(t)?;
    measure_arc_piece(tour.dim(), &arc.heights, &arc.points, g, delta, rng)
}

fn measure_arc_piece<R: Rng + ?Sized>(
    dim: usize,
    heights: &[f64],
    points: &[f64],
    g: &Gauge,
    delta: f64,
    rng: &mut R,
) -> Result<f64> {
    // an arc of zero extent is a single point
    if heights.len() < 2 || heights.last() == heights.first() {
        return Ok(0.0);
    }
    let mut cover = GreedyCover::new(dim, delta)?;
    cover_refined_arc(&mut cover, heights, points, path_step(dim, delta), rng)?;
    cover.estimate(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub t: f64,
    pub v: f64,
    /// `None` when `v(t)` is below the floor.
    pub estimate: Option<f64>,
    pub rel_err: Option<f64>,
}

/// `|H(phi(arc to [t])) - v(t)| / v(t)` along `t_grid`. The arc is found
/// from `v` but measured from positions only.
pub fn arc_measure_identity_check<R: Rng + ?Sized>(
    tour: &Tour,
    g: &Gauge,
    delta: f64,
    t_grid: &[f64],
    floor: f64,
    rng: &mut R,
) -> Result<Vec<IdentityRow>> {
    g.check_use(tour.dim(), delta)?;
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let v = tour.v()[tour.tree().index(t)?];
        if v < floor {
            rows.push(IdentityRow { t, v, estimate: None, rel_err: None });
            continue;
        }
        let est = root_arc_measure(tour, g, delta, t, rng)?;
        rows.push(IdentityRow { t, v, estimate: Some(est), rel_err: Some((est - v).abs() / v) });
    }
    Ok(rows)
}

/// CSV `t,v,estimate,rel_err`; skipped rows leave the last two fields empty.
pub fn write_identity_csv<W: Write>(rows: &[IdentityRow], w: W) -> Result<()> {
    let mut csv = Csv::new(w, &["t", "v", "estimate", "rel_err"])?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for r in rows {
        csv.row(&[fmt_f64(r.t), fmt_f64(r.v), opt(r.estimate), opt(r.rel_err)])?;
    }
    Ok(())
}

/// Estimate of `d_S(r(s), r(t))`: the two arc pieces above the branch
/// point of the root, `[s]` and `[t]` are measured and summed. The target
/// is `d_v(s, t)`.
pub fn two_point_arc_measure<R: Rng + ?Sized>(
    tour: &Tour,
    g: &Gauge,
    delta: f64,
    s: f64,
    t: f64,
    rng: &mut R,
) -> Result<f64> {
    g.check_use(tour.dim(), delta)?;
    let tree = tour.tree();
    let (i, j) = (tree.index(s)?, tree.index(t)?);
    if i == j {
        return Ok(0.0);
    }
    let b = tree.range_min().argmin(i.min(j), i.max(j));
    let level = tree.values()[b];
    let mut total = 0.0;
    for k in [i, j] {
        let arc = tour.arc_extract(tree.time(k))?.above(level);
        // start every piece at the branch point itself
        let mut heights = vec![level];
        let mut points = tour.r(b).to_vec();
        heights.extend_from_slice(&arc.heights);
        points.extend_from_slice(&arc.points);
        total += measure_arc_piece(tour.dim(), &heights, &points, g, delta, rng)?;
    }
    Ok(total)
}

/// Hausdorff distance between two finite point sets in `R^dim`.
pub fn point_cloud_hausdorff(a: &[f64], b: &[f64], dim: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() || dim == 0 {
        return Err(Error::InvalidParameter("point sets must be nonempty".into()));
    }
    if a.len() % dim != 0 || b.len() % dim != 0 {
        return Err(Error::InvalidParameter("points do not match the dimension".into()));
    }
    let directed = |x: &[f64], y: &[f64]| {
        x.chunks(dim)
            .map(|p| y.chunks(dim).map(|q| euclid(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    Ok(directed(a, b).max(directed(b, a)))
}

/// Smallest `|r(s) - r(t)|` over `pairs` random grid pairs with
/// `d_v(s, t) >= eta`; infinite when no pair qualifies. Reported, not a test.
pub fn injectivity_diagnostic<R: Rng + ?Sized>(tour: &Tour, eta: f64, pairs: usize, rng: &mut R) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter("eta must be positive".into()));
    }
    let n = tour.len();
    let mut best = f64::INFINITY;
    for _ in 0..pairs {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if tour.tree().distance_between(i, j) >= eta {
            best = best.min(euclid(tour.r(i), tour.r(j)));
        }
    }
    Ok(best)
}
