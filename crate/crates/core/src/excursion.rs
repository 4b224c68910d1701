//! Excursions and the real trees they code.
//!
//! A nonnegative path `v` on a uniform grid over `[0, tau]` codes a rooted
//! real tree through `d_v(s, t) = v(s) + v(t) - 2 m_v(s, t)`, where `m_v` is
//! the minimum of `v` between `s` and `t`. Times are always snapped to the
//! nearest grid point.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::io::{read_float_rows, Csv};
use crate::rmq::RangeMin;
use crate::{Error, Result};

/// Heights of the standard Brownian excursion are multiplied by this factor
/// to obtain the tree of the cluster measure normalized by
/// `Theta(h > eps) = 1/eps` (branching mechanism `psi(u) = u^2`).
pub const LEVY_HEIGHT_SCALE: f64 = std::f64::consts::SQRT_2;

/// Nonnegative path on a uniform grid over `[0, tau]`, zero exactly at the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    values: Vec<f64>,
    tau: f64,
}

impl Excursion {
    pub fn new(values: Vec<f64>, tau: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidExcursion("need at least two grid points".into()));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidExcursion(format!("duration {tau} is not positive")));
        }
        let last = values.len() - 1;
        if values[0] != 0.0 || values[last] != 0.0 {
            return Err(Error::InvalidExcursion("endpoints must be zero".into()));
        }
        if let Some(i) = values[1..last].iter().position(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidExcursion(format!(
                "interior value at index {} is {}",
                i + 1,
                values[i + 1]
            )));
        }
        Ok(Self { values, tau })
    }

    /// Samples `f` at `points` equally spaced times over `[0, tau]`.
    pub fn from_fn(points: usize, tau: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidExcursion("need at least two grid points".into()));
        }
        let step = tau / (points - 1) as f64;
        let mut values: Vec<f64> = (0..points).map(|i| f(i as f64 * step)).collect();
        // endpoints are zero by definition, whatever rounding did
        values[0] = 0.0;
        values[points - 1] = 0.0;
        Self::new(values, tau)
    }

    /// The tent `t -> min(t, tau - t)`.
    pub fn tent(points: usize, tau: f64) -> Result<Self> {
        Self::from_fn(points, tau, |t| t.min(tau - t))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn grid_step(&self) -> f64 {
        self.tau / (self.values.len() - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.grid_step()
    }

    /// Nearest grid index to time `t`.
    pub fn index(&self, t: f64) -> Result<usize> {
        snap(t, self.tau, self.values.len())
    }

    pub fn value_at(&self, t: f64) -> Result<f64> {
        Ok(self.values[self.index(t)?])
    }

    /// `h(T)`, the maximum of the path.
    pub fn height(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Brownian-type rescaling `t -> height_factor * v(t / time_factor)`.
    pub fn rescaled(&self, time_factor: f64, height_factor: f64) -> Result<Self> {
        if !(time_factor > 0.0 && height_factor > 0.0) {
            return Err(Error::InvalidParameter("scale factors must be positive".into()));
        }
        Ok(Self {
            values: self.values.iter().map(|x| x * height_factor).collect(),
            tau: self.tau * time_factor,
        })
    }

    /// Root mean square of the grid increments, the natural height resolution.
    pub fn height_resolution(&self) -> f64 {
        let n = self.values.len() - 1;
        let ss: f64 = self.values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        (ss / n as f64).sqrt()
    }

    /// Maximal runs where `v > t`, one per subtree above level `t`.
    ///
    /// Interval ends are the crossing times of the linear interpolant, so the
    /// interval lengths add up to the Lebesgue measure of `{v > t}`.
    pub fn decompose_above_level(&self, t: f64) -> Vec<SubtreeInterval> {
        let v = &self.values;
        let step = self.grid_step();
        let mut out = Vec::new();
        let mut i = 0;
        while i < v.len() {
            if v[i] <= t {
                i += 1;
                continue;
            }
            let start = i;
            let mut root = i;
            let mut top = v[i];
            while i < v.len() && v[i] > t {
                if v[i] < v[root] {
                    root = i;
                }
                top = top.max(v[i]);
                i += 1;
            }
            let end = i - 1;
            // start > 0 and end < last because the path vanishes at both ends
            let lo = crossing(start - 1, v[start - 1], v[start], t, step);
            let hi = crossing(end, v[end], v[end + 1], t, step);
            out.push(SubtreeInterval {
                lo,
                hi,
                level: t,
                root_time: root as f64 * step,
                first_index: start,
                last_index: end,
                height: top - t,
            });
        }
        out
    }

    /// `eps` times the number of subtrees above level `t` of height at least `eps`.
    pub fn local_time_mass(&self, t: f64, eps: f64) -> Result<LocalTimeMass> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps = {eps} must be positive")));
        }
        let subtrees = self.decompose_above_level(t).iter().filter(|s| s.height >= eps).count();
        Ok(LocalTimeMass {
            mass: eps * subtrees as f64,
            subtrees,
            under_resolved: eps < RESOLUTION_FACTOR * self.height_resolution(),
        })
    }

    /// Peak/saddle pairs of the path under the elder rule.
    pub fn persistence(&self) -> Vec<PersistencePair> {
        persistence_pairs(&self.values)
    }

    /// `int_0^inf local_time_mass(t, eps) dt`, computed exactly from persistence.
    pub fn integrated_local_time(&self, eps: f64) -> f64 {
        eps * self
            .persistence()
            .iter()
            .map(|p| (p.peak - p.death - eps).max(0.0))
            .sum::<f64>()
    }

    /// `integrated_local_time` with the grid bias removed to second order.
    ///
    /// Grid maxima and minima miss the path's by amounts proportional to
    /// `sqrt(step)`, so the estimate on the grid and on its 4- and 16-fold
    /// coarsenings is extrapolated quadratically in `sqrt(step)` to zero.
    /// Needs a multiple of 16 grid intervals.
    pub fn integrated_local_time_extrapolated(&self, eps: f64) -> Result<f64> {
        let n = self.values.len() - 1;
        if n % 16 != 0 {
            return Err(Error::InvalidParameter(format!("{n} grid intervals is not a multiple of 16")));
        }
        let coarse = |k: usize| {
            let v: Vec<f64> = self.values.iter().step_by(k).copied().collect();
            eps * persistence_pairs(&v).iter().map(|p| (p.peak - p.death - eps).max(0.0)).sum::<f64>()
        };
        Ok((8.0 * self.integrated_local_time(eps) - 6.0 * coarse(4) + coarse(16)) / 3.0)
    }

    /// Midpoint Riemann sum of `local_time_mass(., eps)` with level step `t_step`.
    pub fn riemann_local_time(&self, eps: f64, t_step: f64) -> f64 {
        let pairs = self.persistence();
        eps * t_step * pairs.iter().map(|p| levels_alive(p, eps, t_step) as f64).sum::<f64>()
    }

    /// A point of the tree distributed as the mass measure (Lebesgue pushed forward).
    pub fn sample_mass_point<R: Rng + ?Sized>(&self, rng: &mut R) -> TreePoint {
        let u: f64 = rng.random::<f64>() * self.tau;
        let i = snap(u, self.tau, self.values.len()).expect("uniform draw lies in range");
        TreePoint { time: self.time(i) }
    }

    /// Writes `t,v` rows in grid order.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut csv = Csv::new(w, &["t", "v"])?;
        for (i, v) in self.values.iter().enumerate() {
            csv.floats(&[self.time(i), *v])?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<Self> {
        let (header, rows) = read_float_rows(r)?;
        if header != ["t", "v"] || rows.len() < 2 {
            return Err(Error::Parse("expected columns t,v and at least two rows".into()));
        }
        let tau = rows[rows.len() - 1][0];
        Self::new(rows.into_iter().map(|r| r[1]).collect(), tau)
    }

    /// Fills every grid interval with `factor - 1` new points drawn from the
    /// Brownian bridge conditioned to stay positive, with variance `diffusivity`
    /// per unit time.
    ///
    /// For a Brownian excursion this is the exact conditional law of the path
    /// between grid points, so the result is a finer sample of the same excursion.
    pub fn refine<R: Rng + ?Sized>(&self, factor: usize, diffusivity: f64, rng: &mut R) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidParameter("refinement factor must be positive".into()));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let h = self.grid_step() / factor as f64;
        let n = self.values.len() - 1;
        let mut out = Vec::with_capacity(n * factor + 1);
        let mut seg = vec![0.0; factor - 1];
        for w in self.values.windows(2) {
            out.push(w[0]);
            positive_bridge(w[0], w[1], h, diffusivity, &mut seg, rng);
            out.extend_from_slice(&seg);
        }
        out.push(0.0);
        Self::new(out, self.tau)
    }
}

/// `eps` smaller than this many height-resolution units is flagged.
pub const RESOLUTION_FACTOR: f64 = 3.0;

fn crossing(i: usize, a: f64, b: f64, t: f64, step: f64) -> f64 {
    // a and b straddle t
    let frac = if a == b { 0.0 } else { (t - a) / (b - a) };
    (i as f64 + frac.clamp(0.0, 1.0)) * step
}

pub(crate) fn snap(t: f64, tau: f64, len: usize) -> Result<usize> {
    let slack = 1e-12 * tau;
    if !(t >= -slack && t <= tau + slack) {
        return Err(Error::OutOfRange(t, tau));
    }
    let x = (t / tau * (len - 1) as f64).round();
    Ok((x.max(0.0) as usize).min(len - 1))
}

/// Samples a discretized normalized Brownian excursion with `grid_size`
/// points on `[0, 1]` by the Vervaat transform of a Brownian bridge.
pub fn sample_normalized_excursion<R: Rng + ?Sized>(grid_size: usize, rng: &mut R) -> Result<Excursion> {
    if grid_size < 2 {
        return Err(Error::InvalidParameter(format!("grid_size {grid_size} < 2")));
    }
    let n = grid_size - 1;
    let sd = (1.0 / n as f64).sqrt();
    let mut walk = vec![0.0; grid_size];
    loop {
        for k in 1..=n {
            let g: f64 = rng.sample(StandardNormal);
            walk[k] = walk[k - 1] + sd * g;
        }
        let end = walk[n];
        // bridge, then rotate at the first argmin
        let bridge: Vec<f64> = (0..n).map(|k| walk[k] - end * k as f64 / n as f64).collect();
        let mut m = 0;
        for k in 1..n {
            if bridge[k] < bridge[m] {
                m = k;
            }
        }
        let mut values = Vec::with_capacity(grid_size);
        for k in 0..n {
            values.push(bridge[(m + k) % n] - bridge[m]);
        }
        values.push(0.0);
        // a tie for the minimum would put a zero inside; it has probability zero
        if let Ok(e) = Excursion::new(values, 1.0) {
            return Ok(e);
        }
    }
}

/// Interior points of a Brownian bridge from `a` to `b` conditioned positive,
/// `out.len()` points spaced `h` apart.
fn positive_bridge<R: Rng + ?Sized>(a: f64, b: f64, h: f64, diffusivity: f64, out: &mut [f64], rng: &mut R) {
    const TRIES: usize = 32;
    if a > 0.0 && b > 0.0 {
        for _ in 0..TRIES {
            if linear_bridge(a, b, h, diffusivity, out, rng) {
                return;
            }
        }
    }
    bessel3_bridge(a, b, h, diffusivity, out, rng);
}

/// Plain Brownian bridge; returns whether every point came out positive.
fn linear_bridge<R: Rng + ?Sized>(a: f64, b: f64, h: f64, diffusivity: f64, out: &mut [f64], rng: &mut R) -> bool {
    let total = (out.len() + 1) as f64 * h;
    let mut x = a;
    let mut rem = total;
    for slot in out.iter_mut() {
        let mean = x + (b - x) * h / rem;
        let var = diffusivity * h * (rem - h) / rem;
        let g: f64 = rng.sample(StandardNormal);
        x = mean + var.sqrt() * g;
        if x <= 0.0 {
            return false;
        }
        *slot = x;
        rem -= h;
    }
    true
}

/// Norm of a three-dimensional bridge from `(a,0,0)` to `(b,0,0)`: the
/// Bessel(3) bridge, i.e. the bridge conditioned never to hit zero.
fn bessel3_bridge<R: Rng + ?Sized>(a: f64, b: f64, h: f64, diffusivity: f64, out: &mut [f64], rng: &mut R) {
    let total = (out.len() + 1) as f64 * h;
    let mut x = [a, 0.0, 0.0];
    let target = [b, 0.0, 0.0];
    let mut rem = total;
    for slot in out.iter_mut() {
        let sd = (diffusivity * h * (rem - h) / rem).sqrt();
        for c in 0..3 {
            let g: f64 = rng.sample(StandardNormal);
            x[c] += (target[c] - x[c]) * h / rem + sd * g;
        }
        *slot = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        rem -= h;
    }
}

/// A tree point, represented by a grid time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreePoint {
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub time: f64,
    pub index: usize,
    pub depth: f64,
}

/// A connected component of the tree above a level, coded by an excursion
/// interval of `v` above that level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtreeInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    /// Grid time in the interval closest to the subtree root.
    pub root_time: f64,
    pub first_index: usize,
    pub last_index: usize,
    /// Height of the subtree above `level`.
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeMass {
    pub mass: f64,
    pub subtrees: usize,
    /// `eps` is within a few grid height increments; counts are unreliable.
    pub under_resolved: bool,
}

/// A local maximum `peak` whose superlevel component merges into an older
/// one at level `death`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencePair {
    pub peak: f64,
    pub death: f64,
    pub index: usize,
}

impl PersistencePair {
    pub fn persistence(&self) -> f64 {
        self.peak - self.death
    }
}

/// Number of midpoint levels `(k + 1/2) t_step` at which the component of
/// `pair` exists and reaches `eps` above the level.
pub(crate) fn levels_alive(pair: &PersistencePair, eps: f64, t_step: f64) -> u64 {
    let top = pair.peak - eps;
    if top < pair.death {
        return 0;
    }
    let first = (pair.death / t_step - 0.5).ceil().max(0.0);
    let last = (top / t_step - 0.5).floor();
    if last < first { 0 } else { (last - first) as u64 + 1 }
}

/// Elder-rule persistence of the superlevel sets of a path that starts and
/// ends at its minimum. Pairs of zero persistence are omitted; the global
/// maximum dies at the final value.
pub fn persistence_pairs(v: &[f64]) -> Vec<PersistencePair> {
    struct Entry {
        peak: f64,
        left: f64,
        index: usize,
    }
    let mut stack: Vec<Entry> = Vec::new();
    let mut out = Vec::new();
    // minimum of v from the top peak (inclusive) to the previous point
    let mut right = f64::INFINITY;
    for (i, &x) in v.iter().enumerate() {
        while let Some(top) = stack.last() {
            if top.peak > x {
                break;
            }
            let death = top.left.max(right);
            if top.peak > death {
                out.push(PersistencePair { peak: top.peak, death, index: top.index });
            }
            right = right.min(top.left);
            stack.pop();
        }
        stack.push(Entry { peak: x, left: right.min(x), index: i });
        right = x;
    }
    // nothing older lies to the right any more
    while let Some(top) = stack.pop() {
        if top.peak > top.left {
            out.push(PersistencePair { peak: top.peak, death: top.left, index: top.index });
        }
    }
    out
}

/// Excursion-coded real tree with a range-minimum index.
///
/// Also accepts coding paths with interior zeros (discrete tours), for which
/// the zeros are all identified with the root.
#[derive(Debug, Clone)]
pub struct RealTree {
    index: RangeMin,
    step: f64,
}

impl RealTree {
    pub fn new(exc: &Excursion) -> Self {
        Self { index: RangeMin::new(exc.values()), step: exc.grid_step() }
    }

    /// Tree coded by a nonnegative path vanishing at both ends.
    pub fn from_path(values: &[f64], step: f64) -> Result<Self> {
        if values.len() < 2 || !(step > 0.0) {
            return Err(Error::InvalidExcursion("need two points and a positive step".into()));
        }
        if values[0] != 0.0 || values[values.len() - 1] != 0.0 || values.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::InvalidExcursion("coding path must be nonnegative and vanish at the ends".into()));
        }
        Ok(Self { index: RangeMin::new(values), step })
    }

    pub fn values(&self) -> &[f64] {
        self.index.values()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn grid_step(&self) -> f64 {
        self.step
    }

    pub fn tau(&self) -> f64 {
        self.step * (self.len() - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn index(&self, t: f64) -> Result<usize> {
        snap(t, self.tau(), self.len())
    }

    pub fn range_min(&self) -> &RangeMin {
        &self.index
    }

    /// Two times code the same tree point when their distance is at most this.
    pub fn same_point_tolerance(&self) -> f64 {
        2.0 * self.step
    }

    pub fn height(&self) -> f64 {
        self.values().iter().copied().fold(0.0, f64::max)
    }

    pub fn min_between(&self, i: usize, j: usize) -> f64 {
        self.index.min(i, j)
    }

    pub fn distance_between(&self, i: usize, j: usize) -> f64 {
        let v = self.values();
        // clamp away rounding below zero
        (v[i] + v[j] - 2.0 * self.index.min(i, j)).max(0.0)
    }

    /// `m_v(s, t)`.
    pub fn path_minimum(&self, s: f64, t: f64) -> Result<f64> {
        Ok(self.min_between(self.index(s)?, self.index(t)?))
    }

    /// `d_v(s, t)`.
    pub fn distance(&self, s: f64, t: f64) -> Result<f64> {
        Ok(self.distance_between(self.index(s)?, self.index(t)?))
    }

    /// Branch point of three grid indices.
    pub fn branch_between(&self, i: usize, j: usize, k: usize) -> BranchPoint {
        let mut s = [i, j, k];
        s.sort_unstable();
        let left = self.index.argmin(s[0], s[1]);
        let right = self.index.argmin(s[1], s[2]);
        let v = self.values();
        // the deeper of the two consecutive minima is where the paths split
        let b = if v[left] >= v[right] { left } else { right };
        BranchPoint { time: self.time(b), index: b, depth: v[b] }
    }

    /// `b(s1, s2, s3)`, the common point of the three arcs between the points.
    pub fn branch_point(&self, s1: f64, s2: f64, s3: f64) -> Result<BranchPoint> {
        Ok(self.branch_between(self.index(s1)?, self.index(s2)?, self.index(s3)?))
    }

    /// Grid indices `s <= t` with `v(s) = m_v(s, t)`: the points of the arc
    /// from the root to `[t]`, in increasing order.
    pub fn ancestors(&self, t_index: usize) -> Vec<usize> {
        let v = self.values();
        let mut out = Vec::new();
        let mut running = f64::INFINITY;
        for s in (0..=t_index).rev() {
            if v[s] <= running {
                running = v[s];
                out.push(s);
            }
        }
        out.reverse();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_excursion(points: usize, seed: u64) -> Excursion {
        sample_normalized_excursion(points, &mut stream(seed, 0)).unwrap()
    }

    fn tent() -> RealTree {
        RealTree::new(&Excursion::tent(1001, 1.0).unwrap())
    }

    #[test]
    fn rejects_invalid_excursions() {
        assert!(Excursion::new(vec![0.0, 1.0, 0.0], 1.0).is_ok());
        assert!(Excursion::new(vec![0.0, 1.0, 0.0, 1.0, 0.0], 1.0).is_err());
        assert!(Excursion::new(vec![0.1, 1.0, 0.0], 1.0).is_err());
        assert!(Excursion::new(vec![0.0, 1.0, 0.0], 0.0).is_err());
        assert!(Excursion::new(vec![0.0], 1.0).is_err());
        assert!(sample_normalized_excursion(1, &mut stream(1, 0)).is_err());
    }

    #[test]
    fn sampled_excursion_is_an_excursion() {
        let e = random_excursion(1 << 14, 1);
        assert_eq!(e.values()[0], 0.0);
        assert_eq!(*e.values().last().unwrap(), 0.0);
        assert!(e.values()[1..e.len() - 1].iter().all(|x| *x > 0.0));
        assert_eq!(e.tau(), 1.0);
        assert!((e.grid_step() * (e.len() - 1) as f64 - e.tau()).abs() < 1e-12);
        assert_eq!(sample_normalized_excursion(2, &mut stream(1, 0)).unwrap().values(), &[0.0, 0.0]);
    }

    #[test]
    fn excursion_mean_height_at_half() {
        // E e(1/2) = sqrt(8 / pi) / 2 for the standard normalized excursion
        let mut rng = stream(5, 0);
        let reps = 4000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..reps {
            let e = sample_normalized_excursion(1025, &mut rng).unwrap();
            let x = e.value_at(0.5).unwrap();
            sum += x;
            sq += x * x;
        }
        let mean = sum / reps as f64;
        let se = ((sq / reps as f64 - mean * mean) / reps as f64).sqrt();
        let target = (8.0 / std::f64::consts::PI).sqrt() / 2.0;
        assert!((mean - target).abs() < 4.0 * se + 0.01, "mean {mean} target {target}");
    }

    #[test]
    fn tent_examples() {
        let t = tent();
        assert!((t.path_minimum(0.2, 0.8).unwrap() - 0.2).abs() < 1e-12);
        assert!((t.path_minimum(0.3, 0.3).unwrap() - 0.3).abs() < 1e-12);
        assert!(t.distance(0.25, 0.75).unwrap().abs() < 1e-12);
        assert!((t.distance(0.0, 0.4).unwrap() - 0.4).abs() < 1e-12);
        assert!((t.height() - 0.5).abs() < 1e-12);
        assert!(t.path_minimum(-0.1, 0.5).is_err());
        assert!(t.distance(0.5, 1.2).is_err());
    }

    #[test]
    fn branch_point_examples() {
        let t = RealTree::new(&random_excursion(4097, 2));
        let mut rng = stream(2, 1);
        for _ in 0..100 {
            let s: f64 = rng.random();
            let u: f64 = rng.random();
            let b = t.branch_point(0.0, s, u).unwrap();
            assert_eq!(b.depth, t.path_minimum(s, u).unwrap());
            let b = t.branch_point(s, s, s).unwrap();
            let i = t.index(s).unwrap();
            assert_eq!(b.index, i);
            assert_eq!(b.depth, t.values()[i]);
        }
    }

    #[test]
    fn branch_point_matches_exhaustive_search() {
        let e = random_excursion(513, 3);
        let t = RealTree::new(&e);
        let mut rng = stream(3, 1);
        for _ in 0..30 {
            let s: Vec<usize> = (0..3).map(|_| rng.random_range(0..e.len())).collect();
            let d = |a: usize, b: usize| t.distance_between(a, b);
            let target = |a: usize, b: usize, c: usize| (d(a, b) + d(a, c) - d(b, c)) / 2.0;
            let targets = [target(s[0], s[1], s[2]), target(s[1], s[0], s[2]), target(s[2], s[0], s[1])];
            let err = |x: usize| (0..3).map(|m| (d(s[m], x) - targets[m]).abs()).fold(0.0, f64::max);
            let best = (0..e.len()).min_by(|a, b| err(*a).partial_cmp(&err(*b)).unwrap()).unwrap();
            let b = t.branch_between(s[0], s[1], s[2]);
            assert!(err(b.index) <= err(best) + 1e-9);
            // both are the same tree point
            assert!(d(b.index, best) <= t.same_point_tolerance());
        }
    }

    #[test]
    fn path_minimum_matches_scan() {
        let e = random_excursion(2049, 4);
        let t = RealTree::new(&e);
        let mut rng = stream(4, 1);
        for _ in 0..100 {
            let (a, b) = (rng.random_range(0..e.len()), rng.random_range(0..e.len()));
            let scan = e.values()[a.min(b)..=a.max(b)].iter().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(t.min_between(a, b), scan);
            assert_eq!(t.path_minimum(t.time(a), t.time(b)).unwrap(), scan);
        }
    }

    #[test]
    fn metric_axioms() {
        let e = random_excursion(2049, 6);
        let t = RealTree::new(&e);
        let tol = t.same_point_tolerance();
        let mut rng = stream(6, 1);
        for _ in 0..1000 {
            let s: Vec<usize> = (0..4).map(|_| rng.random_range(0..e.len())).collect();
            let d = |a: usize, b: usize| t.distance_between(s[a], s[b]);
            assert_eq!(d(0, 1), d(1, 0));
            assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12);
            let mut sums = [d(0, 1) + d(2, 3), d(0, 2) + d(1, 3), d(0, 3) + d(1, 2)];
            sums.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert!((sums[2] - sums[1]).abs() <= tol, "four-point condition {sums:?}");
            // the branch point lies on the arc between the two points it separates
            let b = t.branch_between(s[0], s[1], s[2]).index;
            let on_arc = [(0, 1), (0, 2), (1, 2)]
                .iter()
                .all(|&(x, y)| (t.distance_between(s[x], b) + t.distance_between(b, s[y]) - d(x, y)).abs() <= tol);
            assert!(on_arc);
        }
    }

    #[test]
    fn height_is_the_maximum() {
        let e = random_excursion(1025, 7);
        assert_eq!(e.height(), e.values().iter().copied().fold(f64::MIN, f64::max));
        assert!(e.height() > 0.0);
    }

    #[test]
    fn decomposition_examples() {
        let e = Excursion::tent(1001, 1.0).unwrap();
        assert!(e.decompose_above_level(0.5).is_empty());
        assert!(e.decompose_above_level(0.7).is_empty());
        let parts = e.decompose_above_level(0.25);
        assert_eq!(parts.len(), 1);
        assert!((parts[0].lo - 0.25).abs() < 1e-12 && (parts[0].hi - 0.75).abs() < 1e-12);
        assert!((parts[0].root_time - 0.251).abs() < 1e-12);
        assert!((parts[0].height - 0.25).abs() < 1e-12);
    }

    #[test]
    fn decomposition_counts_sign_changes() {
        let e = random_excursion(4097, 8);
        for &t in &[0.05, 0.2, 0.4, 0.6, 0.9] {
            let parts = e.decompose_above_level(t);
            let above: Vec<bool> = e.values().iter().map(|x| *x > t).collect();
            let changes = above.windows(2).filter(|w| w[0] != w[1]).count();
            assert_eq!(parts.len(), changes / 2);
            for p in &parts {
                assert!(e.values()[p.first_index..=p.last_index].iter().all(|x| *x > t));
                assert!(p.lo <= e.time(p.first_index) && p.hi >= e.time(p.last_index));
            }
            for w in parts.windows(2) {
                assert!(w[0].hi <= w[1].lo);
            }
        }
    }

    #[test]
    fn local_time_examples() {
        let e = Excursion::tent(1001, 1.0).unwrap();
        let m = e.local_time_mass(0.1, 0.1).unwrap();
        assert!((m.mass - 0.1).abs() < 1e-12);
        assert_eq!(m.subtrees, 1);
        assert!(!m.under_resolved);
        assert_eq!(e.local_time_mass(0.6, 0.1).unwrap().mass, 0.0);
        assert!(e.local_time_mass(0.1, 0.0001).unwrap().under_resolved);
        assert!(e.local_time_mass(0.1, 0.0).is_err());
    }

    #[test]
    fn persistence_of_small_path() {
        let pairs = persistence_pairs(&[0.0, 5.0, 1.0, 3.0, 2.0, 0.0]);
        let mut got: Vec<(f64, f64)> = pairs.iter().map(|p| (p.peak, p.death)).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, vec![(3.0, 1.0), (5.0, 0.0)]);
    }

    #[test]
    fn persistence_integral_matches_level_scan() {
        let e = random_excursion(2049, 9);
        let eps = 0.05;
        let t_step = 1e-3;
        let mut scan = 0.0;
        let mut k = 0;
        loop {
            let t = (k as f64 + 0.5) * t_step;
            if t > e.height() {
                break;
            }
            scan += t_step * e.local_time_mass(t, eps).unwrap().mass;
            k += 1;
        }
        let fast = e.riemann_local_time(eps, t_step);
        assert!((scan - fast).abs() < 1e-9, "{scan} vs {fast}");
        let exact = e.integrated_local_time(eps);
        assert!((exact - fast).abs() < 0.02 * exact);
    }

    #[test]
    fn extrapolation_is_exact_on_coarse_paths_and_debiases_fine_ones() {
        // a tent is resolved by every coarsening, so all three estimates agree
        let e = Excursion::tent(1025, 1.0).unwrap();
        let plain = e.integrated_local_time(0.05);
        assert!((e.integrated_local_time_extrapolated(0.05).unwrap() - plain).abs() < 1e-12);
        assert!(Excursion::tent(1001, 1.0).unwrap().integrated_local_time_extrapolated(0.05).is_err());
        // scaled by LEVY_HEIGHT_SCALE the integral tends to the length 1
        let (mut plain, mut extra) = (0.0, 0.0);
        for seed in 0..20 {
            let e = random_excursion((1 << 16) + 1, 100 + seed).rescaled(1.0, LEVY_HEIGHT_SCALE).unwrap();
            plain += e.integrated_local_time(0.05) / 20.0;
            extra += e.integrated_local_time_extrapolated(0.05).unwrap() / 20.0;
        }
        assert!(plain < 0.95 && (extra - 1.0).abs() < 0.05, "{plain} {extra}");
    }

    #[test]
    fn mass_point_depth_on_tent_is_uniform() {
        let e = Excursion::tent(10001, 1.0).unwrap();
        let mut rng = stream(10, 0);
        let n = 20000;
        let mut bins = [0usize; 5];
        for _ in 0..n {
            let p = e.sample_mass_point(&mut rng);
            let depth = e.value_at(p.time).unwrap();
            bins[((depth / 0.1) as usize).min(4)] += 1;
        }
        let expected = vec![0.2; 5];
        let (_, p) = crate::stats::chi_square(&bins, &expected).unwrap();
        assert!(p > 0.001, "p = {p}");
        let a = e.sample_mass_point(&mut stream(11, 0));
        let b = e.sample_mass_point(&mut stream(11, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn mass_point_mean_depth_matches_grid_average() {
        let e = random_excursion(1025, 12);
        let grid_mean = e.values().iter().sum::<f64>() / e.len() as f64;
        let mut rng = stream(12, 1);
        let n = 40000;
        let xs: Vec<f64> = (0..n).map(|_| e.value_at(e.sample_mass_point(&mut rng).time).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mean - grid_mean).abs() < 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn refinement_keeps_grid_values() {
        let e = random_excursion(65, 13);
        let r = e.refine(8, 1.0, &mut stream(13, 1)).unwrap();
        assert_eq!(r.len(), 64 * 8 + 1);
        for i in 0..e.len() {
            assert_eq!(r.values()[8 * i], e.values()[i]);
        }
    }

    #[test]
    fn refinement_has_brownian_increments() {
        // quadratic variation per unit time stays 1 after refinement
        let e = random_excursion(1025, 14);
        let r = e.refine(16, 1.0, &mut stream(14, 1)).unwrap();
        let qv: f64 = r.values().windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        assert!((qv - 1.0).abs() < 0.02, "qv = {qv}");
    }

    #[test]
    fn csv_round_trip() {
        let e = random_excursion(33, 15);
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"t,v\n"));
        assert_eq!(Excursion::read_csv(&buf[..]).unwrap(), e);
    }

    #[test]
    fn ancestors_on_monotone_prefix() {
        let e = Excursion::tent(101, 1.0).unwrap();
        let t = RealTree::new(&e);
        assert_eq!(t.ancestors(30), (0..=30).collect::<Vec<_>>());
        assert_eq!(t.ancestors(0), vec![0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn decomposition_mass_is_lebesgue_measure(seed in 0u64..1000, t in 0.0f64..1.5) {
            let e = random_excursion(257, seed);
            let total: f64 = e.decompose_above_level(t).iter().map(|p| p.hi - p.lo).sum();
            // measure of {v > t} for the piecewise linear path, segment by segment
            let h = e.grid_step();
            let oracle: f64 = e.values().windows(2).map(|w| {
                let (a, b) = (w[0] - t, w[1] - t);
                if a > 0.0 && b > 0.0 { h }
                else if a <= 0.0 && b <= 0.0 { 0.0 }
                else { h * a.max(b) / (a - b).abs() }
            }).sum();
            prop_assert!((total - oracle).abs() < 1e-9);
        }

        #[test]
        fn persistence_count_matches_decomposition(seed in 0u64..1000, t in 0.0f64..1.2, eps in 0.01f64..0.3) {
            let e = random_excursion(257, seed);
            let from_pairs = e.persistence().iter().filter(|p| p.death <= t && t <= p.peak - eps).count();
            let from_scan = e.decompose_above_level(t).iter().filter(|s| s.height >= eps).count();
            prop_assert_eq!(from_pairs, from_scan);
        }

        #[test]
        fn ancestors_match_characterization(seed in 0u64..1000, t in 0usize..257) {
            let e = random_excursion(257, seed);
            let tree = RealTree::new(&e);
            let v = e.values();
            let brute: Vec<usize> = (0..=t)
                .filter(|&s| (tree.distance_between(s, t) - (v[t] - v[s])).abs() < 1e-12)
                .collect();
            prop_assert_eq!(tree.ancestors(t), brute);
        }
    }
}
