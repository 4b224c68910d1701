//! Ordered Galton-Watson trees conditioned on their size, and their
//! depth-first contour encodings.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::io::{parse_row, Csv};
use crate::{Error, Result};

/// Rooted ordered tree on vertices `0..n`, vertex 0 being the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedTree {
    parent: Vec<usize>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
}

impl OrderedTree {
    /// The single-vertex tree.
    pub fn singleton() -> Self {
        Self { parent: vec![0], children: vec![vec![]], depth: vec![0] }
    }

    /// Builds a tree from parent links; `parent[0]` is ignored (the root).
    /// Children are ordered by vertex index.
    pub fn from_parents(parent: &[usize]) -> Result<Self> {
        let n = parent.len();
        if n == 0 {
            return Err(Error::InvalidParameter("a tree needs a root".into()));
        }
        let mut children = vec![Vec::new(); n];
        for v in 1..n {
            if parent[v] >= n || parent[v] == v {
                return Err(Error::InvalidParameter(format!("bad parent {} of vertex {v}", parent[v])));
            }
            children[parent[v]].push(v);
        }
        let mut depth = vec![usize::MAX; n];
        depth[0] = 0;
        let mut stack = vec![0];
        let mut seen = 1;
        while let Some(u) = stack.pop() {
            for &c in &children[u] {
                depth[c] = depth[u] + 1;
                seen += 1;
                stack.push(c);
            }
        }
        if seen != n {
            return Err(Error::InvalidParameter("parent links contain a cycle".into()));
        }
        let mut parent = parent.to_vec();
        parent[0] = 0;
        Ok(Self { parent, children, depth })
    }

    /// Tree whose preorder offspring counts are `counts` (a Lukasiewicz word).
    pub fn from_offspring(counts: &[usize]) -> Result<Self> {
        let n = counts.len();
        if n == 0 || counts.iter().sum::<usize>() != n - 1 {
            return Err(Error::InvalidParameter("offspring counts must sum to n - 1".into()));
        }
        let mut parent = vec![0; n];
        let mut stack: Vec<(usize, usize)> = vec![(0, counts[0])];
        for (v, &c) in counts.iter().enumerate().skip(1) {
            while matches!(stack.last(), Some(&(_, 0))) {
                stack.pop();
            }
            let top = stack
                .last_mut()
                .ok_or_else(|| Error::InvalidParameter("offspring word ends early".into()))?;
            top.1 -= 1;
            parent[v] = top.0;
            stack.push((v, c));
        }
        Self::from_parents(&parent)
    }

    /// Rebuilds the tree from its contour depths (interior visits or the
    /// full tour with flat ends).
    pub fn from_contour(depths: &[u32]) -> Result<Self> {
        let mut d: &[u32] = depths;
        // strip the flat end steps of a full tour
        if d.len() >= 3 && d[0] == 0 && d[1] == 0 && d[d.len() - 1] == 0 && d[d.len() - 2] == 0 {
            d = &d[1..d.len() - 1];
        }
        if d.is_empty() || d[0] != 0 || d[d.len() - 1] != 0 || d.len() % 2 == 0 {
            return Err(Error::InvalidParameter("not a contour sequence".into()));
        }
        let mut parent = vec![0];
        let mut path = vec![0usize];
        for w in d.windows(2) {
            if w[1] == w[0] + 1 {
                let v = parent.len();
                parent.push(*path.last().unwrap());
                path.push(v);
            } else if w[1] + 1 == w[0] {
                path.pop();
            } else {
                return Err(Error::InvalidParameter("contour steps must be +-1".into()));
            }
        }
        Self::from_parents(&parent)
    }

    pub fn n(&self) -> usize {
        self.parent.len()
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

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.children[v].len() + usize::from(v != 0)
    }

    /// Position of `v` among its siblings.
    pub fn child_rank(&self, v: usize) -> usize {
        match self.parent(v) {
            None => 0,
            Some(p) => self.children[p].iter().position(|&c| c == v).unwrap(),
        }
    }

    /// Preorder offspring counts, a canonical key for the ordered shape.
    pub fn offspring_word(&self) -> Vec<usize> {
        self.preorder().iter().map(|&v| self.children[v].len()).collect()
    }

    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n());
        let mut stack = vec![0];
        while let Some(u) = stack.pop() {
            out.push(u);
            stack.extend(self.children[u].iter().rev());
        }
        out
    }

    /// Lowest common ancestor by climbing; fine for oracles and small trees.
    pub fn lca(&self, mut a: usize, mut b: usize) -> usize {
        while self.depth[a] > self.depth[b] {
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b];
        }
        while a != b {
            a = self.parent[a];
            b = self.parent[b];
        }
        a
    }

    pub fn distance(&self, a: usize, b: usize) -> usize {
        self.depth[a] + self.depth[b] - 2 * self.depth[self.lca(a, b)]
    }

    /// Vertices on the path from the root to `v`, root first.
    pub fn root_path(&self, mut v: usize) -> Vec<usize> {
        let mut out = vec![v];
        while v != 0 {
            v = self.parent[v];
            out.push(v);
        }
        out.reverse();
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = Csv::new(w, &["vertex", "parent", "child_rank"])?;
        for v in 0..self.n() {
            let parent = self.parent(v).map(|p| p.to_string()).unwrap_or_default();
            csv.row(&[v.to_string(), parent, self.child_rank(v).to_string()])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<(usize, Option<usize>, usize)> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let f = parse_row(&line, 3)?;
            let parent = if f[1].is_empty() { None } else { Some(parse_usize(&f[1])?) };
            rows.push((parse_usize(&f[0])?, parent, parse_usize(&f[2])?));
        }
        rows.sort_by_key(|r| r.0);
        // order siblings by rank, then relabel in preorder
        let n = rows.len();
        let mut kids: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for &(v, p, rank) in &rows {
            if let Some(p) = p {
                kids.get_mut(p).ok_or_else(|| Error::Parse(format!("parent {p} out of range")))?.push((rank, v));
            }
        }
        let mut counts_by_vertex = vec![0; n];
        for (p, k) in kids.iter_mut().enumerate() {
            k.sort_unstable();
            counts_by_vertex[p] = k.len();
        }
        let mut word = Vec::with_capacity(n);
        let mut stack = vec![0];
        while let Some(u) = stack.pop() {
            word.push(counts_by_vertex[u]);
            stack.extend(kids[u].iter().rev().map(|&(_, v)| v));
        }
        Self::from_offspring(&word)
    }
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Parse(format!("expected an integer, got {s:?}")))
}

/// Critical offspring law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum OffspringDist {
    /// `p_k = (1 - q) q^k`; critical only at `q = 1/2`.
    Geometric { q: f64 },
    /// Poisson with mean one.
    Poisson,
    /// Binomial `(m, p)` with `m p = 1`.
    Binomial { m: u32, p: f64 },
    /// Explicit probabilities `p_0, p_1, ...`.
    Table { probs: Vec<f64> },
}

impl OffspringDist {
    pub fn geometric(q: f64) -> Result<Self> {
        Self::Geometric { q }.validated()
    }

    pub fn poisson() -> Self {
        Self::Poisson
    }

    pub fn binomial(m: u32, p: f64) -> Result<Self> {
        Self::Binomial { m, p }.validated()
    }

    pub fn table(probs: Vec<f64>) -> Result<Self> {
        Self::Table { probs }.validated()
    }

    /// Checks criticality and finite positive variance.
    pub fn validated(self) -> Result<Self> {
        match &self {
            Self::Geometric { q } if !(*q > 0.0 && *q < 1.0) => {
                return Err(Error::InvalidOffspring(format!("geometric q = {q} not in (0, 1)")))
            }
            Self::Binomial { m, p } if *m < 2 || !(*p > 0.0 && *p < 1.0) => {
                return Err(Error::InvalidOffspring(format!("binomial ({m}, {p}) is degenerate")))
            }
            Self::Table { probs } => {
                if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidOffspring("table must be a probability vector".into()));
                }
            }
            _ => {}
        }
        if (self.mean() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidOffspring(format!("mean {} is not 1", self.mean())));
        }
        let var = self.variance();
        if !(var > 0.0 && var.is_finite()) {
            return Err(Error::InvalidOffspring(format!("variance {var} is not in (0, inf)")));
        }
        Ok(self)
    }

    pub fn pmf(&self, k: usize) -> f64 {
        match self {
            Self::Geometric { q } => (1.0 - q) * q.powi(k as i32),
            Self::Poisson => (-1.0f64).exp() / factorial(k),
            Self::Binomial { m, p } => {
                let m = *m as usize;
                if k > m { 0.0 } else { binom(m, k) * p.powi(k as i32) * (1.0 - p).powi((m - k) as i32) }
            }
            Self::Table { probs } => probs.get(k).copied().unwrap_or(0.0),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Geometric { q } => q / (1.0 - q),
            Self::Poisson => 1.0,
            Self::Binomial { m, p } => *m as f64 * p,
            Self::Table { probs } => probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum(),
        }
    }

    /// `sigma_Z^2`.
    pub fn variance(&self) -> f64 {
        match self {
            Self::Geometric { q } => q / (1.0 - q).powi(2),
            Self::Poisson => 1.0,
            Self::Binomial { m, p } => *m as f64 * p * (1.0 - p),
            Self::Table { probs } => {
                let mean = self.mean();
                probs.iter().enumerate().map(|(k, p)| (k as f64 - mean).powi(2) * p).sum()
            }
        }
    }

    /// Whether `n` i.i.d. draws can sum to `n - 1`.
    fn size_feasible(&self, n: usize) -> bool {
        match self {
            Self::Table { probs } => {
                // fewest nonzero parts needed to write each total
                let target = n - 1;
                let support: Vec<usize> = (1..probs.len()).filter(|&k| probs[k] > 0.0).collect();
                if probs[0] <= 0.0 && target != 0 {
                    // every vertex needs a positive count, impossible for a finite tree
                    return false;
                }
                let mut parts = vec![usize::MAX; target + 1];
                parts[0] = 0;
                for s in 1..=target {
                    for &k in &support {
                        if k <= s && parts[s - k] != usize::MAX {
                            parts[s] = parts[s].min(parts[s - k] + 1);
                        }
                    }
                }
                parts[target] <= n
            }
            _ => true,
        }
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn binom(m: usize, k: usize) -> f64 {
    (0..k).map(|i| (m - i) as f64 / (i + 1) as f64).product()
}

/// Offspring counts of `n` i.i.d. draws conditioned to sum to `n - 1`.
fn conditioned_counts<R: Rng + ?Sized>(n: usize, dist: &OffspringDist, rng: &mut R) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; n];
    match dist {
        OffspringDist::Poisson => {
            // i.i.d. Poissons given their sum are multinomial
            for _ in 0..n - 1 {
                counts[rng.random_range(0..n)] += 1;
            }
        }
        OffspringDist::Geometric { .. } => {
            // i.i.d. geometrics given their sum are uniform over compositions
            let mut symbols: Vec<bool> = (0..2 * n - 2).map(|i| i < n - 1).collect();
            symbols.shuffle(rng);
            let mut box_ = 0;
            for is_bar in symbols {
                if is_bar { box_ += 1 } else { counts[box_] += 1 }
            }
        }
        OffspringDist::Binomial { m, .. } => {
            // i.i.d. binomials given their sum: successes uniform over the n m trials
            let m = *m as usize;
            for pos in rand::seq::index::sample(rng, n * m, n - 1) {
                counts[pos / m] += 1;
            }
        }
        OffspringDist::Table { probs } => {
            let cdf: Vec<f64> = probs
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect();
            const MAX_ATTEMPTS: usize = 10_000_000;
            for _ in 0..MAX_ATTEMPTS {
                let mut sum = 0;
                for c in counts.iter_mut() {
                    let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
                    *c = cdf.partition_point(|x| *x <= u).min(cdf.len() - 1);
                    sum += *c;
                }
                if sum == n - 1 {
                    return Ok(counts);
                }
            }
            return Err(Error::Conditioning(format!("no size-{n} tree after {MAX_ATTEMPTS} attempts")));
        }
    }
    Ok(counts)
}

/// The unique cyclic shift of `counts` that is a Lukasiewicz word.
pub fn cycle_lemma_rotation(counts: &[usize]) -> Vec<usize> {
    let n = counts.len();
    let mut s: i64 = 0;
    let mut best = i64::MAX;
    let mut arg = n;
    for (k, &c) in counts.iter().enumerate() {
        s += c as i64 - 1;
        // first index reaching the minimum
        if s < best {
            best = s;
            arg = k + 1;
        }
    }
    let start = arg % n;
    (0..n).map(|i| counts[(start + i) % n]).collect()
}

/// Ordered GW tree with offspring law `dist` conditioned on `n` vertices.
pub fn sample_conditioned_gw<R: Rng + ?Sized>(n: usize, dist: &OffspringDist, rng: &mut R) -> Result<OrderedTree> {
    if n == 0 {
        return Err(Error::InvalidParameter("tree size must be at least 1".into()));
    }
    if n == 1 {
        if dist.pmf(0) > 0.0 {
            return Ok(OrderedTree::singleton());
        }
        return Err(Error::Conditioning("a leaf has probability zero".into()));
    }
    if !dist.size_feasible(n) {
        return Err(Error::Conditioning(format!("no tree with {n} vertices under this offspring law")));
    }
    let counts = conditioned_counts(n, dist, rng)?;
    OrderedTree::from_offspring(&cycle_lemma_rotation(&counts))
}

/// Contour of an ordered tree on the grid `k = 0..2n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteTour {
    /// Vertex visited at step `k`; the root at `k = 0` and `k = 2n`.
    pub visits: Vec<usize>,
    /// Depth of the visited vertex.
    pub depths: Vec<u32>,
}

/// Depth-first contour `V~_n(k)`, `k = 0..2n`, with `V~_n(0) = V~_n(2n)` the root.
///
/// The interior visits `k = 1..2n-1` are the `2n - 1` vertices of the planar
/// contour, so the two end steps are flat.
pub fn dfs_tour(tree: &OrderedTree) -> DiscreteTour {
    let n = tree.n();
    let mut visits = Vec::with_capacity(2 * n + 1);
    visits.push(0);
    // (vertex, next child slot)
    let mut stack = vec![(0usize, 0usize)];
    visits.push(0);
    while let Some(top) = stack.last_mut() {
        let (u, next) = *top;
        if next < tree.children(u).len() {
            let c = tree.children(u)[next];
            top.1 += 1;
            stack.push((c, 0));
            visits.push(c);
        } else {
            stack.pop();
            if let Some(&(p, _)) = stack.last() {
                visits.push(p);
            }
        }
    }
    visits.push(0);
    let depths = visits.iter().map(|&v| tree.depth(v) as u32).collect();
    DiscreteTour { visits, depths }
}

impl DiscreteTour {
    /// Number of vertices of the toured tree.
    pub fn n(&self) -> usize {
        (self.visits.len() - 1) / 2
    }

    /// Grid index `2n alpha_n(t)`: the neighbouring grid point of larger depth
    /// (the left one on ties).
    pub fn alpha_index(&self, t: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfRange(t, 1.0));
        }
        let two_n = (2 * self.n()) as f64;
        let x = two_n * t;
        let (lo, hi) = (x.floor() as usize, x.ceil() as usize);
        Ok(if self.depths[lo] >= self.depths[hi] { lo } else { hi })
    }

    pub fn alpha_n(&self, t: f64) -> Result<f64> {
        Ok(self.alpha_index(t)? as f64 / (2 * self.n()) as f64)
    }

    /// `V~_n(2n alpha_n(u))`, uniform on vertices when `u` is uniform.
    pub fn uniform_vertex(&self, u: f64) -> Result<usize> {
        Ok(self.visits[self.alpha_index(u)?])
    }

    /// Number of grid cells `[k, k+1] / 2n` that `alpha_n` sends to each vertex,
    /// so the exact pushforward mass of vertex `v` is `cells[v] / 2n`.
    pub fn pushforward_cells(&self) -> Vec<u64> {
        let mut cells = vec![0u64; self.n()];
        for k in 0..self.visits.len() - 1 {
            let j = if self.depths[k] >= self.depths[k + 1] { k } else { k + 1 };
            cells[self.visits[j]] += 1;
        }
        cells
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = Csv::new(w, &["k", "vertex", "depth"])?;
        for (k, (v, d)) in self.visits.iter().zip(&self.depths).enumerate() {
            csv.row(&[k.to_string(), v.to_string(), d.to_string()])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats::chi_square;
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::HashMap;

    fn path3() -> OrderedTree {
        OrderedTree::from_parents(&[0, 0, 1]).unwrap()
    }

    /// All Lukasiewicz words of length n.
    fn words(n: usize) -> Vec<Vec<usize>> {
        fn rec(prefix: &mut Vec<usize>, open: i64, n: usize, out: &mut Vec<Vec<usize>>) {
            if prefix.len() == n {
                if open == 0 {
                    out.push(prefix.clone());
                }
                return;
            }
            if open <= 0 {
                return;
            }
            for c in 0..n {
                prefix.push(c);
                rec(prefix, open - 1 + c as i64, n, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), 1, n, &mut out);
        out
    }

    #[test]
    fn offspring_validation() {
        assert!(OffspringDist::geometric(0.5).is_ok());
        assert!(OffspringDist::geometric(0.4).is_err());
        assert!(OffspringDist::binomial(4, 0.25).is_ok());
        assert!(OffspringDist::binomial(4, 0.3).is_err());
        assert!(OffspringDist::table(vec![0.5, 0.0, 0.5]).is_ok());
        assert!(OffspringDist::table(vec![0.0, 1.0]).is_err());
        assert!((OffspringDist::geometric(0.5).unwrap().variance() - 2.0).abs() < 1e-12);
        assert!((OffspringDist::poisson().pmf(2) - 0.5 / std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn small_sizes() {
        let g = OffspringDist::geometric(0.5).unwrap();
        let mut rng = stream(30, 0);
        assert_eq!(sample_conditioned_gw(1, &g, &mut rng).unwrap().n(), 1);
        for _ in 0..20 {
            assert_eq!(sample_conditioned_gw(2, &g, &mut rng).unwrap().offspring_word(), vec![1, 0]);
        }
        let parity = OffspringDist::table(vec![0.5, 0.0, 0.5]).unwrap();
        assert!(matches!(sample_conditioned_gw(4, &parity, &mut rng), Err(Error::Conditioning(_))));
        assert_eq!(sample_conditioned_gw(5, &parity, &mut rng).unwrap().n(), 5);
    }

    #[test]
    fn shape_frequencies_match_enumeration() {
        let dists = [
            OffspringDist::geometric(0.5).unwrap(),
            OffspringDist::poisson(),
            OffspringDist::binomial(3, 1.0 / 3.0).unwrap(),
            OffspringDist::table(vec![0.3, 0.45, 0.2, 0.05]).unwrap(),
        ];
        for (di, dist) in dists.iter().enumerate() {
            for n in 2..=5 {
                let shapes: Vec<Vec<usize>> =
                    words(n).into_iter().filter(|w| w.iter().all(|&c| dist.pmf(c) > 0.0)).collect();
                let weights: Vec<f64> = shapes.iter().map(|w| w.iter().map(|&c| dist.pmf(c)).product()).collect();
                let index: HashMap<Vec<usize>, usize> =
                    shapes.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
                let mut counts = vec![0usize; shapes.len()];
                let mut rng = stream(31, (di * 10 + n) as u64);
                for _ in 0..100_000 {
                    let t = sample_conditioned_gw(n, dist, &mut rng).unwrap();
                    counts[index[&t.offspring_word()]] += 1;
                }
                let (_, p) = chi_square(&counts, &weights).unwrap();
                assert!(p > 0.01 || shapes.len() == 1, "dist {di} n {n} p {p}");
            }
        }
    }

    #[test]
    fn size_three_geometric_is_fair_between_path_and_cherry() {
        let g = OffspringDist::geometric(0.5).unwrap();
        let mut rng = stream(32, 0);
        let mut path = 0;
        let reps = 100_000;
        for _ in 0..reps {
            if sample_conditioned_gw(3, &g, &mut rng).unwrap().offspring_word() == vec![1, 1, 0] {
                path += 1;
            }
        }
        let (_, p) = chi_square(&[path, reps - path], &[0.5, 0.5]).unwrap();
        assert!(p > 0.01);
    }

    #[test]
    fn hand_contours() {
        let t = dfs_tour(&path3());
        assert_eq!(t.depths, vec![0, 0, 1, 2, 1, 0, 0]);
        assert_eq!(t.visits, vec![0, 0, 1, 2, 1, 0, 0]);
        let star = OrderedTree::from_parents(&[0, 0, 0]).unwrap();
        assert_eq!(dfs_tour(&star).depths[1..6], [0, 1, 0, 1, 0]);
        let single = dfs_tour(&OrderedTree::singleton());
        assert_eq!(single.visits, vec![0, 0, 0]);
    }

    #[test]
    fn alpha_examples() {
        let tour = dfs_tour(&path3());
        for k in 0..=6 {
            let t = k as f64 / 6.0;
            assert!((tour.alpha_n(t).unwrap() - t).abs() < 1e-15);
        }
        assert!(tour.alpha_n(1.5).is_err());
        // exact partition for path-3: every vertex gets two of the six cells
        assert_eq!(tour.pushforward_cells(), vec![2, 2, 2]);
        assert_eq!(dfs_tour(&OrderedTree::singleton()).uniform_vertex(0.3).unwrap(), 0);
    }

    #[test]
    fn uniform_vertex_chi_square() {
        let mut rng = stream(33, 0);
        let tree = sample_conditioned_gw(100, &OffspringDist::poisson(), &mut rng).unwrap();
        let tour = dfs_tour(&tree);
        let mut counts = vec![0usize; 100];
        for _ in 0..100_000 {
            counts[tour.uniform_vertex(rng.random()).unwrap()] += 1;
        }
        assert!(chi_square(&counts, &[1.0; 100]).unwrap().1 > 0.01);
    }

    #[test]
    fn csv_round_trip() {
        let mut rng = stream(34, 0);
        let tree = sample_conditioned_gw(40, &OffspringDist::poisson(), &mut rng).unwrap();
        let mut buf = Vec::new();
        tree.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("vertex,parent,child_rank\n0,,0\n"));
        assert_eq!(OrderedTree::read_csv(&buf[..]).unwrap(), tree);
        let mut buf = Vec::new();
        dfs_tour(&tree).write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2 * 40 + 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(60))]
        #[test]
        fn tour_invariants(seed in 0u64..10_000, n in 1usize..60) {
            let tree = sample_conditioned_gw(n, &OffspringDist::geometric(0.5).unwrap(), &mut stream(seed, 0)).unwrap();
            let tour = dfs_tour(&tree);
            prop_assert_eq!(tour.visits.len(), 2 * n + 1);
            let unit_steps = tour.depths.windows(2).filter(|w| w[0].abs_diff(w[1]) == 1).count();
            prop_assert_eq!(unit_steps, 2 * (n - 1));
            let mut seen = vec![0usize; n];
            for &v in &tour.visits[1..2 * n] {
                seen[v] += 1;
            }
            for v in 1..n {
                prop_assert_eq!(seen[v], 1 + tree.children(v).len());
            }
            // discrete form of the excursion metric
            for i in 1..2 * n {
                for j in i..2 * n {
                    let m = *tour.depths[i..=j].iter().min().unwrap();
                    let d = tour.depths[i] + tour.depths[j] - 2 * m;
                    prop_assert_eq!(d as usize, tree.distance(tour.visits[i], tour.visits[j]));
                }
            }
            prop_assert_eq!(OrderedTree::from_contour(&tour.depths).unwrap(), tree.clone());
            // alpha_n pushes Lebesgue measure to the uniform law exactly
            prop_assert!(tour.pushforward_cells().iter().all(|&c| c == 2));
        }

        #[test]
        fn alpha_is_within_half_cell(seed in 0u64..1000, t in 0.0f64..=1.0) {
            let tree = sample_conditioned_gw(30, &OffspringDist::poisson(), &mut stream(seed, 0)).unwrap();
            let tour = dfs_tour(&tree);
            prop_assert!((t - tour.alpha_n(t).unwrap()).abs() <= 1.0 / 60.0 + 1e-15);
        }

        #[test]
        fn cycle_lemma_gives_valid_word(counts in prop::collection::vec(0usize..4, 1..30)) {
            // force the sum to n - 1 by trimming the largest entries
            let mut c = counts.clone();
            let n = c.len();
            while c.iter().sum::<usize>() > n - 1 {
                let i = (0..n).max_by_key(|&i| c[i]).unwrap();
                c[i] -= 1;
            }
            while c.iter().sum::<usize>() < n - 1 {
                c[0] += 1;
            }
            let w = cycle_lemma_rotation(&c);
            prop_assert!(OrderedTree::from_offspring(&w).is_ok());
        }
    }
}
