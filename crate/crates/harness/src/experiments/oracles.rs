//! Small instances checked against exhaustive enumeration and exact
//! linear algebra.

use std::io::Write;

use rand::Rng;
use spatial_trees::excursion::RealTree;
use spatial_trees::gw::{cycle_lemma_rotation, dfs_tour, sample_conditioned_gw, OffspringDist, OrderedTree};
use spatial_trees::rmq::RangeMin;
use spatial_trees::rng::substream;
use spatial_trees::walks::{return_probability, ReturnMode};

use crate::config::{ExperimentConfig, Kind, Param};
use crate::report::Sink;

pub(crate) const PARAMS: &[Param] = &[
    Param::new("arrays", "300", Kind::Int { min: 1 }, "random small paths for the range-minimum and branch-point checks"),
    Param::new("max_len", "14", Kind::Int { min: 2 }, "longest random path"),
    Param::new("max_tree", "6", Kind::Int { min: 1 }, "plane trees are enumerated up to this many vertices"),
    Param::new("walk_trees", "40", Kind::Int { min: 1 }, "random trees for exact return probabilities"),
    Param::new("walk_n", "50", Kind::Int { min: 1 }, "largest tree for exact return probabilities"),
    Param::new("tol", "1e-9", Kind::Float { positive: true }, "absolute tolerance of return probabilities"),
];

/// Mismatch counts per family of checks.
#[derive(Default)]
struct Tally {
    rows: Vec<(&'static str, usize, usize)>,
}

impl Tally {
    fn add(&mut self, name: &'static str, checks: usize, bad: usize) {
        self.rows.push((name, checks, bad));
    }
}

pub(crate) fn oracle_batch(cfg: &ExperimentConfig, sink: &mut Sink) -> anyhow::Result<()> {
    let mut rng = substream(cfg.seed, 0, 0);
    let mut tally = Tally::default();
    let (arrays, max_len) = (cfg.usize("arrays")?, cfg.usize("max_len")?);

    // range minima and branch points of small integer paths with many ties
    let (mut rmq_checks, mut rmq_bad, mut br_checks, mut br_bad) = (0, 0, 0, 0);
    for _ in 0..arrays {
        let len = rng.random_range(2..=max_len);
        let mut v: Vec<f64> = (0..len).map(|_| rng.random_range(0..4) as f64).collect();
        let rm = RangeMin::new(&v);
        for i in 0..len {
            for j in i..len {
                let scan = v[i..=j].iter().copied().fold(f64::INFINITY, f64::min);
                let a = rm.argmin(j, i);
                rmq_checks += 1;
                if rm.min(i, j) != scan || !(i..=j).contains(&a) || v[a] != scan {
                    rmq_bad += 1;
                }
            }
        }
        v[0] = 0.0;
        v[len - 1] = 0.0;
        let tree = RealTree::from_path(&v, 1.0)?;
        let m = |i: usize, j: usize| v[i.min(j)..=i.max(j)].iter().copied().fold(f64::INFINITY, f64::min);
        let dist = |i: usize, j: usize| v[i] + v[j] - 2.0 * m(i, j);
        for i in 0..len {
            for j in 0..len {
                for k in 0..len {
                    let b = tree.branch_between(i, j, k);
                    let depth = m(i, j).max(m(j, k)).max(m(i, k));
                    // the branch point lies on all three arcs
                    let on_arcs = [(i, j), (j, k), (i, k)]
                        .iter()
                        .all(|&(x, y)| dist(x, b.index) + dist(b.index, y) == dist(x, y));
                    br_checks += 1;
                    if b.depth != depth || !on_arcs {
                        br_bad += 1;
                    }
                }
            }
        }
    }
    tally.add("range_min", rmq_checks, rmq_bad);
    tally.add("branch_point", br_checks, br_bad);

    // every plane tree with up to max_tree vertices
    let (mut enum_checks, mut enum_bad) = (0, 0);
    let (mut rot_checks, mut rot_bad) = (0, 0);
    for n in 1..=cfg.usize("max_tree")? {
        let words = compositions(n, n - 1);
        let valid: Vec<&Vec<usize>> = words.iter().filter(|w| is_lukasiewicz(w)).collect();
        enum_checks += 1;
        if valid.len() as u64 != catalan(n - 1) {
            enum_bad += 1;
        }
        for w in &valid {
            enum_checks += 1;
            let tree = OrderedTree::from_offspring(w)?;
            let tour = dfs_tour(&tree);
            let back = OrderedTree::from_contour(&tour.depths)?;
            let cells = tour.pushforward_cells();
            let ok = tree.offspring_word() == **w
                && back.offspring_word() == **w
                && tour.depths.len() == 2 * n + 1
                && cells.iter().all(|&c| c == 2);
            if !ok {
                enum_bad += 1;
            }
        }
        // each composition rotates to a valid word, and every valid word
        // is reached from exactly its n rotations
        let mut hits = std::collections::BTreeMap::new();
        for w in &words {
            let r = cycle_lemma_rotation(w);
            rot_checks += 1;
            if !is_lukasiewicz(&r) || !is_rotation(w, &r) {
                rot_bad += 1;
            }
            *hits.entry(r).or_insert(0usize) += 1;
        }
        rot_checks += 1;
        if hits.len() != valid.len() || hits.values().any(|&c| c != n) {
            rot_bad += 1;
        }
    }
    tally.add("plane_trees", enum_checks, enum_bad);
    tally.add("cycle_lemma", rot_checks, rot_bad);

    // exact return probabilities against dense matrix powers
    let tol = cfg.f64("tol")?;
    let (mut ret_checks, mut ret_bad) = (0, 0);
    let ms = [1usize, 2, 3, 5, 8, 13, 21];
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.usize("walk_trees")? {
        let n = rng.random_range(2..=cfg.usize("walk_n")?.max(2));
        let tree = sample_conditioned_gw(n, &OffspringDist::Poisson, &mut rng)?;
        let start = rng.random_range(0..n);
        let got = return_probability(&tree, start, &ms, ReturnMode::Exact, &mut rng)?;
        let want = dense_returns(&tree, start, &ms);
        for (g, w) in got.iter().zip(&want) {
            ret_checks += 1;
            worst = worst.max((g - w).abs());
            if (g - w).abs() > tol {
                ret_bad += 1;
            }
        }
    }
    tally.add("return_probability", ret_checks, ret_bad);
    sink.info("return_max_abs_err", worst);

    let bad: usize = tally.rows.iter().map(|r| r.2).sum();
    for (name, checks, b) in &tally.rows {
        sink.info(&format!("{name}_checks"), *checks as f64);
        sink.info(&format!("{name}_mismatches"), *b as f64);
    }
    sink.metric("mismatches", bad as f64, "== 0", bad == 0);
    sink.file("oracles.csv", |w| {
        writeln!(w, "family,checks,mismatches")?;
        for (name, checks, b) in &tally.rows {
            writeln!(w, "{name},{checks},{b}")?;
        }
        Ok(())
    })
}

/// All sequences of `len` nonnegative integers summing to `total`.
fn compositions(len: usize, total: usize) -> Vec<Vec<usize>> {
    if len == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(len - 1, total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Partial sums of `c - 1` stay nonnegative until the last letter.
fn is_lukasiewicz(w: &[usize]) -> bool {
    let mut s: i64 = 0;
    for (k, &c) in w.iter().enumerate() {
        s += c as i64 - 1;
        if s < 0 && k + 1 < w.len() {
            return false;
        }
    }
    s == -1
}

fn is_rotation(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len() && (0..a.len()).any(|s| (0..a.len()).all(|i| a[(s + i) % a.len()] == b[i]))
}

fn catalan(k: usize) -> u64 {
    (0..k).fold(1u64, |c, i| c * 2 * (2 * i as u64 + 1) / (i as u64 + 2))
}

/// `P(X_{2m} = start)` from powers of the dense transition matrix.
fn dense_returns(tree: &OrderedTree, start: usize, ms: &[usize]) -> Vec<f64> {
    let n = tree.n();
    let mut p = vec![vec![0.0; n]; n];
    for v in 1..n {
        let u = tree.parent(v).unwrap();
        p[u][v] = 1.0;
        p[v][u] = 1.0;
    }
    for row in p.iter_mut() {
        let d: f64 = row.iter().sum();
        if d > 0.0 {
            row.iter_mut().for_each(|x| *x /= d);
        }
    }
    let two = mat_mul(&p, &p);
    let mut power = identity(n);
    let mut done = 0;
    let mut out = Vec::new();
    for &m in ms {
        while done < m {
            power = mat_mul(&power, &two);
            done += 1;
        }
        out.push(power[start][start]);
    }
    out
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect()
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] != 0.0 {
                for j in 0..n {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_helpers() {
        assert_eq!(compositions(3, 2).len(), 6);
        assert_eq!((0..6).map(catalan).collect::<Vec<_>>(), vec![1, 1, 2, 5, 14, 42]);
        assert!(is_lukasiewicz(&[2, 0, 0]));
        assert!(!is_lukasiewicz(&[0, 2, 0]));
        assert!(is_rotation(&[0, 2, 0], &[2, 0, 0]));
    }
}
