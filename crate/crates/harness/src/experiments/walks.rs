//! Random walks on trees and Brownian motion on metric trees.

use std::io::Write;

use rand::seq::index::sample;
use spatial_trees::embedding::{embed_brw, normalized_tour, scaling_constants, StepDist};
use spatial_trees::gw::{dfs_tour, sample_conditioned_gw, OffspringDist};
use spatial_trees::io::Csv;
use spatial_trees::reduced::{d0, random_binary_tree, reduce_coded, reduce_discrete};
use spatial_trees::rng::substream;
use spatial_trees::stats::{ks_two_sample, linfit_loglog, mean_se};
use spatial_trees::walks::{green_occupation, hit_first_probability, Occupation, SubdividedTree, WalkGraph};

use super::replicas;
use crate::config::{ExperimentConfig, Kind, Param};
use crate::report::Sink;

const INT1: Kind = Kind::Int { min: 1 };
const INT2: Kind = Kind::Int { min: 2 };
const POS: Kind = Kind::Float { positive: true };

pub(crate) const BM_PARAMS: &[Param] = &[
    Param::new("leaves", "5", Kind::Int { min: 3 }, "leaves of the random binary tree"),
    Param::new("edge_min", "0.5", POS, "edge lengths are uniform on [edge_min, edge_max)"),
    Param::new("edge_max", "1.5", POS, "edge lengths are uniform on [edge_min, edge_max)"),
    Param::new("h_divisor", "50", POS, "subdivision step is the shortest edge over this"),
    Param::new("replicas", "100000", INT2, "runs for each of the two checks"),
    Param::new("se_mult", "3", POS, "allowed deviation of the hitting frequency in standard errors"),
    Param::new("time_tol", "0.05", POS, "allowed relative error of the mean time before hitting"),
];

/// On one random weighted tree with leaves `a, b, c`: the frequency of
/// hitting `b` before `c` from `a`, and the mean time from `a` to `b`
/// against the integrated Green density.
pub(crate) fn bm_properties(cfg: &ExperimentConfig, sink: &mut Sink) -> anyhow::Result<()> {
    let reps = cfg.usize("replicas")?;
    let mut rng = substream(cfg.seed, 0, 0);
    let tree = random_binary_tree(cfg.usize("leaves")?, cfg.f64("edge_min")?, cfg.f64("edge_max")?, &mut rng)?;
    let leaves = tree.leaves();
    let pick = sample(&mut rng, leaves.len(), 3);
    let (a, b, c) = (leaves[pick.index(0)], leaves[pick.index(1)], leaves[pick.index(2)]);
    let min_edge = tree.lengths().iter().copied().fold(f64::INFINITY, f64::min);
    let sub = SubdividedTree::new(&tree, min_edge / cfg.f64("h_divisor")?)?;
    let nv = tree.vertex_count();
    let max_moves = u64::MAX;

    let mut stop = vec![false; nv];
    stop[b] = true;
    stop[c] = true;
    let hits = replicas(cfg.seed, 1, reps, |_, rng| {
        let (v, _) = sub.run_until_hit(a, &stop, max_moves, None, rng).expect("unbounded run hits");
        Ok(f64::from(u8::from(v == b)))
    })?;
    let (freq, se) = mean_se(&hits);
    let p = hit_first_probability(&tree, a, b, c);
    let k = cfg.f64("se_mult")?;
    let z = (freq - p).abs() / se;
    sink.metric("hit_first_z", z, format!("<= {k}"), z <= k);
    sink.info("hit_first_exact", p);
    sink.info("hit_first_observed", freq);

    let mut target = vec![false; nv];
    target[b] = true;
    let runs = replicas(cfg.seed, 2, reps, |_, rng| {
        let mut occ = Occupation::new(nv);
        sub.run_until_hit(a, &target, max_moves, Some(&mut occ), rng).expect("unbounded run hits");
        Ok(occ)
    })?;
    let green = green_occupation(&tree, a, b);
    let expected: f64 = green.iter().sum();
    let times: Vec<f64> = runs.iter().map(Occupation::total).collect();
    let (mean_t, se_t) = mean_se(&times);
    let rel = (mean_t / expected - 1.0).abs();
    let tol = cfg.f64("time_tol")?;
    sink.metric("mean_time_rel_err", rel, format!("<= {tol}"), rel <= tol);
    sink.info("mean_time", mean_t);
    sink.info("mean_time_se", se_t);
    sink.info("green_total", expected);
    let mut edge_dev: f64 = 0.0;
    let per_edge: Vec<f64> = (1..nv).map(|e| runs.iter().map(|o| o.edge_time[e]).sum::<f64>() / reps as f64).collect();
    for e in 1..nv {
        if green[e] > 0.0 {
            edge_dev = edge_dev.max((per_edge[e - 1] / green[e] - 1.0).abs());
        }
    }
    sink.info("max_edge_rel_dev", edge_dev);
    sink.info("h", sub.h());

    sink.file("tree.json", |w| Ok(write!(w, "{}", tree.to_json()?)?))?;
    sink.file("occupation.csv", |w| {
        let mut csv = Csv::new(w, &["edge", "length", "green", "observed"])?;
        for e in 1..nv {
            csv.floats(&[e as f64, tree.edge_length(e), green[e], per_edge[e - 1]])?;
        }
        Ok(())
    })
}

pub(crate) const SPECTRAL_PARAMS: &[Param] = &[
    Param::new("n", "20000", INT2, "tree size"),
    Param::new("replicas", "500", INT1, "trees"),
    Param::new("walks", "200", INT1, "walks from the root per tree"),
    Param::new("m_min", "100", INT1, "smallest half step count"),
    Param::new("m_max", "10000", INT1, "largest half step count"),
    Param::new("points", "9", INT2, "log-spaced values of m"),
    Param::new("offspring", "poisson", Kind::Offspring, "offspring law"),
    Param::new("slope_tol", "0.07", POS, "allowed deviation of the slope from -2/3"),
];

/// Pooled `P(X_{2m} = root)` over trees and walks, fitted on a log-log scale.
pub(crate) fn spectral_dim(cfg: &ExperimentConfig, sink: &mut Sink) -> anyhow::Result<()> {
    let (n, walks, points) = (cfg.usize("n")?, cfg.usize("walks")?, cfg.usize("points")?);
    let (lo, hi) = (cfg.f64("m_min")?.ln(), cfg.f64("m_max")?.ln());
    let mut ms: Vec<usize> =
        (0..points).map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp().round() as usize).collect();
    ms.dedup();
    let steps: Vec<usize> = ms.iter().map(|m| 2 * m).collect();
    let dist = cfg.offspring("offspring")?;
    let per_tree = replicas(cfg.seed, 0, cfg.usize("replicas")?, |_, rng| {
        let tree = sample_conditioned_gw(n, &dist, rng)?;
        Ok(WalkGraph::from_tree(&tree).return_counts(0, &steps, walks, rng))
    })?;
    let total = (per_tree.len() * walks) as f64;
    let probs: Vec<f64> =
        (0..ms.len()).map(|i| per_tree.iter().map(|c| c[i]).sum::<u64>() as f64 / total).collect();
    let xs: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    let fit = linfit_loglog(&xs, &probs)?;
    let tol = cfg.f64("slope_tol")?;
    let target = -2.0 / 3.0;
    sink.metric("slope", fit.slope, format!("in -2/3 +- {tol}"), (fit.slope - target).abs() <= tol);
    sink.info("r_squared", fit.r_squared);
    sink.file("returns.csv", |w| {
        let mut csv = Csv::new(w, &["m", "p"])?;
        for (x, p) in xs.iter().zip(&probs) {
            csv.floats(&[*x, *p])?;
        }
        Ok(())
    })
}

pub(crate) const SCALING_PARAMS: &[Param] = &[
    Param::new("replicas", "2000", INT2, "independent (tree, walk) pairs per sample"),
    Param::new("n_small", "2000", INT2, "smaller tree size of the self-consistency check"),
    Param::new("n", "8000", INT2, "tree size"),
    Param::new("t", "1", POS, "rescaled time of configuration A"),
    Param::new("offspring_a", "poisson", Kind::Offspring, "offspring law of configuration A"),
    Param::new("step_a", "gaussian:3:1", Kind::Step, "step law of configuration A"),
    Param::new("offspring_b", "geometric:0.5", Kind::Offspring, "offspring law of configuration B"),
    Param::new("step_b", "rademacher:3", Kind::Step, "step law of configuration B"),
    Param::new("alpha", "0.01", POS, "KS rejection level"),
];

/// `|Sigma_phi^{-1} n^{-1/4} phi_n(X_{t n^{3/2}})|` for independent trees
/// and walks from the root.
fn scaled_norms(
    seed: u64,
    lane: u64,
    reps: usize,
    n: usize,
    t: f64,
    dist: &OffspringDist,
    step: &StepDist,
) -> anyhow::Result<Vec<f64>> {
    let inv = scaling_constants(dist, step)?
        .sigma_phi
        .try_inverse()
        .ok_or_else(|| anyhow::anyhow!("Sigma_phi is singular"))?;
    replicas(seed, lane, reps, |_, rng| {
        let tree = sample_conditioned_gw(n, dist, rng)?;
        let emb = embed_brw(&tree, step, rng)?;
        let x = spatial_trees::walks::rescaled_walk_observable(&tree, &emb, &[t], rng)?.remove(0);
        let d = x.len();
        let y: Vec<f64> = (0..d).map(|i| (0..d).map(|j| inv[(i, j)] * x[j]).sum()).collect();
        Ok(y.iter().map(|v| v * v).sum::<f64>().sqrt())
    })
}

/// Self-consistency compares configuration A at two sizes; universality
/// compares A and B at times that correspond to the same limit time, since
/// the walk on `sigma_T T_e` at time `t` is the walk on `T_e` at `t / sigma_T`.
pub(crate) fn walk_scaling(cfg: &ExperimentConfig, sink: &mut Sink) -> anyhow::Result<()> {
    let (reps, n, n_small, t, alpha) =
        (cfg.usize("replicas")?, cfg.usize("n")?, cfg.usize("n_small")?, cfg.f64("t")?, cfg.f64("alpha")?);
    let (da, sa) = (cfg.offspring("offspring_a")?, cfg.step("step_a")?);
    let (db, sb) = (cfg.offspring("offspring_b")?, cfg.step("step_b")?);
    anyhow::ensure!(sa.dim() == sb.dim(), "both step laws must live in the same dimension");
    let t_b = t * scaling_constants(&db, &sb)?.sigma_t / scaling_constants(&da, &sa)?.sigma_t;
    let small = scaled_norms(cfg.seed, 0, reps, n_small, t, &da, &sa)?;
    let big = scaled_norms(cfg.seed, 1, reps, n, t, &da, &sa)?;
    let other = scaled_norms(cfg.seed, 2, reps, n, t_b, &db, &sb)?;
    let self_ks = ks_two_sample(&small, &big)?;
    let univ_ks = ks_two_sample(&big, &other)?;
    sink.metric("self_consistency_p", self_ks.p_value, format!(">= {alpha}"), self_ks.p_value >= alpha);
    sink.metric("universality_p", univ_ks.p_value, format!(">= {alpha}"), univ_ks.p_value >= alpha);
    sink.info("t_b", t_b);
    sink.info("mean_norm_small", mean_se(&small).0);
    sink.info("mean_norm_a", mean_se(&big).0);
    sink.info("mean_norm_b", mean_se(&other).0);
    sink.file("norms.csv", |w| {
        let mut csv = Csv::new(w, &["a_small", "a", "b"])?;
        for i in 0..reps {
            csv.floats(&[small[i], big[i], other[i]])?;
        }
        Ok(())
    })
}

pub(crate) const REDUCED_PARAMS: &[Param] = &[
    Param::new("replicas", "20", INT1, "seeded environments"),
    Param::new("n", "2000", INT2, "tree size"),
    Param::new("marks", "5", INT1, "marked points per environment"),
    Param::new("offspring", "poisson", Kind::Offspring, "offspring law"),
    Param::new("step", "gaussian:2:1", Kind::Step, "step law"),
    Param::new("samples", "16", INT1, "spatial samples per edge"),
    Param::new("tol", "0.05", POS, "largest d_0 counted as agreement"),
    Param::new("fraction", "0.95", POS, "share of environments that must agree"),
];

/// Per environment, the rescaled discrete reduced tree against the
/// continuum reduction of the normalized tour of the same tree and
/// embedding, marked at the same points.
pub(crate) fn reduced_subtree_check(cfg: &ExperimentConfig, sink: &mut Sink) -> anyhow::Result<()> {
    let (n, k, samples) = (cfg.usize("n")?, cfg.usize("marks")?, cfg.usize("samples")?);
    let (dist, step) = (cfg.offspring("offspring")?, cfg.step("step")?);
    let dists = replicas(cfg.seed, 0, cfg.usize("replicas")?, |_, rng| {
        let tree = sample_conditioned_gw(n, &dist, rng)?;
        let emb = embed_brw(&tree, &step, rng)?;
        let tour = dfs_tour(&tree);
        let us: Vec<f64> = (0..k).map(|_| rand::Rng::random::<f64>(rng)).collect();
        let discrete = reduce_discrete(&tree, &tour, &us)?.with_graph_spatial(&tree, &emb, samples)?;
        let discrete = discrete.rescaled((n as f64).powf(-0.5), (n as f64).powf(-0.25));
        let cont_tour = normalized_tour(&tree, &emb)?;
        // mark the continuum at the contour indices the discrete marks use
        let times: Vec<f64> = us
            .iter()
            .map(|&u| tour.alpha_index(u).map(|i| i as f64 / (2 * n) as f64))
            .collect::<Result<_, _>>()?;
        // the coded tree is not binary, so vertices of any degree are kept
        let coded = reduce_coded(cont_tour.tree(), &times)?.with_tour_spatial(&cont_tour, samples)?;
        Ok(d0(&discrete, &coded)?)
    })?;
    let tol = cfg.f64("tol")?;
    let share = dists.iter().filter(|&&d| d <= tol).count() as f64 / dists.len() as f64;
    let need = cfg.f64("fraction")?;
    sink.metric("share_within_tol", share, format!(">= {need}"), share >= need);
    sink.info("max_d0", dists.iter().copied().fold(0.0, f64::max));
    sink.file("d0.csv", |w| {
        let mut csv = Csv::new(w, &["environment", "d0"])?;
        for (i, d) in dists.iter().enumerate() {
            csv.floats(&[i as f64, *d])?;
        }
        Ok(())
    })
}
