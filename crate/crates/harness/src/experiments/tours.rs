//! Experiments on excursions, tours and their discrete approximations.

use std::io::Write;

use anyhow::Context;
use rand::Rng;
use rand_distr::StandardNormal;
use spatial_trees::embedding::{embed_brw, embed_continuum, normalized_tour, scaling_constants, StepDist, Tour};
use spatial_trees::excursion::{sample_normalized_excursion, RealTree};
use spatial_trees::gw::{dfs_tour, sample_conditioned_gw, OffspringDist};
use spatial_trees::io::{fmt_f64, Csv};
use spatial_trees::reduced::tour_correspondence_bound;
use spatial_trees::rng::substream;
use spatial_trees::stats::{covariance_se, ks_two_sample};

use super::replicas;
use crate::config::{ExperimentConfig, Kind, Param};
use crate::report::Sink;

const INT1: Kind = Kind::Int { min: 1 };
const INT2: Kind = Kind::Int { min: 2 };
const POS: Kind = Kind::Float { positive: true };

pub(crate) const COV_PARAMS: &[Param] = &[
    Param::new("grid_size", "8193", Kind::Int { min: 3 }, "points of the fixed excursion (2^13 intervals)"),
    Param::new("d", "3", INT1, "spatial dimension"),
    Param::new("replicas", "20000", INT2, "independent embeddings of the fixed excursion"),
    Param::new("pairs", "10", INT1, "random (s, t) pairs"),
    Param::new("se_mult", "3", POS, "allowed deviation in standard errors"),
];

/// Sample covariance of every coordinate of `r(s), r(t)` against `m_v(s, t)`.
pub(crate) fn cov_check(cfg: &ExperimentConfig, sink: &mut Sink) -> anyhow::Result<()> {
    let (grid, d, reps, pairs, k) =
        (cfg.usize("grid_size")?, cfg.usize("d")?, cfg.usize("replicas")?, cfg.usize("pairs")?, cfg.f64("se_mult")?);
    let exc = sample_normalized_excursion(grid, &mut substream(cfg.seed, 0, 0))?;
    let tree = RealTree::new(&exc);
    let mut rng = substream(cfg.seed, 0, 1);
    let idx: Vec<(usize, usize)> = (0..pairs)
        .map(|_| {
            let (a, b) = (rng.random_range(1..grid - 1), rng.random_range(1..grid - 1));
            (a.min(b), a.max(b))
        })
        .collect();
    // per replica: for each pair and coordinate, (r_c(s), r_c(t))
    let draws = replicas(cfg.seed, 2, reps, |_, rng| {
        let emb = embed_continuum(&exc, d, rng)?;
        let mut row = Vec::with_capacity(pairs * d * 2);
        for &(i, j) in &idx {
            for c in 0..d {
                row.push(emb.position(i)[c]);
                row.push(emb.position(j)[c]);
            }
        }
        Ok(row)
    })?;
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for (p, &(i, j)) in idx.iter().enumerate() {
        let m = tree.min_between(i, j);
        for c in 0..d {
            let col = 2 * (p * d + c);
            let xs: Vec<f64> = draws.iter().map(|r| r[col]).collect();
            let ys: Vec<f64> = draws.iter().map(|r| r[col + 1]).collect();
            let (cov, se) = covariance_se(&xs, &ys);
            let z = (cov - m).abs() / se;
            worst = worst.max(z);
            rows.push([tree.time(i), tree.time(j), c as f64 + 1.0, m, cov, se]);
        }
    }
    sink.metric("max_abs_z", worst, format!("<= {k}"), worst <= k);
    sink.file("covariance.csv", |w| {
        let mut csv = Csv::new(w, &["s", "t", "coord", "m_v", "cov", "se"])?;
        for r in &rows {
            csv.floats(r)?;
        }
        Ok(())
    })
}

pub(crate) const BOUND_PARAMS: &[Param] = &[
    Param::new("replicas", "100", INT1, "tour pairs"),
    Param::new("grid_size", "1025", Kind::Int { min: 3 }, "grid points per tour (2^10 intervals)"),
    Param::new("d", "3", INT1, "spatial dimension"),
];

/// Pairs alternate between independent tours and two embeddings of one tree.
pub(crate) fn tour_bound(cfg: &ExperimentConfig, sink: &mut Sink) -> anyhow::Result<()> {
    let (reps, grid, d) = (cfg.usize("replicas")?, cfg.usize("grid_size")?, cfg.usize("d")?);
    let results = replicas(cfg.seed, 0, reps, |i, rng| {
        let e1 = sample_normalized_excursion(grid, rng)?;
        let e2 = if i % 2 == 0 { sample_normalized_excursion(grid, rng)? } else { e1.clone() };
        let t1 = Tour::from_continuum(&e1, &embed_continuum(&e1, d, rng)?)?;
        let t2 = Tour::from_continuum(&e2, &embed_continuum(&e2, d, rng)?)?;
        Ok(tour_correspondence_bound(&t1, &t2)?)
    })?;
    let lhs = |b: &spatial_trees::reduced::CorrespondenceBound| b.dis + b.spatial_sup;
    let violations = results.iter().filter(|b| lhs(b) > b.bound * (1.0 + 1e-12)).count();
    let worst = results.iter().map(|b| lhs(b) / b.bound).fold(0.0, f64::max);
    sink.metric("violations", violations as f64, "== 0", violations == 0);
    sink.info("max_ratio", worst);
    sink.file("bounds.csv", |w| {
        let mut csv = Csv::new(w, &["pair", "dis", "spatial_sup", "bound"])?;
        for (i, b) in results.iter().enumerate() {
            csv.floats(&[i as f64, b.dis, b.spatial_sup, b.bound])?;
        }
        Ok(())
    })
}

pub(crate) const CONVERGENCE_PARAMS: &[Param] = &[
    Param::new("n", "8000", INT2, "tree size"),
    Param::new("replicas", "1000", INT2, "trees per offspring law, and oracle draws"),
    Param::new("offspring_a", "poisson", Kind::Offspring, "first offspring law"),
    Param::new("offspring_b", "geometric:0.5", Kind::Offspring, "second offspring law"),
    Param::new("alpha", "0.01", POS, "KS rejection level"),
];

/// `v_n(1/2) / sigma_T` for each law against exact draws of `e(1/2)`,
/// which is `sqrt(t (1 - t))` times a chi variable with three degrees of
/// freedom.
pub(crate) fn tour_convergence(cfg: &ExperimentConfig, sink: &mut Sink) -> anyhow::Result<()> {
    let (n, reps, alpha) = (cfg.usize("n")?, cfg.usize("replicas")?, cfg.f64("alpha")?);
    let oracle: Vec<f64> = replicas(cfg.seed, 0, reps, |_, rng| {
        let s: f64 = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum();
        Ok(0.5 * s.sqrt())
    })?;
    let mut columns = vec![("oracle".to_string(), oracle.clone())];
    for (lane, key) in [(1, "offspring_a"), (2, "offspring_b")] {
        let dist = cfg.offspring(key)?;
        let sigma_t = scaling_constants(&dist, &StepDist::Gaussian { dim: 1, sd: 1.0 })?.sigma_t;
        let sample = replicas(cfg.seed, lane, reps, |_, rng| {
            let tree = sample_conditioned_gw(n, &dist, rng)?;
            let tour = dfs_tour(&tree);
            Ok(tour.depths[n] as f64 / (n as f64).sqrt() / sigma_t)
        })?;
        let ks = ks_two_sample(&sample, &oracle)?;
        let name = law_name(&dist);
        sink.metric(&format!("ks_p_{name}"), ks.p_value, format!(">= {alpha}"), ks.p_value >= alpha);
        sink.info(&format!("sigma_t_{name}"), sigma_t);
        sink.info(&format!("ks_d_{name}"), ks.statistic);
        columns.push((name, sample));
    }
    sink.file("heights.csv", |w| {
        let mut csv = Csv::new(w, &["sample", "value"])?;
        for (name, xs) in &columns {
            for x in xs {
                csv.row(&[name.clone(), fmt_f64(*x)])?;
            }
        }
        Ok(())
    })
}

fn law_name(d: &OffspringDist) -> String {
    match d {
        OffspringDist::Poisson => "poisson".into(),
        OffspringDist::Geometric { q } => format!("geometric_{q}"),
        OffspringDist::Binomial { m, p } => format!("binomial_{m}_{p}"),
        OffspringDist::Table { .. } => "table".into(),
    }
}

pub(crate) const ALPHA_PARAMS: &[Param] = &[
    Param::new("replicas", "100", INT1, "trees in the sample"),
    Param::new("n_max", "100", INT1, "tree sizes are uniform on 1..=n_max"),
    Param::new("n_check", "50", INT1, "trees up to this size are checked"),
    Param::new("offspring", "poisson", Kind::Offspring, "offspring law"),
];

/// `alpha_n` sends exactly two of the `2n` grid cells to every vertex, so
/// each vertex has mass `2 / 2n = 1 / n`; checked in integers.
pub(crate) fn alpha_uniformity(cfg: &ExperimentConfig, sink: &mut Sink) -> anyhow::Result<()> {
    let (reps, n_max, n_check) = (cfg.usize("replicas")?, cfg.usize("n_max")?, cfg.usize("n_check")?);
    let dist = cfg.offspring("offspring")?;
    let rows = replicas(cfg.seed, 0, reps, |_, rng| {
        let n = rng.random_range(1..=n_max);
        if n > n_check {
            return Ok((n, None));
        }
        let tree = sample_conditioned_gw(n, &dist, rng).with_context(|| format!("tree of size {n}"))?;
        let cells = dfs_tour(&tree).pushforward_cells();
        Ok((n, Some(cells.iter().filter(|&&c| c != 2).count())))
    })?;
    let checked = rows.iter().filter(|r| r.1.is_some()).count();
    let bad: usize = rows.iter().filter_map(|r| r.1).sum();
    sink.metric("vertices_with_wrong_mass", bad as f64, "== 0", bad == 0 && checked > 0);
    sink.info("trees_checked", checked as f64);
    sink.file("alpha.csv", |w| {
        writeln!(w, "tree,n,wrong_vertices")?;
        for (i, (n, b)) in rows.iter().enumerate() {
            writeln!(w, "{i},{n},{}", b.map(|x| x.to_string()).unwrap_or_default())?;
        }
        Ok(())
    })
}

pub(crate) const SIMULATE_PARAMS: &[Param] = &[
    Param::new("mode", "continuum", Kind::Text, "continuum (normalized excursion and snake) or discrete (GW tree and BRW)"),
    Param::new("grid_size", "4097", Kind::Int { min: 3 }, "grid points of a continuum tour"),
    Param::new("n", "1000", INT2, "vertices of a discrete tour"),
    Param::new("d", "2", INT1, "dimension of a continuum tour"),
    Param::new("offspring", "poisson", Kind::Offspring, "offspring law of a discrete tour"),
    Param::new("step", "gaussian:2:1", Kind::Step, "step law of a discrete tour"),
];

/// Writes `tour.csv` (`t,v,r_1..r_d`); a discrete tour is normalized.
pub(crate) fn simulate_tour(cfg: &ExperimentConfig, sink: &mut Sink) -> anyhow::Result<()> {
    let mut rng = substream(cfg.seed, 0, 0);
    let tour = match cfg.text("mode")?.as_str() {
        "continuum" => {
            let e = sample_normalized_excursion(cfg.usize("grid_size")?, &mut rng)?;
            let emb = embed_continuum(&e, cfg.usize("d")?, &mut rng)?;
            Tour::from_continuum(&e, &emb)?
        }
        "discrete" => {
            let tree = sample_conditioned_gw(cfg.usize("n")?, &cfg.offspring("offspring")?, &mut rng)?;
            let emb = embed_brw(&tree, &cfg.step("step")?, &mut rng)?;
            normalized_tour(&tree, &emb)?
        }
        other => anyhow::bail!("mode must be continuum or discrete, not {other:?}"),
    };
    sink.info("height", tour.v().iter().copied().fold(0.0, f64::max));
    sink.info("points", tour.len() as f64);
    sink.file("tour.csv", |w| Ok(tour.write_csv(w)?))
}
