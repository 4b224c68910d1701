//! Local-time mass and truncated cluster forests.

use spatial_trees::excursion::{sample_normalized_excursion, LEVY_HEIGHT_SCALE};
use spatial_trees::io::Csv;
use spatial_trees::rng::substream;
use spatial_trees::stats::mean_se;
use spatial_trees::superprocess::{
    height_tail_test, level_measure, occupation_mass, range_cloud, sample_forest, ForestConfig, GridPolicy,
};

use super::replicas;
use crate::config::{ExperimentConfig, Kind, Param};
use crate::report::Sink;

const INT1: Kind = Kind::Int { min: 1 };
const POS: Kind = Kind::Float { positive: true };

pub(crate) const MASS_PARAMS: &[Param] = &[
    Param::new("replicas", "500", Kind::Int { min: 2 }, "excursions"),
    Param::new("grid_size", "8193", Kind::Int { min: 3 }, "points of each sampled excursion (2^13 intervals)"),
    Param::new("refine", "128", INT1, "exact bridge refinement factor"),
    Param::new("eps", "0.01", POS, "local-time threshold"),
    Param::new("lo", "0.9", POS, "smallest accepted mean"),
    Param::new("hi", "1.1", POS, "largest accepted mean"),
];

/// `eps * sum (h_i - eps)_+` over the subtrees of unit-length excursions at
/// the cluster normalization. The sampled path is refined by exact
/// positive bridges and the remaining grid bias is extrapolated away.
pub(crate) fn mass_identity(cfg: &ExperimentConfig, sink: &mut Sink) -> anyhow::Result<()> {
    let (grid, factor, eps) = (cfg.usize("grid_size")?, cfg.usize("refine")?, cfg.f64("eps")?);
    let rows = replicas(cfg.seed, 0, cfg.usize("replicas")?, |_, rng| {
        let exc = sample_normalized_excursion(grid, rng)?.refine(factor, 1.0, rng)?.rescaled(1.0, LEVY_HEIGHT_SCALE)?;
        Ok((exc.integrated_local_time(eps), exc.integrated_local_time_extrapolated(eps)?))
    })?;
    let plain: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let extra: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let (m, se) = mean_se(&extra);
    let (lo, hi) = (cfg.f64("lo")?, cfg.f64("hi")?);
    sink.metric("mean_mass", m, format!("in [{lo}, {hi}]"), (lo..=hi).contains(&m));
    sink.info("mean_mass_se", se);
    sink.info("mean_mass_unextrapolated", mean_se(&plain).0);
    sink.file("masses.csv", |w| {
        let mut csv = Csv::new(w, &["plain", "extrapolated"])?;
        for r in &rows {
            csv.floats(&[r.0, r.1])?;
        }
        Ok(())
    })
}

pub(crate) const SANITY_PARAMS: &[Param] = &[
    Param::new("replicas", "10000", Kind::Int { min: 2 }, "forests"),
    Param::new("eps", "1", POS, "truncation height"),
    Param::new("d", "2", INT1, "spatial dimension"),
    Param::new("dt_factor", "0.0002", POS, "cluster grid step, in units of eps^2"),
    Param::new("grid_min", "64", Kind::Int { min: 3 }, "fewest grid points per cluster"),
    Param::new("grid_max", "262144", Kind::Int { min: 3 }, "most grid points per cluster"),
    Param::new("eps_lt", "0.5", POS, "local-time threshold, in units of eps"),
    Param::new("levels", "20", INT1, "levels per forest in the range containment sweep"),
    Param::new("se_mult", "3", POS, "allowed deviation of the mean cluster count in standard errors"),
    Param::new("alpha", "0.01", POS, "chi-square rejection level of the height tail"),
    Param::new("tail_max", "10", POS, "upper end of the height window, in units of eps"),
    Param::new("bins", "8", Kind::Int { min: 2 }, "equal-probability bins of the height window"),
    Param::new("mass_tol", "0.15", POS, "allowed relative error of the occupation mass"),
];

pub(crate) fn superprocess_sanity(cfg: &ExperimentConfig, sink: &mut Sink) -> anyhow::Result<()> {
    let eps = cfg.f64("eps")?;
    let fc = ForestConfig {
        grid: GridPolicy::Adaptive {
            dt: cfg.f64("dt_factor")? * eps * eps,
            min: cfg.usize("grid_min")?,
            max: cfg.usize("grid_max")?,
        },
        ..ForestConfig::new(eps, cfg.usize("d")?, 3)
    };
    fc.validate()?;
    let eps_lt = cfg.f64("eps_lt")? * eps;
    let levels = cfg.usize("levels")?;
    // per forest: cluster count, heights, occupation and length, atoms, violations
    let rows = replicas(cfg.seed, 0, cfg.usize("replicas")?, |_, rng| {
        let forest = sample_forest(&fc, rng)?;
        let heights: Vec<f64> = forest.clusters().iter().map(|c| c.height()).collect();
        let occ = occupation_mass(&forest, eps_lt, eps_lt / 20.0)?;
        let top = heights.iter().copied().fold(0.0, f64::max);
        let (mut atoms, mut bad) = (0, 0);
        if !forest.is_empty() {
            let cloud = range_cloud(&forest);
            for j in 1..=levels {
                let m = level_measure(&forest, top * j as f64 / (levels + 1) as f64, eps_lt)?;
                atoms += m.len();
                bad += cloud.violations(&m);
            }
        }
        Ok((heights, occ, forest.total_tau(), atoms, bad))
    })?;

    let counts: Vec<f64> = rows.iter().map(|r| r.0.len() as f64).collect();
    let (mk, sk) = mean_se(&counts);
    let k = cfg.f64("se_mult")?;
    let zk = (mk - 1.0 / eps).abs() / sk;
    sink.metric("cluster_count_z", zk, format!("<= {k}"), zk <= k);
    sink.info("mean_cluster_count", mk);

    let heights: Vec<f64> = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
    let alpha = cfg.f64("alpha")?;
    let chi = height_tail_test(&heights, eps, cfg.f64("tail_max")? * eps, cfg.usize("bins")?)?;
    sink.metric("height_tail_p", chi.p_value, format!(">= {alpha}"), !chi.degenerate && chi.p_value >= alpha);
    sink.info("height_tail_chi2", chi.statistic);

    let ratios: Vec<f64> = rows.iter().filter(|r| r.2 > 0.0).map(|r| r.1 / r.2).collect();
    let (mr, sr) = mean_se(&ratios);
    let tol = cfg.f64("mass_tol")?;
    let rel = (mr - 1.0).abs();
    sink.metric("occupation_rel_err", rel, format!("<= {tol}"), rel <= tol);
    sink.info("occupation_mean_ratio", mr);
    sink.info("occupation_mean_ratio_se", sr);
    let (so, st): (f64, f64) = rows.iter().fold((0.0, 0.0), |a, r| (a.0 + r.1, a.1 + r.2));
    sink.info("occupation_pooled_ratio", so / st);

    let atoms: usize = rows.iter().map(|r| r.3).sum();
    let bad: usize = rows.iter().map(|r| r.4).sum();
    sink.metric("range_violations", bad as f64, "== 0", bad == 0 && atoms > 0);
    sink.info("atoms_checked", atoms as f64);

    sink.file("forests.csv", |w| {
        let mut csv = Csv::new(w, &["forest", "clusters", "occupation", "total_tau", "atoms", "violations"])?;
        for (i, r) in rows.iter().enumerate() {
            csv.floats(&[i as f64, r.0.len() as f64, r.1, r.2, r.3 as f64, r.4 as f64])?;
        }
        Ok(())
    })?;
    sink.file("heights.csv", |w| {
        let mut csv = Csv::new(w, &["height"])?;
        for h in &heights {
            csv.floats(&[*h])?;
        }
        Ok(())
    })?;
    // one forest in full, for inspection
    if let Some(dir) = sink.dir() {
        let forest = sample_forest(&fc, &mut substream(cfg.seed, 0, 0))?;
        forest.write(&dir.join("forest_0"))?;
    }
    Ok(())
}
