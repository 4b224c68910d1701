//! Gauge-measure experiments: calibration, Brownian paths and tour arcs.

use anyhow::Context;
use rand::Rng;
use spatial_trees::embedding::{embed_continuum, Tour};
use spatial_trees::excursion::sample_normalized_excursion;
use spatial_trees::io::Csv;
use spatial_trees::measures::{
    arc_measure_identity_check, calibrate_kappa, cover_brownian_path, hausdorff_estimate, path_step,
    two_point_arc_measure, write_identity_csv, ArcSample, CalibrationRecord, Gauge, GreedyCover,
};
use spatial_trees::rng::substream;
use spatial_trees::stats::{linear_fit, mean_se, median};

use super::replicas;
use crate::config::{ExperimentConfig, Kind, Param};
use crate::report::Sink;

const INT1: Kind = Kind::Int { min: 1 };
const POS: Kind = Kind::Float { positive: true };

/// Gauge from the `calibration` file when one is named, else fitted now
/// on `calibration_reps` paths of lane 0.
fn gauge(cfg: &ExperimentConfig, d: usize, delta: f64, sink: &mut Sink) -> anyhow::Result<Gauge> {
    let path = cfg.text("calibration")?;
    let g = if path.is_empty() {
        let reps = cfg.usize("calibration_reps")?;
        calibrate_kappa(d, delta, reps, cfg.seed, &mut substream(cfg.seed, 0, 0))?
    } else {
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {path}"))?;
        let rec: CalibrationRecord = serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?;
        Gauge::from_record(rec)?
    };
    g.check_use(d, delta)?;
    sink.info("kappa", g.kappa);
    Ok(g)
}

pub(crate) const CALIBRATE_PARAMS: &[Param] = &[
    Param::new("d", "8", Kind::Int { min: 3 }, "dimension"),
    Param::new("delta", "0.0078125", POS, "cover radius"),
    Param::new("replicas", "1000", Kind::Int { min: 2 }, "calibration paths, durations cycling through 0.1..1.0"),
];

pub(crate) fn hausdorff_calibrate(cfg: &ExperimentConfig, sink: &mut Sink) -> anyhow::Result<()> {
    let (d, delta, reps) = (cfg.usize("d")?, cfg.f64("delta")?, cfg.usize("replicas")?);
    let g = calibrate_kappa(d, delta, reps, cfg.seed, &mut substream(cfg.seed, 0, 0))?;
    let rec = g.calibration.context("calibration record")?;
    sink.info("kappa", g.kappa);
    sink.file("calibration.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &rec)?;
        Ok(())
    })
}

pub(crate) const VERIFY_PARAMS: &[Param] = &[
    Param::new("d", "8", Kind::Int { min: 3 }, "dimension"),
    Param::new("delta", "0.0078125", POS, "cover radius"),
    Param::new("calibration", "", Kind::Text, "calibration.json to use; empty fits kappa in the run"),
    Param::new("calibration_reps", "1000", Kind::Int { min: 2 }, "paths for an in-run calibration"),
    Param::new("replicas", "200", Kind::Int { min: 2 }, "paths per duration"),
    Param::new("slope_tol", "0.05", POS, "allowed deviation of the slope from 1"),
    Param::new("r2_min", "0.99", POS, "minimum R^2 of the duration fit"),
    Param::new("segment_max", "0.05", POS, "largest allowed segment estimate relative to a unit-time path"),
];

/// Fresh paths (independent of the calibration) at durations 0.1..1.0: the
/// mean estimate per duration is regressed on duration. A straight segment
/// as long as the typical unit-time displacement must be negligible.
pub(crate) fn hausdorff_verify(cfg: &ExperimentConfig, sink: &mut Sink) -> anyhow::Result<()> {
    let (d, delta, reps) = (cfg.usize("d")?, cfg.f64("delta")?, cfg.usize("replicas")?);
    let g = gauge(cfg, d, delta, sink)?;
    let ts: Vec<f64> = (1..=10).map(|k| 0.1 * k as f64).collect();
    let est = replicas(cfg.seed, 1, ts.len() * reps, |i, rng| {
        let t = ts[i / reps];
        let mut cover = GreedyCover::new(d, delta)?;
        cover_brownian_path(&mut cover, t, path_step(d, delta), rng)?;
        Ok(cover.estimate(&g)?)
    })?;
    let stats: Vec<(f64, f64)> = est.chunks(reps).map(mean_se).collect();
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let fit = linear_fit(&ts, &means)?;
    let (stol, r2) = (cfg.f64("slope_tol")?, cfg.f64("r2_min")?);
    sink.metric("slope", fit.slope, format!("in 1 +- {stol}"), (fit.slope - 1.0).abs() <= stol);
    sink.metric("r_squared", fit.r_squared, format!(">= {r2}"), fit.r_squared >= r2);
    sink.info("intercept", fit.intercept);

    let len = (d as f64).sqrt();
    let end = vec![1.0; d];
    let pieces = (4.0 * len / delta).ceil() as usize;
    let seg = ArcSample::segment(&vec![0.0; d], &end, pieces);
    let seg_est = hausdorff_estimate(&seg, &g, delta)?;
    let unit = means[ts.len() - 1];
    let ratio = seg_est / unit;
    let smax = cfg.f64("segment_max")?;
    sink.metric("segment_ratio", ratio, format!("< {smax}"), ratio < smax);
    sink.info("segment_estimate", seg_est);

    sink.file("durations.csv", |w| {
        let mut csv = Csv::new(w, &["t", "mean", "se"])?;
        for (t, (m, se)) in ts.iter().zip(&stats) {
            csv.floats(&[*t, *m, *se])?;
        }
        Ok(())
    })?;
    sink.file("paths.csv", |w| {
        let mut csv = Csv::new(w, &["t", "estimate"])?;
        for (i, e) in est.iter().enumerate() {
            csv.floats(&[ts[i / reps], *e])?;
        }
        Ok(())
    })
}

pub(crate) const IDENTITY_PARAMS: &[Param] = &[
    Param::new("d", "8", Kind::Int { min: 3 }, "dimension"),
    Param::new("delta", "0.0078125", POS, "cover radius"),
    Param::new("grid_size", "65537", Kind::Int { min: 3 }, "tour grid points (2^16 intervals)"),
    Param::new("calibration", "", Kind::Text, "calibration.json to use; empty fits kappa in the run"),
    Param::new("calibration_reps", "1000", Kind::Int { min: 2 }, "paths for an in-run calibration"),
    Param::new("times", "20", INT1, "root arcs at t_k = (k + 1/2) / times"),
    Param::new("pairs", "20", INT1, "two-point arcs between random times"),
    Param::new("floor", "0.05", POS, "smallest tree distance whose error is scored"),
    Param::new("root_tol", "0.10", POS, "maximum median relative error of root arcs"),
    Param::new("pair_tol", "0.12", POS, "maximum median relative error of two-point arcs"),
];

/// One tour; root arcs on a fixed grid of times and arcs between random
/// pairs at tree distance above the floor, measured from positions only.
pub(crate) fn arc_identity(cfg: &ExperimentConfig, sink: &mut Sink) -> anyhow::Result<()> {
    let (d, delta, floor) = (cfg.usize("d")?, cfg.f64("delta")?, cfg.f64("floor")?);
    let g = gauge(cfg, d, delta, sink)?;
    let mut rng = substream(cfg.seed, 0, 1);
    let exc = sample_normalized_excursion(cfg.usize("grid_size")?, &mut rng)?;
    let tour = Tour::from_continuum(&exc, &embed_continuum(&exc, d, &mut rng)?)?;

    let k = cfg.usize("times")?;
    let t_grid: Vec<f64> = (0..k).map(|i| (i as f64 + 0.5) / k as f64).collect();
    let rows = arc_measure_identity_check(&tour, &g, delta, &t_grid, floor, &mut substream(cfg.seed, 0, 2))?;
    let root_err: Vec<f64> = rows.iter().filter_map(|r| r.rel_err).collect();
    let root_med = median(&root_err);
    let rt = cfg.f64("root_tol")?;
    sink.metric("root_median_rel_err", root_med, format!("<= {rt}"), !root_err.is_empty() && root_med <= rt);
    sink.info("root_arcs_scored", root_err.len() as f64);

    let mut pairs = Vec::new();
    let mut pick = substream(cfg.seed, 0, 3);
    let mut arc_rng = substream(cfg.seed, 0, 4);
    let tree = tour.tree();
    let mut tries = 0;
    while pairs.len() < cfg.usize("pairs")? {
        tries += 1;
        anyhow::ensure!(tries < 100_000, "no pairs at tree distance >= {floor}");
        let (s, t): (f64, f64) = (pick.random(), pick.random());
        let dv = tree.distance(s, t)?;
        if dv < floor {
            continue;
        }
        let est = two_point_arc_measure(&tour, &g, delta, s, t, &mut arc_rng)?;
        pairs.push([s, t, dv, est, (est - dv).abs() / dv]);
    }
    let pair_err: Vec<f64> = pairs.iter().map(|p| p[4]).collect();
    let pair_med = median(&pair_err);
    let pt = cfg.f64("pair_tol")?;
    sink.metric("pair_median_rel_err", pair_med, format!("<= {pt}"), pair_med <= pt);

    sink.file("root_arcs.csv", |w| Ok(write_identity_csv(&rows, w)?))?;
    sink.file("pairs.csv", |w| {
        let mut csv = Csv::new(w, &["s", "t", "d_v", "estimate", "rel_err"])?;
        for p in &pairs {
            csv.floats(p)?;
        }
        Ok(())
    })
}
