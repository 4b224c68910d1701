//! Registry of named experiments.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use spatial_trees::rng::{substream, SimRng};

use crate::config::{ConfigError, ExperimentConfig, Param};
use crate::report::{Report, Sink};

mod arcs;
mod forests;
mod oracles;
mod tours;
mod walks;

pub type RunFn = fn(&ExperimentConfig, &mut Sink) -> anyhow::Result<()>;

pub struct ExperimentSpec {
    pub name: &'static str,
    /// Acceptance criterion this experiment decides, if any.
    pub criterion: Option<u8>,
    pub summary: &'static str,
    pub params: &'static [Param],
    pub run: RunFn,
}

static REGISTRY: &[ExperimentSpec] = &[
    ExperimentSpec {
        name: "cov-check",
        criterion: Some(1),
        summary: "snake head covariance against the path minimum m_v(s,t)",
        params: tours::COV_PARAMS,
        run: tours::cov_check,
    },
    ExperimentSpec {
        name: "hausdorff-verify",
        criterion: Some(2),
        summary: "gauge estimate of Brownian paths is linear in duration; straight segments are negligible",
        params: arcs::VERIFY_PARAMS,
        run: arcs::hausdorff_verify,
    },
    ExperimentSpec {
        name: "tour-bound",
        criterion: Some(3),
        summary: "correspondence distortion plus spatial sup is at most 4|v-v'| + |r-r'|",
        params: tours::BOUND_PARAMS,
        run: tours::tour_bound,
    },
    ExperimentSpec {
        name: "arc-identity",
        criterion: Some(4),
        summary: "gauge measure of root arcs and two-point arcs against tree distances",
        params: arcs::IDENTITY_PARAMS,
        run: arcs::arc_identity,
    },
    ExperimentSpec {
        name: "tour-convergence",
        criterion: Some(5),
        summary: "contour height at 1/2 of conditioned GW trees against the excursion marginal",
        params: tours::CONVERGENCE_PARAMS,
        run: tours::tour_convergence,
    },
    ExperimentSpec {
        name: "alpha-uniformity",
        criterion: Some(6),
        summary: "exact pushforward of Lebesgue measure by alpha_n is uniform on vertices",
        params: tours::ALPHA_PARAMS,
        run: tours::alpha_uniformity,
    },
    ExperimentSpec {
        name: "bm-properties",
        criterion: Some(7),
        summary: "hitting probabilities and occupation of Brownian motion on a weighted tree",
        params: walks::BM_PARAMS,
        run: walks::bm_properties,
    },
    ExperimentSpec {
        name: "mass-identity",
        criterion: Some(8),
        summary: "integrated local-time approximation recovers the excursion length",
        params: forests::MASS_PARAMS,
        run: forests::mass_identity,
    },
    ExperimentSpec {
        name: "spectral-dim",
        criterion: Some(9),
        summary: "annealed return probability decays like m^(-2/3)",
        params: walks::SPECTRAL_PARAMS,
        run: walks::spectral_dim,
    },
    ExperimentSpec {
        name: "walk-scaling",
        criterion: Some(10),
        summary: "rescaled walk image: self-consistency across n and universality across laws",
        params: walks::SCALING_PARAMS,
        run: walks::walk_scaling,
    },
    ExperimentSpec {
        name: "superprocess-sanity",
        criterion: Some(11),
        summary: "cluster counts, height tail, occupation mass and range containment of truncated forests",
        params: forests::SANITY_PARAMS,
        run: forests::superprocess_sanity,
    },
    ExperimentSpec {
        name: "oracle-batch",
        criterion: Some(12),
        summary: "small instances against exhaustive and exact oracles",
        params: oracles::PARAMS,
        run: oracles::oracle_batch,
    },
    ExperimentSpec {
        name: "simulate-tour",
        criterion: None,
        summary: "write one continuum or discrete tour as CSV",
        params: tours::SIMULATE_PARAMS,
        run: tours::simulate_tour,
    },
    ExperimentSpec {
        name: "hausdorff-calibrate",
        criterion: None,
        summary: "fit the gauge constant kappa and write calibration.json",
        params: arcs::CALIBRATE_PARAMS,
        run: arcs::hausdorff_calibrate,
    },
    ExperimentSpec {
        name: "reduced-subtree-check",
        criterion: None,
        summary: "quenched agreement of discrete and continuum reduced subtrees over seeded environments",
        params: walks::REDUCED_PARAMS,
        run: walks::reduced_subtree_check,
    },
];

pub fn registry() -> &'static [ExperimentSpec] {
    REGISTRY
}

/// The acceptance experiments in criterion order.
pub fn acceptance_suite() -> Vec<&'static ExperimentSpec> {
    let mut v: Vec<_> = REGISTRY.iter().filter(|s| s.criterion.is_some()).collect();
    v.sort_by_key(|s| s.criterion);
    v
}

pub fn find(name: &str) -> Result<&'static ExperimentSpec, ConfigError> {
    REGISTRY.iter().find(|s| s.name == name).ok_or_else(|| ConfigError::UnknownExperiment(name.into()))
}

/// Runs the configured experiment; raw files and the report go to `out`
/// when given.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> anyhow::Result<Report> {
    let spec = find(&cfg.experiment)?;
    let start = Instant::now();
    let mut sink = Sink::new(out);
    (spec.run)(cfg, &mut sink)?;
    let passed = sink.metrics.iter().all(|m| m.pass);
    let report = Report {
        experiment: spec.name.into(),
        criterion: spec.criterion,
        config: cfg.clone(),
        metrics: sink.metrics,
        info: sink.info,
        files: sink.files,
        passed,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out {
        report.write(dir)?;
    }
    Ok(report)
}

/// `f` on replicas `0..count`, each with its own stream of `lane`, in
/// parallel; results come back in replica order.
pub(crate) fn replicas<T, F>(seed: u64, lane: u64, count: usize, f: F) -> anyhow::Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut SimRng) -> anyhow::Result<T> + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64, lane);
            f(i, &mut rng)
        })
        .collect()
}
