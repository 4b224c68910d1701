//! `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use spatial_trees::embedding::StepDist;
use spatial_trees::gw::OffspringDist;

use crate::experiments::ExperimentSpec;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown experiment {0:?} (see `stree list`)")]
    UnknownExperiment(String),
    #[error("unknown key {key:?} for experiment {experiment}")]
    UnknownKey { experiment: String, key: String },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("key {0:?} is given twice")]
    Duplicate(String),
    #[error("key {key:?}: {msg}")]
    BadValue { key: String, msg: String },
}

/// Accepted values of a parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    /// Integer at least `min`.
    Int { min: u64 },
    /// Finite float, strictly positive when `positive`.
    Float { positive: bool },
    /// Offspring law: `poisson`, `geometric:q`, `binomial:m:p`.
    Offspring,
    /// Step law: `gaussian:d:sd`, `rademacher:d`, `lattice:d:length`.
    Step,
    /// Free text, e.g. a file path; may be empty.
    Text,
}

/// A documented configuration key with its default.
#[derive(Debug, Clone, Copy)]
pub struct Param {
    pub key: &'static str,
    pub default: &'static str,
    pub kind: Kind,
    pub doc: &'static str,
}

impl Param {
    pub const fn new(key: &'static str, default: &'static str, kind: Kind, doc: &'static str) -> Self {
        Self { key, default, kind, doc }
    }

    fn check(&self, value: &str) -> Result<(), ConfigError> {
        let bad = |msg: String| ConfigError::BadValue { key: self.key.into(), msg };
        match self.kind {
            Kind::Int { min } => match value.parse::<u64>() {
                Ok(v) if v >= min => Ok(()),
                _ => Err(bad(format!("expected an integer >= {min}, got {value:?}"))),
            },
            Kind::Float { positive } => match value.parse::<f64>() {
                Ok(v) if v.is_finite() && (!positive || v > 0.0) => Ok(()),
                _ => Err(bad(format!("expected a {}number, got {value:?}", if positive { "positive " } else { "" }))),
            },
            Kind::Offspring => parse_offspring(value).map(|_| ()).map_err(|e| bad(e.to_string())),
            Kind::Step => parse_step(value).map(|_| ()).map_err(|e| bad(e.to_string())),
            Kind::Text => Ok(()),
        }
    }
}

/// Named experiment, seed and the full parameter map (defaults filled in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub params: BTreeMap<String, String>,
}

/// Splits config text into `(key, value)` pairs; `#` starts a comment.
pub fn parse_lines(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: i + 1, text: raw.into() });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1, text: raw.into() });
        }
        if out.iter().any(|(x, _)| x == k) {
            return Err(ConfigError::Duplicate(k.into()));
        }
        out.push((k.into(), v.into()));
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn defaults(spec: &ExperimentSpec, seed: u64) -> Self {
        let params = spec.params.iter().map(|p| (p.key.to_string(), p.default.to_string())).collect();
        Self { experiment: spec.name.into(), seed, params }
    }

    /// Overrides one key; keys the experiment does not document are refused.
    pub fn set(&mut self, spec: &ExperimentSpec, key: &str, value: &str) -> Result<(), ConfigError> {
        if key == "seed" {
            self.seed = value.parse().map_err(|_| ConfigError::BadValue { key: "seed".into(), msg: format!("{value:?}") })?;
            return Ok(());
        }
        let param = spec.params.iter().find(|p| p.key == key).ok_or_else(|| ConfigError::UnknownKey {
            experiment: spec.name.into(),
            key: key.into(),
        })?;
        param.check(value)?;
        self.params.insert(key.into(), value.into());
        Ok(())
    }

    /// Defaults overridden by the lines of `text`.
    pub fn from_text(spec: &ExperimentSpec, seed: u64, text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::defaults(spec, seed);
        for (k, v) in parse_lines(text)? {
            cfg.set(spec, &k, &v)?;
        }
        Ok(cfg)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let raw = self.params.get(key).ok_or_else(|| ConfigError::UnknownKey {
            experiment: self.experiment.clone(),
            key: key.into(),
        })?;
        raw.parse().map_err(|_| ConfigError::BadValue { key: key.into(), msg: format!("cannot parse {raw:?}") })
    }

    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.get(key)
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.get(key)
    }

    pub fn text(&self, key: &str) -> Result<String, ConfigError> {
        self.get(key)
    }

    pub fn offspring(&self, key: &str) -> Result<OffspringDist, ConfigError> {
        let raw: String = self.get(key)?;
        parse_offspring(&raw).map_err(|e| ConfigError::BadValue { key: key.into(), msg: e.to_string() })
    }

    pub fn step(&self, key: &str) -> Result<StepDist, ConfigError> {
        let raw: String = self.get(key)?;
        parse_step(&raw).map_err(|e| ConfigError::BadValue { key: key.into(), msg: e.to_string() })
    }
}

fn fields(s: &str) -> (String, Vec<f64>) {
    let mut it = s.split(':');
    let head = it.next().unwrap_or("").trim().to_lowercase();
    (head, it.map(|x| x.trim().parse().unwrap_or(f64::NAN)).collect())
}

pub fn parse_offspring(s: &str) -> spatial_trees::Result<OffspringDist> {
    use spatial_trees::Error::InvalidOffspring;
    match fields(s) {
        (h, a) if h == "poisson" && a.is_empty() => Ok(OffspringDist::poisson()),
        (h, a) if h == "geometric" && a.len() == 1 => OffspringDist::geometric(a[0]),
        (h, a) if h == "binomial" && a.len() == 2 && a[0].fract() == 0.0 && a[0] >= 1.0 => {
            OffspringDist::binomial(a[0] as u32, a[1])
        }
        _ => Err(InvalidOffspring(format!("{s:?}: expected poisson, geometric:q or binomial:m:p"))),
    }
}

pub fn parse_step(s: &str) -> spatial_trees::Result<StepDist> {
    use spatial_trees::Error::InvalidStep;
    let dim = |x: f64| if x.fract() == 0.0 && x >= 1.0 { Ok(x as usize) } else { Err(InvalidStep(format!("bad dimension in {s:?}"))) };
    let law = match fields(s) {
        (h, a) if h == "gaussian" && a.len() == 2 => StepDist::Gaussian { dim: dim(a[0])?, sd: a[1] },
        (h, a) if h == "rademacher" && a.len() == 1 => StepDist::rademacher(dim(a[0])?),
        (h, a) if h == "lattice" && a.len() == 2 => StepDist::Lattice { dim: dim(a[0])?, length: a[1] },
        _ => return Err(InvalidStep(format!("{s:?}: expected gaussian:d:sd, rademacher:d or lattice:d:length"))),
    };
    law.validated()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::find;

    #[test]
    fn parses_comments_and_rejects_garbage() {
        let pairs = parse_lines("# header\nn = 5  # trailing\n\n d=3\n").unwrap();
        assert_eq!(pairs, vec![("n".into(), "5".into()), ("d".into(), "3".into())]);
        assert!(matches!(parse_lines("n 5"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(parse_lines("n = 1\nn = 2"), Err(ConfigError::Duplicate(_))));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_refused() {
        let spec = find("cov-check").unwrap();
        let cfg = ExperimentConfig::from_text(spec, 1, "replicas = 100\nseed = 9").unwrap();
        assert_eq!((cfg.usize("replicas").unwrap(), cfg.seed), (100, 9));
        assert!(matches!(ExperimentConfig::from_text(spec, 1, "colour = red"), Err(ConfigError::UnknownKey { .. })));
        assert!(matches!(ExperimentConfig::from_text(spec, 1, "replicas = -3"), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn laws_parse() {
        assert_eq!(parse_offspring("poisson").unwrap(), OffspringDist::poisson());
        assert_eq!(parse_offspring("Geometric:0.5").unwrap(), OffspringDist::geometric(0.5).unwrap());
        assert!(parse_offspring("geometric:0.3").is_err());
        assert!(parse_offspring("binomial:2.5:0.4").is_err());
        assert!(matches!(parse_step("gaussian:3:1").unwrap(), StepDist::Gaussian { dim: 3, .. }));
        assert!(matches!(parse_step("rademacher:2").unwrap(), StepDist::TwoPoint { .. }));
        assert!(parse_step("gaussian:0:1").is_err());
    }
}
