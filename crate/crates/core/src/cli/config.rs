//! JSON experiment configuration.

use std::path::PathBuf;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::cli::desk::{make_desk_mean, make_desk_ridge};
use crate::cli::grid::{GridConfig, GridScale};
use crate::error::{HpoError, Result};
use crate::hypergrad::HypergradMethod;
use crate::inner::{InnerConfig, DEFAULT_INNER_STEPS};
use crate::outer::OuterConfig;
use crate::problem::{assemble_problem, BilevelProblem, ProblemConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemSource {
    DeskRidge,
    DeskMean,
    Explicit(ProblemConfig),
}

impl ProblemSource {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSource::DeskRidge => "desk-ridge",
            ProblemSource::DeskMean => "desk-mean",
            ProblemSource::Explicit(_) => "explicit",
        }
    }

    pub fn build(&self) -> Result<BilevelProblem> {
        match self {
            ProblemSource::DeskRidge => Ok(make_desk_ridge()),
            ProblemSource::DeskMean => Ok(make_desk_mean()),
            ProblemSource::Explicit(c) => assemble_problem(c),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerSettings {
    pub steps: Option<usize>,
    pub step_size: Option<f64>,
    pub init: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuterSettings {
    pub alpha: Option<f64>,
    pub epsilon: f64,
    pub max_iters: usize,
    pub method: HypergradMethod,
    pub inner: InnerSettings,
    pub sufficient_decrease_c: f64,
    pub backtrack: bool,
    pub start: Option<Vec<f64>>,
    pub fd_step: Option<f64>,
    pub smoothness: Option<f64>,
    pub certificate_epsilon: Option<f64>,
}

impl Default for OuterSettings {
    fn default() -> Self {
        Self {
            alpha: None,
            epsilon: 1e-4,
            max_iters: 500,
            method: HypergradMethod::ForwardIterative,
            inner: InnerSettings::default(),
            sufficient_decrease_c: 0.1,
            backtrack: false,
            start: None,
            fd_step: None,
            smoothness: None,
            certificate_epsilon: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    pub convexity: bool,
    pub coercivity: bool,
    pub inner_boundedness: bool,
    pub singleton_argmin: bool,
    /// Grid points per coordinate for the inner-solution probes.
    pub grid_points: usize,
    pub pairs: usize,
    pub interp: usize,
    pub radii: Option<Vec<f64>>,
    pub inits: usize,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            convexity: true,
            coercivity: true,
            inner_boundedness: true,
            singleton_argmin: true,
            grid_points: 20,
            pairs: 16,
            interp: 3,
            radii: None,
            inits: 3,
        }
    }
}

impl ProbeSettings {
    pub fn any(&self) -> bool {
        self.convexity || self.coercivity || self.inner_boundedness || self.singleton_argmin
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitSettings {
    pub csv: bool,
    pub json: bool,
}

impl Default for EmitSettings {
    fn default() -> Self {
        Self { csv: true, json: true }
    }
}

fn default_grid() -> GridConfig {
    GridConfig {
        points: 200,
        scale: GridScale::Log,
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("hpo-out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    #[serde(default)]
    pub outer: OuterSettings,
    #[serde(default = "default_grid")]
    pub grid: GridConfig,
    #[serde(default)]
    pub probes: ProbeSettings,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit: EmitSettings,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Inner configuration with unset fields taken from the problem's defaults.
    pub fn inner_config(&self, p: &BilevelProblem) -> Result<InnerConfig> {
        let defaults = InnerConfig::default_for(p);
        let s = &self.outer.inner;
        let init = match &s.init {
            Some(v) if v.len() != p.param_dim() => {
                return Err(HpoError::DimensionMismatch {
                    what: "inner init".into(),
                    expected: p.param_dim(),
                    found: v.len(),
                })
            }
            Some(v) => Array1::from_vec(v.clone()),
            None => defaults.init,
        };
        InnerConfig::new(
            s.steps.unwrap_or(DEFAULT_INNER_STEPS),
            s.step_size.unwrap_or(defaults.step_size),
            init,
        )
    }

    pub fn outer_config(&self, p: &BilevelProblem) -> Result<OuterConfig> {
        let s = &self.outer;
        let cfg = OuterConfig {
            alpha: s.alpha,
            epsilon: s.epsilon,
            max_iters: s.max_iters,
            method: s.method,
            inner: self.inner_config(p)?,
            sufficient_decrease_c: s.sufficient_decrease_c,
            backtrack: s.backtrack,
            start: s.start.clone(),
            fd_step: s.fd_step,
            smoothness: s.smoothness,
            certificate_epsilon: s.certificate_epsilon,
        };
        cfg.validate()?;
        if let Some(start) = &cfg.start {
            p.domain().point(start.clone())?;
        }
        Ok(cfg)
    }

    /// Checks everything that can be checked before running anything.
    pub fn validate(&self, p: &BilevelProblem) -> Result<()> {
        self.outer_config(p)?;
        self.grid.validate(p.domain())?;
        if self.probes.any() {
            if self.probes.grid_points < 2 {
                return Err(HpoError::InvalidConfig("probe grid needs at least 2 points".into()));
            }
            if self.probes.singleton_argmin && self.probes.inits < 2 {
                return Err(HpoError::InvalidConfig("singleton probe needs at least 2 inits".into()));
            }
            if self.probes.convexity && (self.probes.pairs == 0 || self.probes.interp == 0) {
                return Err(HpoError::InvalidConfig(
                    "convexity probe needs pairs and interp ≥ 1".into(),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::from_json(r#"{"problem": {"kind": "desk-ridge"}}"#).unwrap();
        assert_eq!(c.grid.points, 200);
        assert_eq!(c.outer.max_iters, 500);
        let p = c.problem.build().unwrap();
        c.validate(&p).unwrap();
        assert_eq!(c.inner_config(&p).unwrap(), InnerConfig::default_for(&p));
    }

    #[test]
    fn explicit_problem_round_trip() {
        let text = r#"{
            "problem": {
                "kind": "explicit",
                "mode": "unsupervised-literal",
                "train": {"features": [[1.0, 2.0], [3.0, 4.0]]},
                "model": "mean-estimator",
                "penalty": "scalar-ridge",
                "domain": {"lower": [0.001], "upper": [5.0]}
            },
            "outer": {"epsilon": 1e-5, "method": "implicit"}
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        let p = c.problem.build().unwrap();
        assert_eq!(p.param_dim(), 2);
        assert_eq!(c.outer_config(&p).unwrap().method, HypergradMethod::Implicit);
    }

    #[test]
    fn validation_failures() {
        let p = make_desk_ridge();
        let zero_eps =
            ExperimentConfig::from_json(r#"{"problem": {"kind": "desk-ridge"}, "outer": {"epsilon": 0.0}}"#).unwrap();
        assert!(zero_eps.validate(&p).is_err());
        let one_point =
            ExperimentConfig::from_json(r#"{"problem": {"kind": "desk-ridge"}, "grid": {"points": 1}}"#).unwrap();
        assert!(one_point.validate(&p).is_err());
        assert!(ExperimentConfig::from_json(r#"{"problem": {"kind": "desk-ridge"}, "bogus": 1}"#).is_err());
    }
}
