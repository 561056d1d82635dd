//! Grid-search baseline; doubles as the certificate's infimum estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HpoError, Result};
use crate::hypergrad::{closed_form_response, response_value};
use crate::inner::InnerConfig;
use crate::problem::{BilevelProblem, HyperparameterDomain, HyperparameterPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GridScale {
    Linear,
    #[default]
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Points per coordinate.
    pub points: usize,
    #[serde(default)]
    pub scale: GridScale,
}

impl GridConfig {
    pub fn validate(&self, domain: &HyperparameterDomain) -> Result<()> {
        if self.points < 2 {
            return Err(HpoError::InvalidConfig(format!(
                "grid needs at least 2 points, got {}",
                self.points
            )));
        }
        if self.scale == GridScale::Log && domain.lower().iter().any(|l| *l <= 0.0) {
            return Err(HpoError::InvalidConfig(
                "a log grid needs a strictly positive lower bound".into(),
            ));
        }
        Ok(())
    }
}

/// Ascending points on `[lo, hi]`, endpoints exact.
pub fn axis(lo: f64, hi: f64, n: usize, scale: GridScale) -> Vec<f64> {
    (0..n)
        .map(|k| {
            if k == 0 {
                lo
            } else if k + 1 == n {
                hi
            } else {
                let t = k as f64 / (n - 1) as f64;
                match scale {
                    GridScale::Linear => lo + t * (hi - lo),
                    GridScale::Log => (lo.ln() + t * (hi.ln() - lo.ln())).exp(),
                }
            }
        })
        .collect()
}

/// Cartesian product of per-coordinate axes, last coordinate varying fastest.
pub fn grid_points(domain: &HyperparameterDomain, cfg: &GridConfig) -> Result<Vec<HyperparameterPoint>> {
    cfg.validate(domain)?;
    let axes: Vec<Vec<f64>> = (0..domain.dim())
        .map(|i| axis(domain.lower()[i], domain.upper()[i], cfg.points, cfg.scale))
        .collect();
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for ax in &axes {
        points = points
            .into_iter()
            .flat_map(|prefix| {
                ax.iter().map(move |v| {
                    let mut next = prefix.clone();
                    next.push(*v);
                    next
                })
            })
            .collect();
    }
    points.into_iter().map(|v| domain.point(v)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub grid: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub argmin: Vec<f64>,
    pub min_value: f64,
    /// Whether the values come from exact inner minimizers.
    pub exact: bool,
}

impl GridResult {
    pub fn points(&self, domain: &HyperparameterDomain) -> Result<Vec<HyperparameterPoint>> {
        self.grid.iter().map(|g| domain.point(g.clone())).collect()
    }
}

/// Evaluates `J` on `points`: exactly when a closed form exists, otherwise through the
/// inner trajectory. Ties resolve to the first minimizer.
pub fn evaluate_grid(p: &BilevelProblem, points: &[HyperparameterPoint], inner: &InnerConfig) -> Result<GridResult> {
    if points.is_empty() {
        return Err(HpoError::InvalidConfig("empty grid".into()));
    }
    let exact = points.iter().all(|l| closed_form_response(p, l.values()).is_ok());
    let values = points
        .par_iter()
        .map(|l| {
            let v = if exact {
                closed_form_response(p, l.values())
            } else {
                response_value(p, l, inner)
            };
            v.map_err(|e| HpoError::EvaluationFailed {
                at: l.values().to_vec(),
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (k, min_value) =
        values.iter().copied().enumerate().fold(
            (0, f64::INFINITY),
            |best, (i, v)| if v < best.1 { (i, v) } else { best },
        );
    Ok(GridResult {
        grid: points.iter().map(|l| l.values().to_vec()).collect(),
        argmin: points[k].values().to_vec(),
        min_value,
        values,
        exact,
    })
}

pub fn grid_search(p: &BilevelProblem, cfg: &GridConfig, inner: &InnerConfig) -> Result<GridResult> {
    evaluate_grid(p, &grid_points(p.domain(), cfg)?, inner)
}
