//! Datasets, model/loss/penalty choices, hyperparameter boxes, and the
//! evaluable inner (training) and outer (validation) objectives.
//!
//! All supported instances are quadratic in the parameters `w`:
//!
//! * linear regression, `g_w(x) = x·w`, loss `(x·w − y)²`;
//! * mean estimator, `g_w(x) = w`, loss `‖x − w‖²` (no target).
//!
//! The penalty is `Σ_i λ_{k(i)} w_i²`, where `k(i) = 0` for a scalar ridge and
//! `k(i) = i` for a per-component penalty. Sums run over rows in index order so
//! every value is reproducible bit for bit.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, HpoError, Result};

/// Default strictly positive lower bound of a hyperparameter box.
pub const DEFAULT_LOWER_BOUND: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    targets: Option<Array1<f64>>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, targets: Option<Array1<f64>>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(HpoError::EmptyDataset("dataset has no rows".into()));
        }
        if features.ncols() == 0 {
            return Err(HpoError::EmptyDataset("dataset has no columns".into()));
        }
        if let Some(t) = &targets {
            if t.len() != features.nrows() {
                return Err(HpoError::DimensionMismatch {
                    what: "targets length vs rows".into(),
                    expected: features.nrows(),
                    found: t.len(),
                });
            }
            ensure_finite(t.as_slice().unwrap_or(&t.to_vec()), "targets")?;
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(HpoError::NonFinite("features".into()));
        }
        Ok(Self { features, targets })
    }

    /// Builds a dataset from row-major nested vectors.
    pub fn from_rows(rows: &[Vec<f64>], targets: Option<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(HpoError::EmptyDataset("dataset has no rows".into()));
        }
        let m = rows[0].len();
        let mut flat = Vec::with_capacity(n * m);
        for row in rows {
            if row.len() != m {
                return Err(HpoError::DimensionMismatch {
                    what: "row length".into(),
                    expected: m,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let features = Array2::from_shape_vec((n, m), flat).map_err(|e| HpoError::InvalidConfig(e.to_string()))?;
        Self::new(features, targets.map(Array1::from_vec))
    }

    pub fn rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn cols(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn targets(&self) -> Option<&Array1<f64>> {
        self.targets.as_ref()
    }

    /// Column means.
    pub fn mean(&self) -> Array1<f64> {
        self.column_sums() / self.rows() as f64
    }

    /// Column sums accumulated in row order.
    pub fn column_sums(&self) -> Array1<f64> {
        let mut sums = Array1::<f64>::zeros(self.cols());
        for row in self.features.rows() {
            sums += &row;
        }
        sums
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LinearRegression,
    MeanEstimator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub param_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    SquaredError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LossSpec {
    pub kind: LossKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    ScalarRidge,
    PerComponent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub hyper_dim: usize,
}

impl PenaltySpec {
    /// Index into λ of the coefficient multiplying `w_i²`.
    fn coefficient_index(&self, i: usize) -> usize {
        match self.kind {
            PenaltyKind::ScalarRidge => 0,
            PenaltyKind::PerComponent => i,
        }
    }
}

/// Box `[lower, upper]` of admissible hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainConfig", into = "DomainConfig")]
pub struct HyperparameterDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl TryFrom<DomainConfig> for HyperparameterDomain {
    type Error = HpoError;

    fn try_from(c: DomainConfig) -> Result<Self> {
        Self::new(c.lower, c.upper)
    }
}

impl From<HyperparameterDomain> for DomainConfig {
    fn from(d: HyperparameterDomain) -> Self {
        Self {
            lower: d.lower,
            upper: d.upper,
        }
    }
}

impl HyperparameterDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(HpoError::InvalidDomain("domain has dimension 0".into()));
        }
        if lower.len() != upper.len() {
            return Err(HpoError::DimensionMismatch {
                what: "domain upper bounds".into(),
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(HpoError::InvalidDomain(format!("bound {i} is not finite")));
            }
            if lo < 0.0 {
                return Err(HpoError::InvalidDomain(format!("lower bound {i} is negative ({lo})")));
            }
            if lo >= hi {
                return Err(HpoError::InvalidDomain(format!(
                    "lower bound {i} ({lo}) is not below upper bound ({hi})"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval `[lower, upper]` in every one of `dim` coordinates.
    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn min_width(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn midpoint(&self) -> HyperparameterPoint {
        HyperparameterPoint(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(lo, hi)| 0.5 * (lo + hi))
                .collect(),
        )
    }

    pub fn contains(&self, values: &[f64]) -> bool {
        values.len() == self.dim()
            && values
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    /// Validates `values` as a point of this box.
    pub fn point(&self, values: Vec<f64>) -> Result<HyperparameterPoint> {
        self.check_len(&values)?;
        ensure_finite(&values, "hyperparameter")?;
        if !self.contains(&values) {
            return Err(HpoError::DomainViolation(format!(
                "{values:?} not in [{:?}, {:?}]",
                self.lower, self.upper
            )));
        }
        Ok(HyperparameterPoint(values))
    }

    fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.dim() {
            return Err(HpoError::DimensionMismatch {
                what: "hyperparameter length".into(),
                expected: self.dim(),
                found: values.len(),
            });
        }
        Ok(())
    }
}

/// A hyperparameter vector known to lie in some [`HyperparameterDomain`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct HyperparameterPoint(Vec<f64>);

impl HyperparameterPoint {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl AsRef<[f64]> for HyperparameterPoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Componentwise clamp of `lambda` onto the box.
pub fn project_hyperparameter(lambda: &[f64], domain: &HyperparameterDomain) -> Result<HyperparameterPoint> {
    domain.check_len(lambda)?;
    ensure_finite(lambda, "hyperparameter before projection")?;
    Ok(HyperparameterPoint(
        lambda
            .iter()
            .zip(domain.lower.iter().zip(&domain.upper))
            .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
            .collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Outer objective on the validation set with targets.
    Supervised,
    /// Outer objective on the training data itself, no validation set.
    UnsupervisedLiteral,
    /// Unsupervised loss with a held-out validation set.
    UnsupervisedSplit,
}

/// Validated pair of inner and outer problems over a hyperparameter box.
#[derive(Debug, Clone, PartialEq)]
pub struct BilevelProblem {
    mode: Mode,
    train: Dataset,
    val: Option<Dataset>,
    model: ModelSpec,
    loss: LossSpec,
    penalty: PenaltySpec,
    domain: HyperparameterDomain,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub features: Vec<Vec<f64>>,
    #[serde(default)]
    pub targets: Option<Vec<f64>>,
}

/// JSON-facing description of a bilevel problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub mode: Mode,
    pub train: DatasetConfig,
    #[serde(default)]
    pub val: Option<DatasetConfig>,
    pub model: ModelKind,
    #[serde(default)]
    pub loss: LossKind,
    pub penalty: PenaltyKind,
    /// Optional declared parameter dimension, checked against the data.
    #[serde(default)]
    pub param_dim: Option<usize>,
    /// Optional declared hyperparameter dimension, checked against the penalty.
    #[serde(default)]
    pub hyper_dim: Option<usize>,
    pub domain: DomainConfig,
}

pub fn assemble_problem(config: &ProblemConfig) -> Result<BilevelProblem> {
    let train = Dataset::from_rows(&config.train.features, config.train.targets.clone())?;
    let val = config
        .val
        .as_ref()
        .map(|v| Dataset::from_rows(&v.features, v.targets.clone()))
        .transpose()?;
    let param_dim = train.cols();
    if let Some(declared) = config.param_dim {
        if declared != param_dim {
            return Err(HpoError::DimensionMismatch {
                what: "declared param_dim vs feature columns".into(),
                expected: param_dim,
                found: declared,
            });
        }
    }
    let hyper_dim = match config.penalty {
        PenaltyKind::ScalarRidge => 1,
        PenaltyKind::PerComponent => param_dim,
    };
    if let Some(declared) = config.hyper_dim {
        if declared != hyper_dim {
            return Err(HpoError::DimensionMismatch {
                what: "declared hyper_dim vs penalty kind".into(),
                expected: hyper_dim,
                found: declared,
            });
        }
    }
    let domain = HyperparameterDomain::new(config.domain.lower.clone(), config.domain.upper.clone())?;
    BilevelProblem::new(
        config.mode,
        train,
        val,
        ModelSpec {
            kind: config.model,
            param_dim,
        },
        LossSpec { kind: config.loss },
        PenaltySpec {
            kind: config.penalty,
            hyper_dim,
        },
        domain,
    )
}

impl BilevelProblem {
    pub fn new(
        mode: Mode,
        train: Dataset,
        val: Option<Dataset>,
        model: ModelSpec,
        loss: LossSpec,
        penalty: PenaltySpec,
        domain: HyperparameterDomain,
    ) -> Result<Self> {
        match (mode, &val) {
            (Mode::Supervised | Mode::UnsupervisedSplit, None) => {
                return Err(HpoError::ModeConflict(format!(
                    "{mode:?} mode requires a validation set"
                )))
            }
            (Mode::UnsupervisedLiteral, Some(_)) => {
                return Err(HpoError::ModeConflict(
                    "unsupervised-literal mode evaluates the outer objective on the training data; \
                     a validation set must not be given"
                        .into(),
                ))
            }
            _ => {}
        }
        if model.param_dim == 0 {
            return Err(HpoError::InvalidConfig("param_dim must be at least 1".into()));
        }
        for (name, ds) in std::iter::once(("train", &train)).chain(val.iter().map(|v| ("val", v))) {
            if ds.cols() != model.param_dim {
                return Err(HpoError::DimensionMismatch {
                    what: format!("{name} feature columns vs param_dim"),
                    expected: model.param_dim,
                    found: ds.cols(),
                });
            }
            if model.kind == ModelKind::LinearRegression && ds.targets().is_none() {
                return Err(HpoError::ModeConflict(format!(
                    "linear regression needs targets on the {name} set"
                )));
            }
        }
        let expected_p = match penalty.kind {
            PenaltyKind::ScalarRidge => 1,
            PenaltyKind::PerComponent => model.param_dim,
        };
        if penalty.hyper_dim != expected_p {
            return Err(HpoError::DimensionMismatch {
                what: "penalty hyper_dim".into(),
                expected: expected_p,
                found: penalty.hyper_dim,
            });
        }
        if domain.dim() != penalty.hyper_dim {
            return Err(HpoError::DimensionMismatch {
                what: "domain dimension vs hyper_dim".into(),
                expected: penalty.hyper_dim,
                found: domain.dim(),
            });
        }
        Ok(Self {
            mode,
            train,
            val,
            model,
            loss,
            penalty,
            domain,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn val(&self) -> Option<&Dataset> {
        self.val.as_ref()
    }

    pub fn model(&self) -> ModelSpec {
        self.model
    }

    pub fn loss(&self) -> LossSpec {
        self.loss
    }

    pub fn penalty(&self) -> PenaltySpec {
        self.penalty
    }

    pub fn domain(&self) -> &HyperparameterDomain {
        &self.domain
    }

    pub fn param_dim(&self) -> usize {
        self.model.param_dim
    }

    pub fn hyper_dim(&self) -> usize {
        self.penalty.hyper_dim
    }

    /// Same problem over a different hyperparameter box.
    pub fn with_domain(&self, domain: HyperparameterDomain) -> Result<Self> {
        Self::new(
            self.mode,
            self.train.clone(),
            self.val.clone(),
            self.model,
            self.loss,
            self.penalty,
            domain,
        )
    }

    /// Dataset the outer objective sums over.
    pub fn outer_dataset(&self) -> &Dataset {
        match self.mode {
            Mode::UnsupervisedLiteral => &self.train,
            Mode::Supervised | Mode::UnsupervisedSplit => self.val.as_ref().expect("validated at construction"),
        }
    }

    fn check_w(&self, w: &Array1<f64>) -> Result<()> {
        if w.len() != self.param_dim() {
            return Err(HpoError::DimensionMismatch {
                what: "parameter vector".into(),
                expected: self.param_dim(),
                found: w.len(),
            });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(HpoError::NonFinite("parameter vector".into()));
        }
        Ok(())
    }

    fn check_lambda(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.hyper_dim() {
            return Err(HpoError::DimensionMismatch {
                what: "hyperparameter vector".into(),
                expected: self.hyper_dim(),
                found: lambda.len(),
            });
        }
        ensure_finite(lambda, "hyperparameter")
    }

    /// Σ over rows of the squared loss of `g_w` on `ds`.
    pub(crate) fn data_loss(&self, ds: &Dataset, w: &Array1<f64>) -> f64 {
        let x = ds.features();
        match self.model.kind {
            ModelKind::LinearRegression => {
                let y = ds.targets().expect("validated at construction");
                let mut total = 0.0;
                for (row, yi) in x.rows().into_iter().zip(y.iter()) {
                    let r = row.dot(w) - yi;
                    total += r * r;
                }
                total
            }
            ModelKind::MeanEstimator => {
                let mut total = 0.0;
                for row in x.rows() {
                    for (xj, wj) in row.iter().zip(w.iter()) {
                        let r = xj - wj;
                        total += r * r;
                    }
                }
                total
            }
        }
    }

    pub(crate) fn data_gradient(&self, ds: &Dataset, w: &Array1<f64>) -> Array1<f64> {
        let x = ds.features();
        match self.model.kind {
            ModelKind::LinearRegression => {
                let y = ds.targets().expect("validated at construction");
                let residual = x.dot(w) - y;
                x.t().dot(&residual) * 2.0
            }
            ModelKind::MeanEstimator => (w * ds.rows() as f64 - ds.column_sums()) * 2.0,
        }
    }

    /// Hessian of the data term; constant because every supported model is quadratic.
    pub(crate) fn data_hessian(&self, ds: &Dataset) -> Array2<f64> {
        match self.model.kind {
            ModelKind::LinearRegression => {
                let x = ds.features();
                x.t().dot(x) * 2.0
            }
            ModelKind::MeanEstimator => Array2::<f64>::eye(self.param_dim()) * (2.0 * ds.rows() as f64),
        }
    }

    fn coefficient(&self, lambda: &[f64], i: usize) -> f64 {
        lambda[self.penalty.coefficient_index(i)]
    }

    pub fn penalty_value(&self, w: &Array1<f64>, lambda: &[f64]) -> f64 {
        w.iter()
            .enumerate()
            .map(|(i, wi)| self.coefficient(lambda, i) * wi * wi)
            .sum()
    }

    /// `∇_w L_λ(w)`.
    pub fn inner_gradient(&self, w: &Array1<f64>, lambda: &[f64]) -> Array1<f64> {
        let mut g = self.data_gradient(&self.train, w);
        for (i, gi) in g.iter_mut().enumerate() {
            *gi += 2.0 * self.coefficient(lambda, i) * w[i];
        }
        g
    }

    /// `∇²_w L_λ`, independent of `w`.
    pub fn inner_hessian(&self, lambda: &[f64]) -> Array2<f64> {
        let mut h = self.data_hessian(&self.train);
        for i in 0..self.param_dim() {
            h[[i, i]] += 2.0 * self.coefficient(lambda, i);
        }
        h
    }

    /// Mixed derivative `∂_λ ∇_w L_λ(w)` as an `r × p` matrix.
    pub fn inner_cross_derivative(&self, w: &Array1<f64>) -> Array2<f64> {
        let mut b = Array2::<f64>::zeros((self.param_dim(), self.hyper_dim()));
        for i in 0..self.param_dim() {
            b[[i, self.penalty.coefficient_index(i)]] = 2.0 * w[i];
        }
        b
    }

    /// `∇_w E(w)`.
    pub fn outer_gradient(&self, w: &Array1<f64>) -> Array1<f64> {
        self.data_gradient(self.outer_dataset(), w)
    }

    /// Penalized training objective `L_λ(w)`.
    pub fn inner_objective(&self, w: &Array1<f64>, lambda: &HyperparameterPoint) -> Result<f64> {
        self.inner_objective_raw(w, lambda.values())
    }

    pub(crate) fn inner_objective_raw(&self, w: &Array1<f64>, lambda: &[f64]) -> Result<f64> {
        self.check_w(w)?;
        self.check_lambda(lambda)?;
        let value = self.data_loss(&self.train, w) + self.penalty_value(w, lambda);
        if !value.is_finite() {
            return Err(HpoError::NonFinite("inner objective".into()));
        }
        Ok(value)
    }

    /// Outer objective `E(w)`; does not depend on λ.
    pub fn outer_objective(&self, w: &Array1<f64>) -> Result<f64> {
        self.check_w(w)?;
        let value = self.data_loss(self.outer_dataset(), w);
        if !value.is_finite() {
            return Err(HpoError::NonFinite("outer objective".into()));
        }
        Ok(value)
    }

    /// Empirical (unpenalized) training loss.
    pub fn training_loss(&self, w: &Array1<f64>) -> Result<f64> {
        self.check_w(w)?;
        Ok(self.data_loss(&self.train, w))
    }
}
