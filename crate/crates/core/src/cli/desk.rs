//! Formula-generated desk problems. No randomness and no files.

use ndarray::{Array1, Array2};

use crate::problem::{
    BilevelProblem, Dataset, HyperparameterDomain, LossKind, LossSpec, Mode, ModelKind, ModelSpec, PenaltyKind,
    PenaltySpec, DEFAULT_LOWER_BOUND,
};

/// Ground-truth weights of the ridge desk problem.
pub const DESK_RIDGE_WEIGHTS: [f64; 5] = [1.0, -1.0, 0.5, 0.0, 2.0];

fn ridge_block(offset: usize, rows: usize) -> Dataset {
    let w_true = Array1::from_vec(DESK_RIDGE_WEIGHTS.to_vec());
    let x = Array2::from_shape_fn((rows, 5), |(i, j)| (0.7 * (i + offset) as f64 + 1.3 * j as f64).sin());
    let mut y = x.dot(&w_true);
    for (i, yi) in y.iter_mut().enumerate() {
        *yi += 0.01 * (3.0 * (i + offset) as f64).cos();
    }
    Dataset::new(x, Some(y)).expect("desk data is finite and non-empty")
}

/// Supervised ridge regression: 20×5 training rows, 10×5 validation rows,
/// `x[i][j] = sin(0.7 i + 1.3 j)`, small cosine noise, λ ∈ [1e−6, 10].
pub fn make_desk_ridge() -> BilevelProblem {
    BilevelProblem::new(
        Mode::Supervised,
        ridge_block(0, 20),
        Some(ridge_block(20, 10)),
        ModelSpec {
            kind: ModelKind::LinearRegression,
            param_dim: 5,
        },
        LossSpec {
            kind: LossKind::SquaredError,
        },
        PenaltySpec {
            kind: PenaltyKind::ScalarRidge,
            hyper_dim: 1,
        },
        HyperparameterDomain::uniform(1, DEFAULT_LOWER_BOUND, 10.0).expect("valid box"),
    )
    .expect("desk ridge problem is consistent")
}

/// Unsupervised-literal mean estimation on 30×4 data `x[i][j] = cos(0.5 i + 0.9 j) + 0.5`.
pub fn make_desk_mean() -> BilevelProblem {
    let x = Array2::from_shape_fn((30, 4), |(i, j)| (0.5 * i as f64 + 0.9 * j as f64).cos() + 0.5);
    BilevelProblem::new(
        Mode::UnsupervisedLiteral,
        Dataset::new(x, None).expect("desk data is finite and non-empty"),
        None,
        ModelSpec {
            kind: ModelKind::MeanEstimator,
            param_dim: 4,
        },
        LossSpec {
            kind: LossKind::SquaredError,
        },
        PenaltySpec {
            kind: PenaltyKind::ScalarRidge,
            hyper_dim: 1,
        },
        HyperparameterDomain::uniform(1, DEFAULT_LOWER_BOUND, 10.0).expect("valid box"),
    )
    .expect("desk mean problem is consistent")
}
