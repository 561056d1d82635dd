//! Small dense linear algebra: Cholesky solves and power iteration.
//!
//! Every system here is at most a few dozen rows, so plain loops over
//! `ndarray` storage are all that is needed.

use ndarray::{Array1, Array2};

use crate::error::{HpoError, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
}

impl Cholesky {
    /// Factors `a = L Lᵀ`. Pivots below `1e-12 * max|diag|` are treated as singular.
    pub fn factor(a: &Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(HpoError::DimensionMismatch {
                what: "cholesky input (square)".into(),
                expected: n,
                found: a.ncols(),
            });
        }
        let scale = a.diag().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
        let mut l = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[[i, j]];
                for k in 0..j {
                    sum -= l[[i, k]] * l[[j, k]];
                }
                if i == j {
                    if !sum.is_finite() || sum <= tol {
                        return Err(HpoError::Singular(format!("pivot {i} is {sum:e} (tolerance {tol:e})")));
                    }
                    l[[i, i]] = sum.sqrt();
                } else {
                    l[[i, j]] = sum / l[[j, j]];
                }
            }
        }
        Ok(Self { lower: l })
    }

    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let l = &self.lower;
        let n = l.nrows();
        let mut y = Array1::<f64>::zeros(n);
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= l[[i, k]] * y[k];
            }
            y[i] = sum / l[[i, i]];
        }
        let mut x = Array1::<f64>::zeros(n);
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in (i + 1)..n {
                sum -= l[[k, i]] * x[k];
            }
            x[i] = sum / l[[i, i]];
        }
        x
    }
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub fn spd_solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    Ok(Cholesky::factor(a)?.solve(b))
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix by power iteration
/// from the all-ones vector.
pub fn power_iteration(a: &Array2<f64>, iters: usize) -> f64 {
    let n = a.nrows();
    let mut v = Array1::<f64>::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..iters {
        let av = a.dot(&v);
        let norm = av.dot(&av).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        estimate = v.dot(&av);
        v = av / norm;
    }
    estimate
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_small_spd_system() {
        let a = array![[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let b = array![1.0, 2.0, 3.0];
        let x = spd_solve(&a, &b).unwrap();
        let r = a.dot(&x) - &b;
        assert!(norm2(r.as_slice().unwrap()) < 1e-14);
    }

    #[test]
    fn rank_deficient_is_singular() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(matches!(spd_solve(&a, &array![1.0, 1.0]), Err(HpoError::Singular(_))));
    }

    #[test]
    fn power_iteration_diagonal() {
        let a = array![[3.0, 0.0], [0.0, 1.0]];
        assert!((power_iteration(&a, 50) - 3.0).abs() < 1e-12);
    }
}
