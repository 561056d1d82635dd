//! Independent oracles. The desk data are regenerated from their formulas and ridge
//! problems are solved by Gaussian elimination, without touching the library's solvers.
#![allow(dead_code)]

pub const W_TRUE: [f64; 5] = [1.0, -1.0, 0.5, 0.0, 2.0];

pub fn ridge_block(offset: usize, rows: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x: Vec<Vec<f64>> = (0..rows)
        .map(|i| {
            (0..5)
                .map(|j| (0.7 * (i + offset) as f64 + 1.3 * j as f64).sin())
                .collect()
        })
        .collect();
    let y = x
        .iter()
        .enumerate()
        .map(|(i, r)| r.iter().zip(W_TRUE).map(|(a, b)| a * b).sum::<f64>() + 0.01 * (3.0 * (i + offset) as f64).cos())
        .collect();
    (x, y)
}

pub fn mean_rows() -> Vec<Vec<f64>> {
    (0..30)
        .map(|i| (0..4).map(|j| (0.5 * i as f64 + 0.9 * j as f64).cos() + 0.5).collect())
        .collect()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            let pivot = a[col].clone();
            for (x, q) in a[row].iter_mut().zip(&pivot).skip(col) {
                *x -= f * q;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// `(XᵀX + λI)⁻¹ Xᵀy`.
pub fn ridge_solution(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Vec<f64> {
    let p = x[0].len();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for (row, yi) in x.iter().zip(y) {
        for i in 0..p {
            b[i] += row[i] * yi;
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    for (i, r) in a.iter_mut().enumerate() {
        r[i] += lambda;
    }
    gauss_solve(a, b)
}

pub fn squared_error(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(r, yi)| {
            let pred: f64 = r.iter().zip(w).map(|(a, b)| a * b).sum();
            (pred - yi).powi(2)
        })
        .sum()
}

/// Validation error of the exact ridge solution on the desk ridge problem.
pub fn desk_ridge_response(lambda: f64) -> f64 {
    let (xt, yt) = ridge_block(0, 20);
    let (xv, yv) = ridge_block(20, 10);
    squared_error(&xv, &yv, &ridge_solution(&xt, &yt, lambda))
}

fn mean_stats() -> (f64, f64, f64) {
    let rows = mean_rows();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..4).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let spread: f64 = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(a, m)| (a - m).powi(2)).sum::<f64>())
        .sum();
    (n, spread, mean.iter().map(|m| m * m).sum())
}

/// `J(λ) = Σ‖x_i − x̄‖² + n (λ/(n+λ))² ‖x̄‖²`.
pub fn desk_mean_response(lambda: f64) -> f64 {
    let (n, spread, m2) = mean_stats();
    spread + n * (lambda / (n + lambda)).powi(2) * m2
}

/// `J′(λ) = 2 n λ n/(n+λ)³ ‖x̄‖²`.
pub fn desk_mean_derivative(lambda: f64) -> f64 {
    let (n, _, m2) = mean_stats();
    2.0 * n * lambda * n / (n + lambda).powi(3) * m2
}

/// Supremum of the mean response over `λ ≥ 0`.
pub fn desk_mean_supremum() -> f64 {
    let (n, spread, m2) = mean_stats();
    spread + n * m2
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            if k == 0 {
                lo
            } else if k + 1 == n {
                hi
            } else {
                (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
