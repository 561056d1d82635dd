//! Sampled probes of the standing assumptions: convexity and coercivity of the
//! response, boundedness and uniqueness of inner solutions.
//!
//! Every probe is falsification-style. It can exhibit a violation with a witness, but a
//! consistent verdict only means nothing was found at the sampled resolution.

use ndarray::Array1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HpoError, Result};
use crate::hypergrad::Response;
use crate::inner::{solve_inner, InnerConfig};
use crate::linalg::{distance, norm2};
use crate::problem::{BilevelProblem, HyperparameterDomain, HyperparameterPoint};

pub const SAMPLED_NOTE: &str =
    "consistent means no violation was found at the sampled resolution; probes are sampled necessary conditions, not proofs";

/// Relative tolerance of the convexity inequality.
pub const CONVEXITY_TOLERANCE: f64 = 1e-8;
/// Allowed ratio of the largest to the median inner-solution norm.
pub const BOUNDEDNESS_SPREAD: f64 = 10.0;
/// Relative distance under which two inner solutions count as equal.
pub const SINGLETON_TOLERANCE: f64 = 1e-6;
/// Ratio below which consecutive shell increments count as stalling.
pub const COERCIVITY_STALL_RATIO: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    Convexity,
    Coercivity,
    InnerBoundedness,
    SingletonArgmin,
}

impl ProbeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeKind::Convexity => "convexity",
            ProbeKind::Coercivity => "coercivity",
            ProbeKind::InnerBoundedness => "inner-boundedness",
            ProbeKind::SingletonArgmin => "singleton-argmin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Consistent,
    Violated,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Consistent => "consistent",
            Verdict::Violated => "violated",
        }
    }
}

/// Inputs that reproduce a violation.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    Convexity {
        lambda_1: Vec<f64>,
        lambda_2: Vec<f64>,
        weight: f64,
        /// `a λ₁ + (1 − a) λ₂`.
        point: Vec<f64>,
        value: f64,
        chord: f64,
        tolerance: f64,
    },
    Coercivity {
        radii: Vec<f64>,
        directions: Vec<Vec<f64>>,
        shell_minima: Vec<f64>,
        /// Index into `radii` of the shell whose minimum fails to grow enough.
        shell: usize,
    },
    InnerBoundedness {
        lambda: Vec<f64>,
        norm: Option<f64>,
        median_norm: f64,
        failure: Option<String>,
    },
    SingletonArgmin {
        lambda: Vec<f64>,
        init_a: Vec<f64>,
        init_b: Vec<f64>,
        final_a: Vec<f64>,
        final_b: Vec<f64>,
        distance: f64,
        allowance: f64,
    },
}

impl Witness {
    /// Re-evaluates a convexity or coercivity witness in isolation. `Ok(true)` means the
    /// violation reproduces.
    pub fn recheck<R: Response + ?Sized>(&self, response: &R) -> Result<bool> {
        match self {
            Witness::Convexity {
                lambda_1,
                lambda_2,
                weight,
                point,
                ..
            } => {
                let j1 = response.value(lambda_1)?;
                let j2 = response.value(lambda_2)?;
                let chord = weight * j1 + (1.0 - weight) * j2;
                Ok(response.value(point)? > chord + convexity_tolerance(j1, j2))
            }
            Witness::Coercivity {
                radii,
                directions,
                shell,
                ..
            } => {
                let minima = shell_minima(response, radii, directions)?;
                Ok(first_coercivity_failure(&minima).map(|(k, _)| k) == Some(*shell))
            }
            _ => Err(HpoError::InvalidConfig(
                "inner-solution witnesses are rechecked against a problem".into(),
            )),
        }
    }

    /// Re-runs the inner solves behind an inner-boundedness or singleton witness.
    pub fn recheck_inner(&self, p: &BilevelProblem, cfg: &InnerConfig) -> Result<bool> {
        match self {
            Witness::SingletonArgmin {
                lambda,
                init_a,
                init_b,
                allowance,
                ..
            } => {
                let point = p.domain().point(lambda.clone())?;
                let a = solve_inner(p, &point, &cfg.with_init(Array1::from_vec(init_a.clone())))?;
                let b = solve_inner(p, &point, &cfg.with_init(Array1::from_vec(init_b.clone())))?;
                let d = distance(
                    vec_of(a.final_iterate()).as_slice(),
                    vec_of(b.final_iterate()).as_slice(),
                );
                Ok(d > *allowance)
            }
            Witness::InnerBoundedness {
                lambda, median_norm, ..
            } => {
                let point = p.domain().point(lambda.clone())?;
                match solve_inner(p, &point, cfg) {
                    Ok(t) => Ok(converged(&t).is_none()
                        || norm2(vec_of(t.final_iterate()).as_slice()) > BOUNDEDNESS_SPREAD * median_norm),
                    Err(_) => Ok(true),
                }
            }
            _ => Err(HpoError::InvalidConfig(
                "response witnesses are rechecked against a response".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub probe: ProbeKind,
    pub samples: usize,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    /// Worst-case slack of the probed inequality; negative exactly when violated.
    pub margin: f64,
    /// Set when the inputs cannot discriminate, e.g. identical initializations.
    pub degenerate: bool,
    /// Checks skipped because the evidence was not decisive either way.
    pub inconclusive: usize,
    /// Singleton pairs farther apart than the plain tolerance whose gap is covered by
    /// the trajectories' remaining-distance estimates.
    pub extrapolated: usize,
    pub note: String,
}

impl ProbeReport {
    fn new(probe: ProbeKind, samples: usize, margin: f64, witness: Option<Witness>) -> Self {
        Self {
            probe,
            samples,
            verdict: if witness.is_some() {
                Verdict::Violated
            } else {
                Verdict::Consistent
            },
            witness,
            margin,
            degenerate: false,
            inconclusive: 0,
            extrapolated: 0,
            note: SAMPLED_NOTE.to_string(),
        }
    }
}

fn vec_of(a: &Array1<f64>) -> Vec<f64> {
    a.to_vec()
}

fn failed(at: &[f64], e: HpoError) -> HpoError {
    match e {
        e @ HpoError::EvaluationFailed { .. } => e,
        e => HpoError::EvaluationFailed {
            at: at.to_vec(),
            message: e.to_string(),
        },
    }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

/// Halton point `index` (starting from 1) in `[0, 1)^dim`.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(
        dim <= PRIMES.len(),
        "Halton sequence supports at most {} dimensions",
        PRIMES.len()
    );
    PRIMES[..dim].iter().map(|&b| radical_inverse(index, b)).collect()
}

fn convexity_tolerance(j1: f64, j2: f64) -> f64 {
    CONVEXITY_TOLERANCE * 1f64.max(j1.abs()).max(j2.abs())
}

/// Checks `J(aλ₁ + (1 − a)λ₂) ≤ aJ(λ₁) + (1 − a)J(λ₂)` on Halton pairs and weights
/// `a = k/(n_interp + 1)`.
pub fn probe_convexity<R: Response + ?Sized>(
    response: &R,
    domain: &HyperparameterDomain,
    n_pairs: usize,
    n_interp: usize,
) -> Result<ProbeReport> {
    if n_pairs == 0 || n_interp == 0 {
        return Err(HpoError::InvalidConfig(
            "convexity probe needs at least one pair and one weight".into(),
        ));
    }
    let p = domain.dim();
    let to_box = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, t)| domain.lower()[i] + t * (domain.upper()[i] - domain.lower()[i]))
            .collect()
    };
    let eval = |x: &[f64]| response.value(x).map_err(|e| failed(x, e));
    let mut worst: Option<(f64, Witness)> = None;
    let mut margin = f64::INFINITY;
    let mut samples = 0;
    for k in 1..=n_pairs as u64 {
        let u = halton(k, 2 * p);
        let (l1, l2) = (to_box(&u[..p]), to_box(&u[p..]));
        let (j1, j2) = (eval(&l1)?, eval(&l2)?);
        let tol = convexity_tolerance(j1, j2);
        for m in 1..=n_interp {
            let a = m as f64 / (n_interp + 1) as f64;
            let point: Vec<f64> = l1.iter().zip(&l2).map(|(x, y)| a * x + (1.0 - a) * y).collect();
            let value = eval(&point)?;
            let chord = a * j1 + (1.0 - a) * j2;
            let slack = chord + tol - value;
            samples += 1;
            margin = margin.min(slack);
            if slack < 0.0 && worst.as_ref().is_none_or(|(s, _)| slack < *s) {
                worst = Some((
                    slack,
                    Witness::Convexity {
                        lambda_1: l1.clone(),
                        lambda_2: l2.clone(),
                        weight: a,
                        point,
                        value,
                        chord,
                        tolerance: tol,
                    },
                ));
            }
        }
    }
    Ok(ProbeReport::new(
        ProbeKind::Convexity,
        samples,
        margin,
        worst.map(|(_, w)| w),
    ))
}

/// Radii `max upper · 10^k` for `k = 0..5`.
pub fn default_radii(domain: &HyperparameterDomain) -> Vec<f64> {
    let top = domain.upper().iter().copied().fold(0.0, f64::max);
    (0..5).map(|k| top * 10f64.powi(k)).collect()
}

fn ray_directions(p: usize) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            let mut e = vec![0.0; p];
            e[i] = 1.0;
            e
        })
        .collect();
    if p > 1 {
        dirs.push(vec![1.0 / (p as f64).sqrt(); p]);
    }
    dirs
}

fn shell_minima<R: Response + ?Sized>(response: &R, radii: &[f64], directions: &[Vec<f64>]) -> Result<Vec<f64>> {
    radii
        .iter()
        .map(|&r| {
            directions.iter().try_fold(f64::INFINITY, |m, d| {
                let x: Vec<f64> = d.iter().map(|c| r * c).collect();
                Ok(m.min(response.value(&x).map_err(|e| failed(&x, e))?))
            })
        })
        .collect()
}

/// Beyond the first radius, shell minima must strictly increase, and each increment must
/// keep at least half of the previous one. Returns the first failing shell and the slack
/// of every check.
fn first_coercivity_failure(minima: &[f64]) -> Option<(usize, f64)> {
    coercivity_slacks(minima).into_iter().find(|(_, s)| *s <= 0.0)
}

fn coercivity_slacks(minima: &[f64]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for k in 2..minima.len() {
        let inc = minima[k] - minima[k - 1];
        out.push((k, inc));
        if k >= 3 {
            let prev = minima[k - 1] - minima[k - 2];
            out.push((k, inc - COERCIVITY_STALL_RATIO * prev));
        }
    }
    out
}

/// Evaluates `J` along the coordinate rays and the diagonal at each radius. The
/// evaluator must accept points outside the box.
pub fn probe_coercivity<R: Response + ?Sized>(
    response: &R,
    domain: &HyperparameterDomain,
    radii: &[f64],
) -> Result<ProbeReport> {
    if radii.len() < 3 {
        return Err(HpoError::InvalidConfig(
            "coercivity probe needs at least three radii".into(),
        ));
    }
    if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HpoError::InvalidConfig(
            "coercivity radii must be positive and increasing".into(),
        ));
    }
    let directions = ray_directions(domain.dim());
    let minima = shell_minima(response, radii, &directions)?;
    let slacks = coercivity_slacks(&minima);
    let margin = slacks.iter().map(|(_, s)| *s).fold(f64::INFINITY, f64::min);
    let witness = first_coercivity_failure(&minima).map(|(shell, _)| Witness::Coercivity {
        radii: radii.to_vec(),
        directions: directions.clone(),
        shell_minima: minima.clone(),
        shell,
    });
    Ok(ProbeReport::new(
        ProbeKind::Coercivity,
        radii.len() * directions.len(),
        margin,
        witness,
    ))
}

/// `Some(‖w_T‖)` when the trajectory has settled to within the singleton tolerance.
fn converged(t: &crate::inner::InnerTrajectory) -> Option<f64> {
    let w = norm2(vec_of(t.final_iterate()).as_slice());
    let remaining = t.remaining_distance_estimate((t.steps() / 2).max(1));
    (remaining <= SINGLETON_TOLERANCE * (1.0 + w)).then_some(w)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Boundedness of `λ ↦ ‖w*_λ‖` for an arbitrary solver. `Ok(None)` from the solver marks
/// a solve that did not converge.
pub fn probe_boundedness_with<F>(grid: &[HyperparameterPoint], solver: F) -> Result<ProbeReport>
where
    F: Fn(&[f64]) -> Result<Option<f64>> + Sync,
{
    if grid.is_empty() {
        return Err(HpoError::InvalidConfig(
            "boundedness probe needs a nonempty grid".into(),
        ));
    }
    let outcomes: Vec<std::result::Result<Option<f64>, String>> = grid
        .par_iter()
        .map(|l| match solver(l.values()) {
            Ok(n) => Ok(n),
            Err(e @ HpoError::Divergence { .. }) | Err(e @ HpoError::NonFinite(_)) => Err(e.to_string()),
            Err(e) => Err(failed(l.values(), e).to_string()),
        })
        .collect();
    let norms: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.as_ref().ok().copied().flatten())
        .collect();
    let med = if norms.is_empty() { f64::NAN } else { median(&norms) };

    for (l, o) in grid.iter().zip(&outcomes) {
        let failure = match o {
            Err(msg) => Some(msg.clone()),
            Ok(None) => Some("inner solve did not converge".to_string()),
            Ok(Some(_)) => None,
        };
        if let Some(failure) = failure {
            let witness = Witness::InnerBoundedness {
                lambda: l.values().to_vec(),
                norm: None,
                median_norm: med,
                failure: Some(failure),
            };
            return Ok(ProbeReport::new(
                ProbeKind::InnerBoundedness,
                grid.len(),
                f64::NEG_INFINITY,
                Some(witness),
            ));
        }
    }
    let (arg, max) =
        norms.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, n)| if n > acc.1 { (i, n) } else { acc },
        );
    let margin = BOUNDEDNESS_SPREAD * med - max;
    let witness = (margin < 0.0).then(|| Witness::InnerBoundedness {
        lambda: grid[arg].values().to_vec(),
        norm: Some(max),
        median_norm: med,
        failure: None,
    });
    Ok(ProbeReport::new(
        ProbeKind::InnerBoundedness,
        grid.len(),
        margin,
        witness,
    ))
}

/// Consistent when every solve converges and `max ‖w*_λ‖ ≤ 10 · median ‖w*_λ‖`.
pub fn probe_inner_boundedness(
    p: &BilevelProblem,
    grid: &[HyperparameterPoint],
    cfg: &InnerConfig,
) -> Result<ProbeReport> {
    probe_boundedness_with(grid, |l| {
        let point = p.domain().point(l.to_vec())?;
        Ok(converged(&solve_inner(p, &point, cfg)?))
    })
}

/// `n_inits` deterministic initializations `w_0 + (1 + ‖w_0‖) u` with `u` from a
/// Halton sequence mapped to `[−1, 1]^r`.
pub fn singleton_inits(cfg: &InnerConfig, n_inits: usize) -> Vec<Array1<f64>> {
    let r = cfg.init.len();
    let scale = 1.0 + norm2(vec_of(&cfg.init).as_slice());
    (1..=n_inits as u64)
        .map(|k| {
            let u = halton(k, r.min(PRIMES.len()));
            Array1::from_iter((0..r).map(|i| cfg.init[i] + scale * (2.0 * u[i % u.len()] - 1.0)))
        })
        .collect()
}

pub fn probe_singleton_argmin(
    p: &BilevelProblem,
    grid: &[HyperparameterPoint],
    cfg: &InnerConfig,
    n_inits: usize,
) -> Result<ProbeReport> {
    if n_inits < 2 {
        return Err(HpoError::InvalidConfig(
            "singleton probe needs at least two initializations".into(),
        ));
    }
    probe_singleton_argmin_with_inits(p, grid, cfg, &singleton_inits(cfg, n_inits))
}

/// Final iterate and its remaining-distance estimate.
type FinalIterate = (Vec<f64>, f64);

/// Runs the inner dynamics from each init at each λ and compares final iterates.
///
/// Two finals count as distinct when `‖w_a − w_b‖ > 1e−6 (1 + ‖w_a‖) + R_a + R_b`, where
/// `R` is the trajectory's geometric estimate of its remaining distance to the limit.
/// Pairs whose trajectories are not contracting are counted as inconclusive.
pub fn probe_singleton_argmin_with_inits(
    p: &BilevelProblem,
    grid: &[HyperparameterPoint],
    cfg: &InnerConfig,
    inits: &[Array1<f64>],
) -> Result<ProbeReport> {
    if inits.len() < 2 {
        return Err(HpoError::InvalidConfig(
            "singleton probe needs at least two initializations".into(),
        ));
    }
    let degenerate = inits.windows(2).all(|w| w[0] == w[1]);
    let window = (cfg.steps / 2).max(1);
    let per_lambda: Vec<Result<Vec<FinalIterate>>> = grid
        .par_iter()
        .map(|l| {
            inits
                .iter()
                .map(|init| {
                    let t = solve_inner(p, l, &cfg.with_init(init.clone())).map_err(|e| failed(l.values(), e))?;
                    Ok((vec_of(t.final_iterate()), t.remaining_distance_estimate(window)))
                })
                .collect()
        })
        .collect();

    let mut margin = f64::INFINITY;
    let mut inconclusive = 0;
    let mut extrapolated = 0;
    let mut witness = None;
    let mut samples = 0;
    for (l, finals) in grid.iter().zip(per_lambda) {
        let finals = finals?;
        for a in 0..finals.len() {
            for b in (a + 1)..finals.len() {
                samples += 1;
                let (wa, ra) = &finals[a];
                let (wb, rb) = &finals[b];
                if !(ra.is_finite() && rb.is_finite()) {
                    inconclusive += 1;
                    continue;
                }
                let d = distance(wa, wb);
                let plain = SINGLETON_TOLERANCE * (1.0 + norm2(wa));
                let allowance = plain + ra + rb;
                let slack = allowance - d;
                if d > plain && slack >= 0.0 {
                    extrapolated += 1;
                }
                if slack < margin {
                    margin = slack;
                    if slack < 0.0 {
                        witness = Some(Witness::SingletonArgmin {
                            lambda: l.values().to_vec(),
                            init_a: inits[a].to_vec(),
                            init_b: inits[b].to_vec(),
                            final_a: wa.clone(),
                            final_b: wb.clone(),
                            distance: d,
                            allowance,
                        });
                    }
                }
            }
        }
    }
    let mut report = ProbeReport::new(ProbeKind::SingletonArgmin, samples, margin, witness);
    report.degenerate = degenerate;
    report.inconclusive = inconclusive;
    report.extrapolated = extrapolated;
    Ok(report)
}
