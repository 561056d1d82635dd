//! Executes `run`, `grid` and `probe` and writes their artifacts atomically.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cli::config::ExperimentConfig;
use crate::cli::grid::{grid_points, grid_search, GridConfig, GridResult, GridScale};
use crate::diagnostics::{
    default_radii, probe_coercivity, probe_convexity, probe_inner_boundedness, probe_singleton_argmin, ProbeReport,
};
use crate::ekeland::EkelandCertificate;
use crate::error::HpoError;
use crate::hypergrad::ClosedFormResponse;
use crate::outer::{run_hpo_with, CertificateInputs, OuterTrace};
use crate::problem::BilevelProblem;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Validation(HpoError),
    #[error("run failed: {0}")]
    Runtime(HpoError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Parse { .. } | CliError::Write { .. } => EXIT_IO,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Grid,
    Probe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Debug, Clone, Copy)]
struct Emit {
    csv: bool,
    json: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateSummary {
    pub verdict: &'static str,
    #[serde(flatten)]
    pub detail: EkelandCertificate,
}

/// Contents of `summary.json`. Fields a command does not produce are `null`.
#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct Summary {
    pub problem: String,
    pub stop_reason: Option<&'static str>,
    pub lambda_final: Option<Vec<f64>>,
    pub J_final: Option<f64>,
    pub lambda_grid: Option<Vec<f64>>,
    pub J_grid: Option<f64>,
    pub certificate: Option<CertificateSummary>,
    pub probes: BTreeMap<&'static str, &'static str>,
}

/// Everything a command computed, for callers that want more than the files.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Summary,
    pub trace: Option<OuterTrace>,
    pub grid: Option<GridResult>,
    pub probes: Vec<ProbeReport>,
    pub output_dir: PathBuf,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::from_json(&text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn run_experiment(path: &Path) -> Result<Outcome, CliError> {
    execute(Command::Run, path, None, None)
}

/// Loads, validates and runs one command. `out` and `format` override the config.
pub fn execute(
    command: Command,
    config_path: &Path,
    out: Option<&Path>,
    format: Option<Format>,
) -> Result<Outcome, CliError> {
    let config = load_config(config_path)?;
    let problem = config.problem.build().map_err(CliError::Validation)?;
    config.validate(&problem).map_err(CliError::Validation)?;
    let emit = match format {
        Some(Format::Csv) => Emit { csv: true, json: false },
        Some(Format::Json) => Emit { csv: false, json: true },
        Some(Format::Both) => Emit { csv: true, json: true },
        None => Emit {
            csv: config.emit.csv,
            json: config.emit.json,
        },
    };
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| config.output_dir.clone());
    fs::create_dir_all(&dir).map_err(|e| CliError::Write {
        path: dir.clone(),
        message: e.to_string(),
    })?;

    let mut summary = Summary {
        problem: config.problem.name().to_string(),
        stop_reason: None,
        lambda_final: None,
        J_final: None,
        lambda_grid: None,
        J_grid: None,
        certificate: None,
        probes: BTreeMap::new(),
    };

    let probes = if command == Command::Probe || (command == Command::Run && config.probes.any()) {
        let reports = run_probes(&problem, &config).map_err(CliError::Runtime)?;
        for r in &reports {
            log::info!("probe {}: {}", r.probe.as_str(), r.verdict.as_str());
            summary.probes.insert(r.probe.as_str(), r.verdict.as_str());
        }
        if emit.json {
            write_json(&dir.join("probes.json"), &reports)?;
        }
        reports
    } else {
        Vec::new()
    };

    let grid = if command == Command::Probe {
        None
    } else {
        let inner = config.inner_config(&problem).map_err(CliError::Validation)?;
        let g = grid_search(&problem, &config.grid, &inner).map_err(CliError::Runtime)?;
        log::info!("grid minimum J = {:e} at {:?}", g.min_value, g.argmin);
        summary.lambda_grid = Some(g.argmin.clone());
        summary.J_grid = Some(g.min_value);
        if emit.csv {
            write_atomic(&dir.join("grid.csv"), &grid_csv(&g)?)?;
        }
        Some(g)
    };

    let trace = if command == Command::Run {
        let g = grid.as_ref().expect("run computes the grid");
        let cfg = config.outer_config(&problem).map_err(CliError::Validation)?;
        let inputs = CertificateInputs {
            inf_estimate: g.min_value,
            candidates: g.points(problem.domain()).map_err(CliError::Runtime)?,
        };
        let trace = run_hpo_with(&problem, &cfg, Some(&inputs)).map_err(CliError::Runtime)?;
        log::info!(
            "stopped by {} after {} steps",
            trace.stop_reason.as_str(),
            trace.step_norms.len()
        );
        summary.stop_reason = Some(trace.stop_reason.as_str());
        summary.lambda_final = Some(trace.final_lambda().to_vec());
        summary.J_final = Some(trace.final_value());
        summary.certificate = trace.certificate.clone().map(|c| CertificateSummary {
            verdict: if c.valid { "valid" } else { "invalid" },
            detail: c,
        });
        if emit.csv {
            write_atomic(&dir.join("trace.csv"), &trace_csv(&trace)?)?;
        }
        if emit.json {
            write_json(&dir.join("trace.json"), &trace)?;
        }
        Some(trace)
    } else {
        None
    };

    write_json(&dir.join("summary.json"), &summary)?;
    Ok(Outcome {
        summary,
        trace,
        grid,
        probes,
        output_dir: dir,
    })
}

/// Runs the enabled probes in a fixed order. Response probes use the exact inner
/// minimizer; inner-solution probes use the configured dynamics on a per-coordinate grid.
pub fn run_probes(p: &BilevelProblem, config: &ExperimentConfig) -> crate::Result<Vec<ProbeReport>> {
    let s = &config.probes;
    let response = ClosedFormResponse { problem: p };
    let mut reports = Vec::new();
    if s.convexity {
        reports.push(probe_convexity(&response, p.domain(), s.pairs, s.interp)?);
    }
    if s.coercivity {
        let radii = s.radii.clone().unwrap_or_else(|| default_radii(p.domain()));
        reports.push(probe_coercivity(&response, p.domain(), &radii)?);
    }
    if s.inner_boundedness || s.singleton_argmin {
        let scale = if p.domain().lower().iter().all(|l| *l > 0.0) {
            GridScale::Log
        } else {
            GridScale::Linear
        };
        let grid = grid_points(
            p.domain(),
            &GridConfig {
                points: s.grid_points,
                scale,
            },
        )?;
        let inner = config.inner_config(p)?;
        if s.inner_boundedness {
            reports.push(probe_inner_boundedness(p, &grid, &inner)?);
        }
        if s.singleton_argmin {
            reports.push(probe_singleton_argmin(p, &grid, &inner, s.inits)?);
        }
    }
    Ok(reports)
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn csv_bytes(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Vec<u8>, CliError> {
    let err = |e: csv::Error| CliError::Write {
        path: PathBuf::from("<csv>"),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Write {
        path: PathBuf::from("<csv>"),
        message: e.to_string(),
    })
}

/// Columns `iter, lambda_0.., J, h_0.., step_norm`. Missing entries are empty.
pub fn trace_csv(trace: &OuterTrace) -> Result<Vec<u8>, CliError> {
    let p = trace.iterates[0].len();
    let mut header = vec!["iter".to_string()];
    header.extend((0..p).map(|i| format!("lambda_{i}")));
    header.push("J".into());
    header.extend((0..p).map(|i| format!("h_{i}")));
    header.push("step_norm".into());
    let rows = trace
        .iterates
        .iter()
        .enumerate()
        .map(|(t, lam)| {
            let mut row = vec![t.to_string()];
            row.extend(lam.iter().copied().map(fmt));
            row.push(fmt(trace.values[t]));
            match trace.hypergrads.get(t) {
                Some(h) => row.extend(h.value.iter().copied().map(fmt)),
                None => row.extend((0..p).map(|_| String::new())),
            }
            row.push(if t == 0 {
                String::new()
            } else {
                fmt(trace.step_norms[t - 1])
            });
            row
        })
        .collect();
    csv_bytes(header, rows)
}

/// Columns `index, lambda_0.., J`.
pub fn grid_csv(grid: &GridResult) -> Result<Vec<u8>, CliError> {
    let p = grid.grid.first().map_or(0, Vec::len);
    let mut header = vec!["index".to_string()];
    header.extend((0..p).map(|i| format!("lambda_{i}")));
    header.push("J".into());
    let rows = grid
        .grid
        .iter()
        .zip(&grid.values)
        .enumerate()
        .map(|(k, (lam, j))| {
            let mut row = vec![k.to_string()];
            row.extend(lam.iter().copied().map(fmt));
            row.push(fmt(*j));
            row
        })
        .collect();
    csv_bytes(header, rows)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Writes to a temporary file in the target directory, then renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let err = |e: &dyn std::fmt::Display| CliError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| err(&e))?;
    tmp.write_all(bytes).map_err(|e| err(&e))?;
    tmp.persist(path).map_err(|e| err(&e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_config_is_io_error() {
        let e = execute(Command::Grid, Path::new("/nonexistent/config.json"), None, None).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_IO);
    }

    #[test]
    fn zero_epsilon_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"problem": {"kind": "desk-ridge"}, "outer": {"epsilon": 0}}"#).unwrap();
        let e = execute(Command::Run, &cfg, Some(dir.path()), None).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_VALIDATION);
    }

    #[test]
    fn grid_csv_matches_values() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"problem": {"kind": "desk-mean"}, "grid": {"points": 5}}"#).unwrap();
        let out = execute(Command::Grid, &cfg, Some(dir.path()), Some(Format::Csv)).unwrap();
        let text = fs::read_to_string(dir.path().join("grid.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("index,lambda_0,J"));
        let g = out.grid.unwrap();
        for (line, j) in lines.zip(&g.values) {
            let parsed: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
            assert_eq!(parsed, *j);
        }
        assert!(!dir.path().join("trace.csv").exists());
    }
}
