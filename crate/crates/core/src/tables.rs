//! Sweep definitions behind the result tables: which runs each table needs,
//! how a run is summarized, and how summaries are laid out as CSV.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{EsdgError, Result};
use crate::experiments::{preset, Experiment, ExperimentConfig, OfflineArtifacts};
use crate::hyperreduction::hyperreduce;
use crate::io;

/// One full-order configuration and the basis sizes swept on top of it.
#[derive(Clone, Debug)]
pub struct TableCase {
    /// File stem under the run directory, also the column label.
    pub key: String,
    pub column: String,
    pub config: ExperimentConfig,
    pub modes: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CellFormat {
    /// `error/nodes`; the full-order row shows the analytic error when known.
    ErrorNodes,
    /// Accepted steps.
    Steps,
    /// `runtime/error`; runtime in `unit_ms` milliseconds.
    RuntimeError { unit_ms: f64 },
}

#[derive(Clone, Debug)]
pub struct TableSpec {
    pub id: &'static str,
    pub title: &'static str,
    pub cases: Vec<TableCase>,
    pub rows: Vec<usize>,
    /// Whether a full-order row leads the table.
    pub fom_row: bool,
    pub format: CellFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// `None` for the full-order model.
    pub modes: Option<usize>,
    /// Final-time relative error (against the full-order model, or the
    /// analytic solution for the full-order row when one exists).
    pub error: Option<f64>,
    pub volume_nodes: usize,
    pub boundary_nodes: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub wall_seconds: f64,
    /// Largest `|convective entropy|` over the frames.
    pub max_convective: f64,
    /// Smallest viscous dissipation over the frames.
    pub min_dissipation: f64,
    /// Numerical failure of the online run (for example loss of positivity),
    /// recorded instead of aborting the sweep.
    #[serde(default)]
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub key: String,
    pub fom: RunSummary,
    pub roms: Vec<RunSummary>,
}

impl CaseResult {
    pub fn rom(&self, modes: usize) -> Option<&RunSummary> {
        self.roms.iter().find(|r| r.modes == Some(modes))
    }
}

pub const TABLE_IDS: [&str; 6] = ["table1", "table2", "table3", "table4", "table5", "table6"];

fn degree_sweep(base: &str, prefix: &str, modes: &[usize]) -> Result<Vec<TableCase>> {
    let cfg = preset(base)?;
    Ok([0, 3, 7]
        .into_iter()
        .map(|p| TableCase {
            key: format!("{prefix}-p{p}"),
            column: format!("p={p}"),
            config: cfg.with_degree(p),
            modes: modes.to_vec(),
        })
        .collect())
}

fn with_t_final(mut cfg: ExperimentConfig, t: f64) -> ExperimentConfig {
    cfg.time.t_final = t;
    cfg
}

pub fn table_spec(id: &str) -> Result<TableSpec> {
    let spec = match id {
        "table1" => TableSpec {
            id: "table1",
            title: "Error and number of hyper-reduced nodes, linear advection",
            cases: degree_sweep("advection-gaussian", "advection", &[15, 20, 25])?,
            rows: vec![15, 20, 25],
            fom_row: true,
            format: CellFormat::ErrorNodes,
        },
        "table2" => TableSpec {
            id: "table2",
            title: "Error and number of hyper-reduced nodes, Burgers",
            cases: degree_sweep("burgers-sine", "burgers", &[30, 40, 50])?,
            rows: vec![30, 40, 50],
            fom_row: false,
            format: CellFormat::ErrorNodes,
        },
        "table3" => TableSpec {
            id: "table3",
            title: "Error and number of hyper-reduced nodes, 1D Euler",
            cases: degree_sweep("euler-isentropic", "euler", &[20, 30, 40])?,
            rows: vec![20, 30, 40],
            fom_row: false,
            format: CellFormat::ErrorNodes,
        },
        "table4" => {
            let modes = vec![20, 40, 60, 80, 100];
            TableSpec {
                id: "table4",
                title: "Accepted time steps",
                cases: vec![
                    TableCase {
                        key: "wall".into(),
                        column: "1D Euler wall".into(),
                        config: preset("euler-wall")?,
                        modes: modes.clone(),
                    },
                    TableCase {
                        key: "sod".into(),
                        column: "Sod".into(),
                        config: preset("sod-smoothed")?,
                        modes: modes.clone(),
                    },
                ],
                rows: modes,
                fom_row: true,
                format: CellFormat::Steps,
            }
        }
        "table5" => {
            let modes = vec![10, 20, 30, 40];
            TableSpec {
                id: "table5",
                title: "Online runtime (ms) and error",
                cases: vec![
                    TableCase {
                        key: "wall-short".into(),
                        column: "1D Euler wall (T=0.2)".into(),
                        config: with_t_final(preset("euler-wall")?, 0.2),
                        modes: modes.clone(),
                    },
                    TableCase {
                        key: "wall".into(),
                        column: "1D Euler wall (T=0.75)".into(),
                        config: preset("euler-wall")?,
                        modes: modes.clone(),
                    },
                    TableCase {
                        key: "sod".into(),
                        column: "Sod".into(),
                        config: preset("sod-smoothed")?,
                        modes: modes.clone(),
                    },
                ],
                rows: modes,
                fom_row: true,
                format: CellFormat::RuntimeError { unit_ms: 1.0 },
            }
        }
        "table6" => TableSpec {
            id: "table6",
            title: "Online runtime (s) and error, Kelvin-Helmholtz",
            cases: vec![TableCase {
                key: "kh".into(),
                column: "Kelvin-Helmholtz (T=3)".into(),
                config: preset("kh")?,
                modes: vec![30, 50],
            }],
            rows: vec![30, 50],
            fom_row: true,
            format: CellFormat::RuntimeError { unit_ms: 1000.0 },
        },
        other => {
            return Err(EsdgError::config(
                "table",
                format!("unknown table `{other}` (available: {})", TABLE_IDS.join(", ")),
            ))
        }
    };
    Ok(spec)
}

/// Runs the full-order model once, then a hyper-reduced ROM for every basis
/// size. The POD is computed once at the largest size and truncated.
pub fn compute_case(case: &TableCase) -> Result<CaseResult> {
    let max_modes = *case.modes.iter().max().ok_or_else(|| EsdgError::config("modes", "no basis sizes given"))?;
    let mut cfg = case.config.clone();
    cfg.pod.modes = max_modes;
    let exp = Experiment::new(cfg)?;
    let traj = exp.run_fom()?;
    let diags = exp.fom_diagnostics(&traj)?;
    let fom = RunSummary {
        modes: None,
        error: exp.fom_analytic_error(&traj),
        volume_nodes: exp.fom.num_nodes(),
        boundary_nodes: exp.fom.ops.boundary.len(),
        accepted_steps: traj.stats.accepted,
        rejected_steps: traj.stats.rejected,
        wall_seconds: traj.wall_seconds,
        max_convective: diags.iter().map(|d| d.convective.abs()).fold(0.0, f64::max),
        min_dissipation: diags.iter().map(|d| d.viscous_dissipation).fold(f64::INFINITY, f64::min),
        failure: None,
    };
    let mut full = exp.config.clone();
    full.hyperreduction.enabled = false;
    let pod_only = Experiment {
        config: full,
        fom: exp.fom.clone(),
        initial: exp.initial.clone(),
    };
    let largest = pod_only.offline(&traj)?;
    let mut roms = Vec::with_capacity(case.modes.len());
    for &n in &case.modes {
        let basis = largest.basis.truncated(n)?;
        let hr = hyperreduce(&exp.fom.ops, &basis, &exp.config.hyperreduction_options())
            .map_err(|e| e.in_stage("hyper-reduction"))?;
        let art = OfflineArtifacts {
            basis,
            enriched: largest.enriched,
            hyperreduction: Some(hr),
        };
        let (volume_nodes, boundary_nodes) = art
            .hyperreduction
            .as_ref()
            .map_or((0, 0), |h| (h.quadrature.len(), h.boundary_points.len()));
        let summary = match exp.run_rom(&art, &traj, true) {
            Ok(run) => RunSummary {
                modes: Some(n),
                error: Some(run.error),
                volume_nodes,
                boundary_nodes,
                accepted_steps: run.trajectory.stats.accepted,
                rejected_steps: run.trajectory.stats.rejected,
                wall_seconds: run.trajectory.wall_seconds,
                max_convective: run.diagnostics.iter().map(|d| d.convective.abs()).fold(0.0, f64::max),
                min_dissipation: run.diagnostics.iter().map(|d| d.viscous_dissipation).fold(f64::INFINITY, f64::min),
                failure: None,
            },
            Err(e) if !e.is_config_error() => RunSummary {
                modes: Some(n),
                error: None,
                volume_nodes,
                boundary_nodes,
                accepted_steps: 0,
                rejected_steps: 0,
                wall_seconds: 0.0,
                max_convective: 0.0,
                min_dissipation: 0.0,
                failure: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        };
        roms.push(summary);
    }
    Ok(CaseResult {
        key: case.key.clone(),
        fom,
        roms,
    })
}

pub fn case_path(run_dir: &Path, case: &TableCase) -> PathBuf {
    run_dir.join(format!("{}.json", case.key))
}

/// Loads every stored case of a table; with `compute`, missing or incomplete
/// cases are run and stored first. Without it, missing runs are listed in
/// the returned error.
pub fn collect_results(spec: &TableSpec, run_dir: &Path, compute: bool) -> Result<Vec<CaseResult>> {
    let mut results = Vec::new();
    let mut missing = Vec::new();
    for case in &spec.cases {
        let path = case_path(run_dir, case);
        let stored: Option<CaseResult> = if path.exists() { Some(io::read_json(&path)?) } else { None };
        match stored {
            Some(r) if case.modes.iter().all(|&n| r.rom(n).is_some()) => results.push(r),
            _ if compute => {
                let r = compute_case(case).map_err(|e| e.in_stage("table run"))?;
                fs::create_dir_all(run_dir)?;
                io::write_json(&path, &r)?;
                results.push(r);
            }
            _ => {
                missing.push(format!("{} (fom{})", case.key, case.modes.iter().map(|n| format!(", N={n}")).collect::<String>()));
            }
        }
    }
    if !missing.is_empty() {
        return Err(EsdgError::config(
            format!("{}", run_dir.display()),
            format!("missing runs for {}: {}", spec.id, missing.join("; ")),
        ));
    }
    Ok(results)
}

fn fmt_sci(x: f64) -> String {
    format!("{x:.2e}")
}

fn cell(format: CellFormat, r: &RunSummary) -> String {
    if r.failure.is_some() {
        return "failed".into();
    }
    match format {
        CellFormat::ErrorNodes => match r.error {
            Some(e) => format!("{}/{}", fmt_sci(e), r.volume_nodes),
            None => format!("-/{}", r.volume_nodes),
        },
        CellFormat::Steps => r.accepted_steps.to_string(),
        CellFormat::RuntimeError { unit_ms } => {
            let t = r.wall_seconds * 1000.0 / unit_ms;
            let t = if unit_ms >= 1000.0 { format!("{t:.2}") } else { format!("{t:.0}") };
            match (r.modes, r.error) {
                (Some(_), Some(e)) => format!("{t}/{}", fmt_sci(e)),
                _ => t,
            }
        }
    }
}

/// Table in the published row/column layout: a label column followed by one
/// column per case.
pub fn table_rows(spec: &TableSpec, results: &[CaseResult]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["row".to_string()];
    header.extend(spec.cases.iter().map(|c| c.column.clone()));
    let mut rows = Vec::new();
    if spec.fom_row {
        let label = if spec.format == CellFormat::ErrorNodes { "FOM (to analytical)" } else { "FOM" };
        let mut row = vec![label.to_string()];
        row.extend(results.iter().map(|r| cell(spec.format, &r.fom)));
        rows.push(row);
    }
    for &n in &spec.rows {
        let mut row = vec![format!("N={n}")];
        row.extend(results.iter().map(|r| r.rom(n).map_or("-".into(), |s| cell(spec.format, s))));
        rows.push(row);
    }
    (header, rows)
}

/// One line per run with numeric fields, for scripting.
pub fn long_rows(results: &[CaseResult]) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec![
        "case",
        "model",
        "modes",
        "error",
        "volume_nodes",
        "boundary_nodes",
        "accepted_steps",
        "rejected_steps",
        "max_convective",
        "min_dissipation",
        "failure",
    ];
    let mut rows = Vec::new();
    for r in results {
        for s in std::iter::once(&r.fom).chain(&r.roms) {
            rows.push(vec![
                r.key.clone(),
                if s.modes.is_some() { "rom".into() } else { "fom".into() },
                s.modes.map_or(String::new(), |n| n.to_string()),
                s.error.map_or(String::new(), |e| format!("{e:e}")),
                s.volume_nodes.to_string(),
                s.boundary_nodes.to_string(),
                s.accepted_steps.to_string(),
                s.rejected_steps.to_string(),
                format!("{:e}", s.max_convective),
                format!("{:e}", s.min_dissipation),
                s.failure.clone().unwrap_or_default(),
            ]);
        }
    }
    (header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layouts() {
        let t1 = table_spec("table1").unwrap();
        assert_eq!(t1.cases.len(), 3);
        assert!(t1.cases.iter().all(|c| c.config.mesh.elements[0] * (c.config.mesh.degree + 1) == 1024));
        let t4 = table_spec("table4").unwrap();
        assert_eq!(t4.rows, vec![20, 40, 60, 80, 100]);
        assert!(table_spec("table9").is_err());
        for id in TABLE_IDS {
            table_spec(id).unwrap();
        }
    }

    #[test]
    fn missing_runs_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let spec = table_spec("table1").unwrap();
        let err = collect_results(&spec, dir.path(), false).unwrap_err();
        let msg = err.to_string();
        for key in ["advection-p0", "advection-p3", "advection-p7"] {
            assert!(msg.contains(key), "{msg}");
        }
        assert!(err.is_config_error());
    }

    #[test]
    fn rows_follow_the_published_layout() {
        let spec = table_spec("table1").unwrap();
        let summary = |modes, error, nodes| RunSummary {
            modes,
            error,
            volume_nodes: nodes,
            boundary_nodes: 0,
            accepted_steps: 10,
            rejected_steps: 0,
            wall_seconds: 0.5,
            max_convective: 0.0,
            min_dissipation: 0.0,
            failure: None,
        };
        let results: Vec<CaseResult> = spec
            .cases
            .iter()
            .map(|c| CaseResult {
                key: c.key.clone(),
                fom: summary(None, Some(8.71e-4), 1024),
                roms: c.modes.iter().map(|&n| summary(Some(n), Some(1.5e-5), 44)).collect(),
            })
            .collect();
        let (header, rows) = table_rows(&spec, &results);
        assert_eq!(header, ["row", "p=0", "p=3", "p=7"]);
        let labels: Vec<_> = rows.iter().map(|r| r[0].as_str()).collect();
        assert_eq!(labels, ["FOM (to analytical)", "N=15", "N=20", "N=25"]);
        assert_eq!(rows[0][1], "8.71e-4/1024");
        assert_eq!(rows[2][3], "1.50e-5/44");
    }
}
