//! Turns a finished sweep into best-step-size curves and a variance table.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tetd_core::agents::RunRecord;
use tetd_core::envs::baird;

use crate::aggregate::{select_best_alpha, AlphaGroup, Selection, SuccessRule, VarianceTable};
use crate::config::{EnvironmentName, Setting};
use crate::error::{HarnessError, Result};
use crate::sweep::{load_run, Manifest};

/// Prediction runs succeed when the mean final error is below this.
pub const PREDICTION_ERROR_THRESHOLD: f64 = 5.0;

/// Success rule used when none is given.
///
/// - prediction: mean final RMSVE below 5;
/// - Baird control: no divergence and mean final `‖w‖` below half of `‖w₀‖`;
/// - CartPole: no divergence.
pub fn default_rule(manifest: &Manifest) -> SuccessRule {
    match (manifest.config.environment, manifest.config.setting) {
        (EnvironmentName::Baird, Setting::Prediction) => {
            SuccessRule::FinalBelow { threshold: PREDICTION_ERROR_THRESHOLD }
        }
        (EnvironmentName::Baird, _) => {
            let w0 = baird::baird_control_initial_weights();
            SuccessRule::FinalBelow { threshold: 0.5 * w0.iter().map(|x| x * x).sum::<f64>().sqrt() }
        }
        (EnvironmentName::Cartpole, _) => SuccessRule::not_diverged(true),
    }
}

/// Best-step-size result for one (target, algorithm) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub target: f64,
    pub label: String,
    pub selection: Selection,
    /// Aggregate curve file relative to the output directory.
    pub curve_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub table: VarianceTable,
    pub cells: Vec<CellReport>,
}

pub const TABLE_FILE: &str = "table.json";
const AGGREGATES_DIR: &str = "aggregates";

fn file_label(label: &str) -> String {
    label.chars().filter(|c| c.is_ascii_alphanumeric() || *c == '.').collect()
}

/// Step-size groups per algorithm label, then per target.
type Row = Vec<(String, Vec<AlphaGroup>)>;

/// Loads every run of the manifest in `dir` grouped by target, then label,
/// then step size. Groups keep sweep order.
fn grouped_runs(dir: &Path, manifest: &Manifest) -> Result<Vec<(f64, Row)>> {
    let mut rows: Vec<(f64, Row)> = Vec::new();
    for entry in &manifest.entries {
        let record = load_run(dir, entry)?;
        let target = entry.point.target;
        let row = match rows.iter().position(|r| r.0 == target) {
            Some(i) => &mut rows[i].1,
            None => {
                rows.push((target, Vec::new()));
                &mut rows.last_mut().expect("just pushed").1
            }
        };
        let column = match row.iter().position(|c| c.0 == entry.label) {
            Some(i) => &mut row[i].1,
            None => {
                row.push((entry.label.clone(), Vec::new()));
                &mut row.last_mut().expect("just pushed").1
            }
        };
        match column.iter_mut().find(|g| g.alpha == entry.point.alpha) {
            Some(g) => g.records.push(record),
            None => column.push(AlphaGroup { alpha: entry.point.alpha, records: vec![record] }),
        }
    }
    Ok(rows)
}

/// Selects the best step size for every cell, writes one aggregate CSV per
/// cell plus `table.json`, and returns the report.
pub fn build_table(dir: &Path, rule: Option<SuccessRule>) -> Result<TableReport> {
    let manifest = Manifest::load(dir)?;
    let rule = rule.unwrap_or_else(|| default_rule(&manifest));
    let grouped = grouped_runs(dir, &manifest)?;
    let columns: Vec<String> = grouped.first().map(|r| r.1.iter().map(|c| c.0.clone()).collect()).unwrap_or_default();
    let aggregates = dir.join(AGGREGATES_DIR);
    fs::create_dir_all(&aggregates).map_err(|e| HarnessError::io(&aggregates, e))?;

    let mut rows = Vec::new();
    let mut selections = Vec::new();
    let mut cells = Vec::new();
    for (target, row) in &grouped {
        if row.iter().map(|c| &c.0).ne(columns.iter()) {
            return Err(HarnessError::Invalid(format!("target {target} does not cover the same algorithms")));
        }
        let mut row_sel = Vec::new();
        for (label, groups) in row {
            let selection = select_best_alpha(groups, manifest.maximize)?;
            let curve_file = format!("{AGGREGATES_DIR}/{}_target{target}.csv", file_label(label));
            let path: PathBuf = dir.join(&curve_file);
            fs::write(&path, selection.curve.to_csv()).map_err(|e| HarnessError::io(&path, e))?;
            cells.push(CellReport { target: *target, label: label.clone(), selection: selection.clone(), curve_file });
            row_sel.push(selection);
        }
        rows.push(target.to_string());
        selections.push(row_sel);
    }
    let report = TableReport { table: VarianceTable::new(rows, columns, &selections, rule)?, cells };
    let path = dir.join(TABLE_FILE);
    let json = serde_json::to_vec_pretty(&report).map_err(|e| HarnessError::json(&path, e))?;
    fs::write(&path, json).map_err(|e| HarnessError::io(&path, e))?;
    Ok(report)
}

/// All runs of the manifest at one (target, label, step size).
pub fn runs_at(dir: &Path, manifest: &Manifest, target: f64, label: &str, alpha: f64) -> Result<Vec<RunRecord>> {
    manifest
        .entries
        .iter()
        .filter(|e| e.point.target == target && e.label == label && e.point.alpha == alpha)
        .map(|e| load_run(dir, e))
        .collect()
}
