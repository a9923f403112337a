//! Cross-seed statistics, step-size selection and variance tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use tetd_core::agents::RunRecord;

use crate::error::{HarnessError, Result};

/// Per-evaluation-point mean and standard error over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub steps: Vec<u64>,
    pub mean: Vec<f64>,
    /// Sample standard deviation over `√runs`; 0 for a single run.
    pub std_err: Vec<f64>,
    pub runs: usize,
}

impl Curve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,mean,std_err\n");
        for ((s, m), e) in self.steps.iter().zip(&self.mean).zip(&self.std_err) {
            writeln!(out, "{s},{m},{e}").expect("writing to a string");
        }
        out
    }
}

fn check_aligned(records: &[RunRecord]) -> Result<()> {
    let first = records.first().ok_or_else(|| HarnessError::Invalid("no runs to aggregate".into()))?;
    for r in records {
        if r.points.len() != first.points.len() || r.points.iter().zip(&first.points).any(|(a, b)| a.0 != b.0) {
            return Err(HarnessError::Invalid(format!(
                "run with seed {} has a different evaluation schedule from seed {}",
                r.seed, first.seed
            )));
        }
    }
    Ok(())
}

/// Mean and sample variance over seeds at every evaluation point.
fn moments(records: &[RunRecord]) -> Result<(Vec<u64>, Vec<f64>, Vec<f64>)> {
    check_aligned(records)?;
    let k = records.len() as f64;
    let steps: Vec<u64> = records[0].points.iter().map(|p| p.0).collect();
    let mut mean = vec![0.0; steps.len()];
    let mut var = vec![0.0; steps.len()];
    for (j, (m, v)) in mean.iter_mut().zip(var.iter_mut()).enumerate() {
        let mu = records.iter().map(|r| r.points[j].1).sum::<f64>() / k;
        *m = mu;
        *v = if records.len() > 1 {
            records.iter().map(|r| (r.points[j].1 - mu).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
    }
    Ok((steps, mean, var))
}

pub fn aggregate(records: &[RunRecord]) -> Result<Curve> {
    let (steps, mean, var) = moments(records)?;
    let k = records.len() as f64;
    let std_err = var.iter().map(|v| (v / k).sqrt()).collect();
    Ok(Curve { steps, mean, std_err, runs: records.len() })
}

/// Mean over evaluation points of the across-seed sample variance.
pub fn average_variance(records: &[RunRecord]) -> Result<f64> {
    let (_, _, var) = moments(records)?;
    Ok(var.iter().sum::<f64>() / var.len().max(1) as f64)
}

/// Final metric of a run for ranking. Diverged runs rank worst.
pub fn final_score(record: &RunRecord, maximize: bool) -> f64 {
    let worst = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
    match record.final_value() {
        Some(v) if !record.diverged && v.is_finite() => v,
        _ => worst,
    }
}

/// Mean final score over the seeds of one step size.
pub fn mean_final_score(records: &[RunRecord], maximize: bool) -> f64 {
    records.iter().map(|r| final_score(r, maximize)).sum::<f64>() / records.len() as f64
}

/// Runs that share a step size.
#[derive(Debug, Clone)]
pub struct AlphaGroup {
    pub alpha: f64,
    pub records: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub alpha: f64,
    /// Mean final score at `alpha`; infinite if any run diverged.
    pub score: f64,
    pub curve: Curve,
    pub average_variance: f64,
    pub diverged_runs: usize,
}

/// Picks the step size with the best mean final score. Ties go to the
/// smaller step size.
pub fn select_best_alpha(groups: &[AlphaGroup], maximize: bool) -> Result<Selection> {
    let mut best: Option<(&AlphaGroup, f64)> = None;
    for g in groups {
        if g.records.is_empty() {
            return Err(HarnessError::Invalid(format!("no seeds for step size {}", g.alpha)));
        }
        let score = mean_final_score(&g.records, maximize);
        let better = match best {
            None => true,
            Some((b, s)) => {
                let strictly = if maximize { score > s } else { score < s };
                strictly || (score == s && g.alpha < b.alpha)
            }
        };
        if better {
            best = Some((g, score));
        }
    }
    let (group, score) = best.ok_or_else(|| HarnessError::Invalid("no step sizes to select from".into()))?;
    Ok(Selection {
        alpha: group.alpha,
        score,
        curve: aggregate(&group.records)?,
        average_variance: average_variance(&group.records)?,
        diverged_runs: group.records.iter().filter(|r| r.diverged).count(),
    })
}

/// When a table cell counts as successful.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SuccessRule {
    /// Mean final metric strictly below the threshold.
    FinalBelow { threshold: f64 },
    /// Mean final metric at or above the threshold.
    FinalAbove { threshold: f64 },
}

impl SuccessRule {
    /// Success means only that no run at the chosen step size diverged.
    pub fn not_diverged(maximize: bool) -> Self {
        if maximize {
            SuccessRule::FinalAbove { threshold: f64::MIN }
        } else {
            SuccessRule::FinalBelow { threshold: f64::MAX }
        }
    }

    /// Diverged runs make the score infinite, so they always fail.
    pub fn holds(&self, selection: &Selection) -> bool {
        let s = selection.score;
        s.is_finite()
            && match *self {
                SuccessRule::FinalBelow { threshold } => s < threshold,
                SuccessRule::FinalAbove { threshold } => s >= threshold,
            }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceCell {
    pub alpha: f64,
    pub score: f64,
    pub average_variance: f64,
    pub success: bool,
    /// `floor(log10(average_variance))`, absent for a zero variance.
    pub order: Option<i32>,
}

impl VarianceCell {
    pub fn new(selection: &Selection, rule: &SuccessRule) -> Self {
        let v = selection.average_variance;
        Self {
            alpha: selection.alpha,
            score: selection.score,
            average_variance: v,
            success: rule.holds(selection),
            order: (v > 0.0 && v.is_finite()).then(|| v.log10().floor() as i32),
        }
    }

    /// `-` when unsuccessful, `0` for zero variance, otherwise `10ᵏ`.
    pub fn render(&self) -> String {
        match (self.success, self.order) {
            (false, _) => "-".into(),
            (true, Some(k)) => format!("10{}", superscript(k)),
            (true, None) if self.average_variance == 0.0 => "0".into(),
            (true, None) => "inf".into(),
        }
    }
}

fn superscript(k: i32) -> String {
    const DIGITS: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];
    let mut s = String::new();
    if k < 0 {
        s.push('⁻');
    }
    for c in k.unsigned_abs().to_string().chars() {
        s.push(DIGITS[c.to_digit(10).expect("decimal digit") as usize]);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTable {
    pub rule: SuccessRule,
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<VarianceCell>>,
}

impl VarianceTable {
    /// `selections[row][column]` are the best-step-size results.
    pub fn new(rows: Vec<String>, columns: Vec<String>, selections: &[Vec<Selection>], rule: SuccessRule) -> Result<Self> {
        if selections.len() != rows.len() || selections.iter().any(|r| r.len() != columns.len()) {
            return Err(HarnessError::Invalid("selection grid does not match the table shape".into()));
        }
        let cells = selections
            .iter()
            .map(|row| row.iter().map(|s| VarianceCell::new(s, &rule)).collect())
            .collect();
        Ok(Self { rule, rows, columns, cells })
    }

    /// Plain-text table with one line per row.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let width = self.rows.iter().map(|r| r.chars().count()).max().unwrap_or(0).max(6);
        write!(out, "{:width$}", "target").unwrap();
        for c in &self.columns {
            write!(out, " | {c:>8}").unwrap();
        }
        out.push('\n');
        for (row, cells) in self.rows.iter().zip(&self.cells) {
            write!(out, "{row:width$}").unwrap();
            for cell in cells {
                write!(out, " | {:>8}", cell.render()).unwrap();
            }
            out.push('\n');
        }
        out
    }
}
