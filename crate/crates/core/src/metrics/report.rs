use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ScoreOptions, Tally, ThresholdMode};
use crate::qra::TaskKind;

/// One line of a results table. `None` fields are "n/a" (empty denominator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scope: String,
    pub records: u64,
    pub threshold_m: f64,
    pub decision_f1: Option<f64>,
    pub occ_recall: Option<f64>,
    pub occ_at: Option<f64>,
    pub vis_mae: Option<f64>,
    pub miou: Option<f64>,
    pub bert: Option<f64>,
    pub parse_failure_rate: Option<f64>,
}

impl MetricRow {
    fn from_tally(scope: &str, t: &Tally, slot: usize, threshold_m: f64, mode: ThresholdMode) -> Self {
        MetricRow {
            scope: scope.to_string(),
            records: t.records,
            threshold_m,
            decision_f1: t.decision_f1(),
            occ_recall: t.occ_recall(),
            occ_at: t.occ_at(slot, mode),
            vis_mae: t.vis_mae(),
            miou: t.miou(),
            bert: t.similarity(),
            parse_failure_rate: t.parse_failure_rate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub method: String,
    pub threshold_mode: ThresholdMode,
    /// Pooled over all records, thresholded at the aggregate threshold.
    pub aggregate: MetricRow,
    /// Spatial, counting, maneuver; thresholded at the task threshold.
    pub tasks: Vec<MetricRow>,
    /// Records without any prediction (scored as parse failures).
    pub missing_predictions: Vec<String>,
    pub warnings: Vec<String>,
}

const CSV_HEADER: &str =
    "method,scope,records,threshold_m,decision_f1,occ_recall,occ_at,vis_mae,miou,bert,parse_failure_rate";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"))
}

fn csv_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x}"))
}

fn threshold_label(t: f64) -> String {
    format!("Occ.@{t}m")
}

impl ScoreReport {
    pub(super) fn build(
        opts: &ScoreOptions,
        aggregate: &Tally,
        per_task: &BTreeMap<TaskKind, Tally>,
        missing_predictions: Vec<String>,
        warnings: Vec<String>,
    ) -> Self {
        let empty = Tally::default();
        ScoreReport {
            method: opts.method.clone(),
            threshold_mode: opts.threshold_mode,
            aggregate: MetricRow::from_tally(
                "aggregate",
                aggregate,
                0,
                opts.aggregate_threshold_m,
                opts.threshold_mode,
            ),
            tasks: TaskKind::ALL
                .iter()
                .map(|k| {
                    MetricRow::from_tally(
                        k.as_str(),
                        per_task.get(k).unwrap_or(&empty),
                        1,
                        opts.task_threshold_m,
                        opts.threshold_mode,
                    )
                })
                .collect(),
            missing_predictions,
            warnings,
        }
    }

    /// Aggregate table, task breakdown, and a per-task supplement holding
    /// the columns the breakdown omits.
    pub fn render_markdown(&self) -> String {
        let a = &self.aggregate;
        let mut out = String::new();
        let _ = writeln!(out, "### Aggregate ({} threshold)\n", self.threshold_mode.as_str());
        let _ = writeln!(
            out,
            "| Method | F1 | Occ. | {} | Vis. MAE | BERT | mIoU | Parse fail | Records |",
            threshold_label(a.threshold_m)
        );
        let _ = writeln!(out, "|---|---|---|---|---|---|---|---|---|");
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            self.method,
            cell(a.decision_f1),
            cell(a.occ_recall),
            cell(a.occ_at),
            cell(a.vis_mae),
            cell(a.bert),
            cell(a.miou),
            cell(a.parse_failure_rate),
            a.records
        );

        let _ = writeln!(out, "\n### Task breakdown\n");
        let mut header = String::from("| Method |");
        let mut rule = String::from("|---|");
        let mut row = format!("| {} |", self.method);
        for t in &self.tasks {
            let title = capitalized(&t.scope);
            let _ = write!(
                header,
                " {title} F1 | {title} Occ. | {title} {} | {title} Vis. MAE |",
                threshold_label(t.threshold_m)
            );
            rule.push_str("---|---|---|---|");
            let _ = write!(
                row,
                " {} | {} | {} | {} |",
                cell(t.decision_f1),
                cell(t.occ_recall),
                cell(t.occ_at),
                cell(t.vis_mae)
            );
        }
        let _ = writeln!(out, "{header}\n{rule}\n{row}");

        let _ = writeln!(out, "\n### Task supplement\n");
        let _ = writeln!(out, "| Task | Records | mIoU | BERT | Parse fail |");
        let _ = writeln!(out, "|---|---|---|---|---|");
        for t in &self.tasks {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                t.scope,
                t.records,
                cell(t.miou),
                cell(t.bert),
                cell(t.parse_failure_rate)
            );
        }
        if !self.missing_predictions.is_empty() {
            let _ = writeln!(out, "\nMissing predictions: {}", self.missing_predictions.len());
        }
        for w in &self.warnings {
            let _ = writeln!(out, "\nWarning: {w}");
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in std::iter::once(&self.aggregate).chain(&self.tasks) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                self.method,
                r.scope,
                r.records,
                r.threshold_m,
                csv_cell(r.decision_f1),
                csv_cell(r.occ_recall),
                csv_cell(r.occ_at),
                csv_cell(r.vis_mae),
                csv_cell(r.miou),
                csv_cell(r.bert),
                csv_cell(r.parse_failure_rate)
            );
        }
        out
    }

    pub fn render_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }
}

fn capitalized(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}
