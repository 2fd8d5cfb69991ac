//! CSV and JSON reports.

use serde::Serialize;

use nisp_core::analysis::BoundReport;
use nisp_core::surgery::SurgeryReport;
use nisp_core::trainer::LearningCurve;
use nisp_core::ImportanceVector;

use crate::{Error, Result};

fn to_csv<R: Serialize>(rows: impl IntoIterator<Item = R>, header: &[&str]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// `neuron_index,score` by descending score; ties keep index order.
pub fn ranking_csv(s: &ImportanceVector) -> Result<String> {
    to_csv(s.ranking().into_iter().map(|i| (i, s.scores[i])), &["neuron_index", "score"])
}

pub fn surgery_csv(report: &SurgeryReport) -> Result<String> {
    to_csv(
        report
            .rows
            .iter()
            .map(|r| (r.layer_id, r.kept, r.removed, r.params_before, r.params_after)),
        &["layer_id", "kept", "removed", "params_before", "params_after"],
    )
}

pub fn curve_csv(curve: &LearningCurve) -> Result<String> {
    to_csv(
        curve.points.iter().map(|p| (p.epoch, p.train_loss, p.eval_accuracy)),
        &["epoch", "train_loss", "eval_accuracy"],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub strategy: String,
    pub seed: u64,
    pub pre_finetune_accuracy: f64,
    pub post_finetune_accuracy: f64,
    pub ware: f64,
    pub flops_reduction_pct: f64,
    pub params_reduction_pct: f64,
    pub top1_agreement: f64,
}

pub const COMPARE_HEADER: [&str; 8] = [
    "strategy",
    "seed",
    "pre_finetune_accuracy",
    "post_finetune_accuracy",
    "ware",
    "flops_reduction_pct",
    "params_reduction_pct",
    "top1_agreement",
];

pub fn compare_csv(rows: &[CompareRow]) -> Result<String> {
    to_csv(rows, &COMPARE_HEADER)
}

/// Per-epoch curves of every compare run, in long format.
pub fn compare_curves_csv(curves: &[(String, u64, LearningCurve)]) -> Result<String> {
    to_csv(
        curves.iter().flat_map(|(strategy, seed, c)| {
            c.points
                .iter()
                .map(move |p| (strategy.as_str(), seed, p.epoch, p.train_loss, p.eval_accuracy))
        }),
        &["strategy", "seed", "epoch", "train_loss", "eval_accuracy"],
    )
}

/// One random-mask bound check.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    /// Units kept by the mask.
    pub kept: usize,
    pub report: BoundReport,
}

pub fn verify_csv(trials: &[Trial]) -> Result<String> {
    to_csv(
        trials.iter().enumerate().map(|(t, Trial { kept, report: r })| {
            (
                t,
                kept,
                r.lhs,
                r.rhs,
                r.slack_ratio(),
                r.holds,
                r.c_sigma_product,
                r.c_x,
            )
        }),
        &["trial", "kept", "lhs", "rhs", "slack_ratio", "holds", "c_sigma_product", "c_x"],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub layer_id: usize,
    pub trials: usize,
    pub violations: usize,
    /// Over trials with `lhs > 0`; `null` when there are none.
    pub min_slack: Option<f64>,
    pub median_slack: Option<f64>,
    pub max_slack: Option<f64>,
    /// rhs/lhs of every trial, in trial order.
    pub slack_ratios: Vec<Option<f64>>,
    pub r_vector: Option<Vec<f64>>,
    pub c_sigma_product: Option<f64>,
    pub c_x: Option<f64>,
}

impl VerifySummary {
    pub fn new(layer_id: usize, trials: &[Trial]) -> Self {
        let ratios: Vec<f64> = trials.iter().map(|t| t.report.slack_ratio()).collect();
        let mut finite: Vec<f64> = trials
            .iter()
            .filter(|t| t.report.lhs > 0.0)
            .map(|t| t.report.slack_ratio())
            .collect();
        finite.sort_by(f64::total_cmp);
        let first = trials.first().map(|t| &t.report);
        VerifySummary {
            layer_id,
            trials: trials.len(),
            violations: trials.iter().filter(|t| !t.report.holds).count(),
            min_slack: finite.first().copied(),
            median_slack: (!finite.is_empty()).then(|| finite[finite.len() / 2]),
            max_slack: finite.last().copied(),
            slack_ratios: ratios.into_iter().map(|x| x.is_finite().then_some(x)).collect(),
            r_vector: first.map(|r| r.r_vector.clone()),
            c_sigma_product: first.map(|r| r.c_sigma_product),
            c_x: first.map(|r| r.c_x),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}
