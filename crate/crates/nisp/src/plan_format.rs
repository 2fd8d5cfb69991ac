//! Importance plans as JSON: an array with one object per layer,
//! `{"layer_id", "scores", "mask", "channel_scores"}`. `mask` is `null` for
//! layers that were scored but not pruned; `channel_scores` appears only for
//! spatial layers.

use serde::{Deserialize, Serialize};

use nisp_core::{ImportancePlan, ImportanceVector, PlanEntry, PruneIndicator};

use crate::model_format::{nums, Num};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc<N> {
    layer_id: usize,
    scores: Vec<N>,
    mask: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channel_scores: Option<Vec<N>>,
}

pub fn save_plan(plan: &ImportancePlan) -> String {
    let docs: Vec<EntryDoc<Num>> = plan
        .entries
        .iter()
        .map(|e| EntryDoc {
            layer_id: e.layer_id,
            scores: nums(&e.scores.scores),
            mask: e.indicator.as_ref().map(|i| i.mask.clone()),
            channel_scores: e.channel_scores.as_deref().map(nums),
        })
        .collect();
    let mut text = serde_json::to_string(&docs).expect("plan scores are finite");
    text.push('\n');
    text
}

pub fn load_plan(text: &str) -> Result<ImportancePlan> {
    let docs: Vec<EntryDoc<f64>> = serde_json::from_str(text).map_err(|e| Error::Format(format!("plan: {}", e)))?;
    let mut entries = Vec::with_capacity(docs.len());
    for d in docs {
        if let Some(mask) = &d.mask {
            if mask.len() != d.scores.len() {
                return Err(Error::Format(format!(
                    "plan layer {}: mask has {} entries for {} scores",
                    d.layer_id,
                    mask.len(),
                    d.scores.len()
                )));
            }
        }
        if entries.last().is_some_and(|e: &PlanEntry| e.layer_id >= d.layer_id) {
            return Err(Error::Format("plan entries must be sorted by layer id".into()));
        }
        entries.push(PlanEntry {
            layer_id: d.layer_id,
            scores: ImportanceVector::new(d.layer_id, d.scores)?,
            indicator: d.mask.map(|mask| PruneIndicator {
                layer_id: d.layer_id,
                mask,
            }),
            channel_scores: d.channel_scores,
        });
    }
    Ok(ImportancePlan { entries })
}
