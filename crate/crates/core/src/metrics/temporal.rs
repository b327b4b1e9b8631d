use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::Segment;

/// IoU thresholds reported as R@θ.
pub const RECALL_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingPrediction {
    pub item_id: String,
    pub predicted: Segment,
    pub reference: Segment,
}

/// Temporal IoU in seconds; 0 for disjoint segments.
pub fn iou(a: &Segment, b: &Segment) -> f64 {
    let inter = (a.end_s.min(b.end_s) - a.start_s.max(b.start_s)).max(0.0);
    let union = a.end_s.max(b.end_s) - a.start_s.min(b.start_s);
    if inter <= 0.0 || union <= 0.0 {
        return 0.0;
    }
    inter / union
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingSummary {
    pub miou: f64,
    /// `(θ, fraction with IoU ≥ θ)` for each of [`RECALL_THRESHOLDS`].
    pub recall_at: Vec<(f64, f64)>,
    pub count: usize,
}

impl GroundingSummary {
    pub fn recall(&self, threshold: f64) -> Option<f64> {
        self.recall_at
            .iter()
            .find(|(t, _)| *t == threshold)
            .map(|&(_, r)| r)
    }
}

pub fn grounding_report(preds: &[GroundingPrediction]) -> Result<GroundingSummary> {
    if preds.is_empty() {
        return Err(Error::argument("grounding report over zero predictions"));
    }
    let ious: Vec<f64> = preds
        .iter()
        .map(|p| iou(&p.predicted, &p.reference))
        .collect();
    summarize_ious(&ious)
}

pub(crate) fn summarize_ious(ious: &[f64]) -> Result<GroundingSummary> {
    if ious.is_empty() {
        return Err(Error::argument("grounding report over zero predictions"));
    }
    let n = ious.len() as f64;
    let recall_at = RECALL_THRESHOLDS
        .iter()
        .map(|&t| (t, ious.iter().filter(|&&v| v >= t).count() as f64 / n))
        .collect();
    Ok(GroundingSummary {
        miou: ious.iter().sum::<f64>() / n,
        recall_at,
        count: ious.len(),
    })
}
