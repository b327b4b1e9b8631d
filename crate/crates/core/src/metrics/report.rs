use std::collections::HashMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::caption::{bleu4, cider, meteor_exact, rouge_l, CaptionPair};
use super::judge::{judge_report, JudgeBackend, JudgeItem};
use super::temporal::{iou, summarize_ious};
use crate::error::{Error, Result};
use crate::sampling::Segment;

/// Report columns, grounding then captioning then judged reasoning.
pub const TABLE_COLUMNS: [&str; 10] = [
    "mIoU",
    "R@0.3",
    "R@0.5",
    "R@0.7",
    "B@4",
    "METEOR-exact",
    "ROUGE-L",
    "CIDEr",
    "Acc",
    "Score",
];

/// One line of a predictions or references file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalRecord {
    pub item_id: String,
    #[serde(default, alias = "start_s", skip_serializing_if = "Option::is_none")]
    pub predicted_start_s: Option<f64>,
    #[serde(default, alias = "end_s", skip_serializing_if = "Option::is_none")]
    pub predicted_end_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    /// All parsed segments when there were several; the start/end pair then
    /// covers them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<Segment>,
}

impl EvalRecord {
    pub fn segment(&self) -> Option<Segment> {
        Segment::new(self.predicted_start_s?, self.predicted_end_s?).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub miou: Option<f64>,
    pub recall_at_0_3: Option<f64>,
    pub recall_at_0_5: Option<f64>,
    pub recall_at_0_7: Option<f64>,
    pub bleu4: Option<f64>,
    #[serde(rename = "meteor_exact")]
    pub meteor: Option<f64>,
    pub rouge_l: Option<f64>,
    pub cider: Option<f64>,
    pub acc: Option<f64>,
    pub score: Option<f64>,
    pub grounding_items: usize,
    pub caption_items: usize,
    /// Reference items with no usable prediction; they count as IoU 0 or an
    /// empty caption.
    pub missing_predictions: usize,
    pub judge_errored: usize,
}

impl MetricReport {
    /// Joins predictions to references by `item_id` and scores every
    /// reference item. The judge runs only when one is given.
    pub fn evaluate(
        predictions: &[EvalRecord],
        references: &[EvalRecord],
        judge: Option<&dyn JudgeBackend>,
    ) -> Result<MetricReport> {
        if references.is_empty() {
            return Err(Error::argument("no reference records"));
        }
        let by_id: HashMap<&str, &EvalRecord> = predictions
            .iter()
            .map(|p| (p.item_id.as_str(), p))
            .collect();

        let mut report = MetricReport::default();
        let mut ious = Vec::new();
        let mut captions = Vec::new();
        let mut judge_items = Vec::new();
        for r in references {
            let pred = by_id.get(r.item_id.as_str()).copied();
            let mut missing = pred.is_none();
            if let Some(gt) = r.segment() {
                match pred.and_then(EvalRecord::segment) {
                    Some(p) => ious.push(iou(&p, &gt)),
                    None => {
                        missing = true;
                        ious.push(0.0);
                    }
                }
            }
            if let Some(reference) = &r.answer_text {
                let candidate = match pred.and_then(|p| p.answer_text.clone()) {
                    Some(c) => c,
                    None => {
                        missing = true;
                        String::new()
                    }
                };
                judge_items.push(JudgeItem {
                    item_id: r.item_id.clone(),
                    question: r.question.clone().unwrap_or_default(),
                    reference: reference.clone(),
                    candidate: candidate.clone(),
                });
                captions.push(CaptionPair::new(
                    r.item_id.clone(),
                    candidate,
                    vec![reference.clone()],
                )?);
            }
            report.missing_predictions += usize::from(missing);
        }

        if !ious.is_empty() {
            let g = summarize_ious(&ious)?;
            report.miou = Some(g.miou);
            report.recall_at_0_3 = g.recall(0.3);
            report.recall_at_0_5 = g.recall(0.5);
            report.recall_at_0_7 = g.recall(0.7);
            report.grounding_items = g.count;
        }
        if !captions.is_empty() {
            let n = captions.len() as f64;
            report.bleu4 = Some(captions.iter().map(bleu4).sum::<f64>() / n);
            report.meteor = Some(captions.iter().map(meteor_exact).sum::<f64>() / n);
            report.rouge_l = Some(captions.iter().map(rouge_l).sum::<f64>() / n);
            report.cider = Some(cider(&captions)?);
            report.caption_items = captions.len();
        }
        if let Some(j) = judge {
            let s = judge_report(&judge_items, j)?;
            report.acc = s.acc;
            report.score = s.score;
            report.judge_errored = s.errored;
        }
        Ok(report)
    }

    pub fn values(&self) -> [Option<f64>; 10] {
        [
            self.miou,
            self.recall_at_0_3,
            self.recall_at_0_5,
            self.recall_at_0_7,
            self.bleu4,
            self.meteor,
            self.rouge_l,
            self.cider,
            self.acc,
            self.score,
        ]
    }

    /// Fixed-width table in [`TABLE_COLUMNS`] order; absent values print `-`.
    pub fn to_table(&self) -> String {
        let width = TABLE_COLUMNS.iter().map(|c| c.len()).max().unwrap_or(0) + 2;
        let mut out = String::new();
        for c in TABLE_COLUMNS {
            let _ = write!(out, "{c:>width$}");
        }
        out.push('\n');
        for v in self.values() {
            match v {
                Some(x) => {
                    let _ = write!(out, "{x:>width$.4}");
                }
                None => {
                    let _ = write!(out, "{:>width$}", "-");
                }
            }
        }
        out.push('\n');
        out
    }
}
