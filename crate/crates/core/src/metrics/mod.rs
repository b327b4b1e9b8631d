//! Evaluation: temporal grounding (IoU, mIoU, R@θ), caption overlap metrics,
//! and judge-based accuracy/score behind [`JudgeBackend`].

mod caption;
mod judge;
mod report;
mod temporal;

pub use caption::{bleu4, cider, cider_per_item, meteor_exact, rouge_l, tokenize, CaptionPair};
pub use judge::{judge_report, JudgeBackend, JudgeItem, JudgeSummary, MockJudge, Verdict};
pub use report::{EvalRecord, MetricReport, TABLE_COLUMNS};
pub use temporal::{
    grounding_report, iou, GroundingPrediction, GroundingSummary, RECALL_THRESHOLDS,
};
