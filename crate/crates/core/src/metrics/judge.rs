use serde::{Deserialize, Serialize};

use super::caption::tokenize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    /// 0 to 5.
    pub score: f64,
}

/// Grades a free-form answer against a reference.
pub trait JudgeBackend: Send + Sync {
    fn judge(&self, question: &str, reference: &str, candidate: &str) -> Result<Verdict>;
}

/// Deterministic judge: correct when the token sequences are equal, score
/// `5 · F1` of unigram overlap.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockJudge;

impl JudgeBackend for MockJudge {
    fn judge(&self, _question: &str, reference: &str, candidate: &str) -> Result<Verdict> {
        let r = tokenize(reference);
        let c = tokenize(candidate);
        let mut pool = r.clone();
        let mut overlap = 0usize;
        for w in &c {
            if let Some(k) = pool.iter().position(|x| x == w) {
                pool.swap_remove(k);
                overlap += 1;
            }
        }
        let f1 = if overlap == 0 {
            0.0
        } else {
            2.0 * overlap as f64 / (r.len() + c.len()) as f64
        };
        Ok(Verdict {
            correct: !r.is_empty() && r == c,
            score: 5.0 * f1,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeItem {
    pub item_id: String,
    pub question: String,
    pub reference: String,
    pub candidate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeSummary {
    /// Absent when no item could be judged.
    pub acc: Option<f64>,
    pub score: Option<f64>,
    pub judged: usize,
    pub errored: usize,
}

/// Accuracy and mean score. Items whose judgement fails are excluded from
/// both denominators and counted in `errored`.
pub fn judge_report(items: &[JudgeItem], backend: &dyn JudgeBackend) -> Result<JudgeSummary> {
    let mut correct = 0usize;
    let mut score_sum = 0.0;
    let mut judged = 0usize;
    let mut errored = 0usize;
    for item in items {
        match backend.judge(&item.question, &item.reference, &item.candidate) {
            Ok(v) => {
                if !(0.0..=5.0).contains(&v.score) {
                    return Err(Error::Backend(format!(
                        "judge score {} for {} outside [0, 5]",
                        v.score, item.item_id
                    )));
                }
                judged += 1;
                correct += usize::from(v.correct);
                score_sum += v.score;
            }
            Err(_) => errored += 1,
        }
    }
    let (acc, score) = if judged == 0 {
        (None, None)
    } else {
        (
            Some(correct as f64 / judged as f64),
            Some(score_sum / judged as f64),
        )
    };
    Ok(JudgeSummary {
        acc,
        score,
        judged,
        errored,
    })
}
