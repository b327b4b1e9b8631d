//! Annotations and the instruction-following records built from them.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grounding::{format_segment, GroundingProtocol};
use crate::orchestrator::QaItem;
use crate::sampling::{Segment, VideoTimeline};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub segment: Segment,
    #[serde(default)]
    pub caption: String,
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub video_id: String,
    pub frame_count: usize,
    pub fps: f64,
    pub clips: Vec<Clip>,
}

impl Annotation {
    pub fn timeline(&self) -> Result<VideoTimeline> {
        VideoTimeline::new(self.frame_count, self.fps)
    }

    /// Clips sorted, disjoint, inside the video, each with an action.
    pub fn validate(&self) -> Result<()> {
        let duration = self.timeline()?.duration_s();
        if self.clips.is_empty() {
            return Err(Error::argument(format!(
                "{}: annotation has no clips",
                self.video_id
            )));
        }
        let mut prev_end = 0.0;
        for (k, clip) in self.clips.iter().enumerate() {
            let s = Segment::new(clip.segment.start_s, clip.segment.end_s)?;
            s.check_within(duration)?;
            if s.start_s < prev_end {
                return Err(Error::argument(format!(
                    "{}: clip {k} starts at {} before the previous clip ends at {prev_end}",
                    self.video_id, s.start_s
                )));
            }
            if clip.actions.is_empty() || clip.actions.iter().any(|a| a.trim().is_empty()) {
                return Err(Error::argument(format!(
                    "{}: clip {k} needs action labels",
                    self.video_id
                )));
            }
            prev_end = s.end_s;
        }
        Ok(())
    }

    /// Distinct actions in order of first appearance.
    pub fn distinct_actions(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for a in self.clips.iter().flat_map(|c| &c.actions) {
            if !seen.contains(&a.as_str()) {
                seen.push(a);
            }
        }
        seen
    }
}

/// Writes captions for clips that have none.
pub trait CaptionerBackend: Send + Sync {
    fn caption(&self, video_id: &str, clip: &Clip) -> Result<String>;
}

/// `"clip of <actions> from <s>s to <e>s"`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockCaptioner;

impl CaptionerBackend for MockCaptioner {
    fn caption(&self, _video_id: &str, clip: &Clip) -> Result<String> {
        Ok(format!(
            "clip of {} from {}s to {}s",
            clip.actions.join(" and "),
            clip.segment.start_s,
            clip.segment.end_s
        ))
    }
}

pub fn fill_captions(ann: &mut Annotation, captioner: &dyn CaptionerBackend) -> Result<()> {
    for k in 0..ann.clips.len() {
        if ann.clips[k].caption.trim().is_empty() {
            ann.clips[k].caption = captioner.caption(&ann.video_id, &ann.clips[k])?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Captioning,
    FirstLastGrounding,
    SequenceReasoning,
    CountOfTimes,
    MultiTurn,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Captioning,
        TaskKind::FirstLastGrounding,
        TaskKind::SequenceReasoning,
        TaskKind::CountOfTimes,
        TaskKind::MultiTurn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Captioning => "captioning",
            TaskKind::FirstLastGrounding => "first_last_grounding",
            TaskKind::SequenceReasoning => "sequence_reasoning",
            TaskKind::CountOfTimes => "count_of_times",
            TaskKind::MultiTurn => "multi_turn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub record_id: String,
    pub video_id: String,
    pub frame_count: usize,
    pub fps: f64,
    pub task: TaskKind,
    /// `ar`, `asr`, `first`, `last`, `before`, `after`, `times` or `mtqa`.
    pub subtask: String,
    pub turns: Vec<Turn>,
    #[serde(default)]
    pub gt_segments: Vec<Segment>,
}

impl QaRecord {
    /// The last turn as a runnable item.
    pub fn to_item(&self) -> Result<QaItem> {
        let last = self
            .turns
            .last()
            .ok_or_else(|| Error::argument(format!("{}: record has no turns", self.record_id)))?;
        Ok(QaItem {
            item_id: self.record_id.clone(),
            video_id: self.video_id.clone(),
            frame_count: self.frame_count,
            fps: self.fps,
            question: last.question.clone(),
            reference_answer: Some(last.answer.clone()),
            gt_segments: self.gt_segments.clone(),
        })
    }
}

const AR: [&str; 3] = [
    "What action is performed {span}?",
    "Describe what the person does {span}.",
    "Which activity takes place {span}?",
];
const ASR: [&str; 3] = [
    "List the actions performed {span} in order.",
    "Describe the sequence of activities {span}.",
    "What series of actions happens {span}?",
];
const FIRST: [&str; 3] = [
    "When does \"{action}\" happen for the first time?",
    "Find the first segment in which \"{action}\" occurs.",
    "At what time is \"{action}\" first performed?",
];
const LAST: [&str; 3] = [
    "When does \"{action}\" happen for the last time?",
    "Find the last segment in which \"{action}\" occurs.",
    "At what time is \"{action}\" last performed?",
];
const BEFORE: [&str; 3] = [
    "What happens right before \"{action}\" {span}?",
    "Describe the event preceding \"{action}\" {span}.",
    "What does the person do just before \"{action}\" {span}?",
];
const AFTER: [&str; 3] = [
    "What happens right after \"{action}\" {span}?",
    "Describe the event following \"{action}\" {span}.",
    "What does the person do just after \"{action}\" {span}?",
];
const TIMES: [&str; 3] = [
    "How many times does \"{action}\" occur in the video?",
    "Count the occurrences of \"{action}\" in the video.",
    "How often is \"{action}\" performed in the video?",
];

struct Builder<'a> {
    ann: &'a Annotation,
    proto: &'a GroundingProtocol,
    duration: f64,
    rng: ChaCha8Rng,
    out: Vec<QaRecord>,
}

impl Builder<'_> {
    fn span(&self, seg: &Segment) -> Result<String> {
        format_segment(seg, self.duration, self.proto)
    }

    fn question(
        &mut self,
        bank: &[&'static str; 3],
        action: &str,
        seg: Option<&Segment>,
    ) -> Result<String> {
        let t = bank[self.rng.random_range(0..bank.len())];
        let span = seg.map(|s| self.span(s)).transpose()?.unwrap_or_default();
        Ok(t.replace("{action}", action).replace("{span}", &span))
    }

    fn push(&mut self, task: TaskKind, subtask: &str, turns: Vec<Turn>, gt_segments: Vec<Segment>) {
        let record_id = format!("{}-{:04}", self.ann.video_id, self.out.len());
        self.out.push(QaRecord {
            record_id,
            video_id: self.ann.video_id.clone(),
            frame_count: self.ann.frame_count,
            fps: self.ann.fps,
            task,
            subtask: subtask.to_owned(),
            turns,
            gt_segments,
        });
    }

    fn caption_turn(&mut self, clip: &Clip) -> Result<(Turn, &'static str)> {
        let (bank, sub) = if clip.actions.len() == 1 {
            (&AR, "ar")
        } else {
            (&ASR, "asr")
        };
        let question = self.question(bank, "", Some(&clip.segment))?;
        let answer = if clip.caption.trim().is_empty() {
            clip.actions.join(", ")
        } else {
            clip.caption.clone()
        };
        Ok((Turn { question, answer }, sub))
    }

    fn occurrence_turn(&mut self, action: &str, last: bool) -> Result<(Turn, Segment)> {
        let mut clips = self
            .ann
            .clips
            .iter()
            .filter(|c| c.actions.iter().any(|a| a == action));
        let clip = if last {
            clips.next_back()
        } else {
            clips.next()
        }
        .expect("action came from the annotation");
        let seg = clip.segment;
        let question = self.question(if last { &LAST } else { &FIRST }, action, None)?;
        Ok((
            Turn {
                question,
                answer: self.span(&seg)?,
            },
            seg,
        ))
    }

    /// Question about the clip next to `anchor`; `before` asks for `anchor - 1`.
    fn neighbour_turn(&mut self, anchor: usize, before: bool) -> Result<(Turn, Segment)> {
        let target = if before { anchor - 1 } else { anchor + 1 };
        let a = &self.ann.clips[anchor];
        let action = a.actions.join(" and ");
        let question = self.question(
            if before { &BEFORE } else { &AFTER },
            &action,
            Some(&a.segment),
        )?;
        let t = &self.ann.clips[target];
        let answer = if t.caption.trim().is_empty() {
            t.actions.join(", ")
        } else {
            t.caption.clone()
        };
        Ok((Turn { question, answer }, t.segment))
    }

    fn count_turn(&mut self, action: &str) -> Result<(Turn, Vec<Segment>)> {
        let segs: Vec<Segment> = self
            .ann
            .clips
            .iter()
            .filter(|c| c.actions.iter().any(|a| a == action))
            .map(|c| c.segment)
            .collect();
        let question = self.question(&TIMES, action, None)?;
        Ok((
            Turn {
                question,
                answer: segs.len().to_string(),
            },
            segs,
        ))
    }
}

/// Records for one annotated video. Counts per task, for `C` clips and `A`
/// distinct actions: `C` captioning, `2A` first/last, `2(C−1)` before/after,
/// `A` counting and one multi-turn record.
pub fn gen_tasks(ann: &Annotation, proto: &GroundingProtocol, seed: u64) -> Result<Vec<QaRecord>> {
    ann.validate()?;
    let mut b = Builder {
        ann,
        proto,
        duration: ann.timeline()?.duration_s(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        out: Vec::new(),
    };
    let actions: Vec<String> = ann
        .distinct_actions()
        .into_iter()
        .map(str::to_owned)
        .collect();

    for clip in &ann.clips {
        let (turn, sub) = b.caption_turn(clip)?;
        b.push(TaskKind::Captioning, sub, vec![turn], vec![clip.segment]);
    }
    for action in &actions {
        for (last, sub) in [(false, "first"), (true, "last")] {
            let (turn, seg) = b.occurrence_turn(action, last)?;
            b.push(TaskKind::FirstLastGrounding, sub, vec![turn], vec![seg]);
        }
    }
    for k in 0..ann.clips.len().saturating_sub(1) {
        let (turn, seg) = b.neighbour_turn(k + 1, true)?;
        b.push(TaskKind::SequenceReasoning, "before", vec![turn], vec![seg]);
        let (turn, seg) = b.neighbour_turn(k, false)?;
        b.push(TaskKind::SequenceReasoning, "after", vec![turn], vec![seg]);
    }
    for action in &actions {
        let (turn, segs) = b.count_turn(action)?;
        b.push(TaskKind::CountOfTimes, "times", vec![turn], segs);
    }

    let (caption, _) = b.caption_turn(&ann.clips[0])?;
    let (grounding, seg) = b.occurrence_turn(&ann.clips[0].actions[0], false)?;
    let (reasoning, final_segs) = if ann.clips.len() > 1 {
        let (t, s) = b.neighbour_turn(0, false)?;
        (t, vec![s])
    } else {
        b.count_turn(&ann.clips[0].actions[0])?
    };
    let mut segs = vec![seg];
    segs.extend(final_segs.into_iter().filter(|s| *s != seg));
    segs.sort_by(|x, y| x.start_s.total_cmp(&y.start_s));
    b.push(
        TaskKind::MultiTurn,
        "mtqa",
        vec![caption, grounding, reasoning],
        segs,
    );
    Ok(b.out)
}

/// `C + 2A + 2(C−1) + A + 1`.
pub fn expected_record_count(clips: usize, distinct_actions: usize) -> usize {
    clips + 2 * distinct_actions + 2 * clips.saturating_sub(1) + distinct_actions + 1
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub records: usize,
    pub videos: usize,
    pub per_task: BTreeMap<String, usize>,
    pub per_subtask: BTreeMap<String, usize>,
    /// Clips per video (counted from captioning records) → number of videos.
    pub clip_histogram: BTreeMap<usize, usize>,
}

impl CorpusStats {
    /// Sum of two corpora over disjoint videos.
    pub fn merge(&self, other: &CorpusStats) -> CorpusStats {
        fn add<K: Ord + Clone>(
            a: &BTreeMap<K, usize>,
            b: &BTreeMap<K, usize>,
        ) -> BTreeMap<K, usize> {
            let mut out = a.clone();
            for (k, v) in b {
                *out.entry(k.clone()).or_default() += v;
            }
            out
        }
        CorpusStats {
            records: self.records + other.records,
            videos: self.videos + other.videos,
            per_task: add(&self.per_task, &other.per_task),
            per_subtask: add(&self.per_subtask, &other.per_subtask),
            clip_histogram: add(&self.clip_histogram, &other.clip_histogram),
        }
    }
}

pub fn corpus_stats(records: &[QaRecord]) -> CorpusStats {
    let mut stats = CorpusStats {
        records: records.len(),
        ..CorpusStats::default()
    };
    for kind in TaskKind::ALL {
        stats.per_task.insert(kind.name().to_owned(), 0);
    }
    let mut clips_per_video: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *stats.per_task.entry(r.task.name().to_owned()).or_default() += 1;
        *stats.per_subtask.entry(r.subtask.clone()).or_default() += 1;
        let clips = clips_per_video.entry(&r.video_id).or_default();
        if r.task == TaskKind::Captioning {
            *clips += 1;
        }
    }
    stats.videos = clips_per_video.len();
    for n in clips_per_video.values() {
        *stats.clip_histogram.entry(*n).or_default() += 1;
    }
    stats
}
