//! Two-round inference: ground the question on sparse frames, then answer it
//! from the sparse tokens mixed with dense tokens of the grounded span.

mod backend;
mod remote;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use backend::{FixtureRule, LanguageBackend, MockBackend, MockCall, MockFixtures, VisualBlock};
pub use remote::{RemoteBackend, RemoteConfig, WireBlock, WireReply, WireRequest};

use crate::encoding::{
    encode_plan, TemporalTokenTable, TokenMatrix, VisualBackend, DEFAULT_TOKENS_PER_FRAME,
};
use crate::error::{Error, Result};
use crate::grounding::{build_q1, build_q2, format_segment, parse_segments, GroundingProtocol};
use crate::metrics::EvalRecord;
use crate::mma::{mix_tokens, MmaParams};
use crate::sampling::{
    sample_high, sample_low, SamplingConfig, SamplingPlan, Segment, VideoTimeline,
    DEFAULT_HIGH_TARGET,
};

pub const LOW_BLOCK: &str = "low";
pub const MIXED_BLOCK: &str = "mixed";

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    /// `M_L`; `None` resolves to one frame per second for each video.
    pub low_interval_frames: Option<usize>,
    /// `N_H`.
    pub high_target_count: usize,
    pub proto: GroundingProtocol,
    pub tokens_per_frame: usize,
    /// Ground-truth segments that replace the grounding round.
    pub injected_segments: Option<Vec<Segment>>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            low_interval_frames: None,
            high_target_count: DEFAULT_HIGH_TARGET,
            proto: GroundingProtocol::default(),
            tokens_per_frame: DEFAULT_TOKENS_PER_FRAME,
            injected_segments: None,
        }
    }
}

impl InferenceConfig {
    pub fn sampling_for(&self, timeline: &VideoTimeline) -> Result<SamplingConfig> {
        match self.low_interval_frames {
            Some(m) => SamplingConfig::new(m, self.high_target_count),
            None => SamplingConfig::new(
                SamplingConfig::one_per_second(timeline).low_interval_frames,
                self.high_target_count,
            ),
        }
    }
}

/// Everything a run needs besides the config.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub visual: &'a dyn VisualBackend,
    pub language: &'a dyn LanguageBackend,
    pub temporal: &'a TemporalTokenTable,
    pub mma: &'a MmaParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenCounts {
    pub low_frames: usize,
    pub high_frames: usize,
    pub low_tokens: usize,
    pub mixed_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DialogueTrace {
    pub video_id: String,
    pub question: String,
    /// Absent when segments were injected.
    pub q1_prompt: Option<String>,
    pub q1_reply: Option<String>,
    pub parsed_segments: Vec<Segment>,
    pub fallback_used: bool,
    pub injected: bool,
    pub q2_prompt: Option<String>,
    pub answer: Option<String>,
    pub token_counts: TokenCounts,
    pub error: Option<String>,
}

impl DialogueTrace {
    fn start(video_id: &str, question: &str) -> Self {
        Self {
            video_id: video_id.to_owned(),
            question: question.to_owned(),
            ..Self::default()
        }
    }

    pub fn is_errored(&self) -> bool {
        self.error.is_some()
    }
}

/// A video by id plus its frame-time coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoRef {
    pub video_id: String,
    pub timeline: VideoTimeline,
}

impl VideoRef {
    pub fn new(video_id: impl Into<String>, frame_count: usize, fps: f64) -> Result<Self> {
        Ok(Self {
            video_id: video_id.into(),
            timeline: VideoTimeline::new(frame_count, fps)?,
        })
    }
}

struct LowPass {
    sampling: SamplingConfig,
    plan: SamplingPlan,
    tokens: TokenMatrix,
}

fn encode_low(video: &VideoRef, backends: &Backends<'_>, cfg: &InferenceConfig) -> Result<LowPass> {
    let sampling = cfg.sampling_for(&video.timeline)?;
    let plan = sample_low(&video.timeline, &sampling);
    let tokens = encode_plan(
        &plan,
        &video.timeline,
        &video.video_id,
        backends.visual,
        backends.temporal,
        cfg.tokens_per_frame,
    )?;
    Ok(LowPass {
        sampling,
        plan,
        tokens,
    })
}

fn ground_with(
    video: &VideoRef,
    question: &str,
    low: &TokenMatrix,
    backends: &Backends<'_>,
    cfg: &InferenceConfig,
    trace: &mut DialogueTrace,
) -> Result<Vec<Segment>> {
    let duration = video.timeline.duration_s();
    if let Some(injected) = &cfg.injected_segments {
        if injected.is_empty() {
            return Err(Error::argument("injected segment list is empty"));
        }
        for seg in injected {
            seg.check_within(duration)?;
        }
        trace.injected = true;
        trace.parsed_segments = injected.clone();
        return Ok(injected.clone());
    }
    let prompt = build_q1(question)?;
    let reply = backends.language.generate(
        &[VisualBlock {
            label: LOW_BLOCK,
            tokens: low,
        }],
        &prompt,
    )?;
    trace.q1_prompt = Some(prompt);
    let segments = match parse_segments(&reply, duration, &cfg.proto) {
        Ok(segs) => segs,
        Err(Error::GroundingParse(_)) => {
            trace.fallback_used = true;
            vec![video.timeline.full_segment()]
        }
        Err(e) => return Err(e),
    };
    trace.q1_reply = Some(reply);
    trace.parsed_segments = segments.clone();
    Ok(segments)
}

/// Round one only. Returns the segments and a trace with the round-two
/// fields empty.
pub fn ground(
    video: &VideoRef,
    question: &str,
    backends: &Backends<'_>,
    cfg: &InferenceConfig,
) -> Result<(Vec<Segment>, DialogueTrace)> {
    let mut trace = DialogueTrace::start(&video.video_id, question);
    let low = encode_low(video, backends, cfg)?;
    trace.token_counts.low_frames = low.plan.len();
    trace.token_counts.low_tokens = low.tokens.len();
    let segs = ground_with(video, question, &low.tokens, backends, cfg, &mut trace)?;
    Ok((segs, trace))
}

/// Both rounds.
pub fn answer(
    video: &VideoRef,
    question: &str,
    backends: &Backends<'_>,
    cfg: &InferenceConfig,
) -> Result<(String, DialogueTrace)> {
    let mut trace = DialogueTrace::start(&video.video_id, question);
    let low = encode_low(video, backends, cfg)?;
    trace.token_counts.low_frames = low.plan.len();
    trace.token_counts.low_tokens = low.tokens.len();

    let mut segments = ground_with(video, question, &low.tokens, backends, cfg, &mut trace)?;
    let high_plan = match sample_high(&video.timeline, &segments, &low.sampling) {
        Ok(plan) => plan,
        Err(Error::DegenerateSegment(_)) if !trace.injected => {
            // Parsed span falls between frames; treat like an unusable reply.
            segments = vec![video.timeline.full_segment()];
            trace.fallback_used = true;
            trace.parsed_segments = segments.clone();
            sample_high(&video.timeline, &segments, &low.sampling)?
        }
        Err(e) => return Err(e),
    };
    let high = encode_plan(
        &high_plan,
        &video.timeline,
        &video.video_id,
        backends.visual,
        backends.temporal,
        cfg.tokens_per_frame,
    )?;
    let mixed = mix_tokens(&low.tokens, &high, backends.mma)?;
    trace.token_counts.high_frames = high_plan.len();
    trace.token_counts.mixed_tokens = mixed.len();

    let prompt = build_q2(question, &segments, video.timeline.duration_s(), &cfg.proto)?;
    let reply = backends.language.generate(
        &[
            VisualBlock {
                label: LOW_BLOCK,
                tokens: &low.tokens,
            },
            VisualBlock {
                label: MIXED_BLOCK,
                tokens: &mixed,
            },
        ],
        &prompt,
    )?;
    trace.q2_prompt = Some(prompt);
    trace.answer = Some(reply.clone());
    Ok((reply, trace))
}

/// One question about one video, as consumed by [`run_batch`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub item_id: String,
    pub video_id: String,
    pub frame_count: usize,
    pub fps: f64,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gt_segments: Vec<Segment>,
}

impl QaItem {
    pub fn video(&self) -> Result<VideoRef> {
        VideoRef::new(self.video_id.clone(), self.frame_count, self.fps)
    }

    /// Ground truth as an evaluation reference.
    pub fn to_reference(&self) -> EvalRecord {
        let mut r = covering(&self.item_id, &self.gt_segments);
        r.answer_text = self.reference_answer.clone();
        r.question = Some(self.question.clone());
        r
    }
}

/// Record whose start/end span every segment; the list is kept when there
/// is more than one.
fn covering(item_id: &str, segments: &[Segment]) -> EvalRecord {
    EvalRecord {
        item_id: item_id.to_owned(),
        predicted_start_s: segments.first().map(|s| s.start_s),
        predicted_end_s: segments.last().map(|s| s.end_s),
        segments: if segments.len() > 1 {
            segments.to_vec()
        } else {
            Vec::new()
        },
        ..EvalRecord::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    GroundOnly,
    Answer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchOptions {
    pub mode: BatchMode,
    pub jobs: usize,
    /// Use each item's `gt_segments` in place of round one.
    pub inject_ground_truth: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            mode: BatchMode::Answer,
            jobs: 1,
            inject_ground_truth: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub item_id: String,
    pub trace: DialogueTrace,
}

impl BatchEntry {
    /// Segments and answer as a prediction record; errored entries carry
    /// neither.
    pub fn to_prediction(&self) -> EvalRecord {
        let mut r = covering(&self.item_id, &self.trace.parsed_segments);
        r.answer_text = self.trace.answer.clone();
        r.question = Some(self.trace.question.clone());
        r
    }
}

fn run_item(
    item: &QaItem,
    backends: &Backends<'_>,
    cfg: &InferenceConfig,
    opts: &BatchOptions,
) -> DialogueTrace {
    let mut cfg = cfg.clone();
    if opts.inject_ground_truth {
        cfg.injected_segments = Some(item.gt_segments.clone());
    }
    let outcome = item.video().and_then(|video| match opts.mode {
        BatchMode::GroundOnly => ground(&video, &item.question, backends, &cfg).map(|(_, t)| t),
        BatchMode::Answer => answer(&video, &item.question, backends, &cfg).map(|(_, t)| t),
    });
    outcome.unwrap_or_else(|e| errored(item, &e))
}

fn errored(item: &QaItem, e: &Error) -> DialogueTrace {
    let mut t = DialogueTrace::start(&item.video_id, &item.question);
    t.error = Some(e.to_string());
    t
}

fn run_entries<F>(items: &[QaItem], threads: usize, run: F) -> Result<Vec<BatchEntry>>
where
    F: Fn(&QaItem) -> DialogueTrace + Sync,
{
    let entry = |item: &QaItem| BatchEntry {
        item_id: item.item_id.clone(),
        trace: run(item),
    };
    if threads <= 1 {
        return Ok(items.iter().map(entry).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::argument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(entry).collect()))
}

/// Runs every item, in parallel up to `min(jobs, backend concurrency)`.
/// Output order is input order; a failing item yields an errored trace.
pub fn run_batch(
    items: &[QaItem],
    backends: &Backends<'_>,
    cfg: &InferenceConfig,
    opts: &BatchOptions,
) -> Result<Vec<BatchEntry>> {
    let threads = opts.jobs.min(backends.language.max_concurrency());
    run_entries(items, threads, |item| run_item(item, backends, cfg, opts))
}

/// Like [`run_batch`], but each item is answered by its own
/// [`oracle_backend`]; `backends.language` is ignored.
pub fn run_batch_oracle(
    items: &[QaItem],
    backends: &Backends<'_>,
    cfg: &InferenceConfig,
    opts: &BatchOptions,
) -> Result<Vec<BatchEntry>> {
    run_entries(items, opts.jobs, |item| {
        match oracle_backend(item, &cfg.proto) {
            Ok(lm) => run_item(
                item,
                &Backends {
                    language: &lm,
                    ..*backends
                },
                cfg,
                opts,
            ),
            Err(e) => errored(item, &e),
        }
    })
}

/// Mock that replies to round one with the item's ground-truth segments and
/// to round two with its reference answer.
pub fn oracle_backend(item: &QaItem, proto: &GroundingProtocol) -> Result<MockBackend> {
    let duration = item.video()?.timeline.duration_s();
    let mut rules = Vec::new();
    if !item.gt_segments.is_empty() {
        let spans = item
            .gt_segments
            .iter()
            .map(|s| format_segment(s, duration, proto))
            .collect::<Result<Vec<_>>>()?;
        rules.push(FixtureRule {
            pattern: r"\A<video>\n".into(),
            reply: spans.join(", "),
        });
    }
    MockBackend::new(&MockFixtures {
        rules,
        default_reply: item.reference_answer.clone().unwrap_or_default(),
    })
}
