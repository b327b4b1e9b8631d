//! Frame-time coordinates and the two sampling laws.
//!
//! Low frequency keeps every `M_L`-th frame of the whole video. High
//! frequency re-samples a grounded segment with stride
//! `M_H = max(⌈|τ| / N_H⌉, 1)`, so a segment never yields more than `N_H`
//! frames. Seconds are the single coordinate system: a frame belongs to a
//! segment when its timestamp `index / fps` lies in `[start, end)`.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense frames per grounded segment.
pub const DEFAULT_HIGH_TARGET: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoTimeline {
    frame_count: usize,
    fps: f64,
}

impl VideoTimeline {
    pub fn new(frame_count: usize, fps: f64) -> Result<Self> {
        if frame_count == 0 {
            return Err(Error::DegenerateTimeline("video has no frames".into()));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::DegenerateTimeline(format!(
                "fps must be > 0, got {fps}"
            )));
        }
        Ok(Self { frame_count, fps })
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn duration_s(&self) -> f64 {
        self.frame_count as f64 / self.fps
    }

    pub fn timestamp(&self, frame_index: usize) -> f64 {
        frame_index as f64 / self.fps
    }

    pub fn full_segment(&self) -> Segment {
        Segment {
            start_s: 0.0,
            end_s: self.duration_s(),
        }
    }

    /// Indices of the frames whose timestamps fall in `[start, end)`.
    pub fn frames_in(&self, seg: &Segment) -> Range<usize> {
        self.first_frame_at_or_after(seg.start_s)..self.first_frame_at_or_after(seg.end_s)
    }

    fn first_frame_at_or_after(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        let n = self.frame_count;
        let mut i = ((t * self.fps).ceil() as usize).min(n);
        // ceil(t·fps) can be off by one either way once t·fps is rounded
        while i > 0 && self.timestamp(i - 1) >= t {
            i -= 1;
        }
        while i < n && self.timestamp(i) < t {
            i += 1;
        }
        i
    }
}

/// A time interval in seconds, half-open `[start_s, end_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
}

impl Segment {
    pub fn new(start_s: f64, end_s: f64) -> Result<Self> {
        if !(start_s.is_finite() && end_s.is_finite()) {
            return Err(Error::argument(format!(
                "segment bounds must be finite: [{start_s}, {end_s}]"
            )));
        }
        if start_s < 0.0 || start_s >= end_s {
            return Err(Error::argument(format!(
                "segment needs 0 <= start < end, got [{start_s}, {end_s}]"
            )));
        }
        Ok(Self { start_s, end_s })
    }

    pub fn length(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn check_within(&self, duration_s: f64) -> Result<()> {
        if self.end_s > duration_s {
            return Err(Error::argument(format!(
                "segment [{}, {}] exceeds duration {duration_s}",
                self.start_s, self.end_s
            )));
        }
        Ok(())
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t < self.end_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Low,
    High,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub low_interval_frames: usize,
    pub high_target_count: usize,
}

impl SamplingConfig {
    pub fn new(low_interval_frames: usize, high_target_count: usize) -> Result<Self> {
        if low_interval_frames == 0 || high_target_count == 0 {
            return Err(Error::argument(
                "sampling intervals and counts must be >= 1",
            ));
        }
        Ok(Self {
            low_interval_frames,
            high_target_count,
        })
    }

    /// One low-frequency frame per second of video, `N_H = 20`.
    pub fn one_per_second(timeline: &VideoTimeline) -> Self {
        Self {
            low_interval_frames: (timeline.fps().round() as usize).max(1),
            high_target_count: DEFAULT_HIGH_TARGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    frame_indices: Vec<usize>,
    timestamps_s: Vec<f64>,
    frequency: Frequency,
}

impl SamplingPlan {
    /// Builds a plan from strictly increasing frame indices.
    pub fn new(
        frame_indices: Vec<usize>,
        timeline: &VideoTimeline,
        frequency: Frequency,
    ) -> Result<Self> {
        if frame_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::argument("plan indices must be strictly increasing"));
        }
        if let Some(&last) = frame_indices.last() {
            if last >= timeline.frame_count() {
                return Err(Error::argument(format!(
                    "frame {last} beyond video of {} frames",
                    timeline.frame_count()
                )));
            }
        }
        let timestamps_s = frame_indices
            .iter()
            .map(|&i| timeline.timestamp(i))
            .collect();
        Ok(Self {
            frame_indices,
            timestamps_s,
            frequency,
        })
    }

    pub fn frame_indices(&self) -> &[usize] {
        &self.frame_indices
    }

    pub fn timestamps_s(&self) -> &[f64] {
        &self.timestamps_s
    }

    pub fn frequency(&self) -> Frequency {
        self.frequency
    }

    pub fn len(&self) -> usize {
        self.frame_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_indices.is_empty()
    }

    /// The sub-plan of frames inside `seg`.
    pub fn restrict(&self, seg: &Segment) -> SamplingPlan {
        let (frame_indices, timestamps_s) = self
            .frame_indices
            .iter()
            .zip(&self.timestamps_s)
            .filter(|(_, &t)| seg.contains(t))
            .map(|(&i, &t)| (i, t))
            .unzip();
        SamplingPlan {
            frame_indices,
            timestamps_s,
            frequency: self.frequency,
        }
    }

    /// Splits the plan after its first `at` frames.
    pub fn split_at(&self, at: usize) -> (SamplingPlan, SamplingPlan) {
        let at = at.min(self.len());
        let part = |r: Range<usize>| SamplingPlan {
            frame_indices: self.frame_indices[r.clone()].to_vec(),
            timestamps_s: self.timestamps_s[r].to_vec(),
            frequency: self.frequency,
        };
        (part(0..at), part(at..self.len()))
    }
}

/// Every `M_L`-th frame from frame 0.
pub fn sample_low(timeline: &VideoTimeline, cfg: &SamplingConfig) -> SamplingPlan {
    let indices: Vec<usize> = (0..timeline.frame_count())
        .step_by(cfg.low_interval_frames.max(1))
        .collect();
    SamplingPlan::new(indices, timeline, Frequency::Low)
        .expect("stride enumeration is increasing and in range")
}

/// `M_H = max(⌈|τ|_frames / N_H⌉, 1)`.
pub fn high_interval(
    segment: &Segment,
    timeline: &VideoTimeline,
    cfg: &SamplingConfig,
) -> Result<usize> {
    let frames = timeline.frames_in(segment).len();
    if frames == 0 {
        return Err(Error::DegenerateSegment(format!(
            "[{}, {}] holds no frame at {} fps",
            segment.start_s,
            segment.end_s,
            timeline.fps()
        )));
    }
    Ok(frames.div_ceil(cfg.high_target_count.max(1)).max(1))
}

/// Dense plan over the union of the segments. Degenerate segments are skipped
/// unless all of them are degenerate.
pub fn sample_high(
    timeline: &VideoTimeline,
    segments: &[Segment],
    cfg: &SamplingConfig,
) -> Result<SamplingPlan> {
    let mut picked = BTreeSet::new();
    let mut any = false;
    for seg in segments {
        let Ok(stride) = high_interval(seg, timeline, cfg) else {
            continue;
        };
        any = true;
        picked.extend(timeline.frames_in(seg).step_by(stride));
    }
    if !any {
        return Err(Error::DegenerateSegment(format!(
            "none of {} segment(s) contains a frame",
            segments.len()
        )));
    }
    SamplingPlan::new(picked.into_iter().collect(), timeline, Frequency::High)
}
