//! Shot splitting and clip stitching over per-frame feature streams.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::sampling::Segment;

/// Clips shorter than this are merged into a neighbour.
pub const MIN_CLIP_S: f64 = 5.0;
/// Adjacent clips at most this far apart (cosine distance) are merged.
pub const MERGE_DISTANCE: f64 = 0.1;

/// One feature row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStream {
    video_id: String,
    features: Matrix,
    fps: f64,
}

impl FeatureStream {
    pub fn new(video_id: impl Into<String>, features: Matrix, fps: f64) -> Result<Self> {
        if features.rows() < 2 {
            return Err(Error::argument(format!(
                "feature stream needs at least 2 frames, got {}",
                features.rows()
            )));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::argument(format!("fps must be positive, got {fps}")));
        }
        Ok(Self {
            video_id: video_id.into(),
            features,
            fps,
        })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frame_count(&self) -> usize {
        self.features.rows()
    }

    pub fn duration_s(&self) -> f64 {
        self.frame_count() as f64 / self.fps
    }

    /// Frame whose timestamp is `t_s`, rounded to the nearest frame.
    fn frame_at(&self, t_s: f64) -> usize {
        ((t_s * self.fps).round() as usize).min(self.frame_count() - 1)
    }

    fn distance(&self, a: usize, b: usize) -> Option<f64> {
        cosine_distance(self.features.row(a), self.features.row(b))
    }
}

/// `1 − cos(a, b)`, or `None` when either vector is zero.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(1.0 - (dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cut points inside a video; clip `k` spans `[cut_{k-1}, cut_k)` with the
/// video start and end as outer bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipBoundarySet {
    pub duration_s: f64,
    pub boundaries_s: Vec<f64>,
}

impl ClipBoundarySet {
    pub fn new(duration_s: f64, boundaries_s: Vec<f64>) -> Result<Self> {
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(Error::argument(format!(
                "duration must be positive, got {duration_s}"
            )));
        }
        let mut prev = 0.0;
        for &b in &boundaries_s {
            if !(b > prev && b < duration_s) {
                return Err(Error::argument(format!(
                    "boundaries must increase strictly inside (0, {duration_s}); got {b} after {prev}"
                )));
            }
            prev = b;
        }
        Ok(Self {
            duration_s,
            boundaries_s,
        })
    }

    pub fn clips(&self) -> Vec<Segment> {
        let mut edges = Vec::with_capacity(self.boundaries_s.len() + 2);
        edges.push(0.0);
        edges.extend_from_slice(&self.boundaries_s);
        edges.push(self.duration_s);
        edges
            .windows(2)
            .map(|w| Segment {
                start_s: w[0],
                end_s: w[1],
            })
            .collect()
    }
}

/// A cut wherever adjacent frames are more than `cut_threshold` apart.
pub fn detect_boundaries(stream: &FeatureStream, cut_threshold: f64) -> Result<ClipBoundarySet> {
    if !(cut_threshold > 0.0 && cut_threshold <= 2.0) {
        return Err(Error::argument(format!(
            "cut threshold must lie in (0, 2], got {cut_threshold}"
        )));
    }
    let mut cuts = Vec::new();
    for i in 1..stream.frame_count() {
        let d = stream.distance(i - 1, i).ok_or_else(|| {
            Error::Feature(format!(
                "{}: zero feature at frame {}",
                stream.video_id,
                i - 1
            ))
        })?;
        if d > cut_threshold {
            cuts.push(i as f64 / stream.fps);
        }
    }
    ClipBoundarySet::new(stream.duration_s(), cuts)
}

/// One left-to-right pass: a clip joins the one before it when either is
/// shorter than [`MIN_CLIP_S`] or the frames on both sides of the cut are
/// within [`MERGE_DISTANCE`].
pub fn stitch(boundaries: &ClipBoundarySet, stream: &FeatureStream) -> ClipBoundarySet {
    let clips = boundaries.clips();
    let mut kept = Vec::new();
    let mut open_start = clips[0].start_s;
    for next in &clips[1..] {
        let cut = next.start_s;
        let prev_len = cut - open_start;
        let right = stream.frame_at(cut);
        let left = right.saturating_sub(1);
        // A zero vector has no direction; it never counts as similar.
        let dist = stream.distance(left, right).unwrap_or(1.0);
        let merge = prev_len < MIN_CLIP_S || next.length() < MIN_CLIP_S || dist <= MERGE_DISTANCE;
        if !merge {
            kept.push(cut);
            open_start = cut;
        }
    }
    ClipBoundarySet {
        duration_s: boundaries.duration_s,
        boundaries_s: kept,
    }
}
