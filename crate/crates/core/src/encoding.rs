//! Visual tokens: backends that produce raw per-frame patch features, the
//! average-pooling adapter, and discretised temporal tokens added to every
//! adapted frame.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::sampling::{Frequency, SamplingPlan, VideoTimeline};

/// Size of the temporal token space.
pub const DEFAULT_TEMPORAL_BINS: usize = 1000;
/// Tokens kept per frame after adaptation.
pub const DEFAULT_TOKENS_PER_FRAME: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeature {
    pub video_id: String,
    pub frame_index: usize,
    /// `p × c` raw patch tokens.
    pub tokens: Matrix,
}

/// Source of raw per-frame features. Implementations must be pure functions
/// of `(video_id, frame_index)` so they can be called from several threads.
pub trait VisualBackend: Send + Sync {
    fn encode(&self, video_id: &str, frame_index: usize) -> Result<FrameFeature>;
}

/// Deterministic stand-in for a frozen image encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockEncoder {
    pub seed: u64,
    pub patches: usize,
    pub channels: usize,
}

impl MockEncoder {
    pub fn new(seed: u64, patches: usize, channels: usize) -> Result<Self> {
        if patches == 0 || channels == 0 {
            return Err(Error::argument("mock encoder needs p, c >= 1"));
        }
        Ok(Self {
            seed,
            patches,
            channels,
        })
    }
}

impl VisualBackend for MockEncoder {
    fn encode(&self, video_id: &str, frame_index: usize) -> Result<FrameFeature> {
        Ok(mock_encode(
            video_id,
            frame_index,
            self.seed,
            self.patches,
            self.channels,
        ))
    }
}

/// Uniform `[-1, 1]` entries from a ChaCha stream keyed by
/// `SHA-256(seed ‖ video_id)` with `frame_index` as the stream number.
pub fn mock_encode(
    video_id: &str,
    frame_index: usize,
    seed: u64,
    p: usize,
    c: usize,
) -> FrameFeature {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(video_id.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(frame_index as u64);
    let data = (0..p * c).map(|_| rng.random_range(-1.0..=1.0)).collect();
    FrameFeature {
        video_id: video_id.to_owned(),
        frame_index,
        tokens: Matrix::new(p, c, data).expect("p·c finite entries"),
    }
}

/// Reads `<root>/<video_id>/<frame_index>.mat` in the matrix text format.
#[derive(Debug, Clone)]
pub struct FileBackend {
    root: PathBuf,
}

impl FileBackend {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn frame_path(&self, video_id: &str, frame_index: usize) -> PathBuf {
        self.root.join(video_id).join(format!("{frame_index}.mat"))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl VisualBackend for FileBackend {
    fn encode(&self, video_id: &str, frame_index: usize) -> Result<FrameFeature> {
        let path = self.frame_path(video_id, frame_index);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Feature(format!("{}: {e}", path.display())))?;
        let tokens = Matrix::from_text(&text)
            .map_err(|e| Error::Feature(format!("{}: {e}", path.display())))?;
        if tokens.rows() == 0 {
            return Err(Error::Feature(format!(
                "{}: no patch tokens",
                path.display()
            )));
        }
        Ok(FrameFeature {
            video_id: video_id.to_owned(),
            frame_index,
            tokens,
        })
    }
}

/// Average-pools contiguous blocks of `p / out_tokens` rows.
pub fn adapt(feature: &FrameFeature, out_tokens: usize) -> Result<Matrix> {
    let m = &feature.tokens;
    let p = m.rows();
    if out_tokens == 0 || !p.is_multiple_of(out_tokens) {
        return Err(Error::shape(format!(
            "cannot pool {p} patch tokens into {out_tokens}"
        )));
    }
    let block = p / out_tokens;
    let c = m.cols();
    let mut data = vec![0.0; out_tokens * c];
    for (r, row) in m.row_iter().enumerate() {
        let out = &mut data[(r / block) * c..(r / block + 1) * c];
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    let inv = 1.0 / block as f64;
    data.iter_mut().for_each(|v| *v *= inv);
    Matrix::new(out_tokens, c, data)
}

/// `⌊n_bins · t / duration⌋`, clamped to `n_bins − 1`.
///
/// A quotient within 1e-9 (relative) of an integer is taken as that integer,
/// so times produced by [`bin_start`] map back to their own bin.
pub fn temporal_bin(t_s: f64, duration_s: f64, n_bins: usize) -> Result<usize> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::DegenerateTimeline(format!("duration {duration_s}")));
    }
    if n_bins == 0 {
        return Err(Error::argument("temporal token space must have >= 1 bin"));
    }
    if !(0.0..=duration_s).contains(&t_s) {
        return Err(Error::argument(format!(
            "time {t_s} outside [0, {duration_s}]"
        )));
    }
    let x = n_bins as f64 * t_s / duration_s;
    let nearest = x.round();
    let bin = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        x.floor()
    };
    Ok((bin as usize).min(n_bins - 1))
}

/// Left edge of `bin` in seconds.
pub fn bin_start(bin: usize, duration_s: f64, n_bins: usize) -> f64 {
    bin as f64 / n_bins as f64 * duration_s
}

pub fn bin_center(bin: usize, duration_s: f64, n_bins: usize) -> f64 {
    (bin as f64 + 0.5) / n_bins as f64 * duration_s
}

/// The `N × C` table of temporal tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalTokenTable {
    table: Matrix,
}

impl TemporalTokenTable {
    pub fn new(table: Matrix) -> Result<Self> {
        if table.rows() == 0 {
            return Err(Error::argument("temporal token table needs >= 1 bin"));
        }
        Ok(Self { table })
    }

    pub fn zeros(bins: usize, dim: usize) -> Result<Self> {
        Self::new(Matrix::zeros(bins, dim))
    }

    pub fn seeded(bins: usize, dim: usize, seed: u64) -> Result<Self> {
        Self::new(Matrix::random(bins, dim, -0.1, 0.1, seed))
    }

    pub fn bins(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn token(&self, bin: usize) -> &[f64] {
        self.table.row(bin)
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }
}

/// Visual tokens with the timestamp of the frame each row came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    pub tokens: Matrix,
    pub timestamps_s: Vec<f64>,
    pub frequency: Frequency,
}

impl TokenMatrix {
    pub fn new(tokens: Matrix, timestamps_s: Vec<f64>, frequency: Frequency) -> Result<Self> {
        if timestamps_s.len() != tokens.rows() {
            return Err(Error::shape(format!(
                "{} timestamps for {} token rows",
                timestamps_s.len(),
                tokens.rows()
            )));
        }
        if timestamps_s.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::argument("token timestamps must be non-decreasing"));
        }
        Ok(Self {
            tokens,
            timestamps_s,
            frequency,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows() == 0
    }

    pub fn width(&self) -> usize {
        self.tokens.cols()
    }
}

/// Encodes, pools and time-stamps each planned frame, in plan order.
pub fn encode_plan(
    plan: &SamplingPlan,
    timeline: &VideoTimeline,
    video_id: &str,
    backend: &dyn VisualBackend,
    table: &TemporalTokenTable,
    out_tokens: usize,
) -> Result<TokenMatrix> {
    let duration = timeline.duration_s();
    let mut blocks = Vec::with_capacity(plan.len());
    let mut timestamps = Vec::with_capacity(plan.len() * out_tokens);
    for (&frame, &t) in plan.frame_indices().iter().zip(plan.timestamps_s()) {
        if frame >= timeline.frame_count() {
            return Err(Error::argument(format!(
                "frame {frame} beyond video of {} frames",
                timeline.frame_count()
            )));
        }
        let feature = backend.encode(video_id, frame)?;
        let pooled = adapt(&feature, out_tokens)?;
        if pooled.cols() != table.dim() {
            return Err(Error::shape(format!(
                "frame features have width {}, temporal tokens {}",
                pooled.cols(),
                table.dim()
            )));
        }
        let eps = table.token(temporal_bin(t, duration, table.bins())?);
        let mut data = pooled.into_data();
        for row in data.chunks_exact_mut(eps.len().max(1)) {
            for (v, e) in row.iter_mut().zip(eps) {
                *v += e;
            }
        }
        blocks.push(Matrix::new(out_tokens, table.dim(), data)?);
        timestamps.extend(std::iter::repeat_n(t, out_tokens));
    }
    let tokens = if blocks.is_empty() {
        Matrix::zeros(0, table.dim())
    } else {
        Matrix::vstack(&blocks)?
    };
    TokenMatrix::new(tokens, timestamps, plan.frequency())
}
