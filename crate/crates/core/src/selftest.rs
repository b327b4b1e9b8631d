//! Built-in checks runnable from the command line: gradient checks against
//! finite differences, protocol round trips, sampling law and frozen metric
//! fixtures.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grounding::{format_segment, parse_segments, GroundingProtocol};
use crate::metrics::{bleu4, cider, cider_per_item, rouge_l, CaptionPair};
use crate::mma::{mma_forward, mma_jvp, MmaParams};
use crate::numerics::{finite_diff_jvp, relative_error, Matrix};
use crate::sampling::{high_interval, sample_high, SamplingConfig, Segment, VideoTimeline};

pub const JVP_TOLERANCE: f64 = 1e-4;
pub const JVP_STEP: f64 = 1e-6;

const EMBEDDED_METRICS: &str = include_str!("../fixtures/metrics.json");

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, outcome: Result<(bool, String)>) {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, e.to_string()));
        self.checks.push(Check {
            name: name.to_owned(),
            passed,
            detail,
        });
    }
}

/// Relative error between [`mma_jvp`] and a central difference of
/// [`mma_forward`] taken jointly over both inputs.
pub fn mma_jvp_error(
    low: &Matrix,
    high: &Matrix,
    params: &MmaParams,
    tangent_low: &Matrix,
    tangent_high: &Matrix,
    h: f64,
) -> Result<f64> {
    let analytic = mma_jvp(low, high, params, tangent_low, tangent_high)?;
    let n_l = low.rows();
    let d = low.cols();
    let x = Matrix::vstack(&[low.clone(), high.clone()])?;
    let v = Matrix::vstack(&[tangent_low.clone(), tangent_high.clone()])?;
    let numeric = finite_diff_jvp(
        |m| {
            let (a, b) = m.data().split_at(n_l * d);
            mma_forward(
                &Matrix::new(n_l, d, a.to_vec())?,
                &Matrix::new(m.rows() - n_l, d, b.to_vec())?,
                params,
            )
        },
        &x,
        &v,
        h,
    )?;
    relative_error(&analytic, &numeric, 1e-12)
}

fn jvp_suite(seeds: u64) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n_l, n_h, d) = (
            rng.random_range(1..=6),
            rng.random_range(1..=4),
            rng.random_range(1..=8),
        );
        let low = Matrix::random_with(n_l, d, -1.0, 1.0, &mut rng);
        let high = Matrix::random_with(n_h, d, -1.0, 1.0, &mut rng);
        let dl = Matrix::random_with(n_l, d, -1.0, 1.0, &mut rng);
        let dh = Matrix::random_with(n_h, d, -1.0, 1.0, &mut rng);
        worst = worst.max(mma_jvp_error(
            &low,
            &high,
            &MmaParams::seeded(d, seed),
            &dl,
            &dh,
            JVP_STEP,
        )?);
    }
    Ok((
        worst <= JVP_TOLERANCE,
        format!("{seeds} seeds, max rel-err {worst:.3e} (limit {JVP_TOLERANCE:.0e})"),
    ))
}

fn round_trip_suite(cases: usize) -> Result<(bool, String)> {
    let proto = GroundingProtocol::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_bins: f64 = 0.0;
    for _ in 0..cases {
        let d = rng.random_range(1.0..3600.0);
        let a = rng.random_range(0.0..d * 0.98);
        let b = rng.random_range(a + d * 0.01..=d);
        let text = format_segment(&Segment::new(a, b)?, d, &proto)?;
        let back = parse_segments(&text, d, &proto)?;
        let bin = d / proto.n_bins() as f64;
        let err = (back[0].start_s - a).abs().max((back[0].end_s - b).abs()) / bin;
        worst_bins = worst_bins.max(err);
    }
    Ok((
        worst_bins <= 1.0 + 1e-9,
        format!("{cases} segments, max error {worst_bins:.4} bins"),
    ))
}

fn sampling_suite(cases: usize) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..cases {
        let frames = rng.random_range(1..500usize);
        let nh = rng.random_range(1..60usize);
        let t = VideoTimeline::new(frames, 1.0)?;
        let cfg = SamplingConfig::new(1, nh)?;
        let seg = t.full_segment();
        let plan = sample_high(&t, &[seg], &cfg)?;
        let stride = high_interval(&seg, &t, &cfg)?;
        let brute = (1..).find(|m| frames.div_ceil(*m) <= nh).unwrap_or(1);
        let ok = plan.len() <= nh
            && stride == brute
            && (frames % nh != 0 || plan.len() == frames.min(nh));
        if !ok {
            return Ok((
                false,
                format!(
                    "frames {frames}, N_H {nh}: {} frames, stride {stride}",
                    plan.len()
                ),
            ));
        }
    }
    Ok((true, format!("{cases} (frames, N_H) pairs")))
}

#[derive(Debug, Deserialize)]
struct CaptionFixture {
    candidate: String,
    references: Vec<String>,
    bleu4: f64,
    rouge_l: f64,
}

#[derive(Debug, Deserialize)]
struct MetricFixtures {
    tolerance: f64,
    captions: Vec<CaptionFixture>,
    cider_mean: f64,
    cider_per_item: Vec<f64>,
}

fn metric_suite(raw: &str) -> Result<(bool, String)> {
    let fx: MetricFixtures = serde_json::from_str(raw)?;
    if fx.captions.len() != fx.cider_per_item.len() {
        return Err(Error::Format(
            "cider_per_item length differs from captions".into(),
        ));
    }
    let pairs = fx
        .captions
        .iter()
        .enumerate()
        .map(|(i, c)| CaptionPair::new(format!("fx{i}"), c.candidate.clone(), c.references.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for (p, c) in pairs.iter().zip(&fx.captions) {
        worst = worst
            .max((bleu4(p) - c.bleu4).abs())
            .max((rouge_l(p) - c.rouge_l).abs());
    }
    for (got, want) in cider_per_item(&pairs)?.iter().zip(&fx.cider_per_item) {
        worst = worst.max((got - want).abs());
    }
    worst = worst.max((cider(&pairs)? - fx.cider_mean).abs());
    Ok((
        worst <= fx.tolerance,
        format!("{} fixtures, max deviation {worst:.3e}", pairs.len()),
    ))
}

/// Runs every check. With `fixtures`, `metrics.json` is read from that
/// directory instead of the embedded copy.
pub fn run(fixtures: Option<&Path>) -> Result<SelftestReport> {
    let metrics_raw = match fixtures {
        Some(dir) => std::fs::read_to_string(dir.join("metrics.json"))?,
        None => EMBEDDED_METRICS.to_owned(),
    };
    let mut report = SelftestReport::default();
    report.push("mma-jvp", jvp_suite(100));
    report.push("grounding-round-trip", round_trip_suite(10_000));
    report.push("high-sampling-law", sampling_suite(2_000));
    report.push("caption-metrics", metric_suite(&metrics_raw));
    Ok(report)
}
