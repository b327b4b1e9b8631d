//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Tolerances and runtime limits are pinned here.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mixfreq::corpus::{
    expected_record_count, gen_tasks, stitch, Annotation, Clip, ClipBoundarySet, FeatureStream,
    MIN_CLIP_S,
};
use mixfreq::encoding::{
    bin_start, MockEncoder, TemporalTokenTable, DEFAULT_TEMPORAL_BINS, DEFAULT_TOKENS_PER_FRAME,
};
use mixfreq::grounding::{format_segment, parse_segments, GroundingProtocol};
use mixfreq::metrics::{
    bleu4, cider, cider_per_item, grounding_report, iou, rouge_l, CaptionPair, EvalRecord,
    GroundingPrediction, MetricReport,
};
use mixfreq::mma::{mma_forward, MmaParams};
use mixfreq::numerics::{row_softmax, Activation, FfnParams};
use mixfreq::orchestrator::{
    run_batch, run_batch_oracle, Backends, BatchMode, BatchOptions, InferenceConfig, MockBackend,
    QaItem,
};
use mixfreq::sampling::{high_interval, sample_high, SamplingConfig, DEFAULT_HIGH_TARGET};
use mixfreq::selftest::mma_jvp_error;
use mixfreq::{Matrix, Segment, VideoTimeline};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!("took {elapsed:.2?}, limit {limit:?}")
    })
}

// 1 ─ grounding protocol round trip

const ROUND_TRIP_CASES: usize = 10_000;

fn criterion_round_trip() -> Outcome {
    let started = Instant::now();
    let proto = GroundingProtocol::default();
    let n = proto.n_bins();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..ROUND_TRIP_CASES {
        let d = rng.random_range(0.5..7200.0);
        let a = rng.random_range(0.0..d * 0.95);
        let b = rng.random_range(a + d * 0.02..=d);
        let seg = Segment::new(a, b).map_err(|e| e.to_string())?;
        let text = format_segment(&seg, d, &proto).map_err(|e| e.to_string())?;
        let back = parse_segments(&text, d, &proto).map_err(|e| e.to_string())?;
        let bin = d / n as f64;
        let err = ((back[0].start_s - a).abs()).max((back[0].end_s - b).abs()) / bin;
        worst = worst.max(err);

        // Bin-aligned endpoints come back exactly.
        let ka = rng.random_range(0..n - 1);
        let kb = rng.random_range(ka + 1..n);
        let aligned =
            Segment::new(bin_start(ka, d, n), bin_start(kb, d, n)).map_err(|e| e.to_string())?;
        let text = format_segment(&aligned, d, &proto).map_err(|e| e.to_string())?;
        let back = parse_segments(&text, d, &proto).map_err(|e| e.to_string())?;
        ensure(back == vec![aligned], || {
            format!("aligned {aligned:?} on {d} s came back as {back:?}")
        })?;
    }
    let elapsed = started.elapsed();
    ensure(worst <= 1.0 + 1e-9, || format!("bin error {worst} > 1"))?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!(
        "{ROUND_TRIP_CASES} segments, max error {worst:.4} bins, aligned exact, {elapsed:.2?}"
    ))
}

// 2 ─ dense sampling law

fn criterion_sampling_law() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut divisible = 0;
    for case in 0..10_000 {
        let frames = rng.random_range(1..=2000usize);
        let fps = rng.random_range(1..=60) as f64;
        let timeline = VideoTimeline::new(frames, fps).map_err(|e| e.to_string())?;
        let first = rng.random_range(0..frames);
        let last = rng.random_range(first + 1..=frames);
        let seg = Segment::new(first as f64 / fps, last as f64 / fps).map_err(|e| e.to_string())?;
        let span = timeline.frames_in(&seg);
        let len = span.len();
        let nh = if case % 2 == 0 {
            let divisors: Vec<usize> = (1..=len).filter(|k| len % k == 0).collect();
            divisors[rng.random_range(0..divisors.len())]
        } else {
            rng.random_range(1..=100)
        };
        let cfg = SamplingConfig::new(1, nh).map_err(|e| e.to_string())?;
        let plan = sample_high(&timeline, &[seg], &cfg).map_err(|e| e.to_string())?;
        let stride = high_interval(&seg, &timeline, &cfg).map_err(|e| e.to_string())?;

        let brute_stride = (1..)
            .find(|&m| span.clone().step_by(m).count() <= nh)
            .unwrap();
        let brute: Vec<usize> = span.clone().step_by(brute_stride).collect();
        ensure(
            stride == brute_stride && stride == len.div_ceil(nh).max(1),
            || format!("|τ| {len}, N_H {nh}: stride {stride}, brute force {brute_stride}"),
        )?;
        ensure(plan.frame_indices() == brute.as_slice(), || {
            format!("|τ| {len}, N_H {nh}: plan differs")
        })?;
        ensure(plan.len() <= nh, || {
            format!("|τ| {len}, N_H {nh}: {} frames", plan.len())
        })?;
        if len % nh == 0 {
            divisible += 1;
            ensure(plan.len() == len.min(nh), || {
                format!("|τ| {len}, N_H {nh}: {} frames", plan.len())
            })?;
        }
    }
    let elapsed = started.elapsed();
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!(
        "10000 (|τ|, N_H) pairs, {divisible} divisible, {elapsed:.2?}"
    ))
}

// 3 ─ mixing attention against scalar oracles

const FORWARD_ABS_TOL: f64 = 1e-10;
const JVP_REL_TOL: f64 = 1e-4;
const JVP_STEP: f64 = 1e-6;

fn scalar_ffn(x: &Matrix, p: &FfnParams) -> Vec<Vec<f64>> {
    let d = p.dim();
    (0..x.rows())
        .map(|i| {
            (0..d)
                .map(|k| {
                    let mut z = p.bias()[k];
                    for j in 0..d {
                        z += x.get(i, j) * p.weight().get(j, k);
                    }
                    match p.activation() {
                        Activation::Identity => z,
                        Activation::Gelu => {
                            0.5 * z * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
                        }
                    }
                })
                .collect()
        })
        .collect()
}

fn scalar_mma(low: &Matrix, high: &Matrix, p: &MmaParams) -> Vec<Vec<f64>> {
    let l = scalar_ffn(low, p.ffn_low());
    let h = scalar_ffn(high, p.ffn_high());
    let d = low.cols();
    h.iter()
        .map(|q| {
            let logits: Vec<f64> = l
                .iter()
                .map(|k| q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = e.iter().sum();
            (0..d)
                .map(|c| l.iter().zip(&e).map(|(row, w)| w / z * row[c]).sum())
                .collect()
        })
        .collect()
}

fn criterion_mma() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_abs: f64 = 0.0;
    for case in 0..100u64 {
        let (nl, nh, d) = (
            rng.random_range(1..=6),
            rng.random_range(1..=4),
            rng.random_range(1..=8),
        );
        let low = Matrix::random_with(nl, d, -2.0, 2.0, &mut rng);
        let high = Matrix::random_with(nh, d, -2.0, 2.0, &mut rng);
        let p = if case % 2 == 0 {
            MmaParams::identity(d)
        } else {
            MmaParams::seeded(d, case)
        };
        let got = mma_forward(&low, &high, &p).map_err(|e| e.to_string())?;
        let want = scalar_mma(&low, &high, &p);
        for (i, row) in want.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                worst_abs = worst_abs.max((got.get(i, k) - v).abs());
            }
        }
    }
    ensure(worst_abs <= FORWARD_ABS_TOL, || {
        format!("forward deviates by {worst_abs:e}")
    })?;

    let mut worst_rel: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (nl, nh, d) = (
            rng.random_range(1..=6),
            rng.random_range(1..=4),
            rng.random_range(1..=8),
        );
        let low = Matrix::random_with(nl, d, -1.0, 1.0, &mut rng);
        let high = Matrix::random_with(nh, d, -1.0, 1.0, &mut rng);
        let dl = Matrix::random_with(nl, d, -1.0, 1.0, &mut rng);
        let dh = Matrix::random_with(nh, d, -1.0, 1.0, &mut rng);
        let err = mma_jvp_error(&low, &high, &MmaParams::seeded(d, seed), &dl, &dh, JVP_STEP)
            .map_err(|e| e.to_string())?;
        worst_rel = worst_rel.max(err);
    }
    ensure(worst_rel <= JVP_REL_TOL, || {
        format!("JVP rel-err {worst_rel:e}")
    })?;
    let elapsed = started.elapsed();
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!(
        "forward max abs {worst_abs:.2e} (≤ {FORWARD_ABS_TOL:.0e}), JVP max rel {worst_rel:.2e} (≤ {JVP_REL_TOL:.0e}), {elapsed:.2?}"
    ))
}

// 4 ─ attention invariants

fn criterion_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_sum: f64 = 0.0;
    for _ in 0..1000 {
        let (r, c) = (rng.random_range(1..10), rng.random_range(1..10));
        let m = Matrix::random_with(r, c, -50.0, 50.0, &mut rng);
        let s = row_softmax(&m, rng.random_range(0.1..10.0)).map_err(|e| e.to_string())?;
        for row in s.row_iter() {
            worst_sum = worst_sum.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    ensure(worst_sum <= 1e-12, || {
        format!("softmax row sum off by {worst_sum:e}")
    })?;

    for case in 0..1000 {
        let (nl, nh, d) = (
            rng.random_range(1..=8),
            rng.random_range(1..=6),
            rng.random_range(1..=8),
        );
        let low = Matrix::random_with(nl, d, -3.0, 3.0, &mut rng);
        let high = Matrix::random_with(nh, d, -3.0, 3.0, &mut rng);
        let out = mma_forward(&low, &high, &MmaParams::identity(d)).map_err(|e| e.to_string())?;
        for k in 0..d {
            let col: Vec<f64> = (0..nl).map(|j| low.get(j, k)).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for i in 0..nh {
                let v = out.get(i, k);
                ensure(v >= lo - 1e-12 && v <= hi + 1e-12, || {
                    format!("case {case}: output {v} outside [{lo}, {hi}]")
                })?;
            }
        }

        let mut perm: Vec<usize> = (0..nl).collect();
        perm.shuffle(&mut rng);
        let rows: Vec<Vec<f64>> = perm.iter().map(|&j| low.row(j).to_vec()).collect();
        let shuffled = Matrix::from_rows(&rows).map_err(|e| e.to_string())?;
        let p = MmaParams::seeded(d, case as u64);
        let a = mma_forward(&low, &high, &p).map_err(|e| e.to_string())?;
        let b = mma_forward(&shuffled, &high, &p).map_err(|e| e.to_string())?;
        ensure(a.data() == b.data(), || {
            format!("case {case}: key permutation changed the output")
        })?;
    }
    Ok(format!(
        "row sums within {worst_sum:.1e}, convex bound on 1000 cases, key permutation exact on 1000 cases"
    ))
}

// 5 ─ end-to-end grounding with oracle and jitter backends

const CORPUS_ITEMS: usize = 50;
const JITTER: f64 = 0.1;
/// Quantization allowance: two bins per endpoint.
const JITTER_BINS: f64 = 2.0;

fn synthetic_items() -> Vec<QaItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = DEFAULT_TEMPORAL_BINS;
    (0..CORPUS_ITEMS)
        .map(|i| {
            let fps = 2.0;
            let frame_count = rng.random_range(40..=120);
            let d = frame_count as f64 / fps;
            // Bin-aligned, at least 10 % of the video, with room for the jitter.
            let ka = rng.random_range(0..600);
            let kb = rng.random_range(ka + 100..=(ka + 300).min(850));
            QaItem {
                item_id: format!("syn{i:02}"),
                video_id: format!("video{i:02}"),
                frame_count,
                fps,
                question: format!("When does event {i} take place?"),
                reference_answer: Some(format!("event {i}")),
                gt_segments: vec![Segment::new(bin_start(ka, d, n), bin_start(kb, d, n)).unwrap()],
            }
        })
        .collect()
}

fn criterion_end_to_end() -> Outcome {
    let started = Instant::now();
    let items = synthetic_items();
    let dim = 8;
    let visual = MockEncoder::new(5, 256, dim).map_err(|e| e.to_string())?;
    let temporal =
        TemporalTokenTable::seeded(DEFAULT_TEMPORAL_BINS, dim, 5).map_err(|e| e.to_string())?;
    let mma = MmaParams::seeded(dim, 5);
    let unused = MockBackend::constant("");
    let backends = Backends {
        visual: &visual,
        language: &unused,
        temporal: &temporal,
        mma: &mma,
    };
    let cfg = InferenceConfig::default();
    let opts = BatchOptions {
        mode: BatchMode::Answer,
        jobs: 4,
        inject_ground_truth: false,
    };
    let references: Vec<EvalRecord> = items.iter().map(QaItem::to_reference).collect();

    let oracle = run_batch_oracle(&items, &backends, &cfg, &opts).map_err(|e| e.to_string())?;
    let preds: Vec<EvalRecord> = oracle.iter().map(|e| e.to_prediction()).collect();
    let report = MetricReport::evaluate(&preds, &references, None).map_err(|e| e.to_string())?;
    ensure(
        report.miou == Some(1.0) && report.recall_at_0_7 == Some(1.0),
        || {
            format!(
                "oracle mIoU {:?}, R@0.7 {:?}",
                report.miou, report.recall_at_0_7
            )
        },
    )?;
    ensure(
        oracle
            .iter()
            .all(|e| !e.trace.fallback_used && e.trace.answer.is_some()),
        || "oracle run fell back or lost an answer".into(),
    )?;

    // Jitter: both endpoints shifted by δ = 10 % of the segment length.
    let proto = GroundingProtocol::default();
    let mut jittered = Vec::new();
    let mut tolerance = 0.0;
    for item in &items {
        let gt = item.gt_segments[0];
        let d = item.frame_count as f64 / item.fps;
        let delta = JITTER * gt.length();
        let shifted = Segment::new(gt.start_s + delta, gt.end_s + delta).unwrap();
        let reply = format_segment(&shifted, d, &proto).map_err(|e| e.to_string())?;
        let lm = MockBackend::constant(reply);
        let b = Backends {
            language: &lm,
            ..backends
        };
        let one_opts = BatchOptions {
            mode: BatchMode::GroundOnly,
            jobs: 1,
            inject_ground_truth: false,
        };
        let out = run_batch(std::slice::from_ref(item), &b, &cfg, &one_opts)
            .map_err(|e| e.to_string())?;
        jittered.push(out[0].to_prediction());
        // |ΔIoU| ≤ (|ΔI| + |ΔU|) / U' with |ΔI|, |ΔU| ≤ 2e, e = two bins.
        let e = JITTER_BINS * d / proto.n_bins() as f64;
        let union = gt.length() + delta;
        tolerance += 4.0 * e / (union - 2.0 * e) / items.len() as f64;
    }
    let report = MetricReport::evaluate(&jittered, &references, None).map_err(|e| e.to_string())?;
    let measured = report.miou.unwrap_or(0.0);
    let analytic = (1.0 - JITTER) / (1.0 + JITTER);
    ensure((measured - analytic).abs() <= tolerance, || {
        format!("jitter mIoU {measured:.6} vs {analytic:.6} ± {tolerance:.6}")
    })?;
    let elapsed = started.elapsed();
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!(
        "oracle mIoU 1.0 and R@0.7 1.0 on {CORPUS_ITEMS} items; jitter mIoU {measured:.6} vs {analytic:.6} ± {tolerance:.6}; {elapsed:.2?}"
    ))
}

// 6 ─ metric fidelity

fn reference_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    inter / union
}

/// Frozen outputs of tests/oracles/caption_metrics.py.
const CAPTION_FIXTURES: [(&str, &[&str], f64, f64); 5] = [
    (
        "a man is riding a horse",
        &["a man rides a brown horse"],
        0.28574404296988,
        0.6666666666666666,
    ),
    (
        "the cat sat on the mat",
        &["the cat sat on the mat"],
        1.0,
        1.0,
    ),
    (
        "the cat sat",
        &["the cat sat on the mat"],
        0.36787944117144233,
        0.6288659793814433,
    ),
    (
        "alpha beta gamma delta epsilon",
        &["one two three four five"],
        0.0,
        0.0,
    ),
    (
        "a person jumps over the high bar",
        &[
            "a person jumps over a bar",
            "someone leaps over the high bar",
        ],
        0.7952707287670506,
        0.7800511508951408,
    ),
];
const CIDER_PER_ITEM: [f64; 5] = [
    2.055983345553689,
    10.0,
    4.714037419890404,
    0.0,
    5.029805884056369,
];
const CIDER_MEAN: f64 = 4.359965329900092;
const CAPTION_TOL: f64 = 1e-9;

fn criterion_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut preds = Vec::new();
    let mut ious = Vec::new();
    for i in 0..1000 {
        let mut seg = || {
            let a = rng.random_range(0.0..100.0);
            (a, a + rng.random_range(0.1..50.0))
        };
        let (p, r) = (seg(), seg());
        let want = reference_iou(p, r);
        let ps = Segment::new(p.0, p.1).unwrap();
        let rs = Segment::new(r.0, r.1).unwrap();
        let got = iou(&ps, &rs);
        ensure((got - want).abs() <= 1e-12, || {
            format!("pair {i}: iou {got} vs {want}")
        })?;
        ious.push(want);
        preds.push(GroundingPrediction {
            item_id: i.to_string(),
            predicted: ps,
            reference: rs,
        });
    }
    let summary = grounding_report(&preds).map_err(|e| e.to_string())?;
    let miou = ious.iter().sum::<f64>() / ious.len() as f64;
    ensure((summary.miou - miou).abs() <= 1e-12, || {
        format!("mIoU {} vs {miou}", summary.miou)
    })?;
    for theta in [0.3, 0.5, 0.7] {
        let want = ious.iter().filter(|&&v| v >= theta).count() as f64 / ious.len() as f64;
        let got = summary.recall(theta).unwrap_or(f64::NAN);
        ensure((got - want).abs() <= 1e-12, || {
            format!("R@{theta} {got} vs {want}")
        })?;
    }

    let pairs: Vec<CaptionPair> = CAPTION_FIXTURES
        .iter()
        .enumerate()
        .map(|(i, (c, refs, _, _))| {
            CaptionPair::new(
                i.to_string(),
                *c,
                refs.iter().map(|s| s.to_string()).collect(),
            )
            .unwrap()
        })
        .collect();
    let mut worst: f64 = 0.0;
    for (p, (_, _, b, r)) in pairs.iter().zip(&CAPTION_FIXTURES) {
        worst = worst.max((bleu4(p) - b).abs()).max((rouge_l(p) - r).abs());
    }
    let per_item = cider_per_item(&pairs).map_err(|e| e.to_string())?;
    for (got, want) in per_item.iter().zip(CIDER_PER_ITEM) {
        worst = worst.max((got - want).abs());
    }
    worst = worst.max((cider(&pairs).map_err(|e| e.to_string())? - CIDER_MEAN).abs());
    ensure(worst <= CAPTION_TOL, || {
        format!("caption metrics deviate by {worst:e}")
    })?;
    ensure(bleu4(&pairs[1]) == 1.0 && rouge_l(&pairs[1]) == 1.0, || {
        "identical sentence not 1.0".into()
    })?;
    Ok(format!(
        "IoU/mIoU/R@θ exact to 1e-12 on 1000 pairs; BLEU-4/ROUGE-L/CIDEr max deviation {worst:.1e} on 5 fixtures"
    ))
}

// 7 ─ corpus algorithms

fn shot_stream(lens: &[usize], close_after: &[usize]) -> (FeatureStream, ClipBoundarySet) {
    // Orthogonal prototype per clip; a clip listed in `close_after` sits at
    // cosine distance 0.05 from the clip before it.
    let dim = 2 * lens.len();
    let cos: f64 = 0.95;
    let mut protos: Vec<Vec<f64>> = Vec::new();
    for k in 0..lens.len() {
        let mut v = vec![0.0; dim];
        if close_after.contains(&k) {
            // Unit vector: cos along the previous prototype, sin along a fresh axis.
            v = protos[k - 1].iter().map(|x| x * cos).collect();
            v[lens.len() + k] = (1.0 - cos * cos).sqrt();
        } else {
            v[k] = 1.0;
        }
        protos.push(v);
    }
    let rows: Vec<Vec<f64>> = lens
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| vec![protos[k].clone(); n])
        .collect();
    let stream = FeatureStream::new("fx", Matrix::from_rows(&rows).unwrap(), 1.0).unwrap();
    let mut t = 0;
    let cuts = lens[..lens.len() - 1]
        .iter()
        .map(|n| {
            t += n;
            t as f64
        })
        .collect();
    (
        stream,
        ClipBoundarySet::new(lens.iter().sum::<usize>() as f64, cuts).unwrap(),
    )
}

fn criterion_corpus() -> Outcome {
    // (clip lengths, similar clips, expected surviving cuts)
    let fixtures: [(&[usize], &[usize], &[f64]); 3] = [
        (&[3, 10], &[], &[]),
        (&[10, 10], &[1], &[]),
        (&[3, 3, 3, 3, 3], &[], &[]),
    ];
    let names = ["short-clip merge", "0.1-distance merge", "chain merge"];
    for ((lens, close, want), name) in fixtures.iter().zip(names) {
        let (stream, cuts) = shot_stream(lens, close);
        let once = stitch(&cuts, &stream);
        ensure(once.boundaries_s == *want, || {
            format!("{name}: got cuts {:?}", once.boundaries_s)
        })?;
        ensure(stitch(&once, &stream) == once, || {
            format!("{name}: not idempotent")
        })?;
    }
    let (stream, cuts) = shot_stream(&[10, 10], &[]);
    ensure(stitch(&cuts, &stream).boundaries_s == vec![10.0], || {
        "distant 10 s clips merged".into()
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..200 {
        let lens: Vec<usize> = (0..rng.random_range(1..12))
            .map(|_| rng.random_range(2..15))
            .collect();
        let close: Vec<usize> = (1..lens.len()).filter(|_| rng.random_bool(0.3)).collect();
        let (stream, cuts) = shot_stream(&lens, &close);
        if stream.frame_count() < 2 {
            continue;
        }
        let once = stitch(&cuts, &stream);
        let clips = once.clips();
        ensure(
            clips.len() == 1 || clips.iter().all(|c| c.length() >= MIN_CLIP_S),
            || format!("case {case}: short clip in {clips:?}"),
        )?;
        ensure(stitch(&once, &stream) == once, || {
            format!("case {case}: not idempotent")
        })?;
    }

    let proto = GroundingProtocol::default();
    for case in 0..20u64 {
        let n_clips = rng.random_range(1..=10);
        let vocab = rng.random_range(1..=6);
        let mut t = 0.0;
        let clips: Vec<Clip> = (0..n_clips)
            .map(|_| {
                t += rng.random_range(0..3) as f64;
                let len = rng.random_range(2..20) as f64;
                let actions = (0..rng.random_range(1..=3))
                    .map(|_| format!("act{}", rng.random_range(0..vocab)))
                    .collect();
                let c = Clip {
                    segment: Segment::new(t, t + len).unwrap(),
                    caption: String::new(),
                    actions,
                };
                t += len;
                c
            })
            .collect();
        let ann = Annotation {
            video_id: format!("a{case}"),
            frame_count: (t as usize + 5) * 10,
            fps: 10.0,
            clips,
        };
        let records = gen_tasks(&ann, &proto, case).map_err(|e| e.to_string())?;
        let want = expected_record_count(n_clips, ann.distinct_actions().len());
        ensure(records.len() == want, || {
            format!(
                "annotation {case}: {} records, formula {want}",
                records.len()
            )
        })?;
    }
    Ok("3 rule fixtures traced, ≥5 s and idempotence on 200 streams, record counts on 20 annotations".into())
}

// 8 ─ defaults

fn criterion_defaults() -> Outcome {
    let cfg = InferenceConfig::default();
    ensure(
        DEFAULT_HIGH_TARGET == 20 && cfg.high_target_count == 20,
        || "N_H != 20".into(),
    )?;
    ensure(
        DEFAULT_TEMPORAL_BINS == 1000 && cfg.proto.n_bins() == 1000,
        || "N != 1000".into(),
    )?;
    ensure(GroundingProtocol::default().digits() == 3, || {
        "bins not three digits".into()
    })?;
    ensure(
        DEFAULT_TOKENS_PER_FRAME == 64 && cfg.tokens_per_frame == 64,
        || "tokens/frame != 64".into(),
    )?;
    for fps in [1.0, 24.0, 25.0, 30.0, 60.0] {
        let t = VideoTimeline::new(600, fps).unwrap();
        let m = cfg
            .sampling_for(&t)
            .map_err(|e| e.to_string())?
            .low_interval_frames;
        ensure(m == fps as usize, || format!("{fps} fps: low interval {m}"))?;
    }
    Ok("N_H 20, N 1000, 64 tokens/frame, low frequency 1 frame/s".into())
}

// 9 ─ determinism of the answer command

fn criterion_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let items: Vec<QaItem> = synthetic_items().into_iter().take(4).collect();
    let lines: String = items
        .iter()
        .map(|i| serde_json::to_string(i).unwrap() + "\n")
        .collect();
    let dataset = dir.path().join("items.jsonl");
    std::fs::write(&dataset, lines).map_err(|e| e.to_string())?;
    let fixtures = dir.path().join("fixtures.json");
    let proto = GroundingProtocol::default();
    let mut rules = Vec::new();
    for item in &items {
        let d = item.frame_count as f64 / item.fps;
        let reply = format_segment(&item.gt_segments[0], d, &proto).map_err(|e| e.to_string())?;
        rules.push(serde_json::json!({
            "pattern": format!("^<video>\n.*{}$", regex::escape(&item.question)),
            "reply": reply,
        }));
    }
    let table = serde_json::json!({"rules": rules, "default_reply": "something happens"});
    std::fs::write(&fixtures, table.to_string()).map_err(|e| e.to_string())?;

    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("traces{run}.jsonl"));
        let status = Command::new(env!("CARGO_BIN_EXE_mixfreq"))
            .args([
                "answer",
                "--seed",
                "17",
                "--jobs",
                "2",
                "--tokens-per-frame",
                "16",
                "--dim",
                "8",
            ])
            .arg("--dataset")
            .arg(&dataset)
            .arg("--fixtures")
            .arg(&fixtures)
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || {
            format!("run {run} exited with {status}")
        })?;
        outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure(!outputs[0].is_empty(), || "empty trace file".into())?;
    ensure(outputs[0] == outputs[1], || "trace files differ".into())?;
    Ok(format!(
        "two runs, {} trace bytes, byte-identical",
        outputs[0].len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("grounding protocol round trip", criterion_round_trip),
        ("dense sampling law", criterion_sampling_law),
        ("mixing attention vs oracles", criterion_mma),
        ("attention invariants", criterion_invariants),
        ("oracle and jitter end to end", criterion_end_to_end),
        ("metric fidelity", criterion_metrics),
        ("corpus algorithms", criterion_corpus),
        ("hyperparameter defaults", criterion_defaults),
        ("answer determinism", criterion_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
