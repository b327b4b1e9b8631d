//! The textual segment protocol and the two dialogue prompts.
//!
//! A segment is written as `from SSS to EEE`, where both numbers are temporal
//! bins of the video zero-padded to the width of `N − 1` (three digits for
//! the default `N = 1000`). These strings are the wire contract with every
//! language backend.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::encoding::{bin_start, temporal_bin, DEFAULT_TEMPORAL_BINS};
use crate::error::{Error, Result};
use crate::sampling::Segment;

pub const QUESTION_PLACEHOLDER: &str = "<question>";
pub const CLUES_PLACEHOLDER: &str = "<clues>";

const Q1_TEXT: &str =
    "<video>\nPlease provide the temporal segment help to reason the question: <question>";
const Q2_TEXT: &str = "Additional temporal clues to focus on: <clues>\n<question>";
const CLUE_SEPARATOR: &str = ", ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingProtocol {
    n_bins: usize,
}

impl Default for GroundingProtocol {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_TEMPORAL_BINS,
        }
    }
}

impl GroundingProtocol {
    pub fn new(n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::argument(format!(
                "protocol needs >= 2 bins, got {n_bins}"
            )));
        }
        Ok(Self { n_bins })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Decimal digits of `N − 1`.
    pub fn digits(&self) -> usize {
        (self.n_bins - 1).to_string().len()
    }

    pub fn format_bin(&self, bin: usize) -> String {
        format!("{bin:0width$}", width = self.digits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    GroundingQ1,
    FocusedQ2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    kind: PromptKind,
    text: String,
}

impl PromptTemplate {
    pub fn new(kind: PromptKind, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        let mut required = vec![QUESTION_PLACEHOLDER];
        if kind == PromptKind::FocusedQ2 {
            required.push(CLUES_PLACEHOLDER);
        }
        for ph in required {
            let n = text.matches(ph).count();
            if n != 1 {
                return Err(Error::argument(format!(
                    "template must contain {ph} exactly once, found {n}"
                )));
            }
        }
        Ok(Self { kind, text })
    }

    pub fn grounding() -> Self {
        Self {
            kind: PromptKind::GroundingQ1,
            text: Q1_TEXT.to_owned(),
        }
    }

    pub fn focused() -> Self {
        Self {
            kind: PromptKind::FocusedQ2,
            text: Q2_TEXT.to_owned(),
        }
    }

    pub fn kind(&self) -> PromptKind {
        self.kind
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Substitutes placeholders verbatim. Clues are filled first so a
    /// question that itself contains `<clues>` is left untouched.
    pub fn render(&self, question: &str, clues: Option<&str>) -> String {
        let text = match clues {
            Some(c) => self.text.replacen(CLUES_PLACEHOLDER, c, 1),
            None => self.text.clone(),
        };
        text.replacen(QUESTION_PLACEHOLDER, question, 1)
    }
}

pub fn format_segment(seg: &Segment, duration_s: f64, proto: &GroundingProtocol) -> Result<String> {
    seg.check_within(duration_s)?;
    let n = proto.n_bins();
    let start = temporal_bin(seg.start_s, duration_s, n)?;
    let end = temporal_bin(seg.end_s, duration_s, n)?;
    Ok(format!(
        "from {} to {}",
        proto.format_bin(start),
        proto.format_bin(end)
    ))
}

fn segment_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bfrom\s+(\d+)\s+to\s+(\d+)").expect("static pattern"))
}

/// Every `from <digits> to <digits>` in `reply`, converted to seconds.
///
/// Matches with `start ≥ end` or bins past `N` are dropped. The result is
/// sorted by start with overlapping segments merged; an empty result is a
/// [`Error::GroundingParse`].
pub fn parse_segments(
    reply: &str,
    duration_s: f64,
    proto: &GroundingProtocol,
) -> Result<Vec<Segment>> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::DegenerateTimeline(format!("duration {duration_s}")));
    }
    let n = proto.n_bins();
    let mut found: Vec<Segment> = segment_pattern()
        .captures_iter(reply)
        .filter_map(|c| {
            let start: usize = c[1].parse().ok()?;
            let end: usize = c[2].parse().ok()?;
            if start >= end || end > n {
                return None;
            }
            Segment::new(
                bin_start(start, duration_s, n),
                bin_start(end, duration_s, n),
            )
            .ok()
        })
        .collect();
    if found.is_empty() {
        return Err(Error::GroundingParse(reply.to_owned()));
    }
    found.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    let mut merged: Vec<Segment> = Vec::with_capacity(found.len());
    for seg in found {
        match merged.last_mut() {
            Some(last) if seg.start_s < last.end_s => last.end_s = last.end_s.max(seg.end_s),
            _ => merged.push(seg),
        }
    }
    Ok(merged)
}

fn check_question(question: &str) -> Result<()> {
    if question.trim().is_empty() {
        return Err(Error::argument("question must not be empty"));
    }
    Ok(())
}

/// Round-one prompt asking the model to locate the relevant span.
pub fn build_q1(question: &str) -> Result<String> {
    check_question(question)?;
    Ok(PromptTemplate::grounding().render(question, None))
}

/// Round-two prompt: the grounded spans as clues, then the question.
pub fn build_q2(
    question: &str,
    segments: &[Segment],
    duration_s: f64,
    proto: &GroundingProtocol,
) -> Result<String> {
    check_question(question)?;
    if segments.is_empty() {
        return Err(Error::argument(
            "round-two prompt needs at least one segment",
        ));
    }
    let clues = segments
        .iter()
        .map(|s| format_segment(s, duration_s, proto))
        .collect::<Result<Vec<_>>>()?
        .join(CLUE_SEPARATOR);
    Ok(PromptTemplate::focused().render(question, Some(&clues)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seg(a: f64, b: f64) -> Segment {
        Segment::new(a, b).unwrap()
    }

    #[test]
    fn format_examples() {
        let p = GroundingProtocol::default();
        assert_eq!(
            format_segment(&seg(0.0, 100.0), 100.0, &p).unwrap(),
            "from 000 to 999"
        );
        assert_eq!(
            format_segment(&seg(25.0, 50.0), 100.0, &p).unwrap(),
            "from 250 to 500"
        );
        assert_eq!(
            format_segment(&seg(0.05, 0.10), 100.0, &p).unwrap(),
            "from 000 to 001"
        );
    }

    #[test]
    fn padding_follows_bin_count() {
        assert_eq!(GroundingProtocol::default().digits(), 3);
        assert_eq!(GroundingProtocol::new(100).unwrap().digits(), 2);
        assert_eq!(GroundingProtocol::new(101).unwrap().digits(), 3);
        assert_eq!(GroundingProtocol::new(10_000).unwrap().digits(), 4);
        assert!(GroundingProtocol::new(1).is_err());
        let p = GroundingProtocol::new(100).unwrap();
        assert_eq!(
            format_segment(&seg(5.0, 10.0), 100.0, &p).unwrap(),
            "from 05 to 10"
        );
    }

    #[test]
    fn parse_examples() {
        let p = GroundingProtocol::default();
        assert_eq!(
            parse_segments("from 250 to 500", 100.0, &p).unwrap(),
            vec![seg(25.0, 50.0)]
        );
        assert_eq!(
            parse_segments(
                "events occur from 100 to 200 and from 800 to 900",
                100.0,
                &p
            )
            .unwrap(),
            vec![seg(10.0, 20.0), seg(80.0, 90.0)]
        );
        assert!(matches!(
            parse_segments("I cannot determine the segment", 100.0, &p),
            Err(Error::GroundingParse(_))
        ));
    }

    #[test]
    fn parse_drops_degenerate_and_merges_overlaps() {
        let p = GroundingProtocol::default();
        let got = parse_segments(
            "from 600 to 500, From 100 to 300 then from 200 to 400; from 900 to 950",
            10.0,
            &p,
        )
        .unwrap();
        assert_eq!(got, vec![seg(1.0, 4.0), seg(9.0, 9.5)]);
        assert!(parse_segments("from 500 to 500", 10.0, &p).is_err());
        assert!(parse_segments("from 010 to 2000", 10.0, &p).is_err());
    }

    #[test]
    fn prompts() {
        assert_eq!(
            build_q1("What happens first?").unwrap(),
            "<video>\nPlease provide the temporal segment help to reason the question: What happens first?"
        );
        assert!(build_q1("why from 100 to 200?")
            .unwrap()
            .ends_with("why from 100 to 200?"));
        assert!(matches!(build_q1(""), Err(Error::Argument(_))));

        let p = GroundingProtocol::default();
        let q2 = build_q2("What next?", &[seg(25.0, 50.0)], 100.0, &p).unwrap();
        assert!(q2.contains("Additional temporal clues to focus on: from 250 to 500"));
        assert!(q2.ends_with("\nWhat next?"));
        let q2 = build_q2("What next?", &[seg(10.0, 20.0), seg(80.0, 90.0)], 100.0, &p).unwrap();
        assert!(q2.contains("from 100 to 200, from 800 to 900"));
        assert!(matches!(
            build_q2("What next?", &[], 100.0, &p),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn template_placeholders_checked() {
        assert!(PromptTemplate::new(PromptKind::GroundingQ1, "no placeholder").is_err());
        assert!(PromptTemplate::new(PromptKind::GroundingQ1, "<question> <question>").is_err());
        assert!(PromptTemplate::new(PromptKind::FocusedQ2, "<question>").is_err());
        let t = PromptTemplate::new(PromptKind::FocusedQ2, "[<clues>] <question>").unwrap();
        assert_eq!(t.render("q <clues>", Some("c")), "[c] q <clues>");
    }

    #[test]
    fn q2_round_trip_keeps_bins() {
        let p = GroundingProtocol::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let d: f64 = rng.random_range(1.0..600.0);
            let a: f64 = rng.random_range(0.0..d * 0.9);
            let b: f64 = rng.random_range(a + d / 500.0..=d);
            let s = seg(a, b);
            let q2 = build_q2("q", &[s], d, &p).unwrap();
            let parsed = parse_segments(&q2, d, &p).unwrap();
            assert_eq!(parsed.len(), 1);
            assert_eq!(
                temporal_bin(parsed[0].start_s, d, 1000).unwrap(),
                temporal_bin(a, d, 1000).unwrap()
            );
            assert_eq!(
                temporal_bin(parsed[0].end_s, d, 1000).unwrap(),
                temporal_bin(b, d, 1000).unwrap()
            );
        }
    }

    proptest! {
        #[test]
        fn round_trip_within_one_bin(d in 0.5f64..3600.0, u in 0.0f64..1.0, v in 0.0f64..1.0) {
            let a = u * d * 0.99;
            let b = a + d / 1000.0 + v * (d - a - d / 1000.0);
            prop_assume!(b <= d && b > a);
            let p = GroundingProtocol::default();
            let text = format_segment(&seg(a, b), d, &p).unwrap();
            let parsed = parse_segments(&text, d, &p).unwrap();
            prop_assert_eq!(parsed.len(), 1);
            let tol = d / 1000.0 * (1.0 + 1e-9);
            prop_assert!((parsed[0].start_s - a).abs() <= tol);
            prop_assert!((parsed[0].end_s - b).abs() <= tol);
        }

        #[test]
        fn format_is_lexicographically_monotone(d in 1.0f64..1000.0, a in 0.0f64..0.9, b in 0.0f64..0.9) {
            let p = GroundingProtocol::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let fa = format_segment(&seg(lo * d, d), d, &p).unwrap();
            let fb = format_segment(&seg(hi * d, d), d, &p).unwrap();
            prop_assert!(fa[5..8] <= fb[5..8]);
        }

        #[test]
        fn parse_output_sorted_disjoint_in_range(
            pairs in prop::collection::vec((0usize..1100, 0usize..1100), 1..8),
            d in 1.0f64..500.0,
        ) {
            let reply: Vec<String> = pairs.iter().map(|(a, b)| format!("from {a:03} to {b:03}")).collect();
            let p = GroundingProtocol::default();
            if let Ok(segs) = parse_segments(&reply.join(" and "), d, &p) {
                for s in &segs {
                    prop_assert!(s.start_s >= 0.0 && s.end_s <= d && s.start_s < s.end_s);
                }
                for w in segs.windows(2) {
                    prop_assert!(w[0].end_s <= w[1].start_s);
                }
            }
        }
    }
}
