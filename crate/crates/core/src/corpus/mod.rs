//! Benchmark construction: split videos into clips, stitch short or similar
//! clips, and turn clip annotations into question-answer records.

mod split;
mod tasks;

pub use split::{
    cosine_distance, detect_boundaries, stitch, ClipBoundarySet, FeatureStream, MERGE_DISTANCE,
    MIN_CLIP_S,
};
pub use tasks::{
    corpus_stats, expected_record_count, fill_captions, gen_tasks, Annotation, CaptionerBackend,
    Clip, CorpusStats, MockCaptioner, QaRecord, TaskKind, Turn,
};
