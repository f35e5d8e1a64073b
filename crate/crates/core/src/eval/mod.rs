//! Unigram evaluation of flattened and tokenized encodings, the gap
//! experiment, probe dataset export and corpus statistics.

mod gap;
mod probe;
mod stats;
mod unigram;

pub use gap::{
    encode_direction, run_gap_experiment, train_direction_vocab, CorpusSummary, Directions, GapConfig, GapReport,
    GridSource, LengthStats, References, TokenizerMode,
};
pub use probe::{
    export_probe_dataset, ConditionStats, ProbeManifest, ProbeOptions, ProbeReferences, ProbeSplit, ProbeVocabInfo,
    SplitManifest, MANIFEST_FILE,
};
pub use stats::{corpus_stats, CorpusStats, TokenUsage};
pub use unigram::{
    fit_unigram, fit_unigram_views, image_token_nll, unigram_loss, CompensatedSum, LengthModel, LengthModelKind, LossBreakdown,
    UnigramModel, DEFAULT_SMOOTHING,
};
