//! Corpus and vocabulary summaries.

use serde::{Deserialize, Serialize};

use crate::codec::Encoder;
use crate::error::Result;
use crate::grid::TokenGrid;
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub token: u32,
    pub count: u64,
    /// Number of base cells the token covers.
    pub span: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub grids: usize,
    pub cells: usize,
    pub tokens: usize,
    pub mean_tokens_per_grid: f64,
    pub compression_ratio: f64,
    pub vocab_size: u32,
    pub merges: usize,
    pub vocab_hash: String,
    /// Tokens never emitted when encoding the corpus.
    pub unused_tokens: usize,
    /// Per-token counts, most frequent first (ties by ID).
    pub usage: Vec<TokenUsage>,
}

/// Encode every grid and tally how often each vocabulary entry is used.
pub fn corpus_stats(grids: &[TokenGrid], vocab: &Vocabulary) -> Result<CorpusStats> {
    let encoder = Encoder::new(vocab);
    let spans = vocab.token_spans();
    let mut counts = vec![0u64; vocab.size() as usize];
    let (mut cells, mut tokens) = (0, 0);
    for g in grids {
        let seq = encoder.encode(g)?;
        cells += g.len();
        tokens += seq.len();
        for t in seq.tokens {
            counts[t as usize] += 1;
        }
    }
    let mut usage: Vec<TokenUsage> = counts
        .iter()
        .enumerate()
        .map(|(t, &count)| TokenUsage { token: t as u32, count, span: spans[t] })
        .collect();
    usage.sort_by(|a, b| b.count.cmp(&a.count).then(a.token.cmp(&b.token)));
    Ok(CorpusStats {
        grids: grids.len(),
        cells,
        tokens,
        mean_tokens_per_grid: tokens as f64 / grids.len().max(1) as f64,
        compression_ratio: cells as f64 / tokens.max(1) as f64,
        vocab_size: vocab.size(),
        merges: vocab.merges().len(),
        vocab_hash: vocab.content_hash(),
        unused_tokens: counts.iter().filter(|&&c| c == 0).count(),
        usage,
    })
}
