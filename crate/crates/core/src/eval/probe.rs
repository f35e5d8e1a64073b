//! JSON-lines datasets for sequence-model probes: raw flattened grids and
//! per-direction 1D BPE encodings of the same grids.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gap::Directions;
use super::unigram::{fit_unigram, unigram_loss, LengthModelKind, DEFAULT_SMOOTHING};
use crate::codec::{flatten, Encoder};
use crate::error::{Error, Result};
use crate::grid::TokenGrid;
use crate::markov::{derive_seed, entropy, gen_defn1_corpus, h_infinity, optimal_loss_defn1, Defn1Params, OptimalLossEstimate};
use crate::vocab::Vocabulary;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSplit {
    pub name: String,
    pub count: usize,
}

impl ProbeSplit {
    pub fn new(name: impl Into<String>, count: usize) -> Self {
        ProbeSplit { name: name.into(), count }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub m: usize,
    pub directions: Directions,
    pub seed: u64,
    /// Monte Carlo samples for the optimal-loss reference; 0 skips it.
    pub optimal_mc_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionStats {
    pub file: String,
    pub sequences: usize,
    pub total_tokens: usize,
    pub total_base_symbols: usize,
    pub mean_tokens_per_sequence: f64,
    /// Divide a per-token loss by this to get a per-base-symbol loss.
    pub base_symbols_per_token: f64,
}

impl ConditionStats {
    fn new(file: String, sequences: usize, total_tokens: usize, total_base_symbols: usize) -> Self {
        ConditionStats {
            file,
            sequences,
            total_tokens,
            total_base_symbols,
            mean_tokens_per_sequence: total_tokens as f64 / sequences.max(1) as f64,
            base_symbols_per_token: total_base_symbols as f64 / total_tokens.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub name: String,
    pub count: usize,
    pub seed: u64,
    pub raw: ConditionStats,
    pub tokenized: ConditionStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReferences {
    pub h_pi: f64,
    pub h_inf: f64,
    /// Per-symbol token loss of a unigram model fit on the first split and
    /// evaluated on the last one.
    pub flattened_unigram: f64,
    pub optimal_loss: Option<OptimalLossEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeVocabInfo {
    pub hash: String,
    pub size: u32,
    pub base_vocab_size: u32,
    pub merges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeManifest {
    pub tool_version: String,
    pub generator: Defn1Params,
    pub options: ProbeOptions,
    pub vocab: ProbeVocabInfo,
    pub splits: Vec<SplitManifest>,
    pub references: ProbeReferences,
}

impl ProbeManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Serialize)]
struct RawRecord<'a> {
    grid: usize,
    tokens: &'a [u32],
    base_symbols: usize,
}

#[derive(Serialize)]
struct LineRecord<'a> {
    grid: usize,
    direction: &'static str,
    index: usize,
    tokens: &'a [u32],
    base_symbols: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_line<T: Serialize>(out: &mut impl Write, path: &Path, record: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))
}

fn write_split(
    dir: &Path,
    name: &str,
    grids: &[TokenGrid],
    encoder: &Encoder<'_>,
    directions: Directions,
) -> Result<(ConditionStats, ConditionStats)> {
    let raw_name = format!("{name}.raw.jsonl");
    let tok_name = format!("{name}.tokenized.jsonl");
    let raw_path = dir.join(&raw_name);
    let tok_path = dir.join(&tok_name);
    let mut raw = create(&raw_path)?;
    let mut tok = create(&tok_path)?;
    let (mut raw_tokens, mut tok_seqs, mut tok_tokens, mut tok_symbols) = (0, 0, 0, 0);
    for (i, grid) in grids.iter().enumerate() {
        let flat = flatten(grid).tokens;
        raw_tokens += flat.len();
        write_line(&mut raw, &raw_path, &RawRecord { grid: i, tokens: &flat, base_symbols: flat.len() })?;
        for (on, columns, direction) in [(directions.rows(), false, "row"), (directions.columns(), true, "column")] {
            if !on {
                continue;
            }
            let count = if columns { grid.width() } else { grid.height() };
            for index in 0..count {
                let line = if columns { grid.column(index) } else { grid.row(index).to_vec() };
                let tokens = encoder.encode_1d(&line)?.tokens;
                tok_seqs += 1;
                tok_tokens += tokens.len();
                tok_symbols += line.len();
                let record = LineRecord { grid: i, direction, index, tokens: &tokens, base_symbols: line.len() };
                write_line(&mut tok, &tok_path, &record)?;
            }
        }
    }
    raw.flush().map_err(|e| Error::io(&raw_path, e))?;
    tok.flush().map_err(|e| Error::io(&tok_path, e))?;
    Ok((
        ConditionStats::new(raw_name, grids.len(), raw_tokens, raw_tokens),
        ConditionStats::new(tok_name, tok_seqs, tok_tokens, tok_symbols),
    ))
}

/// Generate each split from the 2D k-th order process, write both
/// conditions as JSON lines under `dir`, and write `manifest.json`.
pub fn export_probe_dataset(
    params: &Defn1Params,
    vocab: &Vocabulary,
    splits: &[ProbeSplit],
    options: &ProbeOptions,
    dir: &Path,
) -> Result<ProbeManifest> {
    if splits.is_empty() || splits.iter().any(|s| s.count == 0) {
        return Err(Error::EmptyCorpus);
    }
    if vocab.base_vocab_size() != 2 {
        return Err(Error::InvalidVocab(format!(
            "probe data is binary; vocabulary has base size {}",
            vocab.base_vocab_size()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let encoder = Encoder::new(vocab);
    let mut manifests = Vec::with_capacity(splits.len());
    let mut first_last: Vec<Vec<Vec<u32>>> = Vec::new();
    for (i, split) in splits.iter().enumerate() {
        let seed = derive_seed(options.seed, i as u64);
        let grids = gen_defn1_corpus(params, options.m, split.count, seed)?;
        let (raw, tokenized) = write_split(dir, &split.name, &grids, &encoder, options.directions)?;
        if i == 0 || i + 1 == splits.len() {
            first_last.push(grids.iter().map(|g| flatten(g).tokens).collect());
        }
        manifests.push(SplitManifest { name: split.name.clone(), count: split.count, seed, raw, tokenized });
    }
    let m2 = options.m * options.m;
    let model = fit_unigram(&first_last[0], 2, DEFAULT_SMOOTHING, LengthModelKind::Uniform, m2)?;
    let flattened_unigram = unigram_loss(&model, first_last.last().unwrap(), m2)?.token_term;
    let kernel = params.kernel()?;
    let pi = params.stationary()?;
    let optimal_loss = match options.optimal_mc_samples {
        0 => None,
        n => Some(optimal_loss_defn1(params, options.m, n, derive_seed(options.seed, u64::MAX))?),
    };
    let manifest = ProbeManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        generator: *params,
        options: options.clone(),
        vocab: ProbeVocabInfo {
            hash: vocab.content_hash(),
            size: vocab.size(),
            base_vocab_size: vocab.base_vocab_size(),
            merges: vocab.merges().len(),
        },
        splits: manifests,
        references: ProbeReferences { h_pi: entropy(&pi), h_inf: h_infinity(&kernel, &pi)?, flattened_unigram, optimal_loss },
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

