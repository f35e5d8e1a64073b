//! Flattened versus tokenized unigram losses on synthetic Markov corpora.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::unigram::{fit_unigram, fit_unigram_views, unigram_loss, LengthModelKind, LossBreakdown, DEFAULT_SMOOTHING};
use crate::codec::{flatten, Encoder};
use crate::error::{Error, Result};
use crate::grid::TokenGrid;
use crate::markov::{
    derive_seed, entropy, gen_defn1_corpus, gen_scenario_corpus, h_infinity, optimal_loss_defn1, prop2_bound, stationary,
    Axis, Defn1Params, MarkovKernel, OptimalLossEstimate,
};
use crate::trainer::{CorpusItem, CountingPolicy, TrainConfig, Trainer};
use crate::vocab::{OrientationPolicy, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSource {
    /// Independent chains along one axis.
    Scenario { kernel: MarkovKernel, axis: Axis },
    /// The binary 2D k-th order process.
    Defn1 { params: Defn1Params },
}

impl GridSource {
    pub fn kernel(&self) -> Result<MarkovKernel> {
        match self {
            GridSource::Scenario { kernel, .. } => Ok(kernel.clone()),
            GridSource::Defn1 { params } => params.kernel(),
        }
    }

    pub fn base_vocab_size(&self) -> usize {
        match self {
            GridSource::Scenario { kernel, .. } => kernel.alphabet_size(),
            GridSource::Defn1 { .. } => 2,
        }
    }

    pub fn generate(&self, m: usize, count: usize, seed: u64) -> Result<Vec<TokenGrid>> {
        match self {
            GridSource::Scenario { kernel, axis } => {
                let pi = stationary(kernel)?;
                gen_scenario_corpus(kernel, &pi, m, *axis, count, seed)
            }
            GridSource::Defn1 { params } => gen_defn1_corpus(params, m, count, seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Directions {
    Rows,
    Columns,
    /// Rows and columns, each weighted by one half.
    #[default]
    Both,
}

impl Directions {
    pub fn rows(self) -> bool {
        matches!(self, Directions::Rows | Directions::Both)
    }

    pub fn columns(self) -> bool {
        matches!(self, Directions::Columns | Directions::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TokenizerMode {
    /// 2D BPE over whole grids.
    Grid2d { orientation: OrientationPolicy, counting: CountingPolicy },
    /// One shared 1D BPE vocabulary applied to lines of the grid.
    PerDirection { directions: Directions },
}

impl Default for TokenizerMode {
    fn default() -> Self {
        TokenizerMode::Grid2d { orientation: OrientationPolicy::Oriented, counting: CountingPolicy::Symmetrized }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub source: GridSource,
    pub m: usize,
    pub num_train_grids: usize,
    pub num_eval_grids: usize,
    pub bpe_num_merges: usize,
    /// Dictionary size used for the bound reference.
    pub dictionary_size_d: u64,
    pub seed: u64,
    pub smoothing: f64,
    pub length_model: LengthModelKind,
    pub tokenizer: TokenizerMode,
    /// Monte Carlo samples for the Defn1 optimal-loss reference; 0 skips it.
    pub optimal_mc_samples: usize,
}

impl GapConfig {
    pub fn new(source: GridSource, m: usize, num_train_grids: usize, num_eval_grids: usize, bpe_num_merges: usize) -> Self {
        let base = source.base_vocab_size() as u64;
        GapConfig {
            source,
            m,
            num_train_grids,
            num_eval_grids,
            bpe_num_merges,
            dictionary_size_d: base + bpe_num_merges as u64,
            seed: 0,
            smoothing: DEFAULT_SMOOTHING,
            length_model: LengthModelKind::Uniform,
            tokenizer: TokenizerMode::default(),
            optimal_mc_samples: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

impl LengthStats {
    fn of<S: AsRef<[u32]>>(seqs: &[S]) -> LengthStats {
        let lens: Vec<usize> = seqs.iter().map(|s| s.as_ref().len()).collect();
        LengthStats {
            mean: lens.iter().sum::<usize>() as f64 / lens.len().max(1) as f64,
            min: lens.iter().copied().min().unwrap_or(0),
            max: lens.iter().copied().max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct References {
    pub h_pi: f64,
    pub h_inf: f64,
    /// `None` when the bound is undefined (zero delta or epsilon >= 1).
    pub prop2_bound: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub optimal_loss: Option<OptimalLossEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub num_train_grids: usize,
    pub num_eval_grids: usize,
    pub m: usize,
    pub flattened_length: LengthStats,
    pub tokenized_length: LengthStats,
    pub merges_learned: usize,
    pub vocab_size: u32,
    pub vocab_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub tool_version: String,
    pub units: String,
    pub flattened_unigram: LossBreakdown,
    /// Flattened loss with an unsmoothed model (may be infinite).
    pub flattened_unigram_unsmoothed: f64,
    pub tokenized_unigram: LossBreakdown,
    pub gap: f64,
    pub references: References,
    pub corpus: CorpusSummary,
    pub config: GapConfig,
}

impl GapReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Same report with every loss and entropy in bits.
    pub fn in_bits(&self) -> GapReport {
        let k = std::f64::consts::LN_2;
        let scale = |l: &LossBreakdown| LossBreakdown {
            total: l.total / k,
            token_term: l.token_term / k,
            length_term: l.length_term / k,
            images: l.images,
        };
        let r = &self.references;
        GapReport {
            units: "bits_per_patch".into(),
            flattened_unigram: scale(&self.flattened_unigram),
            flattened_unigram_unsmoothed: self.flattened_unigram_unsmoothed / k,
            tokenized_unigram: scale(&self.tokenized_unigram),
            gap: self.gap / k,
            references: References {
                h_pi: r.h_pi / k,
                h_inf: r.h_inf / k,
                prop2_bound: r.prop2_bound.map(|b| b / k),
                optimal_loss: r.optimal_loss.map(|o| OptimalLossEstimate {
                    estimate: o.estimate / k,
                    std_error: o.std_error / k,
                    ..o
                }),
                ..r.clone()
            },
            ..self.clone()
        }
    }

    pub const CSV_HEADER: &'static str = "seed,m,num_train_grids,num_eval_grids,bpe_num_merges,dictionary_size_d,\
flattened,tokenized,gap,h_pi,h_inf,prop2_bound,tokenized_mean_len,vocab_hash";

    /// One CSV row matching [`GapReport::CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let bound = self.references.prop2_bound.map(|b| b.to_string()).unwrap_or_default();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.config.seed,
            self.config.m,
            self.config.num_train_grids,
            self.config.num_eval_grids,
            self.config.bpe_num_merges,
            self.config.dictionary_size_d,
            self.flattened_unigram.total,
            self.tokenized_unigram.total,
            self.gap,
            self.references.h_pi,
            self.references.h_inf,
            bound,
            self.corpus.tokenized_length.mean,
            self.corpus.vocab_hash,
        );
        s
    }
}

/// Train a tokenizer on one corpus and encode another; one sequence list per
/// view of each image (one for 2D BPE, one or two for per-direction).
struct Tokenized {
    vocab: Vocabulary,
    train_views: Vec<Vec<Vec<u32>>>,
    eval_views: Vec<Vec<Vec<u32>>>,
}

fn lines(grid: &TokenGrid, columns: bool) -> Vec<Vec<u32>> {
    if columns {
        (0..grid.width()).map(|c| grid.column(c)).collect()
    } else {
        grid.rows().map(|r| r.to_vec()).collect()
    }
}

/// One shared 1D vocabulary over all rows and/or columns of `grids`.
pub fn train_direction_vocab(
    grids: &[TokenGrid],
    base_vocab_size: u32,
    num_merges: usize,
    directions: Directions,
) -> Result<Vocabulary> {
    let mut corpus = Vec::new();
    for g in grids {
        if directions.rows() {
            corpus.extend(lines(g, false).into_iter().map(CorpusItem::Sequence));
        }
        if directions.columns() {
            corpus.extend(lines(g, true).into_iter().map(CorpusItem::Sequence));
        }
    }
    let config = TrainConfig::new(base_vocab_size, num_merges).with_orientation(OrientationPolicy::Oriented);
    let mut trainer = Trainer::new(&corpus, config)?;
    trainer.run();
    Ok(trainer.into_vocab())
}

/// Encode each line along one axis and concatenate in line order.
pub fn encode_direction(encoder: &Encoder<'_>, grid: &TokenGrid, columns: bool) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for line in lines(grid, columns) {
        out.extend(encoder.encode_1d(&line)?.tokens);
    }
    Ok(out)
}

fn tokenize(config: &GapConfig, train: &[TokenGrid], eval: &[TokenGrid]) -> Result<Tokenized> {
    let base = config.source.base_vocab_size() as u32;
    match config.tokenizer {
        TokenizerMode::Grid2d { orientation, counting } => {
            let corpus: Vec<CorpusItem> = train.iter().cloned().map(CorpusItem::Grid).collect();
            let tc = TrainConfig::new(base, config.bpe_num_merges).with_orientation(orientation).with_counting(counting);
            let mut trainer = Trainer::new(&corpus, tc)?;
            trainer.run();
            let train_seqs = trainer.segmentations().iter().map(|s| s.tokens()).collect();
            let vocab = trainer.into_vocab();
            let encoder = Encoder::new(&vocab);
            let eval_seqs = eval.iter().map(|g| encoder.encode(g).map(|s| s.tokens)).collect::<Result<_>>()?;
            Ok(Tokenized { train_views: vec![train_seqs], eval_views: vec![eval_seqs], vocab })
        }
        TokenizerMode::PerDirection { directions } => {
            let vocab = train_direction_vocab(train, base, config.bpe_num_merges, directions)?;
            let encoder = Encoder::new(&vocab);
            let axes: Vec<bool> = [(directions.rows(), false), (directions.columns(), true)]
                .into_iter()
                .filter_map(|(on, col)| on.then_some(col))
                .collect();
            let view = |grids: &[TokenGrid], col: bool| -> Result<Vec<Vec<u32>>> {
                grids.iter().map(|g| encode_direction(&encoder, g, col)).collect()
            };
            let train_views = axes.iter().map(|&c| view(train, c)).collect::<Result<_>>()?;
            let eval_views = axes.iter().map(|&c| view(eval, c)).collect::<Result<_>>()?;
            Ok(Tokenized { vocab, train_views, eval_views })
        }
    }
}

/// One model fit on all views, each weighted by `1 / views`; the loss is the
/// mean over views.
fn views_loss(
    config: &GapConfig,
    vocab_size: usize,
    train_views: &[Vec<Vec<u32>>],
    eval_views: &[Vec<Vec<u32>>],
) -> Result<LossBreakdown> {
    let m2 = config.m * config.m;
    let views: Vec<&[Vec<u32>]> = train_views.iter().map(|v| v.as_slice()).collect();
    let model = fit_unigram_views(&views, vocab_size, config.smoothing, config.length_model, m2)?;
    let losses = eval_views.iter().map(|v| unigram_loss(&model, v, m2)).collect::<Result<Vec<_>>>()?;
    if losses.len() == 1 {
        return Ok(losses[0]);
    }
    let w = 1.0 / losses.len() as f64;
    let token_term = losses.iter().map(|l| w * l.token_term).sum::<f64>();
    let length_term = losses.iter().map(|l| w * l.length_term).sum::<f64>();
    Ok(LossBreakdown { total: token_term + length_term, token_term, length_term, images: losses[0].images })
}

pub fn run_gap_experiment(config: &GapConfig) -> Result<GapReport> {
    if config.m == 0 {
        return Err(Error::InvalidParameter("m must be positive".into()));
    }
    if config.num_train_grids == 0 || config.num_eval_grids == 0 {
        return Err(Error::EmptyCorpus);
    }
    let kernel = config.source.kernel()?;
    let pi = match &config.source {
        GridSource::Defn1 { params } => params.stationary()?,
        GridSource::Scenario { kernel, .. } => stationary(kernel)?,
    };
    let train = config.source.generate(config.m, config.num_train_grids, derive_seed(config.seed, 0))?;
    let eval = config.source.generate(config.m, config.num_eval_grids, derive_seed(config.seed, 1))?;
    let base = config.source.base_vocab_size();
    let m2 = config.m * config.m;

    let flat_train: Vec<Vec<u32>> = train.iter().map(|g| flatten(g).tokens).collect();
    let flat_eval: Vec<Vec<u32>> = eval.iter().map(|g| flatten(g).tokens).collect();
    let flattened = views_loss(config, base, std::slice::from_ref(&flat_train), std::slice::from_ref(&flat_eval))?;
    let unsmoothed = fit_unigram(&flat_train, base, 0.0, config.length_model, m2)
        .and_then(|model| unigram_loss(&model, &flat_eval, m2))?
        .total;

    let tok = tokenize(config, &train, &eval)?;
    let tokenized = views_loss(config, tok.vocab.size() as usize, &tok.train_views, &tok.eval_views)?;
    let all_eval: Vec<&Vec<u32>> = tok.eval_views.iter().flatten().collect();

    let bound = prop2_bound(&kernel, &pi, config.dictionary_size_d).ok();
    let optimal_loss = match (&config.source, config.optimal_mc_samples) {
        (GridSource::Defn1 { params }, n) if n > 0 => {
            Some(optimal_loss_defn1(params, config.m, n, derive_seed(config.seed, 2))?)
        }
        _ => None,
    };
    let references = References {
        h_pi: entropy(&pi),
        h_inf: h_infinity(&kernel, &pi)?,
        prop2_bound: bound.as_ref().map(|b| b.prop2_bound),
        epsilon: bound.as_ref().map(|b| b.epsilon),
        delta: kernel.delta(),
        optimal_loss,
    };
    Ok(GapReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        units: "nats_per_patch".into(),
        gap: flattened.total - tokenized.total,
        flattened_unigram: flattened,
        flattened_unigram_unsmoothed: unsmoothed,
        tokenized_unigram: tokenized,
        references,
        corpus: CorpusSummary {
            num_train_grids: config.num_train_grids,
            num_eval_grids: config.num_eval_grids,
            m: config.m,
            flattened_length: LengthStats::of(&flat_eval),
            tokenized_length: LengthStats::of(&all_eval),
            merges_learned: tok.vocab.merges().len(),
            vocab_size: tok.vocab.size(),
            vocab_hash: tok.vocab.content_hash(),
        },
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(p: f64) -> GridSource {
        GridSource::Scenario { kernel: MarkovKernel::binary_flip(p, p).unwrap(), axis: Axis::Column }
    }

    #[test]
    fn zero_merges_match_flattened_exactly() {
        for tokenizer in [
            TokenizerMode::default(),
            TokenizerMode::Grid2d { orientation: OrientationPolicy::Agnostic, counting: CountingPolicy::Symmetrized },
            TokenizerMode::PerDirection { directions: Directions::Rows },
            TokenizerMode::PerDirection { directions: Directions::Both },
        ] {
            let mut c = GapConfig::new(scenario(0.9), 8, 5, 5, 0);
            c.tokenizer = tokenizer;
            let r = run_gap_experiment(&c).unwrap();
            assert_eq!(r.flattened_unigram.total, r.tokenized_unigram.total, "{tokenizer:?}");
            assert_eq!(r.gap, 0.0);
        }
    }

    #[test]
    fn deterministic_report() {
        let mut c = GapConfig::new(scenario(0.9), 8, 4, 4, 6);
        c.seed = 11;
        let a = run_gap_experiment(&c).unwrap().to_json_pretty();
        let b = run_gap_experiment(&c).unwrap().to_json_pretty();
        assert_eq!(a, b);
    }

    #[test]
    fn fair_coin_has_no_gap_to_exploit() {
        let mut c = GapConfig::new(scenario(0.5), 16, 20, 20, 14);
        c.seed = 3;
        let r = run_gap_experiment(&c).unwrap();
        let ln2 = std::f64::consts::LN_2;
        let length = 2.0 * 16f64.ln() / 256.0;
        assert!((r.flattened_unigram.length_term - length).abs() < 1e-15);
        assert!((r.flattened_unigram.token_term - ln2).abs() < 0.01, "{}", r.flattened_unigram.token_term);
        // Oriented codes are lossless, so merges cannot beat the entropy.
        assert!(r.tokenized_unigram.token_term > ln2 - 0.01, "{}", r.tokenized_unigram.token_term);
        assert!(r.gap <= 0.01);
    }

    #[test]
    fn csv_row_has_header_arity() {
        let r = run_gap_experiment(&GapConfig::new(scenario(0.9), 4, 2, 2, 2)).unwrap();
        assert_eq!(r.csv_row().split(',').count(), GapReport::CSV_HEADER.split(',').count());
    }
}
