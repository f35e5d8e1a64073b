//! Unigram token models and their per-patch cross-entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if !t.is_finite() {
            self.sum = t;
            return;
        }
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        if !self.sum.is_finite() {
            return self.sum;
        }
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LengthModelKind {
    /// Uniform over `1..=max_len` (with `max_len = m^2`).
    #[default]
    Uniform,
    /// Smoothed empirical frequencies of the fitted sequence lengths.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LengthModel {
    Uniform { max_len: usize },
    Empirical { max_len: usize, probs: Vec<f64> },
}

impl LengthModel {
    /// `ln Q_#(len)`; `-inf` outside the support.
    pub fn log_prob(&self, len: usize) -> f64 {
        match self {
            LengthModel::Uniform { max_len } => {
                if (1..=*max_len).contains(&len) {
                    -(*max_len as f64).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            LengthModel::Empirical { probs, .. } => match probs.get(len) {
                Some(&p) if p > 0.0 => p.ln(),
                _ => f64::NEG_INFINITY,
            },
        }
    }
}

/// `Q(t) = Q_#(|t|) * prod_r Q_tok(t_r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnigramModel {
    pub token_probs: Vec<f64>,
    pub length_model: LengthModel,
    pub smoothing: f64,
    /// Hash of the vocabulary the token IDs refer to, when known.
    pub vocab_reference: Option<String>,
}

impl UnigramModel {
    pub fn vocab_size(&self) -> usize {
        self.token_probs.len()
    }

    pub fn log_prob_token(&self, token: u32) -> f64 {
        match self.token_probs.get(token as usize) {
            Some(&p) if p > 0.0 => p.ln(),
            _ => f64::NEG_INFINITY,
        }
    }
}

pub const DEFAULT_SMOOTHING: f64 = 0.5;

/// Additive-smoothed token frequencies over `0..vocab_size`:
/// `Q_tok(t) = (count(t) + alpha) / (total + alpha * vocab_size)`.
pub fn fit_unigram<S: AsRef<[u32]>>(
    sequences: &[S],
    vocab_size: usize,
    smoothing: f64,
    length: LengthModelKind,
    max_len: usize,
) -> Result<UnigramModel> {
    fit_unigram_views(&[sequences], vocab_size, smoothing, length, max_len)
}

/// Like [`fit_unigram`] over several encodings ("views") of the same images,
/// each counted with weight `1 / views.len()`.
pub fn fit_unigram_views<S: AsRef<[u32]>>(
    views: &[&[S]],
    vocab_size: usize,
    smoothing: f64,
    length: LengthModelKind,
    max_len: usize,
) -> Result<UnigramModel> {
    if views.is_empty() || views.iter().all(|v| v.is_empty()) {
        return Err(Error::EmptyCorpus);
    }
    if smoothing.is_nan() || smoothing < 0.0 {
        return Err(Error::InvalidParameter(format!("smoothing must be non-negative, got {smoothing}")));
    }
    let weight = 1.0 / views.len() as f64;
    let mut counts = vec![0u64; vocab_size];
    let mut lens = vec![0u64; max_len + 1];
    let mut total = 0u64;
    for seq in views.iter().flat_map(|v| v.iter()) {
        let seq = seq.as_ref();
        for (position, &t) in seq.iter().enumerate() {
            let slot = counts.get_mut(t as usize).ok_or(Error::SequenceIdOutOfRange {
                position,
                id: t,
                limit: vocab_size as u32,
            })?;
            *slot += 1;
            total += 1;
        }
        if let Some(slot) = lens.get_mut(seq.len()) {
            *slot += 1;
        }
    }
    let denom = total as f64 * weight + smoothing * vocab_size as f64;
    if denom == 0.0 {
        return Err(Error::EmptyCorpus);
    }
    let token_probs = counts.iter().map(|&c| (c as f64 * weight + smoothing) / denom).collect();
    let length_model = match length {
        LengthModelKind::Uniform => LengthModel::Uniform { max_len },
        LengthModelKind::Empirical => {
            lens[0] = 0;
            let n = lens.iter().sum::<u64>() as f64 * weight;
            let denom = n + smoothing * max_len as f64;
            let probs = lens
                .iter()
                .enumerate()
                .map(|(i, &c)| if i == 0 || denom == 0.0 { 0.0 } else { (c as f64 * weight + smoothing) / denom })
                .collect();
            LengthModel::Empirical { max_len, probs }
        }
    };
    Ok(UnigramModel { token_probs, length_model, smoothing, vocab_reference: None })
}

/// Per-patch loss split into its token and length parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub token_term: f64,
    pub length_term: f64,
    pub images: usize,
}

/// `-(1/m^2) ln Q(enc(X))` averaged over images. An image's token part is
/// accumulated over its distinct tokens in ID order, so it does not depend
/// on the order tokens were emitted in.
pub fn image_token_nll(model: &UnigramModel, tokens: &[u32]) -> f64 {
    let mut sorted = tokens.to_vec();
    sorted.sort_unstable();
    let mut acc = CompensatedSum::default();
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i];
        let run = sorted[i..].iter().take_while(|&&x| x == t).count();
        acc.add(-(run as f64) * model.log_prob_token(t));
        i += run;
    }
    acc.value()
}

pub fn unigram_loss<S: AsRef<[u32]>>(
    model: &UnigramModel,
    sequences: &[S],
    patches_per_image: usize,
) -> Result<LossBreakdown> {
    if sequences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if patches_per_image == 0 {
        return Err(Error::InvalidParameter("patches_per_image must be positive".into()));
    }
    let vocab = model.vocab_size();
    for seq in sequences {
        if let Some((position, &id)) = seq.as_ref().iter().enumerate().find(|(_, &t)| t as usize >= vocab) {
            if model.smoothing == 0.0 {
                // Zero mass: the loss is infinite rather than an error.
                continue;
            }
            return Err(Error::SequenceIdOutOfRange { position, id, limit: vocab as u32 });
        }
    }
    let norm = patches_per_image as f64;
    let mut token = CompensatedSum::default();
    let mut length = CompensatedSum::default();
    for seq in sequences {
        let seq = seq.as_ref();
        token.add(image_token_nll(model, seq) / norm);
        length.add(-model.length_model.log_prob(seq.len()) / norm);
    }
    let n = sequences.len() as f64;
    let token_term = token.value() / n;
    let length_term = length.value() / n;
    Ok(LossBreakdown { total: token_term + length_term, token_term, length_term, images: sequences.len() })
}
