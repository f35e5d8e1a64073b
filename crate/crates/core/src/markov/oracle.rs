//! Closed-form entropy quantities for Markov sources (all in nats).

use serde::{Deserialize, Serialize};

use super::kernel::{MarkovKernel, StationaryDist};
use crate::error::{Error, Result};

/// Shannon entropy with `0 ln 0 = 0`.
pub fn entropy(dist: &StationaryDist) -> f64 {
    entropy_of(&dist.probs)
}

pub(crate) fn entropy_of(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Binary entropy `-x ln x - (1-x) ln(1-x)`.
pub fn binary_entropy(x: f64) -> f64 {
    entropy_of(&[x, 1.0 - x])
}

/// Conditional entropy rate `-sum_a sum_b pi(a) P(b|a) ln P(b|a)`.
pub fn h_infinity(kernel: &MarkovKernel, pi: &StationaryDist) -> Result<f64> {
    if kernel.alphabet_size() != pi.len() {
        return Err(Error::DimensionMismatch { kernel: kernel.alphabet_size(), dist: pi.len() });
    }
    Ok(kernel.rows().iter().zip(&pi.probs).map(|(row, &pa)| pa * entropy_of(row)).sum())
}

/// Exact entropy of an `m x m` image whose columns (or rows) are independent
/// stationary chains: `m H(pi) + m (m - 1) H_inf`.
pub fn joint_entropy_exact(kernel: &MarkovKernel, pi: &StationaryDist, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let m = m as f64;
    Ok(m * entropy(pi) + m * (m - 1.0) * h_infinity(kernel, pi)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchingRate {
    /// Per-symbol entropy rate of the symmetric switching chain.
    pub rate: f64,
    /// `ln 2 / rate`.
    pub ratio: f64,
}

/// Entropy rate of the binary chain that switches with probability
/// `1 - delta`, and its ratio to the unigram floor `ln 2`.
pub fn remark1_rate(delta: f64) -> Result<SwitchingRate> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    let rate = binary_entropy(delta);
    Ok(SwitchingRate { rate, ratio: std::f64::consts::LN_2 / rate })
}

/// `ln(1/delta) / (0.99 ln D)`; a log ratio, so independent of the base.
pub fn epsilon(delta: f64, dictionary_size: u64) -> f64 {
    (1.0 / delta).ln() / (0.99 * (dictionary_size as f64).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub h_pi: f64,
    pub h_inf: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub prop2_bound: f64,
    pub dictionary_size_d: u64,
}

impl EntropyReport {
    /// Same report with every entropy converted to bits.
    pub fn in_bits(&self) -> EntropyReport {
        let k = std::f64::consts::LN_2;
        EntropyReport {
            h_pi: self.h_pi / k,
            h_inf: self.h_inf / k,
            prop2_bound: self.prop2_bound / k,
            ..self.clone()
        }
    }
}

/// Tokenized-unigram loss bound `H_inf / (1 - epsilon)` for a dictionary of
/// `D` tokens, reported with the quantities it is built from.
pub fn prop2_bound(kernel: &MarkovKernel, pi: &StationaryDist, dictionary_size: u64) -> Result<EntropyReport> {
    let delta = kernel.delta();
    if delta <= 0.0 {
        return Err(Error::ZeroDelta);
    }
    let eps = epsilon(delta, dictionary_size);
    if eps.is_nan() || eps >= 1.0 || dictionary_size < 2 {
        return Err(Error::EpsilonTooLarge { dictionary_size, epsilon: eps });
    }
    let h_inf = h_infinity(kernel, pi)?;
    Ok(EntropyReport {
        h_pi: entropy(pi),
        h_inf,
        delta,
        epsilon: eps,
        prop2_bound: h_inf / (1.0 - eps),
        dictionary_size_d: dictionary_size,
    })
}
