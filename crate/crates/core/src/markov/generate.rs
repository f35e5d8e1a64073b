//! Seeded synthetic grid generators.
//!
//! Every column (or row) of a scenario grid draws from its own ChaCha
//! stream, so output depends only on the seed, never on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{MarkovKernel, StationaryDist};
use super::oracle::binary_entropy;
use crate::error::{Error, Result};
use crate::grid::TokenGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Each column is an independent top-to-bottom chain.
    #[default]
    Column,
    /// Each row is an independent left-to-right chain.
    Row,
}

/// Parameters of the binary 2D k-th order process: each cell copies one
/// of its two parents (k above, k to the left, chosen by a fair coin)
/// through the flip kernel `P(1|0) = p`, `P(0|1) = q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Defn1Params {
    pub p: f64,
    pub q: f64,
    pub k: usize,
}

impl Defn1Params {
    pub fn new(p: f64, q: f64, k: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidParameter(format!("p and q must lie in [0, 1], got p={p}, q={q}")));
        }
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        Ok(Defn1Params { p, q, k })
    }

    pub fn kernel(&self) -> Result<MarkovKernel> {
        MarkovKernel::binary_flip(self.p, self.q)
    }

    /// Stationary law of the flip kernel, `(q, p) / (p + q)`.
    pub fn stationary(&self) -> Result<StationaryDist> {
        let s = self.p + self.q;
        if s == 0.0 {
            return Err(Error::NonErgodic("p = q = 0 has no unique stationary distribution".into()));
        }
        StationaryDist::new(vec![self.q / s, self.p / s])
    }

    /// `P(X = 1 | parent)`.
    fn prob_one(&self, parent: u32) -> f64 {
        if parent == 0 {
            self.p
        } else {
            1.0 - self.q
        }
    }
}

/// Derives an independent per-item seed from a base seed (SplitMix64).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sample(probs: &[f64], u: f64) -> u32 {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u32;
        }
    }
    // Rounding left u above the cumulative sum: take the last supported state.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u32
}

/// One `m x m` grid whose columns (or rows) are independent chains started
/// from `pi`.
pub fn gen_scenario(kernel: &MarkovKernel, pi: &StationaryDist, m: usize, axis: Axis, seed: u64) -> Result<TokenGrid> {
    if kernel.alphabet_size() != pi.len() {
        return Err(Error::DimensionMismatch { kernel: kernel.alphabet_size(), dist: pi.len() });
    }
    if m == 0 {
        return Err(Error::InvalidParameter("m must be positive".into()));
    }
    let chains: Vec<Vec<u32>> = (0..m)
        .into_par_iter()
        .map(|line| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(line as u64);
            let mut chain = Vec::with_capacity(m);
            let mut state = sample(&pi.probs, rng.gen());
            chain.push(state);
            for _ in 1..m {
                state = sample(&kernel.rows()[state as usize], rng.gen());
                chain.push(state);
            }
            chain
        })
        .collect();
    let mut cells = vec![0u32; m * m];
    for (line, chain) in chains.iter().enumerate() {
        for (pos, &v) in chain.iter().enumerate() {
            let idx = match axis {
                Axis::Column => pos * m + line,
                Axis::Row => line * m + pos,
            };
            cells[idx] = v;
        }
    }
    TokenGrid::new(m, m, cells)
}

/// `count` scenario grids; grid `i` uses `derive_seed(seed, i)`.
pub fn gen_scenario_corpus(
    kernel: &MarkovKernel,
    pi: &StationaryDist,
    m: usize,
    axis: Axis,
    count: usize,
    seed: u64,
) -> Result<Vec<TokenGrid>> {
    (0..count)
        .into_par_iter()
        .map(|i| gen_scenario(kernel, pi, m, axis, derive_seed(seed, i as u64)))
        .collect()
}

/// One `m x m` grid of the 2D k-th order process.
///
/// Cells with neither parent in range are drawn from the stationary law;
/// cells with exactly one parent in range use that parent; the others flip
/// a fair coin between the vertical and horizontal parent.
pub fn gen_defn1(params: &Defn1Params, m: usize, seed: u64) -> Result<TokenGrid> {
    let (cells, _) = defn1_cells(params, m, seed)?;
    TokenGrid::new(m, m, cells)
}

/// Cells plus the per-cell coin outcome (`Some(true)` = vertical parent).
fn defn1_cells(params: &Defn1Params, m: usize, seed: u64) -> Result<(Vec<u32>, Vec<Option<bool>>)> {
    let k = params.k;
    if m <= k {
        return Err(Error::InvalidParameter(format!("m = {m} must exceed k = {k}")));
    }
    let pi = params.stationary()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = vec![0u32; m * m];
    let mut coins = vec![None; m * m];
    for i in 0..m {
        for j in 0..m {
            let value = match (i >= k, j >= k) {
                (false, false) => sample(&pi.probs, rng.gen()),
                (true, false) => draw(params, cells[(i - k) * m + j], &mut rng),
                (false, true) => draw(params, cells[i * m + j - k], &mut rng),
                (true, true) => {
                    let vertical = rng.gen::<bool>();
                    coins[i * m + j] = Some(vertical);
                    let parent = if vertical { cells[(i - k) * m + j] } else { cells[i * m + j - k] };
                    draw(params, parent, &mut rng)
                }
            };
            cells[i * m + j] = value;
        }
    }
    Ok((cells, coins))
}

fn draw(params: &Defn1Params, parent: u32, rng: &mut ChaCha8Rng) -> u32 {
    u32::from(rng.gen::<f64>() < params.prob_one(parent))
}

pub fn gen_defn1_corpus(params: &Defn1Params, m: usize, count: usize, seed: u64) -> Result<Vec<TokenGrid>> {
    (0..count)
        .into_par_iter()
        .map(|i| gen_defn1(params, m, derive_seed(seed, i as u64)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalLossEstimate {
    /// Mean mixture entropy per interior cell, nats.
    pub estimate: f64,
    pub std_error: f64,
    /// Fraction of sampled cells whose two parents agree.
    pub parent_agreement: f64,
    pub samples: usize,
}

/// Monte Carlo estimate of `E[H(P(.|up)/2 + P(.|left)/2)]` over interior
/// cells: the best raster-order predictive loss when the coin is hidden.
pub fn optimal_loss_defn1(params: &Defn1Params, m: usize, mc_samples: usize, seed: u64) -> Result<OptimalLossEstimate> {
    if mc_samples < 10_000 {
        return Err(Error::InvalidParameter(format!("mc_samples must be at least 10^4, got {mc_samples}")));
    }
    let k = params.k;
    if m <= k {
        return Err(Error::InvalidParameter(format!("m = {m} must exceed k = {k}")));
    }
    let (mut n, mut sum, mut sum_sq, mut agree) = (0usize, 0.0f64, 0.0f64, 0usize);
    let mut grid_index = 0u64;
    while n < mc_samples {
        let (cells, _) = defn1_cells(params, m, derive_seed(seed, grid_index))?;
        grid_index += 1;
        'grid: for i in k..m {
            for j in k..m {
                let up = cells[(i - k) * m + j];
                let left = cells[i * m + j - k];
                let p1 = 0.5 * params.prob_one(up) + 0.5 * params.prob_one(left);
                let h = binary_entropy(p1);
                sum += h;
                sum_sq += h * h;
                agree += usize::from(up == left);
                n += 1;
                if n == mc_samples {
                    break 'grid;
                }
            }
        }
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    Ok(OptimalLossEstimate {
        estimate: mean,
        std_error: (var / n as f64).sqrt(),
        parent_agreement: agree as f64 / n as f64,
        samples: n,
    })
}
