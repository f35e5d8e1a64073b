use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;

/// Power iteration stops once the L1 change falls below this.
pub const STATIONARY_TOLERANCE: f64 = 1e-13;
pub const STATIONARY_MAX_ITERATIONS: usize = 1_000_000;

/// Row-stochastic transition matrix; `transition[a][b]` is `P(b | a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovKernel {
    alphabet_size: usize,
    transition: Vec<Vec<f64>>,
}

impl MarkovKernel {
    pub fn new(transition: Vec<Vec<f64>>) -> Result<Self> {
        let n = transition.len();
        if n == 0 {
            return Err(Error::InvalidKernel("empty alphabet".into()));
        }
        for (a, row) in transition.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidKernel(format!("row {a} has {} entries, expected {n}", row.len())));
            }
            if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::InvalidKernel(format!("row {a} has entry {p} outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidKernel(format!("row {a} sums to {sum}")));
            }
        }
        Ok(MarkovKernel { alphabet_size: n, transition })
    }

    /// Binary kernel with `P(1|0) = p` and `P(0|1) = q`.
    pub fn binary_flip(p: f64, q: f64) -> Result<Self> {
        MarkovKernel::new(vec![vec![1.0 - p, p], vec![q, 1.0 - q]])
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            alphabet_size: usize,
            transition: Vec<Vec<f64>>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        let kernel = MarkovKernel::new(raw.transition)?;
        if kernel.alphabet_size != raw.alphabet_size {
            return Err(Error::InvalidKernel(format!(
                "alphabet_size {} does not match {} transition rows",
                raw.alphabet_size, kernel.alphabet_size
            )));
        }
        Ok(kernel)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MarkovKernel::from_json(&text)
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.transition[from][to]
    }

    /// Smallest transition probability.
    pub fn delta(&self) -> f64 {
        self.transition.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Strong connectivity of the positive-transition graph plus
    /// aperiodicity (gcd of cycle lengths equal to one).
    pub fn check_ergodic(&self) -> Result<()> {
        let n = self.alphabet_size;
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(a) = stack.pop() {
                for (b, s) in seen.iter_mut().enumerate() {
                    let p = if forward { self.transition[a][b] } else { self.transition[b][a] };
                    if p > 0.0 && !*s {
                        *s = true;
                        stack.push(b);
                    }
                }
            }
            seen.iter().all(|&s| s)
        };
        if !reach(true) || !reach(false) {
            return Err(Error::NonErgodic("transition graph is not strongly connected".into()));
        }
        // BFS levels from state 0; the period is the gcd of level(a)+1-level(b)
        // over all positive edges a -> b.
        let mut level = vec![usize::MAX; n];
        level[0] = 0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(a) = queue.pop_front() {
            for b in 0..n {
                if self.transition[a][b] > 0.0 && level[b] == usize::MAX {
                    level[b] = level[a] + 1;
                    queue.push_back(b);
                }
            }
        }
        let mut period = 0i64;
        for a in 0..n {
            for b in 0..n {
                if self.transition[a][b] > 0.0 {
                    period = gcd(period, (level[a] as i64 + 1 - level[b] as i64).abs());
                }
            }
        }
        if period != 1 {
            return Err(Error::NonErgodic(format!("chain is periodic with period {period}")));
        }
        Ok(())
    }

    /// `dist * P`.
    pub fn step(&self, dist: &[f64]) -> Vec<f64> {
        let n = self.alphabet_size;
        let mut out = vec![0.0; n];
        for (a, &pa) in dist.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (b, o) in out.iter_mut().enumerate() {
                *o += pa * self.transition[a][b];
            }
        }
        out
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A probability vector over the kernel's alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDist {
    pub probs: Vec<f64>,
}

impl StationaryDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(Error::InvalidParameter("distribution has a negative or NaN entry".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidParameter(format!("distribution sums to {sum}")));
        }
        Ok(StationaryDist { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `|| pi P - pi ||_1`.
    pub fn residual(&self, kernel: &MarkovKernel) -> f64 {
        kernel.step(&self.probs).iter().zip(&self.probs).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Stationary distribution by power iteration from the uniform vector.
/// Ergodicity is checked first, so the iteration converges.
pub fn stationary(kernel: &MarkovKernel) -> Result<StationaryDist> {
    kernel.check_ergodic()?;
    let n = kernel.alphabet_size();
    let mut pi = vec![1.0 / n as f64; n];
    let mut change = f64::INFINITY;
    for _ in 0..STATIONARY_MAX_ITERATIONS {
        let mut next = kernel.step(&pi);
        let sum: f64 = next.iter().sum();
        next.iter_mut().for_each(|p| *p /= sum);
        change = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if change < STATIONARY_TOLERANCE {
            return Ok(StationaryDist { probs: pi });
        }
    }
    Err(Error::NotConverged { iterations: STATIONARY_MAX_ITERATIONS, residual: change })
}
