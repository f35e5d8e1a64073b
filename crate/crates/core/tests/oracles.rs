use std::collections::BTreeMap;

use imgbpe::codec::{expand_vocab_map, Encoder, TokenSequence};
use imgbpe::eval::{fit_unigram, unigram_loss, LengthModelKind};
use imgbpe::markov::{
    binary_entropy, entropy, epsilon, gen_defn1_corpus, gen_scenario_corpus, h_infinity, joint_entropy_exact,
    prop2_bound, stationary, Axis, Defn1Params, MarkovKernel, StationaryDist,
};
use imgbpe::trainer::{train, CorpusItem, TrainConfig};
use imgbpe::vocab::{Orientation, OrientationPolicy};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook BPE: count every adjacent pair, take the most frequent
/// (smallest pair on ties), replace left to right.
fn text_bpe(corpus: &[Vec<u32>], base: u32, merges: usize) -> Vec<(u32, u32)> {
    let mut corpus = corpus.to_vec();
    let mut rules = Vec::new();
    for j in 0..merges {
        let mut counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for s in &corpus {
            for w in s.windows(2) {
                *counts.entry((w[0], w[1])).or_default() += 1;
            }
        }
        let Some((&pair, _)) = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) else {
            break;
        };
        let new = base + j as u32;
        corpus = corpus.iter().map(|s| text_apply(s, pair, new)).collect();
        rules.push(pair);
    }
    rules
}

fn text_apply(s: &[u32], (a, b): (u32, u32), new: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(s.len());
    let mut i = 0;
    while i < s.len() {
        if i + 1 < s.len() && s[i] == a && s[i + 1] == b {
            out.push(new);
            i += 2;
        } else {
            out.push(s[i]);
            i += 1;
        }
    }
    out
}

fn random_kernel(rng: &mut ChaCha8Rng, n: usize) -> MarkovKernel {
    let rows = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let mut row: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let drift: f64 = 1.0 - row.iter().sum::<f64>();
            row[0] += drift;
            row
        })
        .collect();
    MarkovKernel::new(rows).unwrap()
}

/// `pi (P - I) = 0` with `sum(pi) = 1`, solved directly.
fn solve_stationary(k: &MarkovKernel) -> Vec<f64> {
    let n = k.alphabet_size();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(j, i)] = k.prob(i, j) - if i == j { 1.0 } else { 0.0 };
        }
    }
    let mut b = DVector::<f64>::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    a.lu().solve(&b).unwrap().iter().copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn oriented_1d_training_matches_text_bpe(
        corpus in prop::collection::vec(prop::collection::vec(0u32..3, 1..24), 1..6),
        merges in 0usize..10,
    ) {
        let items: Vec<CorpusItem> = corpus.iter().cloned().map(CorpusItem::Sequence).collect();
        let config = TrainConfig::new(3, merges).with_orientation(OrientationPolicy::Oriented);
        let vocab = train(&items, &config).unwrap();
        let ours: Vec<(u32, u32)> = vocab.merges().iter().map(|r| (r.left, r.right)).collect();
        prop_assert!(vocab.merges().iter().all(|r| r.orientation == Orientation::Horizontal));
        let reference = text_bpe(&corpus, 3, merges);
        prop_assert_eq!(&ours, &reference);
        let encoder = Encoder::new(&vocab);
        for s in &corpus {
            let expected = reference
                .iter()
                .enumerate()
                .fold(s.clone(), |acc, (j, &pair)| text_apply(&acc, pair, 3 + j as u32));
            prop_assert_eq!(encoder.encode_1d(s).unwrap().tokens, expected);
        }
    }

    #[test]
    fn stationary_matches_linear_solve(seed in any::<u64>(), n in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_kernel(&mut rng, n);
        let pi = stationary(&k).unwrap();
        let direct = solve_stationary(&k);
        for (a, b) in pi.probs.iter().zip(&direct) {
            prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn entropy_references_are_ordered(seed in any::<u64>(), n in 2usize..5, m in 1usize..4, d in 2u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_kernel(&mut rng, n);
        let pi = stationary(&k).unwrap();
        let h_pi = entropy(&pi);
        let h_inf = h_infinity(&k, &pi).unwrap();
        prop_assert!(h_inf <= h_pi + 1e-12);
        prop_assert!(h_pi <= (n as f64).ln() + 1e-12);
        let joint = joint_entropy_exact(&k, &pi, m).unwrap();
        prop_assert!(joint <= (m * m) as f64 * h_pi + 1e-9);
        prop_assert!(joint >= (m * m) as f64 * h_inf - 1e-9);
        let eps = epsilon(k.delta(), d);
        match prop2_bound(&k, &pi, d) {
            Ok(r) => {
                prop_assert!(eps < 1.0);
                prop_assert!(r.prop2_bound >= h_inf);
            }
            Err(_) => prop_assert!(eps >= 1.0),
        }
    }

    #[test]
    fn vocab_map_ranges_are_disjoint(n_text in 0u64..100_000, base in 1u64..5000, merged in 0u64..5000, local in 0u32..10_000) {
        let map = expand_vocab_map(n_text, base, merged);
        let r = map.ranges();
        for w in r.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
        }
        prop_assert_eq!(r[3].end, map.total_size());
        match map.global_id(local) {
            Some(g) => {
                prop_assert!((local as u64) < base + merged);
                prop_assert!(r[1].contains(&g) || r[2].contains(&g));
                prop_assert_eq!(map.local_id(g), Some(local));
            }
            None => prop_assert!((local as u64) >= base + merged),
        }
        let wrapped = map.wrap_image(&TokenSequence { tokens: vec![0], source_dims: None }).unwrap();
        prop_assert_eq!(wrapped, vec![map.special_tokens.image_start, n_text, map.special_tokens.image_end]);
    }
}

fn within_3_sigma(observed: f64, expected: f64, n: f64) -> bool {
    let sigma = (expected * (1.0 - expected) / n).sqrt();
    (observed - expected).abs() <= 3.0 * sigma
}

#[test]
fn scenario_marginals_and_transitions() {
    // Asymmetric kernel: pi = (q, p) / (p + q) = (2/3, 1/3).
    let k = MarkovKernel::binary_flip(0.3, 0.6).unwrap();
    let pi = stationary(&k).unwrap();
    let grids = gen_scenario_corpus(&k, &pi, 32, Axis::Column, 40, 17).unwrap();
    let (mut ones, mut cells, mut from0, mut flips0) = (0.0, 0.0, 0.0, 0.0);
    for g in &grids {
        ones += g.cells().iter().filter(|&&c| c == 1).count() as f64;
        cells += g.len() as f64;
        for c in 0..g.width() {
            let col = g.column(c);
            for w in col.windows(2) {
                if w[0] == 0 {
                    from0 += 1.0;
                    flips0 += f64::from(w[1]);
                }
            }
        }
    }
    // Neighbouring cells are correlated, so the marginal gets a loose check
    // against a per-column effective sample count.
    let effective = (40 * 32) as f64;
    assert!(within_3_sigma(ones / cells, 1.0 / 3.0, effective), "{}", ones / cells);
    assert!(within_3_sigma(flips0 / from0, 0.3, from0), "{}", flips0 / from0);
}

#[test]
fn row_axis_chains_run_left_to_right() {
    let k = MarkovKernel::binary_flip(0.05, 0.05).unwrap();
    let pi = stationary(&k).unwrap();
    let grids = gen_scenario_corpus(&k, &pi, 32, Axis::Row, 20, 5).unwrap();
    let (mut same_h, mut same_v, mut n) = (0.0, 0.0, 0.0);
    for g in &grids {
        for r in 1..g.height() {
            for c in 1..g.width() {
                n += 1.0;
                same_h += f64::from(g.get(r, c) == g.get(r, c - 1));
                same_v += f64::from(g.get(r, c) == g.get(r - 1, c));
            }
        }
    }
    assert!(within_3_sigma(same_h / n, 0.95, n), "{}", same_h / n);
    assert!((same_v / n - 0.5).abs() < 0.05, "{}", same_v / n);
}

#[test]
fn defn1_interior_copies_a_parent() {
    // With p = q = 0.1 an interior cell equals its chosen parent w.p. 0.9.
    let params = Defn1Params::new(0.1, 0.1, 1).unwrap();
    let grids = gen_defn1_corpus(&params, 24, 30, 9).unwrap();
    let (mut ones, mut n, mut either, mut m) = (0.0, 0.0, 0.0, 0.0);
    for g in &grids {
        ones += g.cells().iter().map(|&c| f64::from(c)).sum::<f64>();
        n += g.len() as f64;
        for r in 1..24 {
            for c in 1..24 {
                m += 1.0;
                let v = g.get(r, c);
                either += f64::from(v == g.get(r - 1, c) || v == g.get(r, c - 1));
            }
        }
    }
    assert!((ones / n - 0.5).abs() < 0.05, "{}", ones / n);
    // P(cell matches at least one parent) >= P(matches the chosen one) = 0.9.
    assert!(either / m >= 0.9 - 3.0 * (0.09 / m).sqrt(), "{}", either / m);
}

#[test]
fn uniform_corpus_fits_uniform_unigram() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let seqs: Vec<Vec<u32>> = (0..200).map(|_| (0..100).map(|_| rng.gen_range(0..4)).collect()).collect();
    let model = fit_unigram(&seqs, 4, 0.0, LengthModelKind::Uniform, 100).unwrap();
    let n = 20_000.0;
    for &p in &model.token_probs {
        assert!(within_3_sigma(p, 0.25, n), "{p}");
    }
}

#[test]
fn stationary_unigram_loss_approaches_h_pi() {
    let k = MarkovKernel::binary_flip(0.3, 0.6).unwrap();
    let pi = stationary(&k).unwrap();
    let m = 32;
    let grids = gen_scenario_corpus(&k, &pi, m, Axis::Column, 100, 8).unwrap();
    let seqs: Vec<Vec<u32>> = grids.iter().map(|g| g.cells().to_vec()).collect();
    let model = imgbpe::eval::UnigramModel {
        token_probs: pi.probs.clone(),
        length_model: imgbpe::eval::LengthModel::Uniform { max_len: m * m },
        smoothing: 0.0,
        vocab_reference: None,
    };
    let loss = unigram_loss(&model, &seqs, m * m).unwrap();
    let expected = entropy(&pi) + 2.0 * (m as f64).ln() / (m * m) as f64;
    assert!((loss.total - expected).abs() < 0.01, "{} vs {expected}", loss.total);
}

#[test]
fn binary_entropy_agrees_with_entropy() {
    for x in [0.01, 0.1, 0.3, 0.5, 0.77] {
        let d = StationaryDist::new(vec![x, 1.0 - x]).unwrap();
        assert!((binary_entropy(x) - entropy(&d)).abs() < 1e-15);
    }
}
