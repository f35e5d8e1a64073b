use imgbpe::codec::{decode, encode, encode_with_layout, flatten, Encoder};
use imgbpe::grid::{GridFormat, TokenGrid};
use imgbpe::trainer::{train, CorpusItem, CountingPolicy, TrainConfig, Trainer};
use imgbpe::vocab::{OrientationPolicy, Vocabulary};
use proptest::prelude::*;

fn grid_strategy(max_side: usize, alphabet: u32) -> impl Strategy<Value = TokenGrid> {
    (1..=max_side, 1..=max_side).prop_flat_map(move |(h, w)| {
        prop::collection::vec(0..alphabet, h * w).prop_map(move |cells| TokenGrid::new(h, w, cells).unwrap())
    })
}

fn corpus_strategy(alphabet: u32) -> impl Strategy<Value = Vec<TokenGrid>> {
    prop::collection::vec(grid_strategy(6, alphabet), 1..5)
}

fn policy_strategy() -> impl Strategy<Value = (OrientationPolicy, CountingPolicy)> {
    prop_oneof![
        Just((OrientationPolicy::Agnostic, CountingPolicy::Symmetrized)),
        Just((OrientationPolicy::Agnostic, CountingPolicy::PaperExactUpperTri)),
        Just((OrientationPolicy::Oriented, CountingPolicy::Symmetrized)),
        Just((OrientationPolicy::Oriented, CountingPolicy::PaperExactUpperTri)),
    ]
}

fn trained(corpus: &[TokenGrid], alphabet: u32, merges: usize, policy: (OrientationPolicy, CountingPolicy)) -> Vocabulary {
    let items: Vec<CorpusItem> = corpus.iter().cloned().map(CorpusItem::Grid).collect();
    let config = TrainConfig::new(alphabet, merges).with_orientation(policy.0).with_counting(policy.1);
    train(&items, &config).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn segmentation_is_a_partition(
        corpus in corpus_strategy(3),
        probe in grid_strategy(7, 3),
        merges in 0usize..8,
        policy in policy_strategy(),
    ) {
        let vocab = trained(&corpus, 3, merges, policy);
        let encoder = Encoder::new(&vocab);
        let mut seg = encoder.segment(&probe).unwrap();
        encoder.apply_merges(&mut seg);
        prop_assert!(seg.validate().is_ok());
        let covered: usize = seg.instances().iter().map(|i| i.cells.len()).sum();
        prop_assert_eq!(covered, probe.len());
        let spans = vocab.token_spans();
        for inst in seg.instances() {
            prop_assert_eq!(inst.cells.len(), spans[inst.token as usize]);
            let leaves = vocab.leaves(inst.token);
            let values: Vec<u32> = inst.cells.iter().map(|&c| probe.cells()[c as usize]).collect();
            prop_assert_eq!(values, leaves);
        }
    }

    #[test]
    fn oriented_decode_inverts_encode(
        corpus in corpus_strategy(3),
        probe in grid_strategy(7, 3),
        merges in 0usize..10,
        counting in prop_oneof![Just(CountingPolicy::Symmetrized), Just(CountingPolicy::PaperExactUpperTri)],
    ) {
        let vocab = trained(&corpus, 3, merges, (OrientationPolicy::Oriented, counting));
        let seq = encode(&probe, &vocab).unwrap();
        prop_assert_eq!(decode(&seq, &vocab, None).unwrap(), probe);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn layout_decode_inverts_encode(
        corpus in corpus_strategy(3),
        probe in grid_strategy(6, 3),
        merges in 0usize..8,
        policy in policy_strategy(),
    ) {
        let vocab = trained(&corpus, 3, merges, policy);
        let (seq, layout) = encode_with_layout(&probe, &vocab).unwrap();
        prop_assert_eq!(decode(&seq, &vocab, Some(&layout)).unwrap(), probe);
    }

    #[test]
    fn grid_formats_round_trip(grid in grid_strategy(9, 1000)) {
        prop_assert_eq!(&TokenGrid::parse_text(&grid.to_text(), None).unwrap(), &grid);
        prop_assert_eq!(&TokenGrid::parse_binary(&grid.to_binary(), None).unwrap(), &grid);
        prop_assert_eq!(GridFormat::from_extension(GridFormat::Binary.extension()), Some(GridFormat::Binary));
    }

    #[test]
    fn vocab_json_is_idempotent(corpus in corpus_strategy(4), merges in 0usize..8, policy in policy_strategy()) {
        let vocab = trained(&corpus, 4, merges, policy);
        let text = vocab.to_json();
        let back = Vocabulary::from_json(&text).unwrap();
        prop_assert_eq!(&back, &vocab);
        prop_assert_eq!(back.to_json(), text);
        let tagged = vocab.to_json_with_provenance(&serde_json::json!({"seed": 1}));
        prop_assert_eq!(Vocabulary::from_json(&tagged).unwrap().content_hash(), vocab.content_hash());
    }

    #[test]
    fn training_is_deterministic(corpus in corpus_strategy(3), merges in 0usize..8, policy in policy_strategy()) {
        let a = trained(&corpus, 3, merges, policy).to_json();
        let b = trained(&corpus, 3, merges, policy).to_json();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn early_stop_leaves_no_pairs(corpus in corpus_strategy(2), policy in policy_strategy()) {
        let items: Vec<CorpusItem> = corpus.iter().cloned().map(CorpusItem::Grid).collect();
        let config = TrainConfig::new(2, 1000).with_orientation(policy.0).with_counting(policy.1);
        let mut trainer = Trainer::new(&items, config).unwrap();
        trainer.run();
        prop_assert!(trainer.stopped_early());
        prop_assert!(trainer.vocab().merges().len() < 1000);
        let (cand, freq) = imgbpe::trainer::max_freq_pair(&trainer.counts(), policy.1, policy.0);
        prop_assert!(cand.is_none() || freq == 0);
        prop_assert!(trainer.log().iter().all(|e| e.freq > 0));
    }

    #[test]
    fn trainer_segmentation_matches_encoder(corpus in corpus_strategy(3), merges in 0usize..8, policy in policy_strategy()) {
        let items: Vec<CorpusItem> = corpus.iter().cloned().map(CorpusItem::Grid).collect();
        let config = TrainConfig::new(3, merges).with_orientation(policy.0).with_counting(policy.1);
        let mut trainer = Trainer::new(&items, config).unwrap();
        trainer.run();
        let encoder = Encoder::new(trainer.vocab());
        for (grid, seg) in corpus.iter().zip(trainer.segmentations()) {
            prop_assert_eq!(encoder.encode(grid).unwrap().tokens, seg.tokens());
        }
    }

    #[test]
    fn zero_merge_encode_is_flatten(grid in grid_strategy(8, 5), policy in policy_strategy()) {
        let vocab = Vocabulary::empty(5, policy.0);
        prop_assert_eq!(encode(&grid, &vocab).unwrap().tokens, flatten(&grid).tokens);
    }

    #[test]
    fn one_row_grid_matches_1d_encoding(corpus in corpus_strategy(3), row in prop::collection::vec(0u32..3, 1..20), merges in 0usize..8, policy in policy_strategy()) {
        let vocab = trained(&corpus, 3, merges, policy);
        let as_grid = TokenGrid::new(1, row.len(), row.clone()).unwrap();
        let encoder = Encoder::new(&vocab);
        prop_assert_eq!(encoder.encode(&as_grid).unwrap().tokens, encoder.encode_1d(&row).unwrap().tokens);
    }
}
