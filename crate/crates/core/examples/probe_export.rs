//! Write raw and per-direction tokenized probe datasets to a directory.
//!
//! cargo run --example probe_export -- [out_dir]

use std::path::PathBuf;

use imgbpe::eval::{export_probe_dataset, train_direction_vocab, Directions, ProbeOptions, ProbeSplit};
use imgbpe::markov::{gen_defn1_corpus, Defn1Params};

fn main() -> imgbpe::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("imgbpe-probe"));
    let params = Defn1Params::new(0.9, 0.9, 1)?;
    let m = 32;

    // Dictionary of 10 tokens in total: 2 base symbols and 8 merges.
    let vocab_grids = gen_defn1_corpus(&params, m, 100, 99)?;
    let vocab = train_direction_vocab(&vocab_grids, 2, 8, Directions::Both)?;

    let options = ProbeOptions { m, directions: Directions::Both, seed: 1, optimal_mc_samples: 20_000 };
    let splits = [ProbeSplit::new("train", 200), ProbeSplit::new("eval", 50)];
    let manifest = export_probe_dataset(&params, &vocab, &splits, &options, &dir)?;

    println!("wrote {}", dir.display());
    for s in &manifest.splits {
        println!(
            "{:>5}: raw {} x {} symbols, tokenized mean {:.2} tokens per line ({:.2} symbols per token)",
            s.name,
            s.raw.sequences,
            m * m,
            s.tokenized.mean_tokens_per_sequence,
            s.tokenized.base_symbols_per_token
        );
    }
    let r = &manifest.references;
    println!("H(pi)={:.4}  flattened unigram={:.4}  optimal={:.4}", r.h_pi, r.flattened_unigram, r.optimal_loss.unwrap().estimate);
    Ok(())
}
