//! Flattened unigram loss versus the best achievable loss on the 2D
//! first-order process, across flip probabilities.

use imgbpe::eval::{run_gap_experiment, Directions, GapConfig, GridSource, TokenizerMode};
use imgbpe::markov::{optimal_loss_defn1, Defn1Params};

fn main() -> imgbpe::Result<()> {
    println!("  p     H(pi)   flattened  per-direction BPE  optimal (MC)");
    for p in [0.5, 0.7, 0.9, 0.95] {
        let params = Defn1Params::new(p, p, 1)?;
        let mut config = GapConfig::new(GridSource::Defn1 { params }, 32, 50, 50, 8);
        config.tokenizer = TokenizerMode::PerDirection { directions: Directions::Both };
        config.seed = 5;
        let report = run_gap_experiment(&config)?;
        let optimal = optimal_loss_defn1(&params, 32, 50_000, 6)?;
        println!(
            "{p:<5} {:.4}   {:.4}     {:.4}             {:.4} +/- {:.4}",
            report.references.h_pi,
            report.flattened_unigram.token_term,
            report.tokenized_unigram.token_term,
            optimal.estimate,
            optimal.std_error
        );
    }
    Ok(())
}
