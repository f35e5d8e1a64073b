//! Flattened versus tokenized unigram loss on grids of independent column chains.
//!
//! cargo run --release --example gap_experiment -- [p] [m] [grids] [merges] [mode]
//!
//! `mode` is one of `oriented` (default), `agnostic`, `rows`, `columns`, `both`.

use imgbpe::eval::{run_gap_experiment, Directions, GapConfig, GridSource, TokenizerMode};
use imgbpe::markov::{Axis, MarkovKernel};
use imgbpe::trainer::CountingPolicy;
use imgbpe::vocab::OrientationPolicy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let p: f64 = arg(0, "0.9").parse()?;
    let m: usize = arg(1, "64").parse()?;
    let grids: usize = arg(2, "200").parse()?;
    let merges: usize = arg(3, "254").parse()?;
    let tokenizer = match arg(4, "oriented").as_str() {
        "agnostic" => TokenizerMode::Grid2d { orientation: OrientationPolicy::Agnostic, counting: CountingPolicy::Symmetrized },
        "rows" => TokenizerMode::PerDirection { directions: Directions::Rows },
        "columns" => TokenizerMode::PerDirection { directions: Directions::Columns },
        "both" => TokenizerMode::PerDirection { directions: Directions::Both },
        _ => TokenizerMode::default(),
    };

    let kernel = MarkovKernel::binary_flip(p, p)?;
    let mut config = GapConfig::new(GridSource::Scenario { kernel, axis: Axis::Column }, m, grids, grids, merges);
    config.tokenizer = tokenizer;
    config.seed = 2024;

    let start = std::time::Instant::now();
    let report = run_gap_experiment(&config)?;
    let r = &report.references;
    println!("H(pi)        {:.6}", r.h_pi);
    println!("H_inf        {:.6}", r.h_inf);
    if let Some(b) = r.prop2_bound {
        println!("bound        {b:.6}");
    }
    println!("flattened    {:.6}  (tokens {:.6})", report.flattened_unigram.total, report.flattened_unigram.token_term);
    println!("tokenized    {:.6}  (tokens {:.6})", report.tokenized_unigram.total, report.tokenized_unigram.token_term);
    println!("gap          {:.6}", report.gap);
    println!("tokens/image {:.1}  merges {}", report.corpus.tokenized_length.mean, report.corpus.merges_learned);
    println!("elapsed      {:.2?}", start.elapsed());
    Ok(())
}
