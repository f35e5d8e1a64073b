//! Train a 2D merge vocabulary on a handful of grids and print the log.

use imgbpe::grid::TokenGrid;
use imgbpe::trainer::{CorpusItem, TrainConfig, Trainer};
use imgbpe::vocab::OrientationPolicy;

fn main() -> imgbpe::Result<()> {
    let corpus: Vec<CorpusItem> = vec![
        TokenGrid::from_rows(&[[0u32, 1, 0, 1], [0, 1, 0, 1], [2, 2, 2, 2]])?.into(),
        TokenGrid::from_rows(&[[0u32, 1, 2], [0, 1, 2]])?.into(),
    ];

    for policy in [OrientationPolicy::Agnostic, OrientationPolicy::Oriented] {
        let mut trainer = Trainer::new(&corpus, TrainConfig::new(3, 4).with_orientation(policy))?;
        println!("{policy:?}");
        while let Some(entry) = trainer.step() {
            println!(
                "  merge {}: {:?} {:?} x{} -> {}",
                entry.iteration, entry.pair, entry.orientation, entry.freq, entry.new_id
            );
        }
        println!("  stopped early: {}", trainer.stopped_early());
        print!("{}", trainer.vocab().to_json());
    }
    Ok(())
}
