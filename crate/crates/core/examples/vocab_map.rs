//! Lay out image tokens after a text vocabulary and wrap an encoded image.

use imgbpe::codec::{encode, expand_vocab_map};
use imgbpe::grid::TokenGrid;
use imgbpe::trainer::{train, CorpusItem, TrainConfig};

fn main() -> imgbpe::Result<()> {
    let grid = TokenGrid::from_rows(&[[3u32, 3, 1], [3, 3, 0]])?;
    let vocab = train(&[CorpusItem::Grid(grid.clone())], &TrainConfig::new(4, 2))?;

    let map = expand_vocab_map(32_000, u64::from(vocab.base_vocab_size()), vocab.merges().len() as u64);
    let [text, base, merged, special] = map.ranges();
    println!("text {text:?}, base image {base:?}, merged image {merged:?}, delimiters {special:?}");
    println!("embedding rows: {}", map.total_size());

    let seq = encode(&grid, &vocab)?;
    println!("local ids:  {:?}", seq.tokens);
    println!("global ids: {:?}", map.wrap_image(&seq).expect("ids come from this vocabulary"));
    Ok(())
}
