//! Encode a grid under both orientation policies and decode it back.

use imgbpe::codec::{decode, encode, encode_with_layout, flatten};
use imgbpe::grid::TokenGrid;
use imgbpe::trainer::{train, CorpusItem, TrainConfig};
use imgbpe::vocab::OrientationPolicy;

fn main() -> imgbpe::Result<()> {
    let grid = TokenGrid::from_rows(&[[0u32, 0, 1, 1], [0, 0, 1, 1], [1, 1, 0, 0], [1, 1, 0, 0]])?;
    let corpus = [CorpusItem::Grid(grid.clone())];
    println!("flattened: {:?}", flatten(&grid).tokens);

    let oriented = train(&corpus, &TrainConfig::new(2, 3).with_orientation(OrientationPolicy::Oriented))?;
    let seq = encode(&grid, &oriented)?;
    println!("oriented:  {:?}", seq.tokens);
    // Oriented token IDs fix each token's shape, so IDs and dimensions suffice.
    assert_eq!(decode(&seq, &oriented, None)?, grid);

    let agnostic = train(&corpus, &TrainConfig::new(2, 3))?;
    let (seq, layout) = encode_with_layout(&grid, &agnostic)?;
    println!("agnostic:  {:?}", seq.tokens);
    println!("layout:    {:?}", layout.cell_to_instance);
    assert!(decode(&seq, &agnostic, None).is_err());
    assert_eq!(decode(&seq, &agnostic, Some(&layout))?, grid);
    println!("both round trips ok");
    Ok(())
}
