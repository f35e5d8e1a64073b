//! Byte-pair encoding over 2D grids of quantized image tokens.
//!
//! The crate trains merge vocabularies on grids (and plain 1D sequences),
//! applies them to new grids, and ships the tooling to check what such a
//! tokenizer buys a unigram model on Markov-generated data:
//!
//! - [`grid`], [`vocab`], [`segmentation`]: data types and file formats
//! - [`trainer`]: adjacency counting, pair selection, greedy replacement
//! - [`codec`]: encode / decode / 1D encoding / global ID map
//! - [`markov`]: kernels, entropy oracles, seeded generators
//! - [`eval`]: unigram fitting, loss evaluation, gap experiments, probe export
//! - [`cli`]: the `imgbpe` command line
//!
//! ```
//! use imgbpe::{codec, grid::TokenGrid, trainer::{train, CorpusItem, TrainConfig}};
//!
//! let g = TokenGrid::from_rows(&[[0, 1], [0, 1]]).unwrap();
//! let vocab = train(&[CorpusItem::Grid(g.clone())], &TrainConfig::new(2, 2)).unwrap();
//! assert_eq!(codec::encode(&g, &vocab).unwrap().tokens, vec![3]);
//! ```

pub mod cli;
pub mod codec;
pub mod error;
pub mod eval;
pub mod grid;
pub mod markov;
pub mod segmentation;
pub mod trainer;
pub mod vocab;

pub use error::{Error, Result};
