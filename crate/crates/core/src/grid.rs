//! Token grids and their on-disk formats.
//!
//! Text format: a header line `h w` followed by `h` lines of `w`
//! space-separated decimal IDs. Binary format: magic `IGRD`, version byte
//! `0x01`, then `h`, `w` and the row-major IDs, all as little-endian `u32`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

pub const BINARY_MAGIC: &[u8; 4] = b"IGRD";
pub const BINARY_VERSION: u8 = 0x01;

/// A rectangular, row-major array of base token IDs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenGrid {
    height: usize,
    width: usize,
    cells: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GridFormat {
    #[default]
    Text,
    Binary,
}

impl GridFormat {
    pub fn extension(self) -> &'static str {
        match self {
            GridFormat::Text => "grid",
            GridFormat::Binary => "igrd",
        }
    }

    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext {
            "grid" | "txt" => Some(GridFormat::Text),
            "igrd" | "bin" => Some(GridFormat::Binary),
            _ => None,
        }
    }
}

impl FromStr for GridFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(GridFormat::Text),
            "binary" => Ok(GridFormat::Binary),
            other => Err(Error::InvalidParameter(format!("unknown grid format {other:?}"))),
        }
    }
}

impl TokenGrid {
    pub fn new(height: usize, width: usize, cells: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyGrid { height, width });
        }
        if cells.len() != height * width {
            return Err(Error::CellCountMismatch { expected: height * width, found: cells.len() });
        }
        Ok(TokenGrid { height, width, cells })
    }

    /// Builds a grid from nested rows; all rows must have the same length.
    pub fn from_rows<R: AsRef<[u32]>>(rows: &[R]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut cells = Vec::with_capacity(height * width);
        for row in rows {
            let row = row.as_ref();
            if row.len() != width {
                return Err(Error::CellCountMismatch { expected: width, found: row.len() });
            }
            cells.extend_from_slice(row);
        }
        TokenGrid::new(height, width, cells)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    pub fn into_cells(self) -> Vec<u32> {
        self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.cells[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[u32] {
        &self.cells[row * self.width..(row + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.cells.chunks_exact(self.width)
    }

    pub fn column(&self, col: usize) -> Vec<u32> {
        (0..self.height).map(|r| self.get(r, col)).collect()
    }

    pub fn transpose(&self) -> TokenGrid {
        let mut cells = Vec::with_capacity(self.cells.len());
        for c in 0..self.width {
            cells.extend((0..self.height).map(|r| self.get(r, c)));
        }
        TokenGrid { height: self.width, width: self.height, cells }
    }

    pub fn max_id(&self) -> u32 {
        self.cells.iter().copied().max().unwrap_or(0)
    }

    /// First cell whose ID is `>= limit`, as an error carrying its position.
    pub fn check_range(&self, limit: u32) -> Result<()> {
        match self.cells.iter().position(|&id| id >= limit) {
            None => Ok(()),
            Some(idx) => Err(Error::IdOutOfRange {
                row: idx / self.width,
                col: idx % self.width,
                id: self.cells[idx],
                limit,
            }),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.cells.len() * 3 + 16);
        let _ = writeln!(out, "{} {}", self.height, self.width);
        for row in self.rows() {
            for (i, id) in row.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{id}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_text(text: &str, limit: Option<u32>) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::MalformedHeader("empty input".into()))?;
        let dims: Vec<&str> = header.split_whitespace().collect();
        if dims.len() != 2 {
            return Err(Error::MalformedHeader(format!("expected \"h w\", got {header:?}")));
        }
        let parse_dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::MalformedHeader(format!("bad dimension {s:?}")))
        };
        let (height, width) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
        if height == 0 || width == 0 {
            return Err(Error::EmptyGrid { height, width });
        }
        let mut cells = Vec::with_capacity(height * width);
        for (row, line) in lines.enumerate() {
            for (col, tok) in line.split_whitespace().enumerate() {
                let id = tok.parse::<u32>().map_err(|_| Error::NonIntegerCell {
                    row,
                    col,
                    value: tok.to_string(),
                })?;
                cells.push(id);
            }
        }
        let grid = TokenGrid::new(height, width, cells)?;
        if let Some(limit) = limit {
            grid.check_range(limit)?;
        }
        Ok(grid)
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 4 * self.cells.len());
        out.extend_from_slice(BINARY_MAGIC);
        out.push(BINARY_VERSION);
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for id in &self.cells {
            out.extend_from_slice(&id.to_le_bytes());
        }
        out
    }

    pub fn parse_binary(bytes: &[u8], limit: Option<u32>) -> Result<Self> {
        if bytes.len() < 13 || &bytes[..4] != BINARY_MAGIC {
            return Err(Error::MalformedHeader("missing IGRD magic".into()));
        }
        if bytes[4] != BINARY_VERSION {
            return Err(Error::MalformedHeader(format!("unsupported version byte {:#04x}", bytes[4])));
        }
        let read_u32 = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let height = read_u32(5) as usize;
        let width = read_u32(9) as usize;
        let body = &bytes[13..];
        if !body.len().is_multiple_of(4) {
            return Err(Error::MalformedHeader("trailing partial cell".into()));
        }
        let cells: Vec<u32> = body
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let grid = TokenGrid::new(height, width, cells)?;
        if let Some(limit) = limit {
            grid.check_range(limit)?;
        }
        Ok(grid)
    }
}

/// Loads a grid, optionally rejecting IDs `>= limit`.
pub fn load_grid(path: &Path, format: GridFormat, limit: Option<u32>) -> Result<TokenGrid> {
    match format {
        GridFormat::Text => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            TokenGrid::parse_text(&text, limit)
        }
        GridFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            TokenGrid::parse_binary(&bytes, limit)
        }
    }
}

pub fn save_grid(grid: &TokenGrid, path: &Path, format: GridFormat) -> Result<()> {
    let result = match format {
        GridFormat::Text => fs::write(path, grid.to_text()),
        GridFormat::Binary => fs::write(path, grid.to_binary()),
    };
    result.map_err(|e| Error::io(path, e))
}

/// Loads every grid file in `dir` (by extension), sorted by file name.
pub fn load_corpus_dir(dir: &Path, limit: Option<u32>) -> Result<Vec<(std::path::PathBuf, TokenGrid)>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .and_then(GridFormat::from_extension)
                .is_some()
        })
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let format = GridFormat::from_extension(p.extension().unwrap().to_str().unwrap()).unwrap();
            let grid = load_grid(&p, format, limit)?;
            Ok((p, grid))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InvalidCell {
    pub row: usize,
    pub col: usize,
    pub id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub base_vocab_size: u32,
    pub invalid_cells: Vec<InvalidCell>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.invalid_cells.is_empty()
    }
}

/// Lists every cell holding an ID that is not a base ID of `vocab`.
pub fn validate_grid(grid: &TokenGrid, vocab: &Vocabulary) -> ValidationReport {
    let limit = vocab.base_vocab_size();
    let invalid_cells = grid
        .cells()
        .iter()
        .enumerate()
        .filter(|(_, &id)| id >= limit)
        .map(|(idx, &id)| InvalidCell { row: idx / grid.width(), col: idx % grid.width(), id })
        .collect();
    ValidationReport { base_vocab_size: limit, invalid_cells }
}
