//! Merge vocabularies and their JSON file format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OrientationPolicy {
    /// One new token per pair regardless of contact direction or order.
    #[default]
    Agnostic,
    /// Separate rules per ordered pair and direction; decodable from IDs alone.
    Oriented,
}

/// Contact direction. `Horizontal` sorts before `Vertical`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Any,
    Horizontal,
    Vertical,
}

impl From<Direction> for Orientation {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Horizontal => Orientation::Horizontal,
            Direction::Vertical => Orientation::Vertical,
        }
    }
}

impl Orientation {
    pub fn direction(self) -> Option<Direction> {
        match self {
            Orientation::Any => None,
            Orientation::Horizontal => Some(Direction::Horizontal),
            Orientation::Vertical => Some(Direction::Vertical),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Orientation::Any => "any",
            Orientation::Horizontal => "horizontal",
            Orientation::Vertical => "vertical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MergeRule {
    pub left: u32,
    pub right: u32,
    pub new_id: u32,
    pub orientation: Orientation,
}

impl MergeRule {
    /// Whether an (unordered, under agnostic) instance pair `(a, b)` matches.
    pub fn matches_unordered(&self, a: u32, b: u32) -> bool {
        (a == self.left && b == self.right) || (a == self.right && b == self.left)
    }
}

/// Base codebook size plus an ordered list of merges; merge `i` defines
/// token `base_vocab_size + i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Vocabulary {
    base_vocab_size: u32,
    merges: Vec<MergeRule>,
    orientation_policy: OrientationPolicy,
}

impl Vocabulary {
    /// A merge-free vocabulary over `base_vocab_size` IDs.
    pub fn base(base_vocab_size: u32) -> Self {
        Vocabulary { base_vocab_size, merges: Vec::new(), orientation_policy: OrientationPolicy::Agnostic }
    }

    pub fn empty(base_vocab_size: u32, orientation_policy: OrientationPolicy) -> Self {
        Vocabulary { base_vocab_size, merges: Vec::new(), orientation_policy }
    }

    /// Builds a vocabulary from `(left, right, orientation)` triples, assigning
    /// contiguous new IDs and validating references.
    pub fn from_pairs(
        base_vocab_size: u32,
        orientation_policy: OrientationPolicy,
        pairs: impl IntoIterator<Item = (u32, u32, Orientation)>,
    ) -> Result<Self> {
        let mut vocab = Vocabulary::empty(base_vocab_size, orientation_policy);
        for (left, right, orientation) in pairs {
            vocab.push(left, right, orientation)?;
        }
        Ok(vocab)
    }

    /// Appends a merge, returning its new ID.
    pub fn push(&mut self, left: u32, right: u32, orientation: Orientation) -> Result<u32> {
        if self.base_vocab_size == 0 {
            return Err(Error::InvalidVocab("base_vocab_size must be positive".into()));
        }
        let new_id = self.size();
        let index = self.merges.len();
        for id in [left, right] {
            if id >= new_id {
                return Err(Error::ForwardReference { index, id, new_id });
            }
        }
        let orientation = match (self.orientation_policy, orientation) {
            (OrientationPolicy::Agnostic, _) => Orientation::Any,
            (OrientationPolicy::Oriented, Orientation::Any) => {
                return Err(Error::InvalidVocab(format!(
                    "merge {index} has no orientation under the oriented policy"
                )))
            }
            (OrientationPolicy::Oriented, o) => o,
        };
        self.merges.push(MergeRule { left, right, new_id, orientation });
        Ok(new_id)
    }

    pub fn base_vocab_size(&self) -> u32 {
        self.base_vocab_size
    }

    pub fn merges(&self) -> &[MergeRule] {
        &self.merges
    }

    pub fn orientation_policy(&self) -> OrientationPolicy {
        self.orientation_policy
    }

    /// Total number of token IDs (base plus merged).
    pub fn size(&self) -> u32 {
        self.base_vocab_size + self.merges.len() as u32
    }

    pub fn rule_for(&self, token: u32) -> Option<&MergeRule> {
        token.checked_sub(self.base_vocab_size).and_then(|i| self.merges.get(i as usize))
    }

    /// Base IDs of `token` in merge-tree order (left subtree first).
    pub fn leaves(&self, token: u32) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack = vec![token];
        while let Some(t) = stack.pop() {
            match self.rule_for(t) {
                Some(rule) => {
                    stack.push(rule.right);
                    stack.push(rule.left);
                }
                None => out.push(t),
            }
        }
        out
    }

    /// Number of base cells covered by every token, indexed by token ID.
    pub fn token_spans(&self) -> Vec<usize> {
        let mut spans = vec![1usize; self.size() as usize];
        for rule in &self.merges {
            spans[rule.new_id as usize] = spans[rule.left as usize] + spans[rule.right as usize];
        }
        spans
    }

    /// Canonical JSON serialization, one merge per line; identical
    /// vocabularies always produce identical bytes.
    pub fn to_json(&self) -> String {
        let policy = match self.orientation_policy {
            OrientationPolicy::Agnostic => "agnostic",
            OrientationPolicy::Oriented => "oriented",
        };
        let mut out = String::new();
        let _ = writeln!(out, "{{");
        let _ = writeln!(out, "  \"format_version\": {FORMAT_VERSION},");
        let _ = writeln!(out, "  \"base_vocab_size\": {},", self.base_vocab_size);
        let _ = writeln!(out, "  \"orientation_policy\": \"{policy}\",");
        if self.merges.is_empty() {
            let _ = writeln!(out, "  \"merges\": []");
        } else {
            let _ = writeln!(out, "  \"merges\": [");
            for (i, m) in self.merges.iter().enumerate() {
                let sep = if i + 1 == self.merges.len() { "" } else { "," };
                match m.orientation {
                    Orientation::Any => {
                        let _ = writeln!(out, "    [{}, {}]{sep}", m.left, m.right);
                    }
                    o => {
                        let _ = writeln!(out, "    [{}, {}, \"{}\"]{sep}", m.left, m.right, o.as_str());
                    }
                }
            }
            let _ = writeln!(out, "  ]");
        }
        out.push_str("}\n");
        out
    }

    /// [`Vocabulary::to_json`] with an extra `provenance` object, which
    /// loading ignores and hashing never sees.
    pub fn to_json_with_provenance(&self, provenance: &serde_json::Value) -> String {
        let body = self.to_json();
        format!("{{\n  \"provenance\": {provenance},{}", &body[1..])
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch { found: file.format_version, expected: FORMAT_VERSION });
        }
        let mut vocab = Vocabulary::empty(file.base_vocab_size, file.orientation_policy);
        for entry in file.merges {
            let (left, right, orientation) = match entry {
                MergeEntry::Pair(l, r) => (l, r, Orientation::Any),
                MergeEntry::Oriented(l, r, o) => (l, r, o),
            };
            if vocab.orientation_policy == OrientationPolicy::Agnostic && orientation != Orientation::Any {
                return Err(Error::InvalidVocab("oriented merge in an agnostic vocabulary".into()));
            }
            vocab.push(left, right, orientation)?;
        }
        Ok(vocab)
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

#[derive(Deserialize)]
struct VocabFile {
    format_version: u32,
    base_vocab_size: u32,
    #[serde(default)]
    orientation_policy: OrientationPolicy,
    merges: Vec<MergeEntry>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MergeEntry {
    Pair(u32, u32),
    Oriented(u32, u32, Orientation),
}

pub fn save_vocab(vocab: &Vocabulary, path: &Path) -> Result<()> {
    fs::write(path, vocab.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Vocabulary::from_json(&text)
}

/// Placement of one base cell inside a token's canonical patch, relative to
/// the token's top-left-most cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchCell {
    pub dr: i32,
    pub dc: i32,
    pub base: u32,
}

/// Canonical patch of a token under the oriented policy.
///
/// A horizontal merge `(l, r)` places `r`'s anchor one column right of the
/// last cell in `l`'s top row; a vertical merge places it one row below the
/// last cell in `l`'s anchor column. The shape of every token is therefore a
/// function of its ID.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenShape {
    pub cells: Vec<PatchCell>,
    pub right_attach: (i32, i32),
    pub below_attach: (i32, i32),
}

impl TokenShape {
    fn singleton(base: u32) -> Self {
        TokenShape {
            cells: vec![PatchCell { dr: 0, dc: 0, base }],
            right_attach: (0, 1),
            below_attach: (1, 0),
        }
    }

    pub fn attach(&self, direction: Direction) -> (i32, i32) {
        match direction {
            Direction::Horizontal => self.right_attach,
            Direction::Vertical => self.below_attach,
        }
    }

    fn fuse(left: &TokenShape, right: &TokenShape, direction: Direction) -> TokenShape {
        let (or, oc) = left.attach(direction);
        let mut cells = left.cells.clone();
        cells.extend(right.cells.iter().map(|c| PatchCell { dr: c.dr + or, dc: c.dc + oc, base: c.base }));
        let top_max = cells.iter().filter(|c| c.dr == 0).map(|c| c.dc).max().unwrap_or(0);
        let col_max = cells.iter().filter(|c| c.dc == 0).map(|c| c.dr).max().unwrap_or(0);
        TokenShape { cells, right_attach: (0, top_max + 1), below_attach: (col_max + 1, 0) }
    }
}

/// Canonical shapes for every token of an oriented vocabulary, grown one
/// merge at a time.
#[derive(Debug, Clone, Default)]
pub struct ShapeTable {
    shapes: Vec<TokenShape>,
}

impl ShapeTable {
    pub fn new(base_vocab_size: u32) -> Self {
        ShapeTable { shapes: (0..base_vocab_size).map(TokenShape::singleton).collect() }
    }

    pub fn for_vocab(vocab: &Vocabulary) -> Self {
        let mut table = ShapeTable::new(vocab.base_vocab_size());
        for rule in vocab.merges() {
            table.push(rule);
        }
        table
    }

    /// Adds the shape for `rule.new_id`. Agnostic rules have no canonical
    /// shape and are recorded as horizontal placements.
    pub fn push(&mut self, rule: &MergeRule) {
        debug_assert_eq!(rule.new_id as usize, self.shapes.len());
        let direction = rule.orientation.direction().unwrap_or(Direction::Horizontal);
        let shape = TokenShape::fuse(&self.shapes[rule.left as usize], &self.shapes[rule.right as usize], direction);
        self.shapes.push(shape);
    }

    pub fn get(&self, token: u32) -> &TokenShape {
        &self.shapes[token as usize]
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }
}
