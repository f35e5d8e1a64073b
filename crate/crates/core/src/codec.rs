//! Applying a trained vocabulary: encoding grids and sequences to token
//! IDs, decoding them back, and the global ID map used when the image
//! vocabulary is appended to a text model's vocabulary.
//!
//! Merged 2D tokens are emitted in raster order of their top-left-most
//! cell, which reduces to `flatten` when no merge applies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TokenGrid;
use crate::segmentation::{Instance, Segmentation};
use crate::trainer::apply_rule_in_place;
use crate::vocab::{MergeRule, OrientationPolicy, ShapeTable, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub source_dims: Option<(usize, usize)>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Per-cell placement of encoded tokens: which token covers each cell, and
/// which leaf of that token's merge tree the cell holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutSidecar {
    pub cell_to_instance: Vec<u32>,
    pub cell_to_leaf: Vec<u32>,
}

impl LayoutSidecar {
    pub fn from_segmentation(seg: &Segmentation) -> Self {
        LayoutSidecar { cell_to_instance: seg.labels(), cell_to_leaf: seg.leaf_positions() }
    }
}

/// A vocabulary prepared for repeated encoding.
#[derive(Debug, Clone)]
pub struct Encoder<'a> {
    vocab: &'a Vocabulary,
    shapes: ShapeTable,
}

impl<'a> Encoder<'a> {
    pub fn new(vocab: &'a Vocabulary) -> Self {
        Encoder { vocab, shapes: ShapeTable::for_vocab(vocab) }
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.vocab
    }

    pub fn shapes(&self) -> &ShapeTable {
        &self.shapes
    }

    /// Replays every merge, in training order, on the singleton segmentation.
    pub fn segment(&self, grid: &TokenGrid) -> Result<Segmentation> {
        grid.check_range(self.vocab.base_vocab_size())?;
        let mut seg = Segmentation::singletons(grid);
        self.apply_merges(&mut seg);
        Ok(seg)
    }

    /// Applies the merges to an existing segmentation (a fixpoint once all
    /// merges have been applied).
    pub fn apply_merges(&self, seg: &mut Segmentation) {
        let size = self.vocab.size() as usize;
        let mut present = vec![0usize; size];
        for inst in seg.instances() {
            present[inst.token as usize] += 1;
        }
        for rule in self.vocab.merges() {
            if !can_apply(rule, &present) {
                continue;
            }
            let fused = apply_rule_in_place(seg, rule, &self.shapes);
            present[rule.left as usize] -= fused;
            present[rule.right as usize] -= fused;
            present[rule.new_id as usize] += fused;
        }
    }

    pub fn encode(&self, grid: &TokenGrid) -> Result<TokenSequence> {
        Ok(self.encode_with_layout(grid)?.0)
    }

    pub fn encode_with_layout(&self, grid: &TokenGrid) -> Result<(TokenSequence, LayoutSidecar)> {
        let seg = self.segment(grid)?;
        let layout = LayoutSidecar::from_segmentation(&seg);
        let seq = TokenSequence { tokens: seg.tokens(), source_dims: Some((grid.height(), grid.width())) };
        Ok((seq, layout))
    }

    /// Classic greedy left-to-right BPE over a 1D sequence. Identical to
    /// encoding the sequence as a `1 x n` grid.
    pub fn encode_1d(&self, seq: &[u32]) -> Result<TokenSequence> {
        let base = self.vocab.base_vocab_size();
        if let Some(position) = seq.iter().position(|&id| id >= base) {
            return Err(Error::SequenceIdOutOfRange { position, id: seq[position], limit: base });
        }
        let mut tokens = seq.to_vec();
        let mut next = Vec::with_capacity(tokens.len());
        for rule in self.vocab.merges() {
            if tokens.len() < 2 {
                break;
            }
            let matches = |a: u32, b: u32| match rule.orientation {
                crate::vocab::Orientation::Any => rule.matches_unordered(a, b),
                crate::vocab::Orientation::Horizontal => a == rule.left && b == rule.right,
                crate::vocab::Orientation::Vertical => false,
            };
            next.clear();
            let mut i = 0;
            let mut changed = false;
            while i < tokens.len() {
                if i + 1 < tokens.len() && matches(tokens[i], tokens[i + 1]) {
                    next.push(rule.new_id);
                    i += 2;
                    changed = true;
                } else {
                    next.push(tokens[i]);
                    i += 1;
                }
            }
            if changed {
                std::mem::swap(&mut tokens, &mut next);
            }
        }
        Ok(TokenSequence { tokens, source_dims: None })
    }

    pub fn decode(&self, seq: &TokenSequence, layout: Option<&LayoutSidecar>) -> Result<TokenGrid> {
        let (h, w) = seq.source_dims.ok_or(Error::DimsRequired)?;
        let size = self.vocab.size();
        if let Some((position, &id)) = seq.tokens.iter().enumerate().find(|(_, &t)| t >= size) {
            return Err(Error::SequenceIdOutOfRange { position, id, limit: size });
        }
        match (layout, self.vocab.orientation_policy()) {
            (Some(layout), _) => decode_with_layout(self.vocab, &seq.tokens, h, w, layout),
            (None, OrientationPolicy::Oriented) => self.decode_oriented(&seq.tokens, h, w),
            (None, OrientationPolicy::Agnostic) => Err(Error::LayoutRequired),
        }
    }

    fn decode_oriented(&self, tokens: &[u32], h: usize, w: usize) -> Result<TokenGrid> {
        const EMPTY: u32 = u32::MAX;
        let mut cells = vec![EMPTY; h * w];
        let mut cursor = 0usize;
        for (pos, &t) in tokens.iter().enumerate() {
            while cursor < cells.len() && cells[cursor] != EMPTY {
                cursor += 1;
            }
            if cursor == cells.len() {
                return Err(Error::Decode(format!("token {pos} has no free cell left")));
            }
            let (ar, ac) = ((cursor / w) as i64, (cursor % w) as i64);
            for pc in &self.shapes.get(t).cells {
                let (r, c) = (ar + pc.dr as i64, ac + pc.dc as i64);
                if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
                    return Err(Error::Decode(format!("token {pos} ({t}) extends outside the grid")));
                }
                let slot = &mut cells[(r * w as i64 + c) as usize];
                if *slot != EMPTY {
                    return Err(Error::Decode(format!("token {pos} ({t}) overlaps an earlier token")));
                }
                *slot = pc.base;
            }
        }
        if cells.contains(&EMPTY) {
            return Err(Error::Decode("tokens do not cover the grid".into()));
        }
        TokenGrid::new(h, w, cells)
    }
}

fn can_apply(rule: &MergeRule, present: &[usize]) -> bool {
    let (l, r) = (rule.left as usize, rule.right as usize);
    if l == r {
        present[l] >= 2
    } else {
        present[l] > 0 && present[r] > 0
    }
}

fn decode_with_layout(
    vocab: &Vocabulary,
    tokens: &[u32],
    h: usize,
    w: usize,
    layout: &LayoutSidecar,
) -> Result<TokenGrid> {
    let n = h * w;
    if layout.cell_to_instance.len() != n || layout.cell_to_leaf.len() != n {
        return Err(Error::Decode(format!("layout length does not match {h}x{w}")));
    }
    let leaves: Vec<Vec<u32>> = tokens.iter().map(|&t| vocab.leaves(t)).collect();
    let mut members: Vec<Vec<(u32, u32)>> = vec![Vec::new(); tokens.len()];
    for cell in 0..n {
        let idx = layout.cell_to_instance[cell] as usize;
        let leaf = layout.cell_to_leaf[cell];
        let slot = members
            .get_mut(idx)
            .ok_or_else(|| Error::Decode(format!("cell {cell} maps to missing token {idx}")))?;
        slot.push((leaf, cell as u32));
    }
    let mut cells = vec![0u32; n];
    let mut instances = Vec::with_capacity(tokens.len());
    for (idx, mut m) in members.into_iter().enumerate() {
        let expect = &leaves[idx];
        m.sort_unstable();
        if m.len() != expect.len() || m.iter().enumerate().any(|(i, &(leaf, _))| leaf as usize != i) {
            return Err(Error::Decode(format!(
                "token {idx} ({}) covers {} cells but spans {} base ids",
                tokens[idx],
                m.len(),
                expect.len()
            )));
        }
        for (&(_, cell), &base) in m.iter().zip(expect) {
            cells[cell as usize] = base;
        }
        let ordered: Vec<u32> = m.iter().map(|&(_, c)| c).collect();
        let anchor = *ordered.iter().min().unwrap();
        instances.push(Instance { token: tokens[idx], anchor, cells: ordered });
    }
    Segmentation::from_instances(h, w, instances)?;
    TokenGrid::new(h, w, cells)
}

/// Row-major base IDs.
pub fn flatten(grid: &TokenGrid) -> TokenSequence {
    TokenSequence { tokens: grid.cells().to_vec(), source_dims: Some((grid.height(), grid.width())) }
}

pub fn segment(grid: &TokenGrid, vocab: &Vocabulary) -> Result<Segmentation> {
    Encoder::new(vocab).segment(grid)
}

pub fn encode(grid: &TokenGrid, vocab: &Vocabulary) -> Result<TokenSequence> {
    Encoder::new(vocab).encode(grid)
}

pub fn encode_with_layout(grid: &TokenGrid, vocab: &Vocabulary) -> Result<(TokenSequence, LayoutSidecar)> {
    Encoder::new(vocab).encode_with_layout(grid)
}

pub fn encode_1d(seq: &[u32], vocab: &Vocabulary) -> Result<TokenSequence> {
    Encoder::new(vocab).encode_1d(seq)
}

pub fn decode(seq: &TokenSequence, vocab: &Vocabulary, layout: Option<&LayoutSidecar>) -> Result<TokenGrid> {
    Encoder::new(vocab).decode(seq, layout)
}

/// One line of the token-sequence JSONL output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedRecord {
    pub source: String,
    pub dims: [usize; 2],
    pub tokens: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf_order: Option<Vec<u32>>,
}

impl EncodedRecord {
    pub fn new(source: impl Into<String>, seq: &TokenSequence, layout: Option<&LayoutSidecar>) -> Self {
        let (h, w) = seq.source_dims.unwrap_or((1, seq.tokens.len()));
        EncodedRecord {
            source: source.into(),
            dims: [h, w],
            tokens: seq.tokens.clone(),
            layout: layout.map(|l| l.cell_to_instance.clone()),
            leaf_order: layout.map(|l| l.cell_to_leaf.clone()),
        }
    }

    pub fn sequence(&self) -> TokenSequence {
        TokenSequence { tokens: self.tokens.clone(), source_dims: Some((self.dims[0], self.dims[1])) }
    }

    /// The sidecar, when both layout arrays are present.
    pub fn layout(&self) -> Option<LayoutSidecar> {
        match (&self.layout, &self.leaf_order) {
            (Some(i), Some(l)) => Some(LayoutSidecar { cell_to_instance: i.clone(), cell_to_leaf: l.clone() }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub image_start: u64,
    pub image_end: u64,
}

/// Global ID layout after appending image tokens to a text vocabulary:
/// text IDs, then base image IDs, then merged image IDs, then the two
/// image delimiters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabMap {
    pub text_vocab_size: u64,
    pub base_image_vocab_size: u64,
    pub bpe_vocab_size: u64,
    pub image_token_offset: u64,
    pub special_tokens: SpecialTokens,
}

pub fn expand_vocab_map(n_text: u64, base: u64, merged: u64) -> VocabMap {
    let end = n_text + base + merged;
    VocabMap {
        text_vocab_size: n_text,
        base_image_vocab_size: base,
        bpe_vocab_size: merged,
        image_token_offset: n_text,
        special_tokens: SpecialTokens { image_start: end, image_end: end + 1 },
    }
}

impl VocabMap {
    /// Rows of the expanded embedding table.
    pub fn total_size(&self) -> u64 {
        self.special_tokens.image_end + 1
    }

    /// Global ID of a local image token (base or merged).
    pub fn global_id(&self, local: u32) -> Option<u64> {
        let local = local as u64;
        (local < self.base_image_vocab_size + self.bpe_vocab_size).then_some(self.image_token_offset + local)
    }

    pub fn local_id(&self, global: u64) -> Option<u32> {
        let lo = self.image_token_offset;
        let hi = lo + self.base_image_vocab_size + self.bpe_vocab_size;
        (lo..hi).contains(&global).then(|| (global - lo) as u32)
    }

    /// Half-open ranges for text, base image, merged image and specials.
    pub fn ranges(&self) -> [std::ops::Range<u64>; 4] {
        let a = self.image_token_offset;
        let b = a + self.base_image_vocab_size;
        let c = b + self.bpe_vocab_size;
        [0..a, a..b, b..c, c..c + 2]
    }

    /// Wraps an encoded image in delimiters, mapped to global IDs.
    pub fn wrap_image(&self, seq: &TokenSequence) -> Option<Vec<u64>> {
        let mut out = Vec::with_capacity(seq.tokens.len() + 2);
        out.push(self.special_tokens.image_start);
        for &t in &seq.tokens {
            out.push(self.global_id(t)?);
        }
        out.push(self.special_tokens.image_end);
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Orientation;

    fn grid(rows: &[&[u32]]) -> TokenGrid {
        TokenGrid::from_rows(rows).unwrap()
    }

    fn agnostic(base: u32, pairs: &[(u32, u32)]) -> Vocabulary {
        Vocabulary::from_pairs(base, OrientationPolicy::Agnostic, pairs.iter().map(|&(l, r)| (l, r, Orientation::Any)))
            .unwrap()
    }

    #[test]
    fn flatten_is_row_major() {
        assert_eq!(flatten(&grid(&[&[0, 1], &[2, 3]])).tokens, vec![0, 1, 2, 3]);
        assert_eq!(flatten(&grid(&[&[7]])).tokens, vec![7]);
        let g = grid(&[&[0, 1, 2], &[3, 4, 5]]);
        let col_major: Vec<u32> = (0..3).flat_map(|c| g.column(c)).collect();
        assert_eq!(flatten(&g.transpose()).tokens, col_major);
    }

    #[test]
    fn segment_replays_training() {
        let v = agnostic(2, &[(0, 1), (2, 2)]);
        let seg = segment(&grid(&[&[0, 1], &[0, 1]]), &v).unwrap();
        assert_eq!(seg.tokens(), vec![3]);
        assert_eq!(seg.instances()[0].cells.len(), 4);

        let seg = segment(&grid(&[&[0, 1], &[0, 1]]), &Vocabulary::base(2)).unwrap();
        assert_eq!(seg.len(), 4);
    }

    #[test]
    fn agnostic_matches_either_order() {
        let v = agnostic(2, &[(0, 1)]);
        let seg = segment(&grid(&[&[1, 0], &[1, 0]]), &v).unwrap();
        assert_eq!(seg.tokens(), vec![2, 2]);
        // Leaf order puts the rule's left token first.
        assert_eq!(seg.instances()[0].cells, vec![1, 0]);
    }

    #[test]
    fn encode_examples() {
        let v = agnostic(2, &[(0, 1)]);
        assert_eq!(encode(&grid(&[&[0, 1], &[0, 1]]), &v).unwrap().tokens, vec![2, 2]);
        let g = grid(&[&[0, 1, 1], &[1, 0, 0]]);
        assert_eq!(encode(&g, &Vocabulary::base(2)).unwrap().tokens, flatten(&g).tokens);
        assert!(matches!(encode(&grid(&[&[2]]), &v), Err(Error::IdOutOfRange { .. })));
    }

    #[test]
    fn encode_1d_examples() {
        let v = agnostic(2, &[(0, 1)]);
        assert_eq!(encode_1d(&[0, 1, 0, 1], &v).unwrap().tokens, vec![2, 2]);
        let v = agnostic(2, &[(1, 1)]);
        assert_eq!(encode_1d(&[1, 1, 1], &v).unwrap().tokens, vec![2, 1]);
        assert!(encode_1d(&[], &v).unwrap().tokens.is_empty());
        assert!(encode_1d(&[5], &v).is_err());
    }

    #[test]
    fn oriented_decode_replays_shape() {
        let v = Vocabulary::from_pairs(2, OrientationPolicy::Oriented, [(0, 1, Orientation::Horizontal)]).unwrap();
        let seq = TokenSequence { tokens: vec![2, 2], source_dims: Some((2, 2)) };
        assert_eq!(decode(&seq, &v, None).unwrap(), grid(&[&[0, 1], &[0, 1]]));
        let bad = TokenSequence { tokens: vec![2, 2, 2], source_dims: Some((2, 2)) };
        assert!(decode(&bad, &v, None).is_err());
        let odd = TokenSequence { tokens: vec![2, 2], source_dims: Some((1, 3)) };
        assert!(decode(&odd, &v, None).is_err());
    }

    #[test]
    fn agnostic_decode_needs_layout() {
        let v = agnostic(2, &[(0, 1)]);
        let g = grid(&[&[1, 0], &[0, 1]]);
        let (seq, layout) = encode_with_layout(&g, &v).unwrap();
        assert!(matches!(decode(&seq, &v, None), Err(Error::LayoutRequired)));
        assert_eq!(decode(&seq, &v, Some(&layout)).unwrap(), g);
        let no_dims = TokenSequence { tokens: seq.tokens.clone(), source_dims: None };
        assert!(matches!(decode(&no_dims, &v, Some(&layout)), Err(Error::DimsRequired)));
    }

    #[test]
    fn vocab_map_arithmetic() {
        let map = expand_vocab_map(1000, 8192, 4096);
        assert_eq!(map.global_id(0), Some(1000));
        assert_eq!(map.global_id(8192), Some(9192));
        assert_eq!(map.special_tokens.image_start, 13288);
        assert_eq!(map.special_tokens.image_end, 13289);
        assert_eq!(map.total_size(), 1000 + 8192 + 4096 + 2);
        assert_eq!(map.local_id(9192), Some(8192));
        assert_eq!(map.local_id(999), None);

        let map = expand_vocab_map(10, 4, 0);
        assert_eq!(map.global_id(3), Some(13));
        assert_eq!(map.global_id(4), None);
        assert_eq!(map.special_tokens.image_start, 14);
    }

    #[test]
    fn wrap_image_adds_delimiters() {
        let map = expand_vocab_map(5, 2, 1);
        let seq = TokenSequence { tokens: vec![2, 0], source_dims: None };
        assert_eq!(map.wrap_image(&seq), Some(vec![8, 7, 5, 9]));
    }
}
