//! Vocabulary training: adjacency counting, pair selection and greedy
//! replacement over 2D segmentations and 1D sequences.
//!
//! Adjacency is counted between token *instances*, once per unordered pair
//! of instances and contact direction, keyed by the token of the
//! raster-earlier instance first. Under the oriented policy only canonical
//! placements (see [`TokenShape`](crate::vocab::TokenShape)) are counted,
//! since those are the only contacts an oriented rule can fuse.

use std::io::Write;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TokenGrid;
use crate::segmentation::{Instance, Segmentation};
use crate::vocab::{Direction, MergeRule, Orientation, OrientationPolicy, ShapeTable, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CountingPolicy {
    /// Sum both orderings of a pair before selection (agnostic policy).
    #[default]
    Symmetrized,
    /// Only consider entries with `left <= right`, ignoring the lower triangle.
    PaperExactUpperTri,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub initial_vocab_size: u32,
    pub num_merges: usize,
    pub counting_policy: CountingPolicy,
    pub orientation_policy: OrientationPolicy,
}

impl TrainConfig {
    pub fn new(initial_vocab_size: u32, num_merges: usize) -> Self {
        TrainConfig {
            initial_vocab_size,
            num_merges,
            counting_policy: CountingPolicy::default(),
            orientation_policy: OrientationPolicy::default(),
        }
    }

    pub fn with_orientation(mut self, policy: OrientationPolicy) -> Self {
        self.orientation_policy = policy;
        self
    }

    pub fn with_counting(mut self, policy: CountingPolicy) -> Self {
        self.counting_policy = policy;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusItem {
    Grid(TokenGrid),
    Sequence(Vec<u32>),
}

impl CorpusItem {
    pub fn segmentation(&self) -> Segmentation {
        match self {
            CorpusItem::Grid(g) => Segmentation::singletons(g),
            CorpusItem::Sequence(s) => Segmentation::from_sequence(s),
        }
    }
}

impl From<TokenGrid> for CorpusItem {
    fn from(g: TokenGrid) -> Self {
        CorpusItem::Grid(g)
    }
}

impl From<Vec<u32>> for CorpusItem {
    fn from(s: Vec<u32>) -> Self {
        CorpusItem::Sequence(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairKey {
    pub left: u32,
    pub right: u32,
    pub direction: Direction,
}

impl PairKey {
    pub fn new(left: u32, right: u32, direction: Direction) -> Self {
        PairKey { left, right, direction }
    }
}

/// Sparse adjacency counts keyed by `(left, right, direction)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdjacencyCounts {
    pub current_vocab_size: u32,
    counts: FxHashMap<PairKey, u64>,
}

impl AdjacencyCounts {
    pub fn new(current_vocab_size: u32) -> Self {
        AdjacencyCounts { current_vocab_size, counts: FxHashMap::default() }
    }

    pub fn from_entries(current_vocab_size: u32, entries: impl IntoIterator<Item = (PairKey, u64)>) -> Self {
        let mut out = AdjacencyCounts::new(current_vocab_size);
        for (k, v) in entries {
            out.add(k, v);
        }
        out
    }

    pub fn add(&mut self, key: PairKey, n: u64) {
        if n > 0 {
            *self.counts.entry(key).or_insert(0) += n;
        }
    }

    pub fn get(&self, left: u32, right: u32, direction: Direction) -> u64 {
        self.counts.get(&PairKey::new(left, right, direction)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Non-zero entries in key order.
    pub fn entries(&self) -> Vec<(PairKey, u64)> {
        let mut v: Vec<_> = self.counts.iter().map(|(k, &n)| (*k, n)).collect();
        v.sort_unstable();
        v
    }

    fn absorb(mut self, other: AdjacencyCounts) -> AdjacencyCounts {
        let (mut big, small) = if self.counts.len() >= other.counts.len() {
            (std::mem::take(&mut self.counts), other.counts)
        } else {
            (other.counts, std::mem::take(&mut self.counts))
        };
        for (k, v) in small {
            *big.entry(k).or_insert(0) += v;
        }
        AdjacencyCounts { current_vocab_size: self.current_vocab_size, counts: big }
    }
}

/// How a pair is fused when a rule is applied.
#[derive(Debug, Clone, Copy)]
enum Geometry<'a> {
    /// Any edge contact between instances.
    Contact,
    /// Only the canonical attach point of the left token.
    Canonical(&'a ShapeTable),
}

fn check_ids(corpus: &[Segmentation], limit: u32) -> Result<()> {
    for seg in corpus {
        for (pos, inst) in seg.instances().iter().enumerate() {
            if inst.token >= limit {
                let (row, col) = seg.coords(inst.anchor);
                return Err(if seg.height() == 1 {
                    Error::SequenceIdOutOfRange { position: pos, id: inst.token, limit }
                } else {
                    Error::IdOutOfRange { row, col, id: inst.token, limit }
                });
            }
        }
    }
    Ok(())
}

/// Counts every pair of edge-adjacent instances once per contact direction.
/// For a `1 x n` segmentation this is exactly the count of consecutive
/// ordered pairs.
pub fn update_matrix(corpus: &[Segmentation], current_vocab_size: u32) -> Result<AdjacencyCounts> {
    check_ids(corpus, current_vocab_size)?;
    Ok(count_all(corpus, current_vocab_size, Geometry::Contact))
}

/// Counts only canonical placements (the contacts an oriented rule fuses).
pub fn update_matrix_canonical(
    corpus: &[Segmentation],
    current_vocab_size: u32,
    shapes: &ShapeTable,
) -> Result<AdjacencyCounts> {
    check_ids(corpus, current_vocab_size)?;
    if shapes.len() < current_vocab_size as usize {
        return Err(Error::InvalidParameter("shape table smaller than vocabulary".into()));
    }
    Ok(count_all(corpus, current_vocab_size, Geometry::Canonical(shapes)))
}

fn count_all(corpus: &[Segmentation], size: u32, geometry: Geometry<'_>) -> AdjacencyCounts {
    corpus
        .par_iter()
        .map(|seg| {
            let mut counts = AdjacencyCounts::new(size);
            let labels = seg.labels();
            match geometry {
                Geometry::Contact => count_contacts(seg, &labels, &mut counts),
                Geometry::Canonical(shapes) => count_canonical(seg, &labels, shapes, &mut counts),
            }
            counts
        })
        .reduce(|| AdjacencyCounts::new(size), AdjacencyCounts::absorb)
}

fn count_contacts(seg: &Segmentation, labels: &[u32], counts: &mut AdjacencyCounts) {
    let (h, w) = (seg.height(), seg.width());
    let inst = seg.instances();
    // Multi-cell instances may share several edges; those contacts are
    // deduplicated per (instance, instance, direction).
    let mut shared: Vec<(u32, u32, Direction)> = Vec::new();
    let mut record = |a: u32, b: u32, dir: Direction, counts: &mut AdjacencyCounts| {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (x, y) = (&inst[lo as usize], &inst[hi as usize]);
        if x.cells.len() == 1 && y.cells.len() == 1 {
            counts.add(PairKey::new(x.token, y.token, dir), 1);
        } else {
            shared.push((lo, hi, dir));
        }
    };
    for r in 0..h {
        for c in 0..w {
            let cell = r * w + c;
            let a = labels[cell];
            if c + 1 < w && labels[cell + 1] != a {
                record(a, labels[cell + 1], Direction::Horizontal, counts);
            }
            if r + 1 < h && labels[cell + w] != a {
                record(a, labels[cell + w], Direction::Vertical, counts);
            }
        }
    }
    shared.sort_unstable();
    shared.dedup();
    for (lo, hi, dir) in shared {
        counts.add(PairKey::new(inst[lo as usize].token, inst[hi as usize].token, dir), 1);
    }
}

fn attach_target(seg: &Segmentation, anchor: u32, offset: (i32, i32)) -> Option<usize> {
    let w = seg.width() as i64;
    let r = anchor as i64 / w + offset.0 as i64;
    let c = anchor as i64 % w + offset.1 as i64;
    (r >= 0 && r < seg.height() as i64 && c >= 0 && c < w).then(|| (r * w + c) as usize)
}

fn count_canonical(seg: &Segmentation, labels: &[u32], shapes: &ShapeTable, counts: &mut AdjacencyCounts) {
    let inst = seg.instances();
    for a in inst {
        let shape = shapes.get(a.token);
        for dir in [Direction::Horizontal, Direction::Vertical] {
            if let Some(target) = attach_target(seg, a.anchor, shape.attach(dir)) {
                let b = &inst[labels[target] as usize];
                if b.anchor as usize == target {
                    counts.add(PairKey::new(a.token, b.token, dir), 1);
                }
            }
        }
    }
}

/// A selected pair and the orientation its rule will carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MergeCandidate {
    pub left: u32,
    pub right: u32,
    pub orientation: Orientation,
}

/// Most frequent pair with lexicographically smallest `(left, right,
/// orientation)` on ties; `(None, 0)` when every considered entry is zero.
///
/// Agnostic: entries are folded onto `left <= right` and summed over both
/// directions (symmetrized), or only `left <= right` entries are kept
/// (upper triangle). Oriented: entries stay ordered and per direction, the
/// upper-triangle policy again dropping `left > right`.
pub fn max_freq_pair(
    counts: &AdjacencyCounts,
    counting: CountingPolicy,
    orientation: OrientationPolicy,
) -> (Option<MergeCandidate>, u64) {
    let mut folded: FxHashMap<MergeCandidate, u64> = FxHashMap::default();
    for (key, &n) in &counts.counts {
        if counting == CountingPolicy::PaperExactUpperTri && key.left > key.right {
            continue;
        }
        let cand = match orientation {
            OrientationPolicy::Agnostic => MergeCandidate {
                left: key.left.min(key.right),
                right: key.left.max(key.right),
                orientation: Orientation::Any,
            },
            OrientationPolicy::Oriented => MergeCandidate {
                left: key.left,
                right: key.right,
                orientation: key.direction.into(),
            },
        };
        *folded.entry(cand).or_insert(0) += n;
    }
    let best = folded
        .into_iter()
        .filter(|&(_, n)| n > 0)
        .min_by(|(ka, na), (kb, nb)| nb.cmp(na).then(ka.cmp(kb)));
    match best {
        Some((cand, n)) => (Some(cand), n),
        None => (None, 0),
    }
}

/// Applies one rule to a segmentation: a single greedy pass in instance
/// (raster) order, each instance fused at most once, horizontal contact
/// tried before vertical. Oriented rules need the shape table of the
/// vocabulary they belong to.
pub fn replace_pair(seg: &Segmentation, rule: &MergeRule, shapes: Option<&ShapeTable>) -> Result<Segmentation> {
    let geometry = match (rule.orientation, shapes) {
        (Orientation::Any, _) => Geometry::Contact,
        (_, Some(s)) => Geometry::Canonical(s),
        (_, None) => return Err(Error::InvalidParameter("oriented rule requires a shape table".into())),
    };
    let labels = seg.labels();
    Ok(apply_rule(seg, &labels, rule, geometry).unwrap_or_else(|| seg.clone()))
}

/// Returns the number of fusions performed.
pub(crate) fn apply_rule_in_place(seg: &mut Segmentation, rule: &MergeRule, shapes: &ShapeTable) -> usize {
    let geometry = match rule.orientation {
        Orientation::Any => Geometry::Contact,
        _ => Geometry::Canonical(shapes),
    };
    let labels = seg.labels();
    match apply_rule(seg, &labels, rule, geometry) {
        Some(next) => {
            let fused = seg.len() - next.len();
            *seg = next;
            fused
        }
        None => 0,
    }
}

fn apply_rule(seg: &Segmentation, labels: &[u32], rule: &MergeRule, geometry: Geometry<'_>) -> Option<Segmentation> {
    let inst = seg.instances();
    let n = inst.len();
    let w = seg.width();
    const NONE: u32 = u32::MAX;
    let mut consumed = vec![false; n];
    // partner[i] = j when i absorbs j; absorbed instances are skipped.
    let mut partner = vec![NONE; n];
    let mut left_first = vec![true; n];
    let mut any = false;

    for i in 0..n {
        if consumed[i] {
            continue;
        }
        let a = &inst[i];
        let found = match geometry {
            Geometry::Contact => {
                let needed = if a.token == rule.left {
                    rule.right
                } else if a.token == rule.right {
                    rule.left
                } else {
                    continue;
                };
                let pick = |offsets: &[isize]| -> Option<usize> {
                    let mut best: Option<usize> = None;
                    for &cell in &a.cells {
                        let cell = cell as usize;
                        for &off in offsets {
                            let nb = match off {
                                -1 if !cell.is_multiple_of(w) => cell - 1,
                                1 if cell % w + 1 < w => cell + 1,
                                _ => continue,
                            };
                            let k = labels[nb] as usize;
                            if k > i && !consumed[k] && inst[k].token == needed && best.is_none_or(|b| k < b) {
                                best = Some(k);
                            }
                        }
                    }
                    best
                };
                let vertical = || -> Option<usize> {
                    let mut best: Option<usize> = None;
                    for &cell in &a.cells {
                        let cell = cell as usize;
                        let up = cell.checked_sub(w);
                        let down = (cell + w < labels.len()).then_some(cell + w);
                        for nb in [up, down].into_iter().flatten() {
                            let k = labels[nb] as usize;
                            if k > i && !consumed[k] && inst[k].token == needed && best.is_none_or(|b| k < b) {
                                best = Some(k);
                            }
                        }
                    }
                    best
                };
                pick(&[-1, 1]).or_else(vertical).map(|k| (k, a.token == rule.left))
            }
            Geometry::Canonical(shapes) => {
                if a.token != rule.left {
                    continue;
                }
                let dir = rule.orientation.direction().expect("oriented rule");
                attach_target(seg, a.anchor, shapes.get(a.token).attach(dir)).and_then(|target| {
                    let k = labels[target] as usize;
                    (!consumed[k] && inst[k].token == rule.right && inst[k].anchor as usize == target)
                        .then_some((k, true))
                })
            }
        };
        if let Some((k, a_left)) = found {
            consumed[i] = true;
            consumed[k] = true;
            partner[i] = k as u32;
            left_first[i] = a_left;
            any = true;
        }
    }
    if !any {
        return None;
    }
    let mut absorbed = vec![false; n];
    for &p in &partner {
        if p != NONE {
            absorbed[p as usize] = true;
        }
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if absorbed[i] {
            continue;
        }
        let a = &inst[i];
        if partner[i] == NONE {
            out.push(a.clone());
            continue;
        }
        let b = &inst[partner[i] as usize];
        let (first, second) = if left_first[i] { (a, b) } else { (b, a) };
        let mut cells = Vec::with_capacity(a.cells.len() + b.cells.len());
        cells.extend_from_slice(&first.cells);
        cells.extend_from_slice(&second.cells);
        out.push(Instance { token: rule.new_id, anchor: a.anchor, cells });
    }
    Some(Segmentation::from_parts_unchecked(seg.height(), seg.width(), out))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub iteration: usize,
    pub pair: [u32; 2],
    pub orientation: Orientation,
    pub freq: u64,
    pub new_id: u32,
}

/// Stateful trainer; [`train`] is the one-shot wrapper.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    vocab: Vocabulary,
    shapes: ShapeTable,
    corpus: Vec<Segmentation>,
    log: Vec<TrainLogEntry>,
    stopped_early: bool,
}

impl Trainer {
    pub fn new(corpus: &[CorpusItem], config: TrainConfig) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if config.initial_vocab_size == 0 {
            return Err(Error::InvalidParameter("initial_vocab_size must be at least 1".into()));
        }
        let segs: Vec<Segmentation> = corpus.iter().map(CorpusItem::segmentation).collect();
        check_ids(&segs, config.initial_vocab_size)?;
        Ok(Trainer {
            vocab: Vocabulary::empty(config.initial_vocab_size, config.orientation_policy),
            shapes: ShapeTable::new(config.initial_vocab_size),
            corpus: segs,
            log: Vec::new(),
            stopped_early: false,
            config,
        })
    }

    pub fn counts(&self) -> AdjacencyCounts {
        let size = self.vocab.size();
        match self.config.orientation_policy {
            OrientationPolicy::Agnostic => count_all(&self.corpus, size, Geometry::Contact),
            OrientationPolicy::Oriented => count_all(&self.corpus, size, Geometry::Canonical(&self.shapes)),
        }
    }

    /// One iteration. Returns `None` when no pair has non-zero frequency
    /// or the merge budget is exhausted.
    pub fn step(&mut self) -> Option<TrainLogEntry> {
        if self.stopped_early || self.vocab.merges().len() >= self.config.num_merges {
            return None;
        }
        let counts = self.counts();
        let (cand, freq) = max_freq_pair(&counts, self.config.counting_policy, self.config.orientation_policy);
        let Some(cand) = cand.filter(|_| freq > 0) else {
            self.stopped_early = true;
            return None;
        };
        let new_id = self
            .vocab
            .push(cand.left, cand.right, cand.orientation)
            .expect("candidate ids are in range");
        let rule = *self.vocab.merges().last().unwrap();
        self.shapes.push(&rule);
        let shapes = &self.shapes;
        self.corpus.par_iter_mut().for_each(|seg| {
            apply_rule_in_place(seg, &rule, shapes);
        });
        let entry = TrainLogEntry {
            iteration: self.log.len() + 1,
            pair: [cand.left, cand.right],
            orientation: cand.orientation,
            freq,
            new_id,
        };
        self.log.push(entry.clone());
        Some(entry)
    }

    pub fn run(&mut self) {
        while self.step().is_some() {}
    }

    /// Runs to completion, writing one JSON line per accepted merge.
    pub fn run_logged<W: Write>(&mut self, mut log: W) -> Result<()> {
        while let Some(entry) = self.step() {
            serde_json::to_writer(&mut log, &entry)?;
            log.write_all(b"\n").map_err(|e| Error::io("<train log>", e))?;
        }
        Ok(())
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn segmentations(&self) -> &[Segmentation] {
        &self.corpus
    }

    pub fn log(&self) -> &[TrainLogEntry] {
        &self.log
    }

    /// True when training ended through the zero-frequency branch.
    pub fn stopped_early(&self) -> bool {
        self.stopped_early
    }

    pub fn into_vocab(self) -> Vocabulary {
        self.vocab
    }
}

pub fn train(corpus: &[CorpusItem], config: &TrainConfig) -> Result<Vocabulary> {
    let mut trainer = Trainer::new(corpus, config.clone())?;
    trainer.run();
    Ok(trainer.into_vocab())
}
