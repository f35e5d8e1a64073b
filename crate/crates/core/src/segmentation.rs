//! Partitions of a grid into token instances (polyominoes).

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TokenGrid;

/// One token instance: its ID, its top-left-most cell, and its cells as
/// row-major indices in merge-tree leaf order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instance {
    pub token: u32,
    pub anchor: u32,
    pub cells: Vec<u32>,
}

/// A partition of an `height x width` grid into edge-connected token
/// instances, ordered by the raster position of each instance's anchor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segmentation {
    height: usize,
    width: usize,
    instances: Vec<Instance>,
}

impl Segmentation {
    /// Every cell is its own instance.
    pub fn singletons(grid: &TokenGrid) -> Self {
        let instances = grid
            .cells()
            .iter()
            .enumerate()
            .map(|(i, &token)| Instance { token, anchor: i as u32, cells: vec![i as u32] })
            .collect();
        Segmentation { height: grid.height(), width: grid.width(), instances }
    }

    /// A 1D sequence as a `1 x n` segmentation of singletons.
    pub fn from_sequence(seq: &[u32]) -> Self {
        let instances = seq
            .iter()
            .enumerate()
            .map(|(i, &token)| Instance { token, anchor: i as u32, cells: vec![i as u32] })
            .collect();
        Segmentation { height: 1, width: seq.len(), instances }
    }

    /// Builds and validates a segmentation from explicit instances.
    pub fn from_instances(height: usize, width: usize, instances: Vec<Instance>) -> Result<Self> {
        let seg = Segmentation { height, width, instances };
        seg.validate()?;
        Ok(seg)
    }

    pub(crate) fn from_parts_unchecked(height: usize, width: usize, instances: Vec<Instance>) -> Self {
        Segmentation { height, width, instances }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_cells(&self) -> usize {
        self.height * self.width
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Token IDs in instance order.
    pub fn tokens(&self) -> Vec<u32> {
        self.instances.iter().map(|i| i.token).collect()
    }

    /// Instance index of every cell, row-major.
    pub fn labels(&self) -> Vec<u32> {
        let mut labels = vec![u32::MAX; self.num_cells()];
        for (idx, inst) in self.instances.iter().enumerate() {
            for &c in &inst.cells {
                labels[c as usize] = idx as u32;
            }
        }
        labels
    }

    /// Position of every cell within its instance's leaf order, row-major.
    pub fn leaf_positions(&self) -> Vec<u32> {
        let mut out = vec![0; self.num_cells()];
        for inst in &self.instances {
            for (pos, &c) in inst.cells.iter().enumerate() {
                out[c as usize] = pos as u32;
            }
        }
        out
    }

    pub fn coords(&self, cell: u32) -> (usize, usize) {
        (cell as usize / self.width, cell as usize % self.width)
    }

    /// Checks the exact-partition, connectivity, anchor and ordering invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_cells();
        let mut owner = vec![u32::MAX; n];
        let mut prev_anchor: Option<u32> = None;
        for (idx, inst) in self.instances.iter().enumerate() {
            if inst.cells.is_empty() {
                return Err(Error::InvalidSegmentation(format!("instance {idx} is empty")));
            }
            for &c in &inst.cells {
                let slot = owner
                    .get_mut(c as usize)
                    .ok_or_else(|| Error::InvalidSegmentation(format!("cell {c} out of bounds")))?;
                if *slot != u32::MAX {
                    return Err(Error::InvalidSegmentation(format!("cell {c} covered twice")));
                }
                *slot = idx as u32;
            }
            let min = *inst.cells.iter().min().unwrap();
            if min != inst.anchor {
                return Err(Error::InvalidSegmentation(format!(
                    "instance {idx} anchor {} is not its minimum cell {min}",
                    inst.anchor
                )));
            }
            if prev_anchor.is_some_and(|p| p >= inst.anchor) {
                return Err(Error::InvalidSegmentation(format!("instance {idx} out of raster order")));
            }
            prev_anchor = Some(inst.anchor);
        }
        if let Some(c) = owner.iter().position(|&o| o == u32::MAX) {
            return Err(Error::InvalidSegmentation(format!("cell {c} is not covered")));
        }
        for (idx, inst) in self.instances.iter().enumerate() {
            if !self.is_connected(&inst.cells, &owner, idx as u32) {
                return Err(Error::InvalidSegmentation(format!("instance {idx} is not edge-connected")));
            }
        }
        Ok(())
    }

    fn is_connected(&self, cells: &[u32], owner: &[u32], idx: u32) -> bool {
        let mut seen = FxHashSet::default();
        seen.insert(cells[0]);
        let mut stack = vec![cells[0]];
        while let Some(c) = stack.pop() {
            for nb in self.neighbors(c) {
                if owner[nb as usize] == idx && seen.insert(nb) {
                    stack.push(nb);
                }
            }
        }
        seen.len() == cells.len()
    }

    /// 4-neighbours of a cell inside the grid.
    pub fn neighbors(&self, cell: u32) -> impl Iterator<Item = u32> {
        let (w, h) = (self.width as u32, self.height as u32);
        let (r, c) = (cell / w, cell % w);
        let up = (r > 0).then(|| cell - w);
        let down = (r + 1 < h).then(|| cell + w);
        let left = (c > 0).then(|| cell - 1);
        let right = (c + 1 < w).then(|| cell + 1);
        [up, left, right, down].into_iter().flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(token: u32, cells: &[u32]) -> Instance {
        Instance { token, anchor: *cells.iter().min().unwrap(), cells: cells.to_vec() }
    }

    #[test]
    fn singletons_are_valid() {
        let g = TokenGrid::from_rows(&[[0, 1], [0, 1]]).unwrap();
        let seg = Segmentation::singletons(&g);
        seg.validate().unwrap();
        assert_eq!(seg.tokens(), vec![0, 1, 0, 1]);
        assert_eq!(seg.labels(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn rejects_overlap_gap_and_disconnection() {
        assert!(Segmentation::from_instances(1, 2, vec![inst(0, &[0, 1]), inst(1, &[1])]).is_err());
        assert!(Segmentation::from_instances(1, 3, vec![inst(0, &[0, 1])]).is_err());
        // Diagonal cells do not connect.
        assert!(Segmentation::from_instances(2, 2, vec![inst(0, &[0, 3]), inst(1, &[1]), inst(1, &[2])]).is_err());
        assert!(Segmentation::from_instances(2, 2, vec![inst(0, &[0, 2]), inst(1, &[1, 3])]).is_ok());
    }

    #[test]
    fn rejects_bad_order() {
        assert!(Segmentation::from_instances(1, 2, vec![inst(1, &[1]), inst(0, &[0])]).is_err());
    }
}
