use std::collections::HashMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Identifier of a variable block. The variant fixes the block's kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarKey {
    /// Orientation of frame `id`, stored transposed as `d` rows of X.
    Rotation(u64),
    /// Unit bearing vector with its own id, one row of X.
    Bearing(u64),
    /// Position of frame or landmark `id`, one row of X.
    Point(u64),
}

impl VarKey {
    pub fn kind(self) -> BlockKind {
        match self {
            VarKey::Rotation(_) => BlockKind::Rotation,
            VarKey::Bearing(_) => BlockKind::UnitVector,
            VarKey::Point(_) => BlockKind::Point,
        }
    }

    pub fn id(self) -> u64 {
        match self {
            VarKey::Rotation(i) | VarKey::Bearing(i) | VarKey::Point(i) => i,
        }
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarKey::Rotation(i) => write!(f, "R{i}"),
            VarKey::Bearing(i) => write!(f, "u{i}"),
            VarKey::Point(i) => write!(f, "t{i}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    Rotation,
    UnitVector,
    Point,
}

impl BlockKind {
    /// Rotations and unit vectors are constrained; points are not.
    pub fn is_constrained(self) -> bool {
        !matches!(self, BlockKind::Point)
    }

    pub fn rows(self, d: usize) -> usize {
        match self {
            BlockKind::Rotation => d,
            BlockKind::UnitVector | BlockKind::Point => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub key: VarKey,
    pub rows: Range<usize>,
}

impl Block {
    pub fn kind(&self) -> BlockKind {
        self.key.kind()
    }
}

/// Row map of the stacked variable `X = [X_c; X_f] ∈ ℝ^{n×d}`.
///
/// Constrained blocks occupy rows `0..n_c` and unconstrained blocks rows
/// `n_c..n`, each group in insertion order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VariableLayout {
    d: usize,
    blocks: Vec<Block>,
    index: HashMap<VarKey, usize>,
    n_c: usize,
    n_f: usize,
}

impl VariableLayout {
    /// Builds a layout from keys in any order.
    pub fn new(d: usize, keys: impl IntoIterator<Item = VarKey>) -> Result<Self> {
        if d != 2 && d != 3 {
            return Err(Error::InvalidLayout(format!(
                "ambient dimension must be 2 or 3, got {d}"
            )));
        }
        let keys: Vec<VarKey> = keys.into_iter().collect();
        let (constrained, free): (Vec<_>, Vec<_>) =
            keys.iter().partition(|k| k.kind().is_constrained());
        let mut blocks = Vec::with_capacity(keys.len());
        let mut index = HashMap::with_capacity(keys.len());
        let mut row = 0;
        for key in constrained.into_iter().chain(free) {
            if index.insert(key, blocks.len()).is_some() {
                return Err(Error::DuplicateBlock(key));
            }
            let len = key.kind().rows(d);
            blocks.push(Block {
                key,
                rows: row..row + len,
            });
            row += len;
        }
        let n_c = blocks
            .iter()
            .filter(|b| b.kind().is_constrained())
            .map(|b| b.rows.len())
            .sum();
        Ok(Self {
            d,
            blocks,
            index,
            n_c,
            n_f: row - n_c,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n_c + self.n_f
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn n_f(&self) -> usize {
        self.n_f
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, key: VarKey) -> Option<&Block> {
        self.index.get(&key).map(|&i| &self.blocks[i])
    }

    pub fn contains(&self, key: VarKey) -> bool {
        self.index.contains_key(&key)
    }

    /// Row range of `key` in X.
    pub fn rows(&self, key: VarKey) -> Option<Range<usize>> {
        self.block(key).map(|b| b.rows.clone())
    }

    /// Constrained blocks, rows `0..n_c`.
    pub fn constrained_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| b.kind().is_constrained())
    }

    /// Unconstrained blocks, rows `n_c..n`.
    pub fn unconstrained_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| !b.kind().is_constrained())
    }

    pub fn count(&self, kind: BlockKind) -> usize {
        self.blocks.iter().filter(|b| b.kind() == kind).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constrained_rows_precede_points() {
        let layout = VariableLayout::new(
            3,
            [
                VarKey::Point(0),
                VarKey::Rotation(0),
                VarKey::Bearing(4),
                VarKey::Point(1),
                VarKey::Rotation(1),
            ],
        )
        .unwrap();
        assert_eq!(layout.n_c(), 7);
        assert_eq!(layout.n_f(), 2);
        assert_eq!(layout.rows(VarKey::Rotation(0)), Some(0..3));
        assert_eq!(layout.rows(VarKey::Bearing(4)), Some(3..4));
        assert_eq!(layout.rows(VarKey::Rotation(1)), Some(4..7));
        assert_eq!(layout.rows(VarKey::Point(0)), Some(7..8));
        assert_eq!(layout.rows(VarKey::Point(1)), Some(8..9));

        let mut next = 0;
        for b in layout.blocks() {
            assert_eq!(b.rows.start, next);
            next = b.rows.end;
        }
        assert_eq!(next, layout.n());
    }

    #[test]
    fn rejects_duplicates_and_bad_dimension() {
        assert!(matches!(
            VariableLayout::new(2, [VarKey::Point(0), VarKey::Point(0)]),
            Err(Error::DuplicateBlock(VarKey::Point(0)))
        ));
        assert!(VariableLayout::new(4, [VarKey::Point(0)]).is_err());
    }
}
