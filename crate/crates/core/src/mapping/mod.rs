//! Channel-group weight-sharing mappings.
//!
//! A layer's maximum width is split into `l` channel groups and a candidate
//! dimension of width `j` uses `j` of them. A mapping records which groups
//! each width uses as an `l × l` binary matrix (rows are groups, columns are
//! widths `1..=l`).
//!
//! * ordinal: width `j` takes the leftmost `j` groups.
//! * bilateral: an ordinal block plus a mirrored right-aligned block, both
//!   trained for every sampled width.
//! * cyclic: a single block chosen so every group is trained (almost) the
//!   same number of times and accrues (almost) the same summed influence.

mod cyclic;
mod enumerate;
mod format;
mod metrics;
mod refine;
pub(crate) mod units;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cyclic::{build_cyclic, MAX_OPTIMIZED_GROUPS};
pub use enumerate::{enumerate_optimal, MAX_ENUMERATION_GROUPS};
pub use format::{parse_mapping, write_mapping};
pub use metrics::{influence_matrices, metrics, InfluenceMatrix, MappingMetrics};
pub use refine::refine_local_search;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingKind {
    Ordinal,
    Bilateral,
    Cyclic,
    Custom,
}

impl fmt::Display for MappingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MappingKind::Ordinal => "ordinal",
            MappingKind::Bilateral => "bilateral",
            MappingKind::Cyclic => "cyclic",
            MappingKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl FromStr for MappingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ordinal" => Ok(MappingKind::Ordinal),
            "bilateral" => Ok(MappingKind::Bilateral),
            "cyclic" => Ok(MappingKind::Cyclic),
            "custom" => Ok(MappingKind::Custom),
            other => Err(Error::invalid(format!("unknown mapping kind `{other}`"))),
        }
    }
}

/// Square binary matrix: `get(group, width)` tells whether `group` is one of
/// the groups used by the candidate of `width` groups.
///
/// Groups are 0-based, widths are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BetaMatrix {
    l: usize,
    cells: Vec<bool>,
}

impl BetaMatrix {
    pub fn zeros(l: usize) -> Self {
        Self { l, cells: vec![false; l * l] }
    }

    /// Builds a matrix from rows (one row per group, one entry per width).
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let l = rows.len();
        if l == 0 {
            return Err(Error::invalid("matrix must have at least one row"));
        }
        let mut m = Self::zeros(l);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != l {
                return Err(Error::InvalidMapping(format!("row {} has {} entries, expected {l}", i + 1, row.len())));
            }
            for (c, &v) in row.iter().enumerate() {
                m.cells[i * l + c] = v;
            }
        }
        Ok(m)
    }

    pub(crate) fn from_column_masks(l: usize, cols: &[u64]) -> Self {
        let mut m = Self::zeros(l);
        for (c, mask) in cols.iter().enumerate() {
            for i in 0..l {
                m.cells[i * l + c] = mask >> i & 1 == 1;
            }
        }
        m
    }

    pub(crate) fn column_masks(&self) -> Vec<u64> {
        (1..=self.l).map(|w| (0..self.l).filter(|&i| self.get(i, w)).fold(0u64, |acc, i| acc | 1 << i)).collect()
    }

    pub fn l(&self) -> usize {
        self.l
    }

    #[inline]
    pub fn get(&self, group: usize, width: usize) -> bool {
        self.cells[group * self.l + width - 1]
    }

    pub fn set(&mut self, group: usize, width: usize, used: bool) {
        self.cells[group * self.l + width - 1] = used;
    }

    pub fn row(&self, group: usize) -> &[bool] {
        &self.cells[group * self.l..(group + 1) * self.l]
    }

    pub fn row_sums(&self) -> Vec<usize> {
        (0..self.l).map(|i| self.row(i).iter().filter(|&&b| b).count()).collect()
    }

    pub fn column_sums(&self) -> Vec<usize> {
        (1..=self.l).map(|w| (0..self.l).filter(|&i| self.get(i, w)).count()).collect()
    }

    /// Groups used by `width`, in ascending order.
    pub fn groups_for(&self, width: usize) -> Vec<usize> {
        (0..self.l).filter(|&i| self.get(i, width)).collect()
    }

    /// True when every width's groups form one run modulo `l`.
    pub fn is_cyclic_contiguous(&self) -> bool {
        let l = self.l;
        (1..=l).all(|w| {
            let starts = (0..l).filter(|&i| self.get(i, w) && !self.get((i + l - 1) % l, w)).count();
            starts <= 1
        })
    }

    fn check_column_sums(&self) -> Result<()> {
        for (c, &s) in self.column_sums().iter().enumerate() {
            if s != c + 1 {
                return Err(Error::InvalidMapping(format!("width {} uses {s} groups", c + 1)));
            }
        }
        Ok(())
    }
}

/// A weight-sharing pattern over `l` channel groups.
///
/// Every block satisfies the column-sum constraint (width `j` uses exactly
/// `j` groups). Bilateral mappings carry two blocks, everything else one.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChannelMapping {
    kind: MappingKind,
    contiguous: bool,
    blocks: Vec<BetaMatrix>,
}

impl ChannelMapping {
    /// Validates and wraps user-supplied blocks.
    pub fn new(kind: MappingKind, blocks: Vec<BetaMatrix>) -> Result<Self> {
        let expected = if kind == MappingKind::Bilateral { 2 } else { 1 };
        if blocks.len() != expected {
            return Err(Error::InvalidMapping(format!(
                "{kind} mapping needs {expected} block(s), got {}",
                blocks.len()
            )));
        }
        let l = blocks[0].l();
        if l == 0 {
            return Err(Error::invalid("l must be at least 1"));
        }
        for b in &blocks {
            if b.l() != l {
                return Err(Error::InvalidMapping("blocks differ in size".into()));
            }
            b.check_column_sums()?;
        }
        let contiguous = blocks.iter().all(BetaMatrix::is_cyclic_contiguous);
        let mapping = Self { kind, contiguous, blocks };
        let counts = mapping.training_counts();
        match kind {
            MappingKind::Cyclic if spread(&counts) > 1 => {
                Err(Error::InvalidMapping(format!("cyclic mapping row counts spread {} > 1", spread(&counts))))
            }
            MappingKind::Bilateral if counts.iter().any(|&c| c != l + 1) => {
                Err(Error::InvalidMapping(format!("bilateral row counts must all equal {}", l + 1)))
            }
            _ => Ok(mapping),
        }
    }

    pub(crate) fn from_parts(kind: MappingKind, blocks: Vec<BetaMatrix>) -> Self {
        let contiguous = blocks.iter().all(BetaMatrix::is_cyclic_contiguous);
        Self { kind, contiguous, blocks }
    }

    pub fn l(&self) -> usize {
        self.blocks[0].l()
    }

    pub fn kind(&self) -> MappingKind {
        self.kind
    }

    pub fn is_contiguous(&self) -> bool {
        self.contiguous
    }

    pub fn blocks(&self) -> &[BetaMatrix] {
        &self.blocks
    }

    /// The single matrix of a one-block mapping.
    pub fn beta(&self) -> &BetaMatrix {
        &self.blocks[0]
    }

    /// Whether `group` is trained when `width` is sampled (any block).
    pub fn uses(&self, group: usize, width: usize) -> bool {
        self.blocks.iter().any(|b| b.get(group, width))
    }

    /// Row sums, summed over blocks.
    pub fn training_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.l()];
        for b in &self.blocks {
            for (c, r) in counts.iter_mut().zip(b.row_sums()) {
                *c += r;
            }
        }
        counts
    }

    /// Channel-group updates per sampled width (1 single-sided, 2 bilateral).
    pub fn cost_factor(&self) -> usize {
        self.blocks.len()
    }
}

pub(crate) fn spread(counts: &[usize]) -> usize {
    let max = counts.iter().copied().max().unwrap_or(0);
    let min = counts.iter().copied().min().unwrap_or(0);
    max - min
}

fn check_l(l: usize) -> Result<()> {
    if l == 0 {
        Err(Error::invalid("l must be at least 1"))
    } else {
        Ok(())
    }
}

/// Width `j` uses groups `0..j`.
pub fn build_ordinal(l: usize) -> Result<ChannelMapping> {
    check_l(l)?;
    let mut beta = BetaMatrix::zeros(l);
    for w in 1..=l {
        for i in 0..w {
            beta.set(i, w, true);
        }
    }
    Ok(ChannelMapping::from_parts(MappingKind::Ordinal, vec![beta]))
}

/// Ordinal block plus its mirror image (width `j` uses groups `l-j..l`).
pub fn build_bilateral(l: usize) -> Result<ChannelMapping> {
    check_l(l)?;
    let left = build_ordinal(l)?.blocks.remove(0);
    let mut right = BetaMatrix::zeros(l);
    for w in 1..=l {
        for i in l - w..l {
            right.set(i, w, true);
        }
    }
    Ok(ChannelMapping::from_parts(MappingKind::Bilateral, vec![left, right]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordinal_counts() {
        let m = build_ordinal(10).unwrap();
        let counts = m.training_counts();
        assert_eq!(counts[0], 10);
        assert_eq!(counts[9], 1);
        for (i, c) in counts.iter().enumerate() {
            assert_eq!(*c, 10 - i);
        }
        let m = build_ordinal(3).unwrap();
        assert_eq!(m.training_counts(), vec![3, 2, 1]);
        assert_eq!(m.beta().column_sums(), vec![1, 2, 3]);
    }

    #[test]
    fn ordinal_single_group() {
        let m = build_ordinal(1).unwrap();
        assert!(m.beta().get(0, 1));
        assert_eq!(m.training_counts(), vec![1]);
    }

    #[test]
    fn zero_groups_rejected() {
        assert!(matches!(build_ordinal(0), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_bilateral(0), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_cyclic(0, true), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn bilateral_counts_are_l_plus_one() {
        for l in 1..=12 {
            let m = build_bilateral(l).unwrap();
            assert!(m.training_counts().iter().all(|&c| c == l + 1));
            for b in m.blocks() {
                assert_eq!(b.column_sums(), (1..=l).collect::<Vec<_>>());
            }
            assert_eq!(m.cost_factor(), 2);
        }
    }

    #[test]
    fn new_validates_column_sums() {
        let rows = vec![vec![true, true], vec![true, false]];
        let err = ChannelMapping::new(MappingKind::Custom, vec![BetaMatrix::from_rows(&rows).unwrap()]);
        assert!(matches!(err, Err(Error::InvalidMapping(_))));
        let rows = vec![vec![false, true], vec![true, true]];
        let m = ChannelMapping::new(MappingKind::Custom, vec![BetaMatrix::from_rows(&rows).unwrap()]).unwrap();
        assert_eq!(m.training_counts(), vec![1, 2]);
    }

    #[test]
    fn cyclic_kind_enforces_spread() {
        let ordinal = build_ordinal(3).unwrap();
        let err = ChannelMapping::new(MappingKind::Cyclic, ordinal.blocks().to_vec());
        assert!(err.is_err());
    }

    #[test]
    fn contiguity() {
        assert!(build_ordinal(6).unwrap().is_contiguous());
        let rows = vec![vec![true, true, true], vec![false, false, true], vec![false, true, true]];
        let b = BetaMatrix::from_rows(&rows).unwrap();
        // width 2 uses {0, 2}: contiguous modulo 3
        assert!(b.is_cyclic_contiguous());
        let rows = vec![
            vec![false, true, true, true],
            vec![true, false, true, true],
            vec![false, true, false, true],
            vec![false, false, true, true],
        ];
        assert!(!BetaMatrix::from_rows(&rows).unwrap().is_cyclic_contiguous());
    }

    #[test]
    fn column_mask_roundtrip() {
        let m = build_bilateral(7).unwrap();
        for b in m.blocks() {
            let masks = b.column_masks();
            assert_eq!(&BetaMatrix::from_column_masks(7, &masks), b);
        }
    }
}
