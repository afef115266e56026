use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SisirError};
use crate::scalar::Scalar;

/// Ordered, contiguous, non-overlapping cover of the evaluation grid.
///
/// Each interval is an inclusive range of zero-based grid indices; its
/// length is `t[hi] - t[lo]`, so singleton intervals have length zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalPartition<F> {
    pub ranges: Vec<(usize, usize)>,
    pub lengths: Vec<F>,
}

impl<F: Scalar> IntervalPartition<F> {
    pub fn from_ranges(ranges: Vec<(usize, usize)>, grid: &Array1<F>) -> Result<Self> {
        let p = grid.len();
        if ranges.is_empty() {
            return Err(SisirError::InvalidArgument("partition needs at least one interval".into()));
        }
        let mut next = 0;
        for &(lo, hi) in &ranges {
            if lo != next || hi < lo || hi >= p {
                return Err(SisirError::InvalidArgument(format!(
                    "interval [{lo}, {hi}] breaks a contiguous cover of 0..{p}"
                )));
            }
            next = hi + 1;
        }
        if next != p {
            return Err(SisirError::InvalidArgument(format!("partition stops at {next}, grid has {p} points")));
        }
        let lengths = ranges.iter().map(|&(lo, hi)| grid[hi] - grid[lo]).collect();
        Ok(IntervalPartition { ranges, lengths })
    }

    /// One interval per grid point.
    pub fn singletons(grid: &Array1<F>) -> Self {
        Self::from_ranges((0..grid.len()).map(|j| (j, j)).collect(), grid).expect("valid singleton cover")
    }

    /// A single interval covering the whole grid.
    pub fn whole(grid: &Array1<F>) -> Self {
        Self::from_ranges(vec![(0, grid.len() - 1)], grid).expect("valid single interval")
    }

    /// Number of intervals `D`.
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Number of grid points covered.
    pub fn p(&self) -> usize {
        self.ranges.last().map_or(0, |&(_, hi)| hi + 1)
    }

    /// Interval index of every grid point.
    pub fn membership(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.p());
        for (k, &(lo, hi)) in self.ranges.iter().enumerate() {
            out.extend(std::iter::repeat_n(k, hi - lo + 1));
        }
        out
    }

    /// Merges groups of consecutive intervals. `groups` lists inclusive
    /// index ranges `[first, last]` over the current intervals; they must be
    /// disjoint and sorted.
    pub fn merge_groups(&self, groups: &[(usize, usize)], grid: &Array1<F>) -> Result<Self> {
        let mut ranges = Vec::with_capacity(self.len());
        let mut k = 0;
        for &(first, last) in groups {
            if first < k || last < first || last >= self.len() {
                return Err(SisirError::InvalidArgument(format!("bad merge group [{first}, {last}]")));
            }
            ranges.extend_from_slice(&self.ranges[k..first]);
            ranges.push((self.ranges[first].0, self.ranges[last].1));
            k = last + 1;
        }
        ranges.extend_from_slice(&self.ranges[k..]);
        Self::from_ranges(ranges, grid)
    }

    /// Checks the cover invariants against a grid of `p` points.
    pub fn is_valid_cover(&self, p: usize) -> bool {
        let mut next = 0;
        for &(lo, hi) in &self.ranges {
            if lo != next || hi < lo {
                return false;
            }
            next = hi + 1;
        }
        !self.ranges.is_empty() && next == p && self.lengths.len() == self.ranges.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constructors() {
        let grid = array![0.0, 0.25, 0.5, 1.0];
        let s = IntervalPartition::singletons(&grid);
        assert_eq!(s.len(), 4);
        assert!(s.lengths.iter().all(|&l| l == 0.0));
        let w = IntervalPartition::whole(&grid);
        assert_eq!(w.ranges, vec![(0, 3)]);
        assert_eq!(w.lengths, vec![1.0]);
        assert_eq!(w.membership(), vec![0, 0, 0, 0]);
    }

    #[test]
    fn rejects_gaps_and_overlaps() {
        let grid = array![0.0, 0.25, 0.5, 1.0];
        assert!(IntervalPartition::from_ranges(vec![(0, 1), (3, 3)], &grid).is_err());
        assert!(IntervalPartition::from_ranges(vec![(0, 2), (2, 3)], &grid).is_err());
        assert!(IntervalPartition::from_ranges(vec![(0, 2)], &grid).is_err());
        assert!(IntervalPartition::from_ranges(vec![], &grid).is_err());
    }

    #[test]
    fn merging_groups() {
        let grid = array![0.0, 0.1, 0.2, 0.3, 0.4];
        let s = IntervalPartition::singletons(&grid);
        let m = s.merge_groups(&[(0, 1), (3, 4)], &grid).unwrap();
        assert_eq!(m.ranges, vec![(0, 1), (2, 2), (3, 4)]);
        assert_eq!(m.membership(), vec![0, 0, 1, 2, 2]);
        assert!(m.is_valid_cover(5));
    }
}
