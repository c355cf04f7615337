//! Arithmetic representation of the r-regular rooted tree truncated at depth n.
//!
//! Vertices are numbered in breadth order: the root is 0 and the children of
//! `v` are `r*v + 1 ..= r*v + r`. Nothing is stored per vertex; only the
//! first id of every generation is cached so that generation lookups are a
//! short scan over at most `n + 1` entries.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported vertex count: every id must fit in 63 bits.
pub const MAX_VERTEX_COUNT: u64 = (1 << 63) - 1;

/// Vertex id in breadth order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u64);

impl VertexId {
    pub const ROOT: VertexId = VertexId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("branching factor must be at least 2, got {0}")]
    BranchingTooSmall(u32),
    #[error("tree with r={r}, n={depth} has more than 2^63-1 vertices")]
    TooLarge { r: u32, depth: u32 },
    #[error("vertex {vertex} is outside B_{depth} ({count} vertices)")]
    InvalidVertex { vertex: u64, depth: u32, count: u64 },
}

/// The finite ball `B_n` of the r-regular rooted tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeTopology {
    r: u32,
    depth: u32,
    /// `offsets[g]` is the first id of generation `g`; `offsets[n + 1]` is the vertex count.
    offsets: Vec<u64>,
}

impl TreeTopology {
    pub fn new(r: u32, depth: u32) -> Result<Self, TopologyError> {
        if r < 2 {
            return Err(TopologyError::BranchingTooSmall(r));
        }
        let mut offsets = Vec::with_capacity(depth as usize + 2);
        let mut first: u128 = 0;
        let mut layer: u128 = 1;
        for _ in 0..=depth {
            offsets.push(first as u64);
            first += layer;
            if first > MAX_VERTEX_COUNT as u128 {
                return Err(TopologyError::TooLarge { r, depth });
            }
            layer *= r as u128;
        }
        offsets.push(first as u64);
        Ok(Self { r, depth, offsets })
    }

    #[inline]
    pub fn r(&self) -> u32 {
        self.r
    }

    #[inline]
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// `(r^(n+1) - 1) / (r - 1)`.
    #[inline]
    pub fn vertex_count(&self) -> u64 {
        self.offsets[self.depth as usize + 1]
    }

    #[inline]
    pub fn contains(&self, v: VertexId) -> bool {
        v.0 < self.vertex_count()
    }

    pub fn check(&self, v: VertexId) -> Result<(), TopologyError> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(TopologyError::InvalidVertex {
                vertex: v.0,
                depth: self.depth,
                count: self.vertex_count(),
            })
        }
    }

    /// First id of generation `g` (for `g <= n + 1`).
    #[inline]
    pub fn generation_start(&self, g: u32) -> u64 {
        self.offsets[g as usize]
    }

    /// Number of vertices in generation `g`, i.e. `r^g`.
    pub fn generation_size(&self, g: u32) -> u64 {
        self.offsets[g as usize + 1] - self.offsets[g as usize]
    }

    /// True when `v` lies in the last generation `n`.
    #[inline]
    pub fn is_leaf(&self, v: VertexId) -> bool {
        v.0 >= self.offsets[self.depth as usize]
    }

    pub fn generation(&self, v: VertexId) -> Result<u32, TopologyError> {
        self.check(v)?;
        Ok(self.generation_unchecked(v))
    }

    #[inline]
    pub(crate) fn generation_unchecked(&self, v: VertexId) -> u32 {
        // offsets is tiny and sorted
        let mut g = 0;
        while self.offsets[g + 1] <= v.0 {
            g += 1;
        }
        g as u32
    }

    pub fn parent(&self, v: VertexId) -> Result<Option<VertexId>, TopologyError> {
        self.check(v)?;
        Ok(self.parent_unchecked(v))
    }

    #[inline]
    pub(crate) fn parent_unchecked(&self, v: VertexId) -> Option<VertexId> {
        if v.0 == 0 {
            None
        } else {
            Some(VertexId((v.0 - 1) / self.r as u64))
        }
    }

    /// Children of `v` inside `B_n`; empty for generation-n vertices.
    pub fn children(&self, v: VertexId) -> Result<Vec<VertexId>, TopologyError> {
        self.check(v)?;
        Ok(self.child_range(v).map(VertexId).collect())
    }

    /// Child ids as a contiguous range (empty at generation n).
    #[inline]
    pub(crate) fn child_range(&self, v: VertexId) -> std::ops::Range<u64> {
        if self.is_leaf(v) {
            0..0
        } else {
            let first = self.r as u64 * v.0 + 1;
            first..first + self.r as u64
        }
    }

    /// Whether `u` is an ancestor of `v` (reflexive).
    pub fn is_ancestor(&self, u: VertexId, v: VertexId) -> Result<bool, TopologyError> {
        self.check(u)?;
        self.check(v)?;
        let gu = self.generation_unchecked(u);
        let mut w = v;
        let mut gw = self.generation_unchecked(v);
        while gw > gu {
            w = VertexId((w.0 - 1) / self.r as u64);
            gw -= 1;
        }
        Ok(w == u)
    }

    /// Iterator over all vertex ids in breadth order.
    pub fn vertices(&self) -> impl Iterator<Item = VertexId> {
        (0..self.vertex_count()).map(VertexId)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vertex_counts() {
        assert_eq!(TreeTopology::new(2, 0).unwrap().vertex_count(), 1);
        assert_eq!(TreeTopology::new(2, 3).unwrap().vertex_count(), 15);
        assert_eq!(TreeTopology::new(3, 2).unwrap().vertex_count(), 13);
        assert_eq!(TreeTopology::new(2, 62).unwrap().vertex_count(), (1u64 << 63) - 1);
    }

    #[test]
    fn rejects_oversized_and_degenerate() {
        assert_eq!(
            TreeTopology::new(3, 60),
            Err(TopologyError::TooLarge { r: 3, depth: 60 })
        );
        assert!(TreeTopology::new(2, 63).is_err());
        assert_eq!(TreeTopology::new(1, 3), Err(TopologyError::BranchingTooSmall(1)));
    }

    #[test]
    fn children_examples() {
        let t = TreeTopology::new(2, 3).unwrap();
        assert_eq!(t.children(VertexId(0)).unwrap(), vec![VertexId(1), VertexId(2)]);
        assert_eq!(t.children(VertexId(2)).unwrap(), vec![VertexId(5), VertexId(6)]);
        let t3 = TreeTopology::new(3, 1).unwrap();
        assert!(t3.children(VertexId(1)).unwrap().is_empty());
        assert!(t3.children(VertexId(4)).is_err());
    }

    #[test]
    fn generation_parent_ancestor() {
        let t = TreeTopology::new(2, 4).unwrap();
        assert_eq!(t.generation(VertexId(6)).unwrap(), 2);
        assert_eq!(t.generation(VertexId(0)).unwrap(), 0);
        assert_eq!(t.parent(VertexId(0)).unwrap(), None);
        assert_eq!(t.parent(VertexId(6)).unwrap(), Some(VertexId(2)));
        for v in t.vertices() {
            assert!(t.is_ancestor(VertexId(0), v).unwrap());
        }
        assert!(t.is_ancestor(VertexId(5), VertexId(5)).unwrap());
        assert!(!t.is_ancestor(VertexId(5), VertexId(6)).unwrap());
        assert!(t.is_ancestor(VertexId(2), VertexId(13)).unwrap());
        assert!(t.parent(VertexId(31)).is_err());
    }

    #[test]
    fn generation_sizes_sum_to_count() {
        for r in 2..6 {
            for n in 0..8 {
                let t = TreeTopology::new(r, n).unwrap();
                let total: u64 = (0..=n).map(|g| t.generation_size(g)).sum();
                assert_eq!(total, t.vertex_count());
                for g in 0..=n {
                    assert_eq!(t.generation_size(g), (r as u64).pow(g));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn parent_child_round_trip(r in 2u32..7, n in 0u32..7, seed in any::<u64>()) {
            let t = TreeTopology::new(r, n).unwrap();
            let v = VertexId(seed % t.vertex_count());
            let g = t.generation(v).unwrap();
            prop_assert!(g <= n);
            for c in t.children(v).unwrap() {
                prop_assert_eq!(t.parent(c).unwrap(), Some(v));
                prop_assert_eq!(t.generation(c).unwrap(), g + 1);
            }
            if let Some(p) = t.parent(v).unwrap() {
                prop_assert!(t.children(p).unwrap().contains(&v));
            }
        }

        #[test]
        fn ancestor_matches_parent_walk(r in 2u32..5, n in 0u32..7, a in any::<u64>(), b in any::<u64>()) {
            let t = TreeTopology::new(r, n).unwrap();
            let u = VertexId(a % t.vertex_count());
            let v = VertexId(b % t.vertex_count());
            let mut w = Some(v);
            let mut reached = false;
            while let Some(x) = w {
                if x == u { reached = true; break; }
                w = t.parent(x).unwrap();
            }
            prop_assert_eq!(t.is_ancestor(u, v).unwrap(), reached);
        }
    }
}
