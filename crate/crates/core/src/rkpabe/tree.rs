//! Complete binary identity tree in heap order: the root is node 1, node
//! `i` has children `2i` and `2i + 1`, and leaf slot `k` is node `2^d + k`.

use std::collections::BTreeSet;

use super::AbeError;

pub type NodeId = u32;
pub type Slot = u32;

pub const MAX_TREE_DEPTH: u32 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IdentityTree {
    depth: u32,
}

impl IdentityTree {
    pub fn new(depth: u32) -> Result<Self, AbeError> {
        if depth > MAX_TREE_DEPTH {
            return Err(AbeError::TreeDepth(depth));
        }
        Ok(Self { depth })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Number of leaf slots, `2^d`.
    pub fn capacity(&self) -> u32 {
        1 << self.depth
    }

    pub fn root(&self) -> NodeId {
        1
    }

    pub fn node_count(&self) -> u32 {
        (1 << (self.depth + 1)) - 1
    }

    pub fn leaf(&self, slot: Slot) -> Result<NodeId, AbeError> {
        if slot >= self.capacity() {
            return Err(AbeError::SlotOutOfRange {
                slot,
                capacity: self.capacity(),
            });
        }
        Ok(self.capacity() + slot)
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        node >= self.capacity()
    }

    /// Distance from the root.
    pub fn level(&self, node: NodeId) -> u32 {
        31 - node.leading_zeros()
    }

    /// Root-to-leaf node ids, `d + 1` of them.
    pub fn path(&self, slot: Slot) -> Result<Vec<NodeId>, AbeError> {
        let leaf = self.leaf(slot)?;
        Ok((0..=self.depth).rev().map(|shift| leaf >> shift).collect())
    }

    /// Leaf slots below `node`, as a half-open range.
    pub fn leaves_under(&self, node: NodeId) -> std::ops::Range<Slot> {
        let height = self.depth - self.level(node);
        let first = (node << height) - self.capacity();
        first..first + (1 << height)
    }

    /// Complete-subtree cover of `slots`: mark every listed leaf, then
    /// walk up level by level replacing each pair of marked siblings by
    /// their parent.
    pub fn cover(&self, slots: &BTreeSet<Slot>) -> Result<BTreeSet<NodeId>, AbeError> {
        let mut level: BTreeSet<NodeId> = slots
            .iter()
            .map(|&s| self.leaf(s))
            .collect::<Result<_, _>>()?;
        let mut done = BTreeSet::new();
        for _ in 0..self.depth {
            let mut up = BTreeSet::new();
            for &node in &level {
                let sibling = node ^ 1;
                if level.contains(&sibling) {
                    up.insert(node >> 1);
                } else {
                    done.insert(node);
                }
            }
            level = up;
        }
        done.extend(level);
        Ok(done)
    }
}
