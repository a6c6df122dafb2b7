use std::collections::BTreeSet;

use super::{AttributeId, AttributeSet, CircuitError};
use crate::wire::{Decode, Encode, Reader, WireError, Writer};

const MAX_POLICY_DEPTH: usize = 256;

/// A node of a monotone threshold-gate tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PolicyNode {
    Leaf(AttributeId),
    /// `threshold`-of-`children.len()` gate.
    Gate {
        threshold: usize,
        children: Vec<PolicyNode>,
    },
}

impl PolicyNode {
    fn check(&self, depth: usize) -> Result<(), CircuitError> {
        match self {
            PolicyNode::Leaf(_) => Ok(()),
            PolicyNode::Gate { threshold, children } => {
                let (k, m) = (*threshold, children.len());
                if k == 0 || k > m || depth > MAX_POLICY_DEPTH {
                    return Err(CircuitError::BadThreshold { k, m });
                }
                children.iter().try_for_each(|c| c.check(depth + 1))
            }
        }
    }

    fn collect_leaves(&self, out: &mut Vec<AttributeId>) {
        match self {
            PolicyNode::Leaf(a) => out.push(*a),
            PolicyNode::Gate { children, .. } => {
                children.iter().for_each(|c| c.collect_leaves(out))
            }
        }
    }

    /// Returns the witness and its leaf count, advancing `next_leaf` over
    /// every leaf of this subtree whether or not it is satisfied.
    fn satisfy(&self, attrs: &AttributeSet, next_leaf: &mut usize) -> Option<(Witness, usize)> {
        match self {
            PolicyNode::Leaf(a) => {
                let ordinal = *next_leaf;
                *next_leaf += 1;
                attrs.contains(a).then_some((Witness::Leaf { ordinal }, 1))
            }
            PolicyNode::Gate { threshold, children } => {
                let mut satisfied: Vec<(usize, Witness, usize)> = children
                    .iter()
                    .enumerate()
                    .filter_map(|(pos, c)| c.satisfy(attrs, next_leaf).map(|(w, n)| (pos, w, n)))
                    .collect();
                if satisfied.len() < *threshold {
                    return None;
                }
                // Keep the `threshold` cheapest children; stable on position.
                satisfied.sort_by_key(|(_, _, n)| *n);
                satisfied.truncate(*threshold);
                satisfied.sort_by_key(|(pos, _, _)| *pos);
                let size = satisfied.iter().map(|(_, _, n)| n).sum();
                let picks = satisfied.into_iter().map(|(pos, w, _)| (pos, w)).collect();
                Some((Witness::Gate { picks }, size))
            }
        }
    }
}

/// Monotone access structure. Leaves are numbered in depth-first order;
/// secret keys store one component per leaf in that order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PolicyTree {
    root: PolicyNode,
    leaves: Vec<AttributeId>,
}

/// Which children of each gate take part in a satisfying assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Witness {
    Leaf { ordinal: usize },
    /// `(child position, sub-witness)`, ascending by position, exactly
    /// `threshold` entries.
    Gate { picks: Vec<(usize, Witness)> },
}

impl Witness {
    pub fn leaf_ordinals(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut BTreeSet<usize>) {
        match self {
            Witness::Leaf { ordinal } => {
                out.insert(*ordinal);
            }
            Witness::Gate { picks } => picks.iter().for_each(|(_, w)| w.collect(out)),
        }
    }
}

impl PolicyTree {
    pub fn new(root: PolicyNode) -> Result<Self, CircuitError> {
        root.check(0)?;
        let mut leaves = Vec::new();
        root.collect_leaves(&mut leaves);
        Ok(Self { root, leaves })
    }

    pub fn leaf(attr: AttributeId) -> Self {
        Self {
            root: PolicyNode::Leaf(attr),
            leaves: vec![attr],
        }
    }

    pub fn root(&self) -> &PolicyNode {
        &self.root
    }

    pub fn leaves(&self) -> &[AttributeId] {
        &self.leaves
    }

    pub fn leaf_attribute(&self, ordinal: usize) -> AttributeId {
        self.leaves[ordinal]
    }

    /// A small satisfying witness, or `None` when `attrs` does not satisfy
    /// the tree.
    pub fn satisfy(&self, attrs: &AttributeSet) -> Option<Witness> {
        let mut next = 0;
        self.root.satisfy(attrs, &mut next).map(|(w, _)| w)
    }

    /// `(satisfied, leaf ordinals of the witness)`; the set is empty when
    /// unsatisfied.
    pub fn satisfies(&self, attrs: &AttributeSet) -> (bool, BTreeSet<usize>) {
        match self.satisfy(attrs) {
            Some(w) => (true, w.leaf_ordinals()),
            None => (false, BTreeSet::new()),
        }
    }
}

fn encode_node(node: &PolicyNode, w: &mut Writer) {
    match node {
        PolicyNode::Leaf(a) => {
            w.put_u8(0);
            w.put_u32(a.0);
        }
        PolicyNode::Gate { threshold, children } => {
            w.put_u8(1);
            w.put_u32(*threshold as u32);
            w.put_len(children.len());
            children.iter().for_each(|c| encode_node(c, w));
        }
    }
}

fn decode_node(r: &mut Reader<'_>, depth: usize) -> Result<PolicyNode, WireError> {
    if depth > MAX_POLICY_DEPTH {
        return Err(WireError::invalid("policy depth"));
    }
    match r.u8()? {
        0 => Ok(PolicyNode::Leaf(AttributeId(r.u32()?))),
        1 => {
            let threshold = r.u32()? as usize;
            let m = r.len()?;
            // Every child costs at least five bytes.
            if m > r.remaining() / 5 {
                return Err(WireError::invalid("policy gate"));
            }
            let children = (0..m)
                .map(|_| decode_node(r, depth + 1))
                .collect::<Result<_, _>>()?;
            Ok(PolicyNode::Gate { threshold, children })
        }
        _ => Err(WireError::invalid("policy node tag")),
    }
}

impl Encode for PolicyTree {
    fn encode(&self, w: &mut Writer) {
        encode_node(&self.root, w);
    }
}

impl Decode for PolicyTree {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let root = decode_node(r, 0)?;
        PolicyTree::new(root).map_err(|_| WireError::invalid("policy threshold"))
    }
}
