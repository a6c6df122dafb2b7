//! Revocable key-policy ABE over threshold-gate policies.
//!
//! A key for server slot `S` splits the master exponent as
//! `alpha = beta_S + gamma_S`. `beta_S` is secret-shared down the policy
//! tree; `gamma_S` is bound to every node on the path of `S` as
//! `g2^(gamma_S + r_node)`. The KDC publishes, per epoch `t`, update-key
//! components `g2^(w_t - r_node)` for the cover of the certified slots, and
//! ciphertexts carry `W_t^s` so that `w_t` cancels during decryption.
//!
//! Two parameter sets built from the same [`SharedCoins`] agree on every
//! attribute base, node secret and epoch element, and differ only in
//! `alpha`.

pub mod tree;

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use thiserror::Error;

use crate::bilinear::{
    derive_scalar, multi_pairing, random_scalar, sha256, G1Elem, G2Elem, GtElem, Scalar, Seed,
};
use crate::circuits::{AttributeId, AttributeSet, PolicyNode, PolicyTree, Witness};
use crate::wire::{Decode, Encode, Reader, WireError, Writer};

pub use tree::{IdentityTree, NodeId, Slot, MAX_TREE_DEPTH};

pub type Epoch = u64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AbeError {
    #[error("identity tree depth {0} exceeds the supported maximum")]
    TreeDepth(u32),
    #[error("slot {slot} outside identity tree of {capacity} leaves")]
    SlotOutOfRange { slot: Slot, capacity: u32 },
    #[error("attribute {0} outside the universe")]
    UnknownAttribute(AttributeId),
    #[error("encryption requested for epoch {requested}, parameters are at epoch {current}")]
    StaleEpoch { requested: Epoch, current: Epoch },
    #[error("epochs only move forward: {from} -> {to}")]
    EpochRegression { from: Epoch, to: Epoch },
}

/// Literal attributes for `arity` input bits (plus `extra` tag attributes
/// numbered after them), the identity-tree node labels, and epoch labels.
/// The three are distinct Rust types, so they cannot mix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AbeUniverse {
    pub arity: usize,
    pub extra: usize,
    pub tree: IdentityTree,
}

impl AbeUniverse {
    pub fn new(arity: usize, depth: u32) -> Result<Self, AbeError> {
        Self::with_extra(arity, 0, depth)
    }

    pub fn with_extra(arity: usize, extra: usize, depth: u32) -> Result<Self, AbeError> {
        Ok(Self {
            arity,
            extra,
            tree: IdentityTree::new(depth)?,
        })
    }

    pub fn attribute_count(&self) -> usize {
        AttributeId::universe_size(self.arity) as usize + self.extra
    }

    /// The `k`-th tag attribute.
    pub fn extra_attribute(&self, k: usize) -> Option<AttributeId> {
        (k < self.extra).then(|| AttributeId((AttributeId::universe_size(self.arity) as usize + k) as u32))
    }
}

/// Randomness shared by the two parameter sets of one KDC.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SharedCoins {
    seed: Seed,
}

impl SharedCoins {
    pub fn new(seed: Seed) -> Self {
        Self { seed }
    }

    pub fn random<R: RngCore + rand::CryptoRng + ?Sized>(rng: &mut R) -> Self {
        Self::new(Seed::random(rng))
    }

    fn attribute_secret(&self, attr: usize) -> Scalar {
        derive_scalar(&self.seed.0, "attribute", attr as u64)
    }

    fn node_key(&self) -> [u8; 32] {
        sha256(&[&self.seed.0, b"node"])
    }

    fn epoch_key(&self) -> [u8; 32] {
        sha256(&[&self.seed.0, b"epoch"])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbeMasterPublic {
    /// `e(g1, g2)^alpha`.
    y: GtElem,
    /// `T_i = g1^{t_i}` indexed by attribute id.
    bases: Vec<G1Elem>,
    epoch: Epoch,
    /// `W_t = g1^{w_t}` for the current epoch.
    w: G1Elem,
    tree: IdentityTree,
    arity: usize,
}

impl AbeMasterPublic {
    pub fn y(&self) -> &GtElem {
        &self.y
    }

    pub fn bases(&self) -> &[G1Elem] {
        &self.bases
    }

    pub fn epoch(&self) -> Epoch {
        self.epoch
    }

    pub fn epoch_element(&self) -> &G1Elem {
        &self.w
    }

    pub fn tree(&self) -> &IdentityTree {
        &self.tree
    }

    /// Input bits covered by the literal attributes.
    pub fn arity(&self) -> usize {
        self.arity
    }
}

pub struct AbeMasterSecret {
    alpha: Scalar,
    attr_secrets: Vec<Scalar>,
    node_key: [u8; 32],
    epoch_key: [u8; 32],
    epoch: Epoch,
    w: Scalar,
}

impl AbeMasterSecret {
    fn node_secret(&self, node: NodeId) -> Scalar {
        derive_scalar(&self.node_key, "node", node as u64)
    }

    pub fn epoch(&self) -> Epoch {
        self.epoch
    }
}

impl std::fmt::Debug for AbeMasterSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AbeMasterSecret")
            .field("epoch", &self.epoch)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbeSecretKey {
    slot: Slot,
    policy: PolicyTree,
    /// One component per policy leaf, in depth-first leaf order.
    leaf_parts: Vec<G2Elem>,
    /// Root-to-leaf path of `slot`.
    path_parts: Vec<(NodeId, G2Elem)>,
}

impl AbeSecretKey {
    pub fn slot(&self) -> Slot {
        self.slot
    }

    pub fn policy(&self) -> &PolicyTree {
        &self.policy
    }

    pub fn leaf_parts(&self) -> &[G2Elem] {
        &self.leaf_parts
    }

    pub fn path_parts(&self) -> &[(NodeId, G2Elem)] {
        &self.path_parts
    }

    /// Replaces the component for leaf `ordinal`; used to build mixed keys
    /// in collusion tests.
    pub fn with_leaf_part(mut self, ordinal: usize, part: G2Elem) -> Self {
        self.leaf_parts[ordinal] = part;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpdateKey {
    epoch: Epoch,
    parts: BTreeMap<NodeId, G2Elem>,
}

impl UpdateKey {
    pub fn epoch(&self) -> Epoch {
        self.epoch
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.parts.keys().copied()
    }

    pub fn parts(&self) -> &BTreeMap<NodeId, G2Elem> {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbeCiphertext {
    epoch: Epoch,
    /// `C_i = T_i^s` for each attribute in the set.
    attrs: BTreeMap<AttributeId, G1Elem>,
    /// `m * Y^s`.
    masked: GtElem,
    /// `g1^s`.
    c0: G1Elem,
    /// `W_t^s`.
    ct: G1Elem,
}

impl AbeCiphertext {
    pub fn epoch(&self) -> Epoch {
        self.epoch
    }

    pub fn attribute_set(&self) -> AttributeSet {
        self.attrs.keys().copied().collect()
    }

    pub fn attribute_parts(&self) -> &BTreeMap<AttributeId, G1Elem> {
        &self.attrs
    }

    pub fn c0(&self) -> &G1Elem {
        &self.c0
    }

    pub fn masked(&self) -> &GtElem {
        &self.masked
    }

    /// Same ciphertext with a different masked message; tampering helper
    /// for adversary strategies.
    pub fn with_masked(mut self, masked: GtElem) -> Self {
        self.masked = masked;
        self
    }
}

/// Samples `alpha` from `rng`; everything else comes from `coins`.
pub fn abe_setup<R: RngCore + ?Sized>(
    universe: &AbeUniverse,
    coins: &SharedCoins,
    rng: &mut R,
) -> (AbeMasterPublic, AbeMasterSecret) {
    let alpha = random_scalar(rng);
    let attr_secrets: Vec<Scalar> = (0..universe.attribute_count())
        .map(|i| coins.attribute_secret(i))
        .collect();
    let mut msk = AbeMasterSecret {
        alpha,
        attr_secrets,
        node_key: coins.node_key(),
        epoch_key: coins.epoch_key(),
        epoch: 0,
        w: Scalar::ONE,
    };
    msk.w = derive_scalar(&msk.epoch_key, "epoch", 0);
    let mpk = AbeMasterPublic {
        y: GtElem::generator().pow(alpha),
        bases: msk.attr_secrets.iter().map(|t| G1Elem::mul_generator(*t)).collect(),
        epoch: 0,
        w: G1Elem::mul_generator(msk.w),
        tree: universe.tree,
        arity: universe.arity,
    };
    (mpk, msk)
}

/// Moves both halves of a parameter set to epoch `to`, drawing the new
/// epoch scalar from the shared epoch key.
pub fn abe_refresh_epoch(
    mpk: &mut AbeMasterPublic,
    msk: &mut AbeMasterSecret,
    to: Epoch,
) -> Result<(), AbeError> {
    if to < msk.epoch {
        return Err(AbeError::EpochRegression {
            from: msk.epoch,
            to,
        });
    }
    msk.epoch = to;
    msk.w = derive_scalar(&msk.epoch_key, "epoch", to);
    mpk.epoch = to;
    mpk.w = G1Elem::mul_generator(msk.w);
    Ok(())
}

fn share<R: RngCore + ?Sized>(
    node: &PolicyNode,
    secret: Scalar,
    msk: &AbeMasterSecret,
    rng: &mut R,
    out: &mut Vec<G2Elem>,
) -> Result<(), AbeError> {
    match node {
        PolicyNode::Leaf(attr) => {
            let t = msk
                .attr_secrets
                .get(attr.0 as usize)
                .ok_or(AbeError::UnknownAttribute(*attr))?;
            let t_inv = t.invert().expect("attribute secrets are non-zero");
            out.push(G2Elem::mul_generator(secret * t_inv));
            Ok(())
        }
        PolicyNode::Gate { threshold, children } => {
            let mut coeffs = vec![secret];
            coeffs.extend((1..*threshold).map(|_| random_scalar(rng)));
            for (j, child) in children.iter().enumerate() {
                let x = Scalar::from_u64(j as u64 + 1);
                let value = coeffs.iter().rev().fold(Scalar::ZERO, |acc, c| acc * x + *c);
                share(child, value, msk, rng, out)?;
            }
            Ok(())
        }
    }
}

/// Fresh `beta_S` per call, so components of distinct keys never combine.
pub fn abe_keygen<R: RngCore + ?Sized>(
    slot: Slot,
    policy: &PolicyTree,
    msk: &AbeMasterSecret,
    mpk: &AbeMasterPublic,
    rng: &mut R,
) -> Result<AbeSecretKey, AbeError> {
    let path = mpk.tree.path(slot)?;
    let beta = random_scalar(rng);
    let gamma = msk.alpha - beta;
    let mut leaf_parts = Vec::with_capacity(policy.leaves().len());
    share(policy.root(), beta, msk, rng, &mut leaf_parts)?;
    let path_parts = path
        .into_iter()
        .map(|node| (node, G2Elem::mul_generator(gamma + msk.node_secret(node))))
        .collect();
    Ok(AbeSecretKey {
        slot,
        policy: policy.clone(),
        leaf_parts,
        path_parts,
    })
}

/// One component per node of the cover of `slots`; empty when `slots` is.
pub fn abe_keyupdate(
    slots: &BTreeSet<Slot>,
    epoch: Epoch,
    msk: &AbeMasterSecret,
    mpk: &AbeMasterPublic,
) -> Result<UpdateKey, AbeError> {
    if epoch != msk.epoch {
        return Err(AbeError::StaleEpoch {
            requested: epoch,
            current: msk.epoch,
        });
    }
    let parts = mpk
        .tree
        .cover(slots)?
        .into_iter()
        .map(|node| (node, G2Elem::mul_generator(msk.w - msk.node_secret(node))))
        .collect();
    Ok(UpdateKey { epoch, parts })
}

pub fn abe_encrypt<R: RngCore + ?Sized>(
    epoch: Epoch,
    attrs: &AttributeSet,
    m: &GtElem,
    mpk: &AbeMasterPublic,
    rng: &mut R,
) -> Result<AbeCiphertext, AbeError> {
    if epoch != mpk.epoch {
        return Err(AbeError::StaleEpoch {
            requested: epoch,
            current: mpk.epoch,
        });
    }
    let s = random_scalar(rng);
    let parts = attrs
        .iter()
        .map(|a| {
            let base = mpk
                .bases
                .get(a.0 as usize)
                .ok_or(AbeError::UnknownAttribute(*a))?;
            Ok((*a, *base * s))
        })
        .collect::<Result<_, AbeError>>()?;
    Ok(AbeCiphertext {
        epoch,
        attrs: parts,
        masked: *m * mpk.y.pow(s),
        c0: G1Elem::mul_generator(s),
        ct: mpk.w * s,
    })
}

/// Lagrange coefficient at zero for abscissa `xs[j]` over all of `xs`.
fn lagrange_at_zero(xs: &[Scalar], j: usize) -> Scalar {
    let mut num = Scalar::ONE;
    let mut den = Scalar::ONE;
    for (k, xk) in xs.iter().enumerate() {
        if k != j {
            num = num * -*xk;
            den = den * (xs[j] - *xk);
        }
    }
    num * den.invert().expect("distinct abscissae")
}

fn leaf_coefficients(w: &Witness, scale: Scalar, out: &mut Vec<(usize, Scalar)>) {
    match w {
        Witness::Leaf { ordinal } => out.push((*ordinal, scale)),
        Witness::Gate { picks } => {
            let xs: Vec<Scalar> = picks
                .iter()
                .map(|(pos, _)| Scalar::from_u64(*pos as u64 + 1))
                .collect();
            for (j, (_, child)) in picks.iter().enumerate() {
                leaf_coefficients(child, scale * lagrange_at_zero(&xs, j), out);
            }
        }
    }
}

/// `None` when the key's policy rejects the ciphertext attributes, the key's
/// path misses the update key's cover, or the epochs differ. A ciphertext
/// made under a sibling parameter set decrypts to an unrelated element
/// rather than `None`; callers validate against published digests.
pub fn abe_decrypt(
    ct: &AbeCiphertext,
    sk: &AbeSecretKey,
    uk: &UpdateKey,
) -> Option<GtElem> {
    if ct.epoch != uk.epoch {
        return None;
    }
    let witness = sk.policy.satisfy(&ct.attribute_set())?;
    let (node_part, update_part) = sk
        .path_parts
        .iter()
        .find_map(|(node, p)| uk.parts.get(node).map(|u| (*p, *u)))?;

    let mut coeffs = Vec::new();
    leaf_coefficients(&witness, Scalar::ONE, &mut coeffs);
    let mut terms: Vec<(G1Elem, G2Elem)> = coeffs
        .into_iter()
        .map(|(ordinal, lambda)| {
            let attr = sk.policy.leaf_attribute(ordinal);
            (ct.attrs[&attr] * lambda, sk.leaf_parts[ordinal])
        })
        .collect();
    terms.push((ct.c0, node_part + update_part));
    terms.push((-ct.ct, G2Elem::generator()));
    Some(ct.masked / multi_pairing(&terms))
}

impl Encode for AbeMasterPublic {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.y);
        w.put_u32(self.tree.depth());
        w.put_u64(self.epoch);
        w.put(&self.w);
        w.put_u32(self.arity as u32);
        w.put_len(self.bases.len());
        self.bases.iter().for_each(|b| w.put(b));
    }
}

impl Decode for AbeMasterPublic {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let y = r.get()?;
        let tree = IdentityTree::new(r.u32()?).map_err(|_| WireError::invalid("tree depth"))?;
        let epoch = r.u64()?;
        let w = r.get()?;
        let arity = r.u32()? as usize;
        let n = r.len()?;
        if n < arity.saturating_mul(2) || n > r.remaining() / 52 {
            return Err(WireError::invalid("attribute bases"));
        }
        let bases = (0..n).map(|_| r.get()).collect::<Result<_, _>>()?;
        Ok(Self {
            y,
            bases,
            epoch,
            w,
            tree,
            arity,
        })
    }
}

impl Encode for AbeSecretKey {
    fn encode(&self, w: &mut Writer) {
        w.put_u32(self.slot);
        w.put(&self.policy);
        w.put_len(self.leaf_parts.len());
        self.leaf_parts.iter().for_each(|p| w.put(p));
        w.put_len(self.path_parts.len());
        for (node, p) in &self.path_parts {
            w.put_u32(*node);
            w.put(p);
        }
    }
}

impl Decode for AbeSecretKey {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let slot = r.u32()?;
        let policy: PolicyTree = r.get()?;
        let n = r.len()?;
        if n != policy.leaves().len() {
            return Err(WireError::invalid("key leaf count"));
        }
        let leaf_parts = (0..n).map(|_| r.get()).collect::<Result<_, _>>()?;
        let m = r.len()?;
        if m > MAX_TREE_DEPTH as usize + 1 {
            return Err(WireError::invalid("key path length"));
        }
        let path_parts: Vec<(NodeId, G2Elem)> = (0..m)
            .map(|_| Ok((r.u32()?, r.get()?)))
            .collect::<Result<_, WireError>>()?;
        // Root first, each node the parent of the next, ending at the leaf.
        let depth = m.checked_sub(1).ok_or(WireError::invalid("key path"))? as u32;
        if slot >= (1 << depth) {
            return Err(WireError::invalid("key path"));
        }
        let leaf = (1 << depth) + slot;
        let chained = path_parts
            .iter()
            .enumerate()
            .all(|(i, (node, _))| *node == leaf >> (depth - i as u32));
        if !chained {
            return Err(WireError::invalid("key path"));
        }
        Ok(Self {
            slot,
            policy,
            leaf_parts,
            path_parts,
        })
    }
}

impl Encode for UpdateKey {
    fn encode(&self, w: &mut Writer) {
        w.put_u64(self.epoch);
        w.put_len(self.parts.len());
        for (node, p) in &self.parts {
            w.put_u32(*node);
            w.put(p);
        }
    }
}

impl Decode for UpdateKey {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let epoch = r.u64()?;
        let n = r.len()?;
        if n > r.remaining() / 104 {
            return Err(WireError::invalid("update key size"));
        }
        let mut parts = BTreeMap::new();
        let mut last = None;
        for _ in 0..n {
            let node = r.u32()?;
            if last.is_some_and(|l| node <= l) {
                return Err(WireError::Order("update key nodes"));
            }
            last = Some(node);
            parts.insert(node, r.get()?);
        }
        Ok(Self { epoch, parts })
    }
}

impl Encode for AbeCiphertext {
    fn encode(&self, w: &mut Writer) {
        w.put_u64(self.epoch);
        w.put(&self.masked);
        w.put(&self.c0);
        w.put(&self.ct);
        w.put_len(self.attrs.len());
        for (a, c) in &self.attrs {
            w.put_u32(a.0);
            w.put(c);
        }
    }
}

impl Decode for AbeCiphertext {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let epoch = r.u64()?;
        let masked = r.get()?;
        let c0 = r.get()?;
        let ct = r.get()?;
        let n = r.len()?;
        if n > r.remaining() / 56 {
            return Err(WireError::invalid("ciphertext attributes"));
        }
        let mut attrs = BTreeMap::new();
        let mut last = None;
        for _ in 0..n {
            let a = AttributeId(r.u32()?);
            if last.is_some_and(|l| a <= l) {
                return Err(WireError::Order("ciphertext attributes"));
            }
            last = Some(a);
            attrs.insert(a, r.get()?);
        }
        Ok(Self {
            epoch,
            attrs,
            masked,
            c0,
            ct,
        })
    }
}
