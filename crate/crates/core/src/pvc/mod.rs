//! Publicly verifiable outsourced computation with a key distribution
//! center (KDC).
//!
//! The KDC runs [`setup`], [`fninit`], [`register`], [`certify`] and
//! [`revoke`]. A delegating client runs [`probgen`] and later [`retrieve`];
//! servers run [`compute`]; anyone holding the public parameters and the
//! verification key can run [`blindverify`].
//!
//! Each problem instance encrypts two fresh random messages under the
//! policy of `F` (parameter set 0) and of its complement (parameter set 1).
//! Exactly one of them is recoverable for any input; its digest tells a
//! verifier that the server did the work, while the private retrieval bit
//! tells the client which of the two it was.

pub mod sig;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{CryptoRng, Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bilinear::{hash_output, random_gt, sha256, Digest, GtElem};
use crate::circuits::{
    attr_encode, AttributeId, BoolFormula, CircuitError, InputAssignment, PolicyNode, PolicyTree,
};
use crate::rkpabe::{
    abe_decrypt, abe_encrypt, abe_keygen, abe_keyupdate, abe_refresh_epoch, abe_setup,
    AbeCiphertext, AbeError, AbeMasterPublic, AbeMasterSecret, AbeSecretKey, AbeUniverse, Epoch,
    IdentityTree, SharedCoins, Slot, UpdateKey,
};
use crate::wire::{Decode, Encode, Reader, WireError, WireMessage, Writer};

pub use sig::{PublicSigKey, Signature, SigningSecret};

macro_rules! name_type {
    ($name:ident, $what:literal) => {
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(name: impl Into<String>) -> Self {
                $name(name.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl Encode for $name {
            fn encode(&self, w: &mut Writer) {
                w.put_str(&self.0);
            }
        }

        impl Decode for $name {
            fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
                let s = r.string()?;
                if s.is_empty() {
                    return Err(WireError::invalid($what));
                }
                Ok($name(s))
            }
        }
    };
}

name_type!(ServerId, "server id");
name_type!(FunctionId, "function id");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PvcError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Abe(#[from] AbeError),
    #[error("server {0} is already registered")]
    DuplicateServer(ServerId),
    #[error("identity tree is full ({0} slots)")]
    Capacity(u32),
    #[error("server {0} is not registered")]
    UnknownServer(ServerId),
    #[error("function has arity {arity}, parameters support at most {max}")]
    ArityTooLarge { arity: usize, max: usize },
    #[error("input has {found} bits, function takes {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("evaluation key is for epoch {key}, input was encoded at epoch {input}")]
    StaleEpoch { key: Epoch, input: Epoch },
    #[error("values belong to different functions")]
    FunctionMismatch,
    #[error("all {0} function tags are in use")]
    FunctionCapacity(usize),
}

/// What a server's signature covers. `OutputOnly` signs the two output
/// slots and the server identity; `OutputWithVk` additionally binds the
/// digest of the verification key, so a signed output cannot be replayed
/// against a different problem instance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignatureBinding {
    #[default]
    OutputOnly,
    OutputWithVk,
}

/// How ciphertexts relate to the function they were produced for.
/// `Shared` uses one attribute universe for all functions, so a key issued
/// for one function also opens ciphertexts of another whenever its policy
/// holds. `Tagged` gives each function a tag attribute that every ciphertext
/// carries and every key requires.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionBinding {
    #[default]
    Shared,
    Tagged,
}

#[derive(Clone, Copy, Debug)]
pub struct SetupParams {
    pub depth: u32,
    /// Largest function arity the attribute universe supports.
    pub max_arity: usize,
    /// Tag attributes reserved under [`FunctionBinding::Tagged`].
    pub max_functions: usize,
    pub binding: SignatureBinding,
    pub function_binding: FunctionBinding,
}

impl Default for SetupParams {
    fn default() -> Self {
        Self {
            depth: 8,
            max_arity: 16,
            max_functions: 16,
            binding: SignatureBinding::OutputOnly,
            function_binding: FunctionBinding::Shared,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Registration {
    pub slot: Slot,
    pub key: PublicSigKey,
}

/// Both ABE public parameter sets, the server registry and the epoch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicParams {
    mpk0: AbeMasterPublic,
    mpk1: AbeMasterPublic,
    registry: BTreeMap<ServerId, Registration>,
    /// Bumped on every registration.
    registry_version: u64,
    binding: SignatureBinding,
    function_binding: FunctionBinding,
}

impl PublicParams {
    pub fn mpk0(&self) -> &AbeMasterPublic {
        &self.mpk0
    }

    pub fn mpk1(&self) -> &AbeMasterPublic {
        &self.mpk1
    }

    /// Current epoch; starts at 0 and increases by one per revocation.
    pub fn epoch(&self) -> Epoch {
        self.mpk0.epoch()
    }

    pub fn registry(&self) -> &BTreeMap<ServerId, Registration> {
        &self.registry
    }

    pub fn registration(&self, server: &ServerId) -> Option<&Registration> {
        self.registry.get(server)
    }

    pub fn registry_version(&self) -> u64 {
        self.registry_version
    }

    pub fn binding(&self) -> SignatureBinding {
        self.binding
    }

    pub fn function_binding(&self) -> FunctionBinding {
        self.function_binding
    }

    pub fn tree(&self) -> &IdentityTree {
        self.mpk0.tree()
    }

    pub fn max_arity(&self) -> usize {
        self.mpk0.arity()
    }
}

pub struct MasterSecret {
    msk0: AbeMasterSecret,
    msk1: AbeMasterSecret,
    next_slot: Slot,
    next_tag: usize,
    universe: AbeUniverse,
}

impl fmt::Debug for MasterSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MasterSecret")
            .field("next_slot", &self.next_slot)
            .field("next_tag", &self.next_tag)
            .finish_non_exhaustive()
    }
}

/// KDC-side state for one outsourced function.
#[derive(Clone, Debug)]
pub struct FunctionRecord {
    id: FunctionId,
    formula: BoolFormula,
    complement: BoolFormula,
    tag: Option<AttributeId>,
    policy: PolicyTree,
    complement_policy: PolicyTree,
    certified: BTreeMap<ServerId, Slot>,
    issued: BTreeMap<ServerId, (AbeSecretKey, AbeSecretKey)>,
    update_keys: (UpdateKey, UpdateKey),
}

impl FunctionRecord {
    pub fn id(&self) -> &FunctionId {
        &self.id
    }

    pub fn formula(&self) -> &BoolFormula {
        &self.formula
    }

    pub fn complement(&self) -> &BoolFormula {
        &self.complement
    }

    pub fn arity(&self) -> usize {
        self.formula.arity()
    }

    /// Tag attribute under [`FunctionBinding::Tagged`].
    pub fn tag(&self) -> Option<AttributeId> {
        self.tag
    }

    pub fn is_certified(&self, server: &ServerId) -> bool {
        self.certified.contains_key(server)
    }

    /// The published certified-server list `L_F`.
    pub fn certified_list(&self) -> CertifiedList {
        CertifiedList {
            function: self.id.clone(),
            servers: self.certified.keys().cloned().collect(),
        }
    }

    /// Update keys for the current certified list and epoch. They are safe
    /// to publish: only keys whose path meets the cover can use them.
    pub fn update_keys(&self) -> (&UpdateKey, &UpdateKey) {
        (&self.update_keys.0, &self.update_keys.1)
    }

    /// The public delegation key `PK_F`: a snapshot of the public
    /// parameters tagged with this function.
    pub fn delegation_key(&self, pp: &PublicParams) -> FunctionKey {
        FunctionKey {
            function: self.id.clone(),
            arity: self.arity(),
            tag: self.tag,
            pp: pp.clone(),
        }
    }

    /// The current evaluation key of a certified server.
    pub fn evaluation_key(&self, server: &ServerId) -> Option<EvaluationKey> {
        self.issued.get(server).map(|(sk0, sk1)| EvaluationKey {
            function: self.id.clone(),
            server: server.clone(),
            sk0: sk0.clone(),
            sk1: sk1.clone(),
            uk0: self.update_keys.0.clone(),
            uk1: self.update_keys.1.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertifiedList {
    pub function: FunctionId,
    pub servers: BTreeSet<ServerId>,
}

impl CertifiedList {
    pub fn contains(&self, server: &ServerId) -> bool {
        self.servers.contains(server)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionKey {
    pub function: FunctionId,
    pub arity: usize,
    pub tag: Option<AttributeId>,
    pub pp: PublicParams,
}

pub struct ServerKey {
    id: ServerId,
    secret: SigningSecret,
    binding: SignatureBinding,
}

impl ServerKey {
    pub fn id(&self) -> &ServerId {
        &self.id
    }

    pub fn public(&self) -> PublicSigKey {
        self.secret.public()
    }

    fn sign(&self, msg: &[u8]) -> Signature {
        self.secret.sign(msg)
    }
}

impl fmt::Debug for ServerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ServerKey").field("id", &self.id).finish_non_exhaustive()
    }
}

/// `EK_{F,S}`: policy keys for `F` and its complement plus the matching
/// update keys.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvaluationKey {
    pub function: FunctionId,
    pub server: ServerId,
    pub sk0: AbeSecretKey,
    pub sk1: AbeSecretKey,
    pub uk0: UpdateKey,
    pub uk1: UpdateKey,
}

impl EvaluationKey {
    pub fn epoch(&self) -> Epoch {
        self.uk0.epoch()
    }

    /// Same policy keys with newer published update keys.
    pub fn with_update_keys(mut self, uk0: UpdateKey, uk1: UpdateKey) -> Self {
        self.uk0 = uk0;
        self.uk1 = uk1;
        self
    }
}

/// `sigma_x`: two ciphertexts over the same attribute set. Which slot holds
/// the parameter-set-0 ciphertext is decided by the retrieval bit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedInput {
    pub function: FunctionId,
    pub epoch: Epoch,
    pub slot1: AbeCiphertext,
    pub slot2: AbeCiphertext,
}

/// `VK_{F,x}`: digests of the two slot messages, in slot order, plus the
/// registry version seen at encoding time. Verification always consults the
/// live registry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationKey {
    pub function: FunctionId,
    pub epoch: Epoch,
    pub h1: Digest,
    pub h2: Digest,
    pub registry_version: u64,
}

impl VerificationKey {
    pub fn digest(&self) -> Digest {
        Digest(sha256(&[&self.to_wire()]))
    }
}

/// Client-private bit: `false` puts the parameter-set-0 ciphertext in slot 1.
/// It has no wire encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RetrievalBit(bool);

impl RetrievalBit {
    pub fn new(b: bool) -> Self {
        RetrievalBit(b)
    }

    pub fn value(&self) -> bool {
        self.0
    }
}

/// `sigma_y`: one decrypted-or-absent value per slot, the claimed server
/// and its signature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedOutput {
    pub e1: Option<GtElem>,
    pub e2: Option<GtElem>,
    pub server: ServerId,
    pub signature: Signature,
}

impl EncodedOutput {
    pub fn values(&self) -> [Option<&GtElem>; 2] {
        [self.e1.as_ref(), self.e2.as_ref()]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Token {
    Accept(ServerId),
    /// `None` when the output cannot be attributed to a certified server.
    Reject(Option<ServerId>),
}

impl Token {
    pub fn is_accept(&self) -> bool {
        matches!(self, Token::Accept(_))
    }

    pub fn server(&self) -> Option<&ServerId> {
        match self {
            Token::Accept(s) | Token::Reject(Some(s)) => Some(s),
            Token::Reject(None) => None,
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Accept(s) => write!(f, "accept({s})"),
            Token::Reject(Some(s)) => write!(f, "reject({s})"),
            Token::Reject(None) => f.write_str("reject(-)"),
        }
    }
}

pub fn setup<R: RngCore + CryptoRng + ?Sized>(
    params: &SetupParams,
    rng: &mut R,
) -> Result<(PublicParams, MasterSecret), PvcError> {
    let tags = match params.function_binding {
        FunctionBinding::Shared => 0,
        FunctionBinding::Tagged => params.max_functions,
    };
    let universe = AbeUniverse::with_extra(params.max_arity, tags, params.depth)?;
    let coins = SharedCoins::random(rng);
    let (mpk0, msk0) = abe_setup(&universe, &coins, rng);
    let (mpk1, msk1) = abe_setup(&universe, &coins, rng);
    let pp = PublicParams {
        mpk0,
        mpk1,
        registry: BTreeMap::new(),
        registry_version: 0,
        binding: params.binding,
        function_binding: params.function_binding,
    };
    let msk = MasterSecret {
        msk0,
        msk1,
        next_slot: 0,
        next_tag: 0,
        universe,
    };
    Ok((pp, msk))
}

fn tagged(tag: Option<AttributeId>, policy: PolicyTree) -> Result<PolicyTree, CircuitError> {
    let Some(tag) = tag else { return Ok(policy) };
    PolicyTree::new(PolicyNode::Gate {
        threshold: 2,
        children: vec![PolicyNode::Leaf(tag), policy.root().clone()],
    })
}

/// Starts a record for `formula` with an empty certified list, assigning
/// the next tag attribute under [`FunctionBinding::Tagged`].
pub fn fninit(
    pp: &PublicParams,
    msk: &mut MasterSecret,
    id: FunctionId,
    formula: BoolFormula,
) -> Result<FunctionRecord, PvcError> {
    if formula.arity() > pp.max_arity() {
        return Err(PvcError::ArityTooLarge {
            arity: formula.arity(),
            max: pp.max_arity(),
        });
    }
    let tag = match pp.function_binding {
        FunctionBinding::Shared => None,
        FunctionBinding::Tagged => Some(
            msk.universe
                .extra_attribute(msk.next_tag)
                .ok_or(PvcError::FunctionCapacity(msk.universe.extra))?,
        ),
    };
    let complement = formula.complement();
    let policy = tagged(tag, formula.to_policy()?)?;
    let complement_policy = tagged(tag, complement.to_policy()?)?;
    let none = BTreeSet::new();
    let update_keys = (
        abe_keyupdate(&none, pp.epoch(), &msk.msk0, &pp.mpk0)?,
        abe_keyupdate(&none, pp.epoch(), &msk.msk1, &pp.mpk1)?,
    );
    if tag.is_some() {
        msk.next_tag += 1;
    }
    Ok(FunctionRecord {
        id,
        formula,
        complement,
        tag,
        policy,
        complement_policy,
        certified: BTreeMap::new(),
        issued: BTreeMap::new(),
        update_keys,
    })
}

/// Issues a signing key and assigns the next identity-tree slot.
pub fn register<R: RngCore + CryptoRng + ?Sized>(
    pp: &mut PublicParams,
    msk: &mut MasterSecret,
    id: ServerId,
    rng: &mut R,
) -> Result<ServerKey, PvcError> {
    if pp.registry.contains_key(&id) {
        return Err(PvcError::DuplicateServer(id));
    }
    let capacity = pp.tree().capacity();
    if msk.next_slot >= capacity {
        return Err(PvcError::Capacity(capacity));
    }
    let secret = SigningSecret::generate(rng);
    pp.registry.insert(
        id.clone(),
        Registration {
            slot: msk.next_slot,
            key: secret.public(),
        },
    );
    msk.next_slot += 1;
    pp.registry_version += 1;
    Ok(ServerKey {
        id,
        secret,
        binding: pp.binding,
    })
}

fn refresh_update_keys(
    pp: &PublicParams,
    msk: &MasterSecret,
    rec: &mut FunctionRecord,
) -> Result<(), PvcError> {
    let slots: BTreeSet<Slot> = rec.certified.values().copied().collect();
    rec.update_keys = (
        abe_keyupdate(&slots, pp.epoch(), &msk.msk0, &pp.mpk0)?,
        abe_keyupdate(&slots, pp.epoch(), &msk.msk1, &pp.mpk1)?,
    );
    Ok(())
}

/// Adds `server` to `L_F` and issues its evaluation key. The update keys
/// are recomputed after the insertion so that they cover the new server.
pub fn certify<R: RngCore + ?Sized>(
    pp: &PublicParams,
    msk: &MasterSecret,
    rec: &mut FunctionRecord,
    server: &ServerId,
    rng: &mut R,
) -> Result<EvaluationKey, PvcError> {
    let slot = pp
        .registration(server)
        .ok_or_else(|| PvcError::UnknownServer(server.clone()))?
        .slot;
    let sk0 = abe_keygen(slot, &rec.policy, &msk.msk0, &pp.mpk0, rng)?;
    let sk1 = abe_keygen(slot, &rec.complement_policy, &msk.msk1, &pp.mpk1, rng)?;
    rec.certified.insert(server.clone(), slot);
    rec.issued.insert(server.clone(), (sk0, sk1));
    refresh_update_keys(pp, msk, rec)?;
    Ok(rec.evaluation_key(server).expect("just issued"))
}

pub fn probgen<R: RngCore + ?Sized>(
    x: &InputAssignment,
    pk: &FunctionKey,
    rng: &mut R,
) -> Result<(EncodedInput, VerificationKey, RetrievalBit), PvcError> {
    let m0 = random_gt(rng);
    let m1 = random_gt(rng);
    let b = RetrievalBit(rng.gen());
    probgen_with(x, pk, &m0, &m1, b, rng)
}

/// [`probgen`] with caller-chosen messages and retrieval bit; `m0` is the
/// message under the policy of `F`.
pub fn probgen_with<R: RngCore + ?Sized>(
    x: &InputAssignment,
    pk: &FunctionKey,
    m0: &GtElem,
    m1: &GtElem,
    b: RetrievalBit,
    rng: &mut R,
) -> Result<(EncodedInput, VerificationKey, RetrievalBit), PvcError> {
    if x.len() != pk.arity {
        return Err(PvcError::ArityMismatch {
            expected: pk.arity,
            found: x.len(),
        });
    }
    let epoch = pk.pp.epoch();
    let mut attrs = attr_encode(x);
    attrs.extend(pk.tag);
    let ct_f = abe_encrypt(epoch, &attrs, m0, &pk.pp.mpk0, rng)?;
    let ct_fbar = abe_encrypt(epoch, &attrs, m1, &pk.pp.mpk1, rng)?;
    let (d0, d1) = (hash_output(m0), hash_output(m1));
    let ((slot1, h1), (slot2, h2)) = if b.0 {
        ((ct_fbar, d1), (ct_f, d0))
    } else {
        ((ct_f, d0), (ct_fbar, d1))
    };
    let sigma_x = EncodedInput {
        function: pk.function.clone(),
        epoch,
        slot1,
        slot2,
    };
    let vk = VerificationKey {
        function: pk.function.clone(),
        epoch,
        h1,
        h2,
        registry_version: pk.pp.registry_version,
    };
    Ok((sigma_x, vk, b))
}

/// Bytes covered by a server signature. Absent slot values are written as
/// an explicit marker.
pub fn output_message(
    e1: Option<&GtElem>,
    e2: Option<&GtElem>,
    server: &ServerId,
    vk_binding: Option<Digest>,
) -> Vec<u8> {
    let mut w = Writer::new();
    w.put_str("pvckdc/output");
    w.put(&e1.copied());
    w.put(&e2.copied());
    w.put(server);
    w.put(&vk_binding);
    w.into_bytes()
}

fn binding_digest(binding: SignatureBinding, vk: &VerificationKey) -> Option<Digest> {
    match binding {
        SignatureBinding::OutputOnly => None,
        SignatureBinding::OutputWithVk => Some(vk.digest()),
    }
}

/// Signs arbitrary slot values as `sk`'s identity.
pub fn sign_output(
    e1: Option<GtElem>,
    e2: Option<GtElem>,
    sk: &ServerKey,
    vk: &VerificationKey,
) -> EncodedOutput {
    let msg = output_message(e1.as_ref(), e2.as_ref(), &sk.id, binding_digest(sk.binding, vk));
    EncodedOutput {
        e1,
        e2,
        server: sk.id.clone(),
        signature: sk.sign(&msg),
    }
}

fn validated(candidate: Option<GtElem>, digest: &Digest) -> Option<GtElem> {
    candidate.filter(|m| hash_output(m) == *digest)
}

pub fn compute(
    sigma_x: &EncodedInput,
    vk: &VerificationKey,
    ek: &EvaluationKey,
    sk: &ServerKey,
) -> Result<EncodedOutput, PvcError> {
    if sigma_x.function != ek.function || vk.function != ek.function {
        return Err(PvcError::FunctionMismatch);
    }
    if ek.epoch() != sigma_x.epoch || ek.uk1.epoch() != sigma_x.epoch {
        return Err(PvcError::StaleEpoch {
            key: ek.epoch(),
            input: sigma_x.epoch,
        });
    }
    let mut e1 = validated(abe_decrypt(&sigma_x.slot1, &ek.sk0, &ek.uk0), &vk.h1);
    let mut e2 = validated(abe_decrypt(&sigma_x.slot2, &ek.sk1, &ek.uk1), &vk.h2);
    if e1.is_none() && e2.is_none() {
        e1 = validated(abe_decrypt(&sigma_x.slot1, &ek.sk1, &ek.uk1), &vk.h1);
        e2 = validated(abe_decrypt(&sigma_x.slot2, &ek.sk0, &ek.uk0), &vk.h2);
    }
    Ok(sign_output(e1, e2, sk, vk))
}

/// Checks attribution and validity without learning which of `F` and its
/// complement was satisfied.
pub fn blindverify(
    pp: &PublicParams,
    sigma_y: &EncodedOutput,
    vk: &VerificationKey,
    certified: &CertifiedList,
) -> (Option<GtElem>, Token) {
    let server = &sigma_y.server;
    let Some(reg) = pp.registration(server) else {
        return (None, Token::Reject(None));
    };
    if !certified.contains(server) {
        return (None, Token::Reject(None));
    }
    let msg = output_message(
        sigma_y.e1.as_ref(),
        sigma_y.e2.as_ref(),
        server,
        binding_digest(pp.binding, vk),
    );
    if !reg.key.verify(&msg, &sigma_y.signature) {
        return (None, Token::Reject(None));
    }
    if let Some(m) = validated(sigma_y.e1, &vk.h1) {
        return (Some(m), Token::Accept(server.clone()));
    }
    if let Some(m) = validated(sigma_y.e2, &vk.h2) {
        return (Some(m), Token::Accept(server.clone()));
    }
    (None, Token::Reject(Some(server.clone())))
}

/// `Some(true)` when the accepted value is the message under `F`'s policy,
/// `Some(false)` for the complement's, `None` otherwise.
pub fn retrieve(
    mu: Option<&GtElem>,
    token: &Token,
    vk: &VerificationKey,
    b: RetrievalBit,
) -> Option<bool> {
    if !token.is_accept() {
        return None;
    }
    let d = hash_output(mu?);
    let (d0, d1) = if b.0 { (vk.h2, vk.h1) } else { (vk.h1, vk.h2) };
    if d == d0 {
        Some(true)
    } else if d == d1 {
        Some(false)
    } else {
        None
    }
}

pub fn verify(
    pp: &PublicParams,
    sigma_y: &EncodedOutput,
    vk: &VerificationKey,
    certified: &CertifiedList,
    b: RetrievalBit,
) -> (Option<bool>, Token) {
    let (mu, token) = blindverify(pp, sigma_y, vk, certified);
    (retrieve(mu.as_ref(), &token, vk, b), token)
}

/// Acts on a reject token naming a certified server: removes it from
/// `L_F`, advances the epoch and returns fresh evaluation keys for every
/// remaining server. Returns `None`, changing nothing, for accept tokens,
/// anonymous rejects, and servers not in `L_F`.
///
/// The epoch is global, so records of other functions need [`refresh`]
/// afterwards.
pub fn revoke(
    pp: &mut PublicParams,
    msk: &mut MasterSecret,
    token: &Token,
    rec: &mut FunctionRecord,
) -> Result<Option<Vec<EvaluationKey>>, PvcError> {
    let server = match token {
        Token::Reject(Some(s)) if rec.is_certified(s) => s.clone(),
        _ => return Ok(None),
    };
    rec.certified.remove(&server);
    rec.issued.remove(&server);
    let next = pp.epoch() + 1;
    abe_refresh_epoch(&mut pp.mpk0, &mut msk.msk0, next)?;
    abe_refresh_epoch(&mut pp.mpk1, &mut msk.msk1, next)?;
    refresh(pp, msk, rec).map(Some)
}

/// Recomputes `rec`'s update keys for the current epoch and returns the
/// reissued evaluation keys of its certified servers.
pub fn refresh(
    pp: &PublicParams,
    msk: &MasterSecret,
    rec: &mut FunctionRecord,
) -> Result<Vec<EvaluationKey>, PvcError> {
    refresh_update_keys(pp, msk, rec)?;
    Ok(rec
        .certified
        .keys()
        .filter_map(|s| rec.evaluation_key(s))
        .collect())
}

impl Encode for Registration {
    fn encode(&self, w: &mut Writer) {
        w.put_u32(self.slot);
        w.put(&self.key);
    }
}

impl Decode for Registration {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Registration {
            slot: r.u32()?,
            key: r.get()?,
        })
    }
}

impl Encode for FunctionBinding {
    fn encode(&self, w: &mut Writer) {
        w.put_u8(match self {
            FunctionBinding::Shared => 0,
            FunctionBinding::Tagged => 1,
        });
    }
}

impl Decode for FunctionBinding {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        match r.u8()? {
            0 => Ok(FunctionBinding::Shared),
            1 => Ok(FunctionBinding::Tagged),
            _ => Err(WireError::invalid("function binding")),
        }
    }
}

impl Encode for SignatureBinding {
    fn encode(&self, w: &mut Writer) {
        w.put_u8(match self {
            SignatureBinding::OutputOnly => 0,
            SignatureBinding::OutputWithVk => 1,
        });
    }
}

impl Decode for SignatureBinding {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        match r.u8()? {
            0 => Ok(SignatureBinding::OutputOnly),
            1 => Ok(SignatureBinding::OutputWithVk),
            _ => Err(WireError::invalid("signature binding")),
        }
    }
}

fn encode_map<K: Encode, V: Encode>(map: &BTreeMap<K, V>, w: &mut Writer) {
    w.put_len(map.len());
    for (k, v) in map {
        w.put(k);
        w.put(v);
    }
}

fn decode_map<K: Decode + Ord, V: Decode>(
    r: &mut Reader<'_>,
    what: &'static str,
) -> Result<BTreeMap<K, V>, WireError> {
    let n = r.len()?;
    if n > r.remaining() {
        return Err(WireError::invalid(what));
    }
    let mut map = BTreeMap::new();
    for _ in 0..n {
        let k: K = r.get()?;
        if map.last_key_value().is_some_and(|(last, _)| &k <= last) {
            return Err(WireError::Order(what));
        }
        let v = r.get()?;
        map.insert(k, v);
    }
    Ok(map)
}

impl Encode for PublicParams {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.mpk0);
        w.put(&self.mpk1);
        w.put_u64(self.registry_version);
        w.put(&self.binding);
        w.put(&self.function_binding);
        encode_map(&self.registry, w);
    }
}

impl Decode for PublicParams {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let mpk0: AbeMasterPublic = r.get()?;
        let mpk1: AbeMasterPublic = r.get()?;
        if mpk0.bases() != mpk1.bases()
            || mpk0.epoch_element() != mpk1.epoch_element()
            || mpk0.epoch() != mpk1.epoch()
            || mpk0.tree() != mpk1.tree()
        {
            return Err(WireError::invalid("paired parameter sets"));
        }
        Ok(PublicParams {
            mpk0,
            mpk1,
            registry_version: r.u64()?,
            binding: r.get()?,
            function_binding: r.get()?,
            registry: decode_map(r, "registry")?,
        })
    }
}

impl WireMessage for PublicParams {
    const TAG: u8 = 0x10;
}

impl Encode for FunctionKey {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.function);
        w.put_u32(self.arity as u32);
        w.put(&self.tag);
        w.put(&self.pp);
    }
}

impl Decode for FunctionKey {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let function = r.get()?;
        let arity = r.u32()? as usize;
        let tag: Option<AttributeId> = r.get()?;
        let pp: PublicParams = r.get()?;
        if arity > pp.max_arity() {
            return Err(WireError::invalid("function arity"));
        }
        let literals = AttributeId::universe_size(pp.max_arity());
        let tag_ok = match (pp.function_binding, tag) {
            (FunctionBinding::Shared, None) => true,
            (FunctionBinding::Tagged, Some(t)) => {
                t.0 >= literals && (t.0 as usize) < pp.mpk0.bases().len()
            }
            _ => false,
        };
        if !tag_ok {
            return Err(WireError::invalid("function tag"));
        }
        Ok(FunctionKey {
            function,
            arity,
            tag,
            pp,
        })
    }
}

impl WireMessage for FunctionKey {
    const TAG: u8 = 0x11;
}

impl Encode for CertifiedList {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.function);
        w.put_len(self.servers.len());
        self.servers.iter().for_each(|s| w.put(s));
    }
}

impl Decode for CertifiedList {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let function = r.get()?;
        let n = r.len()?;
        if n > r.remaining() {
            return Err(WireError::invalid("certified list"));
        }
        let mut servers = BTreeSet::new();
        for _ in 0..n {
            let s: ServerId = r.get()?;
            if servers.last().is_some_and(|last| &s <= last) {
                return Err(WireError::Order("certified list"));
            }
            servers.insert(s);
        }
        Ok(CertifiedList { function, servers })
    }
}

impl WireMessage for CertifiedList {
    const TAG: u8 = 0x12;
}

impl Encode for EvaluationKey {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.function);
        w.put(&self.server);
        w.put(&self.sk0);
        w.put(&self.sk1);
        w.put(&self.uk0);
        w.put(&self.uk1);
    }
}

impl Decode for EvaluationKey {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let ek = EvaluationKey {
            function: r.get()?,
            server: r.get()?,
            sk0: r.get()?,
            sk1: r.get()?,
            uk0: r.get()?,
            uk1: r.get()?,
        };
        if ek.sk0.slot() != ek.sk1.slot() || ek.uk0.epoch() != ek.uk1.epoch() {
            return Err(WireError::invalid("evaluation key"));
        }
        Ok(ek)
    }
}

impl WireMessage for EvaluationKey {
    const TAG: u8 = 0x13;
}

impl Encode for EncodedInput {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.function);
        w.put_u64(self.epoch);
        w.put(&self.slot1);
        w.put(&self.slot2);
    }
}

impl Decode for EncodedInput {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let v = EncodedInput {
            function: r.get()?,
            epoch: r.u64()?,
            slot1: r.get()?,
            slot2: r.get()?,
        };
        if v.slot1.epoch() != v.epoch || v.slot2.epoch() != v.epoch {
            return Err(WireError::invalid("encoded input epoch"));
        }
        Ok(v)
    }
}

impl WireMessage for EncodedInput {
    const TAG: u8 = 0x14;
}

impl Encode for VerificationKey {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.function);
        w.put_u64(self.epoch);
        w.put(&self.h1);
        w.put(&self.h2);
        w.put_u64(self.registry_version);
    }
}

impl Decode for VerificationKey {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(VerificationKey {
            function: r.get()?,
            epoch: r.u64()?,
            h1: r.get()?,
            h2: r.get()?,
            registry_version: r.u64()?,
        })
    }
}

impl WireMessage for VerificationKey {
    const TAG: u8 = 0x15;
}

impl Encode for EncodedOutput {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.e1);
        w.put(&self.e2);
        w.put(&self.server);
        w.put(&self.signature);
    }
}

impl Decode for EncodedOutput {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(EncodedOutput {
            e1: r.get()?,
            e2: r.get()?,
            server: r.get()?,
            signature: r.get()?,
        })
    }
}

impl WireMessage for EncodedOutput {
    const TAG: u8 = 0x16;
}

impl Encode for Token {
    fn encode(&self, w: &mut Writer) {
        match self {
            Token::Accept(s) => {
                w.put_u8(1);
                w.put(s);
            }
            Token::Reject(s) => {
                w.put_u8(0);
                w.put(s);
            }
        }
    }
}

impl Decode for Token {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        match r.u8()? {
            1 => Ok(Token::Accept(r.get()?)),
            0 => Ok(Token::Reject(r.get()?)),
            _ => Err(WireError::invalid("token verdict")),
        }
    }
}

impl WireMessage for Token {
    const TAG: u8 = 0x17;
}

/// Carries the signing secret. Only the KDC's registration reply uses it.
impl Encode for ServerKey {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.id);
        w.put_bytes(&self.secret.to_bytes());
        w.put(&self.binding);
    }
}

impl Decode for ServerKey {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let id = r.get()?;
        let secret = SigningSecret::from_bytes(&r.fixed::<32>("signing secret")?);
        let binding = r.get()?;
        Ok(ServerKey { id, secret, binding })
    }
}

impl WireMessage for ServerKey {
    const TAG: u8 = 0x18;
}

#[cfg(test)]
mod tests;
