//! Prime-order bilinear group suite (BLS12-381) with canonical encodings,
//! the output hash, and deterministic randomness.
//!
//! `G1` and `G2` are written additively, `GT` multiplicatively, matching
//! the usual pairing notation `e(g1^a, g2^b) = e(g1, g2)^{ab}`.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

use blstrs::{Bls12, Compress, G1Affine, G1Projective, G2Affine, G2Prepared, G2Projective, Gt};
use ff::Field;
use group::prime::PrimeCurveAffine;
use group::{Curve, Group};
use pairing::{MillerLoopResult, MultiMillerLoop};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::wire::{Decode, Encode, Reader, WireError, Writer};

pub const SCALAR_BYTES: usize = 32;
pub const G1_BYTES: usize = 48;
pub const G2_BYTES: usize = 96;
pub const GT_BYTES: usize = 288;

/// One comb window per scalar byte.
const COMB_WINDOWS: usize = SCALAR_BYTES;

/// Element of `Z_p`.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Scalar(blstrs::Scalar);

impl Scalar {
    pub const ZERO: Scalar = Scalar(blstrs::Scalar::ZERO);
    pub const ONE: Scalar = Scalar(blstrs::Scalar::ONE);

    pub fn from_u64(v: u64) -> Self {
        Scalar(blstrs::Scalar::from(v))
    }

    pub fn is_zero(&self) -> bool {
        bool::from(self.0.is_zero())
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn invert(&self) -> Option<Scalar> {
        Option::from(self.0.invert()).map(Scalar)
    }

    pub fn to_bytes(&self) -> [u8; SCALAR_BYTES] {
        self.0.to_bytes_le()
    }

    pub fn from_bytes(bytes: &[u8; SCALAR_BYTES]) -> Option<Self> {
        Option::from(blstrs::Scalar::from_bytes_le(bytes)).map(Scalar)
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", hex::encode(&self.to_bytes()[..6]))
    }
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 + rhs.0)
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 - rhs.0)
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 * rhs.0)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

macro_rules! curve_point {
    ($name:ident, $affine:ty, $proj:ty, $len:expr, $what:literal) => {
        #[derive(Clone, Copy, PartialEq, Eq)]
        pub struct $name($affine);

        impl $name {
            pub fn generator() -> Self {
                $name(<$affine>::generator())
            }

            /// `s` times the generator, through a byte-wise comb table built
            /// on first use. Runs in variable time.
            pub fn mul_generator(s: Scalar) -> Self {
                static COMB: OnceLock<Vec<$affine>> = OnceLock::new();
                let table = COMB.get_or_init(|| {
                    let mut points = Vec::with_capacity(COMB_WINDOWS * 255);
                    let mut base = <$proj>::generator();
                    for _ in 0..COMB_WINDOWS {
                        let mut acc = base;
                        for _ in 1..=255 {
                            points.push(acc);
                            acc += base;
                        }
                        base = acc;
                    }
                    let mut affine = vec![<$affine>::identity(); points.len()];
                    <$proj>::batch_normalize(&points, &mut affine);
                    affine
                });
                let mut acc = <$proj>::identity();
                for (i, &b) in s.to_bytes().iter().enumerate() {
                    if b != 0 {
                        acc += &table[i * 255 + b as usize - 1];
                    }
                }
                $name(acc.to_affine())
            }

            pub fn identity() -> Self {
                $name(<$affine>::identity())
            }

            pub fn to_bytes(&self) -> [u8; $len] {
                self.0.to_compressed()
            }

            /// Accepts only canonical compressed encodings of subgroup points.
            pub fn from_bytes(bytes: &[u8; $len]) -> Option<Self> {
                let p: Option<$affine> = Option::from(<$affine>::from_compressed(bytes));
                p.filter(|p| &p.to_compressed() == bytes).map($name)
            }

            pub(crate) fn inner(&self) -> &$affine {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($what, "({})"), hex::encode(&self.to_bytes()[..6]))
            }
        }

        impl Mul<Scalar> for $name {
            type Output = $name;
            fn mul(self, rhs: Scalar) -> $name {
                $name((<$proj>::from(self.0) * rhs.0).to_affine())
            }
        }

        impl Add for $name {
            type Output = $name;
            fn add(self, rhs: $name) -> $name {
                $name((<$proj>::from(self.0) + rhs.0).to_affine())
            }
        }

        impl Sub for $name {
            type Output = $name;
            fn sub(self, rhs: $name) -> $name {
                $name((<$proj>::from(self.0) - <$proj>::from(rhs.0)).to_affine())
            }
        }

        impl Neg for $name {
            type Output = $name;
            fn neg(self) -> $name {
                $name(-self.0)
            }
        }

        impl Encode for $name {
            fn encode(&self, w: &mut Writer) {
                w.put_bytes(&self.to_bytes());
            }
        }

        impl Decode for $name {
            fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
                let bytes = r.fixed::<$len>($what)?;
                $name::from_bytes(&bytes).ok_or(WireError::invalid($what))
            }
        }
    };
}

curve_point!(G1Elem, G1Affine, G1Projective, G1_BYTES, "G1");
curve_point!(G2Elem, G2Affine, G2Projective, G2_BYTES, "G2");

/// Element of the target group `GT`.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct GtElem(Gt);

impl GtElem {
    pub fn identity() -> Self {
        GtElem(Gt::identity())
    }

    /// `e(g1, g2)`.
    pub fn generator() -> Self {
        GtElem(Gt::generator())
    }

    /// Fixed 4-bit window exponentiation.
    pub fn pow(&self, e: Scalar) -> Self {
        let mut table = [Gt::identity(); 16];
        for i in 1..16 {
            table[i] = table[i - 1] + self.0;
        }
        let mut acc = Gt::identity();
        for byte in e.to_bytes().iter().rev() {
            for nibble in [byte >> 4, byte & 0xf] {
                for _ in 0..4 {
                    acc = acc.double();
                }
                if nibble != 0 {
                    acc += table[nibble as usize];
                }
            }
        }
        GtElem(acc)
    }

    pub fn is_identity(&self) -> bool {
        bool::from(self.0.is_identity())
    }

    /// Torus-compressed encoding; the identity (which has no torus
    /// representative) is the all-zero string, which no other element uses.
    pub fn to_bytes(&self) -> [u8; GT_BYTES] {
        let mut out = [0u8; GT_BYTES];
        if !self.is_identity() {
            self.0
                .write_compressed(&mut out[..])
                .expect("fixed-size buffer");
        }
        out
    }

    pub fn from_bytes(bytes: &[u8; GT_BYTES]) -> Option<Self> {
        if bytes.iter().all(|&b| b == 0) {
            return Some(Self::identity());
        }
        let g = Gt::read_compressed(&bytes[..]).ok().map(GtElem)?;
        (g.to_bytes() == *bytes).then_some(g)
    }
}

impl fmt::Debug for GtElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GT({})", &hash_output(self).to_hex()[..12])
    }
}

// blstrs writes the target group additively.
impl Mul for GtElem {
    type Output = GtElem;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: GtElem) -> GtElem {
        GtElem(self.0 + rhs.0)
    }
}

impl Div for GtElem {
    type Output = GtElem;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: GtElem) -> GtElem {
        GtElem(self.0 - rhs.0)
    }
}

impl Encode for GtElem {
    fn encode(&self, w: &mut Writer) {
        w.put_bytes(&self.to_bytes());
    }
}

impl Decode for GtElem {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let bytes = r.fixed::<GT_BYTES>("GT")?;
        GtElem::from_bytes(&bytes).ok_or(WireError::invalid("GT"))
    }
}

impl Encode for Scalar {
    fn encode(&self, w: &mut Writer) {
        w.put_bytes(&self.to_bytes());
    }
}

impl Decode for Scalar {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let bytes = r.fixed::<SCALAR_BYTES>("scalar")?;
        Scalar::from_bytes(&bytes).ok_or(WireError::invalid("scalar"))
    }
}

pub fn pairing(a: &G1Elem, b: &G2Elem) -> GtElem {
    GtElem(blstrs::pairing(a.inner(), b.inner()))
}

/// `prod_i e(a_i, b_i)` with a single final exponentiation.
pub fn multi_pairing(terms: &[(G1Elem, G2Elem)]) -> GtElem {
    let prepared: Vec<(G1Affine, G2Prepared)> = terms
        .iter()
        .map(|(a, b)| (*a.inner(), G2Prepared::from(*b.inner())))
        .collect();
    let refs: Vec<(&G1Affine, &G2Prepared)> = prepared.iter().map(|(a, b)| (a, b)).collect();
    GtElem(Bls12::multi_miller_loop(&refs).final_exponentiation())
}

/// 32-byte output of the one-way function applied to messages.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Digest(#[serde(with = "hex_array")] pub [u8; 32]);

impl Digest {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Encode for Digest {
    fn encode(&self, w: &mut Writer) {
        w.put_bytes(&self.0);
    }
}

impl Decode for Digest {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Digest(r.fixed::<32>("digest")?))
    }
}

mod hex_array {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(&s).map_err(serde::de::Error::custom)?;
        v.try_into()
            .map_err(|_| serde::de::Error::custom("expected 32 bytes"))
    }
}

/// SHA-256 over the canonical encoding of `m`.
pub fn hash_output(m: &GtElem) -> Digest {
    Digest(Sha256::digest(m.to_bytes()).into())
}

pub fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_be_bytes());
        h.update(p);
    }
    h.finalize().into()
}

/// Uniform over `Z_p \ {0}`.
pub fn random_scalar<R: RngCore + ?Sized>(rng: &mut R) -> Scalar {
    loop {
        let s = blstrs::Scalar::random(&mut *rng);
        if !bool::from(s.is_zero()) {
            return Scalar(s);
        }
    }
}

/// Uniform over `GT`.
pub fn random_gt<R: RngCore + ?Sized>(rng: &mut R) -> GtElem {
    GtElem(Gt::random(&mut *rng))
}

/// Keyed derivation of a non-zero scalar: a PRF over `(key, label, index)`.
pub fn derive_scalar(key: &[u8; 32], label: &str, index: u64) -> Scalar {
    let mut rng = ChaCha20Rng::from_seed(sha256(&[key, label.as_bytes(), &index.to_be_bytes()]));
    random_scalar(&mut rng)
}

/// Deterministic generator used by every actor, game trial, and test.
pub type DetRng = ChaCha20Rng;

/// A 32-byte seed for [`DetRng`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(#[serde(with = "hex_array")] pub [u8; 32]);

impl Seed {
    pub fn from_u64(v: u64) -> Self {
        Seed(sha256(&[b"seed", &v.to_be_bytes()]))
    }

    /// Accepts 64 hex characters or a decimal integer.
    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        if text.len() == 64 {
            if let Ok(v) = hex::decode(text) {
                return v.try_into().ok().map(Seed);
            }
        }
        text.parse::<u64>().ok().map(Seed::from_u64)
    }

    pub fn rng(&self) -> DetRng {
        DetRng::from_seed(self.0)
    }

    /// Independent child seed for a named stream.
    pub fn derive(&self, label: &str, index: u64) -> Seed {
        Seed(sha256(&[&self.0, label.as_bytes(), &index.to_be_bytes()]))
    }

    /// Fresh seed drawn from `rng`.
    pub fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let mut s = [0u8; 32];
        rng.fill_bytes(&mut s);
        Seed(s)
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed({})", hex::encode(self.0))
    }
}
