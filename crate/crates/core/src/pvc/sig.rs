//! Server signatures (Ed25519).

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};

use crate::wire::{Decode, Encode, Reader, WireError, Writer};

pub const SIGNATURE_BYTES: usize = 64;

pub struct SigningSecret(SigningKey);

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicSigKey(VerifyingKey);

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; SIGNATURE_BYTES]);

impl SigningSecret {
    pub fn generate<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        SigningSecret(SigningKey::from_bytes(&seed))
    }

    pub fn public(&self) -> PublicSigKey {
        PublicSigKey(self.0.verifying_key())
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature(self.0.sign(msg).to_bytes())
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn from_bytes(seed: &[u8; 32]) -> Self {
        SigningSecret(SigningKey::from_bytes(seed))
    }
}

impl PublicSigKey {
    /// Strict verification: rejects small-order keys and non-canonical
    /// signature encodings.
    pub fn verify(&self, msg: &[u8], sig: &Signature) -> bool {
        let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
        self.0.verify_strict(msg, &sig).is_ok()
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }
}

impl std::fmt::Debug for SigningSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SigningSecret({:?})", self.public())
    }
}

impl std::fmt::Debug for PublicSigKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PublicSigKey({})", hex::encode(&self.to_bytes()[..6]))
    }
}

impl std::fmt::Debug for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Signature({})", hex::encode(&self.0[..6]))
    }
}

impl Encode for PublicSigKey {
    fn encode(&self, w: &mut Writer) {
        w.put_bytes(&self.to_bytes());
    }
}

impl Decode for PublicSigKey {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let bytes = r.fixed::<32>("verification key")?;
        VerifyingKey::from_bytes(&bytes)
            .map(PublicSigKey)
            .map_err(|_| WireError::invalid("verification key"))
    }
}

impl Encode for Signature {
    fn encode(&self, w: &mut Writer) {
        w.put_bytes(&self.0);
    }
}

impl Decode for Signature {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Signature(r.fixed::<SIGNATURE_BYTES>("signature")?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bilinear::Seed;

    #[test]
    fn sign_verify() {
        let mut rng = Seed::from_u64(3).rng();
        let k = SigningSecret::generate(&mut rng);
        let other = SigningSecret::generate(&mut rng);
        let s = k.sign(b"hello");
        assert!(k.public().verify(b"hello", &s));
        assert!(!k.public().verify(b"hellp", &s));
        assert!(!other.public().verify(b"hello", &s));
        assert!(!k.public().verify(b"hello", &Signature([0; 64])));
    }
}
