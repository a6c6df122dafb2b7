//! Publicly verifiable outsourced evaluation of Boolean formulas, built on
//! revocable key-policy attribute-based encryption over BLS12-381.
//!
//! A key distribution center issues all keys. Clients encode inputs, servers
//! compute on them, and anyone holding the public parameters can check the
//! signed result. A server caught returning a wrong result is revoked.

pub mod bilinear;
pub mod circuits;
pub mod wire;
pub mod rkpabe;
pub mod pvc;
pub mod games;
pub mod actors;

pub use bilinear::{DetRng, Digest, Seed};
pub use circuits::{BoolFormula, CircuitError, InputAssignment};
pub use games::{GameConfig, GameError, GameId, GameOutcome, Interval};
pub use pvc::{
    blindverify, certify, compute, fninit, probgen, refresh, register, retrieve, revoke, setup,
    verify, CertifiedList, EncodedInput, EncodedOutput, EvaluationKey, FunctionBinding,
    FunctionId, FunctionKey, PublicParams, PvcError, RetrievalBit, ServerId, ServerKey,
    SetupParams, SignatureBinding, Token, VerificationKey,
};
pub use rkpabe::Epoch;
