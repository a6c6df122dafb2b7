//! Messages exchanged between actors and the notes actors record locally.
//!
//! Every message crosses the network as canonical bytes. No schema here has
//! a field for the retrieval bit or for the retrieved output.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bilinear::GtElem;
use crate::pvc::{
    CertifiedList, EncodedInput, EncodedOutput, EvaluationKey, FunctionId, FunctionKey, ServerId,
    ServerKey, Token, VerificationKey,
};
use crate::rkpabe::Epoch;
use crate::wire::{Decode, Encode, Reader, WireError, Writer, WIRE_VERSION};

/// A client's job: its position in that client's schedule.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JobRef {
    pub client: String,
    pub index: u32,
}

impl fmt::Display for JobRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.client, self.index)
    }
}

/// The `n`-th time a job was handed to a server. Numbered by whoever does
/// the handing, so it is unique per job.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Dispatch {
    pub job: JobRef,
    pub n: u32,
}

impl fmt::Display for Dispatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.job, self.n)
    }
}

#[derive(Debug)]
pub enum Message {
    ParamsRequest { function: FunctionId },
    /// Current `PK_F` and `L_F`, sent on request and after every change.
    Published { pk: FunctionKey, certified: CertifiedList },
    RegisterRequest,
    RegisterReply { sk: ServerKey },
    CertifyRequest { function: FunctionId },
    CertifyReply { ek: EvaluationKey },
    RefreshRequest { function: FunctionId },
    KeyRefresh { ek: EvaluationKey },
    NotCertified { function: FunctionId },
    Refused { reason: String },
    ComputeRequest { dispatch: Dispatch, sigma_x: EncodedInput, vk: VerificationKey },
    ComputeReply { dispatch: Dispatch, sigma_y: EncodedOutput },
    /// The input was encoded for an older epoch than the server's key.
    StaleEpoch { dispatch: Dispatch, key: Epoch, input: Epoch },
    Unavailable { dispatch: Dispatch },
    RevokeReport { function: FunctionId, token: Token },
    RevokeReply { function: FunctionId, token: Token, revoked: bool, epoch: Epoch },
    JobSubmit { job: JobRef, sigma_x: EncodedInput, vk: VerificationKey },
    /// The manager's blind-verification result for a finished job.
    JobResult { job: JobRef, mu: Option<GtElem>, token: Token },
    /// The job must be encoded again for epoch `key` or later.
    JobStale { job: JobRef, key: Epoch },
    VerifyRequest { dispatch: Dispatch, sigma_y: EncodedOutput, vk: VerificationKey },
    Note(Note),
}

/// Local events. They appear in the transcript with `from == to`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Note {
    Setup { epoch: Epoch },
    FnInit { function: FunctionId },
    Revoked { function: FunctionId, server: ServerId, epoch: Epoch },
    Verdict { dispatch: Dispatch, token: Token },
    Ledger { server: ServerId, delta: i64, balance: i64 },
    ProtocolError { detail: String },
}

/// Every kind that may appear in a transcript, with whether its payload is
/// secret. Secret payloads are hashed but never written out.
pub const KINDS: &[(&str, bool)] = &[
    ("params-request", false),
    ("published", false),
    ("register-request", false),
    ("register-reply", true),
    ("certify-request", false),
    ("certify-reply", true),
    ("refresh-request", false),
    ("key-refresh", true),
    ("not-certified", false),
    ("refused", false),
    ("compute-request", false),
    ("compute-reply", false),
    ("stale-epoch", false),
    ("unavailable", false),
    ("revoke-report", false),
    ("revoke-reply", false),
    ("job-submit", false),
    ("job-result", false),
    ("job-stale", false),
    ("verify-request", false),
    ("setup", false),
    ("fninit", false),
    ("revoked", false),
    ("verdict", false),
    ("ledger", false),
    ("protocol-error", false),
];

impl Message {
    pub fn kind(&self) -> &'static str {
        KINDS[self.tag() as usize - TAG_BASE as usize].0
    }

    pub fn is_secret(&self) -> bool {
        KINDS[self.tag() as usize - TAG_BASE as usize].1
    }

    fn tag(&self) -> u8 {
        TAG_BASE
            + match self {
                Message::ParamsRequest { .. } => 0,
                Message::Published { .. } => 1,
                Message::RegisterRequest => 2,
                Message::RegisterReply { .. } => 3,
                Message::CertifyRequest { .. } => 4,
                Message::CertifyReply { .. } => 5,
                Message::RefreshRequest { .. } => 6,
                Message::KeyRefresh { .. } => 7,
                Message::NotCertified { .. } => 8,
                Message::Refused { .. } => 9,
                Message::ComputeRequest { .. } => 10,
                Message::ComputeReply { .. } => 11,
                Message::StaleEpoch { .. } => 12,
                Message::Unavailable { .. } => 13,
                Message::RevokeReport { .. } => 14,
                Message::RevokeReply { .. } => 15,
                Message::JobSubmit { .. } => 16,
                Message::JobResult { .. } => 17,
                Message::JobStale { .. } => 18,
                Message::VerifyRequest { .. } => 19,
                Message::Note(n) => {
                    20 + match n {
                        Note::Setup { .. } => 0,
                        Note::FnInit { .. } => 1,
                        Note::Revoked { .. } => 2,
                        Note::Verdict { .. } => 3,
                        Note::Ledger { .. } => 4,
                        Note::ProtocolError { .. } => 5,
                    }
                }
            }
    }

    /// Versioned canonical bytes.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(WIRE_VERSION);
        w.put_u8(self.tag());
        self.encode_body(&mut w);
        w.into_bytes()
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let version = r.u8()?;
        if version != WIRE_VERSION {
            return Err(WireError::Version(version));
        }
        let m = Self::decode_body(r.u8()?, &mut r)?;
        r.finish()?;
        Ok(m)
    }

    fn encode_body(&self, w: &mut Writer) {
        match self {
            Message::RegisterRequest => {}
            Message::ParamsRequest { function }
            | Message::CertifyRequest { function }
            | Message::RefreshRequest { function }
            | Message::NotCertified { function } => w.put(function),
            Message::Published { pk, certified } => {
                w.put(pk);
                w.put(certified);
            }
            Message::RegisterReply { sk } => w.put(sk),
            Message::CertifyReply { ek } | Message::KeyRefresh { ek } => w.put(ek),
            Message::Refused { reason } => w.put_str(reason),
            Message::ComputeRequest { dispatch, sigma_x, vk } => {
                w.put(dispatch);
                w.put(sigma_x);
                w.put(vk);
            }
            Message::ComputeReply { dispatch, sigma_y } => {
                w.put(dispatch);
                w.put(sigma_y);
            }
            Message::StaleEpoch { dispatch, key, input } => {
                w.put(dispatch);
                w.put_u64(*key);
                w.put_u64(*input);
            }
            Message::Unavailable { dispatch } => w.put(dispatch),
            Message::RevokeReport { function, token } => {
                w.put(function);
                w.put(token);
            }
            Message::RevokeReply { function, token, revoked, epoch } => {
                w.put(function);
                w.put(token);
                w.put_bool(*revoked);
                w.put_u64(*epoch);
            }
            Message::JobSubmit { job, sigma_x, vk } => {
                w.put(job);
                w.put(sigma_x);
                w.put(vk);
            }
            Message::JobResult { job, mu, token } => {
                w.put(job);
                w.put(mu);
                w.put(token);
            }
            Message::JobStale { job, key } => {
                w.put(job);
                w.put_u64(*key);
            }
            Message::VerifyRequest { dispatch, sigma_y, vk } => {
                w.put(dispatch);
                w.put(sigma_y);
                w.put(vk);
            }
            Message::Note(n) => match n {
                Note::Setup { epoch } => w.put_u64(*epoch),
                Note::FnInit { function } => w.put(function),
                Note::Revoked { function, server, epoch } => {
                    w.put(function);
                    w.put(server);
                    w.put_u64(*epoch);
                }
                Note::Verdict { dispatch, token } => {
                    w.put(dispatch);
                    w.put(token);
                }
                Note::Ledger { server, delta, balance } => {
                    w.put(server);
                    w.put_u64(*delta as u64);
                    w.put_u64(*balance as u64);
                }
                Note::ProtocolError { detail } => w.put_str(detail),
            },
        }
    }

    fn decode_body(tag: u8, r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(match tag.wrapping_sub(TAG_BASE) {
            0 => Message::ParamsRequest { function: r.get()? },
            1 => Message::Published { pk: r.get()?, certified: r.get()? },
            2 => Message::RegisterRequest,
            3 => Message::RegisterReply { sk: r.get()? },
            4 => Message::CertifyRequest { function: r.get()? },
            5 => Message::CertifyReply { ek: r.get()? },
            6 => Message::RefreshRequest { function: r.get()? },
            7 => Message::KeyRefresh { ek: r.get()? },
            8 => Message::NotCertified { function: r.get()? },
            9 => Message::Refused { reason: r.string()? },
            10 => Message::ComputeRequest { dispatch: r.get()?, sigma_x: r.get()?, vk: r.get()? },
            11 => Message::ComputeReply { dispatch: r.get()?, sigma_y: r.get()? },
            12 => Message::StaleEpoch { dispatch: r.get()?, key: r.u64()?, input: r.u64()? },
            13 => Message::Unavailable { dispatch: r.get()? },
            14 => Message::RevokeReport { function: r.get()?, token: r.get()? },
            15 => Message::RevokeReply {
                function: r.get()?,
                token: r.get()?,
                revoked: r.bool()?,
                epoch: r.u64()?,
            },
            16 => Message::JobSubmit { job: r.get()?, sigma_x: r.get()?, vk: r.get()? },
            17 => Message::JobResult { job: r.get()?, mu: r.get()?, token: r.get()? },
            18 => Message::JobStale { job: r.get()?, key: r.u64()? },
            19 => Message::VerifyRequest { dispatch: r.get()?, sigma_y: r.get()?, vk: r.get()? },
            20 => Message::Note(Note::Setup { epoch: r.u64()? }),
            21 => Message::Note(Note::FnInit { function: r.get()? }),
            22 => Message::Note(Note::Revoked { function: r.get()?, server: r.get()?, epoch: r.u64()? }),
            23 => Message::Note(Note::Verdict { dispatch: r.get()?, token: r.get()? }),
            24 => Message::Note(Note::Ledger {
                server: r.get()?,
                delta: r.u64()? as i64,
                balance: r.u64()? as i64,
            }),
            25 => Message::Note(Note::ProtocolError { detail: r.string()? }),
            _ => return Err(WireError::invalid("message tag")),
        })
    }
}

const TAG_BASE: u8 = 0x40;

/// Kind and secrecy of an encoded message, read from its header alone.
pub fn peek_kind(bytes: &[u8]) -> Option<(&'static str, bool)> {
    let tag = *bytes.get(1)?;
    KINDS.get(tag.checked_sub(TAG_BASE)? as usize).copied()
}

impl Encode for JobRef {
    fn encode(&self, w: &mut Writer) {
        w.put_str(&self.client);
        w.put_u32(self.index);
    }
}

impl Decode for JobRef {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(JobRef {
            client: r.string()?,
            index: r.u32()?,
        })
    }
}

impl Encode for Dispatch {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.job);
        w.put_u32(self.n);
    }
}

impl Decode for Dispatch {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Dispatch {
            job: r.get()?,
            n: r.u32()?,
        })
    }
}
