//! Challenger-side system state and the oracle interface handed to
//! adversaries.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::bilinear::{sha256, DetRng};
use crate::circuits::BoolFormula;
use crate::pvc::{
    certify, compute, fninit, refresh, register, revoke, setup, CertifiedList, EncodedInput,
    EncodedOutput, EvaluationKey, FunctionId, FunctionKey, FunctionRecord, MasterSecret,
    PublicParams, PvcError, ServerId, ServerKey, SetupParams, Token, VerificationKey,
};
use crate::rkpabe::{Epoch, UpdateKey};
use crate::wire::WireMessage;

use super::{GameConfig, TrialLog};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("oracle {0} is not available in this game stage")]
    NotGranted(&'static str),
    #[error("oracle query budget of {0} exhausted")]
    Budget(usize),
    #[error("unknown function {0}")]
    UnknownFunction(FunctionId),
    #[error("server {0} has no evaluation key held by the challenger")]
    NotHonest(ServerId),
    #[error("challenger rejected the query: {0}")]
    Query(String),
}

impl From<PvcError> for OracleError {
    fn from(e: PvcError) -> Self {
        OracleError::Query(e.to_string())
    }
}

/// Which oracles a game stage grants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleMask {
    pub fninit: bool,
    pub register: bool,
    pub certify: bool,
    /// Certify queries for the challenge function itself.
    pub certify_challenge: bool,
    pub revoke: bool,
    pub compute: bool,
}

impl OracleMask {
    pub const NONE: OracleMask = OracleMask {
        fninit: false,
        register: false,
        certify: false,
        certify_challenge: false,
        revoke: false,
        compute: false,
    };

    /// `fninit`, `register`, `certify` and `revoke`.
    pub const STANDARD: OracleMask = OracleMask {
        fninit: true,
        register: true,
        certify: true,
        certify_challenge: true,
        revoke: true,
        compute: false,
    };

    pub const fn with_compute(self) -> Self {
        OracleMask {
            compute: true,
            ..self
        }
    }

    pub const fn without_challenge_certify(self) -> Self {
        OracleMask {
            certify_challenge: false,
            ..self
        }
    }
}

/// Everything the challenger owns during one trial.
pub struct System {
    pub pp: PublicParams,
    pub msk: MasterSecret,
    pub function: FunctionId,
    pub records: BTreeMap<FunctionId, FunctionRecord>,
    /// Signing keys of servers the challenger registered itself.
    pub honest: BTreeMap<ServerId, ServerKey>,
    /// Evaluation keys of honest servers, per function and epoch. Older
    /// epochs stay usable for inputs encoded in them.
    pub eks: BTreeMap<(FunctionId, ServerId, Epoch), EvaluationKey>,
}

impl System {
    pub fn new(cfg: &GameConfig, rng: &mut DetRng) -> Result<Self, PvcError> {
        let params = SetupParams {
            depth: cfg.depth,
            max_arity: cfg.formula.arity(),
            binding: cfg.binding,
            function_binding: cfg.function_binding,
            ..SetupParams::default()
        };
        let (pp, mut msk) = setup(&params, rng)?;
        let function = FunctionId::from("F");
        let rec = fninit(&pp, &mut msk, function.clone(), cfg.formula.clone())?;
        Ok(System {
            pp,
            msk,
            records: [(function.clone(), rec)].into(),
            function,
            honest: BTreeMap::new(),
            eks: BTreeMap::new(),
        })
    }

    pub fn record(&self) -> &FunctionRecord {
        &self.records[&self.function]
    }

    pub fn certified(&self) -> CertifiedList {
        self.record().certified_list()
    }

    pub fn delegation_key(&self) -> FunctionKey {
        self.record().delegation_key(&self.pp)
    }

    pub fn register_honest(&mut self, id: &str, rng: &mut DetRng) -> Result<ServerId, PvcError> {
        let id = ServerId::from(id);
        let key = register(&mut self.pp, &mut self.msk, id.clone(), rng)?;
        self.honest.insert(id.clone(), key);
        Ok(id)
    }

    pub fn register_adversary(&mut self, id: &str, rng: &mut DetRng) -> Result<ServerKey, PvcError> {
        register(&mut self.pp, &mut self.msk, ServerId::from(id), rng)
    }

    /// Certifies `server` for the challenge function; honest servers' keys
    /// stay with the challenger.
    pub fn certify(&mut self, server: &ServerId, rng: &mut DetRng) -> Result<EvaluationKey, PvcError> {
        self.certify_for(&self.function.clone(), server, rng)
    }

    fn certify_for(
        &mut self,
        function: &FunctionId,
        server: &ServerId,
        rng: &mut DetRng,
    ) -> Result<EvaluationKey, PvcError> {
        let rec = self.records.get_mut(function).ok_or(PvcError::FunctionMismatch)?;
        let ek = certify(&self.pp, &self.msk, rec, server, rng)?;
        if self.honest.contains_key(server) {
            self.eks.insert((function.clone(), server.clone(), ek.epoch()), ek.clone());
        }
        Ok(ek)
    }

    /// Runs revocation for `function` and brings every other record to the
    /// new epoch. Returns the reissued keys for `function`.
    pub fn revoke(
        &mut self,
        token: &Token,
        function: &FunctionId,
    ) -> Result<Option<Vec<EvaluationKey>>, PvcError> {
        let rec = self.records.get_mut(function).ok_or(PvcError::FunctionMismatch)?;
        let Some(fresh) = revoke(&mut self.pp, &mut self.msk, token, rec)? else {
            return Ok(None);
        };
        self.eks.retain(|(f, s, _), _| f != function || rec.is_certified(s));
        let mut reissued = Vec::new();
        for (id, rec) in self.records.iter_mut() {
            let keys = if id == function {
                fresh.clone()
            } else {
                refresh(&self.pp, &self.msk, rec)?
            };
            for ek in keys {
                if self.honest.contains_key(&ek.server) {
                    self.eks.insert((id.clone(), ek.server.clone(), ek.epoch()), ek.clone());
                }
                if id == function {
                    reissued.push(ek);
                }
            }
        }
        Ok(Some(reissued))
    }

    /// Honest server `server` evaluates `sigma_x` for the challenge function.
    pub fn honest_compute(
        &self,
        server: &ServerId,
        sigma_x: &EncodedInput,
        vk: &VerificationKey,
    ) -> Result<EncodedOutput, OracleError> {
        let key = self
            .honest
            .get(server)
            .ok_or_else(|| OracleError::NotHonest(server.clone()))?;
        let ek = self
            .eks
            .get(&(sigma_x.function.clone(), server.clone(), sigma_x.epoch))
            .ok_or_else(|| OracleError::NotHonest(server.clone()))?;
        Ok(compute(sigma_x, vk, ek, key)?)
    }
}

/// A compute-oracle query, kept so the vindictive-server runner can check
/// which inputs and servers the adversary queried.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComputeQuery {
    pub server: ServerId,
    pub input_digest: [u8; 32],
}

pub fn input_digest(sigma_x: &EncodedInput) -> [u8; 32] {
    sha256(&[&sigma_x.to_wire()])
}

/// Oracle access for one adversary stage. Every query is checked against
/// the stage mask and the per-trial budget; a refused query marks the trial
/// as invalid.
pub struct Oracles<'a> {
    sys: &'a mut System,
    rng: &'a mut DetRng,
    log: &'a mut TrialLog,
    mask: OracleMask,
    budget: usize,
    used: usize,
    pub(crate) registered: BTreeSet<ServerId>,
    pub(crate) compute_queries: Vec<ComputeQuery>,
    pub(crate) violation: Option<String>,
}

impl<'a> Oracles<'a> {
    pub(crate) fn new(
        sys: &'a mut System,
        rng: &'a mut DetRng,
        log: &'a mut TrialLog,
        mask: OracleMask,
        budget: usize,
    ) -> Self {
        Self {
            sys,
            rng,
            log,
            mask,
            budget,
            used: 0,
            registered: BTreeSet::new(),
            compute_queries: Vec::new(),
            violation: None,
        }
    }

    pub(crate) fn set_mask(&mut self, mask: OracleMask) {
        self.mask = mask;
    }

    pub fn rng(&mut self) -> &mut DetRng {
        self.rng
    }

    pub(crate) fn log(&mut self, step: &'static str) {
        self.log.steps.push(step);
    }

    fn admit(&mut self, name: &'static str, granted: bool) -> Result<(), OracleError> {
        let err = if !granted {
            OracleError::NotGranted(name)
        } else if self.used >= self.budget {
            OracleError::Budget(self.budget)
        } else {
            self.used += 1;
            self.log.steps.push(name);
            return Ok(());
        };
        self.violation.get_or_insert_with(|| err.to_string());
        Err(err)
    }

    pub fn queries_used(&self) -> usize {
        self.used
    }

    pub fn pp(&self) -> &PublicParams {
        &self.sys.pp
    }

    pub fn certified(&self, function: &FunctionId) -> Option<CertifiedList> {
        self.sys.records.get(function).map(|r| r.certified_list())
    }

    pub fn challenge_function(&self) -> &FunctionId {
        &self.sys.function
    }

    /// Published update keys of `function` for the current epoch.
    pub fn update_keys(&self, function: &FunctionId) -> Option<(UpdateKey, UpdateKey)> {
        self.sys.records.get(function).map(|r| {
            let (a, b) = r.update_keys();
            (a.clone(), b.clone())
        })
    }

    pub fn fninit(&mut self, id: FunctionId, formula: BoolFormula) -> Result<FunctionKey, OracleError> {
        self.admit("oracle:fninit", self.mask.fninit)?;
        if self.sys.records.contains_key(&id) {
            return Err(OracleError::Query(format!("function {id} exists")));
        }
        let rec = fninit(&self.sys.pp, &mut self.sys.msk, id.clone(), formula)?;
        let pk = rec.delegation_key(&self.sys.pp);
        self.sys.records.insert(id, rec);
        Ok(pk)
    }

    pub fn register(&mut self, id: ServerId) -> Result<ServerKey, OracleError> {
        self.admit("oracle:register", self.mask.register)?;
        self.registered.insert(id.clone());
        Ok(register(&mut self.sys.pp, &mut self.sys.msk, id, self.rng)?)
    }

    pub fn certify(&mut self, function: &FunctionId, server: &ServerId) -> Result<EvaluationKey, OracleError> {
        let granted = if *function == self.sys.function {
            self.mask.certify && self.mask.certify_challenge
        } else {
            self.mask.certify
        };
        self.admit("oracle:certify", granted)?;
        if !self.sys.records.contains_key(function) {
            return Err(OracleError::UnknownFunction(function.clone()));
        }
        Ok(self.sys.certify_for(function, server, self.rng)?)
    }

    pub fn revoke(
        &mut self,
        token: &Token,
        function: &FunctionId,
    ) -> Result<Option<Vec<EvaluationKey>>, OracleError> {
        self.admit("oracle:revoke", self.mask.revoke)?;
        if !self.sys.records.contains_key(function) {
            return Err(OracleError::UnknownFunction(function.clone()));
        }
        Ok(self.sys.revoke(token, function)?)
    }

    /// An honest server answers a computation request of the adversary's
    /// choosing.
    pub fn compute(
        &mut self,
        sigma_x: &EncodedInput,
        vk: &VerificationKey,
        server: &ServerId,
    ) -> Result<EncodedOutput, OracleError> {
        self.admit("oracle:compute", self.mask.compute)?;
        self.compute_queries.push(ComputeQuery {
            server: server.clone(),
            input_digest: input_digest(sigma_x),
        });
        self.sys.honest_compute(server, sigma_x, vk)
    }
}
