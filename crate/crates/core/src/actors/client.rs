use std::collections::{BTreeMap, BTreeSet};

use crate::bilinear::DetRng;
use crate::circuits::InputAssignment;
use crate::pvc::{
    probgen, retrieve, verify, CertifiedList, EncodedInput, FunctionId, FunctionKey, RetrievalBit,
    ServerId, Token, VerificationKey,
};
use crate::rkpabe::Epoch;

use super::config::Model;
use super::message::{Dispatch, JobRef, Message, Note};
use super::net::{Actor, Outbox};
use super::KDC;

/// Re-encodings allowed after stale-epoch notices, per job.
pub const STALE_LIMIT: u32 = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum JobStatus {
    /// Not handed out yet, or due to be handed out again.
    Waiting,
    InFlight,
    /// A reject was reported; the next attempt waits for the KDC's answer.
    AwaitingRevoke,
    /// Must be encoded again once parameters for this epoch arrive.
    AwaitingEpoch(Epoch),
    Accepted(bool),
    Failed(String),
}

impl JobStatus {
    pub fn is_done(&self) -> bool {
        matches!(self, JobStatus::Accepted(_) | JobStatus::Failed(_))
    }
}

/// A client-local job record. The retrieval bit lives here and nowhere else.
pub struct JobRecord {
    pub job: JobRef,
    pub function: FunctionId,
    pub x: InputAssignment,
    pub pinned: Option<ServerId>,
    pub status: JobStatus,
    pub dispatches: u32,
    pub reassigns: u32,
    pub stale_retries: u32,
    tried: BTreeSet<ServerId>,
    current: Option<(Dispatch, ServerId)>,
    encoding: Option<(EncodedInput, VerificationKey, RetrievalBit)>,
}

impl JobRecord {
    pub fn new(job: JobRef, function: FunctionId, x: InputAssignment, pinned: Option<ServerId>) -> Self {
        Self {
            job,
            function,
            x,
            pinned,
            status: JobStatus::Waiting,
            dispatches: 0,
            reassigns: 0,
            stale_retries: 0,
            tried: BTreeSet::new(),
            current: None,
            encoding: None,
        }
    }
}

/// A delegating client. Runs its jobs one at a time, in order.
pub struct Client {
    id: String,
    model: Model,
    /// The manager in the manager model.
    manager: Option<String>,
    verifiers: Vec<String>,
    max_reassign: u32,
    pub jobs: Vec<JobRecord>,
    next: usize,
    params: BTreeMap<FunctionId, (FunctionKey, CertifiedList)>,
    seen: BTreeSet<ServerId>,
    cursor: usize,
    rng: DetRng,
}

impl Client {
    pub fn new(
        id: String,
        model: Model,
        manager: Option<String>,
        verifiers: Vec<String>,
        max_reassign: u32,
        jobs: Vec<JobRecord>,
        rng: DetRng,
    ) -> Self {
        Self {
            id,
            model,
            manager,
            verifiers,
            max_reassign,
            jobs,
            next: 0,
            params: BTreeMap::new(),
            seen: BTreeSet::new(),
            cursor: 0,
            rng,
        }
    }

    fn can_start(&self, job: &JobRecord) -> bool {
        let Some((_, lf)) = self.params.get(&job.function) else {
            return false;
        };
        match (self.model, &job.pinned) {
            (Model::Manager, _) => true,
            (Model::Standard, Some(s)) => self.seen.contains(s),
            (Model::Standard, None) => !lf.servers.is_empty(),
        }
    }

    fn progress(&mut self, out: &mut Outbox) {
        while let Some(job) = self.jobs.get(self.next) {
            let ready = match &job.status {
                JobStatus::Accepted(_) | JobStatus::Failed(_) => {
                    self.next += 1;
                    continue;
                }
                JobStatus::Waiting => job.dispatches > 0 || self.can_start(job),
                JobStatus::AwaitingEpoch(k) => {
                    self.params.get(&job.function).is_some_and(|(pk, _)| pk.pp.epoch() >= *k)
                }
                JobStatus::InFlight | JobStatus::AwaitingRevoke => false,
            };
            if !ready {
                return;
            }
            self.dispatch(out);
        }
    }

    fn dispatch(&mut self, out: &mut Outbox) {
        let i = self.next;
        let (pk, lf) = self.params[&self.jobs[i].function].clone();
        let server = match self.model {
            Model::Manager => None,
            Model::Standard => {
                let job = &self.jobs[i];
                let pick = match (&job.pinned, job.dispatches) {
                    (Some(s), 0) => Some(s.clone()),
                    _ => {
                        let free: Vec<&ServerId> = lf.servers.iter().filter(|s| !job.tried.contains(*s)).collect();
                        (!free.is_empty()).then(|| free[self.cursor % free.len()].clone())
                    }
                };
                let Some(s) = pick else {
                    self.jobs[i].status = JobStatus::Failed("no certified server left".into());
                    return;
                };
                self.cursor += 1;
                Some(s)
            }
        };
        let job = &mut self.jobs[i];
        let (sigma_x, vk, b) = match probgen(&job.x, &pk, &mut self.rng) {
            Ok(e) => e,
            Err(e) => {
                job.status = JobStatus::Failed(format!("probgen: {e}"));
                return;
            }
        };
        job.status = JobStatus::InFlight;
        match server {
            None => {
                let to = self.manager.clone().expect("manager model has a manager");
                out.send(to, Message::JobSubmit { job: job.job.clone(), sigma_x: sigma_x.clone(), vk: vk.clone() });
            }
            Some(s) => {
                job.dispatches += 1;
                let d = Dispatch { job: job.job.clone(), n: job.dispatches };
                out.send(
                    s.to_string(),
                    Message::ComputeRequest { dispatch: d.clone(), sigma_x: sigma_x.clone(), vk: vk.clone() },
                );
                job.current = Some((d, s));
            }
        }
        job.encoding = Some((sigma_x, vk, b));
    }

    fn current_mut(&mut self, d: &Dispatch) -> Option<&mut JobRecord> {
        self.jobs
            .get_mut(self.next)
            .filter(|j| j.status == JobStatus::InFlight && j.current.as_ref().is_some_and(|(c, _)| c == d))
    }

    /// Counts a failed attempt; the job is retried unless the cap is hit.
    fn give_up_on(job: &mut JobRecord, max: u32, next: JobStatus) {
        if let Some((_, s)) = &job.current {
            job.tried.insert(s.clone());
        }
        job.reassigns += 1;
        job.status = if job.reassigns > max {
            JobStatus::Failed("reassignment limit reached".into())
        } else {
            next
        };
    }

    fn on_reply(&mut self, d: Dispatch, sigma_y: crate::pvc::EncodedOutput, out: &mut Outbox) {
        let max = self.max_reassign;
        let verifiers = self.verifiers.clone();
        let Some(job) = self.jobs.get(self.next).filter(|j| {
            j.status == JobStatus::InFlight && j.current.as_ref().is_some_and(|(c, _)| *c == d)
        }) else {
            return;
        };
        let (pk, lf) = &self.params[&job.function];
        let (_, vk, b) = job.encoding.as_ref().expect("encoded before dispatch");
        let (y, token) = verify(&pk.pp, &sigma_y, vk, lf, *b);
        let vk = vk.clone();
        out.note(Note::Verdict { dispatch: d.clone(), token: token.clone() });
        for v in verifiers {
            out.send(v, Message::VerifyRequest { dispatch: d.clone(), sigma_y: sigma_y.clone(), vk: vk.clone() });
        }
        let job = &mut self.jobs[self.next];
        match (y, token.is_accept()) {
            (Some(y), true) => job.status = JobStatus::Accepted(y),
            _ => {
                out.send(KDC, Message::RevokeReport { function: job.function.clone(), token: token.clone() });
                let next = match token {
                    Token::Reject(Some(_)) => JobStatus::AwaitingRevoke,
                    _ => JobStatus::Waiting,
                };
                Self::give_up_on(job, max, next);
            }
        }
    }
}

impl Actor for Client {
    fn id(&self) -> &str {
        &self.id
    }

    fn start(&mut self, out: &mut Outbox) {
        let functions: BTreeSet<FunctionId> = self.jobs.iter().map(|j| j.function.clone()).collect();
        for function in functions {
            out.send(KDC, Message::ParamsRequest { function });
        }
    }

    fn handle(&mut self, from: &str, msg: Message, out: &mut Outbox) {
        let max = self.max_reassign;
        match msg {
            Message::Published { pk, certified } => {
                self.seen.extend(certified.servers.iter().cloned());
                self.params.insert(pk.function.clone(), (pk, certified));
            }
            Message::ComputeReply { dispatch, sigma_y } => self.on_reply(dispatch, sigma_y, out),
            Message::StaleEpoch { dispatch, key, .. } => {
                if let Some(job) = self.current_mut(&dispatch) {
                    job.stale_retries += 1;
                    job.status = if job.stale_retries > STALE_LIMIT {
                        JobStatus::Failed("too many stale-epoch notices".into())
                    } else {
                        JobStatus::AwaitingEpoch(key)
                    };
                }
            }
            Message::Unavailable { dispatch } => {
                if let Some(job) = self.current_mut(&dispatch) {
                    Self::give_up_on(job, max, JobStatus::Waiting);
                }
            }
            Message::RevokeReply { function, .. } => {
                if let Some(job) = self.jobs.get_mut(self.next) {
                    if job.status == JobStatus::AwaitingRevoke && job.function == function {
                        job.status = JobStatus::Waiting;
                    }
                }
            }
            Message::JobResult { job: r, mu, token } => {
                if let Some(job) = self.jobs.get_mut(self.next).filter(|j| j.job == r && j.status == JobStatus::InFlight) {
                    let (_, vk, b) = job.encoding.as_ref().expect("encoded before submission");
                    job.status = match retrieve(mu.as_ref(), &token, vk, *b) {
                        Some(y) => JobStatus::Accepted(y),
                        None => JobStatus::Failed(format!("manager returned {token}")),
                    };
                }
            }
            Message::JobStale { job: r, key } => {
                if let Some(job) = self.jobs.get_mut(self.next).filter(|j| j.job == r && j.status == JobStatus::InFlight) {
                    job.stale_retries += 1;
                    job.status = if job.stale_retries > STALE_LIMIT {
                        JobStatus::Failed("too many stale-epoch notices".into())
                    } else {
                        JobStatus::AwaitingEpoch(key)
                    };
                }
            }
            Message::Refused { reason } => out.note(Note::ProtocolError {
                detail: format!("{from} refused: {reason}"),
            }),
            other => out.note(Note::ProtocolError {
                detail: format!("client cannot handle {} from {from}", other.kind()),
            }),
        }
        self.progress(out);
    }
}
