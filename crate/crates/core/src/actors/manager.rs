use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use crate::bilinear::{sha256, DetRng};
use crate::pvc::{
    blindverify, CertifiedList, EncodedInput, EncodedOutput, FunctionId, FunctionKey, ServerId,
    Token, VerificationKey,
};
use crate::wire::Encode;

use super::config::{AssignmentPolicy, ManagerConfig};
use super::message::{Dispatch, JobRef, Message, Note};
use super::net::{Actor, Outbox};
use super::KDC;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Queued,
    Assigned,
    AwaitingRevoke,
    /// Waiting for the client to encode the job again.
    AwaitingClient,
    Done,
}

struct Job {
    function: FunctionId,
    sigma_x: EncodedInput,
    vk: VerificationKey,
    n: u32,
    reassigns: u32,
    assigned: Option<ServerId>,
    stage: Stage,
}

/// Owns a server pool, hands jobs out and blind-verifies the results. Never
/// sees a retrieval bit.
pub struct Manager {
    cfg: ManagerConfig,
    functions: Vec<FunctionId>,
    pool: BTreeSet<ServerId>,
    removed: BTreeSet<ServerId>,
    params: BTreeMap<FunctionId, (FunctionKey, CertifiedList)>,
    jobs: BTreeMap<JobRef, Job>,
    last: Option<ServerId>,
    /// +1 per accepted output, minus the penalty per rejected one.
    pub ledger: BTreeMap<ServerId, i64>,
    pub rewards: BTreeMap<ServerId, u32>,
    rng: DetRng,
}

impl Manager {
    pub fn new(cfg: ManagerConfig, functions: Vec<FunctionId>, pool: BTreeSet<ServerId>, rng: DetRng) -> Self {
        Self {
            cfg,
            functions,
            pool,
            removed: BTreeSet::new(),
            params: BTreeMap::new(),
            jobs: BTreeMap::new(),
            last: None,
            ledger: BTreeMap::new(),
            rewards: BTreeMap::new(),
            rng,
        }
    }

    /// Servers that may take a job for `function` right now.
    pub fn live(&self, function: &FunctionId) -> Vec<ServerId> {
        let Some((_, lf)) = self.params.get(function) else {
            return Vec::new();
        };
        lf.servers
            .iter()
            .filter(|s| self.pool.contains(*s) && !self.removed.contains(*s))
            .cloned()
            .collect()
    }

    /// Dispatches and reassignments so far for a submitted job.
    pub fn attempts(&self, job: &JobRef) -> Option<(u32, u32)> {
        self.jobs.get(job).map(|j| (j.n, j.reassigns))
    }

    fn pick(&mut self, job: &JobRef, n: u32, live: &[ServerId]) -> ServerId {
        match self.cfg.policy {
            AssignmentPolicy::RoundRobin => live
                .iter()
                .find(|s| self.last.as_ref().is_some_and(|l| *s > l))
                .unwrap_or(&live[0])
                .clone(),
            AssignmentPolicy::Random => live.choose(&mut self.rng).expect("non-empty").clone(),
            AssignmentPolicy::BidStub => live
                .iter()
                .min_by_key(|s| sha256(&[&job.to_bytes(), &n.to_be_bytes(), s.as_str().as_bytes()]))
                .expect("non-empty")
                .clone(),
        }
    }

    fn assign(&mut self, r: &JobRef, out: &mut Outbox) {
        let Some(function) = self.jobs.get(r).map(|j| j.function.clone()) else {
            return;
        };
        let live = self.live(&function);
        if live.is_empty() {
            self.jobs.get_mut(r).expect("present").stage = Stage::Queued;
            return;
        }
        let n = self.jobs[r].n + 1;
        let s = self.pick(r, n, &live);
        self.last = Some(s.clone());
        let job = self.jobs.get_mut(r).expect("present");
        job.n = n;
        job.assigned = Some(s.clone());
        job.stage = Stage::Assigned;
        out.send(
            s.to_string(),
            Message::ComputeRequest {
                dispatch: Dispatch { job: r.clone(), n },
                sigma_x: job.sigma_x.clone(),
                vk: job.vk.clone(),
            },
        );
    }

    fn assign_waiting(&mut self, stage: Stage, function: Option<&FunctionId>, out: &mut Outbox) {
        let due: Vec<JobRef> = self
            .jobs
            .iter()
            .filter(|(_, j)| j.stage == stage && function.is_none_or(|f| *f == j.function))
            .map(|(r, _)| r.clone())
            .collect();
        for r in due {
            self.assign(&r, out);
        }
    }

    fn credit(&mut self, server: &ServerId, delta: i64, out: &mut Outbox) {
        let balance = self.ledger.entry(server.clone()).or_default();
        *balance += delta;
        out.note(Note::Ledger {
            server: server.clone(),
            delta,
            balance: *balance,
        });
    }

    /// The dispatch's job, if it is still waiting on `from`.
    fn pending(&self, d: &Dispatch, from: &str) -> bool {
        self.jobs.get(&d.job).is_some_and(|j| {
            j.stage == Stage::Assigned && j.n == d.n && j.assigned.as_ref().is_some_and(|s| s.as_str() == from)
        })
    }

    /// A failed attempt: reassign, or report the failure to the client.
    fn retry(&mut self, r: &JobRef, token: Token, wait_for_revoke: bool, out: &mut Outbox) {
        let max = self.cfg.max_reassign;
        let job = self.jobs.get_mut(r).expect("present");
        job.reassigns += 1;
        if job.reassigns > max {
            job.stage = Stage::Done;
            out.send(r.client.clone(), Message::JobResult { job: r.clone(), mu: None, token });
        } else if wait_for_revoke {
            job.stage = Stage::AwaitingRevoke;
        } else {
            self.assign(r, out);
        }
    }

    fn on_reply(&mut self, from: &str, d: Dispatch, sigma_y: EncodedOutput, out: &mut Outbox) {
        if !self.pending(&d, from) {
            return;
        }
        let job = &self.jobs[&d.job];
        let Some((pk, lf)) = self.params.get(&job.function) else {
            return;
        };
        let (mu, token) = blindverify(&pk.pp, &sigma_y, &job.vk, lf);
        let server = job.assigned.clone().expect("assigned");
        let function = job.function.clone();
        out.note(Note::Verdict { dispatch: d.clone(), token: token.clone() });
        if token.is_accept() {
            self.credit(&server, 1, out);
            *self.rewards.entry(server).or_default() += 1;
            self.jobs.get_mut(&d.job).expect("present").stage = Stage::Done;
            out.send(d.job.client.clone(), Message::JobResult { job: d.job, mu, token });
            return;
        }
        self.credit(&server, -self.cfg.penalty, out);
        self.removed.insert(server);
        out.send(KDC, Message::RevokeReport { function, token: token.clone() });
        let wait = matches!(token, Token::Reject(Some(_)));
        self.retry(&d.job, token, wait, out);
    }
}

impl Actor for Manager {
    fn id(&self) -> &str {
        &self.cfg.id
    }

    fn start(&mut self, out: &mut Outbox) {
        for function in &self.functions {
            out.send(KDC, Message::ParamsRequest { function: function.clone() });
        }
    }

    fn handle(&mut self, from: &str, msg: Message, out: &mut Outbox) {
        match msg {
            Message::Published { pk, certified } => {
                let function = pk.function.clone();
                self.params.insert(function.clone(), (pk, certified));
                self.assign_waiting(Stage::Queued, Some(&function), out);
            }
            Message::JobSubmit { job: r, sigma_x, vk } => {
                if r.client != from {
                    out.note(Note::ProtocolError {
                        detail: format!("{from} submitted a job for {}", r.client),
                    });
                    return;
                }
                let function = sigma_x.function.clone();
                match self.jobs.get_mut(&r) {
                    Some(job) if job.stage == Stage::AwaitingClient => {
                        job.sigma_x = sigma_x;
                        job.vk = vk;
                    }
                    Some(_) => return,
                    None => {
                        self.jobs.insert(
                            r.clone(),
                            Job {
                                function,
                                sigma_x,
                                vk,
                                n: 0,
                                reassigns: 0,
                                assigned: None,
                                stage: Stage::Queued,
                            },
                        );
                    }
                }
                self.assign(&r, out);
            }
            Message::ComputeReply { dispatch, sigma_y } => self.on_reply(from, dispatch, sigma_y, out),
            Message::StaleEpoch { dispatch, key, .. } => {
                if self.pending(&dispatch, from) {
                    self.jobs.get_mut(&dispatch.job).expect("present").stage = Stage::AwaitingClient;
                    out.send(dispatch.job.client.clone(), Message::JobStale { job: dispatch.job, key });
                }
            }
            Message::Unavailable { dispatch } => {
                if self.pending(&dispatch, from) {
                    self.removed.insert(ServerId::new(from));
                    self.retry(&dispatch.job, Token::Reject(None), false, out);
                }
            }
            Message::RevokeReply { function, .. } => {
                self.assign_waiting(Stage::AwaitingRevoke, Some(&function), out)
            }
            Message::Refused { reason } => out.note(Note::ProtocolError {
                detail: format!("{from} refused: {reason}"),
            }),
            other => out.note(Note::ProtocolError {
                detail: format!("manager cannot handle {} from {from}", other.kind()),
            }),
        }
    }
}
