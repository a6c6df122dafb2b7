//! Multi-party simulation of the delegation protocol.
//!
//! The KDC, servers, clients, an optional manager and external verifiers are
//! message-driven state machines ([`Actor`]) on a single-threaded
//! discrete-event network ([`SimNetwork`]). Every message crosses the
//! network as canonical bytes and is logged to a JSON-lines [`Transcript`];
//! payloads that carry secret keys are logged by hash only.
//!
//! In the standard model a client sends its encoded input straight to a
//! server, verifies the output itself and reports rejects to the KDC. In the
//! manager model clients submit jobs to a manager, which picks a server from
//! its pool, blind-verifies the output, keeps a reward ledger, reports
//! rejects and reassigns failed jobs. Either way the retrieval bit stays in
//! the client's [`JobRecord`].

pub mod config;
mod client;
mod kdc;
mod manager;
pub mod message;
pub mod net;
mod server;
mod verifier;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::bilinear::Seed;
use crate::pvc::{FunctionId, ServerId, SetupParams, Token};

pub use client::{Client, JobRecord, JobStatus, STALE_LIMIT};
pub use config::{
    AssignmentPolicy, Behaviour, ClientConfig, ConfigError, JobConfig, ManagerConfig, Model,
    NetworkConfig, Scenario, ScenarioConfig, ScheduleEntry, ServerConfig,
};
pub use kdc::Kdc;
pub use manager::Manager;
pub use message::{Dispatch, JobRef, Message, Note};
pub use net::{
    actor_step, scan_b_leak, Actor, ActorSet, Leak, NetStats, Outbox, SimError, SimNetwork,
    Transcript, TranscriptError, TranscriptEvent,
};
pub use server::Server;
pub use verifier::Verifier;

/// Actor id of the key distribution center.
pub const KDC: &str = "kdc";

/// Deliveries after which a run is considered stuck.
pub const DELIVERY_LIMIT: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("scenario is for the {found:?} model, expected {expected:?}")]
    Model { expected: Model, found: Model },
}

struct World {
    kdc: Kdc,
    servers: BTreeMap<String, Server>,
    clients: BTreeMap<String, Client>,
    manager: Option<Manager>,
    verifiers: BTreeMap<String, Verifier>,
    order: Vec<String>,
}

impl ActorSet for World {
    fn ids(&self) -> Vec<String> {
        self.order.clone()
    }

    fn get(&mut self, id: &str) -> Option<&mut dyn Actor> {
        if id == KDC {
            return Some(&mut self.kdc);
        }
        if let Some(m) = self.manager.as_mut().filter(|m| m.id() == id) {
            return Some(m);
        }
        if let Some(s) = self.servers.get_mut(id) {
            return Some(s);
        }
        if let Some(c) = self.clients.get_mut(id) {
            return Some(c);
        }
        self.verifiers.get_mut(id).map(|v| v as &mut dyn Actor)
    }
}

impl World {
    fn build(sc: &Scenario, seed: Seed) -> World {
        let cfg = &sc.config;
        let rng = |label: &str| seed.derive(label, 0).rng();
        let functions: BTreeMap<FunctionId, _> = sc
            .formulas
            .iter()
            .map(|(k, f)| (FunctionId::new(k.as_str()), f.clone()))
            .collect();
        let max_arity = sc.formulas.values().map(|f| f.arity()).max().unwrap_or(1);
        let params = SetupParams {
            depth: cfg.depth,
            max_arity,
            max_functions: functions.len().max(SetupParams::default().max_functions),
            binding: cfg.binding,
            function_binding: cfg.function_binding,
        };
        let mut order = vec![KDC.to_owned()];
        let kdc = Kdc::new(params, functions.clone(), rng(KDC));

        let servers: BTreeMap<String, Server> = cfg
            .servers
            .iter()
            .map(|s| (s.id.clone(), Server::new(s.clone(), rng(&format!("server:{}", s.id)))))
            .collect();
        order.extend(cfg.servers.iter().map(|s| s.id.clone()));

        let manager = (cfg.model == Model::Manager)
            .then(|| cfg.manager.clone().unwrap_or_default())
            .map(|m| {
                let pool = cfg.servers.iter().map(|s| ServerId::new(s.id.as_str())).collect();
                let id = m.id.clone();
                order.push(id.clone());
                Manager::new(m, functions.keys().cloned().collect(), pool, rng(&format!("manager:{id}")))
            });

        let verifiers: BTreeMap<String, Verifier> = cfg
            .verifiers
            .iter()
            .map(|v| (v.clone(), Verifier::new(v.clone(), functions.keys().cloned().collect())))
            .collect();
        order.extend(cfg.verifiers.iter().cloned());

        let mut clients = BTreeMap::new();
        for c in &cfg.clients {
            let jobs = c
                .jobs
                .iter()
                .enumerate()
                .map(|(i, j)| {
                    JobRecord::new(
                        JobRef { client: c.id.clone(), index: i as u32 },
                        FunctionId::new(j.function.as_str()),
                        sc.inputs[&(c.id.clone(), i)].clone(),
                        j.server.as_deref().map(ServerId::new),
                    )
                })
                .collect();
            let client = Client::new(
                c.id.clone(),
                cfg.model,
                manager.as_ref().map(|m| m.id().to_owned()),
                if cfg.model == Model::Standard { cfg.verifiers.clone() } else { Vec::new() },
                cfg.max_reassign,
                jobs,
                rng(&format!("client:{}", c.id)),
            );
            clients.insert(c.id.clone(), client);
            order.push(c.id.clone());
        }
        World {
            kdc,
            servers,
            clients,
            manager,
            verifiers,
            order,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct JobOutcome {
    pub job: String,
    pub function: String,
    pub input: String,
    pub expected: bool,
    /// `accepted`, `failed` or `pending`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub dispatches: u32,
    pub reassigns: u32,
}

/// One output a server produced and what the party responsible for
/// verification made of it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ResponseRecord {
    pub dispatch: String,
    pub server: String,
    pub mode: Behaviour,
    pub verdict: Option<String>,
    pub accepted: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RevocationRecord {
    pub function: String,
    pub server: String,
    pub epoch: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub model: Model,
    pub jobs: Vec<JobOutcome>,
    pub responses: Vec<ResponseRecord>,
    pub revocations: Vec<RevocationRecord>,
    pub revoke_reports: usize,
    pub ledger: BTreeMap<String, i64>,
    pub rewards: BTreeMap<String, u32>,
    pub protocol_errors: usize,
    pub messages: u64,
    pub dropped: u64,
    pub final_time: u64,
    pub transcript_digest: String,
    /// Empty exactly when every honest job was accepted with the right
    /// output and every misbehaviour was rejected and led to a revocation.
    pub failures: Vec<String>,
}

impl ScenarioReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

pub struct ScenarioRun {
    pub transcript: Transcript,
    pub report: ScenarioReport,
}

/// Verdict notes in transcript order: (who, dispatch, token).
fn verdicts(t: &Transcript) -> Vec<(String, Dispatch, Token)> {
    t.events()
        .iter()
        .filter(|e| e.kind == "verdict")
        .filter_map(|e| match e.message() {
            Some(Ok(Message::Note(Note::Verdict { dispatch, token }))) => Some((e.from.clone(), dispatch, token)),
            _ => None,
        })
        .collect()
}

fn report(world: &World, net: &SimNetwork, model: Model) -> ScenarioReport {
    let t = net.transcript();
    let all = verdicts(t);
    let deciders: BTreeSet<&str> = world
        .clients
        .keys()
        .map(String::as_str)
        .chain(world.manager.as_ref().map(|m| m.id()))
        .collect();
    let primary: BTreeMap<&Dispatch, &Token> = all
        .iter()
        .filter(|(who, _, _)| deciders.contains(who.as_str()))
        .map(|(_, d, t)| (d, t))
        .collect();

    let mut failures = Vec::new();
    let mut responses = Vec::new();
    let mut misbehaved = BTreeSet::new();
    for (id, s) in &world.servers {
        for (d, mode) in &s.served {
            let verdict = primary.get(d).copied();
            let accepted = verdict.map(Token::is_accept);
            if *mode == Behaviour::Honest && accepted == Some(false) {
                failures.push(format!("{id}: honest output for {d} was rejected"));
            }
            if *mode != Behaviour::Honest {
                misbehaved.insert(id.clone());
                if accepted == Some(true) {
                    failures.push(format!("{id}: {mode:?} output for {d} was accepted"));
                }
            }
            responses.push(ResponseRecord {
                dispatch: d.to_string(),
                server: id.clone(),
                mode: *mode,
                verdict: verdict.map(|t| t.to_string()),
                accepted,
            });
        }
    }

    let revocations: Vec<RevocationRecord> = world
        .kdc
        .revocations
        .iter()
        .map(|(f, s, e)| RevocationRecord {
            function: f.to_string(),
            server: s.to_string(),
            epoch: *e,
        })
        .collect();
    for s in &misbehaved {
        if !revocations.iter().any(|r| &r.server == s) {
            failures.push(format!("{s} misbehaved but was never revoked"));
        }
    }

    for (v, verifier) in &world.verifiers {
        for (d, token) in &verifier.verdicts {
            if let Some(p) = primary.get(d) {
                if p.is_accept() != token.is_accept() {
                    failures.push(format!("{v} judged {d} as {token}, the client as {p}"));
                }
            }
        }
    }

    let honest_left = |function: &FunctionId| {
        world.kdc.records().get(function).is_some_and(|rec| {
            rec.certified_list().servers.iter().any(|s| !misbehaved.contains(s.as_str()))
        })
    };
    let mut jobs = Vec::new();
    for c in world.clients.values() {
        for j in &c.jobs {
            let expected = world_formula(world, &j.function).evaluate(&j.x).expect("validated input");
            let (status, output, reason) = match &j.status {
                JobStatus::Accepted(y) => ("accepted", Some(*y), None),
                JobStatus::Failed(r) => ("failed", None, Some(r.clone())),
                other => ("pending", None, Some(format!("{other:?}"))),
            };
            match (&j.status, output) {
                (JobStatus::Accepted(_), Some(y)) if y != expected => {
                    failures.push(format!("{}: accepted output {y} but F(x) = {expected}", j.job))
                }
                (JobStatus::Accepted(_), _) => {}
                (JobStatus::Failed(r), _) if honest_left(&j.function) => {
                    failures.push(format!("{}: failed ({r}) with honest servers available", j.job))
                }
                (JobStatus::Failed(_), _) => {}
                _ => failures.push(format!("{}: still pending", j.job)),
            }
            let (dispatches, reassigns) = match &world.manager {
                Some(m) => m.attempts(&j.job).unwrap_or_default(),
                None => (j.dispatches, j.reassigns),
            };
            let bits: String = j.x.bits().iter().map(|b| if *b { '1' } else { '0' }).collect();
            jobs.push(JobOutcome {
                job: j.job.to_string(),
                function: j.function.to_string(),
                input: bits,
                expected,
                status: status.into(),
                output,
                reason,
                dispatches,
                reassigns,
            });
        }
    }

    let protocol_errors = t.events().iter().filter(|e| e.kind == "protocol-error").count();
    if protocol_errors > 0 {
        failures.push(format!("{protocol_errors} protocol errors"));
    }
    let revoke_reports = t.events().iter().filter(|e| e.kind == "revoke-report" && !e.dropped).count();
    let stats = net.stats();
    let (ledger, rewards) = match &world.manager {
        Some(m) => (
            m.ledger.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            m.rewards.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        ),
        None => Default::default(),
    };
    ScenarioReport {
        model,
        jobs,
        responses,
        revocations,
        revoke_reports,
        ledger,
        rewards,
        protocol_errors,
        messages: stats.sent,
        dropped: stats.dropped,
        final_time: net.now(),
        transcript_digest: t.digest().to_hex(),
        failures,
    }
}

fn world_formula<'a>(world: &'a World, f: &FunctionId) -> &'a crate::circuits::BoolFormula {
    world.kdc.records()[f].formula()
}

/// Runs a validated scenario under whichever model it names.
pub fn run_scenario(sc: &Scenario) -> Result<ScenarioRun, ScenarioError> {
    let seed = Seed::from_u64(sc.config.seed);
    let mut world = World::build(sc, seed);
    let mut net = SimNetwork::new(sc.config.network.clone(), seed.derive("network", 0).rng());
    net.run(&mut world, DELIVERY_LIMIT)?;
    let report = report(&world, &net, sc.config.model);
    Ok(ScenarioRun {
        transcript: net.into_transcript(),
        report,
    })
}

/// setup, fninit, register, certify, probgen, compute, verify and revoke on
/// reject, with clients talking to servers directly.
pub fn run_standard_scenario(config: ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    run_model(config, Model::Standard)
}

/// Clients submit to the manager, which assigns, blind-verifies, rewards or
/// penalizes, reports rejects and reassigns.
pub fn run_manager_scenario(config: ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    run_model(config, Model::Manager)
}

fn run_model(config: ScenarioConfig, expected: Model) -> Result<ScenarioRun, ScenarioError> {
    if config.model != expected {
        return Err(ScenarioError::Model {
            expected,
            found: config.model,
        });
    }
    run_scenario(&config.validate()?)
}

#[cfg(test)]
mod tests;
