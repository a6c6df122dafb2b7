use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::bilinear::Seed;
use crate::circuits::{BoolFormula, InputAssignment};
use crate::pvc::{probgen, EncodedOutput, Signature};

fn bundled(name: &str) -> ScenarioConfig {
    let path = format!("{}/scenarios/{name}", env!("CARGO_MANIFEST_DIR"));
    ScenarioConfig::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn formula() -> String {
    "(x1 & x2) | (!x3 & x4)".into()
}

fn server(id: &str, schedule: Vec<ScheduleEntry>) -> ServerConfig {
    ServerConfig {
        id: id.into(),
        functions: vec!["F".into()],
        schedule,
    }
}

fn jobs(inputs: &[&str], server: Option<&str>) -> Vec<JobConfig> {
    inputs
        .iter()
        .map(|x| JobConfig {
            function: "F".into(),
            input: (*x).into(),
            server: server.map(Into::into),
        })
        .collect()
}

fn config(model: Model, servers: Vec<ServerConfig>, jobs: Vec<JobConfig>) -> ScenarioConfig {
    ScenarioConfig {
        model,
        seed: 11,
        depth: 3,
        binding: Default::default(),
        function_binding: Default::default(),
        functions: [("F".to_string(), formula())].into(),
        servers,
        clients: vec![ClientConfig { id: "c".into(), jobs }],
        verifiers: Vec::new(),
        manager: (model == Model::Manager).then(ManagerConfig::default),
        network: NetworkConfig::default(),
        max_reassign: 3,
    }
}

fn count(run: &ScenarioRun, kind: &str) -> usize {
    run.transcript.events().iter().filter(|e| e.kind == kind).count()
}

const FIVE: [&str; 5] = ["1100", "0001", "0010", "1011", "0000"];

#[test]
fn one_honest_server_accepts_every_input() {
    let run = run_standard_scenario(config(Model::Standard, vec![server("s0", vec![])], jobs(&FIVE, None))).unwrap();
    let r = &run.report;
    assert!(r.ok(), "{:?}", r.failures);
    assert_eq!(r.jobs.iter().filter(|j| j.status == "accepted").count(), 5);
    assert!(r.jobs.iter().all(|j| j.output == Some(j.expected)));
    assert!(r.revocations.is_empty());
    assert_eq!(count(&run, "revoke-report"), 0);
}

#[test]
fn garbage_from_the_third_input_on_is_rejected_and_revoked_once() {
    let flip = vec![ScheduleEntry { from_request: 3, mode: Behaviour::Garbage }];
    let cfg = config(
        Model::Standard,
        vec![server("s0", flip), server("s1", vec![])],
        jobs(&FIVE, Some("s0")),
    );
    let run = run_standard_scenario(cfg).unwrap();
    let r = &run.report;
    assert!(r.ok(), "{:?}", r.failures);
    let from_s0: Vec<&ResponseRecord> = r.responses.iter().filter(|x| x.server == "s0").collect();
    assert_eq!(from_s0.len(), 5);
    for (i, resp) in from_s0.iter().enumerate() {
        assert_eq!(resp.accepted, Some(i < 2), "{resp:?}");
    }
    assert_eq!(r.revocations.len(), 1);
    assert_eq!(r.revocations[0].server, "s0");
    // Every job still gets the right answer from the remaining server.
    assert!(r.jobs.iter().all(|j| j.status == "accepted" && j.output == Some(j.expected)));
    assert!(r.responses.iter().filter(|x| x.server == "s1").all(|x| x.accepted == Some(true)));
}

#[test]
fn single_cheating_server_leaves_jobs_unserved_but_scenario_consistent() {
    let flip = vec![ScheduleEntry { from_request: 3, mode: Behaviour::Garbage }];
    let run = run_standard_scenario(config(Model::Standard, vec![server("s0", flip)], jobs(&FIVE, Some("s0")))).unwrap();
    let r = &run.report;
    assert!(r.ok(), "{:?}", r.failures);
    assert_eq!(r.revocations.len(), 1);
    let statuses: Vec<&str> = r.jobs.iter().map(|j| j.status.as_str()).collect();
    assert_eq!(statuses, ["accepted", "accepted", "failed", "failed", "failed"]);
    assert_eq!(r.responses.iter().filter(|x| x.accepted == Some(false)).count(), 3);
}

#[test]
fn withholding_server_is_caught() {
    let flip = vec![ScheduleEntry { from_request: 1, mode: Behaviour::Withhold }];
    let run = run_standard_scenario(config(
        Model::Standard,
        vec![server("s0", flip), server("s1", vec![])],
        jobs(&FIVE[..2], Some("s0")),
    ))
    .unwrap();
    assert!(run.report.ok(), "{:?}", run.report.failures);
    assert_eq!(run.report.revocations.len(), 1);
}

#[test]
fn honest_pool_round_robin_rewards_evenly() {
    let nine = ["1100", "0001", "0010", "1011", "0000", "1111", "0101", "1010", "0110"];
    let servers = ["s0", "s1", "s2"].map(|s| server(s, vec![])).to_vec();
    let run = run_manager_scenario(config(Model::Manager, servers, jobs(&nine, None))).unwrap();
    let r = &run.report;
    assert!(r.ok(), "{:?}", r.failures);
    assert_eq!(r.rewards, [("s0".into(), 3), ("s1".into(), 3), ("s2".into(), 3)].into());
    assert_eq!(r.ledger.values().sum::<i64>(), 9);
}

#[test]
fn manager_revokes_the_cheater_and_reassigns() {
    let flip = vec![ScheduleEntry { from_request: 1, mode: Behaviour::Garbage }];
    let servers = vec![server("s0", vec![]), server("s1", flip), server("s2", vec![])];
    let mut cfg = config(Model::Manager, servers, jobs(&FIVE, None));
    cfg.manager = Some(ManagerConfig { penalty: 7, ..ManagerConfig::default() });
    let run = run_manager_scenario(cfg).unwrap();
    let r = &run.report;
    assert!(r.ok(), "{:?}", r.failures);
    assert_eq!(r.revocations.len(), 1);
    assert_eq!(r.revocations[0].server, "s1");
    assert_eq!(r.ledger["s1"], -7);
    assert!(r.jobs.iter().all(|j| j.output == Some(j.expected)));
    assert!(r.jobs.iter().any(|j| j.reassigns == 1));
}

#[test]
fn every_manager_reject_is_followed_by_one_report() {
    let run = run_manager_scenario(bundled("manager_one_cheater.json")).unwrap();
    assert!(run.report.ok(), "{:?}", run.report.failures);
    let mut pending = 0i64;
    for e in run.transcript.events() {
        if e.from != "manager" {
            continue;
        }
        match e.message() {
            Some(Ok(Message::Note(Note::Verdict { token, .. }))) if !token.is_accept() => pending += 1,
            Some(Ok(Message::RevokeReport { .. })) if e.to == KDC => pending -= 1,
            _ => {}
        }
        assert!((0..=1).contains(&pending), "seq {}", e.seq);
    }
    assert_eq!(pending, 0);
    assert!(run.report.responses.iter().any(|x| x.accepted == Some(false)));
}

#[test]
fn manager_sees_no_bit_and_no_output() {
    let run = run_manager_scenario(bundled("manager_one_cheater.json")).unwrap();
    let text = run.transcript.to_jsonl();
    assert!(scan_b_leak(&text).is_empty());
    for e in run.transcript.events() {
        if e.from == "manager" || e.to == "manager" {
            assert!(
                ["params-request", "published", "job-submit", "job-result", "job-stale", "compute-request",
                 "compute-reply", "stale-epoch", "unavailable", "revoke-report", "revoke-reply", "verdict",
                 "ledger"]
                    .contains(&e.kind.as_str()),
                "{}",
                e.kind
            );
        }
    }
}

#[test]
fn bundled_scenarios_pass_scan_and_replay_identically() {
    for name in ["standard_honest.json", "standard_garbage.json", "manager_one_cheater.json"] {
        let sc = bundled(name).validate().unwrap();
        let a = run_scenario(&sc).unwrap();
        let b = run_scenario(&sc).unwrap();
        assert!(a.report.ok(), "{name}: {:?}", a.report.failures);
        assert_eq!(a.transcript.to_jsonl(), b.transcript.to_jsonl(), "{name}");
        assert!(scan_b_leak(&a.transcript.to_jsonl()).is_empty(), "{name}");
        let parsed = Transcript::from_jsonl(&a.transcript.to_jsonl()).unwrap();
        assert_eq!(parsed, a.transcript);
    }
}

#[test]
fn seed_changes_the_transcript() {
    let mut cfg = bundled("standard_honest.json");
    let a = run_standard_scenario(cfg.clone()).unwrap();
    cfg.seed += 1;
    let b = run_standard_scenario(cfg).unwrap();
    assert_ne!(a.report.transcript_digest, b.report.transcript_digest);
}

#[test]
fn jitter_forces_epoch_retries_without_breaking_anything() {
    let flip = vec![ScheduleEntry { from_request: 2, mode: Behaviour::Garbage }];
    let servers = vec![server("s0", flip), server("s1", vec![]), server("s2", vec![])];
    for seed in 0..4 {
        let mut cfg = config(Model::Manager, servers.clone(), jobs(&FIVE, None));
        cfg.seed = seed;
        cfg.network.jitter = 4;
        cfg.clients.push(ClientConfig { id: "d".into(), jobs: jobs(&FIVE[1..], None) });
        let run = run_manager_scenario(cfg.clone()).unwrap();
        assert!(run.report.ok(), "seed {seed}: {:?}", run.report.failures);
        cfg.model = Model::Standard;
        cfg.verifiers = vec!["v".into()];
        let run = run_standard_scenario(cfg).unwrap();
        assert!(run.report.ok(), "seed {seed}: {:?}", run.report.failures);
    }
}

#[test]
fn secret_payloads_are_hashed_only() {
    let run = run_standard_scenario(bundled("standard_honest.json")).unwrap();
    let secret: Vec<_> = run
        .transcript
        .events()
        .iter()
        .filter(|e| ["register-reply", "certify-reply", "key-refresh"].contains(&e.kind.as_str()))
        .collect();
    assert!(!secret.is_empty());
    assert!(secret.iter().all(|e| e.payload.is_none() && e.payload_hash.len() == 64));
}

#[test]
fn scan_flags_lines_outside_the_schema() {
    let run = run_standard_scenario(bundled("standard_honest.json")).unwrap();
    let text = run.transcript.to_jsonl();
    let first = text.lines().find(|l| l.contains("\"compute-request\"")).unwrap();

    let extra = first.replacen('{', "{\"b\":true,", 1);
    assert_eq!(scan_b_leak(&extra).len(), 1);

    let renamed = first.replace("\"compute-request\"", "\"retrieval-bit\"");
    assert!(scan_b_leak(&renamed)[0].reason.contains("unknown kind"));

    let mut ev: TranscriptEvent = serde_json::from_str(first).unwrap();
    let mut bytes = hex::decode(ev.payload.as_ref().unwrap()).unwrap();
    bytes.push(1);
    ev.payload = Some(hex::encode(&bytes));
    assert!(scan_b_leak(&serde_json::to_string(&ev).unwrap())[0].reason.contains("decode"));

    let reply = text.lines().find(|l| l.contains("\"certify-reply\"")).unwrap();
    let mut ev: TranscriptEvent = serde_json::from_str(reply).unwrap();
    ev.payload = Some("00".into());
    assert!(scan_b_leak(&serde_json::to_string(&ev).unwrap())[0].reason.contains("secret"));
}

#[test]
fn config_errors_name_the_problem() {
    let mut cfg = config(Model::Standard, vec![server("s0", vec![])], jobs(&FIVE, Some("s9")));
    assert!(matches!(cfg.clone().validate(), Err(ConfigError::Unknown { what: "server", .. })));
    cfg.clients[0].jobs = jobs(&["101"], None);
    assert!(matches!(cfg.clone().validate(), Err(ConfigError::Invalid(_))));
    cfg.clients[0].jobs[0].function = "H".into();
    assert!(matches!(cfg.clone().validate(), Err(ConfigError::Unknown { what: "function", .. })));
    cfg.clients[0].jobs = Vec::new();
    cfg.servers.push(server(KDC, vec![]));
    assert!(matches!(cfg.clone().validate(), Err(ConfigError::Invalid(_))));
    cfg.servers.pop();
    assert!(matches!(
        run_manager_scenario(cfg.clone()),
        Err(ScenarioError::Model { expected: Model::Manager, .. })
    ));
    assert!(ScenarioConfig::from_json("{\"functions\": 3}").is_err());
}

#[test]
fn message_round_trip_is_canonical() {
    let run = run_manager_scenario(bundled("manager_one_cheater.json")).unwrap();
    for e in run.transcript.events() {
        if let Some(m) = e.message() {
            let m = m.unwrap();
            assert_eq!(m.kind(), e.kind);
            assert_eq!(hex::encode(m.to_wire()), *e.payload.as_ref().unwrap());
        }
    }
}

/// A KDC with `F` initialised, plus a registered and certified server.
fn kdc_with_server() -> (Kdc, Server, Outbox) {
    let f = BoolFormula::parse(&formula()).unwrap();
    let params = crate::pvc::SetupParams { depth: 3, max_arity: 4, ..Default::default() };
    let mut kdc = Kdc::new(params, [(FunctionId::from("F"), f)].into(), Seed::from_u64(5).rng());
    let mut s = Server::new(server("s0", vec![]), Seed::from_u64(6).rng());
    kdc.start(&mut Outbox::new(0));
    let mut out = Outbox::new(0);
    s.start(&mut out);
    let pump = |kdc: &mut Kdc, s: &mut Server, out: Outbox| {
        let mut replies = Outbox::new(0);
        for (_, m) in out.sent {
            let o = actor_step(kdc, 0, "s0", &m.to_wire());
            for (_, r) in o.sent {
                let o2 = actor_step(s, 0, KDC, &r.to_wire());
                replies.sent.extend(o2.sent);
            }
        }
        replies
    };
    let out = pump(&mut kdc, &mut s, out);
    (kdc, s, out)
}

#[test]
fn kdc_answers_certify_with_an_evaluation_key() {
    let (mut kdc, _, out) = kdc_with_server();
    let (to, m) = &out.sent[0];
    assert_eq!((to.as_str(), m.kind()), (KDC, "certify-request"));
    let o = actor_step(&mut kdc, 0, "s0", &m.to_wire());
    assert!(matches!(&o.sent[..], [(to, Message::CertifyReply { ek })] if to == "s0" && ek.server.as_str() == "s0"));
}

fn certified() -> (Kdc, Server) {
    let (mut kdc, mut s, out) = kdc_with_server();
    for (_, m) in out.sent {
        for (_, r) in actor_step(&mut kdc, 0, "s0", &m.to_wire()).sent {
            assert!(actor_step(&mut s, 0, KDC, &r.to_wire()).sent.is_empty());
        }
    }
    (kdc, s)
}

#[test]
fn server_answers_an_old_epoch_input_with_a_stale_notice() {
    let (mut kdc, mut s) = certified();
    let pp = kdc.pp().unwrap().clone();
    let pk = kdc.records()[&FunctionId::from("F")].delegation_key(&pp);
    let (sigma_x, vk, _) = probgen(&InputAssignment::parse("1100").unwrap(), &pk, &mut Seed::from_u64(1).rng()).unwrap();

    let mut s1 = Server::new(server("s1", vec![]), Seed::from_u64(7).rng());
    let mut o = Outbox::new(0);
    s1.start(&mut o);
    for (_, m) in o.sent {
        for (_, r) in actor_step(&mut kdc, 0, "s1", &m.to_wire()).sent {
            for (_, m2) in actor_step(&mut s1, 0, KDC, &r.to_wire()).sent {
                for (_, r2) in actor_step(&mut kdc, 0, "s1", &m2.to_wire()).sent {
                    actor_step(&mut s1, 0, KDC, &r2.to_wire());
                }
            }
        }
    }
    let report = Message::RevokeReport { function: "F".into(), token: Token::Reject(Some("s1".into())) };
    for (to, m) in actor_step(&mut kdc, 0, "c", &report.to_wire()).sent {
        if to == "s0" {
            actor_step(&mut s, 0, KDC, &m.to_wire());
        }
    }

    let d = Dispatch { job: JobRef { client: "c".into(), index: 0 }, n: 1 };
    let req = Message::ComputeRequest { dispatch: d.clone(), sigma_x, vk };
    let o = actor_step(&mut s, 0, "c", &req.to_wire());
    assert!(matches!(&o.sent[..], [(_, Message::StaleEpoch { dispatch, key: 1, input: 0 })] if *dispatch == d));
}

#[test]
fn manager_reports_a_reject_to_the_kdc() {
    let (kdc, s) = certified();
    let pp = kdc.pp().unwrap().clone();
    let rec = &kdc.records()[&FunctionId::from("F")];
    let pk = rec.delegation_key(&pp);
    let mut m = Manager::new(
        ManagerConfig::default(),
        vec!["F".into()],
        [ServerId::from("s0")].into(),
        Seed::from_u64(8).rng(),
    );
    let published = Message::Published { pk: pk.clone(), certified: rec.certified_list() };
    actor_step(&mut m, 0, KDC, &published.to_wire());
    let (sigma_x, vk, _) = probgen(&InputAssignment::parse("1100").unwrap(), &pk, &mut Seed::from_u64(2).rng()).unwrap();
    let job = JobRef { client: "c".into(), index: 0 };
    let o = actor_step(&mut m, 0, "c", &Message::JobSubmit { job: job.clone(), sigma_x, vk }.to_wire());
    let [(to, Message::ComputeRequest { dispatch, .. })] = &o.sent[..] else { panic!("{:?}", o.sent) };
    assert_eq!(to, "s0");
    drop(s);
    let junk = EncodedOutput { e1: None, e2: None, server: "s0".into(), signature: Signature([0; 64]) };
    let reply = Message::ComputeReply { dispatch: dispatch.clone(), sigma_y: junk };
    let o = actor_step(&mut m, 0, "s0", &reply.to_wire());
    let reports: Vec<_> = o.sent.iter().filter(|(to, m)| to == KDC && m.kind() == "revoke-report").collect();
    assert_eq!(reports.len(), 1);
    assert!(o.notes.iter().any(|n| matches!(n, Note::Ledger { delta: -5, .. })));
}

#[test]
fn malformed_bytes_are_dropped_with_a_note() {
    let (mut kdc, _) = certified();
    let mut bytes = Message::CertifyRequest { function: "F".into() }.to_wire();
    bytes.truncate(bytes.len() - 1);
    let o = actor_step(&mut kdc, 0, "s0", &bytes);
    assert!(o.sent.is_empty());
    assert!(matches!(&o.notes[..], [Note::ProtocolError { .. }]));
    let o = actor_step(&mut kdc, 0, "s0", &Message::Note(Note::Setup { epoch: 0 }).to_wire());
    assert!(o.sent.is_empty() && o.notes.len() == 1);
}

/// Forwards each numbered message once to a fixed peer and records arrivals.
struct Relay {
    id: String,
    peers: Vec<String>,
    burst: u32,
    got: BTreeMap<String, Vec<u32>>,
}

impl Actor for Relay {
    fn id(&self) -> &str {
        &self.id
    }

    fn start(&mut self, out: &mut Outbox) {
        for i in 0..self.burst {
            for p in &self.peers {
                out.send(p.clone(), Message::Refused { reason: i.to_string() });
            }
        }
    }

    fn handle(&mut self, from: &str, msg: Message, _: &mut Outbox) {
        let Message::Refused { reason } = msg else { panic!() };
        self.got.entry(from.to_owned()).or_default().push(reason.parse().unwrap());
    }
}

struct Relays(Vec<Relay>);

impl ActorSet for Relays {
    fn ids(&self) -> Vec<String> {
        self.0.iter().map(|r| r.id.clone()).collect()
    }

    fn get(&mut self, id: &str) -> Option<&mut dyn Actor> {
        self.0.iter_mut().find(|r| r.id == id).map(|r| r as &mut dyn Actor)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn channels_are_fifo_and_lossless(seed in any::<u64>(), jitter in 0u64..20, burst in 1u32..30, n in 2usize..5) {
        let ids: Vec<String> = (0..n).map(|i| format!("a{i}")).collect();
        let mut set = Relays(ids.iter().map(|id| Relay {
            id: id.clone(),
            peers: ids.iter().filter(|p| *p != id).cloned().collect(),
            burst,
            got: BTreeMap::new(),
        }).collect());
        let cfg = NetworkConfig { latency: 1, jitter, drop: 0.0 };
        let mut net = SimNetwork::new(cfg, Seed::from_u64(seed).rng());
        let stats = net.run(&mut set, DELIVERY_LIMIT).unwrap();
        prop_assert_eq!(stats.delivered, stats.sent);
        let expected: Vec<u32> = (0..burst).collect();
        for r in &set.0 {
            prop_assert_eq!(r.got.len(), n - 1);
            for seq in r.got.values() {
                prop_assert_eq!(seq, &expected);
            }
        }
    }

    #[test]
    fn dropped_messages_are_logged_not_delivered(seed in any::<u64>(), drop in 0.05f64..0.9) {
        let ids = ["a0".to_string(), "a1".to_string()];
        let mut set = Relays(ids.iter().map(|id| Relay {
            id: id.clone(),
            peers: ids.iter().filter(|p| *p != id).cloned().collect(),
            burst: 20,
            got: BTreeMap::new(),
        }).collect());
        let mut net = SimNetwork::new(NetworkConfig { latency: 1, jitter: 3, drop }, Seed::from_u64(seed).rng());
        let stats = net.run(&mut set, DELIVERY_LIMIT).unwrap();
        prop_assert_eq!(stats.delivered + stats.dropped, stats.sent);
        let logged_drops = net.transcript().events().iter().filter(|e| e.dropped).count() as u64;
        prop_assert_eq!(logged_drops, stats.dropped);
        for r in &set.0 {
            for seq in r.got.values() {
                prop_assert!(seq.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}
