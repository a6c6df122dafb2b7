//! Acceptance run: one line per criterion, non-zero exit if any fails.
//!
//! Every check compares the library against an oracle written here from
//! first principles (truth tables, brute-force cover enumeration), never
//! against the library's own helpers.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use pvckdc::actors::{run_scenario, scan_b_leak, Behaviour, ScenarioConfig, ScheduleEntry};
use pvckdc::bilinear::{hash_output, random_gt, DetRng};
use pvckdc::circuits::attr_encode;
use pvckdc::games::{run_game, GameOutcome};
use pvckdc::pvc::probgen_with;
use pvckdc::rkpabe::{
    abe_decrypt, abe_encrypt, abe_keygen, abe_keyupdate, abe_refresh_epoch, abe_setup, AbeUniverse,
    IdentityTree, SharedCoins,
};
use pvckdc::{
    certify, compute, fninit, probgen, register, setup, verify, BoolFormula, FunctionBinding, FunctionId,
    GameConfig, GameId, InputAssignment, RetrievalBit, Seed, ServerId, SetupParams, SignatureBinding, Token,
};

/// Test-side formula, evaluated independently of the library's parser.
#[derive(Clone, Debug)]
enum Expr {
    Var(usize),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

impl Expr {
    fn random(rng: &mut DetRng, n: usize, depth: u32) -> Expr {
        if depth == 0 || rng.gen_bool(0.3) {
            let v = Expr::Var(rng.gen_range(0..n));
            return if rng.gen_bool(0.3) { Expr::Not(Box::new(v)) } else { v };
        }
        let a = Box::new(Expr::random(rng, n, depth - 1));
        let b = Box::new(Expr::random(rng, n, depth - 1));
        match rng.gen_range(0..5) {
            0 => Expr::Not(Box::new(Expr::And(a, b))),
            1 | 2 => Expr::And(a, b),
            _ => Expr::Or(a, b),
        }
    }

    fn text(&self) -> String {
        match self {
            Expr::Var(i) => format!("x{}", i + 1),
            Expr::Not(e) => format!("!({})", e.text()),
            Expr::And(a, b) => format!("({} & {})", a.text(), b.text()),
            Expr::Or(a, b) => format!("({} | {})", a.text(), b.text()),
        }
    }

    fn eval(&self, x: &[bool]) -> bool {
        match self {
            Expr::Var(i) => x[*i],
            Expr::Not(e) => !e.eval(x),
            Expr::And(a, b) => a.eval(x) && b.eval(x),
            Expr::Or(a, b) => a.eval(x) || b.eval(x),
        }
    }

    fn is_constant(&self, n: usize) -> bool {
        let values: BTreeSet<bool> = (0..1u32 << n).map(|v| self.eval(&bits(v, n))).collect();
        values.len() == 1
    }
}

/// `n` bits of `v`, x1 first.
fn bits(v: u32, n: usize) -> Vec<bool> {
    (0..n).map(|i| v >> (n - 1 - i) & 1 == 1).collect()
}

fn assignment(x: &[bool]) -> InputAssignment {
    InputAssignment::parse(&x.iter().map(|b| if *b { '1' } else { '0' }).collect::<String>()).unwrap()
}

struct Line {
    id: String,
    pass: bool,
}

fn line(id: impl Into<String>, pass: bool, detail: impl AsRef<str>) -> Line {
    let l = Line { id: id.into(), pass };
    println!("{} {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.id, detail.as_ref());
    l
}

fn correctness() -> Line {
    let start = Instant::now();
    let mut rng = Seed::from_u64(100).rng();
    let mut failures = Vec::new();
    let runs = 200;
    for run in 0..runs {
        let n = rng.gen_range(1..=8);
        let expr = loop {
            let e = Expr::random(&mut rng, n, 4);
            if !e.is_constant(n) {
                break e;
            }
        };
        let params = SetupParams { depth: 2, max_arity: n, ..SetupParams::default() };
        let (mut pp, mut msk) = setup(&params, &mut rng).unwrap();
        let f = BoolFormula::parse_with_arity(&expr.text(), n).unwrap();
        let mut rec = fninit(&pp, &mut msk, FunctionId::from("f"), f).unwrap();
        let k = rng.gen_range(1..=4);
        let mut servers = Vec::new();
        for i in 0..k {
            let sk = register(&mut pp, &mut msk, ServerId::new(format!("s{i}")), &mut rng).unwrap();
            servers.push(sk);
        }
        let mut eks = Vec::new();
        for sk in &servers {
            eks.push(certify(&pp, &msk, &mut rec, sk.id(), &mut rng).unwrap());
        }
        let x: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let pk = rec.delegation_key(&pp);
        let (sx, vk, b) = probgen(&assignment(&x), &pk, &mut rng).unwrap();
        let who = rng.gen_range(0..k);
        let sy = compute(&sx, &vk, &eks[who], &servers[who]).unwrap();
        let got = verify(&pp, &sy, &vk, &rec.certified_list(), b);
        let want = (Some(expr.eval(&x)), Token::Accept(servers[who].id().clone()));
        if got != want {
            failures.push(format!("run {run}: {} on {x:?} gave {got:?}", expr.text()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    line(
        "1 correctness",
        failures.is_empty() && secs < 120.0,
        format!("{runs} randomized honest runs, {} failures, {secs:.1}s {:?}", failures.len(), failures.first()),
    )
}

fn complement_well_formed() -> Line {
    let text = "(x1 & x2) | (!x3 & x4)";
    let oracle = |x: &[bool]| (x[0] && x[1]) || (!x[2] && x[3]);
    let mut rng = Seed::from_u64(200).rng();
    let (mut pp, mut msk) = setup(&SetupParams { depth: 1, max_arity: 4, ..SetupParams::default() }, &mut rng).unwrap();
    let mut rec = fninit(&pp, &mut msk, FunctionId::from("f"), BoolFormula::parse(text).unwrap()).unwrap();
    let sk = register(&mut pp, &mut msk, ServerId::from("s0"), &mut rng).unwrap();
    let ek = certify(&pp, &msk, &mut rec, sk.id(), &mut rng).unwrap();
    let pk = rec.delegation_key(&pp);
    let mut bad = Vec::new();
    for v in 0..16 {
        let x = bits(v, 4);
        for b in [false, true] {
            let (m0, m1) = (random_gt(&mut rng), random_gt(&mut rng));
            let (sx, vk, _) = probgen_with(&assignment(&x), &pk, &m0, &m1, RetrievalBit::new(b), &mut rng).unwrap();
            let sy = compute(&sx, &vk, &ek, &sk).unwrap();
            let present: Vec<_> = [(sy.e1, vk.h1), (sy.e2, vk.h2)]
                .into_iter()
                .filter_map(|(e, h)| e.map(|e| (e, h)))
                .collect();
            let ok = match present[..] {
                [(e, h)] => hash_output(&e) == h && (e == m0) == oracle(&x) && (e == m0 || e == m1),
                _ => false,
            };
            if !ok {
                bad.push((v, b));
            }
        }
    }
    line(
        "2 complement well-formedness",
        bad.is_empty(),
        format!("16 inputs x 2 slot orders, {} malformed outputs {bad:?}", bad.len()),
    )
}

fn decrypt_iff() -> Line {
    let mut rng = Seed::from_u64(300).rng();
    let mut formulas: Vec<Expr> = Vec::new();
    let mut seen = BTreeSet::new();
    while formulas.len() < 24 {
        let e = Expr::random(&mut rng, 3, 3);
        if !e.is_constant(3) && seen.insert(e.text()) {
            formulas.push(e);
        }
    }
    // Certified slots per epoch: revoke slot 1, then slot 3.
    let schedule: [BTreeSet<u32>; 3] = [(0..4).collect(), [0, 2, 3].into(), [0, 2].into()];
    let mut checks = 0;
    let mut discrepancies = Vec::new();
    for (fi, expr) in formulas.iter().enumerate() {
        let universe = AbeUniverse::new(3, 2).unwrap();
        let (mut mpk, mut msk) = abe_setup(&universe, &SharedCoins::new(Seed::from_u64(fi as u64)), &mut rng);
        let policy = BoolFormula::parse_with_arity(&expr.text(), 3).unwrap().to_policy().unwrap();
        let keys: Vec<_> = (0..4).map(|s| abe_keygen(s, &policy, &msk, &mpk, &mut rng).unwrap()).collect();
        let mut uks = Vec::new();
        let mut cts = Vec::new();
        for (epoch, certified) in schedule.iter().enumerate() {
            let epoch = epoch as u64;
            abe_refresh_epoch(&mut mpk, &mut msk, epoch).unwrap();
            uks.push(abe_keyupdate(certified, epoch, &msk, &mpk).unwrap());
            for v in 0..8 {
                let m = random_gt(&mut rng);
                let ct = abe_encrypt(epoch, &attr_encode(&assignment(&bits(v, 3))), &m, &mpk, &mut rng).unwrap();
                cts.push((epoch, v, m, ct));
            }
        }
        for (ct_epoch, v, m, ct) in &cts {
            for (uk_epoch, uk) in uks.iter().enumerate() {
                for (slot, sk) in keys.iter().enumerate() {
                    let expected = *ct_epoch == uk_epoch as u64
                        && expr.eval(&bits(*v, 3))
                        && schedule[uk_epoch].contains(&(slot as u32));
                    let got = abe_decrypt(ct, sk, uk) == Some(*m);
                    checks += 1;
                    if got != expected {
                        discrepancies.push(format!("{} x={v} ct@{ct_epoch} uk@{uk_epoch} slot {slot}", expr.text()));
                    }
                }
            }
        }
    }
    line(
        "3 decrypt-iff oracle",
        discrepancies.is_empty(),
        format!("{} formulas, {checks} decryptions, {} discrepancies {:?}", formulas.len(), discrepancies.len(), discrepancies.first()),
    )
}

/// Every way to write `slots` as disjoint complete subtrees of a depth-`d`
/// heap-ordered tree, as sets of node ids.
fn exact_covers(node: u32, d: u32, slots: &BTreeSet<u32>) -> Vec<BTreeSet<u32>> {
    let level = 31 - node.leading_zeros();
    let height = d - level;
    let first = (node << height) - (1 << d);
    let under: Vec<u32> = (first..first + (1 << height)).collect();
    let hit = under.iter().filter(|s| slots.contains(s)).count();
    if hit == 0 {
        return vec![BTreeSet::new()];
    }
    let mut out = Vec::new();
    if hit == under.len() {
        out.push([node].into());
    }
    if height > 0 {
        for l in exact_covers(2 * node, d, slots) {
            for r in exact_covers(2 * node + 1, d, slots) {
                out.push(l.union(&r).copied().collect());
            }
        }
    }
    out
}

fn cover() -> Line {
    let d = 4;
    let tree = IdentityTree::new(d).unwrap();
    let mut rng = Seed::from_u64(400).rng();
    let mut bad = 0;
    let trials = 1000;
    for _ in 0..trials {
        let slots: BTreeSet<u32> = (0..16).filter(|_| rng.gen_bool(0.5)).collect();
        let got = tree.cover(&slots).unwrap();
        let all = exact_covers(1, d, &slots);
        let min = all.iter().map(BTreeSet::len).min().unwrap();
        let minimal: Vec<_> = all.iter().filter(|c| c.len() == min).collect();
        let leaves: BTreeSet<u32> = got.iter().flat_map(|&n| tree.leaves_under(n)).collect();
        let antichain = got.iter().all(|&a| got.iter().all(|&b| a == b || !is_ancestor(a, b)));
        if minimal != [&got] || leaves != slots || !antichain {
            bad += 1;
        }
    }
    line(
        "4 cover correctness",
        bad == 0,
        format!("depth {d}, {trials} random subsets against exhaustive enumeration, {bad} discrepancies"),
    )
}

fn is_ancestor(a: u32, mut b: u32) -> bool {
    while b > a {
        b >>= 1;
    }
    a == b
}

fn play(game: GameId, strategy: &str, trials: usize, seed: u64, tweak: impl FnOnce(&mut GameConfig)) -> GameOutcome {
    let mut cfg = GameConfig::new(trials, Seed::from_u64(seed));
    tweak(&mut cfg);
    run_game(game, strategy, &cfg).unwrap()
}

fn summary(o: &GameOutcome) -> String {
    let ci = pvckdc::games::wilson(o.wins, o.trials).map(|i| i.upper).unwrap_or(f64::NAN);
    format!("{} {}/{} (ci upper {ci:.4}, {} invalidated)", o.strategy, o.wins, o.trials, o.invalidated)
}

fn revocation() -> Line {
    let runs: Vec<_> = ["stale-key-replay", "random-forgery"]
        .iter()
        .map(|s| play(GameId::Revocation, s, 1000, 500, |_| {}))
        .collect();
    let pass = runs.iter().all(|o| {
        let upper = pvckdc::games::wilson(o.wins, o.trials).unwrap().upper;
        o.trials == 1000 && o.wins == 0 && upper < 0.004 && o.control.1 > 0 && o.control.0 == o.control.1
    });
    let controls: Vec<String> = runs.iter().map(|o| format!("{}/{}", o.control.0, o.control.1)).collect();
    let detail: Vec<String> = runs.iter().map(summary).collect();
    line("5 revocation", pass, format!("{}; control accepts {}", detail.join("; "), controls.join(", ")))
}

fn pubverif_and_manager() -> (Line, Line) {
    let mut runs = Vec::new();
    for s in GameId::PubVerif.strategies() {
        let tagged = *s == "complement-function";
        runs.push(play(GameId::PubVerif, s, 1000, 600, |c| {
            if tagged {
                c.function_binding = FunctionBinding::Tagged;
            }
        }));
    }
    for s in GameId::VindictiveManager.strategies() {
        runs.push(play(GameId::VindictiveManager, s, 1000, 601, |_| {}));
    }
    let pass = runs.iter().all(|o| o.trials == 1000 && o.wins == 0);
    let detail: Vec<String> = runs.iter().map(summary).collect();
    let main = line(
        "6 public verifiability and vindictive manager",
        pass,
        format!("{} (complement-function with tagged functions)", detail.join("; ")),
    );
    let shared = play(GameId::PubVerif, "complement-function", 200, 602, |_| {});
    let finding = line(
        "finding: complement-function with shared parameters",
        shared.wins * 2 > shared.trials,
        format!("{}; one certified key answers for a second function's complement", summary(&shared)),
    );
    (main, finding)
}

fn vindictive_servers() -> (Line, Line) {
    let mut runs = Vec::new();
    for s in GameId::VindictiveServer.strategies() {
        let vk = *s == "foreign-replay";
        runs.push(play(GameId::VindictiveServer, s, 1000, 700, |c| {
            if vk {
                c.binding = SignatureBinding::OutputWithVk;
            }
        }));
    }
    let pass = runs.iter().all(|o| match o.strategy.as_str() {
        "register-then-frame" | "compute-challenge-then-frame" => o.trials == 0 && o.wins == 0 && o.invalidated == 1000,
        _ => o.trials == 1000 && o.wins == 0,
    });
    let detail: Vec<String> = runs.iter().map(summary).collect();
    let main = line(
        "7 vindictive servers",
        pass,
        format!("{} (foreign-replay with the key-bound signature)", detail.join("; ")),
    );
    let loose = play(GameId::VindictiveServer, "foreign-replay", 200, 702, |_| {});
    let finding = line(
        "finding: foreign-replay with output-only signatures",
        loose.wins * 2 > loose.trials,
        format!("{}; a signed output replays under another client's key", summary(&loose)),
    );
    (main, finding)
}

fn bundled() -> Vec<(String, ScenarioConfig)> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios");
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, ScenarioConfig::from_json(&std::fs::read_to_string(&p).unwrap()).unwrap())
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn blind_verification() -> Line {
    let runs: Vec<_> = ["match-first-slot", "hash-probe"]
        .iter()
        .map(|s| play(GameId::BlindVerification, s, 2000, 800, |_| {}))
        .collect();
    let in_band = runs.iter().all(|o| o.win_rate().is_some_and(|r| (0.45..=0.55).contains(&r)));

    // Bundled scenarios plus jittered, cheating variants of each.
    let mut transcripts = 0;
    let mut leaks = Vec::new();
    for (name, cfg) in bundled() {
        for seed in 0..3 {
            let mut cfg = cfg.clone();
            cfg.seed += seed;
            if seed > 0 {
                cfg.network.jitter = 3;
                cfg.servers[0].schedule = vec![ScheduleEntry { from_request: 2, mode: Behaviour::Garbage }];
            }
            let run = run_scenario(&cfg.validate().unwrap()).unwrap();
            transcripts += 1;
            for l in scan_b_leak(&run.transcript.to_jsonl()) {
                leaks.push(format!("{name}#{seed} line {}: {}", l.line, l.reason));
            }
        }
    }
    let rates: Vec<String> = runs
        .iter()
        .map(|o| format!("{} accuracy {:.4} over {}", o.strategy, o.win_rate().unwrap_or(f64::NAN), o.trials))
        .collect();
    line(
        "8 blind verification",
        in_band && leaks.is_empty(),
        format!("{}; b-scan over {transcripts} transcripts, {} leaks {:?}", rates.join("; "), leaks.len(), leaks.first()),
    )
}

fn determinism() -> Line {
    let mut mismatched = Vec::new();
    let mut names = Vec::new();
    for (name, cfg) in bundled() {
        let sc = cfg.validate().unwrap();
        let a = run_scenario(&sc).unwrap().report.transcript_digest;
        let b = run_scenario(&sc).unwrap().report.transcript_digest;
        if a != b {
            mismatched.push(name.clone());
        }
        names.push(name);
    }
    line(
        "9 determinism",
        mismatched.is_empty() && !names.is_empty(),
        format!("{} bundled configs run twice, mismatched: {mismatched:?}", names.len()),
    )
}

/// Challenger steps run in the prescribed order in every trial.
fn fidelity() -> Line {
    let before = |o: &GameOutcome, a: &str, b: &str| {
        o.logs.iter().all(|l| matches!((l.position(a), l.position(b)), (Some(i), Some(j)) if i < j))
    };
    // `b` may be skipped, but never precedes `a`.
    let never_before = |o: &GameOutcome, a: &str, b: &str| {
        o.logs.iter().all(|l| match (l.position(a), l.position(b)) {
            (Some(i), Some(j)) => i < j,
            (_, None) => true,
            (None, Some(_)) => false,
        })
    };
    let rev = play(GameId::Revocation, "stale-key-replay", 20, 900, |_| {});
    let pv = play(GameId::PubVerif, "random-forgery", 20, 901, |_| {});
    let vs = play(GameId::VindictiveServer, "random-signature", 20, 902, |_| {});
    let framed = play(GameId::VindictiveServer, "foreign-replay", 20, 905, |_| {});
    let vm = play(GameId::VindictiveManager, "random-mu", 20, 903, |_| {});
    let bv = play(GameId::BlindVerification, "match-first-slot", 20, 904, |_| {});
    let checks = [
        before(&pv, "declare-targets", "setup"),
        before(&pv, "choose-certified", "probgen"),
        before(&pv, "probgen", "adversary-output"),
        before(&pv, "adversary-output", "verify"),
        before(&rev, "declare-targets", "setup"),
        before(&rev, "revoke", "probgen"),
        before(&rev, "probgen", "adversary-output"),
        before(&rev, "verify", "control"),
        before(&vs, "probgen", "adversary-output"),
        never_before(&vs, "verify", "revoke"),
        before(&vs, "declare-targets", "setup"),
        before(&framed, "verify", "revoke"),
        before(&vm, "compute", "adversary-output"),
        before(&vm, "adversary-output", "retrieve"),
        before(&bv, "compute", "adversary-guess"),
    ];
    let failed: Vec<usize> = checks.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i).collect();
    line("game step order", failed.is_empty(), format!("{} ordering checks, failed {failed:?}", checks.len()))
}

/// Runs every criterion, or only those whose key contains one of the
/// command-line arguments.
fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    type Criterion = (&'static str, fn() -> Vec<Line>);
    let criteria: [Criterion; 10] = [
        ("correctness", || vec![correctness()]),
        ("complement", || vec![complement_well_formed()]),
        ("decrypt-iff", || vec![decrypt_iff()]),
        ("cover", || vec![cover()]),
        ("revocation", || vec![revocation()]),
        ("pubverif-vmanager", || {
            let (a, b) = pubverif_and_manager();
            vec![a, b]
        }),
        ("vserver", || {
            let (a, b) = vindictive_servers();
            vec![a, b]
        }),
        ("bverif", || vec![blind_verification()]),
        ("determinism", || vec![determinism()]),
        ("fidelity", || vec![fidelity()]),
    ];
    let start = Instant::now();
    let mut lines = Vec::new();
    for (key, run) in criteria {
        if filters.is_empty() || filters.iter().any(|f| key.contains(f.as_str())) {
            lines.extend(run());
        }
    }
    let failed: Vec<&str> = lines.iter().filter(|l| !l.pass).map(|l| l.id.as_str()).collect();
    println!(
        "acceptance: {}/{} passed in {:.0}s",
        lines.len() - failed.len(),
        lines.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
