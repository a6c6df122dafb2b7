use std::collections::BTreeMap;
use std::path::Path;

use pvckdc::actors::{scan_b_leak, Message, Note, Transcript};

use crate::Outcome;

pub fn run(path: &Path, assert_no_b_leak: bool) -> Outcome {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return Outcome::Usage;
        }
    };
    let transcript = match Transcript::from_jsonl(&text) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return Outcome::Fail;
        }
    };

    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    let mut dropped = 0;
    let mut verdicts = Vec::new();
    let mut revocations = Vec::new();
    let mut ledger: BTreeMap<String, i64> = BTreeMap::new();
    for e in transcript.events() {
        *kinds.entry(e.kind.as_str()).or_default() += 1;
        dropped += usize::from(e.dropped);
        match e.message() {
            Some(Ok(Message::Note(Note::Verdict { dispatch, token }))) => {
                verdicts.push((e.from.clone(), dispatch.to_string(), token))
            }
            Some(Ok(Message::Note(Note::Revoked { function, server, epoch }))) => {
                revocations.push(format!("{server} from {function} at epoch {epoch}"))
            }
            Some(Ok(Message::Note(Note::Ledger { server, balance, .. }))) => {
                ledger.insert(server.to_string(), balance);
            }
            Some(Err(reason)) => {
                eprintln!("error: {}: event {}: {reason}", path.display(), e.seq);
                return Outcome::Fail;
            }
            _ => {}
        }
    }

    let rejects = verdicts.iter().filter(|(_, _, t)| !t.is_accept()).count();
    println!("events: {} ({dropped} dropped)", transcript.events().len());
    for (kind, n) in &kinds {
        println!("  {kind:<16} {n}");
    }
    println!("verdicts: {} accept, {rejects} reject", verdicts.len() - rejects);
    for (who, dispatch, token) in &verdicts {
        println!("  {who:<12} {dispatch:<12} {token}");
    }
    println!("revocations: {}", revocations.len());
    for r in &revocations {
        println!("  {r}");
    }
    if !ledger.is_empty() {
        println!("ledger:");
        for (server, balance) in &ledger {
            println!("  {server:<12} {balance:+}");
        }
    }

    if assert_no_b_leak {
        let leaks = scan_b_leak(&text);
        if !leaks.is_empty() {
            for l in &leaks {
                eprintln!("leak: line {}: {}", l.line, l.reason);
            }
            return Outcome::Fail;
        }
        println!("b-leak scan: clean");
    }
    Outcome::Pass
}
