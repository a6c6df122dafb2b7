use std::path::Path;

use pvckdc::actors::{run_scenario, ManagerConfig, Model, ScenarioConfig, ScenarioError};

use crate::Outcome;

pub struct Overrides {
    pub seed: Option<u64>,
    pub depth: Option<u32>,
    pub model: Option<Model>,
}

impl Overrides {
    fn apply(self, cfg: &mut ScenarioConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(depth) = self.depth {
            cfg.depth = depth;
        }
        match self.model {
            Some(Model::Manager) => {
                cfg.model = Model::Manager;
                cfg.manager.get_or_insert_with(ManagerConfig::default);
            }
            Some(Model::Standard) => {
                cfg.model = Model::Standard;
                cfg.manager = None;
            }
            None => {}
        }
    }
}

pub fn run(path: &Path, overrides: Overrides, out: &Path) -> Outcome {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return Outcome::Usage;
        }
    };
    let mut cfg = match ScenarioConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return Outcome::Usage;
        }
    };
    overrides.apply(&mut cfg);
    let scenario = match cfg.validate() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return Outcome::Usage;
        }
    };
    let run = match run_scenario(&scenario) {
        Ok(r) => r,
        Err(ScenarioError::Config(e)) => {
            eprintln!("error: {e}");
            return Outcome::Usage;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return Outcome::Fail;
        }
    };
    if let Err(e) = std::fs::write(out, run.transcript.to_jsonl()) {
        eprintln!("error: cannot write {}: {e}", out.display());
        return Outcome::Usage;
    }
    println!("{}", serde_json::to_string_pretty(&run.report).expect("report serializes"));
    if run.report.ok() {
        Outcome::Pass
    } else {
        for f in &run.report.failures {
            eprintln!("failure: {f}");
        }
        Outcome::Fail
    }
}
