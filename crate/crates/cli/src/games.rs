use pvckdc::games::{estimate_advantage, expectation, run_game, Expectation};
use pvckdc::{FunctionBinding, GameConfig, GameError, GameId, Interval, Seed, SignatureBinding};
use serde::Serialize;

use crate::Outcome;

#[derive(Serialize)]
struct Summary {
    game: GameId,
    strategy: String,
    trials: usize,
    wins: usize,
    invalidated: usize,
    advantage: Option<f64>,
    ci: Option<Interval>,
    expected: Expectation,
    holds: bool,
}

pub fn run(
    game: &str,
    strategy: &str,
    trials: usize,
    seed: u64,
    depth: Option<u32>,
    binding: SignatureBinding,
    function_binding: FunctionBinding,
) -> Outcome {
    let game: GameId = match game.parse() {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return Outcome::Usage;
        }
    };
    let mut cfg = GameConfig::new(trials, Seed::from_u64(seed));
    cfg.binding = binding;
    cfg.function_binding = function_binding;
    if let Some(d) = depth {
        cfg.depth = d;
    }
    let Some(expected) = expectation(game, strategy, &cfg) else {
        eprintln!("error: unknown strategy {strategy:?} for {game}; known: {}", game.strategies().join(", "));
        return Outcome::Usage;
    };
    let outcome = match run_game(game, strategy, &cfg) {
        Ok(o) => o,
        Err(e @ (GameError::UnknownGame(_) | GameError::UnknownStrategy { .. })) => {
            eprintln!("error: {e}");
            return Outcome::Usage;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return Outcome::Fail;
        }
    };
    let holds = expected.holds(&outcome);
    let summary = Summary {
        game,
        strategy: outcome.strategy.clone(),
        trials: outcome.trials,
        wins: outcome.wins,
        invalidated: outcome.invalidated,
        advantage: outcome.advantage(),
        ci: estimate_advantage(&outcome).ok(),
        expected,
        holds,
    };
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    if holds {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}
