//! Executable security experiments with pluggable adversaries.
//!
//! Each game plays many independent trials against one named strategy and
//! reports the empirical win rate. A correct implementation keeps every
//! built-in forgery strategy at zero wins; a broken one typically lets a
//! strategy win almost always.

pub mod bverif;
pub mod oracles;
pub mod pubverif;
pub mod revocation;
pub mod vmanager;
pub mod vserver;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bilinear::{DetRng, Seed};
use crate::circuits::{BoolFormula, InputAssignment};
use crate::pvc::{
    EncodedInput, EvaluationKey, FunctionBinding, PvcError, RetrievalBit, ServerId, ServerKey,
    SignatureBinding, Token, VerificationKey,
};
use crate::rkpabe::Epoch;

pub use oracles::{OracleError, OracleMask, Oracles, System};

/// Oracle queries allowed per trial.
pub const MAX_QUERIES: usize = 64;

/// 97.5th percentile of the standard normal distribution.
const Z_95: f64 = 1.959964;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GameId {
    PubVerif,
    Revocation,
    VindictiveServer,
    VindictiveManager,
    BlindVerification,
}

impl GameId {
    pub const ALL: [GameId; 5] = [
        GameId::PubVerif,
        GameId::Revocation,
        GameId::VindictiveServer,
        GameId::VindictiveManager,
        GameId::BlindVerification,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            GameId::PubVerif => "pubverif",
            GameId::Revocation => "revocation",
            GameId::VindictiveServer => "vserver",
            GameId::VindictiveManager => "vmanager",
            GameId::BlindVerification => "bverif",
        }
    }

    pub fn strategies(&self) -> &'static [&'static str] {
        match self {
            GameId::PubVerif => pubverif::STRATEGIES,
            GameId::Revocation => revocation::STRATEGIES,
            GameId::VindictiveServer => vserver::STRATEGIES,
            GameId::VindictiveManager => vmanager::STRATEGIES,
            GameId::BlindVerification => bverif::STRATEGIES,
        }
    }
}

impl fmt::Display for GameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for GameId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl FromStr for GameId {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, GameError> {
        let by_number = s.parse::<usize>().ok().and_then(|i| GameId::ALL.get(i.wrapping_sub(1)));
        by_number
            .copied()
            .or_else(|| GameId::ALL.into_iter().find(|g| g.name() == s))
            .ok_or_else(|| GameError::UnknownGame(s.to_owned()))
    }
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("unknown game {0:?}")]
    UnknownGame(String),
    #[error("unknown strategy {strategy:?} for game {game}")]
    UnknownStrategy { game: GameId, strategy: String },
    #[error("advantage is undefined for zero counted trials")]
    NoTrials,
    #[error("challenger failure: {0}")]
    Challenger(#[from] PvcError),
    #[error("honest server failure: {0}")]
    Honest(#[from] OracleError),
}

#[derive(Clone, Debug)]
pub struct GameConfig {
    pub trials: usize,
    pub seed: Seed,
    pub depth: u32,
    pub binding: SignatureBinding,
    pub function_binding: FunctionBinding,
    pub formula: BoolFormula,
    pub query_budget: usize,
}

impl GameConfig {
    pub fn new(trials: usize, seed: Seed) -> Self {
        Self {
            trials,
            seed,
            depth: 3,
            binding: SignatureBinding::OutputOnly,
            function_binding: FunctionBinding::Shared,
            formula: balanced_formula(),
            query_budget: MAX_QUERIES,
        }
    }
}

/// A three-input multiplexer: true on exactly half of all inputs.
pub fn balanced_formula() -> BoolFormula {
    BoolFormula::parse("(x1 & x2) | (!x1 & x3)").expect("static formula")
}

/// Steps the challenger and oracles executed in one trial, in order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TrialLog {
    pub index: usize,
    pub steps: Vec<&'static str>,
    pub won: bool,
    pub invalidated: Option<String>,
    /// Honest control computations in this trial: (accepted, total).
    pub control: (usize, usize),
}

impl TrialLog {
    pub(crate) fn step(&mut self, step: &'static str) {
        self.steps.push(step);
    }

    pub fn position(&self, step: &str) -> Option<usize> {
        self.steps.iter().position(|s| *s == step)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Wilson score interval at 95% confidence.
pub fn wilson(wins: usize, trials: usize) -> Result<Interval, GameError> {
    if trials == 0 {
        return Err(GameError::NoTrials);
    }
    let n = trials as f64;
    let p = wins as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(Interval {
        point: p,
        lower: (centre - half).max(0.0),
        upper: (centre + half).min(1.0),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GameOutcome {
    pub game: GameId,
    pub strategy: String,
    /// Trials that ran to completion within the oracle rules.
    pub trials: usize,
    pub wins: usize,
    /// Trials discarded for breaking an oracle rule or game condition.
    pub invalidated: usize,
    /// Probability of the likelier output value under uniform inputs.
    pub base_rate: f64,
    /// Honest control computations: (accepted, total).
    pub control: (usize, usize),
    #[serde(skip)]
    pub logs: Vec<TrialLog>,
}

impl GameOutcome {
    /// Win rate over counted trials.
    pub fn win_rate(&self) -> Option<f64> {
        (self.trials > 0).then(|| self.wins as f64 / self.trials as f64)
    }

    /// For the guessing game the advantage is the distance from the base
    /// rate; for the others it is the win rate.
    pub fn advantage(&self) -> Option<f64> {
        let rate = self.win_rate()?;
        Some(match self.game {
            GameId::BlindVerification => (rate - self.base_rate).abs(),
            _ => rate,
        })
    }
}

/// Point estimate and 95% interval for the win rate.
pub fn estimate_advantage(outcome: &GameOutcome) -> Result<Interval, GameError> {
    wilson(outcome.wins, outcome.trials)
}

/// What a correct implementation should produce for a strategy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Expectation {
    ZeroWins,
    /// Win-rate (accuracy) band, inclusive.
    Band { lower: f64, upper: f64 },
    /// Every trial is discarded by the runner.
    AllInvalidated,
    /// The strategy is expected to win: a known gap, kept as a regression
    /// witness.
    Wins,
}

impl Expectation {
    pub fn holds(&self, o: &GameOutcome) -> bool {
        match self {
            Expectation::ZeroWins => o.trials > 0 && o.wins == 0,
            Expectation::Band { lower, upper } => {
                o.win_rate().is_some_and(|r| (*lower..=*upper).contains(&r))
            }
            Expectation::AllInvalidated => o.trials == 0 && o.invalidated > 0,
            Expectation::Wins => o.win_rate().is_some_and(|r| r > 0.5),
        }
    }
}

/// The outcome a strategy should produce under `cfg`'s bindings.
pub fn expectation(game: GameId, strategy: &str, cfg: &GameConfig) -> Option<Expectation> {
    if !game.strategies().contains(&strategy) {
        return None;
    }
    Some(match (game, strategy) {
        (GameId::PubVerif, "complement-function") => match cfg.function_binding {
            FunctionBinding::Shared => Expectation::Wins,
            FunctionBinding::Tagged => Expectation::ZeroWins,
        },
        (GameId::VindictiveServer, "register-then-frame" | "compute-challenge-then-frame") => {
            Expectation::AllInvalidated
        }
        (GameId::VindictiveServer, "foreign-replay") => match cfg.binding {
            SignatureBinding::OutputOnly => Expectation::Wins,
            SignatureBinding::OutputWithVk => Expectation::ZeroWins,
        },
        (GameId::BlindVerification, "certify-probe") => Expectation::AllInvalidated,
        (GameId::BlindVerification, _) => Expectation::Band {
            lower: 0.45,
            upper: 0.55,
        },
        _ => Expectation::ZeroWins,
    })
}

pub(crate) enum TrialResult {
    Completed { won: bool },
    Invalid(String),
}

/// Identity the challenger registers for the adversary.
pub const ADVERSARY: &str = "adversary";

/// Honest servers registered before the adversary chooses `L_F`.
pub const POOL: [&str; 3] = ["s0", "s1", "s2"];

/// A declared challenge: an input and the epoch, counted from the start of
/// the challenge phase, in which it is encoded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Target {
    pub epoch: Epoch,
    pub x: InputAssignment,
}

/// Two distinct random inputs; the second lands one epoch later half of
/// the time.
pub fn default_targets(arity: usize, rng: &mut DetRng) -> Vec<Target> {
    use rand::Rng;
    let first = InputAssignment::random(rng, arity);
    let mut second = InputAssignment::random(rng, arity);
    while arity > 0 && second == first {
        second = InputAssignment::random(rng, arity);
    }
    vec![
        Target { epoch: 0, x: first },
        Target {
            epoch: rng.gen_range(0..=1),
            x: second,
        },
    ]
}

/// The public part of one challenge encoding.
#[derive(Clone, Debug)]
pub struct ChallengeView {
    pub x: InputAssignment,
    pub sigma_x: EncodedInput,
    pub vk: VerificationKey,
}

/// Challenge encodings plus the retrieval bits the challenger keeps.
pub(crate) struct Challenges {
    pub views: Vec<ChallengeView>,
    pub bits: Vec<RetrievalBit>,
}

/// Challenger state shared by the games that follow the standard opening:
/// setup, function initialisation and adversary registration.
pub(crate) struct Challenger {
    pub sys: System,
    pub adversary: ServerKey,
    pub pool: Vec<ServerId>,
    fillers: usize,
}

impl Challenger {
    pub fn open(cfg: &GameConfig, rng: &mut DetRng, log: &mut TrialLog) -> Result<Self, PvcError> {
        let mut sys = System::new(cfg, rng)?;
        log.step("setup");
        log.step("fninit");
        let adversary = sys.register_adversary(ADVERSARY, rng)?;
        log.step("register-adversary");
        Ok(Challenger {
            sys,
            adversary,
            pool: Vec::new(),
            fillers: 0,
        })
    }

    pub fn register_pool(&mut self, rng: &mut DetRng, log: &mut TrialLog) -> Result<(), PvcError> {
        for id in POOL {
            self.pool.push(self.sys.register_honest(id, rng)?);
        }
        log.step("register-pool");
        Ok(())
    }

    /// Certifies the adversary and the chosen pool members for the
    /// challenge function; unknown names are ignored.
    pub fn certify(
        &mut self,
        chosen: &[ServerId],
        rng: &mut DetRng,
        log: &mut TrialLog,
    ) -> Result<EvaluationKey, PvcError> {
        for s in chosen.iter().filter(|s| self.pool.contains(s)) {
            self.sys.certify(s, rng)?;
        }
        let ek = self.sys.certify(&self.adversary.id().clone(), rng)?;
        log.step("certify");
        Ok(ek)
    }

    /// Moves to the next epoch by certifying and revoking a fresh filler
    /// server. Returns the reissued key of the adversary, if it is still
    /// certified.
    pub fn advance_epoch(
        &mut self,
        rng: &mut DetRng,
        log: &mut TrialLog,
    ) -> Result<Option<EvaluationKey>, PvcError> {
        let filler = self.sys.register_honest(&format!("filler-{}", self.fillers), rng)?;
        self.fillers += 1;
        self.sys.certify(&filler, rng)?;
        let function = self.sys.function.clone();
        let reissued = self
            .sys
            .revoke(&Token::Reject(Some(filler)), &function)?
            .unwrap_or_default();
        log.step("revoke-filler");
        Ok(reissued.into_iter().find(|ek| ek.server == *self.adversary.id()))
    }

    /// Encodes each target in its epoch, advancing epochs as needed.
    /// Returns the encodings in declaration order together with the
    /// adversary keys seen at each epoch.
    pub fn encode(
        &mut self,
        targets: &[Target],
        mut adversary_ek: Option<EvaluationKey>,
        rng: &mut DetRng,
        log: &mut TrialLog,
    ) -> Result<(Challenges, Vec<EvaluationKey>), PvcError> {
        let base = self.sys.pp.epoch();
        let mut order: Vec<usize> = (0..targets.len()).collect();
        order.sort_by_key(|&i| targets[i].epoch);
        let mut slots = vec![None; targets.len()];
        let mut eks: Vec<EvaluationKey> = adversary_ek.iter().cloned().collect();
        for i in order {
            while self.sys.pp.epoch() < base + targets[i].epoch {
                adversary_ek = self.advance_epoch(rng, log)?;
                eks.extend(adversary_ek.iter().cloned());
            }
            let pk = self.sys.delegation_key();
            let (sigma_x, vk, b) = crate::pvc::probgen(&targets[i].x, &pk, rng)?;
            log.step("probgen");
            slots[i] = Some((
                ChallengeView {
                    x: targets[i].x.clone(),
                    sigma_x,
                    vk,
                },
                b,
            ));
        }
        let (views, bits) = slots.into_iter().map(|s| s.expect("every target encoded")).unzip();
        Ok((Challenges { views, bits }, eks))
    }
}

/// Runs one adversary stage and turns oracle-rule violations into an
/// invalid trial.
pub(crate) fn stage<T>(
    oracles: &Oracles<'_>,
    result: Result<T, OracleError>,
) -> Result<T, TrialResult> {
    match (&oracles.violation, result) {
        (Some(v), _) => Err(TrialResult::Invalid(v.clone())),
        (None, Err(e)) => Err(TrialResult::Invalid(e.to_string())),
        (None, Ok(v)) => Ok(v),
    }
}

pub(crate) fn trial_rng(cfg: &GameConfig, game: GameId, strategy: &str, index: usize) -> DetRng {
    cfg.seed.derive(&format!("{game}/{strategy}"), index as u64).rng()
}

pub(crate) fn fraction_true(f: &BoolFormula) -> f64 {
    let n = f.arity();
    let ones = (0..1u64 << n)
        .filter(|&v| f.evaluate(&InputAssignment::from_index(v, n)).unwrap_or(false))
        .count();
    ones as f64 / (1u64 << n) as f64
}

pub fn run_game(game: GameId, strategy: &str, cfg: &GameConfig) -> Result<GameOutcome, GameError> {
    if !game.strategies().contains(&strategy) {
        return Err(GameError::UnknownStrategy {
            game,
            strategy: strategy.to_owned(),
        });
    }
    let results: Vec<Result<TrialLog, GameError>> = (0..cfg.trials)
        .into_par_iter()
        .map(|index| {
            let mut rng = trial_rng(cfg, game, strategy, index);
            let mut log = TrialLog {
                index,
                ..TrialLog::default()
            };
            let result = match game {
                GameId::PubVerif => pubverif::trial(strategy, cfg, &mut rng, &mut log),
                GameId::Revocation => revocation::trial(strategy, cfg, &mut rng, &mut log),
                GameId::VindictiveServer => vserver::trial(strategy, cfg, &mut rng, &mut log),
                GameId::VindictiveManager => vmanager::trial(strategy, cfg, &mut rng, &mut log),
                GameId::BlindVerification => bverif::trial(strategy, cfg, &mut rng, &mut log),
            }?;
            match result {
                TrialResult::Completed { won } => log.won = won,
                TrialResult::Invalid(why) => log.invalidated = Some(why),
            }
            Ok(log)
        })
        .collect();
    let logs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let counted = logs.iter().filter(|l| l.invalidated.is_none());
    let p = fraction_true(&cfg.formula);
    Ok(GameOutcome {
        game,
        strategy: strategy.to_owned(),
        trials: counted.clone().count(),
        wins: counted.clone().filter(|l| l.won).count(),
        invalidated: logs.len() - counted.count(),
        base_rate: p.max(1.0 - p),
        control: logs
            .iter()
            .fold((0, 0), |(a, t), l| (a + l.control.0, t + l.control.1)),
        logs,
    })
}
