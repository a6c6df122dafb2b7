//! Blind verification: a verifier without the retrieval bit guesses `F(x)`
//! from the encoded output and verification key.

use crate::bilinear::{hash_output, DetRng};
use crate::circuits::InputAssignment;
use crate::pvc::{probgen, CertifiedList, EncodedOutput, FunctionKey, PublicParams, ServerId, VerificationKey};

use super::{stage, GameConfig, GameError, GameId, OracleError, OracleMask, Oracles, System, TrialLog, TrialResult, POOL};

pub const STRATEGIES: &[&str] = &["match-first-slot", "hash-probe", "constant-guess", "certify-probe"];

pub struct GuessView<'a> {
    pub sigma_y: &'a EncodedOutput,
    pub vk: &'a VerificationKey,
    pub pp: &'a PublicParams,
    pub pk: FunctionKey,
    pub certified: CertifiedList,
}

pub trait Adversary {
    fn guess(&mut self, view: &GuessView<'_>, o: &mut Oracles<'_>) -> Result<bool, OracleError>;
}

/// Guesses 1 exactly when slot 1 carries the value.
pub struct MatchFirstSlot;

impl Adversary for MatchFirstSlot {
    fn guess(&mut self, view: &GuessView<'_>, _: &mut Oracles<'_>) -> Result<bool, OracleError> {
        Ok(view.sigma_y.e1.is_some())
    }
}

/// Guesses 1 when the value's digest is the smaller of the two published
/// digests.
pub struct HashProbe;

impl Adversary for HashProbe {
    fn guess(&mut self, view: &GuessView<'_>, _: &mut Oracles<'_>) -> Result<bool, OracleError> {
        let smaller = view.vk.h1.0.min(view.vk.h2.0);
        Ok(view
            .sigma_y
            .values()
            .into_iter()
            .flatten()
            .any(|m| hash_output(m).0 == smaller))
    }
}

pub struct ConstantGuess;

impl Adversary for ConstantGuess {
    fn guess(&mut self, _: &GuessView<'_>, _: &mut Oracles<'_>) -> Result<bool, OracleError> {
        Ok(true)
    }
}

/// Asks to be certified for `F` itself, which the game forbids.
pub struct CertifyProbe;

impl Adversary for CertifyProbe {
    fn guess(&mut self, view: &GuessView<'_>, o: &mut Oracles<'_>) -> Result<bool, OracleError> {
        let id = ServerId::from("prober");
        o.register(id.clone())?;
        o.certify(&view.pk.function, &id)?;
        Ok(true)
    }
}

pub fn adversary(strategy: &str) -> Option<Box<dyn Adversary>> {
    Some(match strategy {
        "match-first-slot" => Box::new(MatchFirstSlot),
        "hash-probe" => Box::new(HashProbe),
        "constant-guess" => Box::new(ConstantGuess),
        "certify-probe" => Box::new(CertifyProbe),
        _ => return None,
    })
}

pub(crate) fn trial(
    strategy: &str,
    cfg: &GameConfig,
    rng: &mut DetRng,
    log: &mut TrialLog,
) -> Result<TrialResult, GameError> {
    let mut adv = adversary(strategy).ok_or_else(|| GameError::UnknownStrategy {
        game: GameId::BlindVerification,
        strategy: strategy.to_owned(),
    })?;
    let mut sys = System::new(cfg, rng)?;
    log.step("setup");
    log.step("fninit");
    let server = sys.register_honest(POOL[0], rng)?;
    log.step("register");
    sys.certify(&server, rng)?;
    log.step("certify");
    let x = InputAssignment::random(rng, cfg.formula.arity());
    log.step("sample-input");
    let (sigma_x, vk, _b) = probgen(&x, &sys.delegation_key(), rng)?;
    log.step("probgen");
    let sigma_y = sys.honest_compute(&server, &sigma_x, &vk)?;
    log.step("compute");

    let pp = sys.pp.clone();
    let view = GuessView {
        sigma_y: &sigma_y,
        vk: &vk,
        pp: &pp,
        pk: sys.delegation_key(),
        certified: sys.certified(),
    };
    let mask = OracleMask::STANDARD.without_challenge_certify();
    let mut oracles = Oracles::new(&mut sys, rng, log, mask, cfg.query_budget);
    let guess = adv.guess(&view, &mut oracles);
    let guess = match stage(&oracles, guess) {
        Ok(g) => g,
        Err(invalid) => return Ok(invalid),
    };
    log.step("adversary-guess");
    Ok(TrialResult::Completed {
        won: Ok(guess) == cfg.formula.evaluate(&x),
    })
}
