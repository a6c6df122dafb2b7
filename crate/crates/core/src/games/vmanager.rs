//! Vindictive manager: the party relaying results hands the client a value
//! and token that retrieve to the wrong answer.

use crate::bilinear::{random_gt, DetRng, GtElem};
use crate::circuits::{BoolFormula, InputAssignment};
use crate::pvc::{
    blindverify, probgen, retrieve, CertifiedList, EncodedOutput, FunctionKey, PublicParams,
    ServerId, Token, VerificationKey,
};

use super::{stage, GameConfig, GameError, GameId, OracleError, OracleMask, Oracles, System, TrialLog, TrialResult, POOL};

pub const STRATEGIES: &[&str] = &["random-mu", "echo-mu", "swap-token", "self-certify"];

pub struct InputView<'a> {
    pub formula: &'a BoolFormula,
    pub pk: FunctionKey,
    pub certified: CertifiedList,
}

pub struct OutputView<'a> {
    pub pp: &'a PublicParams,
    pub sigma_y: &'a EncodedOutput,
    pub vk: &'a VerificationKey,
    pub pk: FunctionKey,
    pub certified: CertifiedList,
}

pub trait Adversary {
    fn choose_input(&mut self, view: &InputView<'_>, o: &mut Oracles<'_>) -> Result<InputAssignment, OracleError> {
        Ok(InputAssignment::random(o.rng(), view.formula.arity()))
    }

    fn respond(&mut self, view: &OutputView<'_>, o: &mut Oracles<'_>) -> Result<(Option<GtElem>, Token), OracleError>;
}

/// A random value with an accept token.
pub struct RandomMu;

impl Adversary for RandomMu {
    fn respond(&mut self, view: &OutputView<'_>, o: &mut Oracles<'_>) -> Result<(Option<GtElem>, Token), OracleError> {
        Ok((Some(random_gt(o.rng())), Token::Accept(view.sigma_y.server.clone())))
    }
}

/// Forwards the honest blind-verification result.
pub struct EchoMu;

impl Adversary for EchoMu {
    fn respond(&mut self, view: &OutputView<'_>, _: &mut Oracles<'_>) -> Result<(Option<GtElem>, Token), OracleError> {
        Ok(blindverify(view.pp, view.sigma_y, view.vk, &view.certified))
    }
}

/// Blind-verifies a garbage output, then flips the resulting reject into
/// an accept.
pub struct SwapToken;

impl Adversary for SwapToken {
    fn respond(&mut self, view: &OutputView<'_>, o: &mut Oracles<'_>) -> Result<(Option<GtElem>, Token), OracleError> {
        let mut junk = view.sigma_y.clone();
        junk.e1 = Some(random_gt(o.rng()));
        junk.e2 = Some(random_gt(o.rng()));
        let (_, token) = blindverify(view.pp, &junk, view.vk, &view.certified);
        let token = match token {
            Token::Reject(_) => Token::Accept(junk.server.clone()),
            t => t,
        };
        Ok((junk.e1, token))
    }
}

/// Gets an evaluation key for `F` of its own, which does not help without
/// the encoded input.
pub struct SelfCertify;

impl Adversary for SelfCertify {
    fn choose_input(&mut self, view: &InputView<'_>, o: &mut Oracles<'_>) -> Result<InputAssignment, OracleError> {
        let id = ServerId::from("manager");
        o.register(id.clone())?;
        o.certify(&view.pk.function, &id)?;
        Ok(InputAssignment::random(o.rng(), view.formula.arity()))
    }

    fn respond(&mut self, view: &OutputView<'_>, o: &mut Oracles<'_>) -> Result<(Option<GtElem>, Token), OracleError> {
        Ok((Some(random_gt(o.rng())), Token::Accept(view.sigma_y.server.clone())))
    }
}

pub fn adversary(strategy: &str) -> Option<Box<dyn Adversary>> {
    Some(match strategy {
        "random-mu" => Box::new(RandomMu),
        "echo-mu" => Box::new(EchoMu),
        "swap-token" => Box::new(SwapToken),
        "self-certify" => Box::new(SelfCertify),
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
        game: GameId::VindictiveManager,
        strategy: strategy.to_owned(),
    })?;
    let mut sys = System::new(cfg, rng)?;
    log.step("setup");
    log.step("fninit");
    let server = sys.register_honest(POOL[0], rng)?;
    log.step("register");
    sys.certify(&server, rng)?;
    log.step("certify");

    let view = InputView {
        formula: &cfg.formula,
        pk: sys.delegation_key(),
        certified: sys.certified(),
    };
    let mut oracles = Oracles::new(&mut sys, rng, log, OracleMask::STANDARD, cfg.query_budget);
    let x = adv.choose_input(&view, &mut oracles);
    let x = match stage(&oracles, x) {
        Ok(x) => x,
        Err(invalid) => return Ok(invalid),
    };
    log.step("choose-input");
    let Ok(expected) = cfg.formula.evaluate(&x) else {
        return Ok(TrialResult::Invalid(format!("input of {} bits", x.len())));
    };
    let (sigma_x, vk, b) = probgen(&x, &sys.delegation_key(), rng)?;
    log.step("probgen");
    let sigma_y = sys.honest_compute(&server, &sigma_x, &vk)?;
    log.step("compute");

    let pp = sys.pp.clone();
    let view = OutputView {
        pp: &pp,
        sigma_y: &sigma_y,
        vk: &vk,
        pk: sys.delegation_key(),
        certified: sys.certified(),
    };
    let mut oracles = Oracles::new(&mut sys, rng, log, OracleMask::STANDARD, cfg.query_budget);
    let response = adv.respond(&view, &mut oracles);
    let (mu, token) = match stage(&oracles, response) {
        Ok(r) => r,
        Err(invalid) => return Ok(invalid),
    };
    log.step("adversary-output");
    let y = retrieve(mu.as_ref(), &token, &vk, b);
    log.step("retrieve");
    Ok(TrialResult::Completed {
        won: y.is_some_and(|y| y != expected),
    })
}
