//! Vindictive servers: a certified server tries to make the KDC revoke an
//! honest server by getting a bad output attributed to it.

use std::collections::BTreeSet;

use crate::bilinear::{random_gt, DetRng};
use crate::circuits::InputAssignment;
use crate::pvc::{
    probgen, sign_output, verify, CertifiedList, EncodedOutput, FunctionKey, ServerId, ServerKey,
    Signature, Token,
};

use super::oracles::input_digest;
use super::{
    default_targets, stage, ChallengeView, Challenger, GameConfig, GameError, GameId, OracleError,
    OracleMask, Oracles, Target, TrialLog, TrialResult,
};

pub const STRATEGIES: &[&str] = &[
    "random-signature",
    "self-attribution",
    "register-then-frame",
    "compute-challenge-then-frame",
    "foreign-replay",
];

pub struct FrameView<'a> {
    pub pk: FunctionKey,
    pub certified: CertifiedList,
    pub challenges: &'a [ChallengeView],
    pub sk: &'a ServerKey,
}

impl FrameView<'_> {
    /// First certified honest server.
    pub fn victim(&self) -> ServerId {
        self.certified
            .servers
            .iter()
            .find(|s| *s != self.sk.id())
            .cloned()
            .unwrap_or_else(|| self.sk.id().clone())
    }
}

pub trait Adversary {
    fn choose_targets(&mut self, arity: usize, rng: &mut DetRng) -> Vec<Target> {
        default_targets(arity, rng)
    }

    fn choose_certified(&mut self, pool: &[ServerId], _rng: &mut DetRng) -> Vec<ServerId> {
        pool.to_vec()
    }

    /// Names the server to frame. Must not register it.
    fn choose_victim(&mut self, view: &FrameView<'_>, o: &mut Oracles<'_>) -> Result<ServerId, OracleError>;

    /// Produces the output meant to be blamed on `victim`. Must not ask the
    /// victim to compute a challenge input.
    fn frame(
        &mut self,
        view: &FrameView<'_>,
        victim: &ServerId,
        o: &mut Oracles<'_>,
    ) -> Result<EncodedOutput, OracleError>;
}

fn garbage(view: &FrameView<'_>, o: &mut Oracles<'_>) -> EncodedOutput {
    let (e1, e2) = (random_gt(o.rng()), random_gt(o.rng()));
    sign_output(Some(e1), Some(e2), view.sk, &view.challenges[0].vk)
}

/// Random values claimed for the victim with random signature bytes.
pub struct RandomSignature;

impl Adversary for RandomSignature {
    fn choose_victim(&mut self, view: &FrameView<'_>, _: &mut Oracles<'_>) -> Result<ServerId, OracleError> {
        Ok(view.victim())
    }

    fn frame(&mut self, view: &FrameView<'_>, victim: &ServerId, o: &mut Oracles<'_>) -> Result<EncodedOutput, OracleError> {
        use rand::RngCore;
        let mut out = garbage(view, o);
        let mut sig = [0u8; 64];
        o.rng().fill_bytes(&mut sig);
        out.server = victim.clone();
        out.signature = Signature(sig);
        Ok(out)
    }
}

/// Signs with its own key and names the victim as the producer.
pub struct SelfAttribution;

impl Adversary for SelfAttribution {
    fn choose_victim(&mut self, view: &FrameView<'_>, _: &mut Oracles<'_>) -> Result<ServerId, OracleError> {
        Ok(view.victim())
    }

    fn frame(&mut self, view: &FrameView<'_>, victim: &ServerId, o: &mut Oracles<'_>) -> Result<EncodedOutput, OracleError> {
        let mut out = garbage(view, o);
        out.server = victim.clone();
        Ok(out)
    }
}

/// Registers and certifies a fresh identity, then frames it. Breaks the
/// first condition.
#[derive(Default)]
pub struct RegisterThenFrame {
    key: Option<ServerKey>,
}

impl Adversary for RegisterThenFrame {
    fn choose_victim(&mut self, view: &FrameView<'_>, o: &mut Oracles<'_>) -> Result<ServerId, OracleError> {
        let id = ServerId::from("puppet");
        let key = o.register(id.clone())?;
        o.certify(&view.pk.function, &id)?;
        self.key = Some(key);
        Ok(id)
    }

    fn frame(&mut self, view: &FrameView<'_>, _: &ServerId, o: &mut Oracles<'_>) -> Result<EncodedOutput, OracleError> {
        let key = self.key.as_ref().expect("registered in the first stage");
        let (e1, e2) = (random_gt(o.rng()), random_gt(o.rng()));
        Ok(sign_output(Some(e1), Some(e2), key, &view.challenges[0].vk))
    }
}

/// Has the victim compute the first challenge and replays its signed
/// output. Breaks the second condition.
pub struct ComputeChallengeThenFrame;

impl Adversary for ComputeChallengeThenFrame {
    fn choose_victim(&mut self, view: &FrameView<'_>, _: &mut Oracles<'_>) -> Result<ServerId, OracleError> {
        Ok(view.victim())
    }

    fn frame(&mut self, view: &FrameView<'_>, victim: &ServerId, o: &mut Oracles<'_>) -> Result<EncodedOutput, OracleError> {
        let c = &view.challenges[0];
        o.compute(&c.sigma_x, &c.vk, victim)
    }
}

/// Encodes an input of its own, has the victim compute it, and replays the
/// victim's signed output against the challenges. The output-only
/// signature does not say which problem instance it answers.
pub struct ForeignReplay;

impl Adversary for ForeignReplay {
    fn choose_victim(&mut self, view: &FrameView<'_>, _: &mut Oracles<'_>) -> Result<ServerId, OracleError> {
        Ok(view.victim())
    }

    fn frame(&mut self, view: &FrameView<'_>, victim: &ServerId, o: &mut Oracles<'_>) -> Result<EncodedOutput, OracleError> {
        let x = InputAssignment::random(o.rng(), view.pk.arity);
        let (sigma_x, vk, _) = probgen(&x, &view.pk, o.rng())?;
        o.compute(&sigma_x, &vk, victim)
    }
}

pub fn adversary(strategy: &str) -> Option<Box<dyn Adversary>> {
    Some(match strategy {
        "random-signature" => Box::new(RandomSignature),
        "self-attribution" => Box::new(SelfAttribution),
        "register-then-frame" => Box::<RegisterThenFrame>::default(),
        "compute-challenge-then-frame" => Box::new(ComputeChallengeThenFrame),
        "foreign-replay" => Box::new(ForeignReplay),
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
        game: GameId::VindictiveServer,
        strategy: strategy.to_owned(),
    })?;
    let targets = adv.choose_targets(cfg.formula.arity(), rng);
    log.step("declare-targets");
    if targets.is_empty() {
        return Ok(TrialResult::Invalid("no targets declared".into()));
    }
    let mut ch = Challenger::open(cfg, rng, log)?;
    ch.register_pool(rng, log)?;
    let chosen = adv.choose_certified(&ch.pool, rng);
    log.step("choose-certified");
    let ek = ch.certify(&chosen, rng, log)?;
    let (challenges, _) = ch.encode(&targets, Some(ek), rng, log)?;
    let challenge_digests: BTreeSet<[u8; 32]> =
        challenges.views.iter().map(|c| input_digest(&c.sigma_x)).collect();

    let view = FrameView {
        pk: ch.sys.delegation_key(),
        certified: ch.sys.certified(),
        challenges: &challenges.views,
        sk: &ch.adversary,
    };
    let mut oracles = Oracles::new(&mut ch.sys, rng, log, OracleMask::STANDARD, cfg.query_budget);
    let victim = adv.choose_victim(&view, &mut oracles);
    let victim = match stage(&oracles, victim) {
        Ok(v) => v,
        Err(invalid) => return Ok(invalid),
    };
    oracles.log("choose-target");
    if oracles.registered.contains(&victim) {
        return Ok(TrialResult::Invalid(format!("condition 1: {victim} was registered through the oracle")));
    }

    oracles.set_mask(OracleMask::STANDARD.with_compute());
    let framed = adv.frame(&view, &victim, &mut oracles);
    let sigma_y = match stage(&oracles, framed) {
        Ok(s) => s,
        Err(invalid) => return Ok(invalid),
    };
    if oracles
        .compute_queries
        .iter()
        .any(|q| q.server == victim && challenge_digests.contains(&q.input_digest))
    {
        return Ok(TrialResult::Invalid(format!(
            "condition 2: {victim} was asked to compute a challenge input"
        )));
    }
    drop(oracles);
    log.step("adversary-output");

    let lf = ch.sys.certified();
    let blamed = challenges.views.iter().zip(&challenges.bits).any(|(c, b)| {
        verify(&ch.sys.pp, &sigma_y, &c.vk, &lf, *b) == (None, Token::Reject(Some(victim.clone())))
    });
    log.step("verify");
    let won = blamed && {
        let function = ch.sys.function.clone();
        let revoked = ch.sys.revoke(&Token::Reject(Some(victim.clone())), &function)?;
        log.step("revoke");
        revoked.is_some()
    };
    Ok(TrialResult::Completed { won })
}
