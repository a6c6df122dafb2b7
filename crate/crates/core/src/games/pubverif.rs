//! Public verifiability: colluding servers try to get an output accepted
//! that disagrees with `F` on one of their declared challenge inputs.

use crate::bilinear::{hash_output, random_gt, DetRng, GtElem};
use crate::circuits::BoolFormula;
use crate::pvc::{
    compute, sign_output, verify, CertifiedList, EncodedOutput, EvaluationKey, FunctionId,
    FunctionKey, ServerId, ServerKey,
};
use crate::rkpabe::abe_decrypt;

use super::{
    default_targets, stage, ChallengeView, Challenger, GameConfig, GameError, GameId, OracleError,
    OracleMask, Oracles, Target, TrialLog, TrialResult,
};

pub const STRATEGIES: &[&str] = &[
    "random-forgery",
    "honest-replay",
    "cross-input-replay",
    "slot-swap",
    "complement-function",
];

/// Everything a certified server knows once the challenges are out.
pub struct ForgeView<'a> {
    pub formula: &'a BoolFormula,
    pub pk: FunctionKey,
    pub certified: CertifiedList,
    pub challenges: &'a [ChallengeView],
    /// The adversary's evaluation key in each epoch it was certified in.
    pub eks: &'a [EvaluationKey],
    pub sk: &'a ServerKey,
}

impl ForgeView<'_> {
    pub fn ek_for(&self, c: &ChallengeView) -> Option<&EvaluationKey> {
        self.eks.iter().find(|ek| ek.epoch() == c.sigma_x.epoch)
    }

    fn honest(&self, c: &ChallengeView) -> Result<EncodedOutput, OracleError> {
        let ek = self
            .ek_for(c)
            .ok_or_else(|| OracleError::Query("no key for that epoch".into()))?;
        Ok(compute(&c.sigma_x, &c.vk, ek, self.sk)?)
    }
}

pub trait Adversary {
    fn choose_targets(&mut self, arity: usize, rng: &mut DetRng) -> Vec<Target> {
        default_targets(arity, rng)
    }

    /// Pool members to certify alongside the adversary.
    fn choose_certified(&mut self, pool: &[ServerId], rng: &mut DetRng) -> Vec<ServerId> {
        use rand::Rng;
        pool.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect()
    }

    fn forge(&mut self, view: &ForgeView<'_>, oracles: &mut Oracles<'_>)
        -> Result<EncodedOutput, OracleError>;
}

/// Random values in both slots under the adversary's own signature.
pub struct RandomForgery;

impl Adversary for RandomForgery {
    fn forge(&mut self, view: &ForgeView<'_>, o: &mut Oracles<'_>) -> Result<EncodedOutput, OracleError> {
        let (e1, e2) = (random_gt(o.rng()), random_gt(o.rng()));
        Ok(sign_output(Some(e1), Some(e2), view.sk, &view.challenges[0].vk))
    }
}

/// The correct answer for the first target.
pub struct HonestReplay;

impl Adversary for HonestReplay {
    fn forge(&mut self, view: &ForgeView<'_>, _: &mut Oracles<'_>) -> Result<EncodedOutput, OracleError> {
        view.honest(&view.challenges[0])
    }
}

/// The correct answer for the first target, aimed at the second target's
/// verification key. The runner checks every key, so aiming only decides
/// what the signature binds.
pub struct CrossInputReplay;

impl Adversary for CrossInputReplay {
    fn forge(&mut self, view: &ForgeView<'_>, _: &mut Oracles<'_>) -> Result<EncodedOutput, OracleError> {
        let out = view.honest(&view.challenges[0])?;
        let aim = view.challenges.last().expect("targets declared");
        Ok(sign_output(out.e1, out.e2, view.sk, &aim.vk))
    }
}

/// The correct values with the slots exchanged.
pub struct SlotSwap;

impl Adversary for SlotSwap {
    fn forge(&mut self, view: &ForgeView<'_>, _: &mut Oracles<'_>) -> Result<EncodedOutput, OracleError> {
        let c = &view.challenges[0];
        let out = view.honest(c)?;
        Ok(sign_output(out.e2, out.e1, view.sk, &c.vk))
    }
}

/// Initialises a second function equal to the complement of `F` and gets
/// certified for it. Its parameter-set-0 key carries the policy of `F̄`,
/// which opens the slot the adversary's own `F` key cannot. That slot's
/// message alone is then a valid output for the wrong answer.
pub struct ComplementFunction;

impl Adversary for ComplementFunction {
    fn choose_targets(&mut self, arity: usize, rng: &mut DetRng) -> Vec<Target> {
        let mut t = default_targets(arity, rng);
        t.iter_mut().for_each(|t| t.epoch = 0);
        t
    }

    fn forge(&mut self, view: &ForgeView<'_>, o: &mut Oracles<'_>) -> Result<EncodedOutput, OracleError> {
        let g = FunctionId::from("G");
        o.fninit(g.clone(), view.formula.complement())?;
        let ek_g = o.certify(&g, view.sk.id())?;
        let c = &view.challenges[0];
        let honest = view.honest(c)?;
        let opened = |slot: usize| -> Option<GtElem> {
            let (ct, digest) = match slot {
                1 => (&c.sigma_x.slot1, &c.vk.h1),
                _ => (&c.sigma_x.slot2, &c.vk.h2),
            };
            [(&ek_g.sk0, &ek_g.uk0), (&ek_g.sk1, &ek_g.uk1)]
                .into_iter()
                .filter_map(|(sk, uk)| abe_decrypt(ct, sk, uk))
                .find(|m| hash_output(m) == *digest)
        };
        let forged = match (honest.e1, honest.e2) {
            (Some(_), None) => opened(2).map(|m| (None, Some(m))),
            (None, Some(_)) => opened(1).map(|m| (Some(m), None)),
            _ => None,
        };
        Ok(match forged {
            Some((e1, e2)) => sign_output(e1, e2, view.sk, &c.vk),
            None => honest,
        })
    }
}

pub fn adversary(strategy: &str) -> Option<Box<dyn Adversary>> {
    Some(match strategy {
        "random-forgery" => Box::new(RandomForgery),
        "honest-replay" => Box::new(HonestReplay),
        "cross-input-replay" => Box::new(CrossInputReplay),
        "slot-swap" => Box::new(SlotSwap),
        "complement-function" => Box::new(ComplementFunction),
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
        game: GameId::PubVerif,
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
    let (challenges, eks) = ch.encode(&targets, Some(ek), rng, log)?;
    let view = ForgeView {
        formula: &cfg.formula,
        pk: ch.sys.delegation_key(),
        certified: ch.sys.certified(),
        challenges: &challenges.views,
        eks: &eks,
        sk: &ch.adversary,
    };
    let mut oracles = Oracles::new(&mut ch.sys, rng, log, OracleMask::STANDARD, cfg.query_budget);
    let forged = adv.forge(&view, &mut oracles);
    let sigma_y = match stage(&oracles, forged) {
        Ok(s) => s,
        Err(invalid) => return Ok(invalid),
    };
    log.step("adversary-output");
    let lf = ch.sys.certified();
    let won = challenges.views.iter().zip(&challenges.bits).any(|(c, b)| {
        let (y, _) = verify(&ch.sys.pp, &sigma_y, &c.vk, &lf, *b);
        y.is_some_and(|y| Ok(y) != cfg.formula.evaluate(&c.x))
    });
    log.step("verify");
    Ok(TrialResult::Completed { won })
}
