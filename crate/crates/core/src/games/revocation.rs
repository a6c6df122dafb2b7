//! Revocation: once a server is revoked, nothing it produces for `F` is
//! accepted, not even the correct answer.

use crate::bilinear::{random_gt, DetRng, GtElem};
use crate::pvc::{
    compute, sign_output, verify, CertifiedList, EncodedOutput, EvaluationKey, FunctionId,
    FunctionKey, ServerId, ServerKey, Token,
};
use crate::rkpabe::{abe_decrypt, AbeSecretKey, UpdateKey};

use super::{
    default_targets, stage, ChallengeView, Challenger, GameConfig, GameError, GameId, OracleError,
    OracleMask, Oracles, Target, TrialLog, TrialResult, POOL,
};

pub const STRATEGIES: &[&str] = &[
    "stale-key-replay",
    "random-forgery",
    "borrowed-key",
    "patched-key",
    "shadow-function",
];

/// Server the challenger always certifies and uses as the honest control.
pub const CONTROL: &str = POOL[0];

/// The adversary's view while it is still certified.
pub struct CertifiedView<'a> {
    pub pk: FunctionKey,
    pub certified: CertifiedList,
    pub ek: &'a EvaluationKey,
    pub sk: &'a ServerKey,
}

/// The adversary's view after revocation.
pub struct RevokedView<'a> {
    pub pk: FunctionKey,
    pub certified: CertifiedList,
    pub challenges: &'a [ChallengeView],
    /// Keys reissued to the servers that remain certified.
    pub reissued: &'a [EvaluationKey],
    pub sk: &'a ServerKey,
}

pub trait Adversary {
    fn choose_targets(&mut self, arity: usize, rng: &mut DetRng) -> Vec<Target> {
        default_targets(arity, rng)
    }

    fn choose_certified(&mut self, pool: &[ServerId], _rng: &mut DetRng) -> Vec<ServerId> {
        pool.to_vec()
    }

    /// Runs while the adversary is certified, before it is revoked.
    fn while_certified(&mut self, _view: &CertifiedView<'_>, _o: &mut Oracles<'_>) -> Result<(), OracleError> {
        Ok(())
    }

    fn forge(&mut self, view: &RevokedView<'_>, o: &mut Oracles<'_>) -> Result<EncodedOutput, OracleError>;
}

/// Decrypts each slot with whichever of the key pairs succeeds first,
/// without checking the result against the verification key.
fn raw_slots(c: &ChallengeView, keys: &[(&AbeSecretKey, &UpdateKey)]) -> (Option<GtElem>, Option<GtElem>) {
    let open = |ct| keys.iter().find_map(|(sk, uk)| abe_decrypt(ct, sk, uk));
    (open(&c.sigma_x.slot1), open(&c.sigma_x.slot2))
}

fn key_pairs(ek: &EvaluationKey) -> [(&AbeSecretKey, &UpdateKey); 2] {
    [(&ek.sk0, &ek.uk0), (&ek.sk1, &ek.uk1)]
}

/// Decrypts with the evaluation key it held before revocation.
#[derive(Default)]
pub struct StaleKeyReplay {
    kept: Option<EvaluationKey>,
}

impl Adversary for StaleKeyReplay {
    fn while_certified(&mut self, view: &CertifiedView<'_>, _: &mut Oracles<'_>) -> Result<(), OracleError> {
        self.kept = Some(view.ek.clone());
        Ok(())
    }

    fn forge(&mut self, view: &RevokedView<'_>, _: &mut Oracles<'_>) -> Result<EncodedOutput, OracleError> {
        let ek = self.kept.as_ref().expect("kept while certified");
        let c = &view.challenges[0];
        let (e1, e2) = raw_slots(c, &key_pairs(ek));
        Ok(sign_output(e1, e2, view.sk, &c.vk))
    }
}

pub struct RandomForgery;

impl Adversary for RandomForgery {
    fn forge(&mut self, view: &RevokedView<'_>, o: &mut Oracles<'_>) -> Result<EncodedOutput, OracleError> {
        let (e1, e2) = (random_gt(o.rng()), random_gt(o.rng()));
        Ok(sign_output(Some(e1), Some(e2), view.sk, &view.challenges[0].vk))
    }
}

/// Opens the challenge with a key reissued to a certified server and signs
/// the correct values itself.
pub struct BorrowedKey;

impl Adversary for BorrowedKey {
    fn forge(&mut self, view: &RevokedView<'_>, _: &mut Oracles<'_>) -> Result<EncodedOutput, OracleError> {
        let ek = view
            .reissued
            .first()
            .ok_or_else(|| OracleError::Query("no reissued key".into()))?;
        let c = &view.challenges[0];
        let (e1, e2) = raw_slots(c, &key_pairs(ek));
        let e1 = e1.filter(|m| crate::bilinear::hash_output(m) == c.vk.h1);
        let e2 = e2.filter(|m| crate::bilinear::hash_output(m) == c.vk.h2);
        Ok(sign_output(e1, e2, view.sk, &c.vk))
    }
}

/// Pairs the old policy keys with the update keys published for the new
/// epoch.
#[derive(Default)]
pub struct PatchedKey {
    kept: Option<EvaluationKey>,
}

impl Adversary for PatchedKey {
    fn while_certified(&mut self, view: &CertifiedView<'_>, _: &mut Oracles<'_>) -> Result<(), OracleError> {
        self.kept = Some(view.ek.clone());
        Ok(())
    }

    fn forge(&mut self, view: &RevokedView<'_>, o: &mut Oracles<'_>) -> Result<EncodedOutput, OracleError> {
        let (uk0, uk1) = o
            .update_keys(&view.pk.function)
            .ok_or_else(|| OracleError::UnknownFunction(view.pk.function.clone()))?;
        let ek = self.kept.clone().expect("kept while certified").with_update_keys(uk0, uk1);
        let c = &view.challenges[0];
        Ok(match compute(&c.sigma_x, &c.vk, &ek, view.sk) {
            Ok(out) => out,
            Err(_) => sign_output(None, None, view.sk, &c.vk),
        })
    }
}

/// Initialises a copy of `F` under another name, gets certified for it and
/// answers the challenge correctly with that key.
pub struct ShadowFunction {
    formula: crate::circuits::BoolFormula,
}

impl Adversary for ShadowFunction {
    fn forge(&mut self, view: &RevokedView<'_>, o: &mut Oracles<'_>) -> Result<EncodedOutput, OracleError> {
        let g = FunctionId::from("G");
        o.fninit(g.clone(), self.formula.clone())?;
        let ek = o.certify(&g, view.sk.id())?;
        let c = &view.challenges[0];
        let (e1, e2) = raw_slots(c, &key_pairs(&ek));
        let e1 = e1.filter(|m| crate::bilinear::hash_output(m) == c.vk.h1);
        let e2 = e2.filter(|m| crate::bilinear::hash_output(m) == c.vk.h2);
        Ok(sign_output(e1, e2, view.sk, &c.vk))
    }
}

pub fn adversary(strategy: &str, cfg: &GameConfig) -> Option<Box<dyn Adversary>> {
    Some(match strategy {
        "stale-key-replay" => Box::<StaleKeyReplay>::default(),
        "random-forgery" => Box::new(RandomForgery),
        "borrowed-key" => Box::new(BorrowedKey),
        "patched-key" => Box::<PatchedKey>::default(),
        "shadow-function" => Box::new(ShadowFunction {
            formula: cfg.formula.clone(),
        }),
        _ => return None,
    })
}

pub(crate) fn trial(
    strategy: &str,
    cfg: &GameConfig,
    rng: &mut DetRng,
    log: &mut TrialLog,
) -> Result<TrialResult, GameError> {
    let mut adv = adversary(strategy, cfg).ok_or_else(|| GameError::UnknownStrategy {
        game: GameId::Revocation,
        strategy: strategy.to_owned(),
    })?;
    let targets = adv.choose_targets(cfg.formula.arity(), rng);
    log.step("declare-targets");
    if targets.is_empty() {
        return Ok(TrialResult::Invalid("no targets declared".into()));
    }
    let mut ch = Challenger::open(cfg, rng, log)?;
    ch.register_pool(rng, log)?;
    let mut chosen = adv.choose_certified(&ch.pool, rng);
    chosen.push(ServerId::from(CONTROL));
    log.step("choose-certified");
    let ek = ch.certify(&chosen, rng, log)?;

    let view = CertifiedView {
        pk: ch.sys.delegation_key(),
        certified: ch.sys.certified(),
        ek: &ek,
        sk: &ch.adversary,
    };
    let mut oracles = Oracles::new(&mut ch.sys, rng, log, OracleMask::STANDARD, cfg.query_budget);
    let r = adv.while_certified(&view, &mut oracles);
    if let Err(invalid) = stage(&oracles, r) {
        return Ok(invalid);
    }
    let token = Token::Reject(Some(ch.adversary.id().clone()));
    log.step("revocation-token");
    let function = ch.sys.function.clone();
    let reissued = ch.sys.revoke(&token, &function)?.unwrap_or_default();
    log.step("revoke");

    let (challenges, _) = ch.encode(&targets, None, rng, log)?;
    let view = RevokedView {
        pk: ch.sys.delegation_key(),
        certified: ch.sys.certified(),
        challenges: &challenges.views,
        reissued: &reissued,
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
        verify(&ch.sys.pp, &sigma_y, &c.vk, &lf, *b).1.is_accept()
    });
    log.step("verify");

    let control = ServerId::from(CONTROL);
    for (c, b) in challenges.views.iter().zip(&challenges.bits) {
        let out = ch.sys.honest_compute(&control, &c.sigma_x, &c.vk);
        let ok = out.is_ok_and(|out| {
            let (y, token) = verify(&ch.sys.pp, &out, &c.vk, &lf, *b);
            token == Token::Accept(control.clone()) && y.map(Ok) == Some(cfg.formula.evaluate(&c.x))
        });
        log.control.0 += ok as usize;
        log.control.1 += 1;
    }
    log.step("control");
    Ok(TrialResult::Completed { won })
}
