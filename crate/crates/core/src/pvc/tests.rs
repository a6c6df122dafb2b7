use super::*;
use crate::bilinear::{DetRng, Seed};

struct World {
    pp: PublicParams,
    msk: MasterSecret,
    rec: FunctionRecord,
    servers: Vec<(ServerKey, EvaluationKey)>,
    rng: DetRng,
}

fn world(formula: &str, arity: usize, servers: usize, binding: SignatureBinding) -> World {
    world_with(formula, servers, &SetupParams {
        depth: 3,
        max_arity: arity,
        binding,
        ..SetupParams::default()
    })
}

fn world_with(formula: &str, servers: usize, params: &SetupParams) -> World {
    let mut rng = Seed::from_u64(2024).rng();
    let (mut pp, mut msk) = setup(params, &mut rng).unwrap();
    let f = BoolFormula::parse_with_arity(formula, params.max_arity).unwrap();
    let mut rec = fninit(&pp, &mut msk, FunctionId::from("f"), f).unwrap();
    let mut out = Vec::new();
    for i in 0..servers {
        let sk = register(&mut pp, &mut msk, ServerId::new(format!("s{i}")), &mut rng).unwrap();
        let ek = certify(&pp, &msk, &mut rec, sk.id(), &mut rng).unwrap();
        out.push((sk, ek));
    }
    World {
        pp,
        msk,
        rec,
        servers: out,
        rng,
    }
}

fn input(bits: &str) -> InputAssignment {
    InputAssignment::parse(bits).unwrap()
}

#[test]
fn fresh_setup_is_empty_at_epoch_zero() {
    let mut rng = Seed::from_u64(1).rng();
    let (pp, _) = setup(&SetupParams::default(), &mut rng).unwrap();
    assert!(pp.registry().is_empty());
    assert_eq!(pp.epoch(), 0);
    let bytes = |m: &AbeMasterPublic| m.bases().iter().flat_map(|b| b.to_bytes()).collect::<Vec<_>>();
    assert_eq!(bytes(pp.mpk0()), bytes(pp.mpk1()));
    assert_ne!(pp.mpk0().y(), pp.mpk1().y());
}

#[test]
fn fninit_starts_empty_and_rejects_constants() {
    let mut w = world("x1 & x2", 2, 0, SignatureBinding::OutputOnly);
    assert!(w.rec.certified_list().servers.is_empty());
    assert_eq!(w.rec.delegation_key(&w.pp).pp, w.pp);
    let c = BoolFormula::parse_with_arity("1", 2).unwrap();
    assert_eq!(
        fninit(&w.pp, &mut w.msk, FunctionId::from("c"), c).err(),
        Some(PvcError::Circuit(CircuitError::Degenerate))
    );
}

#[test]
fn registration_errors() {
    let mut w = world("x1", 1, 0, SignatureBinding::OutputOnly);
    register(&mut w.pp, &mut w.msk, "a".into(), &mut w.rng).unwrap();
    assert_eq!(w.pp.registry().len(), 1);
    assert!(matches!(
        register(&mut w.pp, &mut w.msk, "a".into(), &mut w.rng),
        Err(PvcError::DuplicateServer(_))
    ));
    for i in 1..8 {
        register(&mut w.pp, &mut w.msk, ServerId::new(format!("b{i}")), &mut w.rng).unwrap();
    }
    assert_eq!(
        register(&mut w.pp, &mut w.msk, "overflow".into(), &mut w.rng).err(),
        Some(PvcError::Capacity(8))
    );
}

#[test]
fn certify_requires_registration_and_grows_list() {
    let mut w = world("x1", 1, 1, SignatureBinding::OutputOnly);
    assert_eq!(w.rec.certified_list().servers.len(), 1);
    assert!(matches!(
        certify(&w.pp, &w.msk, &mut w.rec, &"ghost".into(), &mut w.rng),
        Err(PvcError::UnknownServer(_))
    ));
    let ek = &w.servers[0].1;
    assert_eq!(ek.sk0.slot(), ek.sk1.slot());
    assert_eq!(ek.uk0.epoch(), ek.uk1.epoch());
}

#[test]
fn honest_pipeline_all_inputs_both_bits() {
    let mut w = world("(x1 | x2) & !x3", 3, 2, SignatureBinding::OutputOnly);
    let pk = w.rec.delegation_key(&w.pp);
    let lf = w.rec.certified_list();
    for v in 0..8 {
        let x = InputAssignment::from_index(v, 3);
        let expected = w.rec.formula().evaluate(&x).unwrap();
        for b in [false, true] {
            let m0 = random_gt(&mut w.rng);
            let m1 = random_gt(&mut w.rng);
            let (sx, vk, rb) = probgen_with(&x, &pk, &m0, &m1, RetrievalBit::new(b), &mut w.rng).unwrap();
            assert_ne!(vk.h1, vk.h2);
            let (sk, ek) = &w.servers[v as usize % 2];
            let sy = compute(&sx, &vk, ek, sk).unwrap();
            assert_eq!(sy.values().iter().filter(|e| e.is_some()).count(), 1);
            let want = if expected { m0 } else { m1 };
            let slot_of_want = usize::from(expected == b);
            assert_eq!(sy.values()[slot_of_want], Some(&want), "x={x} b={b}");
            let (y, token) = verify(&w.pp, &sy, &vk, &lf, rb);
            assert_eq!(y, Some(expected));
            assert_eq!(token, Token::Accept(sk.id().clone()));
        }
    }
}

#[test]
fn digest_order_follows_retrieval_bit() {
    let mut w = world("x1", 1, 0, SignatureBinding::OutputOnly);
    let pk = w.rec.delegation_key(&w.pp);
    let (m0, m1) = (random_gt(&mut w.rng), random_gt(&mut w.rng));
    let (_, vk0, _) = probgen_with(&input("1"), &pk, &m0, &m1, RetrievalBit::new(false), &mut w.rng).unwrap();
    let (_, vk1, _) = probgen_with(&input("1"), &pk, &m0, &m1, RetrievalBit::new(true), &mut w.rng).unwrap();
    assert_eq!((vk0.h1, vk0.h2), (hash_output(&m0), hash_output(&m1)));
    assert_eq!((vk1.h1, vk1.h2), (hash_output(&m1), hash_output(&m0)));
}

#[test]
fn f_true_with_b_zero_fills_first_slot() {
    let mut w = world("x1 & x2", 2, 1, SignatureBinding::OutputOnly);
    let pk = w.rec.delegation_key(&w.pp);
    let (m0, m1) = (random_gt(&mut w.rng), random_gt(&mut w.rng));
    let (sx, vk, _) = probgen_with(&input("11"), &pk, &m0, &m1, RetrievalBit::new(false), &mut w.rng).unwrap();
    let (sk, ek) = &w.servers[0];
    let sy = compute(&sx, &vk, ek, sk).unwrap();
    assert_eq!((sy.e1, sy.e2), (Some(m0), None));
}

#[test]
fn tampered_and_uncertified_outputs() {
    let mut w = world("x1 & x2", 2, 1, SignatureBinding::OutputOnly);
    let pk = w.rec.delegation_key(&w.pp);
    let lf = w.rec.certified_list();
    let (sx, vk, b) = probgen(&input("10"), &pk, &mut w.rng).unwrap();
    let (sk, _) = &w.servers[0];

    let garbage = sign_output(Some(random_gt(&mut w.rng)), None, sk, &vk);
    assert_eq!(blindverify(&w.pp, &garbage, &vk, &lf), (None, Token::Reject(Some(sk.id().clone()))));
    assert_eq!(verify(&w.pp, &garbage, &vk, &lf, b).0, None);

    let outsider = register(&mut w.pp, &mut w.msk, "outsider".into(), &mut w.rng).unwrap();
    let from_outsider = sign_output(None, None, &outsider, &vk);
    assert_eq!(blindverify(&w.pp, &from_outsider, &vk, &lf), (None, Token::Reject(None)));

    let mut forged = compute(&sx, &vk, &w.servers[0].1, sk).unwrap();
    forged.signature.0[0] ^= 1;
    assert_eq!(blindverify(&w.pp, &forged, &vk, &lf), (None, Token::Reject(None)));
}

#[test]
fn retrieve_cases() {
    let vk = VerificationKey {
        function: "f".into(),
        epoch: 0,
        h1: Digest([1; 32]),
        h2: Digest([2; 32]),
        registry_version: 0,
    };
    let mut rng = Seed::from_u64(8).rng();
    let m = random_gt(&mut rng);
    let vk = VerificationKey { h1: hash_output(&m), ..vk };
    let acc = Token::Accept("s".into());
    assert_eq!(retrieve(Some(&m), &acc, &vk, RetrievalBit::new(false)), Some(true));
    assert_eq!(retrieve(Some(&m), &acc, &vk, RetrievalBit::new(true)), Some(false));
    assert_eq!(retrieve(Some(&m), &Token::Reject(Some("s".into())), &vk, RetrievalBit::new(false)), None);
    assert_eq!(retrieve(Some(&random_gt(&mut rng)), &acc, &vk, RetrievalBit::new(false)), None);
}

#[test]
fn revoke_removes_server_and_refreshes_epoch() {
    let mut w = world("x1 | x2", 2, 2, SignatureBinding::OutputOnly);
    let s0 = w.servers[0].0.id().clone();

    assert_eq!(revoke(&mut w.pp, &mut w.msk, &Token::Accept(s0.clone()), &mut w.rec).unwrap(), None);
    assert_eq!(revoke(&mut w.pp, &mut w.msk, &Token::Reject(None), &mut w.rec).unwrap(), None);
    assert_eq!(w.pp.epoch(), 0);

    let fresh = revoke(&mut w.pp, &mut w.msk, &Token::Reject(Some(s0.clone())), &mut w.rec)
        .unwrap()
        .unwrap();
    assert!(!w.rec.is_certified(&s0));
    assert_eq!(w.pp.epoch(), 1);
    assert_eq!(fresh.len(), 1);
    assert_eq!(fresh[0].epoch(), 1);
    assert_eq!(revoke(&mut w.pp, &mut w.msk, &Token::Reject(Some(s0.clone())), &mut w.rec).unwrap(), None);

    let pk = w.rec.delegation_key(&w.pp);
    let lf = w.rec.certified_list();
    let (sx, vk, b) = probgen(&input("01"), &pk, &mut w.rng).unwrap();

    let (sk0, stale) = &w.servers[0];
    assert!(matches!(compute(&sx, &vk, stale, sk0), Err(PvcError::StaleEpoch { key: 0, input: 1 })));
    let (uk0, uk1) = w.rec.update_keys();
    let patched = stale.clone().with_update_keys(uk0.clone(), uk1.clone());
    let sy = compute(&sx, &vk, &patched, sk0).unwrap();
    assert_eq!((sy.e1, sy.e2), (None, None));
    assert_eq!(verify(&w.pp, &sy, &vk, &lf, b).1, Token::Reject(None));

    let sk1 = &w.servers[1].0;
    let sy = compute(&sx, &vk, &fresh[0], sk1).unwrap();
    assert_eq!(verify(&w.pp, &sy, &vk, &lf, b), (Some(true), Token::Accept(sk1.id().clone())));
}

#[test]
fn blind_verdict_independent_of_retrieval_bit() {
    let mut w = world("x1 & !x2", 2, 1, SignatureBinding::OutputOnly);
    let pk = w.rec.delegation_key(&w.pp);
    let lf = w.rec.certified_list();
    let (m0, m1) = (random_gt(&mut w.rng), random_gt(&mut w.rng));
    let (sk, ek) = &w.servers[0];
    for bits in ["00", "01", "10", "11"] {
        let verdicts: Vec<_> = [false, true]
            .into_iter()
            .map(|b| {
                let mut r = Seed::from_u64(77).rng();
                let (sx, vk, _) = probgen_with(&input(bits), &pk, &m0, &m1, RetrievalBit::new(b), &mut r).unwrap();
                let sy = compute(&sx, &vk, ek, sk).unwrap();
                blindverify(&w.pp, &sy, &vk, &lf)
            })
            .collect();
        assert_eq!(verdicts[0], verdicts[1]);
    }
}

#[test]
fn vk_binding_blocks_cross_instance_replay() {
    for (binding, replay_accepted) in [
        (SignatureBinding::OutputOnly, true),
        (SignatureBinding::OutputWithVk, false),
    ] {
        let mut w = world("x1", 1, 1, binding);
        let pk = w.rec.delegation_key(&w.pp);
        let lf = w.rec.certified_list();
        let (sk, ek) = &w.servers[0];
        let (sx_a, vk_a, _) = probgen(&input("1"), &pk, &mut w.rng).unwrap();
        let (_, vk_b, _) = probgen(&input("1"), &pk, &mut w.rng).unwrap();
        let sy = compute(&sx_a, &vk_a, ek, sk).unwrap();
        assert!(blindverify(&w.pp, &sy, &vk_a, &lf).1.is_accept());
        let replay = blindverify(&w.pp, &sy, &vk_b, &lf).1;
        let attributed = replay == Token::Reject(Some(sk.id().clone()));
        assert_eq!(attributed, replay_accepted, "{binding:?}");
    }
}

#[test]
fn independent_records_get_independent_keys() {
    let mut w = world("x1", 2, 1, SignatureBinding::OutputOnly);
    let g = BoolFormula::parse_with_arity("x2", 2).unwrap();
    let mut rec_g = fninit(&w.pp, &mut w.msk, "g".into(), g).unwrap();
    let id = w.servers[0].0.id().clone();
    let ek_g = certify(&w.pp, &w.msk, &mut rec_g, &id, &mut w.rng).unwrap();
    assert_ne!(ek_g.sk0, w.servers[0].1.sk0);
    assert_eq!(ek_g.function, FunctionId::from("g"));
}

#[test]
fn wire_messages_round_trip() {
    let mut w = world("x1 | x2", 2, 1, SignatureBinding::OutputOnly);
    let pk = w.rec.delegation_key(&w.pp);
    let (sx, vk, _) = probgen(&input("10"), &pk, &mut w.rng).unwrap();
    let (sk, ek) = &w.servers[0];
    let sy = compute(&sx, &vk, ek, sk).unwrap();
    assert_eq!(EncodedInput::from_wire(&sx.to_wire()).unwrap(), sx);
    assert_eq!(VerificationKey::from_wire(&vk.to_wire()).unwrap(), vk);
    assert_eq!(EncodedOutput::from_wire(&sy.to_wire()).unwrap(), sy);
    assert_eq!(EvaluationKey::from_wire(&ek.to_wire()).unwrap(), *ek);
    assert_eq!(PublicParams::from_wire(&w.pp.to_wire()).unwrap(), w.pp);
    assert_eq!(FunctionKey::from_wire(&pk.to_wire()).unwrap(), pk);
    let lf = w.rec.certified_list();
    assert_eq!(CertifiedList::from_wire(&lf.to_wire()).unwrap(), lf);
    for t in [Token::Accept("a".into()), Token::Reject(None), Token::Reject(Some("b".into()))] {
        assert_eq!(Token::from_wire(&t.to_wire()).unwrap(), t);
    }
    assert!(matches!(Token::from_wire(&vk.to_wire()), Err(WireError::Tag { .. })));
}

/// A key for the complement of `f`, issued as a different function, opens
/// the parameter-set-0 slot of an `f` input exactly when the functions
/// share one attribute universe.
#[test]
fn complement_function_key_crosses_records_only_when_shared() {
    for (binding, crosses) in [(FunctionBinding::Shared, true), (FunctionBinding::Tagged, false)] {
        let params = SetupParams {
            depth: 3,
            max_arity: 2,
            function_binding: binding,
            ..SetupParams::default()
        };
        let mut w = world_with("x1 & x2", 1, &params);
        let g = w.rec.formula().complement();
        let mut rec_g = fninit(&w.pp, &mut w.msk, "g".into(), g).unwrap();
        let id = w.servers[0].0.id().clone();
        let ek_g = certify(&w.pp, &w.msk, &mut rec_g, &id, &mut w.rng).unwrap();
        let pk = w.rec.delegation_key(&w.pp);
        let (m0, m1) = (random_gt(&mut w.rng), random_gt(&mut w.rng));
        let (sx, _, _) = probgen_with(&input("10"), &pk, &m0, &m1, RetrievalBit::new(false), &mut w.rng).unwrap();
        let opened = abe_decrypt(&sx.slot1, &ek_g.sk0, &ek_g.uk0);
        assert_eq!(opened == Some(m0), crosses, "{binding:?}");
        let own = &w.servers[0].1;
        assert_eq!(abe_decrypt(&sx.slot2, &own.sk1, &own.uk1), Some(m1));
    }
}

#[test]
fn tagged_functions_run_end_to_end() {
    let params = SetupParams {
        depth: 3,
        max_arity: 3,
        max_functions: 2,
        function_binding: FunctionBinding::Tagged,
        ..SetupParams::default()
    };
    let mut w = world_with("(x1 & x2) | x3", 2, &params);
    let pk = w.rec.delegation_key(&w.pp);
    assert!(pk.tag.is_some());
    assert_eq!(FunctionKey::from_wire(&pk.to_wire()).unwrap(), pk);
    assert_eq!(PublicParams::from_wire(&w.pp.to_wire()).unwrap(), w.pp);
    let lf = w.rec.certified_list();
    for v in 0..8 {
        let x = InputAssignment::from_index(v, 3);
        let (sx, vk, b) = probgen(&x, &pk, &mut w.rng).unwrap();
        let (sk, ek) = &w.servers[v as usize % 2];
        let sy = compute(&sx, &vk, ek, sk).unwrap();
        let (y, token) = verify(&w.pp, &sy, &vk, &lf, b);
        assert!(token.is_accept());
        assert_eq!(y, Some(w.rec.formula().evaluate(&x).unwrap()));
    }
    let g = BoolFormula::parse_with_arity("x1", 3).unwrap();
    let rec_g = fninit(&w.pp, &mut w.msk, "g".into(), g.clone()).unwrap();
    assert_ne!(rec_g.tag(), w.rec.tag());
    assert_eq!(
        fninit(&w.pp, &mut w.msk, "h".into(), g).err(),
        Some(PvcError::FunctionCapacity(2))
    );
}
