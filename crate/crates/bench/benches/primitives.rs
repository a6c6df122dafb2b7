use std::collections::BTreeSet;

use criterion::{black_box, criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use pvckdc::bilinear::random_gt;
use pvckdc::circuits::attr_encode;
use pvckdc::rkpabe::{abe_decrypt, abe_encrypt, abe_keygen, abe_keyupdate, abe_setup, AbeUniverse, IdentityTree, SharedCoins};
use pvckdc::{
    certify, compute, fninit, probgen, register, setup, verify, BoolFormula, FunctionId, InputAssignment, Seed,
    ServerId, SetupParams,
};

const FORMULA: &str = "(x1 & x2) | (!x3 & x4) | (x5 & !x6)";

fn abe(c: &mut Criterion) {
    let mut rng = Seed::from_u64(1).rng();
    let f = BoolFormula::parse(FORMULA).unwrap();
    let universe = AbeUniverse::new(f.arity(), 4).unwrap();
    let (mpk, msk) = abe_setup(&universe, &SharedCoins::new(Seed::from_u64(2)), &mut rng);
    let policy = f.to_policy().unwrap();
    let sk = abe_keygen(3, &policy, &msk, &mpk, &mut rng).unwrap();
    let uk = abe_keyupdate(&(0..8).collect(), 0, &msk, &mpk).unwrap();
    let x = InputAssignment::parse("110000").unwrap();
    let attrs = attr_encode(&x);
    let m = random_gt(&mut rng);

    let mut g = c.benchmark_group("abe");
    g.sample_size(20);
    g.bench_function("keygen", |b| b.iter(|| abe_keygen(3, &policy, &msk, &mpk, &mut rng).unwrap()));
    g.bench_function("keyupdate/8-of-16", |b| b.iter(|| abe_keyupdate(&(0..8).collect(), 0, &msk, &mpk).unwrap()));
    g.bench_function("encrypt", |b| b.iter(|| abe_encrypt(0, &attrs, &m, &mpk, &mut rng).unwrap()));
    let ct = abe_encrypt(0, &attrs, &m, &mpk, &mut rng).unwrap();
    g.bench_function("decrypt", |b| b.iter(|| abe_decrypt(black_box(&ct), &sk, &uk).unwrap()));
    g.finish();
}

fn cover(c: &mut Criterion) {
    let mut g = c.benchmark_group("cover");
    for depth in [4u32, 10, 16] {
        let tree = IdentityTree::new(depth).unwrap();
        // Every third slot: a worst-ish case with many small subtrees.
        let slots: BTreeSet<u32> = (0..tree.capacity()).filter(|s| s % 3 != 0).collect();
        g.bench_with_input(BenchmarkId::from_parameter(depth), &slots, |b, slots| {
            b.iter(|| tree.cover(black_box(slots)).unwrap())
        });
    }
    g.finish();
}

fn delegation(c: &mut Criterion) {
    let mut rng = Seed::from_u64(3).rng();
    let params = SetupParams { depth: 4, max_arity: 6, ..SetupParams::default() };
    let (mut pp, mut msk) = setup(&params, &mut rng).unwrap();
    let f = BoolFormula::parse(FORMULA).unwrap();
    let mut rec = fninit(&pp, &mut msk, FunctionId::from("f"), f).unwrap();
    let sk = register(&mut pp, &mut msk, ServerId::from("s0"), &mut rng).unwrap();
    let ek = certify(&pp, &msk, &mut rec, sk.id(), &mut rng).unwrap();
    let pk = rec.delegation_key(&pp);
    let lf = rec.certified_list();
    let x = InputAssignment::parse("101101").unwrap();

    let mut g = c.benchmark_group("delegation");
    g.sample_size(20);
    g.bench_function("probgen", |b| b.iter(|| probgen(&x, &pk, &mut rng).unwrap()));
    g.bench_function("compute", |b| {
        b.iter_batched(
            || probgen(&x, &pk, &mut rng).unwrap(),
            |(sx, vk, _)| compute(&sx, &vk, &ek, &sk).unwrap(),
            BatchSize::SmallInput,
        )
    });
    let (sx, vk, bit) = probgen(&x, &pk, &mut rng).unwrap();
    let sy = compute(&sx, &vk, &ek, &sk).unwrap();
    g.bench_function("verify", |b| b.iter(|| verify(&pp, black_box(&sy), &vk, &lf, bit)));
    g.finish();
}

criterion_group!(benches, abe, cover, delegation);
criterion_main!(benches);
