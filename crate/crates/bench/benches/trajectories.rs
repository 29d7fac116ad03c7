use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use metastab::checker::find_witness;
use metastab::iterations::{point, residual_family, Operator, SeqSpec, Trajectory};
use metastab::moduli::Modulus;
use metastab::{Budget, Nat};

fn mann_rotation(c: &mut Criterion) {
    let op = Operator::Affine { a: vec![vec![0.0, -1.0], vec![1.0, 0.0]], c: vec![0.0, 0.0] };
    let t = op.compile(2).unwrap();
    c.bench_function("mann rotation 10k steps", |b| {
        b.iter(|| {
            let mut traj = Trajectory::mann(t.clone(), point(&[1.0, 0.0]), SeqSpec::constant(0.5)).unwrap();
            traj.ensure(black_box(10_000)).unwrap();
        })
    });
}

fn witness_search(c: &mut Criterion) {
    let t = Operator::Scale { a: 0.99, c: None }.compile(1).unwrap();
    let g = Modulus::affine(1, 1);
    c.bench_function("witness k=1000 slow contraction", |b| {
        b.iter(|| {
            let mut traj = Trajectory::picard(t.clone(), point(&[1.0])).unwrap();
            let fam = residual_family(&traj);
            find_witness(&mut traj, &Nat::from(1000u32), &g, 100_000, Some(&fam), 1e-9, &Budget::default()).unwrap()
        })
    });
}

criterion_group!(benches, mann_rotation, witness_search);
criterion_main!(benches);
