use criterion::{black_box, criterion_group, criterion_main, Criterion};
use grazing_core::builtins::{impact_cycle, spiral_impact, spiral_period};
use grazing_core::continuation::{orbits_at, ScanOptions};
use grazing_core::floquet::monodromy;
use grazing_core::linearize::{assemble_branches, LinOptions};
use grazing_core::{simulate, SimOptions, StateVec};

fn simulate_spiral(c: &mut Criterion) {
    let sys = spiral_impact();
    let x0 = StateVec::from_vec(vec![0.8, 1.2]);
    let opts = SimOptions::default();
    c.bench_function("simulate spiral 10 periods", |b| {
        b.iter(|| simulate(&sys, black_box(&x0), 0.0, 10.0 * spiral_period(), &opts).unwrap())
    });
}

fn spiral_monodromy(c: &mut Criterion) {
    let sys = spiral_impact();
    let zeta = StateVec::from_vec(vec![0.0, 1.0]);
    let lin = LinOptions::default();
    c.bench_function("spiral branches and monodromies", |b| {
        b.iter(|| {
            let branches = assemble_branches(&sys, black_box(&zeta), spiral_period(), &lin).unwrap();
            branches.iter().map(|br| monodromy(br, &lin.sim.control()).unwrap()).collect::<Vec<_>>()
        })
    });
}

fn impact_orbits(c: &mut Criterion) {
    let fam = impact_cycle();
    let opts = ScanOptions::default();
    let mut group = c.benchmark_group("continuation");
    group.sample_size(10);
    group.bench_function("impact orbits at mu = -0.2", |b| b.iter(|| orbits_at(&fam, black_box(-0.2), &opts).unwrap()));
    group.finish();
}

criterion_group!(benches, simulate_spiral, spiral_monodromy, impact_orbits);
criterion_main!(benches);
