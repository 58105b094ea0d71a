//! Benchmarks of the numerical kernels everything else is built on:
//! stationary solves, trajectory sampling, the complex mobility resolvent,
//! and semigroup (matrix-exponential) application.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use mjp_bench::{birth_death_chain, conductance_torus, two_periodic_ring, up_edge_tilt};
use mjp_core::expm::Propagator;
use mjp_core::paths::simulate_homogeneous;
use mjp_core::response_mc::lr_covariance;
use mjp_core::{FunctionalSpec, McParams, RngStream, StationaryChain};

fn bench_stationary_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("stationary_solve");
    for side in [8usize, 16] {
        let model = conductance_torus(2, side);
        let rates = model.chain().rates().clone();
        group.bench_function(format!("conductance_torus_2d_{side}"), |b| {
            b.iter_batched(
                || rates.clone(),
                |r| StationaryChain::new(black_box(r)).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn bench_path_sampling(c: &mut Criterion) {
    let (_, chain) = birth_death_chain(50);
    let rates = chain.rates();
    let mut group = c.benchmark_group("path_sampling");
    group.bench_function("birth_death_50_t10", |b| {
        let mut stream = 0u64;
        b.iter(|| {
            stream += 1;
            let mut rng = RngStream::new(99, stream);
            black_box(simulate_homogeneous(rates, 0, 10.0, &mut rng, 100_000))
        })
    });
    group.finish();
}

fn bench_mobility_resolvent(c: &mut Criterion) {
    let mut group = c.benchmark_group("mobility");
    let ring = two_periodic_ring(64);
    group.bench_function("ring_64_omega1", |b| {
        b.iter(|| mjp_core::mobility::mobility(black_box(&ring), 1.0).unwrap())
    });
    let torus = conductance_torus(2, 16);
    group.bench_function("conductance_torus_2d_16_omega1", |b| {
        b.iter(|| mjp_core::mobility::mobility(black_box(&torus), 1.0).unwrap())
    });
    // omega = 0 takes the restricted (mean-zero subspace) branch.
    group.bench_function("conductance_torus_2d_16_omega0", |b| {
        b.iter(|| mjp_core::mobility::mobility(black_box(&torus), 0.0).unwrap())
    });
    group.finish();
}

fn bench_semigroup_apply(c: &mut Criterion) {
    let (_, chain) = birth_death_chain(100);
    let prop = Propagator::new(chain.rates());
    let v: Vec<f64> = (0..chain.len()).map(|k| (k as f64 * 0.37).sin()).collect();
    // First application pays the factorization; report it separately.
    let mut group = c.benchmark_group("semigroup");
    group.bench_function("propagator_build_bd_100", |b| {
        b.iter_batched(
            || Propagator::new(chain.rates()),
            |p| black_box(p.apply(1.0, &v)),
            BatchSize::SmallInput,
        )
    });
    group.bench_function("propagator_apply_bd_100", |b| {
        b.iter(|| black_box(prop.apply(black_box(1.0), &v)))
    });
    group.finish();
}

fn bench_response_estimator(c: &mut Criterion) {
    let (_, chain) = birth_death_chain(50);
    let g = up_edge_tilt(chain.rates());
    let v: Vec<f64> = (0..chain.len()).map(|k| (k.min(5)) as f64 / 5.0).collect();
    let spec = FunctionalSpec::TerminalObservable(mjp_core::paths::Observable::Static(v));
    let nu = chain.pi().as_slice().to_vec();
    let params = McParams::new(1.0, 2_000, 1234);
    let mut group = c.benchmark_group("response_mc");
    group.sample_size(20);
    group.bench_function("covariance_bd50_2000paths", |b| {
        b.iter(|| {
            black_box(lr_covariance(chain.rates(), &nu, &spec, &g, &params).unwrap())
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_stationary_solve,
    bench_path_sampling,
    bench_mobility_resolvent,
    bench_semigroup_apply,
    bench_response_estimator,
);
criterion_main!(benches);
