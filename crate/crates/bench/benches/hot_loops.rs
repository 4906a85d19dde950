use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::Matrix3;

use thinfilm::energy::{e_atom, e_atom_gradient};
use thinfilm::limits::{e_vk_nu, Quadrature};
use thinfilm::recovery::build_recovery;
use thinfilm::{perturbed_identity, Field, Lattice, RecoveryMap, Regime};
use thinfilm_bench::{film, forms, mass_spring};

fn cell_loop(c: &mut Criterion) {
    let model = mass_spring();
    let mut g = c.benchmark_group("e_atom");
    for n in [16usize, 32, 64] {
        let lat = Lattice::new(film(n, 3)).unwrap();
        let w = perturbed_identity(&lat, 0.05, 1);
        g.bench_with_input(BenchmarkId::new("energy", n), &w, |b, w| {
            b.iter(|| e_atom(w, &lat, &model))
        });
        g.bench_with_input(BenchmarkId::new("gradient", n), &w, |b, w| {
            b.iter(|| e_atom_gradient(w, &lat, &model))
        });
    }
    g.finish();
}

fn recovery(c: &mut Criterion) {
    let forms = forms();
    let field = Field::canonical(1.0);
    let model = mass_spring();
    let mut g = c.benchmark_group("recovery");
    for n in [16usize, 32, 64] {
        let cfg = film(n, 3);
        g.bench_function(BenchmarkId::new("build", n), |b| {
            b.iter(|| build_recovery(&field, &forms, cfg, Regime::Ultrathin).unwrap())
        });
        let lat = Lattice::new(cfg).unwrap();
        let map = RecoveryMap::new(&field, &forms, cfg, Regime::Ultrathin, Matrix3::identity()).unwrap();
        g.bench_function(BenchmarkId::new("energy_on_map", n), |b| {
            b.iter(|| e_atom(&map, &lat, &model))
        });
    }
    g.finish();
}

fn limit_quadrature(c: &mut Criterion) {
    let forms = forms();
    let field = Field::canonical(1.0);
    let mut g = c.benchmark_group("limit");
    for m in [64usize, 256, 512] {
        let quad = Quadrature::square(1.0, m);
        g.bench_function(BenchmarkId::new("e_vk_nu", m), |b| {
            b.iter(|| e_vk_nu(&field, 3, &forms, &quad, None).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, cell_loop, recovery, limit_quadrature);
criterion_main!(benches);
