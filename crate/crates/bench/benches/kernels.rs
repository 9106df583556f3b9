use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mtsfm::analysis::{acf_closed_form, ccf_numeric};
use mtsfm::gbf::{default_max_order, gbf_via_fft};
use mtsfm::optimizer::{init_members, FamilyDesignProblem, ProblemConfig, WeightCase, Weights};
use mtsfm::synthesis::{random_waveform, synthesize, InitWeighting};
use mtsfm::{make_grid, Symmetry, TaperSpec, WaveformParams};

fn waveform(seed: u64, k: usize) -> WaveformParams {
    random_waveform(seed, k, 1.0, Symmetry::Even, 100.0, InitWeighting::OneOverK).unwrap()
}

fn gbf_coefficients(c: &mut Criterion) {
    let mut group = c.benchmark_group("gbf_via_fft");
    for k in [4, 16, 64] {
        let p = waveform(1, k);
        let order = default_max_order(&p);
        group.bench_with_input(BenchmarkId::from_parameter(k), &p, |b, p| {
            b.iter(|| gbf_via_fft(black_box(p), order).unwrap())
        });
    }
    group.finish();
}

fn correlations(c: &mut Criterion) {
    let (a, b) = (waveform(2, 64), waveform(3, 64));
    let grid = make_grid(&a, 16.0).unwrap().grid;
    let (wa, wb) = (synthesize(&a, &grid).unwrap(), synthesize(&b, &grid).unwrap());
    c.bench_function("ccf_numeric/k64", |bench| {
        bench.iter(|| ccf_numeric(black_box(&wa), black_box(&wb)).unwrap())
    });

    let coeffs = mtsfm::gbf::gbf(&a).unwrap();
    let delays: Vec<f64> = (-256..=256).map(|i| i as f64 / 256.0).collect();
    c.bench_function("acf_closed_form/k64_513_delays", |bench| {
        bench.iter(|| acf_closed_form(black_box(&coeffs), &a, &delays).unwrap())
    });
}

fn family_objective(c: &mut Criterion) {
    let members = init_members(2, 64, 1.0, 100.0, 2024, Symmetry::Even).unwrap();
    let mut config = ProblemConfig::new(Weights::for_case(WeightCase::Equal, 2).unwrap(), 0.2, 2024);
    config.taper = TaperSpec::tukey(0.05).unwrap();
    let problem = FamilyDesignProblem::new(members, config).unwrap();
    let x = problem.initial_indices();
    c.bench_function("family_objective/p2_k64", |b| {
        b.iter(|| problem.objective(black_box(&x)).unwrap())
    });
    let mut group = c.benchmark_group("family_gradient");
    group.sample_size(10);
    group.bench_function("p2_k64", |b| b.iter(|| problem.gradient(black_box(&x)).unwrap()));
    group.finish();
}

criterion_group!(benches, gbf_coefficients, correlations, family_objective);
criterion_main!(benches);
