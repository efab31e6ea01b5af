//! Benchmarks for the smoothing kernels of the workload: single-series
//! local linear fits and the full multi-step fit at realistic panel sizes.

use basecurve::{
    default_param_grid, generate, local_linear_fit, multi_step_fit, Bandwidths, Design,
    FitOptions, KernelFamily, SimConfig, SimCurve, SmoothingPlan,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn sim_panel(n: usize, t: usize) -> basecurve::SpectraPanel {
    let config = SimConfig {
        n,
        t,
        sigma: 0.25,
        curve: SimCurve::default_sine_mix(),
        params: default_param_grid(n),
        design: Design::EquallySpaced { lo: 0.0, hi: 1.0 },
        seed: 99,
        replications: 1,
    };
    generate(&config, 0).unwrap()
}

fn bench_local_linear(c: &mut Criterion) {
    let mut group = c.benchmark_group("local_linear_fit");
    for &t in &[500usize, 2000, 8000] {
        let panel = sim_panel(1, t);
        let x = panel.x_row(0).to_vec();
        let y = panel.y_row(0).to_vec();
        let plan =
            SmoothingPlan::new(KernelFamily::Epanechnikov.spec(), 0.02, x.clone()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, _| {
            b.iter(|| local_linear_fit(black_box(&x), black_box(&y), &plan).unwrap())
        });
    }
    group.finish();
}

fn bench_multi_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("multi_step_fit");
    group.sample_size(20);
    for &(n, t) in &[(10usize, 500usize), (30, 2000)] {
        let panel = sim_panel(n, t);
        let bw = Bandwidths::new(0.03, 0.02).unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("n{n}_t{t}")),
            &t,
            |b, _| {
                b.iter(|| {
                    multi_step_fit(
                        black_box(&panel),
                        &KernelFamily::Epanechnikov.spec(),
                        bw,
                        &FitOptions::default(),
                    )
                    .unwrap()
                })
            },
        );
    }
    group.finish();
}

criterion_group!(benches, bench_local_linear, bench_multi_step);
criterion_main!(benches);
