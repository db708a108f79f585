use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use deskpilot_bench::{button_policy, button_scenario, gradient, grid_controls};
use deskpilot_core::annotate::{annotate, Palette};
use deskpilot_core::backend::SimDesktop;
use deskpilot_core::bridge::ScriptedPolicy;
use deskpilot_core::filter::{hard_filter, FilterConfig};
use deskpilot_core::Orchestrator;

fn bench_annotate(c: &mut Criterion) {
    let image = gradient(1280, 800);
    let palette = Palette::default();
    let mut group = c.benchmark_group("annotate");
    for n in [10, 60, 200] {
        let controls = grid_controls(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &controls, |b, controls| {
            b.iter(|| annotate(black_box(&image), controls, &palette).unwrap())
        });
    }
    group.finish();
}

fn bench_hard_filter(c: &mut Criterion) {
    let config = FilterConfig::default();
    let mut group = c.benchmark_group("hard_filter");
    for n in [60, 1000] {
        let controls = grid_controls(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &controls, |b, controls| {
            b.iter(|| hard_filter(black_box(controls), &config))
        });
    }
    group.finish();
}

fn bench_run_request(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_request");
    group.sample_size(20);
    for n in [8, 48] {
        let scenario = button_scenario(n);
        let policy = button_policy(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                let mut orch = Orchestrator::new(
                    "bench",
                    Box::new(SimDesktop::new(scenario.clone())),
                    Box::new(ScriptedPolicy::new(policy.clone())),
                );
                let outcome = orch.run_request("press the last button");
                assert!(outcome.succeeded);
                outcome
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_annotate, bench_hard_filter, bench_run_request);
criterion_main!(benches);
