use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use harso_core::fixtures::{desk_arma, desk_pv_shapes, tiny_instance};
use harso_core::forge::sample_pv_scenarios;
use harso_core::subproblem::enumerate_worst_case;
use harso_core::{Execution, FirstStageDecision, TimeGrid};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn worst_case_enumeration(c: &mut Criterion) {
    let inst = tiny_instance(6, 2, 2, 2).with_budget(3.0);
    let mut fixed = FirstStageDecision::empty(&inst, true);
    fixed.pv_capacity = 2.0;
    fixed.tech_selected[0] = true;
    fixed.bess_capacity[0] = 1.5;

    let mut group = c.benchmark_group("enumerate_worst_case");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| enumerate_worst_case(black_box(&inst), black_box(&fixed), exec).unwrap())
        });
    }
    group.finish();
}

fn pv_scenarios(c: &mut Criterion) {
    let arma = desk_arma(7);
    let shapes: Vec<Vec<f64>> = desk_pv_shapes().into_iter().cycle().take(64).collect();
    let grid = TimeGrid {
        hours_per_day: 24,
        years: 20,
    };
    let mut group = c.benchmark_group("sample_pv_scenarios");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| sample_pv_scenarios(black_box(&arma), black_box(&shapes), grid, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, worst_case_enumeration, pv_scenarios);
criterion_main!(benches);
