//! Benchmarks for the hot solver paths: threshold recursion, single-receiver
//! backward induction, a two-receiver solve, and the simulator.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use underflow_core::{
    compute_gamma_pwl, simulate, solve_1rx, solve_2rx, BaseStockPolicy, BaseStockSimPolicy,
    ChannelConfig, ChannelState, Grid1D, Grid2D, HoldingCost, PowerRateCurve, ProblemSpec,
    ReceiverSpec, SimConfig, SolveOptions, ValidatedSpec,
};

fn four_state_channel() -> ChannelConfig {
    ChannelConfig {
        states: (0..4)
            .map(|i| ChannelState {
                label: format!("s{i}"),
            })
            .collect(),
        transition: vec![vec![0.4, 0.3, 0.2, 0.1]; 4],
        curve: vec![
            PowerRateCurve::Linear { slope: 1.0 },
            PowerRateCurve::Linear { slope: 2.0 },
            PowerRateCurve::Linear { slope: 3.0 },
            PowerRateCurve::Linear { slope: 6.0 },
        ],
    }
}

fn one_rx_spec(horizon: usize) -> ValidatedSpec {
    ProblemSpec {
        receivers: vec![ReceiverSpec {
            channel: four_state_channel(),
            demand: 1.0,
            holding: HoldingCost::Linear { rate: 0.1 },
            initial_level: 0.0,
        }],
        peak_power: 6.0,
        alpha: 0.95,
        horizon,
        tolerance: 1e-12,
    }
    .validate()
    .unwrap()
}

fn two_rx_spec(horizon: usize) -> ValidatedSpec {
    let channel = ChannelConfig {
        states: vec![
            ChannelState { label: "g".into() },
            ChannelState { label: "b".into() },
        ],
        transition: vec![vec![0.5, 0.5]; 2],
        curve: vec![
            PowerRateCurve::Linear { slope: 1.0 },
            PowerRateCurve::Linear { slope: 2.0 },
        ],
    };
    ProblemSpec {
        receivers: vec![
            ReceiverSpec {
                channel: channel.clone(),
                demand: 1.0,
                holding: HoldingCost::Linear { rate: 0.1 },
                initial_level: 0.0,
            },
            ReceiverSpec {
                channel,
                demand: 1.0,
                holding: HoldingCost::Linear { rate: 0.1 },
                initial_level: 0.0,
            },
        ],
        peak_power: 4.2,
        alpha: 0.95,
        horizon,
        tolerance: 1e-12,
    }
    .validate()
    .unwrap()
}

fn bench_thresholds(c: &mut Criterion) {
    let mut group = c.benchmark_group("threshold-recursion");
    for n in [32usize, 128] {
        let spec = one_rx_spec(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &spec, |b, spec| {
            b.iter(|| compute_gamma_pwl(spec).unwrap());
        });
    }
    group.finish();
}

fn bench_solve_1rx(c: &mut Criterion) {
    let spec = one_rx_spec(16);
    let grid = Grid1D::new(0.1, 16.0).unwrap();
    c.bench_function("solve-1rx-16-slots-161-nodes", |b| {
        b.iter(|| solve_1rx(&spec, &grid).unwrap());
    });
}

fn bench_solve_2rx(c: &mut Criterion) {
    let spec = two_rx_spec(3);
    let grid = Grid2D::square(0.1, 3.0).unwrap();
    c.bench_function("solve-2rx-3-slots-31x31", |b| {
        b.iter(|| solve_2rx(&spec, &grid, SolveOptions::default()).unwrap());
    });
}

fn bench_simulate(c: &mut Criterion) {
    let spec = one_rx_spec(16);
    let (_, policy) = BaseStockPolicy::from_spec(&spec).unwrap();
    let policy = BaseStockSimPolicy::new(policy);
    let cfg = SimConfig {
        episodes: 1000,
        slots: 16,
        seed: 1,
        initial_states: vec![0],
    };
    c.bench_function("simulate-1000x16-base-stock", |b| {
        b.iter(|| simulate(&policy, &spec, &cfg).unwrap());
    });
}

criterion_group!(
    benches,
    bench_thresholds,
    bench_solve_1rx,
    bench_solve_2rx,
    bench_simulate
);
criterion_main!(benches);
