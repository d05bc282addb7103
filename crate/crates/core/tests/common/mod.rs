//! Shared fixtures and seeded instance generators for the integration tests.
#![allow(dead_code)] // each test binary uses its own subset

use std::path::PathBuf;

use underflow_core::{
    ChannelConfig, ChannelState, CounterRng, HoldingCost, PowerRateCurve, ProblemSpec,
    ReceiverSpec,
};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn load_fixture(name: &str) -> ProblemSpec {
    ProblemSpec::from_path(fixture_path(name)).expect("fixture parses")
}

/// Deterministic scalar stream for instance generation.
pub struct Draw {
    rng: CounterRng,
    counter: u64,
}

impl Draw {
    pub fn new(seed: u64) -> Self {
        Draw {
            rng: CounterRng::new(seed),
            counter: 0,
        }
    }

    pub fn unit(&mut self) -> f64 {
        self.counter += 1;
        self.rng.uniform(0, self.counter, 0)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn pick(&mut self, n: usize) -> usize {
        ((self.unit() * n as f64) as usize).min(n - 1)
    }
}

fn probs(draw: &mut Draw, n: usize) -> Vec<f64> {
    let mut raw: Vec<f64> = (0..n).map(|_| 0.05 + draw.unit()).collect();
    let sum: f64 = raw.iter().sum();
    for p in &mut raw[..n - 1] {
        *p /= sum;
    }
    raw[n - 1] = 1.0 - raw[..n - 1].iter().sum::<f64>();
    raw
}

fn states(n: usize) -> Vec<ChannelState> {
    (0..n)
        .map(|i| ChannelState {
            label: format!("s{i}"),
        })
        .collect()
}

/// Single receiver, IID channel, linear curves whose power cap covers an
/// integer number of slots in every state, linear holding cost.
pub fn random_linear_instance(seed: u64) -> ProblemSpec {
    let mut draw = Draw::new(seed);
    let n_states = 1 + draw.pick(4);
    let demand = [0.5, 1.0, 2.0][draw.pick(3)];
    let peak = draw.range(2.0, 6.0);
    let curve: Vec<PowerRateCurve> = (0..n_states)
        .map(|_| {
            let coverage = 1 + draw.pick(4) as u64;
            PowerRateCurve::Linear {
                slope: peak / (coverage as f64 * demand),
            }
        })
        .collect();
    let row = probs(&mut draw, n_states);
    ProblemSpec {
        receivers: vec![ReceiverSpec {
            channel: ChannelConfig {
                states: states(n_states),
                transition: vec![row; n_states],
                curve,
            },
            demand,
            holding: HoldingCost::Linear {
                rate: draw.range(0.05, 0.3),
            },
            initial_level: 0.0,
        }],
        peak_power: peak,
        alpha: draw.range(0.6, 0.98),
        horizon: 2 + draw.pick(7),
        tolerance: 1e-12,
    }
}

/// Single receiver, IID channel, piecewise-linear curves whose breakpoints
/// and caps all sit on the demand lattice.
pub fn random_pwl_instance(seed: u64) -> ProblemSpec {
    let mut draw = Draw::new(seed);
    let n_states = 1 + draw.pick(4);
    let demand = [0.5, 1.0][draw.pick(2)];
    let peak = draw.range(3.0, 7.0);
    let curve: Vec<PowerRateCurve> = (0..n_states)
        .map(|_| {
            let cap_cover = 2 + draw.pick(4) as u64; // 2..=5 slots at full power
            let segments = 1 + draw.pick((cap_cover as usize).min(3)); // 1..=3
            // Distinct interior coverage counts, ascending.
            let mut covers: Vec<u64> = Vec::new();
            let mut next = 1 + draw.pick(2) as u64;
            while covers.len() + 1 < segments && next < cap_cover {
                covers.push(next);
                next += 1 + draw.pick(2) as u64;
            }
            let mut slopes: Vec<f64> = Vec::with_capacity(covers.len() + 1);
            let mut s = draw.range(0.5, 1.5);
            for _ in 0..=covers.len() {
                slopes.push(s);
                s += draw.range(0.0, 1.0);
            }
            // Scale so the cap lands exactly on cap_cover slots of demand.
            let mut cost = 0.0;
            let mut prev = 0.0;
            for (k, &cv) in covers.iter().enumerate() {
                cost += slopes[k] * (cv as f64 * demand - prev);
                prev = cv as f64 * demand;
            }
            cost += slopes[covers.len()] * (cap_cover as f64 * demand - prev);
            let scale = peak / cost;
            let slopes: Vec<f64> = slopes.iter().map(|s| s * scale).collect();
            if covers.is_empty() {
                PowerRateCurve::Linear { slope: slopes[0] }
            } else {
                PowerRateCurve::PiecewiseLinear {
                    slopes,
                    breakpoints: covers.iter().map(|c| *c as f64 * demand).collect(),
                }
            }
        })
        .collect();
    let row = probs(&mut draw, n_states);
    ProblemSpec {
        receivers: vec![ReceiverSpec {
            channel: ChannelConfig {
                states: states(n_states),
                transition: vec![row; n_states],
                curve,
            },
            demand,
            holding: HoldingCost::Linear {
                rate: draw.range(0.05, 0.3),
            },
            initial_level: 0.0,
        }],
        peak_power: peak,
        alpha: draw.range(0.6, 0.98),
        horizon: 2 + draw.pick(7),
        tolerance: 1e-12,
    }
}

/// Two receivers, independent IID two-state channels, linear curves, budget
/// moderately above the worst-case joint demand power so it binds often.
pub fn random_two_rx_instance(seed: u64) -> ProblemSpec {
    let mut draw = Draw::new(seed);
    let mut worst_total = 0.0;
    let mut receivers = Vec::new();
    for _ in 0..2 {
        let c_good = draw.range(0.8, 1.6);
        let c_bad = c_good + draw.range(0.3, 1.0);
        worst_total += c_bad;
        let p_good = draw.range(0.3, 0.7);
        receivers.push(ReceiverSpec {
            channel: ChannelConfig {
                states: states(2),
                transition: vec![vec![p_good, 1.0 - p_good]; 2],
                curve: vec![
                    PowerRateCurve::Linear { slope: c_good },
                    PowerRateCurve::Linear { slope: c_bad },
                ],
            },
            demand: 1.0,
            holding: HoldingCost::Linear {
                rate: draw.range(0.0, 0.1),
            },
            initial_level: 0.0,
        });
    }
    ProblemSpec {
        receivers,
        peak_power: worst_total * draw.range(1.05, 1.55),
        alpha: [1.0, 0.95, 0.9][draw.pick(3)],
        horizon: 4,
        tolerance: 1e-12,
    }
}
