//! Cross-checks between the closed-form threshold machinery and the grid
//! dynamic-programming oracle. The threshold for column `j` must equal the
//! discounted per-packet value difference of holding `j-1` versus `j-2`
//! slots of stock, read off the oracle's value function on the demand
//! lattice; the induced policy must reproduce the oracle's values and
//! actions exactly.

mod common;

use common::{load_fixture, random_linear_instance, random_pwl_instance};
use underflow_core::{
    compute_gamma_linear, compute_gamma_pwl, criticals_from_gamma, policy_value, solve_1rx,
    BaseStockPolicy, Grid1D, ProblemSpec, ThresholdTable, ValidatedSpec, ValueGrid1,
};

fn solve_on_default_grid(spec: &ValidatedSpec) -> ValueGrid1 {
    let d = spec.receiver(0).demand;
    let grid = Grid1D::new(d / 10.0, spec.horizon() as f64 * d).unwrap();
    solve_1rx(spec, &grid).unwrap()
}

/// Checks `gamma(n, j) == -h + (alpha / d) * E[V_{n-1}((j-2) d) - V_{n-1}((j-1) d)]`
/// for every interior cell.
fn check_value_difference_identity(spec: &ValidatedSpec, table: &ThresholdTable, vg: &ValueGrid1) {
    let r = spec.receiver(0);
    let d = r.demand;
    let h = match &r.holding {
        underflow_core::HoldingCost::Linear { rate } => *rate,
        other => panic!("threshold instances use linear holding, got {other:?}"),
    };
    let probs = r.iid_probs();
    for n in 2..=spec.horizon() {
        for j in 2..=n {
            let gamma = table.gamma(n, j).finite().expect("interior cells are finite");
            let mut diff = 0.0;
            for (s, &p) in probs.iter().enumerate() {
                let lo = vg.value(n - 1, s, (j as f64 - 2.0) * d);
                let hi = vg.value(n - 1, s, (j as f64 - 1.0) * d);
                diff += p * (lo - hi);
            }
            let expect = -h + spec.alpha() / d * diff;
            assert!(
                (gamma - expect).abs() <= 1e-7 * (1.0 + gamma.abs()),
                "value-difference identity fails at (n={n}, j={j}): table {gamma}, oracle {expect}"
            );
        }
    }
}

/// Policy value from empty buffers must match the oracle value, and the
/// policy action must match the oracle argmin on every demand-lattice state.
fn check_policy_matches_oracle(spec: &ValidatedSpec, policy: &BaseStockPolicy, vg: &ValueGrid1) {
    let r = spec.receiver(0);
    let d = r.demand;
    let d_steps = vg.grid().steps_per(d).unwrap();
    for s in 0..r.num_states() {
        let closed_form = policy_value(spec, policy, 0.0, s).unwrap();
        let oracle = vg.value(spec.horizon(), s, 0.0);
        assert!(
            (closed_form - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()),
            "policy value {closed_form} differs from oracle {oracle} in state {s}"
        );
        for n in 1..=spec.horizon() {
            for k in 0..=spec.horizon() {
                let (z_policy, _) = policy.action(n, k as f64 * d, s);
                let z_oracle = vg.zstar_node(n, s, k * d_steps);
                assert!(
                    (z_policy - z_oracle).abs() <= 1e-6,
                    "actions differ at n={n}, s={s}, x={}: policy {z_policy}, oracle {z_oracle}",
                    k as f64 * d
                );
            }
        }
    }
}

#[test]
fn linear_thresholds_match_oracle_value_differences() {
    for seed in [1u64, 2, 3, 4, 5] {
        let spec = random_linear_instance(seed).validate().unwrap();
        let table = compute_gamma_linear(&spec).unwrap();
        let vg = solve_on_default_grid(&spec);
        check_value_difference_identity(&spec, &table, &vg);
    }
}

#[test]
fn pwl_thresholds_match_oracle_value_differences() {
    for seed in [11u64, 12, 13, 14, 15] {
        let spec = random_pwl_instance(seed).validate().unwrap();
        let table = compute_gamma_pwl(&spec).unwrap();
        let vg = solve_on_default_grid(&spec);
        check_value_difference_identity(&spec, &table, &vg);
    }
}

#[test]
fn two_state_pwl_table_against_oracle() {
    // Two-state IID channel with one slope change per curve, horizon 3.
    let text = r#"{
        "receivers": [{
            "channel": {
                "states": [{"label": "good"}, {"label": "bad"}],
                "transition": [[0.6, 0.4], [0.6, 0.4]],
                "curve": [
                    {"kind": "piecewise_linear", "slopes": [1.0, 2.0], "breakpoints": [2.0]},
                    {"kind": "piecewise_linear", "slopes": [2.0, 4.0], "breakpoints": [1.0]}
                ]
            },
            "demand": 1.0,
            "holding": {"kind": "linear", "rate": 0.1},
            "initial_level": 0.0
        }],
        "peak_power": 6.0,
        "alpha": 0.9,
        "horizon": 3
    }"#;
    let spec = ProblemSpec::from_json_str(text).unwrap().validate().unwrap();
    let table = compute_gamma_pwl(&spec).unwrap();
    let vg = solve_on_default_grid(&spec);
    check_value_difference_identity(&spec, &table, &vg);
    let r = spec.receiver(0);
    let criticals = criticals_from_gamma(&table, &r.curves, r.demand);
    let policy = BaseStockPolicy::new(criticals, r.curves.clone(), r.demand);
    check_policy_matches_oracle(&spec, &policy, &vg);
}

#[test]
fn base_stock_policy_reproduces_oracle_on_fixture() {
    let spec = load_fixture("two_state.json").validate().unwrap();
    let (table, policy) = BaseStockPolicy::from_spec(&spec).unwrap();
    let vg = solve_on_default_grid(&spec);
    check_value_difference_identity(&spec, &table, &vg);
    check_policy_matches_oracle(&spec, &policy, &vg);
}

#[test]
fn oracle_actions_match_targets_on_didactic_instance() {
    // Equal-probability two-state channel, no holding, undiscounted: with two
    // slots left the cheap state stocks two slots, the dear state one.
    let text = r#"{
        "receivers": [{
            "channel": {
                "states": [{"label": "good"}, {"label": "bad"}],
                "transition": [[0.5, 0.5], [0.5, 0.5]],
                "curve": [
                    {"kind": "linear", "slope": 1.0},
                    {"kind": "linear", "slope": 2.0}
                ]
            },
            "demand": 1.0,
            "holding": {"kind": "linear", "rate": 0.0},
            "initial_level": 0.0
        }],
        "peak_power": 2.0,
        "alpha": 1.0,
        "horizon": 2
    }"#;
    let spec = ProblemSpec::from_json_str(text).unwrap().validate().unwrap();
    let vg = solve_on_default_grid(&spec);
    assert!((vg.zstar_node(2, 0, 0) - 2.0).abs() < 1e-12);
    assert!((vg.zstar_node(2, 1, 0) - 1.0).abs() < 1e-12);
}

#[test]
fn grid_refinement_deltas_shrink() {
    // Halving the step changes the solved value by less than the previous
    // halving did: convergence evidence toward the continuous problem.
    let spec = load_fixture("three_state_iid.json").validate().unwrap();
    let d = spec.receiver(0).demand;
    let x_max = spec.horizon() as f64 * d;
    let mut values = Vec::new();
    for div in [5.0, 10.0, 20.0, 40.0] {
        let grid = Grid1D::new(d / div, x_max).unwrap();
        let vg = solve_1rx(&spec, &grid).unwrap();
        values.push(vg.value(spec.horizon(), 0, 0.0));
    }
    let d1 = (values[1] - values[0]).abs();
    let d2 = (values[2] - values[1]).abs();
    let d3 = (values[3] - values[2]).abs();
    assert!(
        d2 <= d1 + 1e-12 && d3 <= d2 + 1e-12,
        "refinement deltas must shrink: {d1} {d2} {d3}"
    );
}

#[test]
fn value_upper_bound_from_constant_policy() {
    // Transmitting the demand every slot costs at most c_max * d + h(x) per
    // slot, which bounds the optimal values.
    for seed in [21u64, 22] {
        let spec = random_linear_instance(seed).validate().unwrap();
        let r = spec.receiver(0);
        let vg = solve_on_default_grid(&spec);
        let alpha = spec.alpha();
        for n in 1..=spec.horizon() {
            let weight: f64 = (0..n).map(|t| alpha.powi(t as i32)).sum();
            for s in 0..r.num_states() {
                for i in 0..vg.grid().num_nodes() {
                    let x = vg.grid().node(i);
                    let cap = (r.c_max * r.demand + r.holding.eval(x)) * weight;
                    assert!(
                        vg.value_node(n, s, i) <= cap + 1e-9,
                        "upper bound violated at n={n}, s={s}, x={x}"
                    );
                }
            }
        }
    }
}
