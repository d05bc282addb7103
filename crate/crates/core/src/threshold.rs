//! Closed-form threshold tables and the base-stock policies they induce.
//!
//! For a single receiver with an IID channel, linear holding cost, and
//! power-rate curves whose slope changes (and the peak cap) fall on integer
//! multiples of the per-slot demand, the optimal policy is characterized by a
//! table of per-packet cost thresholds. With `n` slots remaining, the
//! threshold for column `j` is the marginal power cost at which stocking the
//! buffer for `j-1` versus `j` future slots has equal expected cost-to-go.
//! Comparing a state's segment slopes against the thresholds yields the
//! critical numbers (buffer targets) of the policy.
//!
//! [`compute_gamma_linear`] handles single-slope curves in O(N^2 * |S|)
//! operations; [`compute_gamma_pwl`] generalizes to piecewise-linear convex
//! curves and reduces exactly to the linear recursion when every curve has one
//! segment.
//!
//! Time-varying per-slot demand is not supported: the recursions assume a
//! constant drain rate per receiver.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::model::{EffectiveCurve, HoldingCost, ValidatedSpec, INTEGER_REL_TOL};

#[derive(Debug, Error)]
pub enum ThresholdError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}

/// Extended real for thresholds: finite value or positive infinity. The
/// infinite sentinel is an explicit tag so comparisons against segment slopes
/// stay exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn is_infinite(&self) -> bool {
        matches!(self, ExtReal::PosInf)
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(*v),
            ExtReal::PosInf => None,
        }
    }

    /// Lossy conversion for reporting; the tag form is authoritative.
    pub fn as_f64(&self) -> f64 {
        match self {
            ExtReal::Finite(v) => *v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    fn cmp_f64(&self, x: f64) -> Ordering {
        match self {
            ExtReal::PosInf => Ordering::Greater,
            ExtReal::Finite(v) => v.partial_cmp(&x).expect("threshold values are not NaN"),
        }
    }

    /// `x < self` with the infinite tag always greater than any finite x.
    pub fn gt(&self, x: f64) -> bool {
        self.cmp_f64(x) == Ordering::Greater
    }

    /// `self <= x`.
    pub fn le(&self, x: f64) -> bool {
        self.cmp_f64(x) != Ordering::Greater
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => write!(f, "inf"),
        }
    }
}

/// Table of thresholds indexed by slots-remaining `n` and coverage depth `j`.
///
/// Row invariants: the `j = 1` entry is infinite, entries are nonincreasing in
/// `j`, and entries vanish for `j > n`.
#[derive(Debug, Clone)]
pub struct ThresholdTable {
    horizon: usize,
    /// `rows[n-1][j-1]` holds the threshold for `(n, j)`, `j` in `1..=n+1`.
    rows: Vec<Vec<ExtReal>>,
    /// Per state: slot coverage of each curve breakpoint, then of the peak cap
    /// as the final entry.
    pub coverage: Vec<Vec<u64>>,
}

impl ThresholdTable {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Threshold for `(n, j)`; `j > n` maps to zero, `j = 1` to infinity.
    pub fn gamma(&self, n: usize, j: usize) -> ExtReal {
        assert!(n >= 1 && n <= self.horizon, "n = {n} outside 1..={}", self.horizon);
        assert!(j >= 1, "j must be >= 1");
        if j == 1 {
            ExtReal::PosInf
        } else if j > n {
            ExtReal::Finite(0.0)
        } else {
            self.rows[n - 1][j - 1]
        }
    }

    /// CSV rows `n,j,gamma` for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,j,gamma\n");
        for n in 1..=self.horizon {
            for j in 1..=n + 1 {
                out.push_str(&format!("{n},{j},{}\n", self.gamma(n, j)));
            }
        }
        out
    }
}

/// Buffer targets `b[n][s][k]`: with `n` slots remaining in channel state `s`,
/// the target level associated with the `k`-th segment of the power-rate
/// curve. Nonincreasing in `k`; the implicit `k = -1` entry is infinite.
#[derive(Debug, Clone)]
pub struct CriticalNumbers {
    horizon: usize,
    b: Vec<Vec<Vec<f64>>>,
}

impl CriticalNumbers {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.b[0].len()
    }

    pub fn num_segments(&self, state: usize) -> usize {
        self.b[0][state].len()
    }

    pub fn target(&self, n: usize, state: usize, segment: usize) -> f64 {
        self.b[n - 1][state][segment]
    }

    /// All targets for `(n, state)`, ordered by segment.
    pub fn targets(&self, n: usize, state: usize) -> &[f64] {
        &self.b[n - 1][state]
    }

    /// CSV rows `n,s,k,b`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,s,k,b\n");
        for n in 1..=self.horizon {
            for (s, row) in self.b[n - 1].iter().enumerate() {
                for (k, b) in row.iter().enumerate() {
                    out.push_str(&format!("{n},{s},{k},{b}\n"));
                }
            }
        }
        out
    }
}

fn single_receiver(spec: &ValidatedSpec) -> Result<&crate::model::ValidatedReceiver, ThresholdError> {
    if spec.num_receivers() != 1 {
        return Err(ThresholdError::PreconditionViolated(format!(
            "threshold tables require a single receiver, got {}",
            spec.num_receivers()
        )));
    }
    Ok(spec.receiver(0))
}

fn linear_holding_rate(holding: &HoldingCost) -> Result<f64, ThresholdError> {
    match holding {
        HoldingCost::Linear { rate } => Ok(*rate),
        other => Err(ThresholdError::PreconditionViolated(format!(
            "holding cost must be linear, got {other:?}"
        ))),
    }
}

fn as_slot_multiple(z: f64, demand: f64, what: &str) -> Result<u64, ThresholdError> {
    let ratio = z / demand;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > INTEGER_REL_TOL * ratio.max(1.0) {
        return Err(ThresholdError::PreconditionViolated(format!(
            "{what} = {z} is not a positive integer multiple of demand {demand}"
        )));
    }
    Ok(rounded as u64)
}

/// Slot-coverage counts for one state's curve: breakpoints then the cap.
fn coverage_of(curve: &EffectiveCurve, demand: f64, state: usize) -> Result<Vec<u64>, ThresholdError> {
    let mut cov = Vec::with_capacity(curve.num_segments());
    let mut prev = 0u64;
    for (k, &z) in curve.breakpoints().iter().enumerate() {
        let l = as_slot_multiple(z, demand, &format!("state {state} breakpoint {k}"))?;
        if l <= prev {
            return Err(ThresholdError::PreconditionViolated(format!(
                "state {state}: breakpoint coverage counts must increase"
            )));
        }
        cov.push(l);
        prev = l;
    }
    let l_max = as_slot_multiple(curve.z_max(), demand, &format!("state {state} max transmission"))?;
    if l_max <= prev {
        return Err(ThresholdError::PreconditionViolated(format!(
            "state {state}: peak coverage {l_max} must exceed the last breakpoint coverage {prev}"
        )));
    }
    cov.push(l_max);
    Ok(cov)
}

/// Threshold recursion for linear power-rate curves (single receiver, IID
/// channel, linear holding cost, and the peak cap covering an integer number
/// of slots in every state).
pub fn compute_gamma_linear(spec: &ValidatedSpec) -> Result<ThresholdTable, ThresholdError> {
    let r = single_receiver(spec)?;
    for (s, curve) in r.curves.iter().enumerate() {
        if curve.num_segments() != 1 {
            return Err(ThresholdError::PreconditionViolated(format!(
                "state {s}: effective curve has {} segments; linear recursion needs 1",
                curve.num_segments()
            )));
        }
    }
    compute_gamma_impl(spec, true)
}

/// Threshold recursion for piecewise-linear convex power-rate curves whose
/// breakpoints and peak cap all cover integer numbers of slots. Reduces to
/// [`compute_gamma_linear`] when every curve has a single segment.
pub fn compute_gamma_pwl(spec: &ValidatedSpec) -> Result<ThresholdTable, ThresholdError> {
    compute_gamma_impl(spec, true)
}

/// Shared recursion. `with_power_cap = false` drops the terms induced by the
/// peak power constraint, yielding the thresholds of the unrestricted
/// problem; those are dominated by the capped ones term by term.
pub(crate) fn compute_gamma_impl(
    spec: &ValidatedSpec,
    with_power_cap: bool,
) -> Result<ThresholdTable, ThresholdError> {
    let r = single_receiver(spec)?;
    if !r.iid {
        return Err(ThresholdError::PreconditionViolated(
            "channel must be IID (identical transition rows)".into(),
        ));
    }
    let h = linear_holding_rate(&r.holding)?;
    let d = r.demand;
    let alpha = spec.alpha();
    let probs = r.iid_probs().to_vec();
    let n_horizon = spec.horizon();

    let mut coverage = Vec::with_capacity(r.num_states());
    for (s, curve) in r.curves.iter().enumerate() {
        coverage.push(coverage_of(curve, d, s)?);
    }

    let mut table = ThresholdTable {
        horizon: n_horizon,
        rows: Vec::with_capacity(n_horizon),
        coverage,
    };

    for n in 1..=n_horizon {
        let mut row = vec![ExtReal::Finite(0.0); n + 1];
        row[0] = ExtReal::PosInf;
        for j in 2..=n {
            row[j - 1] = ExtReal::Finite(gamma_cell(&table, r, &probs, h, alpha, n, j, with_power_cap));
        }
        // j = n + 1 stays zero by construction.
        table.rows.push(row);
    }
    Ok(table)
}

/// One recursion cell for `2 <= j <= n`. Each state contributes exactly one
/// term, determined by where its slope ladder crosses the previous row's
/// threshold ladder.
#[allow(clippy::too_many_arguments)]
fn gamma_cell(
    table: &ThresholdTable,
    r: &crate::model::ValidatedReceiver,
    probs: &[f64],
    h: f64,
    alpha: f64,
    n: usize,
    j: usize,
    with_power_cap: bool,
) -> f64 {
    let mut expectation = 0.0;
    for (s, curve) in r.curves.iter().enumerate() {
        let p = probs[s];
        if p == 0.0 {
            continue;
        }
        let slopes = curve.slopes();
        let cov = &table.coverage[s];
        let segments = slopes.len();
        // Threshold at coverage depth j - 1 + extra, clipped to the previous
        // stage's row semantics.
        let theta = |extra: u64| -> ExtReal {
            let jj = j - 1 + extra as usize;
            table.gamma(n - 1, jj)
        };

        if !with_power_cap {
            // Unrestricted problem (single-segment curves only): the state
            // pays min(slope, previous threshold); the cap-induced term is
            // dropped.
            debug_assert_eq!(segments, 1, "unrestricted recursion is linear-only");
            let t_prev = theta(0);
            let contrib = if t_prev.gt(slopes[0]) {
                slopes[0]
            } else {
                t_prev.finite().expect("j >= 2 thresholds are finite")
            };
            expectation += p * contrib;
            continue;
        }

        // Capped recursion: sequential scan with invariant
        // slopes[k] < theta(cov[k-1]) on entry to step k.
        let mut contrib = None;
        if !theta(0).gt(slopes[0]) {
            contrib = Some(theta(0).finite().expect("j >= 2 thresholds are finite"));
        } else {
            for k in 0..segments - 1 {
                let t_k = theta(cov[k]);
                if !t_k.gt(slopes[k]) {
                    // theta(cov[k]) <= slope_k < theta(cov[k-1])
                    contrib = Some(slopes[k]);
                    break;
                }
                if t_k.le(slopes[k + 1]) {
                    // slope_k < theta(cov[k]) <= slope_{k+1}
                    contrib = Some(t_k.finite().unwrap());
                    break;
                }
            }
            if contrib.is_none() {
                let t_max = theta(cov[segments - 1]);
                let last = slopes[segments - 1];
                if !t_max.gt(last) {
                    contrib = Some(last);
                } else {
                    contrib = Some(t_max.finite().expect("coverage >= 1 keeps the index >= 2"));
                }
            }
        }
        expectation += p * contrib.unwrap();
    }
    -h + alpha * expectation
}

/// Reads the buffer targets off a threshold table: segment `k` of state `s`
/// gets target `j * d` where `j` is the unique column with
/// `gamma(n, j+1) <= slope_k < gamma(n, j)`. Ties at the lower edge assign the
/// smaller target (the interval is closed below, open above).
pub fn criticals_from_gamma(
    table: &ThresholdTable,
    curves: &[EffectiveCurve],
    demand: f64,
) -> CriticalNumbers {
    let mut b = Vec::with_capacity(table.horizon());
    for n in 1..=table.horizon() {
        let mut per_state = Vec::with_capacity(curves.len());
        for curve in curves {
            let mut targets = Vec::with_capacity(curve.num_segments());
            for &slope in curve.slopes() {
                let mut j = 1;
                while table.gamma(n, j + 1).gt(slope) {
                    j += 1;
                    debug_assert!(j <= n, "threshold rows end at zero, slope is positive");
                }
                targets.push(j as f64 * demand);
            }
            per_state.push(targets);
        }
        b.push(per_state);
    }
    CriticalNumbers {
        horizon: table.horizon(),
        b,
    }
}

/// A policy defined by buffer targets: transmit along each curve segment in
/// turn until the buffer reaches that segment's target or the segment (or the
/// power budget) is exhausted.
#[derive(Debug, Clone)]
pub struct BaseStockPolicy {
    criticals: CriticalNumbers,
    curves: Vec<EffectiveCurve>,
    demand: f64,
}

impl BaseStockPolicy {
    pub fn new(criticals: CriticalNumbers, curves: Vec<EffectiveCurve>, demand: f64) -> Self {
        BaseStockPolicy {
            criticals,
            curves,
            demand,
        }
    }

    /// Builds table, criticals, and policy in one step.
    pub fn from_spec(spec: &ValidatedSpec) -> Result<(ThresholdTable, Self), ThresholdError> {
        let table = compute_gamma_pwl(spec)?;
        let r = spec.receiver(0);
        let criticals = criticals_from_gamma(&table, &r.curves, r.demand);
        let policy = BaseStockPolicy::new(criticals, r.curves.clone(), r.demand);
        Ok((table, policy))
    }

    pub fn criticals(&self) -> &CriticalNumbers {
        &self.criticals
    }

    pub fn demand(&self) -> f64 {
        self.demand
    }

    /// Optimal transmission quantity and post-transmission level with `n`
    /// slots remaining, buffer `x`, channel state `s`. The branch boundaries
    /// are half-open exactly as the targets define them; at a boundary the
    /// lower branch applies (the actions coincide there).
    pub fn action(&self, n: usize, x: f64, state: usize) -> (f64, f64) {
        debug_assert!(x >= -1e-12, "buffer level must be nonnegative");
        let x = x.max(0.0);
        let curve = &self.curves[state];
        let targets = self.criticals.targets(n, state);
        let segments = curve.num_segments();

        for k in 0..segments {
            let z_below = if k == 0 { 0.0 } else { curve.breakpoints()[k - 1] };
            // Flat branch: segment k is not used at all.
            let upper_hit = if k == 0 {
                true // implicit infinite target above the first segment
            } else {
                x <= targets[k - 1] - z_below
            };
            if upper_hit && x > targets[k] - z_below {
                let z = z_below;
                return (z, x + z);
            }
            // Ramp branch: fill to the segment's target.
            let z_above = if k + 1 < segments {
                curve.breakpoints()[k]
            } else {
                curve.z_max()
            };
            if x > targets[k] - z_above && x <= targets[k] - z_below {
                let z = targets[k] - x;
                return (z, targets[k]);
            }
        }
        // Power-limited branch.
        let z = curve.z_max();
        (z, x + z)
    }
}

/// Simulator adapter for a base-stock policy; the stage index is clamped to
/// the table horizon so the policy can also drive long average-cost runs.
#[derive(Debug, Clone)]
pub struct BaseStockSimPolicy {
    inner: BaseStockPolicy,
}

impl BaseStockSimPolicy {
    pub fn new(inner: BaseStockPolicy) -> Self {
        BaseStockSimPolicy { inner }
    }
}

impl crate::sim::Policy for BaseStockSimPolicy {
    fn name(&self) -> &str {
        "base-stock"
    }

    fn decide(&self, slots_remaining: usize, buffers: &[f64], states: &[usize]) -> Vec<f64> {
        let n = slots_remaining.clamp(1, self.inner.criticals().horizon());
        vec![self.inner.action(n, buffers[0], states[0]).0]
    }
}

/// Exact expected discounted cost of a base-stock policy from a buffer level
/// on the demand lattice, by backward recursion over the lattice the policy
/// provably stays on. This is the closed-form side of policy-versus-oracle
/// comparisons; no sampling or discretization error is involved.
pub fn policy_value(
    spec: &ValidatedSpec,
    policy: &BaseStockPolicy,
    start_level: f64,
    start_state: usize,
) -> Result<f64, ThresholdError> {
    let r = single_receiver(spec)?;
    let d = r.demand;
    let alpha = spec.alpha();
    let n_slots = spec.horizon();
    let start_units = (start_level / d).round();
    if (start_level - start_units * d).abs() > INTEGER_REL_TOL * (1.0 + start_level) {
        return Err(ThresholdError::PreconditionViolated(format!(
            "start level {start_level} is off the demand lattice"
        )));
    }
    // Lattice big enough for the start plus every reachable target.
    let levels = n_slots + start_units as usize + 2;
    let n_states = r.num_states();
    let mut j_prev = vec![vec![0.0; levels + 1]; n_states];
    for n in 1..=n_slots {
        let mut j_cur = vec![vec![0.0; levels + 1]; n_states];
        for s in 0..n_states {
            for k in 0..=levels {
                let x = k as f64 * d;
                let (z, y) = policy.action(n, x, s);
                let next_units = ((y - d) / d).round() as usize;
                let stage = r.curves[s].power_clamped(z) + r.holding.eval(y - d);
                let mut cont = 0.0;
                for (s_next, &p) in r.transition[s].iter().enumerate() {
                    if p > 0.0 {
                        cont += p * j_prev[s_next][next_units.min(levels)];
                    }
                }
                j_cur[s][k] = stage + alpha * cont;
            }
        }
        j_prev = j_cur;
    }
    Ok(j_prev[start_state][start_units as usize])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        ChannelConfig, ChannelState, HoldingCost, PowerRateCurve, ProblemSpec, ReceiverSpec,
    };

    fn two_state_spec(h: f64, alpha: f64, horizon: usize) -> ValidatedSpec {
        let spec = ProblemSpec {
            receivers: vec![ReceiverSpec {
                channel: ChannelConfig {
                    states: vec![
                        ChannelState { label: "good".into() },
                        ChannelState { label: "bad".into() },
                    ],
                    transition: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                    curve: vec![
                        PowerRateCurve::Linear { slope: 1.0 },
                        PowerRateCurve::Linear { slope: 2.0 },
                    ],
                },
                demand: 1.0,
                holding: HoldingCost::Linear { rate: h },
                initial_level: 0.0,
            }],
            peak_power: 2.0,
            alpha,
            horizon,
            tolerance: crate::model::DEFAULT_TOLERANCE,
        };
        spec.validate().unwrap()
    }

    #[test]
    fn sentinel_rows() {
        let spec = two_state_spec(0.0, 1.0, 3);
        let t = compute_gamma_linear(&spec).unwrap();
        assert!(t.gamma(1, 1).is_infinite());
        assert_eq!(t.gamma(1, 2), ExtReal::Finite(0.0));
        assert_eq!(t.gamma(2, 5), ExtReal::Finite(0.0));
    }

    #[test]
    fn two_state_hand_unrolled() {
        // With both power caps covering whole slots (L = 2 and 1), the first
        // nontrivial cell is the mean per-packet cost.
        let spec = two_state_spec(0.0, 1.0, 3);
        let t = compute_gamma_linear(&spec).unwrap();
        assert_eq!(t.gamma(2, 2), ExtReal::Finite(1.5));
        assert_eq!(t.gamma(3, 2), ExtReal::Finite(1.5));
        assert_eq!(t.gamma(3, 3), ExtReal::Finite(1.25));
    }

    #[test]
    fn criticals_from_hand_table() {
        let spec = two_state_spec(0.0, 1.0, 3);
        let t = compute_gamma_linear(&spec).unwrap();
        let r = spec.receiver(0);
        let c = criticals_from_gamma(&t, &r.curves, r.demand);
        // Row (inf, 1.5, 0): slope 1 < 1.5 gives target 2d; slope 2 >= 1.5
        // gives target d.
        assert_eq!(c.target(2, 0, 0), 2.0);
        assert_eq!(c.target(2, 1, 0), 1.0);
        // One slot remaining: every state targets exactly one slot of demand.
        assert_eq!(c.target(1, 0, 0), 1.0);
        assert_eq!(c.target(1, 1, 0), 1.0);
        assert_eq!(c.target(3, 0, 0), 3.0);
        assert_eq!(c.target(3, 1, 0), 1.0);
    }

    #[test]
    fn rows_are_nonincreasing_in_j() {
        let spec = two_state_spec(0.05, 0.95, 8);
        let t = compute_gamma_linear(&spec).unwrap();
        for n in 1..=8 {
            let mut prev = f64::INFINITY;
            for j in 2..=n + 1 {
                let g = t.gamma(n, j).finite().unwrap();
                assert!(g <= prev + 1e-12, "row {n} increases at column {j}");
                prev = g;
            }
        }
    }

    #[test]
    fn pwl_reduces_to_linear_bitwise() {
        let spec = two_state_spec(0.1, 0.9, 6);
        let lin = compute_gamma_linear(&spec).unwrap();
        let pwl = compute_gamma_pwl(&spec).unwrap();
        for n in 1..=6 {
            for j in 1..=n + 1 {
                match (lin.gamma(n, j), pwl.gamma(n, j)) {
                    (ExtReal::PosInf, ExtReal::PosInf) => {}
                    (ExtReal::Finite(a), ExtReal::Finite(b)) => {
                        assert_eq!(a.to_bits(), b.to_bits(), "mismatch at ({n},{j})")
                    }
                    other => panic!("tag mismatch at ({n},{j}): {other:?}"),
                }
            }
        }
    }

    #[test]
    fn restricted_thresholds_dominate_unrestricted() {
        let spec = two_state_spec(0.0, 1.0, 8);
        let full = compute_gamma_impl(&spec, true).unwrap();
        let unrestricted = compute_gamma_impl(&spec, false).unwrap();
        for n in 1..=8 {
            for j in 2..=n {
                let f = full.gamma(n, j).finite().unwrap();
                let u = unrestricted.gamma(n, j).finite().unwrap();
                assert!(
                    u <= f + 1e-12,
                    "unrestricted threshold exceeds capped one at ({n},{j}): {u} > {f}"
                );
            }
        }
    }

    #[test]
    fn precondition_failures_are_named() {
        // Non-IID channel.
        let spec = ProblemSpec {
            receivers: vec![ReceiverSpec {
                channel: ChannelConfig {
                    states: vec![
                        ChannelState { label: "a".into() },
                        ChannelState { label: "b".into() },
                    ],
                    transition: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
                    curve: vec![
                        PowerRateCurve::Linear { slope: 1.0 },
                        PowerRateCurve::Linear { slope: 2.0 },
                    ],
                },
                demand: 1.0,
                holding: HoldingCost::Linear { rate: 0.0 },
                initial_level: 0.0,
            }],
            peak_power: 2.0,
            alpha: 1.0,
            horizon: 3,
            tolerance: crate::model::DEFAULT_TOLERANCE,
        };
        let v = spec.validate().unwrap();
        let err = compute_gamma_linear(&v).unwrap_err();
        assert!(err.to_string().contains("IID"));

        // Cap does not cover an integer number of slots.
        let spec = ProblemSpec {
            receivers: vec![ReceiverSpec {
                channel: ChannelConfig {
                    states: vec![ChannelState { label: "a".into() }],
                    transition: vec![vec![1.0]],
                    curve: vec![PowerRateCurve::Linear { slope: 1.0 }],
                },
                demand: 1.0,
                holding: HoldingCost::Linear { rate: 0.0 },
                initial_level: 0.0,
            }],
            peak_power: 2.5,
            alpha: 1.0,
            horizon: 3,
            tolerance: crate::model::DEFAULT_TOLERANCE,
        };
        let v = spec.validate().unwrap();
        let err = compute_gamma_linear(&v).unwrap_err();
        assert!(err.to_string().contains("integer multiple"));
    }

    #[test]
    fn action_branches() {
        let spec = two_state_spec(0.0, 1.0, 3);
        let (_, policy) = BaseStockPolicy::from_spec(&spec).unwrap();
        // n = 2, good state: target 2, cap 2 packets.
        let (z, y) = policy.action(2, 3.0, 0);
        assert_eq!((z, y), (0.0, 3.0));
        let (z, y) = policy.action(2, 0.5, 0);
        assert_eq!((z, y), (1.5, 2.0));
        let (z, y) = policy.action(2, 0.0, 0);
        assert_eq!((z, y), (2.0, 2.0));
        // n = 3, good state: target 3, cap 2: power-limited from empty.
        let (z, y) = policy.action(3, 0.0, 0);
        assert_eq!((z, y), (2.0, 2.0));
        // Bad state: target d, cap 1.
        let (z, y) = policy.action(3, 0.0, 1);
        assert_eq!((z, y), (1.0, 1.0));
        let (z, y) = policy.action(3, 2.0, 1);
        assert_eq!((z, y), (0.0, 2.0));
    }

    #[test]
    fn action_feasible_and_monotone_in_x() {
        let spec = two_state_spec(0.1, 0.9, 6);
        let (_, policy) = BaseStockPolicy::from_spec(&spec).unwrap();
        for s in 0..2 {
            let z_cap = spec.receiver(0).curves[s].z_max();
            for n in 1..=6 {
                let mut prev_z = f64::INFINITY;
                let mut prev_y = 0.0;
                let mut x = 0.0;
                while x <= 8.0 {
                    let (z, y) = policy.action(n, x, s);
                    assert!(z >= (1.0 - x).max(0.0) - 1e-12, "underflow at x={x}");
                    assert!(z <= z_cap + 1e-12, "cap exceeded at x={x}");
                    assert!((y - (x + z)).abs() < 1e-12);
                    assert!(z <= prev_z + 1e-12, "z must be nonincreasing in x");
                    assert!(y >= prev_y - 1e-12, "y must be nondecreasing in x");
                    prev_z = z;
                    prev_y = y;
                    x += 0.0625;
                }
            }
        }
    }
}
