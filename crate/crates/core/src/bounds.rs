//! Lower bounds on the multi-receiver value function, and the feasible
//! one-step greedy policy they induce.
//!
//! Two relaxations are implemented. The separable bound lets every receiver
//! use the whole per-slot budget, splitting the problem into independent
//! single-receiver solves. The Lagrangian bound prices the shared budget
//! instead: the per-slot peak constraint is dualized with a multiplier, which
//! is equivalent to relaxing it to an average power constraint; the dual is
//! concave in the multiplier and is maximized by golden-section search. Both
//! are certified lower bounds; the greedy policy plugs their per-receiver
//! value tables into a one-step minimization over the *true* joint action
//! set, so it is feasible by construction.

use thiserror::Error;

use crate::dp::{golden_min, solve_1rx, DpError, Grid1D, OneRxStage};
use crate::model::{EffectiveCurve, HoldingCost, ModelError, ValidatedSpec};
use crate::sim::Policy;
use crate::threshold::{policy_value, BaseStockPolicy};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("dual search diverged: still improving at the multiplier cap {lambda_max}")]
    DualSearchDiverged { lambda_max: f64 },
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundKind {
    Separable,
    Lagrangian { multiplier: f64 },
}

/// A certified lower bound on the joint value function at the spec's initial
/// buffer levels.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub kind: BoundKind,
    /// Bound at the anchor joint channel state.
    pub value: f64,
    /// Per-receiver decomposition of `value`.
    pub per_receiver: Vec<f64>,
    /// Bound at the initial buffers for every joint channel state
    /// (receiver-major enumeration).
    pub by_joint_state: Vec<f64>,
    /// Gap against an exact solve, when one was computed.
    pub gap_vs_exact: Option<f64>,
    /// Sampled `(multiplier, dual value)` pairs for Lagrangian bounds.
    pub dual_trace: Vec<(f64, f64)>,
}

impl BoundReport {
    pub fn with_gap(mut self, exact: f64) -> Self {
        self.gap_vs_exact = Some(exact - self.value);
        self
    }

    /// CSV rows `scope,kind,lambda,value,gap`.
    pub fn to_csv(&self) -> String {
        let (kind, lambda) = match &self.kind {
            BoundKind::Separable => ("separable", String::new()),
            BoundKind::Lagrangian { multiplier } => ("lagrangian", format!("{multiplier}")),
        };
        let gap = self
            .gap_vs_exact
            .map(|g| format!("{g}"))
            .unwrap_or_default();
        let mut out = String::from("scope,kind,lambda,value,gap\n");
        out.push_str(&format!("total,{kind},{lambda},{},{gap}\n", self.value));
        for (m, v) in self.per_receiver.iter().enumerate() {
            out.push_str(&format!("rx{m},{kind},{lambda},{v},\n"));
        }
        for (js, v) in self.by_joint_state.iter().enumerate() {
            out.push_str(&format!("js{js},{kind},{lambda},{v},\n"));
        }
        out
    }
}

/// Per-receiver value tables backing a bound; inputs to [`greedy_feasible`].
#[derive(Debug, Clone)]
pub struct ReceiverTables {
    pub kind: BoundKind,
    grids: Vec<Grid1D>,
    /// `values[m][n][s][node]`.
    values: Vec<Vec<Vec<Vec<f64>>>>,
    horizon: usize,
}

impl ReceiverTables {
    pub fn value(&self, m: usize, n: usize, s: usize, x: f64) -> f64 {
        self.grids[m].lerp(&self.values[m][n][s], x)
    }
}

fn discount_weight_sum(alpha: f64, slots: usize) -> f64 {
    if (alpha - 1.0).abs() < 1e-15 {
        slots as f64
    } else {
        (1.0 - alpha.powi(slots as i32)) / (1.0 - alpha)
    }
}

fn joint_state_count(spec: &ValidatedSpec) -> usize {
    (0..spec.num_receivers())
        .map(|m| spec.receiver(m).num_states())
        .product()
}

/// Decomposes a joint state index (receiver-major) into per-receiver states.
fn joint_to_states(spec: &ValidatedSpec, js: usize) -> Vec<usize> {
    let m_count = spec.num_receivers();
    let mut rem = js;
    let mut out = vec![0; m_count];
    for m in (0..m_count).rev() {
        let k = spec.receiver(m).num_states();
        out[m] = rem % k;
        rem /= k;
    }
    out
}

fn subproblem_grid(spec: &ValidatedSpec, m: usize, grid_step: f64) -> Result<Grid1D, DpError> {
    let d = spec.receiver(m).demand;
    let reach = (spec.horizon() as f64 * d).max(d) + spec.receiver(m).initial_level;
    Grid1D::new(grid_step, reach + d)
}

/// Relaxes the shared budget to a full budget per receiver and solves the
/// independent single-receiver problems. The bound value uses the threshold
/// fast path when its preconditions hold, otherwise the grid solver.
pub fn separable_bound(
    spec: &ValidatedSpec,
    grid_step: f64,
    initial_states: &[usize],
) -> Result<(BoundReport, ReceiverTables), BoundsError> {
    let m_count = spec.num_receivers();
    let n_slots = spec.horizon();
    let mut per_receiver = Vec::with_capacity(m_count);
    let mut grids = Vec::with_capacity(m_count);
    let mut values = Vec::with_capacity(m_count);
    let mut per_state_values: Vec<Vec<f64>> = Vec::with_capacity(m_count);

    for m in 0..m_count {
        let sub = spec.receiver_subspec(m)?;
        let grid = subproblem_grid(spec, m, grid_step)?;
        let vg = solve_1rx(&sub, &grid)?;
        let x0 = spec.receiver(m).initial_level;
        // Threshold fast path: exact closed-form policy evaluation.
        let fast: Option<Vec<f64>> = BaseStockPolicy::from_spec(&sub).ok().and_then(|(_, pol)| {
            (0..sub.receiver(0).num_states())
                .map(|s| policy_value(&sub, &pol, x0, s).ok())
                .collect()
        });
        let states: Vec<f64> = match fast {
            Some(v) => v,
            None => (0..sub.receiver(0).num_states())
                .map(|s| vg.value(n_slots, s, x0))
                .collect(),
        };
        per_receiver.push(states[initial_states[m]]);
        per_state_values.push(states);
        values.push((0..=n_slots).map(|n| {
            (0..sub.receiver(0).num_states())
                .map(|s| {
                    if n == 0 {
                        vec![0.0; grid.num_nodes()]
                    } else {
                        vg.values(n, s).to_vec()
                    }
                })
                .collect::<Vec<_>>()
        }).collect::<Vec<_>>());
        grids.push(grid);
    }

    let by_joint_state = (0..joint_state_count(spec))
        .map(|js| {
            joint_to_states(spec, js)
                .iter()
                .enumerate()
                .map(|(m, &s)| per_state_values[m][s])
                .sum()
        })
        .collect();

    let report = BoundReport {
        kind: BoundKind::Separable,
        value: per_receiver.iter().sum(),
        per_receiver,
        by_joint_state,
        gap_vs_exact: None,
        dual_trace: Vec::new(),
    };
    let tables = ReceiverTables {
        kind: BoundKind::Separable,
        grids,
        values,
        horizon: n_slots,
    };
    Ok((report, tables))
}

/// Solves the relaxed single-receiver problems for one multiplier: slopes
/// scaled by `1 + lambda` and no per-slot cap (transmission bounded only by
/// the grid). Returns per-receiver per-state values at the initial buffers,
/// plus the tables.
#[allow(clippy::type_complexity)]
fn relaxed_solves(
    spec: &ValidatedSpec,
    grid_step: f64,
    lambda: f64,
) -> Result<(Vec<Vec<f64>>, Vec<Grid1D>, Vec<Vec<Vec<Vec<f64>>>>), BoundsError> {
    let m_count = spec.num_receivers();
    let n_slots = spec.horizon();
    let mut per_state_values = Vec::with_capacity(m_count);
    let mut grids = Vec::with_capacity(m_count);
    let mut tables = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let r = spec.receiver(m);
        let grid = subproblem_grid(spec, m, grid_step)?;
        let d_steps = grid.steps_per(r.demand)?;
        let z_cap = grid.x_max() + r.demand;
        let raw = &spec.spec().receivers[m].channel.curve;
        let curves: Vec<EffectiveCurve> = raw
            .iter()
            .map(|c| EffectiveCurve::uncapped(c, z_cap, 1.0 + lambda))
            .collect::<Result<_, _>>()
            .map_err(|detail| ModelError::NonConvexCurve {
                receiver: m,
                state: 0,
                detail,
            })?;
        let stage = OneRxStage {
            curves: &curves,
            transition: &r.transition,
            holding: &r.holding,
            demand: r.demand,
            alpha: spec.alpha(),
        };
        let mut v = vec![vec![vec![0.0; grid.num_nodes()]; r.num_states()]];
        for n in 1..=n_slots {
            let (vn, _) = stage.sweep(&grid, d_steps, &v[n - 1]);
            v.push(vn);
        }
        let x0 = r.initial_level;
        per_state_values.push(
            (0..r.num_states())
                .map(|s| grid.lerp(&v[n_slots][s], x0))
                .collect(),
        );
        grids.push(grid);
        tables.push(v);
    }
    Ok((per_state_values, grids, tables))
}

/// Dualizes the per-slot budget with multiplier `lambda >= 0` and maximizes
/// the resulting separable dual by golden-section search. Weak duality makes
/// every dual value a lower bound; concavity in the multiplier makes the
/// search valid.
pub fn lagrangian_bound(
    spec: &ValidatedSpec,
    grid_step: f64,
    initial_states: &[usize],
    lambda_cap: Option<f64>,
) -> Result<(BoundReport, ReceiverTables), BoundsError> {
    let m_count = spec.num_receivers();
    let n_slots = spec.horizon();
    let weight = discount_weight_sum(spec.alpha(), n_slots);
    let peak = spec.peak_power();
    let cap = lambda_cap.unwrap_or_else(|| {
        10.0 * (0..m_count)
            .map(|m| spec.receiver(m).c_max)
            .fold(1.0_f64, f64::max)
    });

    let mut trace: Vec<(f64, f64)> = Vec::new();
    let mut dual_of = |lambda: f64| -> Result<f64, BoundsError> {
        let (per_state, _, _) = relaxed_solves(spec, grid_step, lambda)?;
        let total: f64 = (0..m_count)
            .map(|m| per_state[m][initial_states[m]])
            .sum();
        let dual = total - lambda * peak * weight;
        trace.push((lambda, dual));
        Ok(dual)
    };

    // Golden-section on the negated (convex) dual; errors inside the closure
    // are deferred by treating them as +inf and re-raised afterwards.
    let mut inner_err = None;
    let best_lambda = golden_min(
        |l| match dual_of(l) {
            Ok(v) => -v,
            Err(e) => {
                inner_err.get_or_insert(e);
                f64::INFINITY
            }
        },
        0.0,
        cap,
        1e-4 * cap.max(1.0),
    );
    if let Some(e) = inner_err {
        return Err(e);
    }
    let dual_zero = dual_of(0.0)?;
    let dual_best = dual_of(best_lambda)?;
    let (lambda_star, _value) = if dual_zero >= dual_best {
        (0.0, dual_zero)
    } else {
        (best_lambda, dual_best)
    };
    // Divergence check: still climbing at the cap.
    if lambda_star > 0.99 * cap {
        let near = dual_of(0.995 * cap)?;
        let at_cap = dual_of(cap)?;
        if at_cap > near + 1e-9 * (1.0 + at_cap.abs()) {
            return Err(BoundsError::DualSearchDiverged { lambda_max: cap });
        }
    }

    let (per_state, grids, tables) = relaxed_solves(spec, grid_step, lambda_star)?;
    let per_receiver: Vec<f64> = (0..m_count)
        .map(|m| per_state[m][initial_states[m]] - lambda_star * (peak / m_count as f64) * weight)
        .collect();
    let by_joint_state = (0..joint_state_count(spec))
        .map(|js| {
            joint_to_states(spec, js)
                .iter()
                .enumerate()
                .map(|(m, &s)| per_state[m][s])
                .sum::<f64>()
                - lambda_star * peak * weight
        })
        .collect();
    trace.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    trace.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12);

    let report = BoundReport {
        kind: BoundKind::Lagrangian {
            multiplier: lambda_star,
        },
        value: per_receiver.iter().sum(),
        per_receiver,
        by_joint_state,
        gap_vs_exact: None,
        dual_trace: trace,
    };
    let tables = ReceiverTables {
        kind: BoundKind::Lagrangian {
            multiplier: lambda_star,
        },
        grids,
        values: tables,
        horizon: n_slots,
    };
    Ok((report, tables))
}

/// One-step greedy policy over the true joint action set, with the bound's
/// per-receiver tables as the continuation. Feasible by construction: the
/// per-slot budget and underflow floors are enforced on every decision.
pub struct GreedyBoundPolicy {
    demands: Vec<f64>,
    holdings: Vec<HoldingCost>,
    curves: Vec<Vec<EffectiveCurve>>,
    transitions: Vec<Vec<Vec<f64>>>,
    peak: f64,
    alpha: f64,
    grids: Vec<Grid1D>,
    /// `w[m][n][s][node]`: expected next-stage table value given today's
    /// state, for continuation depth `n`.
    w: Vec<Vec<Vec<Vec<f64>>>>,
    horizon: usize,
}

/// Builds the greedy policy from a bound's tables.
pub fn greedy_feasible(spec: &ValidatedSpec, tables: &ReceiverTables) -> GreedyBoundPolicy {
    let m_count = spec.num_receivers();
    let mut w = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let r = spec.receiver(m);
        let mut w_m = Vec::with_capacity(tables.horizon);
        for n in 0..tables.horizon {
            let mut per_state = vec![vec![0.0; tables.grids[m].num_nodes()]; r.num_states()];
            for (s, row) in r.transition.iter().enumerate() {
                for (s_next, &p) in row.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for (acc, v) in per_state[s].iter_mut().zip(&tables.values[m][n][s_next]) {
                        *acc += p * v;
                    }
                }
            }
            w_m.push(per_state);
        }
        w.push(w_m);
    }
    GreedyBoundPolicy {
        demands: (0..m_count).map(|m| spec.receiver(m).demand).collect(),
        holdings: (0..m_count)
            .map(|m| spec.receiver(m).holding.clone())
            .collect(),
        curves: (0..m_count).map(|m| spec.receiver(m).curves.clone()).collect(),
        transitions: (0..m_count)
            .map(|m| spec.receiver(m).transition.clone())
            .collect(),
        peak: spec.peak_power(),
        alpha: spec.alpha(),
        grids: tables.grids.clone(),
        w,
        horizon: tables.horizon,
    }
}

impl GreedyBoundPolicy {
    /// Stage-plus-continuation cost of giving receiver `m` the post level `y`.
    #[inline]
    fn phi(&self, m: usize, level: usize, s: usize, x: f64, y: f64) -> f64 {
        let z = (y - x).max(0.0);
        self.curves[m][s].power_clamped(z)
            + self.holdings[m].eval(y - self.demands[m])
            + self.alpha * self.grids[m].lerp(&self.w[m][level][s], y - self.demands[m])
    }

    fn decide_single(&self, level: usize, x: f64, s: usize) -> f64 {
        let stage = OneRxStage {
            curves: &self.curves[0],
            transition: &self.transitions[0],
            holding: &self.holdings[0],
            demand: self.demands[0],
            alpha: self.alpha,
        };
        let d_steps = self.grids[0]
            .steps_per(self.demands[0])
            .expect("tables were built on a demand-aligned grid");
        let (z, _) = stage.best_action(&self.grids[0], &self.w[0][level][s], d_steps, x, s);
        z
    }

    fn decide_pair(&self, level: usize, x: &[f64], s: &[usize]) -> Vec<f64> {
        let (d1, d2) = (self.demands[0], self.demands[1]);
        let c1 = &self.curves[0][s[0]];
        let c2 = &self.curves[1][s[1]];
        let y1_lo = x[0].max(d1);
        let y2_lo = x[1].max(d2);
        let base2 = c2.power_clamped((y2_lo - x[1]).max(0.0));
        let z1_hi = c1
            .rate_of((self.peak - base2).clamp(0.0, c1.peak_power()))
            .unwrap_or(0.0)
            .min(c1.z_max());

        let mut best = f64::INFINITY;
        let mut best_y = (y1_lo, y2_lo);
        let step1 = self.grids[0].step();
        let step2 = self.grids[1].step();
        let top1 = self.grids[0].x_max() + d1;
        let top2 = self.grids[1].x_max() + d2;

        let consider = |y1: f64, y2: f64, best: &mut f64, best_y: &mut (f64, f64)| {
            let val = self.phi(0, level, s[0], x[0], y1) + self.phi(1, level, s[1], x[1], y2);
            if val < *best {
                *best = val;
                *best_y = (y1, y2);
            }
        };

        // Lattice scan over receiver-1 levels; per row, lattice plus the
        // exact power-exhausting corner for receiver 2.
        let i_hi = ((x[0] + z1_hi).min(top1) - y1_lo).max(0.0) / step1;
        let mut i = 0usize;
        while (i as f64) <= i_hi + 1e-9 {
            let y1 = (y1_lo + i as f64 * step1).min(top1);
            let p1 = c1.power_clamped((y1 - x[0]).max(0.0));
            let rem = (self.peak - p1).clamp(0.0, c2.peak_power());
            let z2_hi = c2.rate_of(rem).unwrap_or(0.0).min(c2.z_max());
            let y2_hi = (x[1] + z2_hi).min(top2);
            let mut j = 0usize;
            while y2_lo + j as f64 * step2 <= y2_hi + 1e-9 {
                consider(y1, (y2_lo + j as f64 * step2).min(y2_hi), &mut best, &mut best_y);
                j += 1;
            }
            consider(y1, y2_hi, &mut best, &mut best_y);
            i += 1;
        }
        // Refine along the power boundary.
        let z1_floor = (y1_lo - x[0]).max(0.0);
        if z1_hi > z1_floor + 1e-12 {
            let eval = |z1: f64| {
                let p1 = c1.power_clamped(z1);
                let rem = (self.peak - p1).clamp(0.0, c2.peak_power());
                let z2 = c2.rate_of(rem).unwrap_or(0.0).min(c2.z_max());
                let y2 = (x[1] + z2).min(top2).max(y2_lo);
                (x[0] + z1, y2)
            };
            let z1 = golden_min(
                |z| {
                    let (y1, y2) = eval(z);
                    self.phi(0, level, s[0], x[0], y1) + self.phi(1, level, s[1], x[1], y2)
                },
                z1_floor,
                z1_hi,
                1e-6,
            );
            let (y1, y2) = eval(z1);
            consider(y1, y2, &mut best, &mut best_y);
        }
        vec![
            (best_y.0 - x[0]).max(0.0),
            (best_y.1 - x[1]).max(0.0),
        ]
    }

    /// Marginal-allocation heuristic for three or more receivers: repeatedly
    /// give one grid step of packets to the receiver with the best cost
    /// improvement per unit of power until the budget or the improvements run
    /// out.
    fn decide_many(&self, level: usize, x: &[f64], s: &[usize]) -> Vec<f64> {
        let m_count = x.len();
        let mut y: Vec<f64> = (0..m_count)
            .map(|m| x[m].max(self.demands[m]))
            .collect();
        let mut power_used: f64 = (0..m_count)
            .map(|m| self.curves[m][s[m]].power_clamped((y[m] - x[m]).max(0.0)))
            .sum();
        loop {
            let mut best_rate = -1e-12;
            let mut best_m = usize::MAX;
            let mut best_next = 0.0;
            let mut best_power = 0.0;
            for m in 0..m_count {
                let step = self.grids[m].step();
                let next = y[m] + step;
                if next - x[m] > self.curves[m][s[m]].z_max()
                    || next > self.grids[m].x_max() + self.demands[m]
                {
                    continue;
                }
                let p_now = self.curves[m][s[m]].power_clamped((y[m] - x[m]).max(0.0));
                let p_next = self.curves[m][s[m]].power_clamped(next - x[m]);
                let extra = p_next - p_now;
                if power_used + extra > self.peak + 1e-12 {
                    continue;
                }
                let gain = self.phi(m, level, s[m], x[m], next) - self.phi(m, level, s[m], x[m], y[m]);
                let rate = gain / extra.max(1e-12);
                if rate < best_rate {
                    best_rate = rate;
                    best_m = m;
                    best_next = next;
                    best_power = extra;
                }
            }
            if best_m == usize::MAX {
                break;
            }
            y[best_m] = best_next;
            power_used += best_power;
        }
        (0..m_count).map(|m| (y[m] - x[m]).max(0.0)).collect()
    }
}

impl Policy for GreedyBoundPolicy {
    fn name(&self) -> &str {
        "greedy-lower-bound"
    }

    fn decide(&self, slots_remaining: usize, buffers: &[f64], states: &[usize]) -> Vec<f64> {
        let level = slots_remaining.clamp(1, self.horizon) - 1;
        match buffers.len() {
            1 => vec![self.decide_single(level, buffers[0], states[0])],
            2 => self.decide_pair(level, buffers, states),
            _ => self.decide_many(level, buffers, states),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        ChannelConfig, ChannelState, HoldingCost, PowerRateCurve, ProblemSpec, ReceiverSpec,
    };
    use crate::sim::{simulate, SimConfig};

    fn one_rx_spec() -> ValidatedSpec {
        ProblemSpec {
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
                holding: HoldingCost::Linear { rate: 0.1 },
                initial_level: 0.0,
            }],
            peak_power: 2.0,
            alpha: 0.95,
            horizon: 4,
            tolerance: crate::model::DEFAULT_TOLERANCE,
        }
        .validate()
        .unwrap()
    }

    fn two_rx_spec(peak: f64) -> ValidatedSpec {
        let channel = ChannelConfig {
            states: vec![
                ChannelState { label: "good".into() },
                ChannelState { label: "bad".into() },
            ],
            transition: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
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
            peak_power: peak,
            alpha: 0.95,
            horizon: 4,
            tolerance: crate::model::DEFAULT_TOLERANCE,
        }
        .validate()
        .unwrap()
    }

    #[test]
    fn single_receiver_separable_bound_is_exact() {
        let spec = one_rx_spec();
        let (report, _) = separable_bound(&spec, 0.1, &[0]).unwrap();
        let grid = Grid1D::new(0.1, 5.0).unwrap();
        let vg = solve_1rx(&spec, &grid).unwrap();
        assert!(
            (report.value - vg.value(4, 0, 0.0)).abs() < 1e-8,
            "vacuous relaxation must equal the exact value: {} vs {}",
            report.value,
            vg.value(4, 0, 0.0)
        );
    }

    #[test]
    fn lambda_zero_dual_is_at_most_separable() {
        let spec = two_rx_spec(4.0);
        let (sep, _) = separable_bound(&spec, 0.1, &[0, 0]).unwrap();
        // The zero-multiplier dual removes the per-receiver cap entirely, so
        // it can only be weaker.
        let (per_state, _, _) = relaxed_solves(&spec, 0.1, 0.0).unwrap();
        let dual0: f64 = per_state[0][0] + per_state[1][0];
        assert!(dual0 <= sep.value + 1e-9);
    }

    #[test]
    fn decoupled_instance_has_zero_multiplier_and_tight_bound() {
        let spec = two_rx_spec(100.0);
        let (lag, _) = lagrangian_bound(&spec, 0.2, &[0, 0], None).unwrap();
        match lag.kind {
            BoundKind::Lagrangian { multiplier } => {
                assert!(multiplier < 1e-3, "multiplier {multiplier} should vanish");
            }
            _ => unreachable!(),
        }
        let (sep, _) = separable_bound(&spec, 0.2, &[0, 0]).unwrap();
        assert!((lag.value - sep.value).abs() < 1e-6);
    }

    #[test]
    fn dual_trace_is_unimodal() {
        let spec = two_rx_spec(4.0);
        let (lag, _) = lagrangian_bound(&spec, 0.2, &[0, 0], None).unwrap();
        // Concave dual: once values start falling along increasing lambda,
        // they must keep falling.
        let mut falling = false;
        for w in lag.dual_trace.windows(2) {
            if w[1].1 < w[0].1 - 1e-9 {
                falling = true;
            } else {
                assert!(
                    !falling || w[1].1 <= w[0].1 + 1e-6,
                    "dual rose after falling: {:?}",
                    lag.dual_trace
                );
            }
        }
    }

    #[test]
    fn decoupled_pair_separable_bound_equals_exact() {
        // Budget never binds, so the relaxation is vacuous and the bound
        // meets the joint solve exactly.
        let spec = two_rx_spec(100.0);
        let (sep, _) = separable_bound(&spec, 0.2, &[0, 1]).unwrap();
        let grid = crate::dp::Grid2D::square(0.2, 4.0).unwrap();
        let vg = crate::dp::solve_2rx(&spec, &grid, crate::dp::SolveOptions::default()).unwrap();
        for js in 0..vg.num_joint_states() {
            let exact = vg.value_node(4, js, 0, 0);
            assert!(
                (sep.by_joint_state[js] - exact).abs() <= 1e-8 * (1.0 + exact.abs()),
                "decoupled bound {} differs from exact {exact} at js {js}",
                sep.by_joint_state[js]
            );
        }
    }

    #[test]
    fn greedy_single_receiver_recovers_optimal_policy() {
        let spec = one_rx_spec();
        let (_, tables) = separable_bound(&spec, 0.1, &[0]).unwrap();
        let greedy = greedy_feasible(&spec, &tables);
        let stats = simulate(
            &greedy,
            &spec,
            &SimConfig {
                episodes: 2000,
                slots: 4,
                seed: 5,
                initial_states: vec![0],
            },
        )
        .unwrap();
        let grid = Grid1D::new(0.1, 5.0).unwrap();
        let vg = solve_1rx(&spec, &grid).unwrap();
        let exact = vg.value(4, 0, 0.0);
        assert_eq!(stats.aborted, 0);
        assert!(
            (stats.mean - exact).abs() < 3.0 * stats.std_error + 1e-6,
            "greedy with the exact bound should match the optimum: {} vs {exact}",
            stats.mean
        );
    }

    #[test]
    fn greedy_pair_is_feasible() {
        let spec = two_rx_spec(4.0);
        let (_, tables) = lagrangian_bound(&spec, 0.2, &[0, 0], None).unwrap();
        let greedy = greedy_feasible(&spec, &tables);
        let stats = simulate(
            &greedy,
            &spec,
            &SimConfig {
                episodes: 500,
                slots: 4,
                seed: 9,
                initial_states: vec![0, 0],
            },
        )
        .unwrap();
        assert_eq!(stats.aborted, 0, "greedy must never propose infeasible actions");
    }
}
