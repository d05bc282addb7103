//! Exact finite-horizon dynamic programming on discretized buffer grids, for
//! one and two receivers. These solvers are the ground truth the closed-form
//! policies and structural checks are verified against.
//!
//! The buffer axis is discretized with a step that divides the demand, and
//! truncated at `x_max >= N * d`: filling a buffer beyond `N * d` packets is
//! never optimal (those packets pay transmission and holding costs but cover
//! no remaining slot), so states above the cap are unreachable under any
//! candidate-optimal action. Action searches enumerate every grid-aligned
//! post-transmission level plus the exact off-grid boundary points (demand
//! gap, curve breakpoints, power cap), and for two receivers the
//! power-exhausting segment is additionally searched by scan plus
//! golden-section refinement, since optima there need not be grid-aligned.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{EffectiveCurve, HoldingCost, ValidatedSpec, INTEGER_REL_TOL};

#[derive(Debug, Error)]
pub enum DpError {
    #[error("grid misaligned: {0}")]
    GridMisaligned(String),
    #[error("memory budget exceeded: need {needed} bytes, cap {cap}")]
    MemoryBudgetExceeded { needed: usize, cap: usize },
    #[error("solver expects {expected} receiver(s), spec has {got}")]
    WrongReceiverCount { expected: usize, got: usize },
    #[error("two-receiver solver requires linear power-rate curves: {0}")]
    NonLinearCurves(String),
}

/// Uniform buffer grid `x = i * step`, `i = 0..num_nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    step: f64,
    num_nodes: usize,
}

impl Grid1D {
    /// `x_max` is snapped down to the lattice.
    pub fn new(step: f64, x_max: f64) -> Result<Self, DpError> {
        if !(step.is_finite() && step > 0.0) {
            return Err(DpError::GridMisaligned(format!(
                "step must be positive, got {step}"
            )));
        }
        if x_max < step {
            return Err(DpError::GridMisaligned(format!(
                "x_max = {x_max} smaller than one step {step}"
            )));
        }
        let num_nodes = (x_max / step + 1e-9).floor() as usize + 1;
        Ok(Grid1D { step, num_nodes })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn x_max(&self) -> f64 {
        (self.num_nodes - 1) as f64 * self.step
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    /// Number of grid steps per demand unit; errors unless the step divides
    /// the demand.
    pub fn steps_per(&self, quantity: f64) -> Result<usize, DpError> {
        let ratio = quantity / self.step;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > INTEGER_REL_TOL * ratio.max(1.0) {
            return Err(DpError::GridMisaligned(format!(
                "step {} does not divide {quantity}",
                self.step
            )));
        }
        Ok(rounded as usize)
    }

    /// Linear interpolation over per-node `values`, clamped to the grid.
    pub fn lerp(&self, values: &[f64], x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.num_nodes);
        lerp_uniform(values, self.step, x)
    }
}

#[inline]
fn lerp_uniform(values: &[f64], step: f64, x: f64) -> f64 {
    let last = values.len() - 1;
    let t = (x / step).clamp(0.0, last as f64);
    let i = (t as usize).min(last.saturating_sub(1));
    let frac = t - i as f64;
    if last == 0 {
        return values[0];
    }
    values[i] * (1.0 - frac) + values[i + 1] * frac
}

#[inline]
fn ceil_node(offset: f64, step: f64) -> usize {
    let t = offset / step;
    if t <= 0.0 {
        0
    } else {
        (t - 1e-9).ceil() as usize
    }
}

#[inline]
fn floor_node(offset: f64, step: f64) -> isize {
    let t = offset / step;
    (t + 1e-9).floor() as isize
}

/// Tunables for the solvers.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Abort instead of allocating past this many bytes of value tables.
    pub memory_cap_bytes: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            memory_cap_bytes: 6 << 30,
        }
    }
}

// ---------------------------------------------------------------------------
// Single receiver
// ---------------------------------------------------------------------------

/// The pieces of a one-receiver stage problem. Kept separate from
/// `ValidatedSpec` so relaxations can substitute modified curves.
#[derive(Debug, Clone)]
pub(crate) struct OneRxStage<'a> {
    pub curves: &'a [EffectiveCurve],
    pub transition: &'a [Vec<f64>],
    pub holding: &'a HoldingCost,
    pub demand: f64,
    pub alpha: f64,
}

impl<'a> OneRxStage<'a> {
    pub fn from_spec(spec: &'a ValidatedSpec) -> Self {
        let r = spec.receiver(0);
        OneRxStage {
            curves: &r.curves,
            transition: &r.transition,
            holding: &r.holding,
            demand: r.demand,
            alpha: spec.alpha(),
        }
    }

    /// Expected next-stage values per current state: `w[s] = E[v(., S') | s]`.
    pub fn mix(&self, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let nodes = v[0].len();
        self.transition
            .iter()
            .map(|row| {
                let mut w = vec![0.0; nodes];
                for (s_next, &p) in row.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for (wi, vi) in w.iter_mut().zip(&v[s_next]) {
                        *wi += p * vi;
                    }
                }
                w
            })
            .collect()
    }

    /// Minimizes transmission-plus-continuation cost at buffer `x` in state
    /// `s`, over grid-aligned targets and the exact boundary candidates.
    /// `w_s` is the mixed continuation table for state `s`. Ties break toward
    /// the smallest transmission.
    pub fn best_action(&self, grid: &Grid1D, w_s: &[f64], d_steps: usize, x: f64, s: usize) -> (f64, f64) {
        let curve = &self.curves[s];
        let d = self.demand;
        let step = grid.step();
        let top = grid.x_max() + d;
        let z_cap = curve.z_max().min(top - x);
        let y_lo = x.max(d);
        let y_hi = x + z_cap;

        let mut best_val = f64::INFINITY;
        let mut best_y = f64::NAN;

        let consider = |y: f64, cont: f64, best_val: &mut f64, best_y: &mut f64| {
            let z = (y - x).max(0.0);
            let power = curve.power_clamped(z);
            let val = power + self.holding.eval(y - d) + self.alpha * cont;
            if val < *best_val || (val == *best_val && y < *best_y) {
                *best_val = val;
                *best_y = y;
            }
        };

        // Grid-aligned targets: continuation needs no interpolation.
        let j_lo = ceil_node(y_lo, step);
        let j_hi = floor_node(y_hi, step);
        let mut j = j_lo.max(d_steps) as isize;
        while j <= j_hi {
            let y = j as f64 * step;
            // y >= d keeps the continuation index in range without
            // interpolation.
            let cont = w_s[((j as usize) - d_steps).min(w_s.len() - 1)];
            consider(y, cont, &mut best_val, &mut best_y);
            j += 1;
        }

        // Exact boundary candidates, interpolated.
        let inject = |y: f64, best_val: &mut f64, best_y: &mut f64| {
            if y >= y_lo - 1e-12 && y <= y_hi + 1e-12 {
                let yc = y.clamp(y_lo, y_hi);
                let cont = lerp_uniform(w_s, step, yc - d);
                consider(yc, cont, best_val, best_y);
            }
        };
        inject(y_lo, &mut best_val, &mut best_y);
        inject(y_hi, &mut best_val, &mut best_y);
        for &brk in curve.breakpoints() {
            inject(x + brk, &mut best_val, &mut best_y);
        }

        let z = (best_y - x).max(0.0);
        (z, best_val)
    }

    /// One backward-induction sweep: from next-stage values `v_prev`,
    /// computes this stage's values and argmin transmissions per node.
    pub fn sweep(&self, grid: &Grid1D, d_steps: usize, v_prev: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let w = self.mix(v_prev);
        self.sweep_given(grid, d_steps, &w)
    }

    /// Sweep against pre-mixed continuations `w[s][i] = E[v(., S')|s]`.
    pub fn sweep_given(&self, grid: &Grid1D, d_steps: usize, w: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let nodes = grid.num_nodes();
        let n_states = self.curves.len();
        let mut v = vec![vec![0.0; nodes]; n_states];
        let mut z = vec![vec![0.0; nodes]; n_states];
        for s in 0..n_states {
            let w_s = &w[s];
            let (vs, zs): (Vec<f64>, Vec<f64>) = (0..nodes)
                .into_par_iter()
                .map(|i| {
                    let x = grid.node(i);
                    let (zi, val) = self.best_action(grid, w_s, d_steps, x, s);
                    (val, zi)
                })
                .unzip();
            v[s] = vs;
            z[s] = zs;
        }
        (v, z)
    }
}

/// Solved one-receiver value function on a grid: `V[n][s][i]` with the argmin
/// transmission per node.
#[derive(Debug, Clone)]
pub struct ValueGrid1 {
    pub(crate) grid: Grid1D,
    pub(crate) horizon: usize,
    pub(crate) v: Vec<Vec<Vec<f64>>>,
    pub(crate) zstar: Vec<Vec<Vec<f64>>>,
}

impl ValueGrid1 {
    pub(crate) fn from_parts(
        grid: Grid1D,
        horizon: usize,
        v: Vec<Vec<Vec<f64>>>,
        zstar: Vec<Vec<Vec<f64>>>,
    ) -> Self {
        ValueGrid1 {
            grid,
            horizon,
            v,
            zstar,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.v[0].len()
    }

    pub fn value_node(&self, n: usize, s: usize, i: usize) -> f64 {
        self.v[n][s][i]
    }

    pub fn value(&self, n: usize, s: usize, x: f64) -> f64 {
        self.grid.lerp(&self.v[n][s], x)
    }

    pub fn values(&self, n: usize, s: usize) -> &[f64] {
        &self.v[n][s]
    }

    pub fn zstar_node(&self, n: usize, s: usize, i: usize) -> f64 {
        self.zstar[n - 1][s][i]
    }

    pub fn zstars(&self, n: usize, s: usize) -> &[f64] {
        &self.zstar[n - 1][s]
    }

    /// CSV rows `n,s,x,V,z`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,s,x,V,z\n");
        for n in 1..=self.horizon {
            for s in 0..self.num_states() {
                for i in 0..self.grid.num_nodes() {
                    out.push_str(&format!(
                        "{n},{s},{},{},{}\n",
                        self.grid.node(i),
                        self.v[n][s][i],
                        self.zstar[n - 1][s][i]
                    ));
                }
            }
        }
        out
    }
}

/// Backward induction for a single receiver. The grid step must divide the
/// demand and the grid must reach `horizon * demand`.
pub fn solve_1rx(spec: &ValidatedSpec, grid: &Grid1D) -> Result<ValueGrid1, DpError> {
    if spec.num_receivers() != 1 {
        return Err(DpError::WrongReceiverCount {
            expected: 1,
            got: spec.num_receivers(),
        });
    }
    let stage = OneRxStage::from_spec(spec);
    let d_steps = grid.steps_per(stage.demand)?;
    let n_slots = spec.horizon();
    if grid.x_max() + 1e-9 < n_slots as f64 * stage.demand {
        return Err(DpError::GridMisaligned(format!(
            "grid x_max = {} below horizon * demand = {}",
            grid.x_max(),
            n_slots as f64 * stage.demand
        )));
    }
    let n_states = stage.curves.len();
    let mut v = Vec::with_capacity(n_slots + 1);
    v.push(vec![vec![0.0; grid.num_nodes()]; n_states]);
    let mut zstar = Vec::with_capacity(n_slots);
    for n in 1..=n_slots {
        let (vn, zn) = stage.sweep(grid, d_steps, &v[n - 1]);
        v.push(vn);
        zstar.push(zn);
    }
    Ok(ValueGrid1 {
        grid: grid.clone(),
        horizon: n_slots,
        v,
        zstar,
    })
}

/// One-step greedy policy against a solved (or converged) value table.
/// Evaluates the stage minimization on the fly, so it is defined for
/// off-grid buffer levels too.
#[derive(Debug, Clone)]
pub struct GreedyPolicy1 {
    grid: Grid1D,
    /// Mixed continuations per stage: `w[n-1][s][i] = E[V_{n-1} | s]`.
    w: Vec<Vec<Vec<f64>>>,
    curves: Vec<EffectiveCurve>,
    transition: Vec<Vec<f64>>,
    holding: HoldingCost,
    demand: f64,
    alpha: f64,
    d_steps: usize,
}

impl GreedyPolicy1 {
    pub fn from_value_grid(spec: &ValidatedSpec, vg: &ValueGrid1) -> Result<Self, DpError> {
        let stage = OneRxStage::from_spec(spec);
        let d_steps = vg.grid.steps_per(stage.demand)?;
        let w = (0..vg.horizon).map(|n| stage.mix(&vg.v[n])).collect();
        let r = spec.receiver(0);
        Ok(GreedyPolicy1 {
            grid: vg.grid.clone(),
            w,
            curves: r.curves.clone(),
            transition: r.transition.clone(),
            holding: r.holding.clone(),
            demand: r.demand,
            alpha: spec.alpha(),
            d_steps,
        })
    }

    /// Stationary greedy policy against a single converged table.
    pub fn stationary(spec: &ValidatedSpec, grid: &Grid1D, v_inf: &[Vec<f64>]) -> Result<Self, DpError> {
        let stage = OneRxStage::from_spec(spec);
        let d_steps = grid.steps_per(stage.demand)?;
        let w = vec![stage.mix(v_inf)];
        let r = spec.receiver(0);
        Ok(GreedyPolicy1 {
            grid: grid.clone(),
            w,
            curves: r.curves.clone(),
            transition: r.transition.clone(),
            holding: r.holding.clone(),
            demand: r.demand,
            alpha: spec.alpha(),
            d_steps,
        })
    }

    /// Transmission decision with `n` slots remaining (clamped to the table
    /// depth; stationary policies have depth one).
    pub fn action(&self, n: usize, x: f64, s: usize) -> f64 {
        let level = n.min(self.w.len()).max(1) - 1;
        let stage = OneRxStage {
            curves: &self.curves,
            transition: &self.transition,
            holding: &self.holding,
            demand: self.demand,
            alpha: self.alpha,
        };
        let (z, _) = stage.best_action(&self.grid, &self.w[level][s], self.d_steps, x, s);
        z
    }
}

impl crate::sim::Policy for GreedyPolicy1 {
    fn name(&self) -> &str {
        "dp-greedy"
    }

    fn decide(&self, slots_remaining: usize, buffers: &[f64], states: &[usize]) -> Vec<f64> {
        vec![self.action(slots_remaining, buffers[0], states[0])]
    }
}

// ---------------------------------------------------------------------------
// Two receivers
// ---------------------------------------------------------------------------

/// Two independent buffer axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub axis1: Grid1D,
    pub axis2: Grid1D,
}

impl Grid2D {
    pub fn square(step: f64, x_max: f64) -> Result<Self, DpError> {
        Ok(Grid2D {
            axis1: Grid1D::new(step, x_max)?,
            axis2: Grid1D::new(step, x_max)?,
        })
    }
}

/// Solved two-receiver value function plus the per-stage target-cost tables
/// `G_n` it was minimized over. Joint channel states are indexed
/// `js = s1 * |S2| + s2`.
#[derive(Debug, Clone)]
pub struct ValueGrid2 {
    pub(crate) grid: Grid2D,
    pub(crate) horizon: usize,
    pub(crate) state_dims: (usize, usize),
    pub(crate) demand: (f64, f64),
    pub(crate) peak: f64,
    pub(crate) alpha: f64,
    /// Per joint state, per-packet costs for each receiver.
    pub(crate) costs: Vec<(f64, f64)>,
    pub(crate) joint_trans: Vec<Vec<f64>>,
    pub(crate) holdings: (HoldingCost, HoldingCost),
    /// `v[n][js][node]`, node = i * n2 + j over buffer levels.
    pub(crate) v: Vec<Vec<Vec<f64>>>,
    /// `g[n-1][js][node]` over post-transmission levels `y = d + node`.
    pub(crate) g: Vec<Vec<Vec<f64>>>,
    /// Optimal post-transmission levels per node.
    pub(crate) ystar: Vec<Vec<Vec<(f64, f64)>>>,
    /// Lexicographically smallest grid minimizer of each `G_n(., s)`.
    pub(crate) b_grid: Vec<Vec<(f64, f64)>>,
}

impl ValueGrid2 {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        grid: Grid2D,
        horizon: usize,
        stage: &TwoRxStage,
        v: Vec<Vec<Vec<f64>>>,
        g: Vec<Vec<Vec<f64>>>,
        ystar: Vec<Vec<Vec<(f64, f64)>>>,
        b_grid: Vec<Vec<(f64, f64)>>,
    ) -> Self {
        ValueGrid2 {
            grid,
            horizon,
            state_dims: stage.state_dims,
            demand: stage.demand,
            peak: stage.peak,
            alpha: stage.alpha,
            costs: stage.costs.clone(),
            joint_trans: stage.joint_trans.clone(),
            holdings: stage.holdings.clone(),
            v,
            g,
            ystar,
            b_grid,
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_dims(&self) -> (usize, usize) {
        self.state_dims
    }

    pub fn num_joint_states(&self) -> usize {
        self.state_dims.0 * self.state_dims.1
    }

    pub fn joint_index(&self, s1: usize, s2: usize) -> usize {
        s1 * self.state_dims.1 + s2
    }

    pub fn joint_costs(&self, js: usize) -> (f64, f64) {
        self.costs[js]
    }

    pub fn joint_transition(&self) -> &[Vec<f64>] {
        &self.joint_trans
    }

    pub fn demand(&self) -> (f64, f64) {
        self.demand
    }

    pub fn peak_power(&self) -> f64 {
        self.peak
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn node_index(&self, i: usize, j: usize) -> usize {
        i * self.grid.axis2.num_nodes() + j
    }

    pub fn value_node(&self, n: usize, js: usize, i: usize, j: usize) -> f64 {
        self.v[n][js][self.node_index(i, j)]
    }

    pub fn value(&self, n: usize, js: usize, x1: f64, x2: f64) -> f64 {
        tri_lerp(
            &self.v[n][js],
            self.grid.axis1.num_nodes(),
            self.grid.axis2.num_nodes(),
            self.grid.axis1.step(),
            self.grid.axis2.step(),
            x1,
            x2,
        )
    }

    /// `G_n` at a grid node; `y = d + (i, j) * step`.
    pub fn g_node(&self, n: usize, js: usize, i: usize, j: usize) -> f64 {
        self.g[n - 1][js][self.node_index(i, j)]
    }

    /// `G_n` at arbitrary post-transmission levels (bilinear).
    pub fn g_at(&self, n: usize, js: usize, y1: f64, y2: f64) -> f64 {
        tri_lerp(
            &self.g[n - 1][js],
            self.grid.axis1.num_nodes(),
            self.grid.axis2.num_nodes(),
            self.grid.axis1.step(),
            self.grid.axis2.step(),
            y1 - self.demand.0,
            y2 - self.demand.1,
        )
    }

    pub fn ystar_node(&self, n: usize, js: usize, i: usize, j: usize) -> (f64, f64) {
        self.ystar[n - 1][js][self.node_index(i, j)]
    }

    /// Grid minimizer of `G_n(., s)` (pre-refinement).
    pub fn g_grid_minimizer(&self, n: usize, js: usize) -> (f64, f64) {
        self.b_grid[n - 1][js]
    }

    /// Smallest minimizer of `G_n(y1, x2)` over the `y1` grid, for arbitrary
    /// `x2` (rows interpolated).
    pub fn row_argmin(&self, n: usize, js: usize, x2: f64) -> f64 {
        let (n1, n2) = (self.grid.axis1.num_nodes(), self.grid.axis2.num_nodes());
        let g = &self.g[n - 1][js];
        let t = ((x2 - self.demand.1) / self.grid.axis2.step()).clamp(0.0, (n2 - 1) as f64);
        let j = (t as usize).min(n2.saturating_sub(2));
        let frac = t - j as f64;
        let mut best = f64::INFINITY;
        let mut arg = 0usize;
        for i in 0..n1 {
            let base = i * n2 + j;
            let val = if n2 == 1 {
                g[base]
            } else {
                g[base] * (1.0 - frac) + g[base + 1] * frac
            };
            if val < best {
                best = val;
                arg = i;
            }
        }
        self.demand.0 + self.grid.axis1.node(arg)
    }

    /// Smallest minimizer of `G_n(x1, y2)` over the `y2` grid.
    pub fn col_argmin(&self, n: usize, js: usize, x1: f64) -> f64 {
        let (n1, n2) = (self.grid.axis1.num_nodes(), self.grid.axis2.num_nodes());
        let g = &self.g[n - 1][js];
        let t = ((x1 - self.demand.0) / self.grid.axis1.step()).clamp(0.0, (n1 - 1) as f64);
        let i = (t as usize).min(n1.saturating_sub(2));
        let frac = t - i as f64;
        let mut best = f64::INFINITY;
        let mut arg = 0usize;
        for j in 0..n2 {
            let val = if n1 == 1 {
                g[i * n2 + j]
            } else {
                g[i * n2 + j] * (1.0 - frac) + g[(i + 1) * n2 + j] * frac
            };
            if val < best {
                best = val;
                arg = j;
            }
        }
        self.demand.1 + self.grid.axis2.node(arg)
    }

    /// One-step optimal action from arbitrary buffer levels: minimizes `G_n`
    /// over the discretized action triangle plus the power boundary.
    /// Returns post-transmission levels and the attained `G` value.
    pub fn best_action(&self, n: usize, js: usize, x1: f64, x2: f64) -> (f64, f64, f64) {
        let (c1, c2) = self.costs[js];
        min_over_actions(
            &self.g[n - 1][js],
            &self.grid,
            self.demand,
            (c1, c2),
            self.peak,
            (x1, x2),
        )
    }

    /// Stage value at arbitrary buffer levels via exact minimization of the
    /// interpolated stage table; sharper than interpolating the value table
    /// itself, since the argmin moves continuously.
    pub fn continuous_value(&self, n: usize, js: usize, x1: f64, x2: f64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let (c1, c2) = self.costs[js];
        let (_, _, gmin) = self.best_action(n, js, x1, x2);
        gmin - c1 * x1 - c2 * x2
    }

    /// One-step lookahead evaluation of the stage-`n` target cost at
    /// arbitrary post-transmission levels: immediate cost plus the expected
    /// continuous stage value one slot later. Exact whenever the previous
    /// stage's table kinks are grid-aligned; a sharper surrogate than
    /// interpolating the stored `G_n` otherwise. Used to refine targets that
    /// sit in flat valleys between grid nodes.
    pub fn lookahead_g(&self, n: usize, js: usize, y1: f64, y2: f64) -> f64 {
        let (c1, c2) = self.costs[js];
        let (d1, d2) = self.demand;
        let mut cont = 0.0;
        if n > 1 {
            for (js_next, &p) in self.joint_trans[js].iter().enumerate() {
                if p > 0.0 {
                    cont += p * self.continuous_value(n - 1, js_next, y1 - d1, y2 - d2);
                }
            }
        }
        c1 * y1 + c2 * y2
            + self.holdings.0.eval(y1 - d1)
            + self.holdings.1.eval(y2 - d2)
            + self.alpha * cont
    }

    /// Best point on the power-exhausting segment from `x`, or `None` when
    /// the segment lies outside the grid.
    pub fn power_segment_action(&self, n: usize, js: usize, x1: f64, x2: f64) -> Option<(f64, f64, f64)> {
        power_segment_min(
            &self.g[n - 1][js],
            &self.grid,
            self.demand,
            self.costs[js],
            self.peak,
            (x1, x2),
        )
    }

    /// CSV rows `n,s,x,x2,V,z,z2` with `s` the joint state index.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,s,x,x2,V,z,z2\n");
        let (n1, n2) = (self.grid.axis1.num_nodes(), self.grid.axis2.num_nodes());
        for n in 1..=self.horizon {
            for js in 0..self.num_joint_states() {
                for i in 0..n1 {
                    for j in 0..n2 {
                        let x1 = self.grid.axis1.node(i);
                        let x2 = self.grid.axis2.node(j);
                        let (y1, y2) = self.ystar[n - 1][js][self.node_index(i, j)];
                        out.push_str(&format!(
                            "{n},{js},{x1},{x2},{},{},{}\n",
                            self.v[n][js][self.node_index(i, j)],
                            (y1 - x1).max(0.0),
                            (y2 - x2).max(0.0),
                        ));
                    }
                }
            }
        }
        out
    }
}

/// Piecewise-linear interpolation on the anti-diagonal triangulation of the
/// grid (each cell split along the edge from its lower-right to its
/// upper-left corner). For convex, supermodular node data this interpolant is
/// itself convex across the cell diagonals, which keeps stage minima of the
/// interpolated tables convex in the starting state; bilinear interpolation
/// does not have that property.
#[inline]
fn tri_lerp(values: &[f64], n1: usize, n2: usize, step1: f64, step2: f64, x1: f64, x2: f64) -> f64 {
    let t1 = (x1 / step1).clamp(0.0, (n1 - 1) as f64);
    let t2 = (x2 / step2).clamp(0.0, (n2 - 1) as f64);
    let i = (t1 as usize).min(n1.saturating_sub(2));
    let j = (t2 as usize).min(n2.saturating_sub(2));
    let f1 = t1 - i as f64;
    let f2 = t2 - j as f64;
    if n1 == 1 && n2 == 1 {
        return values[0];
    }
    if n1 == 1 {
        return values[j] * (1.0 - f2) + values[j + 1] * f2;
    }
    if n2 == 1 {
        return values[i] * (1.0 - f1) + values[i + 1] * f1;
    }
    let v00 = values[i * n2 + j];
    let v01 = values[i * n2 + j + 1];
    let v10 = values[(i + 1) * n2 + j];
    let v11 = values[(i + 1) * n2 + j + 1];
    if f1 + f2 <= 1.0 {
        v00 + f1 * (v10 - v00) + f2 * (v01 - v00)
    } else {
        v11 + (1.0 - f1) * (v01 - v11) + (1.0 - f2) * (v10 - v11)
    }
}

/// Minimizes a stage `G` table over the discretized feasible action set
/// `{y >= max(x, d), c^T (y - x) <= P}` from buffer levels `x`, including the
/// exact corner points and a scan + golden-section search along the
/// power-exhausting segment. Ties break toward lexicographically smallest
/// post-transmission levels.
fn min_over_actions(
    g: &[f64],
    grid: &Grid2D,
    demand: (f64, f64),
    costs: (f64, f64),
    peak: f64,
    x: (f64, f64),
) -> (f64, f64, f64) {
    let (d1, d2) = demand;
    let (c1, c2) = costs;
    let (x1, x2) = x;
    let (n1, n2) = (grid.axis1.num_nodes(), grid.axis2.num_nodes());
    let (step1, step2) = (grid.axis1.step(), grid.axis2.step());
    let top1 = d1 + grid.axis1.x_max();
    let top2 = d2 + grid.axis2.x_max();

    let y1_lo = x1.max(d1);
    let y2_lo = x2.max(d2);
    let budget0 = peak - c2 * (y2_lo - x2);
    let y1_hi = (x1 + budget0 / c1).min(top1);

    let mut best = f64::INFINITY;
    let mut by = (f64::NAN, f64::NAN);

    // Lattice scan, row by row in y1.
    let il = ceil_node(y1_lo - d1, step1);
    let ih = floor_node(y1_hi - d1, step1).min(n1 as isize - 1);
    let jl = ceil_node(y2_lo - d2, step2);
    let mut i = il as isize;
    while i <= ih {
        let y1 = d1 + i as f64 * step1;
        let rem = peak - c1 * (y1 - x1);
        let y2_hi = (x2 + rem / c2).min(top2);
        let jh = floor_node(y2_hi - d2, step2).min(n2 as isize - 1);
        if jh >= jl as isize {
            let base = i as usize * n2;
            let row = &g[base + jl..=base + jh as usize];
            let mut local_best = f64::INFINITY;
            let mut local_j = 0usize;
            for (off, &val) in row.iter().enumerate() {
                if val < local_best {
                    local_best = val;
                    local_j = jl + off;
                }
            }
            if local_best < best {
                best = local_best;
                by = (y1, d2 + local_j as f64 * step2);
            }
        }
        i += 1;
    }

    let g_at = |y1: f64, y2: f64| tri_lerp(g, n1, n2, step1, step2, y1 - d1, y2 - d2);

    let consider = |y1: f64, y2: f64, best: &mut f64, by: &mut (f64, f64)| {
        let val = g_at(y1, y2);
        if val < *best || (val == *best && (y1, y2) < *by) {
            *best = val;
            *by = (y1, y2);
        }
    };

    // Exact corners of the feasible set.
    consider(y1_lo, y2_lo, &mut best, &mut by);
    consider(y1_hi, y2_lo, &mut best, &mut by);
    let y2_corner = (x2 + (peak - c1 * (y1_lo - x1)) / c2).min(top2);
    consider(y1_lo, y2_corner, &mut best, &mut by);

    // Power-exhausting segment: c1 (y1 - x1) + c2 (y2 - x2) = P.
    if let Some((y1, y2, val)) = power_segment_min(g, grid, demand, costs, peak, x) {
        if val < best || (val == best && (y1, y2) < by) {
            best = val;
            by = (y1, y2);
        }
    }

    (by.0, by.1, best)
}

/// Minimizes a stage `G` table along the power-exhausting segment
/// `{y >= max(x, d): c^T (y - x) = P}`. The interpolated table is piecewise
/// linear along the segment with kinks only where the segment crosses a grid
/// line or a cell anti-diagonal, so evaluating the endpoints and every
/// crossing is an exact minimization. Returns `None` when the segment lies
/// outside the grid.
pub(crate) fn power_segment_min(
    g: &[f64],
    grid: &Grid2D,
    demand: (f64, f64),
    costs: (f64, f64),
    peak: f64,
    x: (f64, f64),
) -> Option<(f64, f64, f64)> {
    let (d1, d2) = demand;
    let (c1, c2) = costs;
    let (x1, x2) = x;
    let (n1, n2) = (grid.axis1.num_nodes(), grid.axis2.num_nodes());
    let (step1, step2) = (grid.axis1.step(), grid.axis2.step());
    let top1 = d1 + grid.axis1.x_max();
    let top2 = d2 + grid.axis2.x_max();
    let y1_lo = x1.max(d1);
    let y2_lo = x2.max(d2);

    let seg_lo = y1_lo.max(x1 + (peak - c2 * (top2 - x2)) / c1);
    let seg_hi = (x1 + (peak - c2 * (y2_lo - x2)) / c1).min(top1);
    if seg_hi <= seg_lo - 1e-12 {
        return None;
    }
    let y2_of = |y1: f64| (x2 + (peak - c1 * (y1 - x1)) / c2).max(y2_lo);
    let phi = |y1: f64| tri_lerp(g, n1, n2, step1, step2, y1 - d1, y2_of(y1) - d2);

    let mut best_y1 = seg_lo;
    let mut best_val = phi(seg_lo);
    let consider = |y1: f64, best_y1: &mut f64, best_val: &mut f64| {
        if y1 > seg_lo && y1 <= seg_hi + 1e-12 {
            let y1 = y1.min(seg_hi);
            let val = phi(y1);
            if val < *best_val || (val == *best_val && y1 < *best_y1) {
                *best_val = val;
                *best_y1 = y1;
            }
        }
    };
    consider(seg_hi, &mut best_y1, &mut best_val);

    // Crossings with vertical grid lines: y1 on the axis-1 lattice.
    {
        let mut k = ceil_node(seg_lo - d1, step1);
        loop {
            let y1 = d1 + k as f64 * step1;
            if y1 > seg_hi + 1e-12 || k >= n1 {
                break;
            }
            consider(y1, &mut best_y1, &mut best_val);
            k += 1;
        }
    }
    // Crossings with horizontal grid lines: y2(y1) on the axis-2 lattice.
    // y2 decreases as y1 grows, so walk the lattice downward from the start.
    {
        let y2_start = y2_of(seg_lo);
        let mut m = floor_node(y2_start - d2, step2).min(n2 as isize - 1);
        while m >= 0 {
            let y2 = d2 + m as f64 * step2;
            let y1 = x1 + (peak - c2 * (y2 - x2)) / c1;
            if y1 > seg_hi + 1e-12 {
                break;
            }
            consider(y1, &mut best_y1, &mut best_val);
            m -= 1;
        }
    }
    // Crossings with cell anti-diagonals: (y1 - d1)/step1 + (y2 - d2)/step2
    // integral. Linear in y1 with slope 1/step1 - c1/(c2 step2).
    {
        let u_of = |y1: f64| (y1 - d1) / step1 + (y2_of(y1) - d2) / step2;
        let slope = 1.0 / step1 - c1 / (c2 * step2);
        if slope.abs() > 1e-12 {
            let (u_a, u_b) = (u_of(seg_lo), u_of(seg_hi));
            let (u_min, u_max) = if u_a <= u_b { (u_a, u_b) } else { (u_b, u_a) };
            let mut level = u_min.ceil();
            while level <= u_max + 1e-12 {
                let y1 = seg_lo + (level - u_a) / slope;
                consider(y1, &mut best_y1, &mut best_val);
                level += 1.0;
            }
        }
    }
    Some((best_y1, y2_of(best_y1), best_val))
}

/// Golden-section minimization/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_min(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - (b - a) * INV_PHI;
    let mut d = a + (b - a) * INV_PHI;
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * INV_PHI;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * INV_PHI;
            fd = f(d);
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}

/// The pieces of a two-receiver stage problem with linear curves.
#[derive(Debug, Clone)]
pub(crate) struct TwoRxStage {
    pub costs: Vec<(f64, f64)>,
    pub joint_trans: Vec<Vec<f64>>,
    pub holdings: (HoldingCost, HoldingCost),
    pub demand: (f64, f64),
    pub peak: f64,
    pub alpha: f64,
    pub state_dims: (usize, usize),
}

impl TwoRxStage {
    pub fn from_spec(spec: &ValidatedSpec) -> Result<Self, DpError> {
        if spec.num_receivers() != 2 {
            return Err(DpError::WrongReceiverCount {
                expected: 2,
                got: spec.num_receivers(),
            });
        }
        let r1 = spec.receiver(0);
        let r2 = spec.receiver(1);
        for (m, r) in [r1, r2].iter().enumerate() {
            for (s, c) in r.curves.iter().enumerate() {
                if c.num_segments() != 1 {
                    return Err(DpError::NonLinearCurves(format!(
                        "receiver {m} state {s} has {} segments",
                        c.num_segments()
                    )));
                }
            }
        }
        let (k1, k2) = (r1.num_states(), r2.num_states());
        let mut costs = Vec::with_capacity(k1 * k2);
        for s1 in 0..k1 {
            for s2 in 0..k2 {
                costs.push((r1.curves[s1].base_slope(), r2.curves[s2].base_slope()));
            }
        }
        let mut joint_trans = vec![vec![0.0; k1 * k2]; k1 * k2];
        for s1 in 0..k1 {
            for s2 in 0..k2 {
                let js = s1 * k2 + s2;
                for t1 in 0..k1 {
                    for t2 in 0..k2 {
                        joint_trans[js][t1 * k2 + t2] =
                            r1.transition[s1][t1] * r2.transition[s2][t2];
                    }
                }
            }
        }
        Ok(TwoRxStage {
            costs,
            joint_trans,
            holdings: (r1.holding.clone(), r2.holding.clone()),
            demand: (r1.demand, r2.demand),
            peak: spec.peak_power(),
            alpha: spec.alpha(),
            state_dims: (k1, k2),
        })
    }

    /// One backward step: target-cost tables, their grid minimizers, stage
    /// values, and argmin levels.
    #[allow(clippy::type_complexity)]
    pub fn sweep(
        &self,
        grid: &Grid2D,
        v_prev: &[Vec<f64>],
    ) -> (Vec<Vec<f64>>, Vec<(f64, f64)>, Vec<Vec<f64>>, Vec<Vec<(f64, f64)>>) {
        let (n1, n2) = (grid.axis1.num_nodes(), grid.axis2.num_nodes());
        let nodes = n1 * n2;
        let js_count = self.costs.len();
        let (d1, d2) = self.demand;

        // Mixed continuations per joint state.
        let w: Vec<Vec<f64>> = (0..js_count)
            .into_par_iter()
            .map(|js| {
                let mut acc = vec![0.0; nodes];
                for (js_next, &p) in self.joint_trans[js].iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for (a, v) in acc.iter_mut().zip(&v_prev[js_next]) {
                        *a += p * v;
                    }
                }
                acc
            })
            .collect();

        // Stage target costs G(y) = c^T y + h(y - d) + alpha * w(y - d).
        let g: Vec<Vec<f64>> = (0..js_count)
            .into_par_iter()
            .map(|js| {
                let (c1, c2) = self.costs[js];
                let a1: Vec<f64> = (0..n1)
                    .map(|i| {
                        let off = grid.axis1.node(i);
                        c1 * (d1 + off) + self.holdings.0.eval(off)
                    })
                    .collect();
                let a2: Vec<f64> = (0..n2)
                    .map(|j| {
                        let off = grid.axis2.node(j);
                        c2 * (d2 + off) + self.holdings.1.eval(off)
                    })
                    .collect();
                let mut table = vec![0.0; nodes];
                for i in 0..n1 {
                    for j in 0..n2 {
                        table[i * n2 + j] = a1[i] + a2[j] + self.alpha * w[js][i * n2 + j];
                    }
                }
                table
            })
            .collect();

        // Lexicographically smallest grid minimizer per joint state.
        let b_grid: Vec<(f64, f64)> = g
            .iter()
            .map(|table| {
                let mut best = f64::INFINITY;
                let mut arg = (0usize, 0usize);
                for i in 0..n1 {
                    for j in 0..n2 {
                        let val = table[i * n2 + j];
                        if val < best {
                            best = val;
                            arg = (i, j);
                        }
                    }
                }
                (d1 + grid.axis1.node(arg.0), d2 + grid.axis2.node(arg.1))
            })
            .collect();

        // Stage values: V(x) = min G - c^T x.
        let mut v = vec![Vec::new(); js_count];
        let mut ystar = vec![Vec::new(); js_count];
        for js in 0..js_count {
            let (c1, c2) = self.costs[js];
            let table = &g[js];
            let rows: Vec<(Vec<f64>, Vec<(f64, f64)>)> = (0..n1)
                .into_par_iter()
                .map(|i| {
                    let x1 = grid.axis1.node(i);
                    let mut vrow = Vec::with_capacity(n2);
                    let mut yrow = Vec::with_capacity(n2);
                    for j in 0..n2 {
                        let x2 = grid.axis2.node(j);
                        let (y1, y2, gmin) = min_over_actions(
                            table,
                            grid,
                            self.demand,
                            (c1, c2),
                            self.peak,
                            (x1, x2),
                        );
                        vrow.push(gmin - c1 * x1 - c2 * x2);
                        yrow.push((y1, y2));
                    }
                    (vrow, yrow)
                })
                .collect();
            let mut vflat = Vec::with_capacity(nodes);
            let mut yflat = Vec::with_capacity(nodes);
            for (vrow, yrow) in rows {
                vflat.extend(vrow);
                yflat.extend(yrow);
            }
            v[js] = vflat;
            ystar[js] = yflat;
        }
        (g, b_grid, v, ystar)
    }
}

/// Backward induction for two receivers with linear power-rate curves.
pub fn solve_2rx(spec: &ValidatedSpec, grid: &Grid2D, options: SolveOptions) -> Result<ValueGrid2, DpError> {
    let stage = TwoRxStage::from_spec(spec)?;
    grid.axis1.steps_per(stage.demand.0)?;
    grid.axis2.steps_per(stage.demand.1)?;
    let n_slots = spec.horizon();
    for (axis, d, label) in [
        (&grid.axis1, stage.demand.0, "axis 1"),
        (&grid.axis2, stage.demand.1, "axis 2"),
    ] {
        if axis.x_max() + 1e-9 < n_slots as f64 * d {
            return Err(DpError::GridMisaligned(format!(
                "{label}: x_max = {} below horizon * demand = {}",
                axis.x_max(),
                n_slots as f64 * d
            )));
        }
    }
    let nodes = grid.axis1.num_nodes() * grid.axis2.num_nodes();
    let js_count = stage.costs.len();
    let needed = (n_slots + 1) * js_count * nodes * 8
        + n_slots * js_count * nodes * 8
        + n_slots * js_count * nodes * 16;
    if needed > options.memory_cap_bytes {
        return Err(DpError::MemoryBudgetExceeded {
            needed,
            cap: options.memory_cap_bytes,
        });
    }

    let mut v = Vec::with_capacity(n_slots + 1);
    v.push(vec![vec![0.0; nodes]; js_count]);
    let mut g_all = Vec::with_capacity(n_slots);
    let mut ystar_all = Vec::with_capacity(n_slots);
    let mut b_all = Vec::with_capacity(n_slots);
    for n in 1..=n_slots {
        let (g, b, vn, ystar) = stage.sweep(grid, &v[n - 1]);
        v.push(vn);
        g_all.push(g);
        b_all.push(b);
        ystar_all.push(ystar);
    }
    Ok(ValueGrid2 {
        grid: grid.clone(),
        horizon: n_slots,
        state_dims: stage.state_dims,
        demand: stage.demand,
        peak: stage.peak,
        alpha: stage.alpha,
        costs: stage.costs,
        joint_trans: stage.joint_trans,
        holdings: stage.holdings,
        v,
        g: g_all,
        ystar: ystar_all,
        b_grid: b_all,
    })
}

// ---------------------------------------------------------------------------
// Structural checks
// ---------------------------------------------------------------------------

/// A failed discrete convexity or supermodularity check.
#[derive(Debug, Clone)]
pub struct CheckViolation {
    pub n: usize,
    pub state: usize,
    pub location: (usize, usize),
    pub axis: &'static str,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub violations: Vec<CheckViolation>,
    pub cells_checked: usize,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn scale_of(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(1.0_f64, |m, v| m.max(v.abs()))
}

/// Second differences along the buffer axis must be nonnegative (within a
/// relative slack) for every stage and state.
pub fn check_convexity_1rx(vg: &ValueGrid1) -> CheckReport {
    let eps = 1e-9 * scale_of(vg.v.iter().flatten().flatten().copied());
    let mut report = CheckReport {
        tolerance: eps,
        ..Default::default()
    };
    for n in 1..=vg.horizon {
        for s in 0..vg.num_states() {
            let row = &vg.v[n][s];
            for i in 1..row.len() - 1 {
                let dd = row[i - 1] - 2.0 * row[i] + row[i + 1];
                report.cells_checked += 1;
                if dd < -eps {
                    report.violations.push(CheckViolation {
                        n,
                        state: s,
                        location: (i, 0),
                        axis: "x",
                        magnitude: dd,
                    });
                }
            }
        }
    }
    report
}

/// Convexity along rows, columns, and both diagonals of each 2-D table.
pub fn check_convexity_2rx(vg: &ValueGrid2) -> CheckReport {
    let (n1, n2) = (vg.grid.axis1.num_nodes(), vg.grid.axis2.num_nodes());
    let eps = 1e-9 * scale_of(vg.v.iter().flatten().flatten().copied());
    let mut report = CheckReport {
        tolerance: eps,
        ..Default::default()
    };
    let check = |n: usize, js: usize, i: usize, j: usize, axis: &'static str, dd: f64, report: &mut CheckReport| {
        report.cells_checked += 1;
        if dd < -eps {
            report.violations.push(CheckViolation {
                n,
                state: js,
                location: (i, j),
                axis,
                magnitude: dd,
            });
        }
    };
    for n in 1..=vg.horizon {
        for js in 0..vg.num_joint_states() {
            let t = &vg.v[n][js];
            let at = |i: usize, j: usize| t[i * n2 + j];
            for i in 0..n1 {
                for j in 1..n2 - 1 {
                    check(n, js, i, j, "x2", at(i, j - 1) - 2.0 * at(i, j) + at(i, j + 1), &mut report);
                }
            }
            for j in 0..n2 {
                for i in 1..n1 - 1 {
                    check(n, js, i, j, "x1", at(i - 1, j) - 2.0 * at(i, j) + at(i + 1, j), &mut report);
                }
            }
            for i in 1..n1 - 1 {
                for j in 1..n2 - 1 {
                    check(
                        n,
                        js,
                        i,
                        j,
                        "diag+",
                        at(i - 1, j - 1) - 2.0 * at(i, j) + at(i + 1, j + 1),
                        &mut report,
                    );
                    check(
                        n,
                        js,
                        i,
                        j,
                        "diag-",
                        at(i - 1, j + 1) - 2.0 * at(i, j) + at(i + 1, j - 1),
                        &mut report,
                    );
                }
            }
        }
    }
    report
}

/// Elementary-cell cross differences of `V` (and of the stored `G` tables)
/// must be nonnegative: scarcity at one receiver raises the marginal value of
/// serving the other.
pub fn check_supermodularity(vg: &ValueGrid2) -> CheckReport {
    let (n1, n2) = (vg.grid.axis1.num_nodes(), vg.grid.axis2.num_nodes());
    let eps = 1e-9 * scale_of(vg.v.iter().flatten().flatten().copied());
    let mut report = CheckReport {
        tolerance: eps,
        ..Default::default()
    };
    let run = |table: &[f64], n: usize, js: usize, axis: &'static str, report: &mut CheckReport| {
        for i in 0..n1 - 1 {
            for j in 0..n2 - 1 {
                let lo = table[i * n2 + j];
                let hi = table[(i + 1) * n2 + j + 1];
                let m1 = table[(i + 1) * n2 + j];
                let m2 = table[i * n2 + j + 1];
                let cross = lo + hi - m1 - m2;
                report.cells_checked += 1;
                if cross < -eps {
                    report.violations.push(CheckViolation {
                        n,
                        state: js,
                        location: (i, j),
                        axis,
                        magnitude: cross,
                    });
                }
            }
        }
    };
    for n in 1..=vg.horizon {
        for js in 0..vg.num_joint_states() {
            run(&vg.v[n][js], n, js, "V", &mut report);
            run(&vg.g[n - 1][js], n, js, "G", &mut report);
        }
    }
    report
}
