//! Problem primitives: channel processes, power-rate curves, holding costs,
//! and the combined problem specification.
//!
//! A [`ProblemSpec`] is parsed from JSON, then checked by [`validate`] which
//! produces an immutable [`ValidatedSpec`] with derived quantities cached:
//! per-state effective curves (peak power folded in as a maximum transmission
//! quantity), IID detection, and extreme per-packet costs. All downstream
//! solvers consume the validated form only.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used for stochastic-matrix and curve checks unless the
/// spec overrides it.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

/// Relative tolerance for "is an integer multiple" checks on grid alignment.
pub const INTEGER_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad stochastic matrix (receiver {receiver}): {detail}")]
    BadStochasticMatrix { receiver: usize, detail: String },
    #[error("non-convex power-rate curve (receiver {receiver}, state {state}): {detail}")]
    NonConvexCurve {
        receiver: usize,
        state: usize,
        detail: String,
    },
    #[error("infeasible power budget: {detail}")]
    InfeasiblePower { detail: String },
    #[error("invalid spec: {detail}")]
    InvalidSpec { detail: String },
    #[error("argument out of range: {detail}")]
    OutOfRange { detail: String },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One channel condition. Ids are dense indices `0..num_states`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub label: String,
}

/// Power consumed as a function of packets transmitted, before the peak power
/// constraint is applied. Linear curves are a single slope; piecewise-linear
/// curves list segment slopes (nondecreasing) and the points where the slope
/// changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PowerRateCurve {
    Linear {
        slope: f64,
    },
    PiecewiseLinear {
        slopes: Vec<f64>,
        breakpoints: Vec<f64>,
    },
}

/// Cost per slot assessed on packets left in a receiver buffer after playout.
/// Must be convex, nonnegative, nondecreasing with `eval(0) == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HoldingCost {
    Linear { rate: f64 },
    /// Free up to `cap` packets, then `penalty` per packet beyond it. A large
    /// penalty models a finite receiver buffer of length `cap`.
    Barrier { cap: f64, penalty: f64 },
    /// Piecewise-linear through `(level, cost)` points starting at (0, 0);
    /// extended beyond the last point with the final slope.
    TabulatedConvex { points: Vec<[f64; 2]> },
}

impl HoldingCost {
    pub fn eval(&self, level: f64) -> f64 {
        let x = level.max(0.0);
        match self {
            HoldingCost::Linear { rate } => rate * x,
            HoldingCost::Barrier { cap, penalty } => {
                if x <= *cap {
                    0.0
                } else {
                    penalty * (x - cap)
                }
            }
            HoldingCost::TabulatedConvex { points } => {
                if points.is_empty() {
                    return 0.0;
                }
                let mut prev = [0.0, 0.0];
                for p in points {
                    if x <= p[0] {
                        let w = p[0] - prev[0];
                        if w <= 0.0 {
                            return p[1];
                        }
                        return prev[1] + (p[1] - prev[1]) * (x - prev[0]) / w;
                    }
                    prev = *p;
                }
                let last = points[points.len() - 1];
                let slope = if points.len() >= 2 {
                    let before = points[points.len() - 2];
                    (last[1] - before[1]) / (last[0] - before[0])
                } else if last[0] > 0.0 {
                    last[1] / last[0]
                } else {
                    0.0
                };
                last[1] + slope * (x - last[0])
            }
        }
    }

    fn check(&self) -> Result<(), String> {
        match self {
            HoldingCost::Linear { rate } => {
                if !rate.is_finite() || *rate < 0.0 {
                    return Err(format!("holding rate must be finite and >= 0, got {rate}"));
                }
            }
            HoldingCost::Barrier { cap, penalty } => {
                if !cap.is_finite() || *cap < 0.0 {
                    return Err(format!("barrier cap must be finite and >= 0, got {cap}"));
                }
                if !penalty.is_finite() || *penalty < 0.0 {
                    return Err(format!("barrier penalty must be >= 0, got {penalty}"));
                }
            }
            HoldingCost::TabulatedConvex { points } => {
                let mut prev = [0.0, 0.0];
                let mut prev_slope = 0.0;
                for (i, p) in points.iter().enumerate() {
                    if p[0] <= prev[0] && !(i == 0 && p[0] == 0.0) {
                        return Err("tabulated holding levels must be strictly increasing".into());
                    }
                    if i == 0 && p[0] == 0.0 {
                        if p[1] != 0.0 {
                            return Err("tabulated holding cost must have h(0) = 0".into());
                        }
                        continue;
                    }
                    let slope = (p[1] - prev[1]) / (p[0] - prev[0]);
                    if slope < prev_slope - 1e-12 {
                        return Err("tabulated holding cost must be convex".into());
                    }
                    if slope < -1e-12 {
                        return Err("tabulated holding cost must be nondecreasing".into());
                    }
                    prev_slope = slope;
                    prev = *p;
                }
            }
        }
        Ok(())
    }
}

/// Finite Markov chain of channel states with a power-rate curve per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub states: Vec<ChannelState>,
    /// Row-stochastic matrix: `transition[s][s']` is the probability of
    /// moving from state `s` to `s'` between slots.
    pub transition: Vec<Vec<f64>>,
    /// One curve per state, aligned with `states`.
    pub curve: Vec<PowerRateCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverSpec {
    pub channel: ChannelConfig,
    /// Packets drained from the buffer each slot (fluid model: fractional
    /// packets allowed).
    pub demand: f64,
    pub holding: HoldingCost,
    /// Starting buffer level, in packets.
    #[serde(default)]
    pub initial_level: f64,
}

/// The full problem: one or more receivers sharing a per-slot power budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub receivers: Vec<ReceiverSpec>,
    /// Peak power available per slot, shared across receivers.
    pub peak_power: f64,
    /// Discount factor in [0, 1]. Must be < 1 for infinite-horizon discounted
    /// solves.
    pub alpha: f64,
    /// Number of slots for finite-horizon solves.
    pub horizon: usize,
    /// Numerical tolerance for validation checks.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

impl ProblemSpec {
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialization cannot fail")
    }

    /// Stable content hash of the spec (FNV-1a over the compact JSON form),
    /// used to key output artifacts and caches.
    pub fn content_hash(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("spec serialization cannot fail");
        fnv1a64(&bytes)
    }

    pub fn validate(&self) -> Result<ValidatedSpec, ModelError> {
        validate(self)
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// A power-rate curve with the peak power constraint folded in: transmission
/// is capped at `z_max`, the quantity whose power cost equals the peak.
/// Linear curves are stored as a single segment so downstream code handles
/// one representation.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCurve {
    slopes: Vec<f64>,
    breaks: Vec<f64>,
    /// Cumulative power at each breakpoint (same length as `breaks`).
    cum_power: Vec<f64>,
    z_max: f64,
    p_max: f64,
}

impl EffectiveCurve {
    /// Builds the effective curve under peak power `peak`. Segments that lie
    /// entirely beyond the peak are dropped; they are unreachable.
    pub fn new(curve: &PowerRateCurve, peak: f64) -> Result<Self, String> {
        let (slopes, breaks) = normalize(curve)?;
        if peak <= 0.0 || !peak.is_finite() {
            return Err(format!("peak power must be positive, got {peak}"));
        }
        let mut kept_slopes = Vec::new();
        let mut kept_breaks = Vec::new();
        let mut cum_power = Vec::new();
        let mut power = 0.0;
        let mut z_prev = 0.0;
        let mut z_max = f64::NAN;
        for (k, &slope) in slopes.iter().enumerate() {
            kept_slopes.push(slope);
            let z_end = if k < breaks.len() {
                breaks[k]
            } else {
                f64::INFINITY
            };
            let seg_power = slope * (z_end - z_prev);
            if power + seg_power >= peak {
                z_max = z_prev + (peak - power) / slope;
                break;
            }
            power += seg_power;
            z_prev = z_end;
            kept_breaks.push(z_end);
            cum_power.push(power);
        }
        if !z_max.is_finite() {
            return Err("curve never reaches the peak power".into());
        }
        Ok(EffectiveCurve {
            slopes: kept_slopes,
            breaks: kept_breaks,
            cum_power,
            z_max,
            p_max: peak,
        })
    }

    /// Builds an uncapped variant: same segments, but transmission bounded by
    /// `z_cap` instead of a power budget. Used by relaxations that remove the
    /// per-slot peak constraint. `scale` multiplies every slope.
    pub fn uncapped(curve: &PowerRateCurve, z_cap: f64, scale: f64) -> Result<Self, String> {
        let (mut slopes, mut breaks) = normalize(curve)?;
        for s in &mut slopes {
            *s *= scale;
        }
        breaks.retain(|&z| z < z_cap);
        slopes.truncate(breaks.len() + 1);
        let mut cum_power = Vec::with_capacity(breaks.len());
        let mut power = 0.0;
        let mut z_prev = 0.0;
        for (k, &z) in breaks.iter().enumerate() {
            power += slopes[k] * (z - z_prev);
            z_prev = z;
            cum_power.push(power);
        }
        let p_max = if breaks.is_empty() {
            slopes[0] * z_cap
        } else {
            cum_power[breaks.len() - 1] + slopes[breaks.len()] * (z_cap - z_prev)
        };
        Ok(EffectiveCurve {
            slopes,
            breaks,
            cum_power,
            z_max: z_cap,
            p_max,
        })
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn peak_power(&self) -> f64 {
        self.p_max
    }

    /// Segment slopes after peak truncation (marginal power per packet).
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Points where the marginal cost changes, strictly inside `[0, z_max]`.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn num_segments(&self) -> usize {
        self.slopes.len()
    }

    /// Marginal power cost of the first packet.
    pub fn base_slope(&self) -> f64 {
        self.slopes[0]
    }

    /// Power needed to transmit `z` packets with `z` clamped into
    /// `[0, z_max]`. Hot-loop variant of [`power_of`] for callers that
    /// guarantee the range.
    ///
    /// [`power_of`]: EffectiveCurve::power_of
    #[inline]
    pub fn power_clamped(&self, z: f64) -> f64 {
        let z = z.clamp(0.0, self.z_max);
        let seg = self.breaks.partition_point(|&b| b <= z);
        let (z0, p0) = if seg == 0 {
            (0.0, 0.0)
        } else {
            (self.breaks[seg - 1], self.cum_power[seg - 1])
        };
        p0 + self.slopes[seg] * (z - z0)
    }

    /// Power needed to transmit `z` packets. Errors when `z` exceeds
    /// `z_max` beyond tolerance.
    pub fn power_of(&self, z: f64) -> Result<f64, ModelError> {
        if z < -1e-12 || z > self.z_max + 1e-12 {
            return Err(ModelError::OutOfRange {
                detail: format!("z = {z} outside [0, {}]", self.z_max),
            });
        }
        let z = z.clamp(0.0, self.z_max);
        let seg = self.breaks.partition_point(|&b| b <= z);
        let (z0, p0) = if seg == 0 {
            (0.0, 0.0)
        } else {
            (self.breaks[seg - 1], self.cum_power[seg - 1])
        };
        Ok(p0 + self.slopes[seg] * (z - z0))
    }

    /// Packets transmittable with `power`; inverse of [`power_of`].
    ///
    /// [`power_of`]: EffectiveCurve::power_of
    pub fn rate_of(&self, power: f64) -> Result<f64, ModelError> {
        if power < -1e-10 || power > self.p_max + 1e-10 {
            return Err(ModelError::OutOfRange {
                detail: format!("power = {power} outside [0, {}]", self.p_max),
            });
        }
        let power = power.clamp(0.0, self.p_max);
        let seg = self.cum_power.partition_point(|&p| p <= power);
        let (z0, p0) = if seg == 0 {
            (0.0, 0.0)
        } else {
            (self.breaks[seg - 1], self.cum_power[seg - 1])
        };
        Ok((z0 + (power - p0) / self.slopes[seg]).min(self.z_max))
    }
}

/// Normalizes a curve to (slopes, breakpoints) and checks convexity.
fn normalize(curve: &PowerRateCurve) -> Result<(Vec<f64>, Vec<f64>), String> {
    match curve {
        PowerRateCurve::Linear { slope } => {
            if !slope.is_finite() || *slope <= 0.0 {
                return Err(format!("linear slope must be positive, got {slope}"));
            }
            Ok((vec![*slope], Vec::new()))
        }
        PowerRateCurve::PiecewiseLinear { slopes, breakpoints } => {
            if slopes.is_empty() {
                return Err("piecewise curve needs at least one slope".into());
            }
            if breakpoints.len() + 1 != slopes.len() {
                return Err(format!(
                    "expected {} breakpoints for {} slopes, got {}",
                    slopes.len() - 1,
                    slopes.len(),
                    breakpoints.len()
                ));
            }
            let mut prev_slope = 0.0;
            for &s in slopes {
                if !s.is_finite() || s <= 0.0 {
                    return Err(format!("slopes must be positive, got {s}"));
                }
                if s < prev_slope {
                    return Err("slopes must be nondecreasing (convexity)".into());
                }
                prev_slope = s;
            }
            let mut prev = 0.0;
            for &z in breakpoints {
                if !z.is_finite() || z <= prev {
                    return Err("breakpoints must be positive and strictly increasing".into());
                }
                prev = z;
            }
            Ok((slopes.clone(), breakpoints.clone()))
        }
    }
}

/// A receiver after validation: dense state ids, effective curves, and cached
/// channel statistics.
#[derive(Debug, Clone)]
pub struct ValidatedReceiver {
    pub states: Vec<ChannelState>,
    pub transition: Vec<Vec<f64>>,
    pub curves: Vec<EffectiveCurve>,
    /// True when every transition row is identical (channel IID over slots).
    pub iid: bool,
    pub demand: f64,
    pub holding: HoldingCost,
    pub initial_level: f64,
    /// Smallest first-segment slope over states (best channel).
    pub c_min: f64,
    /// Largest segment slope over states (worst marginal cost).
    pub c_max: f64,
}

impl ValidatedReceiver {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Marginal distribution used for IID channels: the common row.
    pub fn iid_probs(&self) -> &[f64] {
        &self.transition[0]
    }

    /// Index of a worst state (largest first-segment slope).
    pub fn worst_state(&self) -> usize {
        let mut idx = 0;
        for (s, c) in self.curves.iter().enumerate() {
            if c.base_slope() > self.curves[idx].base_slope() {
                idx = s;
            }
        }
        idx
    }

    /// Index of a best state (smallest first-segment slope).
    pub fn best_state(&self) -> usize {
        let mut idx = 0;
        for (s, c) in self.curves.iter().enumerate() {
            if c.base_slope() < self.curves[idx].base_slope() {
                idx = s;
            }
        }
        idx
    }
}

/// Immutable validated problem. Safe to share across worker threads.
#[derive(Debug, Clone)]
pub struct ValidatedSpec {
    spec: ProblemSpec,
    receivers: Vec<ValidatedReceiver>,
}

impl ValidatedSpec {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn receivers(&self) -> &[ValidatedReceiver] {
        &self.receivers
    }

    pub fn num_receivers(&self) -> usize {
        self.receivers.len()
    }

    pub fn receiver(&self, m: usize) -> &ValidatedReceiver {
        &self.receivers[m]
    }

    pub fn peak_power(&self) -> f64 {
        self.spec.peak_power
    }

    pub fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }

    pub fn content_hash(&self) -> u64 {
        self.spec.content_hash()
    }

    /// Rebuilds the spec with a different discount factor (used by the
    /// vanishing-discount ladder).
    pub fn with_alpha(&self, alpha: f64) -> Result<ValidatedSpec, ModelError> {
        let mut spec = self.spec.clone();
        spec.alpha = alpha;
        validate(&spec)
    }

    /// Rebuilds the spec with a different horizon length.
    pub fn with_horizon(&self, horizon: usize) -> Result<ValidatedSpec, ModelError> {
        let mut spec = self.spec.clone();
        spec.horizon = horizon;
        validate(&spec)
    }

    /// Extracts receiver `m` as a standalone single-receiver problem with the
    /// full power budget. Used by separable relaxations.
    pub fn receiver_subspec(&self, m: usize) -> Result<ValidatedSpec, ModelError> {
        let mut spec = self.spec.clone();
        spec.receivers = vec![self.spec.receivers[m].clone()];
        validate(&spec)
    }
}

/// Checks every invariant of the problem primitives and caches derived
/// quantities. See [`ModelError`] for the failure modes.
pub fn validate(spec: &ProblemSpec) -> Result<ValidatedSpec, ModelError> {
    let tol = if spec.tolerance > 0.0 {
        spec.tolerance
    } else {
        DEFAULT_TOLERANCE
    };
    if spec.receivers.is_empty() {
        return Err(ModelError::InvalidSpec {
            detail: "at least one receiver required".into(),
        });
    }
    if !(0.0..=1.0).contains(&spec.alpha) {
        return Err(ModelError::InvalidSpec {
            detail: format!("alpha must be in [0, 1], got {}", spec.alpha),
        });
    }
    if spec.horizon == 0 {
        return Err(ModelError::InvalidSpec {
            detail: "horizon must be at least 1 slot".into(),
        });
    }
    if !(spec.peak_power.is_finite() && spec.peak_power > 0.0) {
        return Err(ModelError::InvalidSpec {
            detail: format!("peak_power must be positive, got {}", spec.peak_power),
        });
    }

    let mut receivers = Vec::with_capacity(spec.receivers.len());
    for (m, r) in spec.receivers.iter().enumerate() {
        if !(r.demand.is_finite() && r.demand > 0.0) {
            return Err(ModelError::InvalidSpec {
                detail: format!("receiver {m}: demand must be positive, got {}", r.demand),
            });
        }
        if r.initial_level < 0.0 {
            return Err(ModelError::InvalidSpec {
                detail: format!("receiver {m}: initial_level must be >= 0"),
            });
        }
        r.holding
            .check()
            .map_err(|detail| ModelError::InvalidSpec {
                detail: format!("receiver {m}: {detail}"),
            })?;
        let n_states = r.channel.states.len();
        if n_states == 0 {
            return Err(ModelError::InvalidSpec {
                detail: format!("receiver {m}: channel needs at least one state"),
            });
        }
        if r.channel.curve.len() != n_states {
            return Err(ModelError::InvalidSpec {
                detail: format!(
                    "receiver {m}: {} curves for {} states",
                    r.channel.curve.len(),
                    n_states
                ),
            });
        }
        if r.channel.transition.len() != n_states {
            return Err(ModelError::BadStochasticMatrix {
                receiver: m,
                detail: format!(
                    "{} rows for {} states",
                    r.channel.transition.len(),
                    n_states
                ),
            });
        }
        for (i, row) in r.channel.transition.iter().enumerate() {
            if row.len() != n_states {
                return Err(ModelError::BadStochasticMatrix {
                    receiver: m,
                    detail: format!("row {i} has {} entries for {} states", row.len(), n_states),
                });
            }
            let mut sum = 0.0;
            for &p in row {
                if !(p.is_finite() && p >= 0.0) {
                    return Err(ModelError::BadStochasticMatrix {
                        receiver: m,
                        detail: format!("row {i} has negative or non-finite entry {p}"),
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > tol.max(1e-12 * n_states as f64) {
                return Err(ModelError::BadStochasticMatrix {
                    receiver: m,
                    detail: format!("row {i} sums to {sum}"),
                });
            }
        }
        let mut iid = true;
        for row in &r.channel.transition[1..] {
            for (a, b) in row.iter().zip(&r.channel.transition[0]) {
                if (a - b).abs() >= tol {
                    iid = false;
                }
            }
        }
        let mut curves = Vec::with_capacity(n_states);
        for (s, c) in r.channel.curve.iter().enumerate() {
            let eff = EffectiveCurve::new(c, spec.peak_power).map_err(|detail| {
                ModelError::NonConvexCurve {
                    receiver: m,
                    state: s,
                    detail,
                }
            })?;
            curves.push(eff);
        }
        let c_min = curves
            .iter()
            .map(|c| c.base_slope())
            .fold(f64::INFINITY, f64::min);
        let c_max = curves
            .iter()
            .flat_map(|c| c.slopes().iter().copied())
            .fold(0.0_f64, f64::max);
        receivers.push(ValidatedReceiver {
            states: r.channel.states.clone(),
            transition: r.channel.transition.clone(),
            curves,
            iid,
            demand: r.demand,
            holding: r.holding.clone(),
            initial_level: r.initial_level,
            c_min,
            c_max,
        });
    }

    // Even the worst joint channel realization must cover one slot's demand
    // for every receiver within the shared budget; this keeps the action set
    // nonempty at every state.
    let mut worst_total = 0.0;
    for (m, r) in receivers.iter().enumerate() {
        let mut worst = 0.0_f64;
        for (s, curve) in r.curves.iter().enumerate() {
            if curve.z_max() + 1e-12 < r.demand {
                return Err(ModelError::InfeasiblePower {
                    detail: format!(
                        "receiver {m} state {s}: max transmission {} < demand {}",
                        curve.z_max(),
                        r.demand
                    ),
                });
            }
            worst = worst.max(curve.power_of(r.demand).expect("demand <= z_max"));
        }
        worst_total += worst;
    }
    if worst_total > spec.peak_power + spec.peak_power * 1e-12 + 1e-12 {
        return Err(ModelError::InfeasiblePower {
            detail: format!(
                "worst-case joint demand power {worst_total} exceeds peak {}",
                spec.peak_power
            ),
        });
    }

    Ok(ValidatedSpec {
        spec: spec.clone(),
        receivers,
    })
}
