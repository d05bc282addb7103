//! Monte Carlo policy evaluation with reproducible, order-independent
//! randomness, plus an exhaustive path-expectation oracle for small channel
//! trees.
//!
//! Randomness comes from a counter-based generator: every uniform draw is a
//! pure SplitMix64 hash of `(seed, episode, slot, stream)`, so results do not
//! depend on the order episodes are executed in, and identical seeds
//! reproduce identical trajectories byte for byte.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::ValidatedSpec;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bad initial states: {0}")]
    BadInitialStates(String),
    #[error("{paths} channel paths exceed the exhaustive-enumeration cap {cap}")]
    TooManyPaths { paths: u128, cap: u128 },
    #[error("every episode aborted with an infeasible policy action")]
    AllEpisodesAborted,
}

/// A transmission policy: given slots remaining, buffer levels, and channel
/// states, return packets to transmit per receiver.
pub trait Policy: Sync {
    fn name(&self) -> &str;
    fn decide(&self, slots_remaining: usize, buffers: &[f64], states: &[usize]) -> Vec<f64>;
}

/// Counter-based uniform generator (SplitMix64 finalizer chain).
///
/// `uniform(e, t, m)` hashes the seed with the episode, slot, and stream
/// indices through four rounds of the SplitMix64 mixing function
/// (`z += 0x9E3779B97F4A7C15; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
/// z = (z ^ z>>27) * 0x94D049BB133111EB; z ^= z>>31`) and maps the top 53
/// bits into `[0, 1)`.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed }
    }

    #[inline]
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E3779B97F4A7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    #[inline]
    pub fn uniform(&self, episode: u64, slot: u64, stream: u64) -> f64 {
        let mut h = Self::mix(self.seed);
        h = Self::mix(h ^ Self::mix(episode));
        h = Self::mix(h ^ Self::mix(slot));
        h = Self::mix(h ^ Self::mix(stream));
        (h >> 11) as f64 * (1.0 / 9007199254740992.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slots_remaining: usize,
    pub states: Vec<usize>,
    pub buffers_before: Vec<f64>,
    pub transmitted: Vec<f64>,
    pub power_used: f64,
    pub holding_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub episode: u64,
    pub records: Vec<SlotRecord>,
    pub discounted_cost: f64,
    pub undiscounted_cost: f64,
}

impl Trajectory {
    /// CSV rows `slot,n,s...,x...,z...,power,holding`.
    pub fn to_csv(&self) -> String {
        let m = self
            .records
            .first()
            .map(|r| r.states.len())
            .unwrap_or_default();
        let mut header = String::from("slot,n");
        for i in 0..m {
            header.push_str(&format!(",s{i}"));
        }
        for i in 0..m {
            header.push_str(&format!(",x{i}"));
        }
        for i in 0..m {
            header.push_str(&format!(",z{i}"));
        }
        header.push_str(",power,holding\n");
        let mut out = header;
        for (t, r) in self.records.iter().enumerate() {
            out.push_str(&format!("{t},{}", r.slots_remaining));
            for s in &r.states {
                out.push_str(&format!(",{s}"));
            }
            for x in &r.buffers_before {
                out.push_str(&format!(",{x}"));
            }
            for z in &r.transmitted {
                out.push_str(&format!(",{z}"));
            }
            out.push_str(&format!(",{},{}\n", r.power_used, r.holding_cost));
        }
        out
    }
}

/// Aggregate episode statistics. `mean` etc. are over discounted episode
/// totals; `long_run_average` is undiscounted cost per slot across all
/// completed episodes.
#[derive(Debug, Clone)]
pub struct CostStats {
    pub episodes: u64,
    pub aborted: u64,
    pub mean: f64,
    pub std_error: f64,
    pub min: f64,
    pub max: f64,
    pub long_run_average: f64,
    pub total_slots: u64,
}

impl CostStats {
    pub fn to_csv(&self) -> String {
        format!(
            "episodes,aborted,mean,std_error,min,max,long_run_average,total_slots\n{},{},{},{},{},{},{},{}\n",
            self.episodes,
            self.aborted,
            self.mean,
            self.std_error,
            self.min,
            self.max,
            self.long_run_average,
            self.total_slots
        )
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub episodes: u64,
    pub slots: usize,
    pub seed: u64,
    /// Channel state per receiver at the first simulated slot.
    pub initial_states: Vec<usize>,
}

/// Order-independent sum: pairwise reduction controls float drift regardless
/// of episode count.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

struct EpisodeOutcome {
    discounted: f64,
    undiscounted: f64,
    aborted: bool,
}

fn check_initial_states(spec: &ValidatedSpec, states: &[usize]) -> Result<(), SimError> {
    if states.len() != spec.num_receivers() {
        return Err(SimError::BadInitialStates(format!(
            "{} states for {} receivers",
            states.len(),
            spec.num_receivers()
        )));
    }
    for (m, &s) in states.iter().enumerate() {
        if s >= spec.receiver(m).num_states() {
            return Err(SimError::BadInitialStates(format!(
                "receiver {m} has no state {s}"
            )));
        }
    }
    Ok(())
}

#[inline]
fn sample_next(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

fn run_episode(
    policy: &dyn Policy,
    spec: &ValidatedSpec,
    cfg: &SimConfig,
    episode: u64,
    mut record: Option<&mut Vec<SlotRecord>>,
) -> EpisodeOutcome {
    let rng = CounterRng::new(cfg.seed);
    let m_count = spec.num_receivers();
    let alpha = spec.alpha();
    let peak = spec.peak_power();
    let mut buffers: Vec<f64> = (0..m_count)
        .map(|m| spec.receiver(m).initial_level)
        .collect();
    let mut states = cfg.initial_states.clone();
    let mut discounted = 0.0;
    let mut undiscounted = 0.0;
    let mut weight = 1.0;

    for t in 0..cfg.slots {
        let n_remaining = cfg.slots - t;
        let z = policy.decide(n_remaining, &buffers, &states);
        let mut power = 0.0;
        let mut holding = 0.0;
        let mut feasible = z.len() == m_count;
        if feasible {
            for m in 0..m_count {
                let r = spec.receiver(m);
                let curve = &r.curves[states[m]];
                if z[m] < -1e-9
                    || buffers[m] + z[m] < r.demand - 1e-9
                    || z[m] > curve.z_max() + 1e-9
                {
                    feasible = false;
                    break;
                }
                power += curve.power_clamped(z[m].max(0.0));
                holding += r.holding.eval(buffers[m] + z[m] - r.demand);
            }
        }
        if feasible && power > peak + 1e-9 {
            feasible = false;
        }
        if !feasible {
            return EpisodeOutcome {
                discounted: f64::NAN,
                undiscounted: f64::NAN,
                aborted: true,
            };
        }
        if let Some(rec) = record.as_deref_mut() {
            rec.push(SlotRecord {
                slots_remaining: n_remaining,
                states: states.clone(),
                buffers_before: buffers.clone(),
                transmitted: z.clone(),
                power_used: power,
                holding_cost: holding,
            });
        }
        let stage = power + holding;
        discounted += weight * stage;
        undiscounted += stage;
        weight *= alpha;
        for m in 0..m_count {
            let r = spec.receiver(m);
            buffers[m] = (buffers[m] + z[m] - r.demand).max(0.0);
            let u = rng.uniform(episode, t as u64, m as u64);
            states[m] = sample_next(&r.transition[states[m]], u);
        }
    }
    EpisodeOutcome {
        discounted,
        undiscounted,
        aborted: false,
    }
}

/// Runs `cfg.episodes` independent episodes of `cfg.slots` slots each.
/// Infeasible policy proposals abort their episode; aborted episodes are
/// counted but excluded from the statistics.
pub fn simulate(policy: &dyn Policy, spec: &ValidatedSpec, cfg: &SimConfig) -> Result<CostStats, SimError> {
    check_initial_states(spec, &cfg.initial_states)?;
    let outcomes: Vec<EpisodeOutcome> = (0..cfg.episodes)
        .into_par_iter()
        .map(|e| run_episode(policy, spec, cfg, e, None))
        .collect();
    let aborted = outcomes.iter().filter(|o| o.aborted).count() as u64;
    let completed: Vec<&EpisodeOutcome> = outcomes.iter().filter(|o| !o.aborted).collect();
    if completed.is_empty() {
        return Err(SimError::AllEpisodesAborted);
    }
    let discounted: Vec<f64> = completed.iter().map(|o| o.discounted).collect();
    let undiscounted: Vec<f64> = completed.iter().map(|o| o.undiscounted).collect();
    let n = discounted.len() as f64;
    let mean = pairwise_sum(&discounted) / n;
    let sq: Vec<f64> = discounted.iter().map(|c| (c - mean) * (c - mean)).collect();
    let variance = if discounted.len() > 1 {
        pairwise_sum(&sq) / (n - 1.0)
    } else {
        0.0
    };
    let std_error = (variance / n).sqrt();
    let total_slots = completed.len() as u64 * cfg.slots as u64;
    Ok(CostStats {
        episodes: cfg.episodes,
        aborted,
        mean,
        std_error,
        min: discounted.iter().copied().fold(f64::INFINITY, f64::min),
        max: discounted.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        long_run_average: pairwise_sum(&undiscounted) / total_slots as f64,
        total_slots,
    })
}

/// Runs one recorded episode.
pub fn simulate_trajectory(
    policy: &dyn Policy,
    spec: &ValidatedSpec,
    cfg: &SimConfig,
    episode: u64,
) -> Result<Trajectory, SimError> {
    check_initial_states(spec, &cfg.initial_states)?;
    let mut records = Vec::with_capacity(cfg.slots);
    let outcome = run_episode(policy, spec, cfg, episode, Some(&mut records));
    if outcome.aborted {
        return Err(SimError::AllEpisodesAborted);
    }
    Ok(Trajectory {
        seed: cfg.seed,
        episode,
        records,
        discounted_cost: outcome.discounted,
        undiscounted_cost: outcome.undiscounted,
    })
}

/// Exact expected discounted cost of a policy by enumerating every channel
/// path. Only viable when `prod_m |S_m| ^ slots` is within `path_cap`.
pub fn exhaustive_value(
    policy: &dyn Policy,
    spec: &ValidatedSpec,
    slots: usize,
    initial_states: &[usize],
    path_cap: u128,
) -> Result<f64, SimError> {
    check_initial_states(spec, initial_states)?;
    let branching: u128 = (0..spec.num_receivers())
        .map(|m| spec.receiver(m).num_states() as u128)
        .product();
    let paths = branching.saturating_pow(slots as u32);
    if paths > path_cap {
        return Err(SimError::TooManyPaths { paths, cap: path_cap });
    }
    let buffers: Vec<f64> = (0..spec.num_receivers())
        .map(|m| spec.receiver(m).initial_level)
        .collect();
    Ok(expect_recurse(policy, spec, slots, &buffers, initial_states))
}

fn expect_recurse(
    policy: &dyn Policy,
    spec: &ValidatedSpec,
    n_remaining: usize,
    buffers: &[f64],
    states: &[usize],
) -> f64 {
    if n_remaining == 0 {
        return 0.0;
    }
    let m_count = spec.num_receivers();
    let z = policy.decide(n_remaining, buffers, states);
    let mut stage = 0.0;
    let mut next_buffers = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let r = spec.receiver(m);
        stage += r.curves[states[m]].power_clamped(z[m].max(0.0));
        stage += r.holding.eval(buffers[m] + z[m] - r.demand);
        next_buffers.push((buffers[m] + z[m] - r.demand).max(0.0));
    }
    let mut expectation = 0.0;
    let mut next_states = vec![0usize; m_count];
    enumerate_joint(spec, states, 0, 1.0, &mut next_states, &mut |prob, ns| {
        expectation += prob * expect_recurse(policy, spec, n_remaining - 1, &next_buffers, ns);
    });
    stage + spec.alpha() * expectation
}

fn enumerate_joint(
    spec: &ValidatedSpec,
    states: &[usize],
    m: usize,
    prob: f64,
    scratch: &mut Vec<usize>,
    visit: &mut impl FnMut(f64, &[usize]),
) {
    if m == spec.num_receivers() {
        visit(prob, scratch);
        return;
    }
    let row = &spec.receiver(m).transition[states[m]];
    for (s_next, &p) in row.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        scratch[m] = s_next;
        enumerate_joint(spec, states, m + 1, prob * p, scratch, visit);
    }
}

// ---------------------------------------------------------------------------
// Baseline policies
// ---------------------------------------------------------------------------

/// Transmit exactly what the next playout needs: `z = max(0, d - x)`.
#[derive(Debug, Clone)]
pub struct JustInTime {
    demands: Vec<f64>,
}

impl JustInTime {
    pub fn new(spec: &ValidatedSpec) -> Self {
        JustInTime {
            demands: (0..spec.num_receivers())
                .map(|m| spec.receiver(m).demand)
                .collect(),
        }
    }
}

impl Policy for JustInTime {
    fn name(&self) -> &str {
        "just-in-time"
    }

    fn decide(&self, _n: usize, buffers: &[f64], _states: &[usize]) -> Vec<f64> {
        self.demands
            .iter()
            .zip(buffers)
            .map(|(d, x)| (d - x).max(0.0))
            .collect()
    }
}

/// Single-receiver baseline: fill the whole remaining demand when the channel
/// is at its best per-packet cost, otherwise just-in-time.
#[derive(Debug, Clone)]
pub struct OpportunisticGreedy {
    demand: f64,
    best_cost: f64,
    costs: Vec<f64>,
    z_caps: Vec<f64>,
}

impl OpportunisticGreedy {
    pub fn new(spec: &ValidatedSpec) -> Self {
        let r = spec.receiver(0);
        OpportunisticGreedy {
            demand: r.demand,
            best_cost: r.c_min,
            costs: r.curves.iter().map(|c| c.base_slope()).collect(),
            z_caps: r.curves.iter().map(|c| c.z_max()).collect(),
        }
    }
}

impl Policy for OpportunisticGreedy {
    fn name(&self) -> &str {
        "opportunistic-greedy"
    }

    fn decide(&self, n: usize, buffers: &[f64], states: &[usize]) -> Vec<f64> {
        let (x, s) = (buffers[0], states[0]);
        let floor = (self.demand - x).max(0.0);
        if (self.costs[s] - self.best_cost).abs() < 1e-12 {
            let want = (n as f64 * self.demand - x).max(floor);
            vec![want.min(self.z_caps[s])]
        } else {
            vec![floor]
        }
    }
}
