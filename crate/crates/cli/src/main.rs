//! Config-driven experiment runner: solve, verify, compare, and export.
//!
//! Reads a problem spec from JSON, runs one command, and writes CSV artifacts
//! named `<command>-<spec-hash>.csv` into the output directory, plus a run
//! manifest (JSON) carrying inputs, versions, seeds, and timings. CSV
//! artifacts are byte-identical across reruns with the same config and seed;
//! anything time-dependent lives only in the manifest.
//!
//! Exit codes: 0 success, 1 invariant violation, 2 config error, 3 resource
//! cap exceeded.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use underflow_core::{
    bounds, cache, check_convexity_1rx, check_convexity_2rx, check_supermodularity, dp,
    estimate_rho, horizon, sim, solve_1rx, solve_2rx, threshold, two_rx, BaseStockPolicy,
    BaseStockSimPolicy, DpError, Grid1D, Grid2D, HorizonError, JustInTime, ModelError,
    OpportunisticGreedy, ProblemSpec, SimConfig, SimError, SolveOptions, StructuredPolicy,
    ValidatedSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Finite-horizon dynamic program (one or two receivers).
    SolveFinite,
    /// Threshold tables and critical numbers (single receiver).
    Thresholds,
    /// Two-receiver region policy and region maps.
    TwoRx,
    /// Discounted value iteration to the fixed point.
    Infinite,
    /// Vanishing-discount average-cost estimate.
    AverageCost,
    /// Separable and priced-budget lower bounds.
    Bounds,
    /// Monte Carlo policy comparison.
    Simulate,
    /// Run every structural check; nonzero exit on any violation.
    VerifyAll,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SolveFinite => "solve-finite",
            Command::Thresholds => "thresholds",
            Command::TwoRx => "two-rx",
            Command::Infinite => "infinite",
            Command::AverageCost => "average-cost",
            Command::Bounds => "bounds",
            Command::Simulate => "simulate",
            Command::VerifyAll => "verify-all",
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "underflow",
    about = "Power-constrained transmission scheduling solvers with strict buffer underflow constraints"
)]
struct Args {
    /// Path to the problem spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// What to run.
    #[arg(long, value_enum)]
    cmd: Command,
    /// Buffer grid step in packets (default: demand / 10).
    #[arg(long)]
    grid_step: Option<f64>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for simulations.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Discount ladder for average-cost runs, e.g. 0.9,0.95,0.99,0.995.
    #[arg(long, value_delimiter = ',')]
    alpha_ladder: Option<Vec<f64>>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Invariant(String),
    Resource(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Invariant(_) => 1,
            CliError::Config(_) => 2,
            CliError::Resource(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violation: {m}"),
            CliError::Resource(m) => write!(f, "resource cap: {m}"),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DpError> for CliError {
    fn from(e: DpError) -> Self {
        match e {
            DpError::MemoryBudgetExceeded { .. } => CliError::Resource(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<HorizonError> for CliError {
    fn from(e: HorizonError) -> Self {
        match e {
            HorizonError::MaxIterExceeded { .. } | HorizonError::MaxIterExceeded2 { .. } => {
                CliError::Resource(e.to_string())
            }
            HorizonError::Monotonicity { .. } => CliError::Invariant(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::TooManyPaths { .. } => CliError::Resource(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<bounds::BoundsError> for CliError {
    fn from(e: bounds::BoundsError) -> Self {
        match e {
            bounds::BoundsError::Dp(d) => d.into(),
            bounds::BoundsError::Model(m) => m.into(),
            other => CliError::Resource(other.to_string()),
        }
    }
}

impl From<threshold::ThresholdError> for CliError {
    fn from(e: threshold::ThresholdError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("io: {e}"))
    }
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    spec_path: String,
    spec_hash: String,
    grid_step: f64,
    seed: u64,
    workers: usize,
    alpha_ladder: Vec<f64>,
    version: String,
    artifacts: Vec<String>,
    timings_ms: Vec<(String, u128)>,
    unix_time_secs: u64,
}

struct Runner {
    args: Args,
    spec: ProblemSpec,
    validated: ValidatedSpec,
    hash: String,
    grid_step: f64,
    alpha_ladder: Vec<f64>,
    artifacts: Vec<String>,
    timings: Vec<(String, u128)>,
}

fn env_f64(name: &str) -> Option<f64> {
    std::env::var(name).ok()?.parse().ok()
}

fn env_u64(name: &str) -> Option<u64> {
    std::env::var(name).ok()?.parse().ok()
}

fn main() {
    let code = match run() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("underflow: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn run() -> Result<(), CliError> {
    let mut args = Args::parse();

    // Environment overrides (UNDERFLOW_*) take precedence over flags.
    if let Some(w) = env_u64("UNDERFLOW_WORKERS") {
        args.workers = Some(w as usize);
    }
    if let Some(s) = env_u64("UNDERFLOW_SEED") {
        args.seed = s;
    }
    if let Some(g) = env_f64("UNDERFLOW_GRID_STEP") {
        args.grid_step = Some(g);
    }
    if let Ok(out) = std::env::var("UNDERFLOW_OUT") {
        args.out = PathBuf::from(out);
    }
    if let Ok(ladder) = std::env::var("UNDERFLOW_ALPHA_LADDER") {
        let parsed: Result<Vec<f64>, _> = ladder.split(',').map(str::parse).collect();
        args.alpha_ladder =
            Some(parsed.map_err(|e| CliError::Config(format!("UNDERFLOW_ALPHA_LADDER: {e}")))?);
    }

    if let Some(workers) = args.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    }

    let spec = ProblemSpec::from_path(&args.spec)?;
    let validated = spec.validate()?;
    let hash = format!("{:016x}", spec.content_hash());
    let grid_step = args
        .grid_step
        .unwrap_or_else(|| validated.receiver(0).demand / 10.0);
    let alpha_ladder = args
        .alpha_ladder
        .clone()
        .unwrap_or_else(|| vec![0.9, 0.95, 0.99, 0.995]);
    std::fs::create_dir_all(&args.out)?;

    let mut runner = Runner {
        args,
        spec,
        validated,
        hash,
        grid_step,
        alpha_ladder,
        artifacts: Vec::new(),
        timings: Vec::new(),
    };
    let started = Instant::now();
    let cmd = runner.args.cmd;
    let result = match cmd {
        Command::SolveFinite => runner.solve_finite(),
        Command::Thresholds => runner.thresholds(),
        Command::TwoRx => runner.two_rx(),
        Command::Infinite => runner.infinite(),
        Command::AverageCost => runner.average_cost(),
        Command::Bounds => runner.bounds(),
        Command::Simulate => runner.simulate(),
        Command::VerifyAll => runner.verify_all(),
    };
    runner
        .timings
        .push(("total".into(), started.elapsed().as_millis()));
    runner.write_manifest()?;
    result
}

impl Runner {
    fn artifact_path(&self, part: Option<&str>) -> PathBuf {
        let name = match part {
            None => format!("{}-{}.csv", self.args.cmd.name(), self.hash),
            Some(p) => format!("{}-{p}-{}.csv", self.args.cmd.name(), self.hash),
        };
        self.args.out.join(name)
    }

    fn write_artifact(&mut self, part: Option<&str>, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.artifact_path(part);
        std::fs::write(&path, contents)?;
        self.artifacts.push(path.display().to_string());
        println!("wrote {}", path.display());
        Ok(path)
    }

    fn write_manifest(&self) -> Result<(), CliError> {
        let manifest = Manifest {
            command: self.args.cmd.name().into(),
            spec_path: self.args.spec.display().to_string(),
            spec_hash: self.hash.clone(),
            grid_step: self.grid_step,
            seed: self.args.seed,
            workers: self.args.workers.unwrap_or(0),
            alpha_ladder: self.alpha_ladder.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
            artifacts: self.artifacts.clone(),
            timings_ms: self.timings.clone(),
            unix_time_secs: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let path = self
            .args
            .out
            .join(format!("{}-{}-manifest.json", self.args.cmd.name(), self.hash));
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&manifest).expect("manifest json"),
        )?;
        Ok(())
    }

    fn timed<T>(&mut self, label: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        self.timings
            .push((label.into(), start.elapsed().as_millis()));
        out
    }

    fn grid_1rx(&self) -> Result<Grid1D, CliError> {
        let r = self.validated.receiver(0);
        let reach = self.validated.horizon() as f64 * r.demand + r.initial_level + r.demand;
        Ok(Grid1D::new(self.grid_step, reach)?)
    }

    fn grid_1rx_infinite(&self) -> Result<Grid1D, CliError> {
        let r = self.validated.receiver(0);
        let reach = (12.0 * r.demand).max(self.validated.horizon() as f64 * r.demand);
        Ok(Grid1D::new(self.grid_step, reach)?)
    }

    fn grid_2rx(&self) -> Result<Grid2D, CliError> {
        let n = self.validated.horizon() as f64;
        let r1 = self.validated.receiver(0);
        let r2 = self.validated.receiver(1);
        Ok(Grid2D {
            axis1: Grid1D::new(self.grid_step, n * r1.demand + r1.initial_level + r1.demand)?,
            axis2: Grid1D::new(self.grid_step, n * r2.demand + r2.initial_level + r2.demand)?,
        })
    }

    fn initial_states(&self) -> Vec<usize> {
        vec![0; self.validated.num_receivers()]
    }

    fn solve_finite(&mut self) -> Result<(), CliError> {
        match self.validated.num_receivers() {
            1 => {
                let grid = self.grid_1rx()?;
                let vg = self.solve_1rx_cached(&grid)?;
                let csv = vg.to_csv();
                self.write_artifact(None, &csv)?;
            }
            2 => {
                let grid = self.grid_2rx()?;
                let vg = self.solve_2rx_cached(&grid)?;
                let csv = vg.to_csv();
                self.write_artifact(None, &csv)?;
            }
            m => {
                return Err(CliError::Config(format!(
                    "exact solves support 1 or 2 receivers, spec has {m}; use --cmd bounds"
                )))
            }
        }
        Ok(())
    }

    fn solve_1rx_cached(&mut self, grid: &Grid1D) -> Result<dp::ValueGrid1, CliError> {
        let key = self.spec.content_hash();
        if let Ok(dir) = std::env::var("UNDERFLOW_CACHE_DIR") {
            std::fs::create_dir_all(&dir)?;
            let path = Path::new(&dir).join(format!("dp1-{}.bin", self.hash));
            if let Some(vg) = cache::load_1rx(&path, key, grid) {
                println!("cache hit: {}", path.display());
                return Ok(vg);
            }
            let vg = self.timed("solve_1rx", |s| solve_1rx(&s.validated, grid))?;
            cache::save_1rx(&path, key, &vg)?;
            return Ok(vg);
        }
        Ok(self.timed("solve_1rx", |s| solve_1rx(&s.validated, grid))?)
    }

    fn solve_2rx_cached(&mut self, grid: &Grid2D) -> Result<dp::ValueGrid2, CliError> {
        let key = self.spec.content_hash();
        if let Ok(dir) = std::env::var("UNDERFLOW_CACHE_DIR") {
            std::fs::create_dir_all(&dir)?;
            let path = Path::new(&dir).join(format!("dp2-{}.bin", self.hash));
            if let Some(vg) = cache::load_2rx(&path, key, &self.validated, grid) {
                println!("cache hit: {}", path.display());
                return Ok(vg);
            }
            let vg = self.timed("solve_2rx", |s| {
                solve_2rx(&s.validated, grid, SolveOptions::default())
            })?;
            cache::save_2rx(&path, key, &vg)?;
            return Ok(vg);
        }
        Ok(self.timed("solve_2rx", |s| {
            solve_2rx(&s.validated, grid, SolveOptions::default())
        })?)
    }

    fn thresholds(&mut self) -> Result<(), CliError> {
        let table = threshold::compute_gamma_pwl(&self.validated)?;
        let r = self.validated.receiver(0);
        let criticals = threshold::criticals_from_gamma(&table, &r.curves, r.demand);
        let gamma_csv = table.to_csv();
        let criticals_csv = criticals.to_csv();
        self.write_artifact(None, &gamma_csv)?;
        self.write_artifact(Some("criticals"), &criticals_csv)?;
        Ok(())
    }

    fn two_rx(&mut self) -> Result<(), CliError> {
        if self.validated.num_receivers() != 2 {
            return Err(CliError::Config("two-rx needs exactly 2 receivers".into()));
        }
        let grid = self.grid_2rx()?;
        let vg = self.solve_2rx_cached(&grid)?;
        let vg = std::sync::Arc::new(vg);
        let policy = self.timed("region_policy", |_| two_rx::build_region_policy(vg.clone()));

        let mut map = String::from("n,s,x1,x2,label,y1,y2\n");
        for n in 1..=vg.horizon() {
            for js in 0..vg.num_joint_states() {
                for line in policy.region_map_csv(n, js).lines().skip(1) {
                    map.push_str(&format!("{n},{js},{line}\n"));
                }
            }
        }
        self.write_artifact(None, &map)?;

        let mut targets = String::from("n,s,b1,b2\n");
        for n in 1..=vg.horizon() {
            for js in 0..vg.num_joint_states() {
                let (b1, b2) = policy.target(n, js);
                targets.push_str(&format!("{n},{js},{b1},{b2}\n"));
            }
        }
        self.write_artifact(Some("targets"), &targets)?;
        Ok(())
    }

    fn infinite(&mut self) -> Result<(), CliError> {
        if self.validated.alpha() >= 1.0 {
            return Err(CliError::Config(
                "infinite-horizon solves need alpha < 1 in the spec".into(),
            ));
        }
        match self.validated.num_receivers() {
            1 => {
                let grid = self.grid_1rx_infinite()?;
                let sol = self.timed("value_iterate", |s| {
                    horizon::value_iterate_1rx(&s.validated, &grid, 1e-9, 1_000_000)
                })?;
                let mut csv = sol.trace_csv();
                csv.push_str("state,segment,b_inf\n");
                for (s, row) in sol.targets.iter().enumerate() {
                    for (k, b) in row.iter().enumerate() {
                        csv.push_str(&format!("{s},{k},{b}\n"));
                    }
                }
                self.write_artifact(None, &csv)?;
                println!(
                    "converged: {} iterations, residual {:.3e}, fixed-point bound {:.3e}",
                    sol.iterations,
                    sol.residual,
                    sol.fixed_point_bound()
                );
            }
            2 => {
                let grid = self.grid_2rx()?;
                let (sol, _policy) = self.timed("value_iterate", |s| {
                    horizon::value_iterate_2rx(&s.validated, &grid, 1e-7, 100_000)
                })?;
                let mut csv = String::from("iter,f1_drift\n");
                for (i, d) in sol.f1_drift.iter().enumerate() {
                    csv.push_str(&format!("{},{d}\n", i + 1));
                }
                csv.push_str("s,b1_inf,b2_inf\n");
                for (js, (b1, b2)) in sol.targets.iter().enumerate() {
                    csv.push_str(&format!("{js},{b1},{b2}\n"));
                }
                self.write_artifact(None, &csv)?;
                println!(
                    "converged: {} iterations, residual {:.3e}",
                    sol.iterations, sol.residual
                );
            }
            m => {
                return Err(CliError::Config(format!(
                    "infinite-horizon solves support 1 or 2 receivers, got {m}"
                )))
            }
        }
        Ok(())
    }

    fn average_cost(&mut self) -> Result<(), CliError> {
        if self.validated.num_receivers() != 1 {
            return Err(CliError::Config("average-cost runs need 1 receiver".into()));
        }
        let grid = self.grid_1rx_infinite()?;
        let ladder = self.alpha_ladder.clone();
        let seed = self.args.seed;
        let est = self.timed("estimate_rho", |s| {
            estimate_rho(&s.validated, &grid, &ladder, 1e-9, 3_000_000, 1_000_000, seed, 0)
        })?;
        let mut csv = est.to_csv();
        csv.push_str(&format!("sim_average,,{}\n", est.sim_average));
        csv.push_str("w_x,w_state,w\n");
        for (x, s, w) in &est.w_samples {
            csv.push_str(&format!("{x},{s},{w}\n"));
        }
        self.write_artifact(None, &csv)?;
        println!(
            "rho_star = {:.6}, simulated long-run average = {:.6} (fit residual {:.2e}, m refinement delta {:.2e})",
            est.rho_star, est.sim_average, est.fit_residual, est.m_refinement_delta
        );
        Ok(())
    }

    fn bounds(&mut self) -> Result<(), CliError> {
        let states = self.initial_states();
        let step = self.grid_step;
        let (mut sep, _) = self.timed("separable", |s| {
            bounds::separable_bound(&s.validated, step, &states)
        })?;
        let (mut lag, _) = self.timed("lagrangian", |s| {
            bounds::lagrangian_bound(&s.validated, step, &states, None)
        })?;
        // Attach gaps against the exact solve when it is affordable.
        if self.validated.num_receivers() == 2 {
            let grid = self.grid_2rx()?;
            let vg = self.solve_2rx_cached(&grid)?;
            let exact = vg.value(
                self.validated.horizon(),
                0,
                self.validated.receiver(0).initial_level,
                self.validated.receiver(1).initial_level,
            );
            sep = sep.with_gap(exact);
            lag = lag.with_gap(exact);
        } else if self.validated.num_receivers() == 1 {
            let grid = self.grid_1rx()?;
            let vg = self.solve_1rx_cached(&grid)?;
            let exact = vg.value(
                self.validated.horizon(),
                0,
                self.validated.receiver(0).initial_level,
            );
            sep = sep.with_gap(exact);
            lag = lag.with_gap(exact);
        }
        let mut csv = sep.to_csv();
        csv.push_str(&lag.to_csv());
        self.write_artifact(None, &csv)?;
        println!(
            "separable = {:.6}, priced-budget dual = {:.6}",
            sep.value, lag.value
        );
        Ok(())
    }

    fn simulate(&mut self) -> Result<(), CliError> {
        let episodes = env_u64("UNDERFLOW_EPISODES").unwrap_or(1000);
        let cfg = SimConfig {
            episodes,
            slots: self.validated.horizon(),
            seed: self.args.seed,
            initial_states: self.initial_states(),
        };
        let mut rows = String::from(
            "policy,episodes,aborted,mean,std_error,min,max,long_run_average,total_slots\n",
        );
        fn record(name: &str, stats: &sim::CostStats, rows: &mut String) {
            rows.push_str(&format!(
                "{name},{},{},{},{},{},{},{},{}\n",
                stats.episodes,
                stats.aborted,
                stats.mean,
                stats.std_error,
                stats.min,
                stats.max,
                stats.long_run_average,
                stats.total_slots
            ));
        }

        let jit = JustInTime::new(&self.validated);
        let stats = sim::simulate(&jit, &self.validated, &cfg)?;
        record("just-in-time", &stats, &mut rows);
        let trajectory = sim::simulate_trajectory(&jit, &self.validated, &cfg, 0)?;
        let trajectory_csv = trajectory.to_csv();
        self.write_artifact(Some("trajectory"), &trajectory_csv)?;

        match self.validated.num_receivers() {
            1 => {
                let og = OpportunisticGreedy::new(&self.validated);
                let stats = sim::simulate(&og, &self.validated, &cfg)?;
                record("opportunistic-greedy", &stats, &mut rows);
                match BaseStockPolicy::from_spec(&self.validated) {
                    Ok((_, policy)) => {
                        let p = BaseStockSimPolicy::new(policy);
                        let stats = sim::simulate(&p, &self.validated, &cfg)?;
                        record("base-stock", &stats, &mut rows);
                    }
                    Err(_) => {
                        let grid = self.grid_1rx()?;
                        let vg = self.solve_1rx_cached(&grid)?;
                        let greedy = dp::GreedyPolicy1::from_value_grid(&self.validated, &vg)?;
                        let stats = sim::simulate(&greedy, &self.validated, &cfg)?;
                        record("dp-greedy", &stats, &mut rows);
                    }
                }
            }
            2 => {
                let grid = self.grid_2rx()?;
                let vg = std::sync::Arc::new(self.solve_2rx_cached(&grid)?);
                let policy = two_rx::build_region_policy(vg);
                let structured = StructuredPolicy::new(std::sync::Arc::new(policy));
                let stats = sim::simulate(&structured, &self.validated, &cfg)?;
                record("two-rx-structured", &stats, &mut rows);
            }
            _ => {
                let states = self.initial_states();
                let (_, tables) =
                    bounds::lagrangian_bound(&self.validated, self.grid_step, &states, None)?;
                let greedy = bounds::greedy_feasible(&self.validated, &tables);
                let stats = sim::simulate(&greedy, &self.validated, &cfg)?;
                record("greedy-lower-bound", &stats, &mut rows);
            }
        }
        self.write_artifact(None, &rows)?;
        Ok(())
    }

    fn verify_all(&mut self) -> Result<(), CliError> {
        let mut lines = String::from("check,status,detail\n");
        let mut failures = 0usize;
        fn check(
            name: &str,
            ok: bool,
            detail: String,
            lines: &mut String,
            failures: &mut usize,
        ) {
            lines.push_str(&format!(
                "{name},{},{detail}\n",
                if ok { "pass" } else { "FAIL" }
            ));
            println!("{name}: {} ({detail})", if ok { "pass" } else { "FAIL" });
            if !ok {
                *failures += 1;
            }
        }

        match self.validated.num_receivers() {
            1 => {
                let grid = self.grid_1rx()?;
                let vg = solve_1rx(&self.validated, &grid)?;
                let conv = check_convexity_1rx(&vg);
                check(
                    "value-convexity",
                    conv.passed(),
                    format!(
                        "{} cells; {} violations",
                        conv.cells_checked,
                        conv.violations.len()
                    ),
                    &mut lines,
                    &mut failures,
                );
                let mut monotone = true;
                for n in 1..self.validated.horizon() {
                    for s in 0..self.validated.receiver(0).num_states() {
                        for i in 0..grid.num_nodes() {
                            if vg.value_node(n, s, i) > vg.value_node(n + 1, s, i) + 1e-12 {
                                monotone = false;
                            }
                        }
                    }
                }
                check(
                    "value-monotone-in-horizon",
                    monotone,
                    String::new(),
                    &mut lines,
                    &mut failures,
                );

                match BaseStockPolicy::from_spec(&self.validated) {
                    Ok((table, policy)) => {
                        let criticals = policy.criticals();
                        let r = self.validated.receiver(0);
                        let mut rows_ok = true;
                        for n in 1..=self.validated.horizon() {
                            let mut prev = f64::INFINITY;
                            for j in 2..=n {
                                let gamma = table.gamma(n, j).finite().unwrap_or(f64::INFINITY);
                                if gamma > prev + 1e-12 {
                                    rows_ok = false;
                                }
                                prev = gamma;
                            }
                        }
                        check(
                            "threshold-rows-nonincreasing",
                            rows_ok,
                            String::new(),
                            &mut lines,
                            &mut failures,
                        );
                        let mut time_ok = true;
                        for s in 0..r.num_states() {
                            for n in 1..self.validated.horizon() {
                                for k in 0..criticals.num_segments(s) {
                                    if criticals.target(n, s, k)
                                        > criticals.target(n + 1, s, k) + 1e-12
                                    {
                                        time_ok = false;
                                    }
                                }
                            }
                        }
                        check(
                            "targets-monotone-in-time",
                            time_ok,
                            String::new(),
                            &mut lines,
                            &mut failures,
                        );
                        let mut policy_ok = true;
                        let mut worst: f64 = 0.0;
                        for s in 0..r.num_states() {
                            let closed =
                                threshold::policy_value(&self.validated, &policy, 0.0, s)
                                    .map_err(|e| CliError::Config(e.to_string()))?;
                            let oracle = vg.value(self.validated.horizon(), s, 0.0);
                            let rel = (closed - oracle).abs() / (1.0 + oracle.abs());
                            worst = worst.max(rel);
                            if rel > 1e-8 {
                                policy_ok = false;
                            }
                        }
                        check(
                            "threshold-policy-matches-oracle",
                            policy_ok,
                            format!("max relative gap {worst:.2e}"),
                            &mut lines,
                            &mut failures,
                        );
                    }
                    Err(e) => {
                        lines.push_str(&format!("threshold,skipped,{e}\n"));
                        println!("threshold checks skipped: {e}");
                    }
                }
                if self.validated.alpha() < 1.0 {
                    let grid_inf = self.grid_1rx_infinite()?;
                    let sol =
                        horizon::value_iterate_1rx(&self.validated, &grid_inf, 1e-8, 500_000)?;
                    check(
                        "value-iteration-converges",
                        sol.converged,
                        format!(
                            "residual {:.2e} in {} iterations",
                            sol.residual, sol.iterations
                        ),
                        &mut lines,
                        &mut failures,
                    );
                    let (j, _) = horizon::evaluate_stationary_1rx(
                        &self.validated,
                        &grid_inf,
                        &sol.zstar,
                        1e-11,
                        1_000_000,
                    )?;
                    let mut gap: f64 = 0.0;
                    for s in 0..self.validated.receiver(0).num_states() {
                        for i in 0..grid_inf.num_nodes() {
                            gap = gap.max((j[s][i] - sol.v[s][i]).abs());
                        }
                    }
                    check(
                        "greedy-policy-fixed-point",
                        gap <= 1e-7,
                        format!("gap {gap:.2e}"),
                        &mut lines,
                        &mut failures,
                    );
                }
            }
            2 => {
                let grid = self.grid_2rx()?;
                let vg = self.solve_2rx_cached(&grid)?;
                let conv = check_convexity_2rx(&vg);
                check(
                    "value-convexity",
                    conv.passed(),
                    format!(
                        "{} cells; {} violations",
                        conv.cells_checked,
                        conv.violations.len()
                    ),
                    &mut lines,
                    &mut failures,
                );
                let supermod = check_supermodularity(&vg);
                check(
                    "value-supermodularity",
                    supermod.passed(),
                    format!(
                        "{} cells; {} violations",
                        supermod.cells_checked,
                        supermod.violations.len()
                    ),
                    &mut lines,
                    &mut failures,
                );
                let vg = std::sync::Arc::new(vg);
                let policy = two_rx::build_region_policy(vg.clone());
                let mut structured_ok = true;
                let mut worst: f64 = 0.0;
                for n in 1..=vg.horizon() {
                    for js in 0..vg.num_joint_states() {
                        for i in (0..grid.axis1.num_nodes()).step_by(2) {
                            for j in (0..grid.axis2.num_nodes()).step_by(2) {
                                let x = (grid.axis1.node(i), grid.axis2.node(j));
                                let (y1, y2) = policy.structured_action(n, x, js);
                                let g_structured = vg.g_at(n, js, y1, y2);
                                let (_, _, g_oracle) = vg.best_action(n, js, x.0, x.1);
                                let rel = (g_structured - g_oracle) / (1.0 + g_oracle.abs());
                                worst = worst.max(rel);
                                if rel > 1e-6 {
                                    structured_ok = false;
                                }
                            }
                        }
                    }
                }
                check(
                    "structured-action-matches-oracle",
                    structured_ok,
                    format!("max relative excess {worst:.2e}"),
                    &mut lines,
                    &mut failures,
                );
            }
            m => {
                return Err(CliError::Config(format!(
                    "verify-all supports 1 or 2 receivers, got {m}"
                )))
            }
        }

        self.write_artifact(None, &lines)?;
        if failures > 0 {
            return Err(CliError::Invariant(format!("{failures} checks failed")));
        }
        Ok(())
    }
}
