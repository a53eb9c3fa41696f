//! Experiment orchestration: seeded replications over the scenario grids,
//! parallel execution, CSV emission and the invariant self-test suite.
//!
//! Determinism contract: a replication with index `i` uses seed
//! `base_seed + i` and derives four independent ChaCha streams from it, one
//! each for source-data generation, target covariates, policy randomness
//! (tie-breaks and price sampling) and reward noise. Replications therefore
//! commute: parallel and sequential execution produce identical traces, and
//! identical specs produce identical CSV bytes.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::env::{
    generate_source_dataset, sample_reward, sample_target_covariate, EnvError, ScenarioId,
};
use crate::oracle::{instantaneous_regret, RegretTrace};
use crate::policy::{BallId, PolicyConfig, PolicyError, PolicyState};
use crate::stats;

/// Steps between curve samples in `.curve.csv` outputs; the final step is
/// always included.
pub const CURVE_STRIDE: u64 = 100;

const STREAM_SOURCE: u64 = 0;
const STREAM_COVARIATE: u64 = 1;
const STREAM_POLICY: u64 = 2;
const STREAM_NOISE: u64 = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("invariant violated at step {step} (seed {seed}): {message}")]
    InvariantViolation { step: u64, seed: u64, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Which policy variant an experiment runs. `TargetOnly` is the same code
/// path with the source dataset forced empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Tldp,
    TargetOnly,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Tldp => "tldp",
            PolicyKind::TargetOnly => "target_only",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tldp" => Ok(PolicyKind::Tldp),
            "target_only" | "target-only" => Ok(PolicyKind::TargetOnly),
            other => Err(format!(
                "unknown policy '{other}' (expected tldp or target_only)"
            )),
        }
    }
}

/// One experiment: a scenario, a policy variant, the data sizes, the shift
/// and exploration parameters, the index constants and the replication plan.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: ScenarioId,
    pub policy: PolicyKind,
    pub n_q: u64,
    pub n_p: u64,
    pub gamma: f64,
    pub kappa: f64,
    pub c_index: f64,
    pub c_radius: f64,
    pub min_radius_override: Option<f64>,
    pub replications: u32,
    pub base_seed: u64,
}

impl ExperimentSpec {
    /// Stock parameters: TLDP with `n_P = 2 n_Q` at the grid midpoints
    /// (`gamma = 1`, `kappa = 0.6`) and the standard constants.
    pub fn defaults(scenario: ScenarioId) -> Self {
        Self {
            scenario,
            policy: PolicyKind::Tldp,
            n_q: 10_000,
            n_p: 20_000,
            gamma: 1.0,
            kappa: 0.6,
            c_index: 1.0,
            c_radius: 0.25,
            min_radius_override: None,
            replications: 20,
            base_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.replications < 1 {
            return Err(HarnessError::InvalidSpec("replications must be >= 1".into()));
        }
        self.policy_config()
            .validate()
            .map_err(|e| HarnessError::InvalidSpec(e.to_string()))
    }

    /// The source size actually used: the target-only variant ignores `n_p`.
    pub fn effective_n_p(&self) -> u64 {
        match self.policy {
            PolicyKind::Tldp => self.n_p,
            PolicyKind::TargetOnly => 0,
        }
    }

    pub fn policy_config(&self) -> PolicyConfig {
        PolicyConfig {
            d: self.scenario.d(),
            n_q: self.n_q,
            n_p: self.effective_n_p(),
            kappa: self.kappa,
            gamma: self.gamma,
            c_index: self.c_index,
            c_radius: self.c_radius,
            min_radius_override: self.min_radius_override,
        }
    }

    /// Compact label used in trace metadata and log lines.
    pub fn config_id(&self) -> String {
        format!(
            "{}-{}-nq{}-np{}-g{}-k{}-ci{}-cr{}",
            self.scenario,
            self.policy,
            self.n_q,
            self.effective_n_p(),
            self.gamma,
            self.kappa,
            self.c_index,
            self.c_radius
        )
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Everything an inspector may look at after one completed step.
pub struct StepRecord<'a> {
    pub t: u64,
    pub x: &'a [f64],
    pub chosen: BallId,
    pub price: f64,
    pub regret: f64,
    pub y: f64,
    /// Observations so far, including this one.
    pub observations: u64,
    /// Sum of observed revenues so far, including this one.
    pub revenue_sum: f64,
}

/// Step-by-step observer for instrumented episodes (the self-test suite).
pub trait EpisodeInspector {
    fn after_step(&mut self, state: &PolicyState, step: &StepRecord<'_>) -> Result<(), String>;
}

/// Runs one episode: generates the source dataset, initialises the policy
/// and loops observe-covariate / select-price / measure-regret / observe.
/// Fully deterministic given `(spec, seed)`.
pub fn run_episode(spec: &ExperimentSpec, seed: u64) -> Result<RegretTrace, HarnessError> {
    run_episode_inspected(spec, seed, None)
}

/// [`run_episode`] with an optional inspector called after every step.
pub fn run_episode_inspected(
    spec: &ExperimentSpec,
    seed: u64,
    mut inspector: Option<&mut dyn EpisodeInspector>,
) -> Result<RegretTrace, HarnessError> {
    spec.validate()?;
    let model = spec.scenario.reward_model();
    let noise = spec.scenario.noise();
    let d = spec.scenario.d();

    let src = generate_source_dataset(
        spec.effective_n_p(),
        &spec.scenario.source_config(spec.gamma, spec.kappa),
        &model,
        &noise,
        &mut stream(seed, STREAM_SOURCE),
    )?;
    let mut state = PolicyState::new(spec.policy_config(), &src)?;

    let mut covariate_rng = stream(seed, STREAM_COVARIATE);
    let mut policy_rng = stream(seed, STREAM_POLICY);
    let mut noise_rng = stream(seed, STREAM_NOISE);

    let mut trace = RegretTrace::new(seed, spec.config_id());
    let mut revenue_sum = 0.0;
    for t in 1..=spec.n_q {
        let x = sample_target_covariate(d, &mut covariate_rng);
        let (price, chosen) = state.select_price(&x, &src, &mut policy_rng)?;
        let regret = instantaneous_regret(&model, &x, price);
        let y = sample_reward(&model, &noise, &x, price, &mut noise_rng)?;
        state.observe(chosen, y)?;
        trace.push(regret);
        revenue_sum += y;
        if let Some(ins) = inspector.as_deref_mut() {
            let record = StepRecord {
                t,
                x: &x,
                chosen,
                price,
                regret,
                y,
                observations: t,
                revenue_sum,
            };
            ins.after_step(&state, &record)
                .map_err(|message| HarnessError::InvariantViolation {
                    step: t,
                    seed,
                    message,
                })?;
        }
    }
    Ok(trace)
}

/// Aggregated outcome of one spec: per-replication final regrets, their mean
/// and standard deviation, and the mean cumulative-regret curve sampled every
/// [`CURVE_STRIDE`] steps.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub spec: ExperimentSpec,
    pub final_regrets: Vec<f64>,
    pub mean_regret: f64,
    pub sd_regret: f64,
    pub curve: Vec<(u64, f64)>,
}

/// Runs all replications of a spec (in parallel; seeding is per-replication,
/// so execution order cannot matter) and aggregates.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunResult, HarnessError> {
    spec.validate()?;
    let traces: Vec<RegretTrace> = (0..spec.replications)
        .into_par_iter()
        .map(|i| run_episode(spec, spec.base_seed + i as u64))
        .collect::<Result<_, _>>()?;

    let final_regrets: Vec<f64> = traces.iter().map(|t| t.final_cumulative()).collect();
    let mean_regret = stats::mean(&final_regrets);
    let sd_regret = stats::sample_sd(&final_regrets);

    let mut ts: Vec<u64> = (1..=spec.n_q / CURVE_STRIDE).map(|k| k * CURVE_STRIDE).collect();
    if ts.last() != Some(&spec.n_q) {
        ts.push(spec.n_q);
    }
    let curve = ts
        .into_iter()
        .map(|t| {
            let m = traces
                .iter()
                .map(|tr| tr.cumulative[(t - 1) as usize])
                .sum::<f64>()
                / traces.len() as f64;
            (t, m)
        })
        .collect();

    Ok(RunResult {
        spec: spec.clone(),
        final_regrets,
        mean_regret,
        sd_regret,
        curve,
    })
}

pub const SUMMARY_HEADER: &str =
    "scenario,policy,n_Q,n_P,gamma,kappa,C_I,C_r,replications,mean_regret,sd_regret";

fn summary_row(result: &RunResult) -> String {
    let s = &result.spec;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        s.scenario,
        s.policy,
        s.n_q,
        s.effective_n_p(),
        s.gamma,
        s.kappa,
        s.c_index,
        s.c_radius,
        s.replications,
        result.mean_regret,
        result.sd_regret
    )
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes one summary row per result.
pub fn write_summary_csv(results: &[RunResult], path: &Path) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    writeln!(w, "{SUMMARY_HEADER}").map_err(io_err(path))?;
    for r in results {
        writeln!(w, "{}", summary_row(r)).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the downsampled mean cumulative-regret curve.
pub fn write_curve_csv(result: &RunResult, path: &Path) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    writeln!(w, "t,mean_cum_regret").map_err(io_err(path))?;
    for (t, m) in &result.curve {
        writeln!(w, "{t},{m}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Emits `<base>.summary.csv` and `<base>.curve.csv` for one result.
pub fn write_csv(result: &RunResult, out_base: &str) -> Result<(), HarnessError> {
    write_summary_csv(
        std::slice::from_ref(result),
        Path::new(&format!("{out_base}.summary.csv")),
    )?;
    write_curve_csv(result, Path::new(&format!("{out_base}.curve.csv")))
}

/// A sweepable experiment axis with its stock grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    SourceSize,
    TargetHorizon,
    Gamma,
    Kappa,
    IndexConstant,
    RadiusConstant,
}

impl SweepAxis {
    pub fn default_grid(&self) -> Vec<f64> {
        match self {
            SweepAxis::SourceSize => vec![0.0, 10_000.0, 20_000.0, 30_000.0, 40_000.0],
            SweepAxis::TargetHorizon => {
                vec![10_000.0, 20_000.0, 30_000.0, 40_000.0, 50_000.0]
            }
            SweepAxis::Gamma => vec![0.5, 1.0, 1.5, 2.0, 2.5],
            SweepAxis::Kappa => vec![0.2, 0.4, 0.6, 0.8, 1.0],
            SweepAxis::IndexConstant => vec![0.5, 1.0, 2.0],
            SweepAxis::RadiusConstant => vec![0.125, 0.25, 0.5],
        }
    }

    /// Applies one grid value to a spec. On the horizon axis the TLDP source
    /// size follows `n_P = 2 n_Q` unless the caller pinned `n_p` explicitly.
    pub fn apply(&self, spec: &mut ExperimentSpec, value: f64, n_p_pinned: bool) {
        match self {
            SweepAxis::SourceSize => spec.n_p = value as u64,
            SweepAxis::TargetHorizon => {
                spec.n_q = value as u64;
                if !n_p_pinned && spec.policy == PolicyKind::Tldp {
                    spec.n_p = 2 * spec.n_q;
                }
            }
            SweepAxis::Gamma => spec.gamma = value,
            SweepAxis::Kappa => spec.kappa = value,
            SweepAxis::IndexConstant => spec.c_index = value,
            SweepAxis::RadiusConstant => spec.c_radius = value,
        }
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "n-p" | "np" => Ok(SweepAxis::SourceSize),
            "n-q" | "nq" => Ok(SweepAxis::TargetHorizon),
            "gamma" => Ok(SweepAxis::Gamma),
            "kappa" => Ok(SweepAxis::Kappa),
            "c-i" | "ci" => Ok(SweepAxis::IndexConstant),
            "c-r" | "cr" => Ok(SweepAxis::RadiusConstant),
            other => Err(format!(
                "unknown sweep axis '{other}' (expected n-p, n-q, gamma, kappa, c-i or c-r)"
            )),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::SourceSize => "n-p",
            SweepAxis::TargetHorizon => "n-q",
            SweepAxis::Gamma => "gamma",
            SweepAxis::Kappa => "kappa",
            SweepAxis::IndexConstant => "c-i",
            SweepAxis::RadiusConstant => "c-r",
        })
    }
}

/// Runs a grid of specs produced by varying one axis of a base spec.
pub fn run_sweep(
    base: &ExperimentSpec,
    axis: SweepAxis,
    values: &[f64],
    n_p_pinned: bool,
) -> Result<Vec<RunResult>, HarnessError> {
    values
        .iter()
        .map(|&v| {
            let mut spec = base.clone();
            axis.apply(&mut spec, v, n_p_pinned);
            run_experiment(&spec)
        })
        .collect()
}

pub mod selftest {
    //! The invariant suite: instrumented episodes that check, while running,
    //! ball separation, count conservation, the dyadic radius ladder, the
    //! index self-bound and the domain-slice partition property, plus the
    //! pure-function monotonicity of the confidence width.

    use super::*;
    use crate::policy::{confidence_width, BallStats};

    #[derive(Debug, Clone)]
    pub struct SelfTestOptions {
        /// Seeded episodes per (scenario, source-size) combination.
        pub episodes: u32,
        pub n_q: u64,
        /// Source size of the transfer variant (a target-only variant with
        /// `n_p = 0` always runs too).
        pub n_p: u64,
        pub gamma: f64,
        pub kappa: f64,
        pub verbose: bool,
    }

    impl Default for SelfTestOptions {
        fn default() -> Self {
            Self {
                episodes: 50,
                n_q: 2000,
                n_p: 4000,
                gamma: 1.0,
                kappa: 0.6,
                verbose: false,
            }
        }
    }

    /// Outcome of one invariant class over the whole suite.
    #[derive(Debug, Clone)]
    pub struct CheckOutcome {
        pub name: &'static str,
        pub result: Result<(), String>,
    }

    #[derive(Debug, Clone)]
    pub struct SelfTestReport {
        pub checks: Vec<CheckOutcome>,
        pub episodes_run: u32,
    }

    impl SelfTestReport {
        pub fn all_passed(&self) -> bool {
            self.checks.iter().all(|c| c.result.is_ok())
        }

        /// One `name ... pass/FAIL` line per invariant class.
        pub fn render(&self) -> String {
            let mut out = String::new();
            for c in &self.checks {
                match &c.result {
                    Ok(()) => out.push_str(&format!("selftest: {:<28} pass\n", c.name)),
                    Err(e) => out.push_str(&format!("selftest: {:<28} FAIL — {e}\n", c.name)),
                }
            }
            out.push_str(&format!("selftest: episodes run            {}\n", self.episodes_run));
            out
        }
    }

    const CHECK_NAMES: [&str; 5] = [
        "ball separation",
        "count conservation",
        "radius ladder",
        "index self-bound",
        "partition property",
    ];

    struct InvariantInspector {
        check_rng: ChaCha8Rng,
        // First failure per check, indexed like CHECK_NAMES.
        failures: [Option<String>; 5],
    }

    impl InvariantInspector {
        fn new(seed: u64) -> Self {
            Self {
                check_rng: stream(seed, 7),
                failures: Default::default(),
            }
        }

        fn note(&mut self, idx: usize, result: Result<(), String>) {
            if let Err(e) = result {
                if self.failures[idx].is_none() {
                    self.failures[idx] = Some(e);
                }
            }
        }
    }

    impl EpisodeInspector for InvariantInspector {
        fn after_step(&mut self, state: &PolicyState, step: &StepRecord<'_>) -> Result<(), String> {
            self.note(1, state.verify_conservation(step.observations, step.revenue_sum));
            // Full-state scans are periodic; every individual partition is
            // additionally debug-asserted inside the policy.
            if step.t % 200 == 0 || step.t == 1 {
                self.note(0, state.verify_separation());
                self.note(2, state.verify_radius_ladder());
            }
            if step.t % 25 == 0 {
                self.note(3, state.verify_index_self_bound(step.x));
            }
            if step.t % 100 == 0 {
                let check = state.verify_partition_property(step.x, &mut self.check_rng, 1000);
                self.note(4, check);
            }
            // Collect rather than abort: the suite reports every class.
            Ok(())
        }
    }

    /// Runs the instrumented episodes over both scenario families with and
    /// without source data, plus the pure-function checks.
    pub fn run_invariant_suite(opts: &SelfTestOptions) -> SelfTestReport {
        let combos: Vec<(ScenarioId, u64)> = [ScenarioId::S1C1, ScenarioId::S2C1]
            .into_iter()
            .flat_map(|s| [(s, 0u64), (s, opts.n_p)])
            .collect();

        let episode_results: Vec<Result<[Option<String>; 5], String>> = combos
            .par_iter()
            .flat_map(|&(scenario, n_p)| {
                (0..opts.episodes).into_par_iter().map(move |i| {
                    let spec = ExperimentSpec {
                        scenario,
                        n_q: opts.n_q,
                        n_p,
                        gamma: opts.gamma,
                        kappa: opts.kappa,
                        replications: 1,
                        base_seed: i as u64,
                        ..ExperimentSpec::defaults(scenario)
                    };
                    let mut inspector = InvariantInspector::new(1000 + i as u64);
                    run_episode_inspected(&spec, i as u64, Some(&mut inspector))
                        .map(|_| inspector.failures)
                        .map_err(|e| e.to_string())
                })
            })
            .collect();

        let mut failures: [Option<String>; 5] = Default::default();
        let mut fatal: Option<String> = None;
        for r in episode_results {
            match r {
                Ok(f) => {
                    for (idx, e) in f.into_iter().enumerate() {
                        if let (Some(e), None) = (e, &failures[idx]) {
                            failures[idx] = Some(e);
                        }
                    }
                }
                Err(e) => fatal = fatal.or(Some(e)),
            }
        }

        let mut checks: Vec<CheckOutcome> = CHECK_NAMES
            .iter()
            .zip(failures)
            .map(|(&name, failure)| CheckOutcome {
                name,
                result: match (&fatal, failure) {
                    (Some(e), _) => Err(format!("episode aborted: {e}")),
                    (None, Some(e)) => Err(e),
                    (None, None) => Ok(()),
                },
            })
            .collect();

        // conf monotonicity is a property of the formula, not of a run.
        let mut conf_check: Result<(), String> = Ok(());
        let mut prev = f64::INFINITY;
        for n in 1..=100_000u64 {
            let w = confidence_width(&BallStats::with_counts(0, 0.0, n, 0.0), 9.2103403);
            if w >= prev {
                conf_check = Err(format!("confidence width not strictly decreasing at n = {n}"));
                break;
            }
            prev = w;
        }
        checks.push(CheckOutcome {
            name: "conf monotonicity",
            result: conf_check,
        });

        SelfTestReport {
            checks,
            episodes_run: opts.episodes * combos.len() as u32,
        }
    }
}
