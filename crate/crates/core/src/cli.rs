//! Command-line front end.
//!
//! Every subcommand takes its parameters from flags, from a JSON file given
//! with `--config`, or both; flags win. The summary is a JSON object written
//! to stdout or `--out`, with keys in sorted order so identical runs under
//! `--no-meta` produce identical bytes.
//!
//! Exit status: 0 on success, 1 when a verification fails (or a run fails for
//! a reason other than its input), 2 for an invalid configuration.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::Error;
use crate::exact::{self, BoundaryPolicy, SolveMethod, SolveOptions, SolverGrid};
use crate::martingale::{self, Suite};
use crate::montecarlo::{self, McOptions};
use crate::process::GapState;
use crate::rational::{self, Rational};
use crate::series::{self, MultiSeries, Sign};

#[derive(Debug, Parser)]
#[command(name = "ties", version, about = "Tie times of random m-team competitions")]
pub struct Cli {
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand. `out`, `samples` and `workers` may
/// also come from the config file.
#[derive(Clone, Debug, Default, Args)]
pub struct OutputArgs {
    /// JSON file with parameters for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the summary JSON here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Write bulk per-trial or per-state data as CSV.
    #[arg(long, global = true)]
    pub samples: Option<PathBuf>,
    /// Omit timing and version metadata from the summary.
    #[arg(long, global = true)]
    pub no_meta: bool,
    /// Monte Carlo worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate T and write one CSV row per trial.
    Simulate(SimulateArgs),
    /// Estimate E[T] with a median-of-means interval.
    Estimate(EstimateArgs),
    /// Estimate E[T_{i,i+1}] and compare with m a_i a_{i+1}.
    EstimatePair(PairArgs),
    /// Estimate E[T] as the gaps away from one pair grow.
    LimitCheck(LimitArgs),
    /// Survival curve and Hill tail index of T.
    Tail(TailArgs),
    /// E[A(T_n) B(T_n)] for three teams.
    StoppedProduct(StoppedProductArgs),
    /// Waiting times between rounds that move one pair of gaps.
    GapWaiting(GapWaitingArgs),
    /// Solve the expected-time recurrence on a box.
    Solve(SolveArgs),
    /// Lower and upper solves bracketing E[T].
    Bracket(BracketArgs),
    /// Truncated second moment of T at increasing radii.
    SecondMoment(SecondMomentArgs),
    /// Exact drift identities over a grid of states.
    Verify(VerifyArgs),
    /// Power-series tools for perfect time martingales.
    Series(SeriesArgs),
}

/// What a run produced: the summary and whether every check passed.
#[derive(Debug)]
pub struct Outcome {
    pub summary: Value,
    pub passed: bool,
}

/// Why a run stopped early.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
            CliError::Failed(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::AlreadyTied(_)
            | Error::TiedState(_)
            | Error::WinnerOutOfRange { .. }
            | Error::UnsupportedAnsatz(_)
            | Error::Parse(_) => CliError::Config(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn required<T>(v: Option<T>, field: &str) -> CliResult<T> {
    v.ok_or_else(|| config_err(format!("missing required field `{field}`")))
}

fn is_false(b: &bool) -> bool {
    !*b
}

// ---------------------------------------------------------------------------
// Parameter structs. Field names double as config-file keys.

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub gaps: Option<Vec<i64>>,
    /// Stop at T_{i,i+1} instead of T.
    #[arg(long)]
    pub pair: Option<usize>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u64>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateArgs {
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub gaps: Option<Vec<i64>>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub blocks: Option<usize>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairArgs {
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub gaps: Option<Vec<i64>>,
    #[arg(long)]
    pub pair: Option<usize>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub blocks: Option<usize>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitArgs {
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub pair: Option<usize>,
    /// The two gaps held fixed, as `a,b`.
    #[arg(long, value_delimiter = ',')]
    pub fixed: Option<Vec<i64>>,
    /// Values for every other gap.
    #[arg(long, value_delimiter = ',')]
    pub far: Option<Vec<i64>>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub blocks: Option<usize>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailArgs {
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub gaps: Option<Vec<i64>>,
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<u64>>,
    #[arg(long)]
    pub hill_fraction: Option<f64>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u64>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppedProductArgs {
    #[arg(long, value_delimiter = ',')]
    pub gaps: Option<Vec<i64>>,
    /// Checkpoints n for T_n = min(T, n).
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<u64>>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapWaitingArgs {
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub pair: Option<usize>,
    #[arg(long)]
    pub waits: Option<u64>,
    /// Group sizes N for the second moment of G_1 + .. + G_N.
    #[arg(long, value_delimiter = ',')]
    pub sums: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveArgs {
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub radius: Option<i64>,
    /// zero, upper_bound or closed_form.
    #[arg(long)]
    pub policy: Option<String>,
    /// State whose value is reported.
    #[arg(long, value_delimiter = ',')]
    pub gaps: Option<Vec<i64>>,
    /// Exact rational solve.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub exact: bool,
    #[arg(long)]
    pub tol: Option<f64>,
    /// gauss_seidel or banded_lu.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub omega: Option<f64>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BracketArgs {
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub gaps: Option<Vec<i64>>,
    #[arg(long)]
    pub radius: Option<i64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub method: Option<String>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondMomentArgs {
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub gaps: Option<Vec<i64>>,
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<i64>>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyArgs {
    /// pairs, min, phi, moments, H, time2 or all.
    #[arg(long)]
    pub suite: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    /// Each gap ranges over 1..=grid.
    #[arg(long)]
    pub grid: Option<i64>,
    /// Largest round index for time-dependent identities.
    #[arg(long)]
    pub n_max: Option<i64>,
}

#[derive(Debug, Args)]
pub struct SeriesArgs {
    #[command(subcommand)]
    pub command: SeriesCommand,
}

#[derive(Debug, Subcommand)]
pub enum SeriesCommand {
    /// Solve the polynomial ansatz exactly or certify it has no solution.
    Search(SearchArgs),
    /// Residual of a series read from a JSON file.
    Residual(ResidualArgs),
    /// Check that substitutions in different slots commute on random series.
    CommuteCheck(CommuteArgs),
}

impl SeriesCommand {
    fn name(&self) -> &'static str {
        match self {
            SeriesCommand::Search(_) => "search",
            SeriesCommand::Residual(_) => "residual",
            SeriesCommand::CommuteCheck(_) => "commute-check",
        }
    }
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchArgs {
    /// perfect (f in k variables) or gamma (G in u, v, w).
    #[arg(long)]
    pub form: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub degree: Option<u32>,
    /// Required constant term; 0 drops the constraint.
    #[arg(long)]
    pub normalize: Option<String>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualArgs {
    #[arg(long)]
    pub form: Option<String>,
    #[arg(long)]
    pub file: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub degree: Option<u32>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommuteArgs {
    #[arg(long)]
    pub vars: Option<usize>,
    #[arg(long)]
    pub degree: Option<u32>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

// ---------------------------------------------------------------------------
// Config merging.

/// Parsed `--config` file: the subcommand's keys plus the shared ones.
#[derive(Default)]
struct ConfigFile {
    keys: Map<String, Value>,
}

const SHARED_KEYS: [&str; 4] = ["out", "samples", "workers", "no_meta"];

impl ConfigFile {
    fn load(path: Option<&Path>, command: &str) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| config_err(format!("config {}: {e}", path.display())))?;
        let Value::Object(mut keys) = value else {
            return Err(config_err("config file must hold a JSON object"));
        };
        if let Some(c) = keys.remove("command") {
            let c = c.as_str().ok_or_else(|| config_err("field `command` must be a string"))?.to_string();
            if c != command && !command.starts_with(&format!("{c} ")) {
                return Err(config_err(format!(
                    "field `command` is {c:?} but the subcommand is {command:?}"
                )));
            }
        }
        Ok(Self { keys })
    }

    fn shared(&mut self, out: &mut OutputArgs) -> CliResult<()> {
        for key in SHARED_KEYS {
            let Some(v) = self.keys.remove(key) else { continue };
            let bad = || config_err(format!("field `{key}` has the wrong type"));
            match key {
                "out" if out.out.is_none() => out.out = Some(PathBuf::from(v.as_str().ok_or_else(bad)?)),
                "samples" if out.samples.is_none() => {
                    out.samples = Some(PathBuf::from(v.as_str().ok_or_else(bad)?))
                }
                "workers" if out.workers.is_none() => {
                    out.workers = Some(v.as_u64().ok_or_else(bad)? as usize)
                }
                "no_meta" => out.no_meta |= v.as_bool().ok_or_else(bad)?,
                _ => {}
            }
        }
        Ok(())
    }

    /// Overlays the flags that were given onto the file and parses the result.
    fn merge<T: Serialize + DeserializeOwned>(self, flags: &T) -> CliResult<T> {
        let mut keys = self.keys;
        let Value::Object(given) = serde_json::to_value(flags).expect("parameter structs serialize") else {
            unreachable!("parameter structs are objects");
        };
        for (k, v) in given {
            if !v.is_null() {
                keys.insert(k, v);
            }
        }
        serde_json::from_value(Value::Object(keys)).map_err(|e| config_err(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Helpers shared by the subcommands.

fn gap_state(m: Option<usize>, gaps: Option<Vec<i64>>) -> CliResult<GapState> {
    let gaps = required(gaps, "gaps")?;
    if let Some(m) = m {
        if gaps.len() + 1 != m {
            return Err(config_err(format!(
                "field `gaps` has {} entries but m = {m} needs {}",
                gaps.len(),
                m.saturating_sub(1)
            )));
        }
    }
    Ok(GapState::initial(gaps)?)
}

fn mc_options(
    trials: Option<u64>,
    default_trials: u64,
    seed: Option<u64>,
    horizon: Option<u64>,
    blocks: Option<usize>,
    workers: Option<usize>,
) -> CliResult<McOptions> {
    let mut opts = McOptions::new(trials.unwrap_or(default_trials), required(seed, "seed")?);
    if let Some(h) = horizon {
        opts = opts.with_horizon(h);
    }
    if let Some(b) = blocks {
        opts = opts.with_blocks(b);
    }
    if let Some(w) = workers {
        if w == 0 {
            return Err(config_err("field `workers` must be at least 1"));
        }
        opts = opts.with_workers(w);
    }
    opts.validate()?;
    Ok(opts)
}

fn parse_rational(s: &str, field: &str) -> CliResult<Rational> {
    rational::parse(s).map_err(|e| config_err(format!("field `{field}`: {e}")))
}

fn parse_policy(s: &str) -> CliResult<BoundaryPolicy> {
    match s {
        "zero" => Ok(BoundaryPolicy::Zero),
        "upper_bound" | "upper-bound" => Ok(BoundaryPolicy::UpperBound),
        "closed_form" | "closed-form" => Ok(BoundaryPolicy::ClosedForm),
        other => Err(config_err(format!(
            "field `policy` must be zero, upper_bound or closed_form, got {other:?}"
        ))),
    }
}

fn parse_method(s: Option<&str>) -> CliResult<SolveMethod> {
    match s.unwrap_or("gauss_seidel") {
        "gauss_seidel" | "gauss-seidel" => Ok(SolveMethod::GaussSeidel),
        "banded_lu" | "banded-lu" => Ok(SolveMethod::BandedLu),
        other => Err(config_err(format!(
            "field `method` must be gauss_seidel or banded_lu, got {other:?}"
        ))),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Failed(format!("cannot create {}: {e}", path.display())))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("summaries serialize")
}

fn series_terms(s: &MultiSeries) -> Value {
    to_value(&s.to_terms())
}

// ---------------------------------------------------------------------------
// Subcommands.

fn simulate(a: SimulateArgs, out: &OutputArgs) -> CliResult<Outcome> {
    let state = gap_state(a.m, a.gaps.clone())?;
    let opts = mc_options(a.trials, 1000, a.seed, a.horizon, None, out.workers)?;
    let outcomes = match a.pair {
        Some(p) => montecarlo::simulate_t_pair(&state, p, &opts)?,
        None => montecarlo::simulate_t(&state, &opts)?,
    };
    match &out.samples {
        Some(path) => montecarlo::write_samples_csv(create(path)?, &outcomes)?,
        None => montecarlo::write_samples_csv(io::stdout().lock(), &outcomes)?,
    }
    let absorbed = outcomes.iter().filter(|o| o.absorbed).count();
    Ok(Outcome {
        summary: json!({
            "params": to_value(&a),
            "trials": outcomes.len(),
            "absorbed": absorbed,
            "truncated": outcomes.len() - absorbed,
        }),
        passed: true,
    })
}

fn estimate(a: EstimateArgs, out: &OutputArgs) -> CliResult<Outcome> {
    let state = gap_state(a.m, a.gaps.clone())?;
    let opts = mc_options(a.trials, 100_000, a.seed, a.horizon, a.blocks, out.workers)?;
    let outcomes = montecarlo::simulate_t(&state, &opts)?;
    if let Some(path) = &out.samples {
        montecarlo::write_samples_csv(create(path)?, &outcomes)?;
    }
    let summary = montecarlo::summarize_t(&state, &outcomes, &opts);
    let g = state.gaps();
    let reference = match state.m() {
        3 => json!({"kind": "exact", "value": exact::closed_form_m3(g[0], g[1])}),
        m if m >= 4 => json!({"kind": "upper_bound", "value": montecarlo::min_adjacent_bound(g)}),
        _ => Value::Null,
    };
    Ok(Outcome {
        summary: json!({"params": to_value(&a), "estimate": to_value(&summary), "reference": reference}),
        passed: true,
    })
}

fn estimate_pair(a: PairArgs, out: &OutputArgs) -> CliResult<Outcome> {
    let state = gap_state(a.m, a.gaps.clone())?;
    let pair = required(a.pair, "pair")?;
    let opts = mc_options(a.trials, 100_000, a.seed, a.horizon, a.blocks, out.workers)?;
    if let Some(path) = &out.samples {
        let outcomes = montecarlo::simulate_t_pair(&state, pair, &opts)?;
        montecarlo::write_samples_csv(create(path)?, &outcomes)?;
    }
    let est = montecarlo::estimate_expected_t_pair(&state, pair, &opts)?;
    Ok(Outcome {
        summary: json!({"params": to_value(&a), "estimate": to_value(&est)}),
        passed: true,
    })
}

fn limit_check(a: LimitArgs, out: &OutputArgs) -> CliResult<Outcome> {
    let m = required(a.m, "m")?;
    let pair = required(a.pair, "pair")?;
    let fixed = required(a.fixed.clone(), "fixed")?;
    if fixed.len() != 2 {
        return Err(config_err("field `fixed` needs exactly two gaps"));
    }
    let far = required(a.far.clone(), "far")?;
    let opts = mc_options(a.trials, 100_000, a.seed, a.horizon, a.blocks, out.workers)?;
    let rows = montecarlo::check_limit_theorem(m, pair, (fixed[0], fixed[1]), &far, &opts)?;
    Ok(Outcome {
        summary: json!({"params": to_value(&a), "rows": to_value(&rows)}),
        passed: true,
    })
}

fn tail(a: TailArgs, out: &OutputArgs) -> CliResult<Outcome> {
    let state = gap_state(a.m, a.gaps.clone())?;
    let thresholds = a.thresholds.clone().unwrap_or_else(|| vec![10, 100, 1000, 10_000, 100_000]);
    let opts = mc_options(a.trials, 100_000, a.seed, a.horizon, None, out.workers)?;
    let curve = montecarlo::estimate_tail(&state, &thresholds, a.hill_fraction.unwrap_or(0.01), &opts)?;
    if let Some(path) = &out.samples {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["threshold", "survival"]).map_err(Error::from)?;
        for (t, s) in curve.thresholds.iter().zip(&curve.survival) {
            w.write_record([t.to_string(), s.to_string()]).map_err(Error::from)?;
        }
        w.flush()?;
    }
    Ok(Outcome {
        summary: json!({"params": to_value(&a), "tail": to_value(&curve)}),
        passed: true,
    })
}

fn stopped_product(a: StoppedProductArgs, out: &OutputArgs) -> CliResult<Outcome> {
    let state = gap_state(Some(3), a.gaps.clone())?;
    let n = a.n.clone().unwrap_or_else(|| vec![100, 1000, 10_000]);
    let opts = mc_options(a.trials, 100_000, a.seed, None, Some(1), out.workers)?;
    let points = montecarlo::estimate_stopped_product(&state, &n, &opts)?;
    Ok(Outcome {
        summary: json!({"params": to_value(&a), "points": to_value(&points)}),
        passed: true,
    })
}

fn gap_waiting(a: GapWaitingArgs, out: &OutputArgs) -> CliResult<Outcome> {
    let m = required(a.m, "m")?;
    let sums = a.sums.clone().unwrap_or_else(|| vec![1, 2, 5]);
    let report = montecarlo::estimate_gap_waiting(
        m,
        a.pair.unwrap_or(1),
        a.waits.unwrap_or(1_000_000),
        &sums,
        required(a.seed, "seed")?,
        out.workers,
    )?;
    Ok(Outcome {
        summary: json!({"params": to_value(&a), "report": to_value(&report)}),
        passed: true,
    })
}

fn solve(a: SolveArgs, out: &OutputArgs) -> CliResult<Outcome> {
    let m = required(a.m, "m")?;
    let radius = required(a.radius, "radius")?;
    let policy = parse_policy(a.policy.as_deref().unwrap_or("zero"))?;
    let grid = SolverGrid::new(m, radius)?;
    let mut opts = SolveOptions::default().with_method(parse_method(a.method.as_deref())?);
    if let Some(t) = a.tol {
        opts = opts.with_tol(t);
    }
    if let Some(w) = a.omega {
        opts = opts.with_omega(w);
    }
    let result = if a.exact {
        exact::solve_expected_t_exact(&grid, &policy)?
    } else {
        exact::solve_expected_t(&grid, &policy, &opts)?
    };
    let mut summary = json!({"params": to_value(&a), "solve": to_value(&result.meta(opts.tol))});
    if let Some(g) = &a.gaps {
        let value = result
            .value(g)
            .ok_or_else(|| config_err(format!("field `gaps` {g:?} lies outside the grid")))?;
        summary["value"] = json!(value);
        if let Some(q) = result.exact_value(g) {
            summary["exact_value"] = json!(rational::to_string(q));
        }
    }
    if let Some(path) = &out.samples {
        let mut w = csv::Writer::from_writer(create(path)?);
        let mut header: Vec<String> = (1..m).map(|i| format!("a{i}")).collect();
        header.push("value".into());
        if result.exact.is_some() {
            header.push("exact".into());
        }
        w.write_record(&header).map_err(Error::from)?;
        for (i, v) in result.values.iter().enumerate() {
            let mut rec: Vec<String> = grid.state(i).iter().map(|x| x.to_string()).collect();
            rec.push(v.to_string());
            if let Some(ex) = &result.exact {
                rec.push(rational::to_string(&ex[i]));
            }
            w.write_record(&rec).map_err(Error::from)?;
        }
        w.flush()?;
    }
    Ok(Outcome { summary, passed: true })
}

fn bracket(a: BracketArgs, out: &OutputArgs) -> CliResult<Outcome> {
    let m = required(a.m, "m")?;
    let gaps = required(a.gaps.clone(), "gaps")?;
    let radius = required(a.radius, "radius")?;
    let mut opts = SolveOptions::default().with_method(parse_method(a.method.as_deref())?);
    if let Some(t) = a.tol {
        opts = opts.with_tol(t);
    }
    let grid = SolverGrid::new(m, radius)?;
    if !grid.contains(&gaps) {
        return Err(config_err(format!(
            "field `gaps` {gaps:?} must have {} entries in [1, {radius}]",
            m - 1
        )));
    }
    let grids = exact::bracket_grids(&grid, &opts)?;
    if let Some(path) = &out.samples {
        exact::write_bracket_csv(create(path)?, &grids)?;
    }
    let bracket = exact::Bracket {
        m,
        radius,
        lower: grids.lower.value(&gaps).expect("inside grid"),
        upper: grids.upper.value(&gaps).expect("inside grid"),
        gaps,
        lower_meta: grids.lower.meta(opts.tol),
        upper_meta: grids.upper.meta(opts.tol),
    };
    Ok(Outcome {
        summary: json!({"params": to_value(&a), "bracket": to_value(&bracket)}),
        passed: true,
    })
}

fn second_moment(a: SecondMomentArgs) -> CliResult<Outcome> {
    let m = a.m.unwrap_or(3);
    let gaps = a.gaps.clone().unwrap_or_else(|| vec![1; m.saturating_sub(1)]);
    let radii = a.radii.clone().unwrap_or_else(|| vec![50, 100, 200]);
    let rows = exact::second_moment_sequence(m, &gaps, &radii, a.tol.unwrap_or(1e-6))?;
    Ok(Outcome {
        summary: json!({"params": to_value(&a), "rows": to_value(&rows)}),
        passed: true,
    })
}

fn verify(a: VerifyArgs) -> CliResult<Outcome> {
    let suite_name = a.suite.clone().unwrap_or_else(|| "all".into());
    let suite: Suite = suite_name.parse().map_err(|e: Error| config_err(format!("field `suite`: {e}")))?;
    let m = required(a.m, "m")?;
    let grid = a.grid.unwrap_or(20);
    let reports = martingale::verify_suite(suite, m, grid, a.n_max.unwrap_or(10))?;
    let failures: Vec<Value> = reports.iter().flat_map(|r| r.failures.iter().map(to_value)).collect();
    let states: u64 = reports.iter().map(|r| r.checked).sum();
    let passed = martingale::total_failures(&reports) == 0;
    Ok(Outcome {
        summary: json!({
            "params": to_value(&a),
            "suite": suite_name,
            "m": m,
            "states_checked": states,
            "failures": failures,
            "reports": to_value(&reports),
        }),
        passed,
    })
}

fn series_form(form: Option<&str>) -> CliResult<&'static str> {
    match form.unwrap_or("perfect") {
        "perfect" => Ok("perfect"),
        "gamma" => Ok("gamma"),
        other => Err(config_err(format!("field `form` must be perfect or gamma, got {other:?}"))),
    }
}

fn series_search(a: SearchArgs) -> CliResult<Outcome> {
    let degree = a.degree.unwrap_or(6);
    let normalize = parse_rational(a.normalize.as_deref().unwrap_or("1"), "normalize")?;
    let result = match series_form(a.form.as_deref())? {
        "perfect" => series::solve_linear_family(required(a.k, "k")?, degree, Some(normalize))?,
        _ => {
            if a.k.is_some_and(|k| k != 3) {
                return Err(config_err("field `k` must be 3 for the gamma form"));
            }
            series::solve_gamma_family(degree, Some(normalize))?
        }
    };
    Ok(Outcome {
        summary: json!({"params": to_value(&a), "result": to_value(&result)}),
        passed: true,
    })
}

fn series_residual(a: ResidualArgs) -> CliResult<Outcome> {
    let form = series_form(a.form.as_deref())?;
    let path = required(a.file.clone(), "file")?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| config_err(format!("cannot read series file {}: {e}", path.display())))?;
    let f = MultiSeries::from_json(&text, None, None).map_err(|e| config_err(format!("series file: {e}")))?;
    let gamma = parse_rational(a.gamma.as_deref().unwrap_or("0"), "gamma")?;
    let degree = a.degree.unwrap_or(f.degree());
    let (residual, working) = match form {
        "perfect" => (series::residual_perfect(&f, &gamma, f.nvars(), degree)?, degree + 2),
        _ => (series::residual_gamma_form(&f, &gamma, degree)?, degree + 4),
    };
    let zero = residual.is_zero();
    Ok(Outcome {
        summary: json!({
            "params": to_value(&a),
            "vars": f.nvars(),
            "working_degree": working,
            "zero": zero,
            "residual": series_terms(&residual),
        }),
        passed: zero,
    })
}

fn series_commute(a: CommuteArgs) -> CliResult<Outcome> {
    let vars = a.vars.unwrap_or(3);
    if vars < 2 {
        return Err(config_err("field `vars` must be at least 2"));
    }
    let degree = a.degree.unwrap_or(8);
    let trials = a.trials.unwrap_or(100);
    let mut rng = ChaCha8Rng::seed_from_u64(required(a.seed, "seed")?);
    let mut draw = |n: u64| rng.next_u64() % n;
    let exps = MultiSeries::exponents_up_to(vars, degree);
    let mut failures = Vec::new();
    for t in 0..trials {
        let terms: Vec<(Vec<u32>, Rational)> = exps
            .iter()
            .map(|e| (e.clone(), rational::frac(draw(11) as i64 - 5, draw(4) as i64 + 1)))
            .collect();
        let s = MultiSeries::from_terms(vars, degree, terms);
        let k1 = draw(vars as u64) as usize + 1;
        let k2 = (k1 + draw(vars as u64 - 1) as usize) % vars + 1;
        let sign = |b| if b == 0 { Sign::Plus } else { Sign::Minus };
        let (s1, s2) = (sign(draw(2)), sign(draw(2)));
        if !series::check_commutativity(s1, s2, k1, k2, &s)? {
            failures.push(json!({"trial": t, "k1": k1, "k2": k2, "sign1": s1, "sign2": s2}));
        }
    }
    let passed = failures.is_empty();
    Ok(Outcome {
        summary: json!({"params": to_value(&a), "trials": trials, "failures": failures}),
        passed,
    })
}

fn command_name(c: &Command) -> String {
    match c {
        Command::Simulate(_) => "simulate".into(),
        Command::Estimate(_) => "estimate".into(),
        Command::EstimatePair(_) => "estimate-pair".into(),
        Command::LimitCheck(_) => "limit-check".into(),
        Command::Tail(_) => "tail".into(),
        Command::StoppedProduct(_) => "stopped-product".into(),
        Command::GapWaiting(_) => "gap-waiting".into(),
        Command::Solve(_) => "solve".into(),
        Command::Bracket(_) => "bracket".into(),
        Command::SecondMoment(_) => "second-moment".into(),
        Command::Verify(_) => "verify".into(),
        Command::Series(s) => format!("series {}", s.command.name()),
    }
}

/// Runs one command after merging the config file under the flags.
pub fn run(cli: Cli) -> CliResult<(Outcome, OutputArgs)> {
    let name = command_name(&cli.command);
    let mut output = cli.output;
    let mut file = ConfigFile::load(output.config.as_deref(), &name)?;
    file.shared(&mut output)?;
    let out = &output;
    let started = Instant::now();
    let mut outcome = match cli.command {
        Command::Simulate(a) => simulate(file.merge(&a)?, out)?,
        Command::Estimate(a) => estimate(file.merge(&a)?, out)?,
        Command::EstimatePair(a) => estimate_pair(file.merge(&a)?, out)?,
        Command::LimitCheck(a) => limit_check(file.merge(&a)?, out)?,
        Command::Tail(a) => tail(file.merge(&a)?, out)?,
        Command::StoppedProduct(a) => stopped_product(file.merge(&a)?, out)?,
        Command::GapWaiting(a) => gap_waiting(file.merge(&a)?, out)?,
        Command::Solve(a) => solve(file.merge(&a)?, out)?,
        Command::Bracket(a) => bracket(file.merge(&a)?, out)?,
        Command::SecondMoment(a) => second_moment(file.merge(&a)?)?,
        Command::Verify(a) => verify(file.merge(&a)?)?,
        Command::Series(s) => match s.command {
            SeriesCommand::Search(a) => series_search(file.merge(&a)?)?,
            SeriesCommand::Residual(a) => series_residual(file.merge(&a)?)?,
            SeriesCommand::CommuteCheck(a) => series_commute(file.merge(&a)?)?,
        },
    };
    outcome.summary["command"] = json!(name);
    outcome.summary["passed"] = json!(outcome.passed);
    if !output.no_meta {
        let unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        outcome.summary["meta"] = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "started_unix": unix,
            "elapsed_seconds": started.elapsed().as_secs_f64(),
        });
    }
    Ok((outcome, output))
}

/// Writes the summary, returning the process exit status.
pub fn main_with(cli: Cli) -> i32 {
    let simulate_to_stdout = matches!(cli.command, Command::Simulate(_)) && cli.output.samples.is_none();
    match run(cli) {
        Ok((outcome, output)) => {
            let text = serde_json::to_string_pretty(&outcome.summary).expect("summaries serialize") + "\n";
            let written = match &output.out {
                Some(path) => std::fs::write(path, text),
                // The CSV already went to stdout.
                None if simulate_to_stdout => Ok(()),
                None => io::stdout().lock().write_all(text.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("error: cannot write summary: {e}");
                return 1;
            }
            if outcome.passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
