//! Monte Carlo estimators for tie times.
//!
//! `T` has a finite mean but infinite variance for three teams, so intervals are
//! built by median-of-means over consecutive trial blocks instead of a CLT
//! standard error. Trials are indexed, every trial owns its own winner stream,
//! and per-trial results are collected in index order, so every estimate is a
//! deterministic function of `(seed, trials, horizon, blocks)` regardless of the
//! worker count.

pub mod stats;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{self, GapState, Walker, DEFAULT_HORIZON};
use crate::rng::WinnerStream;
use stats::{hill_estimate, median_of_means};

/// Confidence level of every median-of-means interval.
pub const CONFIDENCE: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McOptions {
    pub trials: u64,
    pub seed: u64,
    pub horizon: u64,
    pub blocks: usize,
    /// Worker threads; `None` uses the global rayon pool. Results do not depend on it.
    pub workers: Option<usize>,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            trials: 100_000,
            seed: 0,
            horizon: DEFAULT_HORIZON,
            blocks: 20,
            workers: None,
        }
    }
}

impl McOptions {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            seed,
            ..Self::default()
        }
    }

    pub fn with_horizon(mut self, horizon: u64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_blocks(mut self, blocks: usize) -> Self {
        self.blocks = blocks;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.trials < self.blocks as u64 {
            return Err(Error::invalid(format!(
                "need trials >= blocks >= 1 (trials {}, blocks {})",
                self.trials, self.blocks
            )));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        Ok(())
    }
}

/// Sample mean of a stopping time with its median-of-means interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub trials: u64,
    pub truncated: u64,
    pub mean: f64,
    pub median_of_means: f64,
    /// Block-rank interval widened, if needed, to contain `mean`.
    pub mom_ci_low: f64,
    pub mom_ci_high: f64,
    /// Block-rank interval for the median of block means, unwidened.
    pub mom_rank_low: f64,
    pub mom_rank_high: f64,
    pub block_count: usize,
    pub horizon: u64,
    /// Set when some trials hit the horizon; those count at the horizon value,
    /// so the mean is then a lower estimate.
    pub biased_low: bool,
    pub warnings: Vec<String>,
}

impl EstimateSummary {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.mom_ci_high - self.mom_ci_low)
    }

    /// `mean <= bound + slack * half_width`.
    pub fn respects_upper_bound(&self, bound: f64, slack: f64) -> bool {
        self.mean <= bound + slack * self.half_width()
    }

    /// `|mean - target| <= slack * half_width`.
    pub fn agrees_with(&self, target: f64, slack: f64) -> bool {
        (self.mean - target).abs() <= slack * self.half_width()
    }

    fn from_steps(steps: &[u64], truncated: u64, blocks: usize, horizon: u64) -> Self {
        let total: u128 = steps.iter().map(|&s| s as u128).sum();
        let mean = total as f64 / steps.len() as f64;
        let values: Vec<f64> = steps.iter().map(|&s| s as f64).collect();
        let mom = median_of_means(&values, blocks, CONFIDENCE);
        // The reported interval always contains the sample mean.
        Self {
            trials: steps.len() as u64,
            truncated,
            mean,
            median_of_means: mom.median,
            mom_ci_low: mom.low.min(mean),
            mom_ci_high: mom.high.max(mean),
            mom_rank_low: mom.low,
            mom_rank_high: mom.high,
            block_count: blocks,
            horizon,
            biased_low: truncated > 0,
            warnings: Vec::new(),
        }
    }
}

/// One simulated trial reduced to what the estimators need.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialOutcome {
    pub steps: u64,
    pub absorbed: bool,
    pub hit_index: Option<usize>,
}

pub(crate) fn run_indexed<T, F>(trials: u64, workers: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let job = || (0..trials).into_par_iter().map(&f).collect::<Vec<T>>();
    match workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(job),
            Err(_) => job(),
        },
        None => job(),
    }
}

/// Runs `opts.trials` independent copies of `T` from `state`, in trial order.
pub fn simulate_t(state: &GapState, opts: &McOptions) -> Result<Vec<TrialOutcome>> {
    process::check_sampling(state, opts.horizon)?;
    Ok(run_indexed(opts.trials, opts.workers, |t| {
        let mut w = Walker::new(state, opts.seed, t);
        let hit = w.run_until_tied(opts.horizon);
        TrialOutcome {
            steps: w.steps(),
            absorbed: hit.is_some(),
            hit_index: hit,
        }
    }))
}

/// Like [`simulate_t`] for the pair stopping time `T_{i,i+1}`.
pub fn simulate_t_pair(state: &GapState, pair: usize, opts: &McOptions) -> Result<Vec<TrialOutcome>> {
    process::check_pair(state, pair)?;
    if opts.horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    Ok(run_indexed(opts.trials, opts.workers, |t| {
        let mut w = Walker::new(state, opts.seed, t);
        let hit = w.run_until_pair_tied(pair, opts.horizon);
        TrialOutcome {
            steps: w.steps(),
            absorbed: hit.is_some(),
            hit_index: hit,
        }
    }))
}

pub fn summarize(outcomes: &[TrialOutcome], blocks: usize, horizon: u64) -> EstimateSummary {
    let steps: Vec<u64> = outcomes.iter().map(|o| o.steps).collect();
    let truncated = outcomes.iter().filter(|o| !o.absorbed).count() as u64;
    EstimateSummary::from_steps(&steps, truncated, blocks, horizon)
}

/// Writes per-trial outcomes as CSV with header `trial,T,absorbed,hit_index`.
pub fn write_samples_csv<W: std::io::Write>(out: W, outcomes: &[TrialOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "T", "absorbed", "hit_index"])?;
    for (t, o) in outcomes.iter().enumerate() {
        w.write_record([
            t.to_string(),
            o.steps.to_string(),
            o.absorbed.to_string(),
            o.hit_index.map(|h| h.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn estimate_expected_t(state: &GapState, opts: &McOptions) -> Result<EstimateSummary> {
    opts.validate()?;
    let outcomes = simulate_t(state, opts)?;
    Ok(summarize_t(state, &outcomes, opts))
}

/// [`summarize`] plus the warnings that apply to `T` from `state`.
pub fn summarize_t(state: &GapState, outcomes: &[TrialOutcome], opts: &McOptions) -> EstimateSummary {
    let mut summary = summarize(outcomes, opts.blocks, opts.horizon);
    if state.m() == 2 {
        summary.warnings.push(
            "m = 2: the gap is a simple random walk and E[T] = +inf; the mean is meaningless, use the tail estimator"
                .to_string(),
        );
    }
    if summary.truncated > 0 {
        summary.warnings.push(format!(
            "{} of {} trials reached the horizon {}; the mean is biased low",
            summary.truncated, summary.trials, summary.horizon
        ));
    }
    summary
}

/// `E[T_{i,i+1}]` estimate together with the exact value `m a_i a_{i+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub pair: usize,
    pub summary: EstimateSummary,
    pub expected: f64,
    pub within_four_half_widths: bool,
}

pub fn estimate_expected_t_pair(state: &GapState, pair: usize, opts: &McOptions) -> Result<PairEstimate> {
    opts.validate()?;
    let outcomes = simulate_t_pair(state, pair, opts)?;
    let mut summary = summarize(&outcomes, opts.blocks, opts.horizon);
    if summary.truncated > 0 {
        summary.warnings.push(format!(
            "{} trials reached the horizon; the mean is biased low",
            summary.truncated
        ));
    }
    let g = state.gaps();
    let expected = (state.m() as i64 * g[pair - 1] * g[pair]) as f64;
    Ok(PairEstimate {
        pair,
        within_four_half_widths: summary.agrees_with(expected, 4.0),
        summary,
        expected,
    })
}

/// `m · min_i a_i a_{i+1}` over adjacent pairs.
pub fn min_adjacent_bound(gaps: &[i64]) -> Option<i64> {
    let m = gaps.len() as i64 + 1;
    gaps.windows(2).map(|w| w[0] * w[1]).min().map(|p| m * p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub far_value: i64,
    pub gaps: Vec<i64>,
    pub summary: EstimateSummary,
    pub limit: f64,
    pub upper_bound: f64,
}

/// Fixes gaps `i, i+1` and sets every other gap to each of `far_values` in turn.
pub fn check_limit_theorem(
    m: usize,
    pair: usize,
    fixed_pair: (i64, i64),
    far_values: &[i64],
    opts: &McOptions,
) -> Result<Vec<LimitRow>> {
    if m < 4 || pair < 1 || pair > m - 2 {
        return Err(Error::invalid(format!(
            "limit check needs m >= 4 and 1 <= i <= m-2 (m = {m}, i = {pair})"
        )));
    }
    let limit = (m as i64 * fixed_pair.0 * fixed_pair.1) as f64;
    far_values
        .iter()
        .map(|&v| {
            let gaps: Vec<i64> = (1..m)
                .map(|j| match j {
                    j if j == pair => fixed_pair.0,
                    j if j == pair + 1 => fixed_pair.1,
                    _ => v,
                })
                .collect();
            let state = GapState::initial(gaps.clone())?;
            let summary = estimate_expected_t(&state, opts)?;
            Ok(LimitRow {
                far_value: v,
                upper_bound: min_adjacent_bound(&gaps).unwrap_or(0) as f64,
                gaps,
                summary,
                limit,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HillPoint {
    pub k: usize,
    pub index: f64,
}

/// Empirical survival function of `T` with a Hill tail-index estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub thresholds: Vec<u64>,
    pub survival: Vec<f64>,
    pub hill_index: Option<f64>,
    pub hill_fraction: f64,
    pub hill_k: usize,
    /// Hill estimates over a ladder of `k`, to judge stability.
    pub hill_curve: Vec<HillPoint>,
    pub trials: u64,
    pub truncated: u64,
    pub diagnostics: Vec<String>,
}

/// Smallest number of upper order statistics accepted for a Hill estimate.
pub const MIN_HILL_EXCEEDANCES: usize = 10;

pub fn estimate_tail(
    state: &GapState,
    thresholds: &[u64],
    hill_fraction: f64,
    opts: &McOptions,
) -> Result<TailCurve> {
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("tail thresholds must be strictly increasing"));
    }
    if !(hill_fraction > 0.0 && hill_fraction <= 0.2) {
        return Err(Error::invalid(format!(
            "hill fraction {hill_fraction} outside (0, 0.2]"
        )));
    }
    if opts.trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let outcomes = simulate_t(state, opts)?;
    let n = outcomes.len();
    let truncated = outcomes.iter().filter(|o| !o.absorbed).count() as u64;
    let mut diagnostics = Vec::new();

    let mut sorted: Vec<u64> = outcomes.iter().map(|o| o.steps).collect();
    sorted.sort_unstable();
    let survival = thresholds
        .iter()
        .map(|&t| {
            // Truncated trials have T > horizon, so they exceed every t <= horizon.
            let exceed = n - sorted.partition_point(|&s| s <= t)
                + if t >= opts.horizon { truncated as usize } else { 0 };
            exceed.min(n) as f64 / n as f64
        })
        .collect();
    if thresholds.iter().any(|&t| t >= opts.horizon) && truncated > 0 {
        diagnostics.push(
            "thresholds at or beyond the horizon count truncated trials as exceedances".to_string(),
        );
    }

    let desc: Vec<f64> = sorted.iter().rev().map(|&s| s as f64).collect();
    let hill_k = (hill_fraction * n as f64).floor() as usize;
    let hill_index = if hill_k < MIN_HILL_EXCEEDANCES {
        diagnostics.push(format!(
            "only {hill_k} upper order statistics (need {MIN_HILL_EXCEEDANCES}); Hill index omitted"
        ));
        None
    } else {
        let h = hill_estimate(&desc, hill_k);
        if h.is_none() {
            diagnostics.push("upper order statistics are degenerate; Hill index omitted".to_string());
        }
        h
    };
    if truncated > 0 {
        diagnostics.push(format!(
            "{truncated} trials reached the horizon and enter the Hill estimate at the horizon value"
        ));
    }
    let hill_curve = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2]
        .iter()
        .map(|f| (f * n as f64).floor() as usize)
        .filter(|&k| k >= MIN_HILL_EXCEEDANCES)
        .filter_map(|k| hill_estimate(&desc, k).map(|index| HillPoint { k, index }))
        .collect();

    Ok(TailCurve {
        thresholds: thresholds.to_vec(),
        survival,
        hill_index,
        hill_fraction,
        hill_k,
        hill_curve,
        trials: n as u64,
        truncated,
        diagnostics,
    })
}

/// `E[A(T_n) B(T_n)]` for `T_n = min(T, n)` with the Hölder-type upper bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppedProductPoint {
    pub n: u64,
    pub estimate: f64,
    pub survival: f64,
    pub bound: f64,
}

/// Three-team stopped product `E[A(T_n)B(T_n)]` at each checkpoint. All
/// checkpoints share the same trajectories.
pub fn estimate_stopped_product(
    state: &GapState,
    n_list: &[u64],
    opts: &McOptions,
) -> Result<Vec<StoppedProductPoint>> {
    if state.m() != 3 {
        return Err(Error::invalid("the stopped product is defined for m = 3"));
    }
    process::check_sampling(state, 1)?;
    if opts.trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let mut order: Vec<usize> = (0..n_list.len()).collect();
    order.sort_by_key(|&i| n_list[i]);

    let per_trial = run_indexed(opts.trials, opts.workers, |t| {
        let mut w = Walker::new(state, opts.seed, t);
        let mut out = vec![(0u64, false); n_list.len()];
        for &i in &order {
            let tied = w.run_until_tied(n_list[i]).is_some();
            let g = w.gaps();
            out[i] = ((g[0] * g[1]) as u64, !tied);
        }
        out
    });

    let (a, b) = (state.gaps()[0] as f64, state.gaps()[1] as f64);
    let scale = (a * b * (a + b)).powf(4.0 / 3.0);
    let trials = per_trial.len() as f64;
    Ok((0..n_list.len())
        .map(|i| {
            let sum: u128 = per_trial.iter().map(|r| r[i].0 as u128).sum();
            let alive = per_trial.iter().filter(|r| r[i].1).count();
            let survival = alive as f64 / trials;
            StoppedProductPoint {
                n: n_list[i],
                estimate: sum as f64 / trials,
                survival,
                bound: scale * survival.cbrt(),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSumMoment {
    pub n: usize,
    pub samples: usize,
    pub empirical: f64,
    pub expected: f64,
}

/// Waiting times between rounds that move a fixed adjacent pair of gaps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapWaitingReport {
    pub m: usize,
    pub pair: usize,
    pub waits: u64,
    pub mean: f64,
    pub expected_mean: f64,
    pub second_moments: Vec<GapSumMoment>,
}

const WAITS_PER_STREAM: u64 = 10_000;

/// Simulates `waits` waiting times `G_k` for the pair `(A_pair, A_{pair+1})`:
/// the rounds won by teams `pair`, `pair+1` or `pair+2` are the ones that move
/// it, so each `G_k` is geometric with success probability `3/m`. Second
/// moments of `G_1 + .. + G_N` use disjoint consecutive groups of `N` waits.
pub fn estimate_gap_waiting(
    m: usize,
    pair: usize,
    waits: u64,
    sums: &[usize],
    seed: u64,
    workers: Option<usize>,
) -> Result<GapWaitingReport> {
    if m < 4 || pair < 1 || pair > m - 2 {
        return Err(Error::invalid(format!(
            "gap waiting needs m >= 4 and 1 <= pair <= m-2 (m = {m}, pair = {pair})"
        )));
    }
    if waits == 0 || sums.iter().any(|&n| n == 0 || n as u64 > waits) {
        return Err(Error::invalid("need waits >= 1 and 1 <= N <= waits"));
    }
    let streams = waits.div_ceil(WAITS_PER_STREAM);
    let chunks = run_indexed(streams, workers, |s| {
        let count = WAITS_PER_STREAM.min(waits - s * WAITS_PER_STREAM);
        let mut stream = WinnerStream::new(seed, s, m);
        (0..count)
            .map(|_| {
                let mut g = 1u64;
                while !(pair..=pair + 2).contains(&stream.next_winner()) {
                    g += 1;
                }
                g
            })
            .collect::<Vec<u64>>()
    });
    let all: Vec<u64> = chunks.into_iter().flatten().collect();
    let mean = all.iter().map(|&g| g as u128).sum::<u128>() as f64 / all.len() as f64;
    let mf = m as f64;
    let second_moments = sums
        .iter()
        .map(|&n| {
            let groups: Vec<f64> = all
                .chunks_exact(n)
                .map(|c| {
                    let s = c.iter().sum::<u64>() as f64;
                    s * s
                })
                .collect();
            let nf = n as f64;
            GapSumMoment {
                n,
                samples: groups.len(),
                empirical: groups.iter().sum::<f64>() / groups.len() as f64,
                expected: mf * nf * (mf * nf + mf - 3.0) / 9.0,
            }
        })
        .collect();
    Ok(GapWaitingReport {
        m,
        pair,
        waits: all.len() as u64,
        mean,
        expected_mean: mf / 3.0,
        second_moments,
    })
}
