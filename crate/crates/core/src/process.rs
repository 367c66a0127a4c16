//! Gap dynamics of the m-team competition.
//!
//! With scores sorted, `A_k = X'_{k+1} - X'_k` for `k = 1..m-1`. A round won by
//! team `w` (in sorted order) moves the gap vector by the step vector `ξ_w`:
//! `ξ_1 = (-1, 0, .., 0)`, `ξ_w` has `+1` in slot `w-1` and `-1` in slot `w`,
//! and `ξ_m = (0, .., 0, +1)`. The tie time `T` is the first round with a zero gap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::WinnerStream;

/// Default step cap for sampling. `T` is heavy tailed, so every sampler takes an
/// explicit horizon and reports truncation instead of running unbounded.
pub const DEFAULT_HORIZON: u64 = 100_000_000;

/// Adjacent score gaps `(A_1, .., A_{m-1})` of an `m`-team competition.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GapState {
    m: usize,
    gaps: Vec<i64>,
}

impl GapState {
    /// Builds a state from its gaps; `m` is `gaps.len() + 1`. Zero gaps are
    /// allowed (tied states), negative ones are not.
    pub fn new(gaps: Vec<i64>) -> Result<Self> {
        if gaps.is_empty() {
            return Err(Error::invalid("a gap state needs at least one gap (m >= 2)"));
        }
        if let Some(g) = gaps.iter().find(|&&g| g < 0) {
            return Err(Error::invalid(format!("negative gap {g} in {gaps:?}")));
        }
        Ok(Self {
            m: gaps.len() + 1,
            gaps,
        })
    }

    /// Like [`GapState::new`] but also rejects tied states.
    pub fn initial(gaps: Vec<i64>) -> Result<Self> {
        let s = Self::new(gaps)?;
        if s.is_tied() {
            return Err(Error::TiedState(s.gaps));
        }
        Ok(s)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn gaps(&self) -> &[i64] {
        &self.gaps
    }

    pub fn into_gaps(self) -> Vec<i64> {
        self.gaps
    }

    pub fn is_tied(&self) -> bool {
        is_tied(self)
    }
}

/// One of the `m` equally likely moves of the gap vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDelta {
    pub winner: usize,
    pub delta: Vec<i64>,
}

/// Where a sample came from, so it can be regenerated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub trial: u64,
}

/// One simulated stopping time, or a truncation record when the horizon was hit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoppingSample {
    pub steps: u64,
    pub absorbed: bool,
    /// 1-based index of the gap that reached zero.
    pub hit_index: Option<usize>,
    pub seed_record: SeedRecord,
}

pub fn step_distribution(m: usize) -> Result<Vec<StepDelta>> {
    if m < 2 {
        return Err(Error::invalid(format!("team count m = {m}, need m >= 2")));
    }
    Ok((1..=m)
        .map(|winner| {
            let mut delta = vec![0i64; m - 1];
            apply_winner(&mut delta, winner);
            StepDelta { winner, delta }
        })
        .collect())
}

pub fn gaps_from_scores(scores: &[i64]) -> Result<GapState> {
    if scores.len() < 2 {
        return Err(Error::invalid("need scores for at least two teams"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::AlreadyTied(scores.to_vec()));
    }
    GapState::new(sorted.windows(2).map(|w| w[1] - w[0]).collect())
}

pub fn apply_step(state: &GapState, winner: usize) -> Result<GapState> {
    if !(1..=state.m).contains(&winner) {
        return Err(Error::WinnerOutOfRange {
            winner,
            m: state.m,
        });
    }
    if state.is_tied() {
        return Err(Error::TiedState(state.gaps.clone()));
    }
    let mut gaps = state.gaps.clone();
    apply_winner(&mut gaps, winner);
    Ok(GapState { m: state.m, gaps })
}

pub fn is_tied(state: &GapState) -> bool {
    state.gaps.contains(&0)
}

/// Adds `ξ_winner` to `gaps` in place. Returns the 0-based slot that was
/// decremented, if any.
#[inline]
pub(crate) fn apply_winner(gaps: &mut [i64], winner: usize) -> Option<usize> {
    let slots = gaps.len();
    if winner >= 2 {
        gaps[winner - 2] += 1;
    }
    if winner <= slots {
        gaps[winner - 1] -= 1;
        Some(winner - 1)
    } else {
        None
    }
}

/// A single trajectory driven by the counter-based winner stream of one trial.
#[derive(Clone, Debug)]
pub struct Walker {
    gaps: Vec<i64>,
    m: usize,
    steps: u64,
    stream: WinnerStream,
}

impl Walker {
    pub fn new(state: &GapState, seed: u64, trial: u64) -> Self {
        Self {
            gaps: state.gaps.clone(),
            m: state.m,
            steps: 0,
            stream: WinnerStream::new(seed, trial, state.m),
        }
    }

    pub fn gaps(&self) -> &[i64] {
        &self.gaps
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Plays one round; returns the 0-based slot that was decremented, if any.
    #[inline]
    pub fn step(&mut self) -> Option<usize> {
        let w = self.stream.next_winner();
        self.steps += 1;
        apply_winner(&mut self.gaps, w)
    }

    /// Runs until some gap is zero or the step count reaches `limit`.
    /// Returns the 1-based index of the zero gap on absorption.
    pub fn run_until_tied(&mut self, limit: u64) -> Option<usize> {
        if let Some(i) = self.gaps.iter().position(|&g| g == 0) {
            return Some(i + 1);
        }
        debug_assert_eq!(self.m, self.gaps.len() + 1);
        while self.steps < limit {
            if let Some(slot) = self.step() {
                // Only the decremented slot can reach zero.
                if self.gaps[slot] == 0 {
                    return Some(slot + 1);
                }
            }
        }
        None
    }

    /// Runs until gap `pair` or `pair + 1` (1-based) is zero, ignoring all
    /// other coordinates, or until the step count reaches `limit`.
    pub fn run_until_pair_tied(&mut self, pair: usize, limit: u64) -> Option<usize> {
        let (lo, hi) = (pair - 1, pair);
        for idx in [lo, hi] {
            if self.gaps[idx] == 0 {
                return Some(idx + 1);
            }
        }
        while self.steps < limit {
            if let Some(slot) = self.step() {
                if (slot == lo || slot == hi) && self.gaps[slot] == 0 {
                    return Some(slot + 1);
                }
            }
        }
        None
    }
}

pub fn sample_t(state: &GapState, seed: u64, trial: u64, horizon: u64) -> Result<StoppingSample> {
    check_sampling(state, horizon)?;
    let mut walker = Walker::new(state, seed, trial);
    let hit = walker.run_until_tied(horizon);
    Ok(StoppingSample {
        steps: walker.steps(),
        absorbed: hit.is_some(),
        hit_index: hit,
        seed_record: SeedRecord { seed, trial },
    })
}

/// Samples `T_{i,i+1}`, the first time gap `i` or gap `i+1` vanishes.
pub fn sample_t_pair(
    state: &GapState,
    pair: usize,
    seed: u64,
    trial: u64,
    horizon: u64,
) -> Result<StoppingSample> {
    check_pair(state, pair)?;
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mut walker = Walker::new(state, seed, trial);
    let hit = walker.run_until_pair_tied(pair, horizon);
    Ok(StoppingSample {
        steps: walker.steps(),
        absorbed: hit.is_some(),
        hit_index: hit,
        seed_record: SeedRecord { seed, trial },
    })
}

/// Result of driving the chain with an explicit winner sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForcedRun {
    pub steps: u64,
    pub hit_index: Option<usize>,
    pub final_state: GapState,
}

/// Plays the given winners in order until the state ties or they run out.
pub fn run_forced(state: &GapState, winners: &[usize]) -> Result<ForcedRun> {
    let mut cur = state.clone();
    let mut steps = 0;
    for &w in winners {
        if cur.is_tied() {
            break;
        }
        cur = apply_step(&cur, w)?;
        steps += 1;
    }
    let hit_index = cur.gaps.iter().position(|&g| g == 0).map(|i| i + 1);
    Ok(ForcedRun {
        steps,
        hit_index,
        final_state: cur,
    })
}

pub(crate) fn check_sampling(state: &GapState, horizon: u64) -> Result<()> {
    if state.is_tied() {
        return Err(Error::TiedState(state.gaps.clone()));
    }
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    Ok(())
}

pub(crate) fn check_pair(state: &GapState, pair: usize) -> Result<()> {
    if state.m < 3 || pair < 1 || pair > state.m - 2 {
        return Err(Error::invalid(format!(
            "pair index {pair} out of range 1..={} for m = {}",
            state.m.saturating_sub(2),
            state.m
        )));
    }
    if state.gaps[pair - 1] <= 0 || state.gaps[pair] <= 0 {
        return Err(Error::TiedState(state.gaps.clone()));
    }
    Ok(())
}
