//! Exact verification of the martingale and supermartingale identities of
//! the gap process.
//!
//! Every check is a statement about the one-step drift
//! `(1/m) Σ_k h(s + ξ_k) - h(s)` at each state of a finite grid. Polynomial
//! identities run in scaled `i64` arithmetic with overflow checks and drop to
//! exact rationals whenever a value does not fit, so a verified grid means zero
//! failures, never a small residual.

mod phi;
mod poly;
mod suites;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::apply_winner;
use crate::rational::{self, Rational};

pub use phi::{classify_phi_case, phi, phi_slack, verify_phi_supermartingale, PhiCase, PhiRatio, PhiValue};
pub use poly::{CompiledPoly, StatePolynomial};
pub use suites::{
    pair_polynomials, time_squared_polynomial, total_failures, verify_h_drift, verify_min_supermartingale,
    verify_moment_identities, verify_pair_martingales, verify_suite, verify_time_squared_martingale, Suite,
};

/// Anything with an exact value at integer states.
pub trait StateFunction: Sync {
    fn arity(&self) -> usize;
    fn value(&self, state: &[i64]) -> Rational;
}

impl StateFunction for StatePolynomial {
    fn arity(&self) -> usize {
        self.nvars()
    }

    fn value(&self, state: &[i64]) -> Rational {
        self.eval(state)
    }
}

fn successors(m: usize, state: &[i64]) -> impl Iterator<Item = Vec<i64>> + '_ {
    (1..=m).map(move |w| {
        let mut next = state.to_vec();
        apply_winner(&mut next, w);
        next
    })
}

/// `(1/m) Σ_k h(s + ξ_k) - h(s)`, exactly.
pub fn drift<F: StateFunction + ?Sized>(h: &F, m: usize, state: &[i64]) -> Result<Rational> {
    if m < 2 || state.len() != m - 1 || h.arity() != m - 1 {
        return Err(Error::invalid(format!(
            "drift needs a state and a function on {} gaps (state has {}, function {})",
            m.saturating_sub(1),
            state.len(),
            h.arity()
        )));
    }
    let total: Rational = successors(m, state).map(|s| h.value(&s)).sum();
    Ok(total / rational::int(m as i64) - h.value(state))
}

/// Drift of `h(s, n)` whose last argument is the round index: the successor
/// of `(s, n)` is `(s + ξ_k, n + 1)`.
pub fn drift_timed(h: &StatePolynomial, m: usize, state: &[i64], n: i64) -> Result<Rational> {
    if m < 2 || state.len() != m - 1 || h.nvars() != m {
        return Err(Error::invalid("timed drift needs m-1 gaps plus one time variable"));
    }
    let mut point = state.to_vec();
    point.push(n);
    let total: Rational = successors(m, state)
        .map(|mut s| {
            s.push(n + 1);
            h.eval(&s)
        })
        .sum();
    Ok(total / rational::int(m as i64) - h.eval(&point))
}

/// Product of integer ranges, one per coordinate, both ends inclusive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub ranges: Vec<(i64, i64)>,
}

impl GridSpec {
    pub fn cube(dim: usize, lo: i64, hi: i64) -> Self {
        Self {
            ranges: vec![(lo, hi); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn len(&self) -> u64 {
        self.ranges
            .iter()
            .map(|&(lo, hi)| (hi - lo + 1).max(0) as u64)
            .product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Visits every point in lexicographic order, last coordinate fastest.
    pub fn for_each(&self, mut f: impl FnMut(&[i64])) {
        if self.is_empty() {
            return;
        }
        let mut p: Vec<i64> = self.ranges.iter().map(|r| r.0).collect();
        loop {
            f(&p);
            let mut j = p.len();
            loop {
                if j == 0 {
                    return;
                }
                j -= 1;
                if p[j] < self.ranges[j].1 {
                    p[j] += 1;
                    break;
                }
                p[j] = self.ranges[j].0;
            }
        }
    }

    fn require_positive(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::invalid(format!("grid has {} coordinates, expected {dim}", self.dim())));
        }
        if self.ranges.iter().any(|&(lo, hi)| lo < 1 || hi < lo) {
            return Err(Error::invalid("grid ranges must be nonempty and start at 1 or above"));
        }
        Ok(())
    }
}

/// One state at which a checked statement fails.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DriftFailure {
    pub state: Vec<i64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n: Option<i64>,
    pub check: String,
    #[serde(with = "rational::serde_str")]
    pub expected: Rational,
    #[serde(with = "rational::serde_str")]
    pub actual: Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub suite: String,
    pub m: usize,
    pub grid_spec: GridSpec,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_max: Option<i64>,
    /// Grid points checked (state, or state and round for timed checks).
    #[serde(rename = "states_checked")]
    pub checked: u64,
    /// Individual statements checked; several per state for multi-pair suites.
    pub statements_checked: u64,
    pub failures: Vec<DriftFailure>,
    /// Largest `|actual - expected|` among failures.
    #[serde(with = "rational::serde_str")]
    pub max_slack_mismatch: Rational,
    /// Per-case state counts, for the φ suite.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cases: Option<std::collections::BTreeMap<String, u64>>,
}

impl DriftReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub(crate) fn new(suite: &str, m: usize, grid: &GridSpec) -> Self {
        Self {
            suite: suite.to_string(),
            m,
            grid_spec: grid.clone(),
            n_max: None,
            checked: 0,
            statements_checked: 0,
            failures: Vec::new(),
            max_slack_mismatch: Rational::from_integer(0.into()),
            cases: None,
        }
    }

    pub(crate) fn record(&mut self, f: DriftFailure) {
        let gap = num_traits::Signed::abs(&(&f.actual - &f.expected));
        if gap > self.max_slack_mismatch {
            self.max_slack_mismatch = gap;
        }
        self.failures.push(f);
    }

    pub(crate) fn finish(mut self) -> Self {
        self.failures.sort();
        self
    }
}

/// The statement `drift(h) = g`, checked pointwise.
pub(crate) struct DriftIdentity {
    pub label: String,
    h: StatePolynomial,
    g: StatePolynomial,
    fast: Option<(CompiledPoly, CompiledPoly)>,
    /// Whether the last coordinate is the round index.
    timed: bool,
}

impl DriftIdentity {
    pub fn new(label: impl Into<String>, h: StatePolynomial, g: StatePolynomial, timed: bool) -> Self {
        assert_eq!(h.nvars(), g.nvars());
        let fast = h.compile().zip(g.compile());
        Self {
            label: label.into(),
            h,
            g,
            fast,
            timed,
        }
    }

    fn fast_holds(&self, m: usize, point: &[i64], scratch: &mut Vec<i64>) -> Option<bool> {
        let (hc, gc) = self.fast.as_ref()?;
        let d = if self.timed { point.len() - 1 } else { point.len() };
        let mi = m as i64;
        let mut total: i64 = 0;
        for w in 1..=m {
            scratch.clear();
            scratch.extend_from_slice(point);
            apply_winner(&mut scratch[..d], w);
            if self.timed {
                scratch[d] += 1;
            }
            total = total.checked_add(hc.eval_scaled(scratch)?)?;
        }
        let lhs = total
            .checked_sub(mi.checked_mul(hc.eval_scaled(point)?)?)?
            .checked_mul(gc.den)?;
        let rhs = mi.checked_mul(hc.den)?.checked_mul(gc.eval_scaled(point)?)?;
        Some(lhs == rhs)
    }

    /// `None` when the identity holds at `point`.
    pub fn check(&self, m: usize, point: &[i64], scratch: &mut Vec<i64>) -> Option<DriftFailure> {
        if self.fast_holds(m, point, scratch) == Some(true) {
            return None;
        }
        let (state, n, actual) = if self.timed {
            let d = point.len() - 1;
            let a = drift_timed(&self.h, m, &point[..d], point[d]).expect("dimensions checked");
            (point[..d].to_vec(), Some(point[d]), a)
        } else {
            (point.to_vec(), None, drift(&self.h, m, point).expect("dimensions checked"))
        };
        let expected = self.g.eval(point);
        (actual != expected).then(|| DriftFailure {
            state,
            n,
            check: self.label.clone(),
            expected,
            actual,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{frac, int};

    fn ab(m: usize) -> StatePolynomial {
        let d = m - 1;
        &StatePolynomial::var(d, 0) * &StatePolynomial::var(d, 1)
    }

    #[test]
    fn product_drifts() {
        for s in [[1, 1], [2, 3], [17, 4]] {
            assert_eq!(drift(&ab(3), 3, &s).unwrap(), frac(-1, 3));
        }
        let a = StatePolynomial::var(2, 0);
        let b = StatePolynomial::var(2, 1);
        let g21 = &(&a.pow(2) * &b) + &(&a * &b.pow(2));
        for s in [[1, 1], [5, 2], [9, 9]] {
            assert_eq!(drift(&g21, 3, &s).unwrap(), int(0));
        }
        let d = 4;
        let p = &StatePolynomial::var(d, 2) * &StatePolynomial::var(d, 3);
        assert_eq!(drift(&p, 5, &[7, 7, 2, 9]).unwrap(), frac(-1, 5));
        assert!(drift(&p, 4, &[1, 2, 3, 4]).is_err());
    }

    #[test]
    fn drift_is_linear() {
        let d = 3;
        let h1 = &StatePolynomial::var(d, 0).pow(3) * &StatePolynomial::var(d, 2);
        let h2 = (&StatePolynomial::var(d, 1) * &StatePolynomial::var(d, 2)).scale(&frac(5, 7));
        let sum = &h1 + &h2;
        GridSpec::cube(3, 1, 6).for_each(|s| {
            assert_eq!(
                drift(&sum, 4, s).unwrap(),
                drift(&h1, 4, s).unwrap() + drift(&h2, 4, s).unwrap()
            );
        });
    }

    #[test]
    fn grid_iteration() {
        let g = GridSpec {
            ranges: vec![(1, 2), (3, 5)],
        };
        let mut pts = Vec::new();
        g.for_each(|p| pts.push(p.to_vec()));
        assert_eq!(g.len(), 6);
        assert_eq!(pts.first().unwrap(), &vec![1, 3]);
        assert_eq!(pts[1], vec![1, 4]);
        assert_eq!(pts.last().unwrap(), &vec![2, 5]);
    }

    #[test]
    fn identity_fast_and_exact_paths_agree() {
        let id = DriftIdentity::new("ab", ab(3), StatePolynomial::constant(2, frac(-1, 3)), false);
        let mut scratch = Vec::new();
        assert!(id.check(3, &[4, 5], &mut scratch).is_none());
        // Force the exact path with values whose powers overflow i64.
        let big = StatePolynomial::var(2, 0).pow(4);
        let wrong = DriftIdentity::new("big", big, StatePolynomial::zero(2), false);
        let f = wrong.check(3, &[3_000_000_000, 5], &mut scratch).unwrap();
        // drift(x^4) = (1/3)[(x-1)^4 + (x+1)^4 + x^4] - x^4 = (1/3)(12x^2 + 2).
        let x = Rational::from_integer(3_000_000_000i64.into());
        assert_eq!(f.actual, (int(12) * &x * &x + int(2)) / int(3));
    }
}
