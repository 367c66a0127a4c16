//! The verification suites: one function per family of identities.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{phi::verify_phi_supermartingale, DriftFailure, DriftIdentity, DriftReport, GridSpec, StatePolynomial};
use crate::error::{Error, Result};
use crate::process::apply_winner;
use crate::rational::{frac, int, Rational};

fn check_m(m: usize) -> Result<()> {
    if m < 3 {
        return Err(Error::invalid(format!(
            "pair identities need m >= 3 (at least one adjacent pair), got {m}"
        )));
    }
    Ok(())
}

/// `(A_i, A_{i+1})` as polynomials in `nvars` variables.
pub fn pair_polynomials(nvars: usize, i: usize) -> (StatePolynomial, StatePolynomial) {
    (StatePolynomial::var(nvars, i - 1), StatePolynomial::var(nvars, i))
}

fn c(nvars: usize, q: Rational) -> StatePolynomial {
    StatePolynomial::constant(nvars, q)
}

fn h_poly(nvars: usize, i: usize) -> StatePolynomial {
    let (a, b) = pair_polynomials(nvars, i);
    let ab = &a * &b;
    &ab.pow(2) + &(&ab * &(&a.pow(2) + &b.pow(2))).scale(&frac(2, 3))
}

/// `M_{i,i+1}(n) = H - (4n/m) A_i A_{i+1} - (2/m²) n² + (1/(3m) - 2/m²) n`,
/// with the round index as the last of `m` variables.
pub fn time_squared_polynomial(m: usize, i: usize) -> StatePolynomial {
    let nv = m;
    let mi = m as i64;
    let (a, b) = pair_polynomials(nv, i);
    let n = StatePolynomial::var(nv, m - 1);
    let h = h_poly(m - 1, i).extend_vars(1);
    let compensator = &(&(&n * &(&a * &b)).scale(&frac(4, mi)) + &n.pow(2).scale(&frac(2, mi * mi)))
        - &n.scale(&(frac(1, 3 * mi) - frac(2, mi * mi)));
    &h - &compensator
}

fn run_identities(
    suite: &str,
    m: usize,
    grid: &GridSpec,
    identities: &[DriftIdentity],
) -> Result<DriftReport> {
    check_m(m)?;
    grid.require_positive(m - 1)?;
    let mut report = DriftReport::new(suite, m, grid);
    let mut scratch = Vec::with_capacity(m);
    grid.for_each(|s| {
        report.checked += 1;
        for id in identities {
            report.statements_checked += 1;
            if let Some(f) = id.check(m, s, &mut scratch) {
                report.record(f);
            }
        }
    });
    Ok(report.finish())
}

/// `drift(A_i A_{i+1}) = -1/m` for every pair `i`.
pub fn verify_pair_martingales(m: usize, grid: &GridSpec) -> Result<DriftReport> {
    check_m(m)?;
    let d = m - 1;
    let ids: Vec<DriftIdentity> = (1..=m - 2)
        .map(|i| {
            let (a, b) = pair_polynomials(d, i);
            DriftIdentity::new(format!("A{i}*A{}", i + 1), &a * &b, c(d, frac(-1, m as i64)), false)
        })
        .collect();
    run_identities("pairs", m, grid, &ids)
}

/// The one-step identities for `A_i²A_{i+1}²`, `A_i³A_{i+1}` and `A_iA_{i+1}³`.
pub fn verify_moment_identities(m: usize, grid: &GridSpec) -> Result<DriftReport> {
    check_m(m)?;
    let d = m - 1;
    let inv_m = frac(1, m as i64);
    let mut ids = Vec::new();
    for i in 1..=m - 2 {
        let (a, b) = pair_polynomials(d, i);
        let ab = &a * &b;
        let one = c(d, int(1));
        let a2b2 = (&(&(&(&a.pow(2).scale(&int(2)) + &b.pow(2).scale(&int(2))) + &a.scale(&int(2)))
            - &b.scale(&int(2)))
            - &ab.scale(&int(4)))
            + one.clone();
        let a3b = &(&(&ab.scale(&int(6)) - &a.pow(2).scale(&int(3))) - &a.scale(&int(3))) - &one;
        let ab3 = &(&(&ab.scale(&int(6)) - &b.pow(2).scale(&int(3))) + &b.scale(&int(3))) - &one;
        let (j, k) = (i, i + 1);
        ids.push(DriftIdentity::new(format!("A{j}^2*A{k}^2"), ab.pow(2), a2b2.scale(&inv_m), false));
        ids.push(DriftIdentity::new(format!("A{j}^3*A{k}"), &a.pow(3) * &b, a3b.scale(&inv_m), false));
        ids.push(DriftIdentity::new(format!("A{j}*A{k}^3"), &a * &b.pow(3), ab3.scale(&inv_m), false));
    }
    run_identities("moments", m, grid, &ids)
}

/// `drift(H_{i,i+1}) = (4/m) A_i A_{i+1} - 1/(3m)`.
pub fn verify_h_drift(m: usize, grid: &GridSpec) -> Result<DriftReport> {
    check_m(m)?;
    let d = m - 1;
    let mi = m as i64;
    let ids: Vec<DriftIdentity> = (1..=m - 2)
        .map(|i| {
            let (a, b) = pair_polynomials(d, i);
            let g = &(&a * &b).scale(&frac(4, mi)) - &c(d, frac(1, 3 * mi));
            DriftIdentity::new(format!("H{i},{}", i + 1), h_poly(d, i), g, false)
        })
        .collect();
    run_identities("H", m, grid, &ids)
}

/// `E[M_{i,i+1}(n+1) | state at n] = M_{i,i+1}(n)` for `n = 0..=n_max`.
pub fn verify_time_squared_martingale(m: usize, grid: &GridSpec, n_max: i64) -> Result<DriftReport> {
    check_m(m)?;
    grid.require_positive(m - 1)?;
    if n_max < 0 {
        return Err(Error::invalid("n_max must be nonnegative"));
    }
    let ids: Vec<DriftIdentity> = (1..=m - 2)
        .map(|i| {
            DriftIdentity::new(
                format!("M{i},{}(n)", i + 1),
                time_squared_polynomial(m, i),
                StatePolynomial::zero(m),
                true,
            )
        })
        .collect();
    let mut ranges = grid.ranges.clone();
    ranges.push((0, n_max));
    let timed = GridSpec { ranges };
    let mut report = DriftReport::new("time2", m, grid);
    report.n_max = Some(n_max);
    let mut scratch = Vec::with_capacity(m + 1);
    timed.for_each(|p| {
        report.checked += 1;
        for id in &ids {
            report.statements_checked += 1;
            if let Some(f) = id.check(m, p, &mut scratch) {
                report.record(f);
            }
        }
    });
    Ok(report.finish())
}

fn min_pair_product(gaps: &[i64]) -> i64 {
    gaps.windows(2).map(|w| w[0] * w[1]).min().expect("at least one pair")
}

/// `E[min_i A_i A_{i+1}(n+1) | state] + 1/m <= min_i A_i A_{i+1}(n)`, checked in
/// the integer form `Σ_k min(s + ξ_k) + 1 <= m · min(s)`.
pub fn verify_min_supermartingale(m: usize, grid: &GridSpec) -> Result<DriftReport> {
    check_m(m)?;
    grid.require_positive(m - 1)?;
    let mut report = DriftReport::new("min", m, grid);
    let mut next = vec![0i64; m - 1];
    let mi = m as i64;
    grid.for_each(|s| {
        report.checked += 1;
        report.statements_checked += 1;
        let here = min_pair_product(s);
        let mut total = 0i64;
        for w in 1..=m {
            next.copy_from_slice(s);
            apply_winner(&mut next, w);
            total += min_pair_product(&next);
        }
        if total + 1 > mi * here {
            report.record(DriftFailure {
                state: s.to_vec(),
                n: None,
                check: "E[min] + 1/m <= min".to_string(),
                expected: int(here) - frac(1, mi),
                actual: frac(total, mi),
            });
        }
    });
    Ok(report.finish())
}

/// Named verification suites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Pairs,
    Min,
    Phi,
    Moments,
    #[serde(rename = "H")]
    H,
    Time2,
    All,
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pairs" => Suite::Pairs,
            "min" => Suite::Min,
            "phi" => Suite::Phi,
            "moments" => Suite::Moments,
            "H" | "h" => Suite::H,
            "time2" => Suite::Time2,
            "all" => Suite::All,
            other => {
                return Err(Error::invalid(format!(
                    "unknown suite {other:?} (pairs, min, phi, moments, H, time2, all)"
                )))
            }
        })
    }
}

/// Runs a suite on the cube `[1..grid]`. The φ suite always uses three
/// coordinates; `n_max` applies to the time-squared suite.
pub fn verify_suite(suite: Suite, m: usize, grid: i64, n_max: i64) -> Result<Vec<DriftReport>> {
    if grid < 1 {
        return Err(Error::invalid("grid size must be at least 1"));
    }
    let cube = |d: usize| GridSpec::cube(d, 1, grid);
    let dim = m.saturating_sub(1);
    Ok(match suite {
        Suite::Pairs => vec![verify_pair_martingales(m, &cube(dim))?],
        Suite::Min => vec![verify_min_supermartingale(m, &cube(dim))?],
        Suite::Phi => vec![verify_phi_supermartingale(&cube(3))?],
        Suite::Moments => vec![verify_moment_identities(m, &cube(dim))?],
        Suite::H => vec![verify_h_drift(m, &cube(dim))?],
        Suite::Time2 => vec![verify_time_squared_martingale(m, &cube(dim), n_max)?],
        Suite::All => {
            let mut out = Vec::new();
            for s in [Suite::Pairs, Suite::Min, Suite::Moments, Suite::H, Suite::Time2, Suite::Phi] {
                out.extend(verify_suite(s, m, grid, n_max)?);
            }
            out
        }
    })
}

/// Sum of failures over reports, for exit codes.
pub fn total_failures(reports: &[DriftReport]) -> usize {
    reports.iter().map(|r| r.failures.len()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::martingale::{drift, drift_timed};
    use num_traits::Zero;

    #[test]
    fn suites_pass_on_small_grids() {
        for m in 3..=6 {
            let side = if m <= 4 { 8 } else { 4 };
            let g = GridSpec::cube(m - 1, 1, side);
            for r in [
                verify_pair_martingales(m, &g).unwrap(),
                verify_min_supermartingale(m, &g).unwrap(),
                verify_moment_identities(m, &g).unwrap(),
                verify_h_drift(m, &g).unwrap(),
                verify_time_squared_martingale(m, &g, 4).unwrap(),
            ] {
                assert!(r.passed(), "{} m={m}: {:?}", r.suite, &r.failures[..1]);
                assert!(r.max_slack_mismatch.is_zero());
            }
        }
    }

    #[test]
    fn h_drift_example() {
        let h = h_poly(2, 1);
        assert_eq!(drift(&h, 3, &[1, 1]).unwrap(), frac(11, 9));
    }

    #[test]
    fn a2b2_example_by_brute_force() {
        let (a, b) = pair_polynomials(3, 1);
        let h = (&a * &b).pow(2);
        let next: Rational = drift(&h, 4, &[2, 3, 5]).unwrap() + int(36);
        let formula = int(36) + frac(2 * 4 + 2 * 9, 4) + frac(2 * 2 - 2 * 3 - 4 * 6 + 1, 4);
        assert_eq!(next, formula);
        assert_eq!(next, frac(145, 4));
    }

    #[test]
    fn time_squared_reduces_to_h_drift_at_round_zero() {
        let m = 4;
        let p = time_squared_polynomial(m, 2);
        for s in [[1, 2, 3], [5, 1, 1]] {
            let (a, b) = (s[1], s[2]);
            // The compensator cancels the H drift at n = 0 as at every other round.
            assert_eq!(drift_timed(&p, m, &s, 0).unwrap(), int(0));
            let h = h_poly(3, 2);
            assert_eq!(drift(&h, m, &s).unwrap(), frac(4 * a * b, 4) - frac(1, 12));
        }
    }

    #[test]
    fn literal_three_team_display_is_not_a_martingale() {
        // The variant with -(2/3) n² in place of -(2/9) n².
        let nv = 3;
        let (a, b) = pair_polynomials(nv, 1);
        let n = StatePolynomial::var(nv, 2);
        let ab = &a * &b;
        let h = h_poly(2, 1).extend_vars(1);
        let variant = &(&(&h - &(&n * &ab).scale(&frac(4, 3))) - &n.pow(2).scale(&frac(2, 3)))
            - &n.scale(&frac(1, 9));
        assert_ne!(drift_timed(&variant, 3, &[2, 2], 1).unwrap(), int(0));
        assert_eq!(drift_timed(&time_squared_polynomial(3, 1), 3, &[2, 2], 1).unwrap(), int(0));
    }

    #[test]
    fn min_equality_when_argmin_is_stable() {
        // m = 4, (2, 2, 9): every step keeps pair 1 the strict minimum, so the
        // min is locally a single martingale.
        let s = [2i64, 2, 9];
        let mut total = 0;
        for w in 1..=4 {
            let mut n = s.to_vec();
            apply_winner(&mut n, w);
            assert!(n[0] * n[1] < n[1] * n[2]);
            total += min_pair_product(&n);
        }
        assert_eq!(total + 1, 4 * min_pair_product(&s));
    }

    #[test]
    fn pair_locality() {
        let m = 5;
        let h = h_poly(4, 2);
        let base = drift(&h, m, &[1, 3, 4, 1]).unwrap();
        for other in [[9, 3, 4, 2], [30, 3, 4, 17]] {
            assert_eq!(drift(&h, m, &other).unwrap(), base);
        }
    }

    #[test]
    fn suite_parsing_and_validation() {
        assert_eq!("H".parse::<Suite>().unwrap(), Suite::H);
        assert!("nope".parse::<Suite>().is_err());
        assert!(verify_pair_martingales(2, &GridSpec::cube(1, 1, 3)).is_err());
        assert!(verify_pair_martingales(4, &GridSpec::cube(2, 1, 3)).is_err());
        assert!(verify_pair_martingales(3, &GridSpec::cube(2, 0, 3)).is_err());
        let all = verify_suite(Suite::All, 4, 5, 3).unwrap();
        assert_eq!(all.len(), 6);
        assert_eq!(total_failures(&all), 0);
    }
}
