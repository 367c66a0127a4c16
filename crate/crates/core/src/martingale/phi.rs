//! The φ function and the five-case inequality behind the four-team
//! supermartingale `ABC/φ(A, C) + n/4`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DriftFailure, DriftReport, GridSpec, StateFunction};
use crate::error::{Error, Result};
use crate::rational::{self, frac, int, Rational};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhiValue {
    pub x: i64,
    pub y: i64,
    #[serde(with = "rational::serde_str")]
    pub value: Rational,
}

/// `max(x, y)` if `x ≠ y`, else `2x²/(2x - 1)`.
pub fn phi(x: i64, y: i64) -> Result<PhiValue> {
    if x < 1 || y < 1 {
        return Err(Error::invalid(format!("phi needs positive arguments, got ({x}, {y})")));
    }
    let value = if x != y { int(x.max(y)) } else { frac(2 * x * x, 2 * x - 1) };
    Ok(PhiValue { x, y, value })
}

/// `num / φ(x, z)`, with the term dropped when `num` is zero.
fn ratio(num: i64, x: i64, z: i64) -> Rational {
    if num == 0 {
        return int(0);
    }
    int(num) / phi(x, z).expect("nonzero numerator implies positive arguments").value
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhiCase {
    /// `x = z`
    Equal,
    /// `x = z + 1`
    AboveByOne,
    /// `x = z - 1`
    BelowByOne,
    /// `x >= z + 2`
    FarAbove,
    /// `x <= z - 2`
    FarBelow,
}

impl PhiCase {
    pub fn number(self) -> u8 {
        match self {
            PhiCase::Equal => 1,
            PhiCase::AboveByOne => 2,
            PhiCase::BelowByOne => 3,
            PhiCase::FarAbove => 4,
            PhiCase::FarBelow => 5,
        }
    }

    /// Exact slack the casework predicts at `(x, y, z)`.
    pub fn expected_slack(self, y: i64) -> Rational {
        match self {
            PhiCase::AboveByOne | PhiCase::BelowByOne => int(y),
            _ => int(0),
        }
    }
}

pub fn classify_phi_case(x: i64, z: i64) -> PhiCase {
    match x - z {
        0 => PhiCase::Equal,
        1 => PhiCase::AboveByOne,
        -1 => PhiCase::BelowByOne,
        d if d >= 2 => PhiCase::FarAbove,
        _ => PhiCase::FarBelow,
    }
}

/// Left side minus right side of
/// `4xyz/φ(x,z) - 1 >= (x-1)yz/φ(x-1,z) + (x+1)(y-1)z/φ(x+1,z) + x(y+1)(z-1)/φ(x,z-1) + xy(z+1)/φ(x,z+1)`.
pub fn phi_slack(x: i64, y: i64, z: i64) -> Result<Rational> {
    if x < 1 || y < 1 || z < 1 {
        return Err(Error::invalid(format!("phi inequality needs positive (x,y,z), got ({x},{y},{z})")));
    }
    let lhs = ratio(4 * x * y * z, x, z) - int(1);
    let rhs = ratio((x - 1) * y * z, x - 1, z)
        + ratio((x + 1) * (y - 1) * z, x + 1, z)
        + ratio(x * (y + 1) * (z - 1), x, z - 1)
        + ratio(x * y * (z + 1), x, z + 1);
    Ok(lhs - rhs)
}

/// `ABC / φ(A, C)` on four-team states, zero whenever the product vanishes.
#[derive(Clone, Copy, Debug, Default)]
pub struct PhiRatio;

impl StateFunction for PhiRatio {
    fn arity(&self) -> usize {
        3
    }

    fn value(&self, s: &[i64]) -> Rational {
        ratio(s[0] * s[1] * s[2], s[0], s[2])
    }
}

/// Checks the inequality and its exact slack pattern at every grid point:
/// zero in cases 1°, 4°, 5° and exactly `y` in cases 2°, 3°.
pub fn verify_phi_supermartingale(grid: &GridSpec) -> Result<DriftReport> {
    grid.require_positive(3)?;
    let mut report = DriftReport::new("phi", 4, grid);
    let mut cases: BTreeMap<String, u64> = BTreeMap::new();
    let mut err = None;
    grid.for_each(|p| {
        let (x, y, z) = (p[0], p[1], p[2]);
        let case = classify_phi_case(x, z);
        *cases.entry(format!("{}", case.number())).or_default() += 1;
        report.checked += 1;
        report.statements_checked += 1;
        let slack = match phi_slack(x, y, z) {
            Ok(s) => s,
            Err(e) => {
                err.get_or_insert(e);
                return;
            }
        };
        let expected = case.expected_slack(y);
        if slack != expected || slack < int(0) {
            report.record(DriftFailure {
                state: p.to_vec(),
                n: None,
                check: format!("case {}", case.number()),
                expected,
                actual: slack,
            });
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    report.cases = Some(cases);
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::martingale::drift;
    use proptest::prelude::*;

    #[test]
    fn phi_values() {
        assert_eq!(phi(3, 5).unwrap().value, int(5));
        assert_eq!(phi(2, 2).unwrap().value, frac(8, 3));
        assert_eq!(phi(1, 1).unwrap().value, int(2));
        assert!(phi(0, 2).is_err());
    }

    #[test]
    fn worked_cases() {
        assert_eq!(classify_phi_case(3, 3), PhiCase::Equal);
        assert_eq!(phi_slack(3, 5, 3).unwrap(), int(0));
        assert_eq!(classify_phi_case(3, 2), PhiCase::AboveByOne);
        assert_eq!(phi_slack(3, 5, 2).unwrap(), int(5));
        assert_eq!(classify_phi_case(7, 2), PhiCase::FarAbove);
        assert_eq!(phi_slack(7, 4, 2).unwrap(), int(0));
    }

    #[test]
    fn cases_partition_the_plane() {
        for x in 1..=12 {
            for z in 1..=12 {
                let d = x - z;
                let hits = [d == 0, d == 1, d == -1, d >= 2, d <= -2].iter().filter(|&&b| b).count();
                assert_eq!(hits, 1);
            }
        }
    }

    #[test]
    fn suite_on_small_cube() {
        let r = verify_phi_supermartingale(&GridSpec::cube(3, 1, 12)).unwrap();
        assert!(r.passed());
        let cases = r.cases.unwrap();
        assert_eq!(cases.values().sum::<u64>(), 12 * 12 * 12);
        assert_eq!(cases["1"], 12 * 12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        // Links the inequality to the conditional-expectation form:
        // drift(ABC/φ) + 1/4 = -slack/4.
        #[test]
        fn inequality_matches_drift(x in 1i64..60, y in 1i64..60, z in 1i64..60) {
            let d = drift(&PhiRatio, 4, &[x, y, z]).unwrap();
            prop_assert_eq!(d + frac(1, 4), -phi_slack(x, y, z).unwrap() / int(4));
        }

        #[test]
        fn phi_is_positive_and_at_least_max(x in 1i64..500, y in 1i64..500) {
            let v = phi(x, y).unwrap().value;
            prop_assert!(v >= int(x.max(y)));
        }
    }
}
