//! Truncated multivariate power series and the substitution operators
//! `L_k^± f = f(.., x_k / (1 ± x_k), ..)`.
//!
//! A series stores exact rational coefficients for every exponent vector of
//! total degree at most `D`. Substitution only moves mass to higher degrees,
//! so every coefficient at degree ≤ D is exact after truncation.

mod gamma;
mod perfect;

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

pub use gamma::{residual_gamma_form, solve_gamma_family};
pub use perfect::{
    crosscheck_with_drift, residual_perfect, solve_linear_family, CertificateEntry, CrossCheck,
    FamilySolution, FamilyStatus, LinearFamilyResult,
};

/// Which substitution: `x/(1+x)` or `x/(1-x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl FromStr for Sign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" => Ok(Sign::Plus),
            "-" | "minus" => Ok(Sign::Minus),
            other => Err(Error::Parse(format!("sign must be + or -, got {other:?}"))),
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// `φ^±(i, k)` for `i ≤ max_i`, `k ≤ max_k`: row `i` holds the coefficients of
/// `1/(1 ± x)^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiTable {
    pub sign: Sign,
    entries: Vec<Vec<Rational>>,
}

impl PhiTable {
    /// Built from `(1 ± x) ρ_i = ρ_{i-1}`, i.e.
    /// `φ(i, k) = φ(i-1, k) ∓ φ(i, k-1)`.
    pub fn new(sign: Sign, max_i: usize, max_k: usize) -> Self {
        let mut entries = vec![vec![Rational::zero(); max_k + 1]; max_i + 1];
        entries[0][0] = Rational::one();
        for i in 1..=max_i {
            entries[i][0] = Rational::one();
            for k in 1..=max_k {
                let prev = &entries[i][k - 1];
                let v = match sign {
                    Sign::Minus => &entries[i - 1][k] + prev,
                    Sign::Plus => &entries[i - 1][k] - prev,
                };
                entries[i][k] = v;
            }
        }
        Self { sign, entries }
    }

    pub fn get(&self, i: usize, k: usize) -> &Rational {
        &self.entries[i][k]
    }

    pub fn max_i(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn max_k(&self) -> usize {
        self.entries[0].len() - 1
    }
}

/// Coefficient of `x^k` in `1/(1 ± x)^i`.
pub fn phi_coeff(sign: Sign, i: usize, k: usize) -> Rational {
    PhiTable::new(sign, i, k).get(i, k).clone()
}

/// A power series in `nvars` variables truncated at total degree `max_degree`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiSeries {
    nvars: usize,
    max_degree: u32,
    coeffs: BTreeMap<Vec<u32>, Rational>,
}

fn total(e: &[u32]) -> u32 {
    e.iter().sum()
}

impl MultiSeries {
    pub fn zero(nvars: usize, max_degree: u32) -> Self {
        Self {
            nvars,
            max_degree,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, max_degree: u32, c: Rational) -> Self {
        Self::monomial(nvars, max_degree, vec![0; nvars], c)
    }

    pub fn one(nvars: usize, max_degree: u32) -> Self {
        Self::constant(nvars, max_degree, Rational::one())
    }

    /// The variable `u_i`, 1-based like the operators.
    pub fn var(nvars: usize, max_degree: u32, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i - 1] = 1;
        Self::monomial(nvars, max_degree, e, Rational::one())
    }

    pub fn monomial(nvars: usize, max_degree: u32, exponents: Vec<u32>, c: Rational) -> Self {
        let mut s = Self::zero(nvars, max_degree);
        s.add_term(exponents, c);
        s
    }

    pub fn from_terms(
        nvars: usize,
        max_degree: u32,
        terms: impl IntoIterator<Item = (Vec<u32>, Rational)>,
    ) -> Self {
        let mut s = Self::zero(nvars, max_degree);
        for (e, c) in terms {
            s.add_term(e, c);
        }
        s
    }

    /// Adds `c · u^e`; terms above the truncation degree are dropped.
    pub fn add_term(&mut self, e: Vec<u32>, c: Rational) {
        assert_eq!(e.len(), self.nvars, "exponent vector length");
        if total(&e) > self.max_degree {
            return;
        }
        match self.coeffs.entry(e) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
            Entry::Vacant(v) => {
                if !c.is_zero() {
                    v.insert(c);
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn coeff(&self, e: &[u32]) -> Rational {
        self.coeffs.get(e).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Rational)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Highest total degree present (0 for the zero series).
    pub fn degree(&self) -> u32 {
        self.coeffs.keys().map(|e| total(e)).max().unwrap_or(0)
    }

    /// Same coefficients under a different truncation degree.
    pub fn with_max_degree(&self, d: u32) -> Self {
        Self::from_terms(self.nvars, d, self.coeffs.iter().map(|(e, c)| (e.clone(), c.clone())))
    }

    /// Exponents of degree ≤ `d` in `nvars` variables, ordered by degree then
    /// lexicographically.
    pub fn exponents_up_to(nvars: usize, d: u32) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        for deg in 0..=d {
            let mut cur = vec![0u32; nvars];
            fill(&mut out, &mut cur, 0, deg);
        }
        out
    }

    pub fn scale(&self, c: &Rational) -> Self {
        Self::from_terms(
            self.nvars,
            self.max_degree,
            self.coeffs.iter().map(|(e, v)| (e.clone(), v * c)),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_compatible(other);
        let mut out = self.clone();
        for (e, c) in &other.coeffs {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-Rational::one()))
    }

    /// Truncated product.
    pub fn mul(&self, other: &Self) -> Self {
        self.check_compatible(other);
        let mut out = Self::zero(self.nvars, self.max_degree);
        for (e1, c1) in &self.coeffs {
            let d1 = total(e1);
            for (e2, c2) in &other.coeffs {
                if d1 + total(e2) > self.max_degree {
                    continue;
                }
                let e = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(e, c1 * c2);
            }
        }
        out
    }

    fn check_compatible(&self, other: &Self) {
        assert_eq!(self.nvars, other.nvars, "series variable counts differ");
        assert_eq!(self.max_degree, other.max_degree, "series truncation degrees differ");
    }

    /// `1 + s·u_i` for `s = ±1`, a common prefactor.
    pub(crate) fn one_plus(nvars: usize, d: u32, i: usize, s: i64) -> Self {
        Self::one(nvars, d).add(&Self::var(nvars, d, i).scale(&rational::int(s)))
    }
}

fn fill(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, slot: usize, left: u32) {
    if slot + 1 == cur.len() {
        cur[slot] = left;
        out.push(cur.clone());
        return;
    }
    if cur.is_empty() {
        return;
    }
    for v in (0..=left).rev() {
        cur[slot] = v;
        fill(out, cur, slot + 1, left - v);
    }
    cur[slot] = 0;
}

/// Generating sequence of `L_k^± f`:
/// `β(θ) = Σ_{i ≤ θ_k} α(θ with slot k set to i) φ^±(i, θ_k - i)`.
pub fn apply_s(sign: Sign, k: usize, series: &MultiSeries) -> Result<MultiSeries> {
    if k < 1 || k > series.nvars {
        return Err(Error::invalid(format!(
            "slot {k} outside 1..={} for this series",
            series.nvars
        )));
    }
    let d = series.max_degree as usize;
    let table = PhiTable::new(sign, d, d);
    let slot = k - 1;
    let mut out = MultiSeries::zero(series.nvars, series.max_degree);
    for (e, c) in &series.coeffs {
        let i = e[slot] as usize;
        let room = d - total(e) as usize;
        for l in 0..=room {
            let p = table.get(i, l);
            if p.is_zero() {
                continue;
            }
            let mut e2 = e.clone();
            e2[slot] += l as u32;
            out.add_term(e2, c * p);
        }
    }
    Ok(out)
}

/// Whether `S_{k1} ∘ S_{k2}` and `S_{k2} ∘ S_{k1}` agree through the
/// truncation degree.
pub fn check_commutativity(
    sign1: Sign,
    sign2: Sign,
    k1: usize,
    k2: usize,
    series: &MultiSeries,
) -> Result<bool> {
    if k1 == k2 {
        return Err(Error::invalid("commutativity is checked for two different slots"));
    }
    let a = apply_s(sign1, k1, &apply_s(sign2, k2, series)?)?;
    let b = apply_s(sign2, k2, &apply_s(sign1, k1, series)?)?;
    Ok(a == b)
}

/// One entry of the series file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesTerm {
    pub exponents: Vec<u32>,
    #[serde(with = "rational::serde_str")]
    pub coeff: Rational,
}

impl MultiSeries {
    pub fn to_terms(&self) -> Vec<SeriesTerm> {
        self.coeffs
            .iter()
            .map(|(e, c)| SeriesTerm {
                exponents: e.clone(),
                coeff: c.clone(),
            })
            .collect()
    }

    /// Builds a series from file terms. `nvars` is required when `terms` is
    /// empty; the truncation degree defaults to the highest degree present.
    pub fn from_series_terms(terms: &[SeriesTerm], nvars: Option<usize>, max_degree: Option<u32>) -> Result<Self> {
        let n = match (terms.first(), nvars) {
            (Some(t), _) => t.exponents.len(),
            (None, Some(n)) => n,
            (None, None) => return Err(Error::Parse("empty series needs an explicit variable count".into())),
        };
        if let Some(want) = nvars {
            if want != n {
                return Err(Error::Parse(format!("series has {n} variables, expected {want}")));
            }
        }
        if terms.iter().any(|t| t.exponents.len() != n) {
            return Err(Error::Parse("series terms have differing exponent lengths".into()));
        }
        let top = terms.iter().map(|t| total(&t.exponents)).max().unwrap_or(0);
        let d = max_degree.unwrap_or(top);
        if top > d {
            return Err(Error::Parse(format!("series has degree {top} above the truncation {d}")));
        }
        Ok(Self::from_terms(n, d, terms.iter().map(|t| (t.exponents.clone(), t.coeff.clone()))))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_terms())?)
    }

    pub fn from_json(text: &str, nvars: Option<usize>, max_degree: Option<u32>) -> Result<Self> {
        let terms: Vec<SeriesTerm> = serde_json::from_str(text)?;
        Self::from_series_terms(&terms, nvars, max_degree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;
    use proptest::prelude::*;

    /// `1/(1 ± x)^i` by multiplying the geometric series `i` times.
    fn brute(sign: Sign, i: usize, kmax: usize) -> Vec<Rational> {
        let s = if sign == Sign::Plus { -1 } else { 1 };
        let geo: Vec<Rational> = (0..=kmax).map(|k| int(s).pow(k as i32)).collect();
        let mut acc: Vec<Rational> = (0..=kmax).map(|k| if k == 0 { int(1) } else { int(0) }).collect();
        for _ in 0..i {
            let mut next = vec![int(0); kmax + 1];
            for a in 0..=kmax {
                for b in 0..=kmax - a {
                    next[a + b] += &acc[a] * &geo[b];
                }
            }
            acc = next;
        }
        acc
    }

    #[test]
    fn phi_matches_brute_expansion() {
        for sign in [Sign::Plus, Sign::Minus] {
            let t = PhiTable::new(sign, 6, 10);
            for i in 0..=6 {
                let b = brute(sign, i, 10);
                for (k, want) in b.iter().enumerate() {
                    assert_eq!(t.get(i, k), want, "{sign} {i} {k}");
                }
            }
        }
        assert_eq!(phi_coeff(Sign::Minus, 2, 3), int(4));
        assert_eq!(phi_coeff(Sign::Plus, 2, 3), int(-4));
        assert_eq!(phi_coeff(Sign::Plus, 0, 0), int(1));
        assert_eq!(phi_coeff(Sign::Minus, 0, 4), int(0));
    }

    #[test]
    fn phi_convolution_identity() {
        for sign in [Sign::Plus, Sign::Minus] {
            let t = PhiTable::new(sign, 12, 10);
            for i1 in 0..=6 {
                for i2 in 0..=6 {
                    for k in 0..=10 {
                        let conv: Rational = (0..=k).map(|j| t.get(i1, j) * t.get(i2, k - j)).sum();
                        assert_eq!(&conv, t.get(i1 + i2, k));
                    }
                }
            }
        }
    }

    #[test]
    fn phi_minus_is_nonnegative() {
        let t = PhiTable::new(Sign::Minus, 15, 15);
        for i in 0..=15 {
            for k in 0..=15 {
                assert!(t.get(i, k) >= &int(0));
            }
        }
    }

    #[test]
    fn substitution_examples() {
        let u = MultiSeries::var(1, 6, 1);
        let s = apply_s(Sign::Minus, 1, &u).unwrap();
        assert_eq!(s.coeff(&[0]), int(0));
        for a in 1..=6 {
            assert_eq!(s.coeff(&[a]), int(1));
        }
        let one = MultiSeries::one(3, 5);
        assert_eq!(apply_s(Sign::Plus, 2, &one).unwrap(), one);
        assert_eq!(apply_s(Sign::Minus, 3, &one).unwrap(), one);
        let u1u2 = MultiSeries::monomial(2, 8, vec![1, 1], int(1));
        let s = apply_s(Sign::Plus, 1, &u1u2).unwrap();
        for a in 1..=7u32 {
            assert_eq!(s.coeff(&[a, 1]), int(-1).pow(a as i32 - 1));
        }
        assert!(apply_s(Sign::Plus, 3, &u1u2).is_err());
    }

    #[test]
    fn delta_series_commutes_and_same_slot_is_rejected() {
        let delta = MultiSeries::monomial(3, 8, vec![1, 1, 0], int(1));
        assert!(check_commutativity(Sign::Plus, Sign::Minus, 1, 2, &delta).unwrap());
        assert!(check_commutativity(Sign::Plus, Sign::Minus, 1, 1, &delta).is_err());
    }

    #[test]
    fn exponent_enumeration() {
        let e = MultiSeries::exponents_up_to(3, 2);
        assert_eq!(e.len(), 10);
        assert_eq!(e[0], vec![0, 0, 0]);
        assert_eq!(e[1], vec![1, 0, 0]);
        assert_eq!(MultiSeries::exponents_up_to(2, 6).len(), 28);
    }

    #[test]
    fn truncated_product() {
        let d = 3;
        let a = MultiSeries::one_plus(2, d, 1, 1);
        let p = a.mul(&a).mul(&a).mul(&a);
        assert_eq!(p.coeff(&[3, 0]), int(4));
        assert_eq!(p.coeff(&[4, 0]), int(0));
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn json_round_trip() {
        let s = MultiSeries::from_terms(3, 4, [(vec![1, 0, 0], int(2)), (vec![0, 2, 1], crate::rational::frac(-1, 4))]);
        let text = s.to_json().unwrap();
        assert!(text.contains("\"coeff\": \"-1/4\""));
        let back = MultiSeries::from_json(&text, None, Some(4)).unwrap();
        assert_eq!(back, s);
        assert!(MultiSeries::from_json("[]", None, None).is_err());
        assert!(MultiSeries::from_json(r#"[{"exponents":[1],"coeff":"1","x":1}]"#, None, None).is_err());
        assert!(MultiSeries::from_json(r#"[{"exponents":[3],"coeff":"1"}]"#, None, Some(2)).is_err());
    }

    fn arb_series(nvars: usize, d: u32) -> impl Strategy<Value = MultiSeries> {
        let exps = MultiSeries::exponents_up_to(nvars, d);
        let n = exps.len();
        proptest::collection::vec((-5i64..=5, 1i64..=4), n).prop_map(move |cs| {
            MultiSeries::from_terms(
                nvars,
                d,
                exps.iter().cloned().zip(cs).map(|(e, (p, q))| (e, crate::rational::frac(p, q))),
            )
        })
    }

    fn arb_sign() -> impl Strategy<Value = Sign> {
        prop_oneof![Just(Sign::Plus), Just(Sign::Minus)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn substitutions_commute(
            s in arb_series(3, 8),
            s1 in arb_sign(),
            s2 in arb_sign(),
            k1 in 1usize..=3,
            shift in 1usize..=2,
        ) {
            let k2 = (k1 - 1 + shift) % 3 + 1;
            prop_assert!(check_commutativity(s1, s2, k1, k2, &s).unwrap());
        }

        #[test]
        fn substitution_is_lower_triangular(
            s in arb_series(2, 6),
            sign in arb_sign(),
            k in 1usize..=2,
            e0 in 0u32..=3,
            e1 in 0u32..=3,
        ) {
            // Perturbing α at θ only changes β at exponents with the same
            // other coordinates and a k-th exponent at least θ_k.
            let theta = vec![e0, e1];
            let mut bumped = s.clone();
            bumped.add_term(theta.clone(), int(1));
            let a = apply_s(sign, k, &s).unwrap();
            let b = apply_s(sign, k, &bumped).unwrap();
            for e in MultiSeries::exponents_up_to(2, 6) {
                if a.coeff(&e) != b.coeff(&e) {
                    let other = 2 - k;
                    prop_assert_eq!(e[other], theta[other]);
                    prop_assert!(e[k - 1] >= theta[k - 1]);
                }
            }
        }
    }
}
