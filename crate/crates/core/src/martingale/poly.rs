//! Exact polynomials in the gap coordinates.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::rational::{self, Rational};

/// A polynomial with rational coefficients; absent monomials are zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StatePolynomial {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, Rational>,
}

impl StatePolynomial {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: Rational) -> Self {
        Self::monomial(nvars, vec![0; nvars], c)
    }

    /// The coordinate `x_i`, 0-based.
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::monomial(nvars, e, Rational::one())
    }

    pub fn monomial(nvars: usize, exponents: Vec<u32>, coeff: Rational) -> Self {
        assert_eq!(exponents.len(), nvars, "exponent vector length");
        let mut p = Self::zero(nvars);
        p.add_term(exponents, coeff);
        p
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Vec<u32>, Rational)>) -> Self {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            assert_eq!(e.len(), nvars, "exponent vector length");
            p.add_term(e, c);
        }
        p
    }

    fn add_term(&mut self, e: Vec<u32>, c: Rational) {
        match self.terms.entry(e) {
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

    pub fn terms(&self) -> &BTreeMap<Vec<u32>, Rational> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn scale(&self, c: &Rational) -> Self {
        Self::from_terms(self.nvars, self.terms.iter().map(|(e, v)| (e.clone(), v * c)))
    }

    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(Self::constant(self.nvars, Rational::one()), |acc, _| &acc * self)
    }

    /// Adds `extra` unused variables at the end.
    pub fn extend_vars(&self, extra: usize) -> Self {
        Self::from_terms(
            self.nvars + extra,
            self.terms.iter().map(|(e, c)| {
                let mut e = e.clone();
                e.resize(self.nvars + extra, 0);
                (e, c.clone())
            }),
        )
    }

    /// Exact value at an integer point.
    pub fn eval(&self, x: &[i64]) -> Rational {
        assert_eq!(x.len(), self.nvars, "point dimension");
        self.terms
            .iter()
            .map(|(e, c)| {
                let mono: BigInt = x
                    .iter()
                    .zip(e)
                    .map(|(&xi, &k)| BigInt::from(xi).pow(k))
                    .product();
                c * Rational::from_integer(mono)
            })
            .sum()
    }

    /// Integer form for fast evaluation, if the scaled coefficients fit.
    pub fn compile(&self) -> Option<CompiledPoly> {
        let den = self
            .terms
            .values()
            .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| {
                let scaled = (c * Rational::from_integer(den.clone())).to_integer().to_i64()?;
                let factors = e
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k > 0)
                    .map(|(i, &k)| (i, k))
                    .collect();
                Some((scaled, factors))
            })
            .collect::<Option<Vec<_>>>()?;
        Some(CompiledPoly {
            den: den.to_i64()?,
            terms,
        })
    }
}

/// `den · p` with integer coefficients, evaluated with overflow checks.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    pub den: i64,
    terms: Vec<(i64, Vec<(usize, u32)>)>,
}

impl CompiledPoly {
    /// `den · p(x)`, or `None` on overflow.
    #[inline]
    pub fn eval_scaled(&self, x: &[i64]) -> Option<i64> {
        let mut acc: i64 = 0;
        for (c, factors) in &self.terms {
            let mut t = *c;
            for &(i, k) in factors {
                t = t.checked_mul(x[i].checked_pow(k)?)?;
            }
            acc = acc.checked_add(t)?;
        }
        Some(acc)
    }
}

impl Add for &StatePolynomial {
    type Output = StatePolynomial;
    fn add(self, rhs: &StatePolynomial) -> StatePolynomial {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl Sub for &StatePolynomial {
    type Output = StatePolynomial;
    fn sub(self, rhs: &StatePolynomial) -> StatePolynomial {
        self + &(-rhs)
    }
}

impl Neg for &StatePolynomial {
    type Output = StatePolynomial;
    fn neg(self) -> StatePolynomial {
        self.scale(&-Rational::one())
    }
}

impl Mul for &StatePolynomial {
    type Output = StatePolynomial;
    fn mul(self, rhs: &StatePolynomial) -> StatePolynomial {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = StatePolynomial::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &rhs.terms {
                let e = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(e, c1 * c2);
            }
        }
        out
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr for StatePolynomial {
            type Output = StatePolynomial;
            fn $f(self, rhs: StatePolynomial) -> StatePolynomial {
                (&self).$f(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl fmt::Display for StatePolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .rev()
            .map(|(e, c)| {
                let vars: Vec<String> = e
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k > 0)
                    .map(|(i, &k)| if k == 1 { format!("x{}", i + 1) } else { format!("x{}^{k}", i + 1) })
                    .collect();
                match (vars.is_empty(), c.abs().is_one()) {
                    (true, _) => rational::to_string(c),
                    (false, true) => format!("{}{}", if c.is_negative() { "-" } else { "" }, vars.join("*")),
                    (false, false) => format!("{}*{}", rational::to_string(c), vars.join("*")),
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{frac, int};

    fn x(n: usize, i: usize) -> StatePolynomial {
        StatePolynomial::var(n, i)
    }

    #[test]
    fn arithmetic_and_eval() {
        let a = x(2, 0);
        let b = x(2, 1);
        let p = &(&a * &b) + &StatePolynomial::constant(2, frac(1, 3));
        assert_eq!(p.eval(&[2, 5]), frac(31, 3));
        let sq = (&a + &b).pow(2);
        assert_eq!(sq.terms().len(), 3);
        assert_eq!(sq.eval(&[3, 4]), int(49));
        assert!((&p - &p).is_zero());
        assert_eq!(p.degree(), 2);
    }

    #[test]
    fn compiled_matches_exact() {
        let a = x(3, 0);
        let c = x(3, 2);
        let p = &(&a.pow(3) * &c).scale(&frac(2, 3)) - &StatePolynomial::constant(3, frac(1, 5));
        let cp = p.compile().unwrap();
        for pt in [[1, 2, 3], [7, 0, 9], [-4, 1, 2]] {
            let scaled = cp.eval_scaled(&pt).unwrap();
            assert_eq!(Rational::new(scaled.into(), cp.den.into()), p.eval(&pt));
        }
        assert_eq!(cp.eval_scaled(&[i64::MAX / 2, 0, 3]), None);
    }

    #[test]
    fn display() {
        let p = &x(2, 0).pow(2) - &StatePolynomial::constant(2, frac(1, 2));
        assert_eq!(p.to_string(), "x1^2 + -1/2");
    }
}
