//! The `F = G/(x+z)` ansatz for three gaps, rewritten in `u, v, w = 1/x, 1/y, 1/z`.

use super::perfect::{solve_family, LinearFamilyResult};
use super::{apply_s, MultiSeries, Sign};
use crate::error::{Error, Result};
use crate::rational::{self, Rational};

fn working_degree(d: u32) -> u32 {
    d + 4
}

/// `Γ + Γ₀ + Γ₁ + Γ₂ + Γ₃ + 4γv(u+w)(u+w+uw)(u+w-uw)` through degree `D + 4`.
pub fn residual_gamma_form(g: &MultiSeries, gamma: &Rational, degree: u32) -> Result<MultiSeries> {
    if g.nvars() != 3 {
        return Err(Error::invalid("the Γ-form needs a series in three variables"));
    }
    let w = working_degree(degree);
    if g.degree() > w {
        return Err(Error::invalid(format!("series degree {} exceeds the working degree {w}", g.degree())));
    }
    let g = g.with_max_degree(w);
    let (u, v, z) = (MultiSeries::var(3, w, 1), MultiSeries::var(3, w, 2), MultiSeries::var(3, w, 3));
    let upw = u.add(&z);
    let uw = u.mul(&z);
    let plus = upw.add(&uw);
    let minus = upw.sub(&uw);
    let one_pm = |i, s| MultiSeries::one_plus(3, w, i, s);

    let big = plus.mul(&minus).mul(&g).scale(&rational::int(-4));
    let g0 = upw.mul(&plus).mul(&one_pm(1, -1)).mul(&apply_s(Sign::Minus, 1, &g)?);
    let g1 = upw
        .mul(&minus)
        .mul(&one_pm(1, 1))
        .mul(&one_pm(2, -1))
        .mul(&apply_s(Sign::Plus, 1, &apply_s(Sign::Minus, 2, &g)?)?);
    let g2 = upw
        .mul(&plus)
        .mul(&one_pm(2, 1))
        .mul(&one_pm(3, -1))
        .mul(&apply_s(Sign::Plus, 2, &apply_s(Sign::Minus, 3, &g)?)?);
    let g3 = upw.mul(&minus).mul(&one_pm(3, 1)).mul(&apply_s(Sign::Plus, 3, &g)?);
    let tail = v.mul(&upw).mul(&plus).mul(&minus).scale(&(gamma * rational::int(4)));
    Ok(big.add(&g0).add(&g1).add(&g2).add(&g3).add(&tail))
}

/// Polynomial `G` of degree ≤ `degree` with `G(0) = c`, together with `γ`.
pub fn solve_gamma_family(degree: u32, normalization: Option<Rational>) -> Result<LinearFamilyResult> {
    if degree == 0 {
        return Err(Error::invalid("the Γ family needs degree ≥ 1"));
    }
    solve_family("gamma", 3, degree, working_degree(degree), normalization, |g, gm| {
        residual_gamma_form(g, gm, degree)
    })
}
