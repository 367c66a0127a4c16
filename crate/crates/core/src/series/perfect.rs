//! Residual of the u-variable functional equation for `H = x₁⋯x_k · f(1/x)`
//! and exact solvability of the polynomial ansatz for `f`.

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use super::{apply_s, MultiSeries, SeriesTerm, Sign};
use crate::error::{Error, Result};
use crate::linalg::{self, LinearSolution, SparseRow};
use crate::martingale::{drift, StateFunction};
use crate::rational::{self, Rational};

/// Working degree for a degree-`d` ansatz: the `(1 ± u_i)` prefactors raise
/// degree by up to two.
pub(crate) fn perfect_working_degree(d: u32) -> u32 {
    d + 2
}

fn check_k(k: usize, f: &MultiSeries) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if f.nvars() != k {
        return Err(Error::invalid(format!("series has {} variables, k = {k}", f.nvars())));
    }
    Ok(())
}

/// `f - γ u₁⋯u_k - (1/(k+1)) [(1-u₁) L₁⁻f + Σ (1+u_i)(1-u_{i+1}) L_i⁺L_{i+1}⁻f + (1+u_k) L_k⁺f]`
/// through degree `D + 2`.
pub fn residual_perfect(f: &MultiSeries, gamma: &Rational, k: usize, degree: u32) -> Result<MultiSeries> {
    check_k(k, f)?;
    let w = perfect_working_degree(degree);
    if f.degree() > w {
        return Err(Error::invalid(format!("series degree {} exceeds the working degree {w}", f.degree())));
    }
    let f = f.with_max_degree(w);
    let mut total = MultiSeries::one_plus(k, w, 1, -1).mul(&apply_s(Sign::Minus, 1, &f)?);
    for i in 1..k {
        let pre = MultiSeries::one_plus(k, w, i, 1).mul(&MultiSeries::one_plus(k, w, i + 1, -1));
        let sub = apply_s(Sign::Plus, i, &apply_s(Sign::Minus, i + 1, &f)?)?;
        total = total.add(&pre.mul(&sub));
    }
    total = total.add(&MultiSeries::one_plus(k, w, k, 1).mul(&apply_s(Sign::Plus, k, &f)?));
    let prod = MultiSeries::monomial(k, w, vec![1; k], gamma.clone());
    let scale = Rational::one() / rational::int(k as i64 + 1);
    Ok(f.sub(&prod).sub(&total.scale(&scale)))
}

/// A candidate `(f, γ)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilySolution {
    pub f: Vec<SeriesTerm>,
    #[serde(with = "rational::serde_str")]
    pub gamma: Rational,
}

/// One weighted equation of an inconsistency certificate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateEntry {
    /// Residual exponent the equation comes from; `None` for the
    /// normalization row.
    pub equation: Option<Vec<u32>>,
    #[serde(with = "rational::serde_str")]
    pub weight: Rational,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyStatus {
    Solved,
    Inconsistent,
}

/// Verdict on a polynomial ansatz family.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearFamilyResult {
    pub form: String,
    pub vars: usize,
    pub degree: u32,
    pub working_degree: u32,
    #[serde(with = "rational::serde_opt_str")]
    pub normalization: Option<Rational>,
    pub equations: usize,
    pub unknowns: usize,
    pub status: FamilyStatus,
    /// Particular solution with every free coefficient set to zero.
    pub solution: Option<FamilySolution>,
    /// Basis of the homogeneous solutions.
    pub nullspace: Vec<FamilySolution>,
    pub certificate: Option<Vec<CertificateEntry>>,
    /// `‖Ax - b‖²` at an exact least-squares solution; zero iff solved.
    #[serde(with = "rational::serde_str")]
    pub residual_norm: Rational,
    /// Same quantity from a floating-point SVD solve.
    pub residual_norm_f64: f64,
}

impl LinearFamilyResult {
    pub fn gamma(&self) -> Option<&Rational> {
        self.solution.as_ref().map(|s| &s.gamma)
    }

    /// Particular solution as a series.
    pub fn solution_series(&self) -> Option<MultiSeries> {
        let s = self.solution.as_ref()?;
        Some(MultiSeries::from_terms(
            self.vars,
            self.degree,
            s.f.iter().map(|t| (t.exponents.clone(), t.coeff.clone())),
        ))
    }

    /// Whether `(f, γ)` lies in the affine solution set, decided from the
    /// reported particular solution and nullspace basis.
    pub fn contains(&self, f: &MultiSeries, gamma: &Rational) -> bool {
        let Some(part) = &self.solution else {
            return false;
        };
        let exps = MultiSeries::exponents_up_to(self.vars, self.degree);
        if f.terms().any(|(e, _)| e.iter().sum::<u32>() > self.degree) {
            return false;
        }
        let flat = |terms: &[SeriesTerm], g: &Rational| -> Vec<Rational> {
            let s = MultiSeries::from_terms(
                self.vars,
                self.degree,
                terms.iter().map(|t| (t.exponents.clone(), t.coeff.clone())),
            );
            let mut v: Vec<Rational> = exps.iter().map(|e| s.coeff(e)).collect();
            v.push(g.clone());
            v
        };
        let target = {
            let mut v: Vec<Rational> = exps.iter().map(|e| f.coeff(e)).collect();
            v.push(gamma.clone());
            let p = flat(&part.f, &part.gamma);
            v.iter().zip(&p).map(|(a, b)| a - b).collect::<Vec<_>>()
        };
        let basis: Vec<Vec<Rational>> = self.nullspace.iter().map(|n| flat(&n.f, &n.gamma)).collect();
        // Solve Σ c_j basis_j = target: one row per coordinate.
        let rows: Vec<SparseRow> = (0..target.len())
            .map(|r| {
                basis
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| !b[r].is_zero())
                    .map(|(j, b)| (j, b[r].clone()))
                    .collect()
            })
            .collect();
        matches!(
            linalg::solve_exact(&rows, &target, basis.len()),
            LinearSolution::Consistent { .. }
        )
    }
}

/// Builds and solves the coefficient system for a linear ansatz: the residual
/// is `column(γ)·γ + Σ_e column(e)·a_e + constant`, each column computed by
/// `residual(e)` on a unit monomial.
pub(crate) fn solve_family(
    form: &str,
    vars: usize,
    degree: u32,
    working_degree: u32,
    normalization: Option<Rational>,
    residual: impl Fn(&MultiSeries, &Rational) -> Result<MultiSeries>,
) -> Result<LinearFamilyResult> {
    let normalization = normalization.filter(|c| !c.is_zero());
    let exps = MultiSeries::exponents_up_to(vars, degree);
    let eq_exps = MultiSeries::exponents_up_to(vars, working_degree);
    let eq_index: std::collections::HashMap<&Vec<u32>, usize> =
        eq_exps.iter().enumerate().map(|(i, e)| (e, i)).collect();
    let n_unknowns = exps.len() + 1;
    let gamma_col = exps.len();

    let mut rows: Vec<SparseRow> = vec![SparseRow::new(); eq_exps.len()];
    let zero_f = MultiSeries::zero(vars, degree);
    let mut push_column = |col: usize, s: &MultiSeries| {
        for (e, c) in s.terms() {
            rows[eq_index[e]].insert(col, c.clone());
        }
    };
    for (col, e) in exps.iter().enumerate() {
        let unit = MultiSeries::monomial(vars, degree, e.clone(), Rational::one());
        push_column(col, &residual(&unit, &Rational::zero())?);
    }
    push_column(gamma_col, &residual(&zero_f, &Rational::one())?);
    let mut rhs = vec![Rational::zero(); eq_exps.len()];
    if let Some(c) = &normalization {
        let mut row = SparseRow::new();
        row.insert(0, Rational::one());
        rows.push(row);
        rhs.push(c.clone());
    }

    let unflatten = |x: &[Rational]| FamilySolution {
        f: MultiSeries::from_terms(vars, degree, exps.iter().cloned().zip(x.iter().cloned())).to_terms(),
        gamma: x[gamma_col].clone(),
    };
    let solved = linalg::solve_exact(&rows, &rhs, n_unknowns);
    let residual_norm = exact_least_squares(&rows, &rhs, n_unknowns);
    let residual_norm_f64 = linalg::least_squares_residual(&rows, &rhs, n_unknowns).powi(2);
    let base = LinearFamilyResult {
        form: form.to_string(),
        vars,
        degree,
        working_degree,
        normalization,
        equations: rows.len(),
        unknowns: n_unknowns,
        status: FamilyStatus::Solved,
        solution: None,
        nullspace: Vec::new(),
        certificate: None,
        residual_norm,
        residual_norm_f64,
    };
    Ok(match solved {
        LinearSolution::Consistent { particular, nullspace, .. } => LinearFamilyResult {
            solution: Some(unflatten(&particular)),
            nullspace: nullspace.iter().map(|v| unflatten(v)).collect(),
            ..base
        },
        LinearSolution::Inconsistent { certificate } => {
            debug_assert!(linalg::certifies_inconsistency(&rows, &rhs, &certificate));
            LinearFamilyResult {
                status: FamilyStatus::Inconsistent,
                certificate: Some(
                    certificate
                        .into_iter()
                        .map(|(r, w)| CertificateEntry {
                            equation: eq_exps.get(r).cloned(),
                            weight: w,
                        })
                        .collect(),
                ),
                ..base
            }
        }
    })
}

/// `‖Ax - b‖²` at an exact solution of the normal equations `AᵀA x = Aᵀb`.
fn exact_least_squares(rows: &[SparseRow], rhs: &[Rational], ncols: usize) -> Rational {
    let mut cols: Vec<Vec<(usize, &Rational)>> = vec![Vec::new(); ncols];
    for (r, row) in rows.iter().enumerate() {
        for (&c, v) in row {
            cols[c].push((r, v));
        }
    }
    let dot = |a: &[(usize, &Rational)], b: &[(usize, &Rational)]| -> Rational {
        let (mut i, mut j, mut s) = (0, 0, Rational::zero());
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    s += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        s
    };
    let normal: Vec<SparseRow> = (0..ncols)
        .map(|i| {
            (0..ncols)
                .filter_map(|j| {
                    let v = dot(&cols[i], &cols[j]);
                    (!v.is_zero()).then_some((j, v))
                })
                .collect()
        })
        .collect();
    let atb: Vec<Rational> = (0..ncols)
        .map(|i| cols[i].iter().map(|(r, v)| *v * &rhs[*r]).sum())
        .collect();
    match linalg::solve_exact(&normal, &atb, ncols) {
        LinearSolution::Consistent { particular, .. } => linalg::residual(rows, rhs, &particular)
            .iter()
            .map(|r| r * r)
            .sum(),
        // The normal equations are always consistent.
        LinearSolution::Inconsistent { .. } => unreachable!("normal equations are consistent"),
    }
}

/// Solves for `f` (all coefficients of degree ≤ `degree`) and `γ` jointly.
/// `normalization` fixes `f(0) = c`; `None` or zero drops the constraint.
pub fn solve_linear_family(k: usize, degree: u32, normalization: Option<Rational>) -> Result<LinearFamilyResult> {
    if k == 0 || degree == 0 {
        return Err(Error::invalid("the linear family needs k ≥ 1 and degree ≥ 1"));
    }
    solve_family("perfect", k, degree, perfect_working_degree(degree), normalization, |f, g| {
        residual_perfect(f, g, k, degree)
    })
}

/// `c · Π x_j^{1-θ_j}` for `f = c·u^θ`.
struct MonomialH {
    exps: Vec<u32>,
    coeff: Rational,
}

impl StateFunction for MonomialH {
    fn arity(&self) -> usize {
        self.exps.len()
    }

    fn value(&self, state: &[i64]) -> Rational {
        let p: i64 = state.iter().zip(&self.exps).map(|(x, e)| x.pow(*e)).product();
        &self.coeff * rational::int(p)
    }
}

/// Outcome of [`crosscheck_with_drift`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossCheck {
    pub residual_zero: bool,
    pub drift_matches: bool,
    pub agree: bool,
}

/// Compares the series verdict for a monomial `f` with the exact drift of the
/// corresponding `H` on `m = k + 1` players.
pub fn crosscheck_with_drift(
    f: &MultiSeries,
    gamma: &Rational,
    k: usize,
    degree: u32,
    test_states: &[Vec<i64>],
) -> Result<CrossCheck> {
    check_k(k, f)?;
    let mut terms = f.terms();
    let (theta, coeff) = match (terms.next(), terms.next()) {
        (Some((e, c)), None) => (e.clone(), c.clone()),
        _ => return Err(Error::UnsupportedAnsatz("crosscheck needs a single monomial".into())),
    };
    if theta.iter().any(|&t| t > 1) {
        return Err(Error::UnsupportedAnsatz(format!(
            "u^{theta:?} leaves negative powers of x in H"
        )));
    }
    let h = MonomialH {
        exps: theta.iter().map(|t| 1 - t).collect(),
        coeff,
    };
    let residual_zero = residual_perfect(f, gamma, k, degree)?.is_zero();
    let mut drift_matches = true;
    for s in test_states {
        if s.iter().any(|x| !x.is_positive()) {
            return Err(Error::invalid("test states must be positive"));
        }
        if drift(&h, k + 1, s)? != -gamma {
            drift_matches = false;
            break;
        }
    }
    Ok(CrossCheck {
        residual_zero,
        drift_matches,
        agree: residual_zero == drift_matches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::martingale::StatePolynomial;
    use crate::rational::{frac, int};

    fn states(k: usize) -> Vec<Vec<i64>> {
        let mut out = vec![vec![1; k], vec![2; k]];
        out.push((1..=k as i64).collect());
        out.push((1..=k as i64).rev().map(|x| x * 3).collect());
        out
    }

    #[test]
    fn known_solutions_have_zero_residual() {
        let one = MultiSeries::one(2, 8);
        assert!(residual_perfect(&one, &frac(1, 3), 2, 8).unwrap().is_zero());
        assert!(!residual_perfect(&one, &frac(1, 4), 2, 8).unwrap().is_zero());
        for i in [1, 3] {
            let u = MultiSeries::var(3, 8, i);
            assert!(residual_perfect(&u, &frac(1, 4), 3, 8).unwrap().is_zero(), "u{i}");
        }
        let u2 = MultiSeries::var(3, 8, 2);
        // H = x₁x₃ is itself a martingale.
        assert!(residual_perfect(&u2, &int(0), 3, 8).unwrap().is_zero());
        for g in [frac(1, 4), frac(1, 3)] {
            assert!(!residual_perfect(&u2, &g, 3, 8).unwrap().is_zero());
        }
    }

    #[test]
    fn k2_family_is_solved_by_constant() {
        let r = solve_linear_family(2, 6, Some(int(1))).unwrap();
        assert_eq!(r.status, FamilyStatus::Solved);
        assert_eq!(r.gamma(), Some(&frac(1, 3)));
        let f = r.solution_series().unwrap();
        assert_eq!(f, MultiSeries::one(2, 6));
        assert!(residual_perfect(&f, &frac(1, 3), 2, 6).unwrap().is_zero());
        assert!(r.residual_norm.is_zero());
        // The free directions are the martingales x₂, x₁ and 1.
        assert_eq!(r.nullspace.len(), 3);
        for n in &r.nullspace {
            assert!(n.gamma.is_zero());
        }
    }

    #[test]
    fn k3_family_with_nonzero_constant_is_inconsistent() {
        let r = solve_linear_family(3, 6, Some(int(1))).unwrap();
        assert_eq!(r.status, FamilyStatus::Inconsistent);
        assert!(r.solution.is_none());
        assert!(r.residual_norm.is_positive());
        assert!(!r.certificate.as_ref().unwrap().is_empty());
    }

    #[test]
    fn k3_homogeneous_family_contains_known_solutions() {
        let r = solve_linear_family(3, 6, None).unwrap();
        assert_eq!(r.status, FamilyStatus::Solved);
        assert!(r.contains(&MultiSeries::var(3, 6, 1), &frac(1, 4)));
        assert!(r.contains(&MultiSeries::var(3, 6, 3), &frac(1, 4)));
        assert!(!r.contains(&MultiSeries::var(3, 6, 2), &frac(1, 4)));
        assert!(!r.contains(&MultiSeries::one(3, 6), &int(0)));
        let zero_c = solve_linear_family(3, 6, Some(int(0))).unwrap();
        assert_eq!(zero_c.status, FamilyStatus::Solved);
        assert_eq!(zero_c.normalization, None);
    }

    #[test]
    fn solutions_round_trip_through_the_residual() {
        for (k, d) in [(2, 4), (3, 4), (1, 5)] {
            let r = solve_linear_family(k, d, None).unwrap();
            for sol in r.nullspace.iter().chain(r.solution.iter()) {
                let f = MultiSeries::from_terms(k, d, sol.f.iter().map(|t| (t.exponents.clone(), t.coeff.clone())));
                assert!(residual_perfect(&f, &sol.gamma, k, d).unwrap().is_zero());
            }
        }
    }

    #[test]
    fn drift_crosscheck_examples() {
        let c = crosscheck_with_drift(&MultiSeries::var(3, 6, 1), &frac(1, 4), 3, 6, &states(3)).unwrap();
        assert!(c.residual_zero && c.drift_matches && c.agree);
        let c = crosscheck_with_drift(&MultiSeries::one(2, 6), &frac(1, 3), 2, 6, &states(2)).unwrap();
        assert!(c.residual_zero && c.drift_matches);
        let all = MultiSeries::monomial(3, 6, vec![1, 1, 1], int(1));
        let c = crosscheck_with_drift(&all, &int(0), 3, 6, &states(3)).unwrap();
        assert!(c.residual_zero && c.drift_matches);
        let c = crosscheck_with_drift(&MultiSeries::var(3, 6, 2), &frac(1, 4), 3, 6, &states(3)).unwrap();
        assert!(!c.residual_zero && !c.drift_matches && c.agree);
        let sq = MultiSeries::monomial(2, 6, vec![2, 0], int(1));
        assert!(matches!(
            crosscheck_with_drift(&sq, &int(0), 2, 6, &states(2)),
            Err(Error::UnsupportedAnsatz(_))
        ));
    }

    #[test]
    fn squares_and_neighbour_products_have_constant_drift() {
        for m in 3..=5usize {
            let k = m - 1;
            for i in 0..k {
                let sq = StatePolynomial::var(k, i).pow(2);
                let mut seen = None;
                for s in states(k) {
                    let d = drift(&sq, m, &s).unwrap();
                    assert_eq!(seen.get_or_insert(d.clone()), &d);
                }
                if i + 1 < k {
                    let prod = &StatePolynomial::var(k, i) * &StatePolynomial::var(k, i + 1);
                    let mut seen = None;
                    for s in states(k) {
                        let d = drift(&prod, m, &s).unwrap();
                        assert_eq!(seen.get_or_insert(d.clone()), &d);
                    }
                }
            }
        }
    }
}
