//! Exact sparse linear algebra over the rationals.
//!
//! Systems here are small (a few hundred equations) but must be solved exactly:
//! the series solver needs a certified "no solution" answer, not a small
//! residual. Rows are eliminated one at a time into a fully reduced echelon
//! basis while each basis row remembers which input rows it came from, so an
//! inconsistent input yields a row combination `y` with `yᵀA = 0`, `yᵀb = 1`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_traits::{One, Signed, Zero};

use crate::rational::{self, Rational};

pub type SparseRow = BTreeMap<usize, Rational>;

/// Outcome of [`solve_exact`].
#[derive(Clone, Debug, PartialEq)]
pub enum LinearSolution {
    Consistent {
        /// Solution with every free variable set to zero.
        particular: Vec<Rational>,
        /// Basis of the kernel of `A`, one vector per free column.
        nullspace: Vec<Vec<Rational>>,
        rank: usize,
    },
    Inconsistent {
        /// Sparse weights on the input rows: `yᵀA = 0` and `yᵀb = 1`.
        certificate: SparseRow,
    },
}

struct BasisRow {
    coeffs: SparseRow,
    rhs: Rational,
    combo: SparseRow,
}

fn axpy(target: &mut SparseRow, factor: &Rational, source: &SparseRow) {
    for (&c, v) in source {
        let e = target.entry(c).or_insert_with(Rational::zero);
        *e -= factor * v;
        if e.is_zero() {
            target.remove(&c);
        }
    }
}

fn scale(row: &mut SparseRow, by: &Rational) {
    for v in row.values_mut() {
        *v *= by;
    }
}

/// Solves `A x = b` exactly, where `rows[r]` lists the nonzero entries of row `r`.
pub fn solve_exact(rows: &[SparseRow], rhs: &[Rational], ncols: usize) -> LinearSolution {
    assert_eq!(rows.len(), rhs.len(), "row and rhs counts differ");
    let mut basis: Vec<BasisRow> = Vec::new();
    let mut pivot_of: BTreeMap<usize, usize> = BTreeMap::new();

    for (r, (row, b)) in rows.iter().zip(rhs).enumerate() {
        let mut cur = BasisRow {
            coeffs: row.iter().filter(|(_, v)| !v.is_zero()).map(|(c, v)| (*c, v.clone())).collect(),
            rhs: b.clone(),
            combo: SparseRow::from([(r, Rational::one())]),
        };
        debug_assert!(cur.coeffs.keys().all(|&c| c < ncols));
        // Basis rows are fully reduced, so one pass clears every pivot column.
        let hits: Vec<(usize, usize)> = cur
            .coeffs
            .keys()
            .filter_map(|c| pivot_of.get(c).map(|&i| (*c, i)))
            .collect();
        for (c, i) in hits {
            let f = match cur.coeffs.get(&c) {
                Some(f) => f.clone(),
                None => continue,
            };
            let p = &basis[i];
            axpy(&mut cur.coeffs, &f, &p.coeffs);
            cur.rhs -= &f * &p.rhs;
            axpy(&mut cur.combo, &f, &p.combo);
        }
        let Some((&pc, pv)) = cur.coeffs.iter().next() else {
            if cur.rhs.is_zero() {
                continue;
            }
            let inv = cur.rhs.recip();
            scale(&mut cur.combo, &inv);
            return LinearSolution::Inconsistent { certificate: cur.combo };
        };
        let inv = pv.recip();
        scale(&mut cur.coeffs, &inv);
        scale(&mut cur.combo, &inv);
        cur.rhs *= &inv;
        for p in basis.iter_mut() {
            if let Some(f) = p.coeffs.get(&pc).cloned() {
                axpy(&mut p.coeffs, &f, &cur.coeffs);
                p.rhs -= &f * &cur.rhs;
                axpy(&mut p.combo, &f, &cur.combo);
            }
        }
        pivot_of.insert(pc, basis.len());
        basis.push(cur);
    }

    let mut particular = vec![Rational::zero(); ncols];
    for (&c, &i) in &pivot_of {
        particular[c] = basis[i].rhs.clone();
    }
    let nullspace = (0..ncols)
        .filter(|c| !pivot_of.contains_key(c))
        .map(|f| {
            let mut v = vec![Rational::zero(); ncols];
            v[f] = Rational::one();
            for (&c, &i) in &pivot_of {
                if let Some(a) = basis[i].coeffs.get(&f) {
                    v[c] = -a;
                }
            }
            v
        })
        .collect();
    LinearSolution::Consistent {
        particular,
        nullspace,
        rank: basis.len(),
    }
}

/// `A x - b` evaluated exactly.
pub fn residual(rows: &[SparseRow], rhs: &[Rational], x: &[Rational]) -> Vec<Rational> {
    rows.iter()
        .zip(rhs)
        .map(|(row, b)| row.iter().map(|(&c, v)| v * &x[c]).sum::<Rational>() - b)
        .collect()
}

/// Checks `yᵀA = 0` and `yᵀb ≠ 0`.
pub fn certifies_inconsistency(rows: &[SparseRow], rhs: &[Rational], y: &SparseRow) -> bool {
    let mut combined = SparseRow::new();
    let mut yb = Rational::zero();
    for (&r, w) in y {
        axpy(&mut combined, &-w, &rows[r]);
        yb += w * &rhs[r];
    }
    combined.is_empty() && !yb.is_zero()
}

/// Euclidean norm of the least-squares residual `min ‖Ax - b‖`, in floating
/// point. Zero (up to rounding) for consistent systems; a diagnostic only.
pub fn least_squares_residual(rows: &[SparseRow], rhs: &[Rational], ncols: usize) -> f64 {
    if rows.is_empty() || ncols == 0 {
        return rhs.iter().map(|b| rational::to_f64(b).powi(2)).sum::<f64>().sqrt();
    }
    let a = DMatrix::from_fn(rows.len(), ncols, |r, c| {
        rows[r].get(&c).map(rational::to_f64).unwrap_or(0.0)
    });
    let b = DVector::from_iterator(rhs.len(), rhs.iter().map(rational::to_f64));
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = max_sv * 1e-12 * rows.len().max(ncols) as f64;
    match svd.solve(&b, eps) {
        Ok(x) => (a * x - b).norm(),
        Err(_) => f64::NAN,
    }
}

/// Largest absolute entry, handy for reporting residual sizes.
pub fn max_abs(v: &[Rational]) -> Rational {
    v.iter().map(|q| q.abs()).max().unwrap_or_else(Rational::zero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;
    use proptest::prelude::*;

    fn row(entries: &[(usize, i64)]) -> SparseRow {
        entries.iter().map(|&(c, v)| (c, int(v))).collect()
    }

    #[test]
    fn unique_solution() {
        let rows = vec![row(&[(0, 2), (1, 1)]), row(&[(0, 1), (1, -1)])];
        let rhs = vec![int(5), int(1)];
        match solve_exact(&rows, &rhs, 2) {
            LinearSolution::Consistent { particular, nullspace, rank } => {
                assert_eq!(particular, vec![int(2), int(1)]);
                assert!(nullspace.is_empty());
                assert_eq!(rank, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn underdetermined_has_kernel() {
        let rows = vec![row(&[(0, 1), (2, 1)]), row(&[(0, 2), (2, 2)])];
        let rhs = vec![int(3), int(6)];
        let LinearSolution::Consistent { particular, nullspace, rank } = solve_exact(&rows, &rhs, 3)
        else {
            panic!()
        };
        assert_eq!(rank, 1);
        assert_eq!(nullspace.len(), 2);
        assert!(residual(&rows, &rhs, &particular).iter().all(|r| r.is_zero()));
        for v in &nullspace {
            assert!(residual(&rows, &[int(0), int(0)], v).iter().all(|r| r.is_zero()));
        }
        assert!(least_squares_residual(&rows, &rhs, 3) < 1e-9);
    }

    #[test]
    fn inconsistent_gives_certificate() {
        let rows = vec![row(&[(0, 1), (1, 1)]), row(&[(0, 2), (1, 2)]), row(&[(1, 1)])];
        let rhs = vec![int(1), int(3), int(0)];
        let LinearSolution::Inconsistent { certificate } = solve_exact(&rows, &rhs, 2) else {
            panic!()
        };
        assert!(certifies_inconsistency(&rows, &rhs, &certificate));
        assert!(least_squares_residual(&rows, &rhs, 2) > 0.1);
    }

    proptest! {
        #[test]
        fn solutions_or_certificates_are_valid(
            entries in proptest::collection::vec(proptest::collection::vec(-3i64..=3, 4), 1..7),
            b in proptest::collection::vec(-5i64..=5, 7),
        ) {
            let rows: Vec<SparseRow> = entries
                .iter()
                .map(|r| r.iter().enumerate().filter(|(_, &v)| v != 0).map(|(c, &v)| (c, int(v))).collect())
                .collect();
            let rhs: Vec<Rational> = b[..rows.len()].iter().map(|&v| int(v)).collect();
            match solve_exact(&rows, &rhs, 4) {
                LinearSolution::Consistent { particular, nullspace, rank } => {
                    prop_assert!(residual(&rows, &rhs, &particular).iter().all(|r| r.is_zero()));
                    prop_assert_eq!(rank + nullspace.len(), 4);
                    let zeros = vec![int(0); rows.len()];
                    for v in &nullspace {
                        prop_assert!(residual(&rows, &zeros, v).iter().all(|r| r.is_zero()));
                    }
                }
                LinearSolution::Inconsistent { certificate } => {
                    prop_assert!(certifies_inconsistency(&rows, &rhs, &certificate));
                }
            }
        }
    }
}
