//! Exact solves by banded elimination modulo word-size primes.
//!
//! Each prime gives the solution mod p. Residues are combined by the Chinese
//! remainder theorem, lifted to rationals by rational reconstruction, and the
//! candidate is accepted only once it satisfies the recurrence exactly. The
//! matrix `mI - P` is a nonsingular M-matrix, so elimination without pivoting
//! succeeds over the rationals; a prime that hits a zero pivot is skipped.

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::{Recurrence, SolverGrid};
use crate::error::{Error, Result};
use crate::rational::Rational;

/// Largest interior grid accepted by exact mode.
pub const MAX_EXACT_STATES: usize = 20_000;
/// Cap on banded storage, in words.
const MAX_BAND_WORDS: usize = 40_000_000;

fn primes_below_2_31() -> impl Iterator<Item = u64> {
    (1u64 << 30..1u64 << 31).rev().filter(|&n| {
        n % 2 == 1 && (3..).step_by(2).take_while(|d| d * d <= n).all(|d| n % d != 0)
    })
}

fn pow_mod(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    acc
}

fn inv_mod(a: u64, p: u64) -> u64 {
    pow_mod(a, p - 2, p)
}

fn reduce(q: &Rational, p: u64) -> Option<u64> {
    let pb = BigInt::from(p);
    let num = q.numer().mod_floor(&pb).to_u64()?;
    let den = q.denom().mod_floor(&pb).to_u64()?;
    (den != 0).then(|| num * inv_mod(den, p) % p)
}

/// Solution of the recurrence mod `p`, or `None` if `p` is unlucky.
fn solve_mod(rec: &Recurrence, w: usize, p: u64) -> Option<Vec<u64>> {
    let n = rec.exact_rhs.len();
    let bw = 2 * w + 1;
    let mut a = vec![0u64; n * bw];
    let mut b = Vec::with_capacity(n);
    for s in 0..n {
        a[s * bw + w] = rec.m as u64 % p;
        for &j in rec.neighbors(s) {
            a[s * bw + j as usize + w - s] = p - 1;
        }
        b.push(reduce(&rec.exact_rhs[s], p)?);
    }
    for k in 0..n {
        let piv = a[k * bw + w];
        if piv == 0 {
            return None;
        }
        let inv = inv_mod(piv, p);
        let end = n.min(k + w + 1);
        let (head, tail) = a.split_at_mut((k + 1) * bw);
        let pivot_row = &head[k * bw + w + 1..k * bw + w + (end - k)];
        for i in k + 1..end {
            let row = &mut tail[(i - k - 1) * bw..(i - k) * bw];
            let off = k + w - i;
            let aik = row[off];
            if aik == 0 {
                continue;
            }
            let f = p - aik * inv % p;
            row[off] = 0;
            for (x, &y) in row[off + 1..off + 1 + pivot_row.len()].iter_mut().zip(pivot_row) {
                if y != 0 {
                    *x = (*x + f * y) % p;
                }
            }
            b[i] = (b[i] + f * b[k]) % p;
        }
    }
    let mut x = vec![0u64; n];
    for k in (0..n).rev() {
        let end = n.min(k + w + 1);
        let mut acc = b[k];
        for j in k + 1..end {
            let akj = a[k * bw + j + w - k];
            if akj != 0 {
                acc = (acc + (p - akj) * x[j]) % p;
            }
        }
        x[k] = acc * inv_mod(a[k * bw + w], p) % p;
    }
    Some(x)
}

/// Maps `x mod modulus` to a fraction `n/d` with `|n|, d <= bound`.
fn reconstruct(x: &BigInt, modulus: &BigInt, bound: &BigInt) -> Option<(BigInt, BigInt)> {
    let (mut r0, mut r1) = (modulus.clone(), x.clone());
    let (mut t0, mut t1) = (BigInt::zero(), BigInt::one());
    while &r1 > bound {
        let (q, r) = r0.div_rem(&r1);
        r0 = std::mem::replace(&mut r1, r);
        let t = &t0 - &q * &t1;
        t0 = std::mem::replace(&mut t1, t);
    }
    if t1.is_zero() || &t1.abs() > bound {
        return None;
    }
    let (n, d) = if t1.sign() == Sign::Minus { (-r1, -t1) } else { (r1, t1) };
    (n.gcd(&d).is_one()).then_some((n, d))
}

/// Lifts all residues to rationals, sharing a running common denominator so
/// most entries need no extended Euclid at all.
fn reconstruct_all(residues: &[BigInt], modulus: &BigInt) -> Option<Vec<Rational>> {
    let bound: BigInt = (modulus >> 1usize).sqrt();
    let half = modulus >> 1usize;
    let mut common = BigInt::one();
    let mut out = Vec::with_capacity(residues.len());
    for x in residues {
        let mut y = (x * &common).mod_floor(modulus);
        if y > half {
            y -= modulus;
        }
        if y.abs() <= bound {
            out.push(Rational::new(y, common.clone()));
            continue;
        }
        let (n, d) = reconstruct(&(x * &common).mod_floor(modulus), modulus, &bound)?;
        common *= &d;
        out.push(Rational::new(n, common.clone()));
    }
    Some(out)
}

fn verifies(rec: &Recurrence, x: &[Rational]) -> bool {
    let m = Rational::from_integer(BigInt::from(rec.m));
    (0..x.len()).all(|s| {
        let sum: Rational = rec.neighbors(s).iter().map(|&j| &x[j as usize]).sum();
        &m * &x[s] - sum == rec.exact_rhs[s]
    })
}

/// Bits of a bound on `2 |numerator| · denominator` over all entries.
fn hadamard_bits(rec: &Recurrence) -> u64 {
    let n = rec.exact_rhs.len() as f64;
    let m = rec.m as f64;
    let row = 0.5 * (m * m + m).log2();
    let rhs_bits = rec
        .exact_rhs
        .iter()
        .map(|q| q.numer().bits() + q.denom().bits())
        .max()
        .unwrap_or(1) as f64;
    (2.0 * (n * row + rhs_bits + n.log2() + 4.0)) as u64
}

pub(super) fn solve(grid: &SolverGrid, rec: &Recurrence) -> Result<Vec<Rational>> {
    let n = grid.len();
    if n > MAX_EXACT_STATES {
        return Err(Error::ExactSolve(format!(
            "{n} interior states exceed the exact-mode limit of {MAX_EXACT_STATES}"
        )));
    }
    let w = grid.bandwidth().min(n.saturating_sub(1));
    if n * (2 * w + 1) > MAX_BAND_WORDS {
        return Err(Error::ExactSolve(format!(
            "banded storage of {} words is too large; use the iterative solver",
            n * (2 * w + 1)
        )));
    }
    // Rational denominators are products of the rhs denominators and det(A).
    let max_primes = (hadamard_bits(rec) / 30 + 4) as usize;
    let mut modulus = BigInt::one();
    let mut residues = vec![BigInt::zero(); n];
    let mut used = 0usize;
    let mut next_attempt = 1usize;
    for p in primes_below_2_31() {
        let Some(r) = solve_mod(rec, w, p) else { continue };
        let pb = BigInt::from(p);
        let m_inv = inv_mod((&modulus % &pb).to_u64().expect("below p"), p);
        for (x, &ri) in residues.iter_mut().zip(&r) {
            let xm = (&*x % &pb).to_u64().expect("below p");
            let t = (ri + p - xm) % p * m_inv % p;
            *x += &modulus * t;
        }
        modulus *= &pb;
        used += 1;
        if used >= next_attempt || used >= max_primes {
            if let Some(q) = reconstruct_all(&residues, &modulus) {
                if verifies(rec, &q) {
                    return Ok(q);
                }
            }
            next_attempt = used + used.div_ceil(2);
        }
        if used >= max_primes {
            break;
        }
    }
    Err(Error::ExactSolve(format!(
        "no verified rational solution after {used} primes"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::frac;

    #[test]
    fn reconstruction_recovers_small_fractions() {
        let m = BigInt::from(1_000_000_007u64) * BigInt::from(998_244_353u64);
        for (n, d) in [(3i64, 7i64), (-5, 11), (0, 1), (123456, 1)] {
            let inv = BigInt::from(d).extended_gcd(&m).x.mod_floor(&m);
            let x = (BigInt::from(n) * inv).mod_floor(&m);
            let got = reconstruct_all(&[x], &m).unwrap();
            assert_eq!(got[0], frac(n, d));
        }
    }

    #[test]
    fn prime_source_is_prime() {
        let ps: Vec<u64> = primes_below_2_31().take(3).collect();
        assert_eq!(ps[0], 2_147_483_647);
        assert!(ps.iter().all(|&p| p > 1 << 30));
        assert_eq!(inv_mod(3, 7) * 3 % 7, 1);
    }
}
