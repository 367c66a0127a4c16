//! Floating-point banded LU for the lattice recurrence.

use super::Recurrence;
use crate::error::{Error, Result};

/// Cap on banded storage, in `f64` words.
const MAX_BAND_WORDS: usize = 40_000_000;

/// Solves `(I - P/m) v = c` by elimination without pivoting. The matrix is a
/// diagonally dominant M-matrix, for which this is stable.
pub(super) fn solve(rec: &Recurrence, w: usize, c: &[f64]) -> Result<Vec<f64>> {
    let n = c.len();
    let w = w.min(n.saturating_sub(1));
    let bw = 2 * w + 1;
    if n * bw > MAX_BAND_WORDS {
        return Err(Error::invalid(format!(
            "banded storage of {} words is too large; use gauss_seidel",
            n * bw
        )));
    }
    let inv_m = 1.0 / rec.m as f64;
    let mut a = vec![0.0f64; n * bw];
    let mut b = c.to_vec();
    for s in 0..n {
        a[s * bw + w] = 1.0;
        for &j in rec.neighbors(s) {
            a[s * bw + j as usize + w - s] = -inv_m;
        }
    }
    for k in 0..n {
        let piv = a[k * bw + w];
        let end = n.min(k + w + 1);
        let (head, tail) = a.split_at_mut((k + 1) * bw);
        let pivot_row = &head[k * bw + w + 1..k * bw + w + (end - k)];
        for i in k + 1..end {
            let row = &mut tail[(i - k - 1) * bw..(i - k) * bw];
            let off = k + w - i;
            if row[off] == 0.0 {
                continue;
            }
            let f = row[off] / piv;
            row[off] = 0.0;
            for (x, &y) in row[off + 1..off + 1 + pivot_row.len()].iter_mut().zip(pivot_row) {
                *x -= f * y;
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let end = n.min(k + w + 1);
        let row = &a[k * bw..(k + 1) * bw];
        let acc: f64 = (k + 1..end).map(|j| row[j + w - k] * x[j]).sum();
        x[k] = (b[k] - acc) / row[w];
    }
    Ok(x)
}
