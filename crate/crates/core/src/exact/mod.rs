//! Expected hitting times on truncated gap lattices.
//!
//! The interior is `[1..R]^{m-1}`. States with a zero gap absorb with value 0.
//! States that leave the box take their value from a [`BoundaryPolicy`].
//! Zero exterior data gives a lower bound for `τ` and the upper bound
//! `m · min a_i a_{i+1}` gives an upper bound, because the fixed-point map is
//! monotone in its boundary data.

mod banded;
mod modular;

use std::collections::BTreeMap;
use std::io::Write;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

pub use modular::MAX_EXACT_STATES;

/// Exterior data for states outside the box.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryPolicy {
    Zero,
    /// `m · min_i a_i a_{i+1}` (needs m ≥ 3).
    UpperBound,
    /// `3ab` (m = 3 only).
    ClosedForm,
    /// Explicit values for every exterior state the grid touches.
    Custom(BTreeMap<Vec<i64>, Rational>),
}

impl BoundaryPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            BoundaryPolicy::Zero => "zero",
            BoundaryPolicy::UpperBound => "upper_bound",
            BoundaryPolicy::ClosedForm => "closed_form",
            BoundaryPolicy::Custom(_) => "custom",
        }
    }

    fn exterior_value(&self, state: &[i64]) -> Result<Rational> {
        match self {
            BoundaryPolicy::Zero => Ok(Rational::zero()),
            BoundaryPolicy::UpperBound => Ok(rational::int(upper_bound(state))),
            BoundaryPolicy::ClosedForm => Ok(rational::int(closed_form_m3(state[0], state[1]))),
            BoundaryPolicy::Custom(map) => map
                .get(state)
                .cloned()
                .ok_or_else(|| Error::invalid(format!("custom boundary has no value for {state:?}"))),
        }
    }
}

/// `τ(a, b) = 3ab` for three teams.
pub fn closed_form_m3(a: i64, b: i64) -> i64 {
    3 * a * b
}

/// `m · min_i a_i a_{i+1}`.
pub fn upper_bound(gaps: &[i64]) -> i64 {
    let m = gaps.len() as i64 + 1;
    m * gaps.windows(2).map(|w| w[0] * w[1]).min().unwrap_or(0)
}

/// `4b(a - 1/2)`, the improved bound for `(a, b, a)` with four teams.
pub fn improved_bound_m4(a: i64, b: i64) -> f64 {
    4.0 * b as f64 * (a as f64 - 0.5)
}

/// The truncated lattice `[1..R]^{m-1}`. States are indexed lexicographically
/// with the last coordinate varying fastest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverGrid {
    pub m: usize,
    pub radius: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Successor {
    Interior(usize),
    Absorbing,
    Exterior,
}

impl SolverGrid {
    pub fn new(m: usize, radius: i64) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid(format!("m must be at least 2, got {m}")));
        }
        if radius < 1 {
            return Err(Error::invalid(format!("radius must be at least 1, got {radius}")));
        }
        let grid = Self { m, radius };
        if grid.len_checked().is_none_or(|n| n > u32::MAX as usize) {
            return Err(Error::invalid("grid too large"));
        }
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.m - 1
    }

    fn len_checked(&self) -> Option<usize> {
        (0..self.dim()).try_fold(1usize, |acc, _| acc.checked_mul(self.radius as usize))
    }

    /// Number of interior states, `R^{m-1}`.
    pub fn len(&self) -> usize {
        self.len_checked().expect("checked at construction")
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, state: &[i64]) -> bool {
        state.len() == self.dim() && state.iter().all(|&g| (1..=self.radius).contains(&g))
    }

    pub fn index(&self, state: &[i64]) -> Option<usize> {
        self.contains(state).then(|| {
            state
                .iter()
                .fold(0usize, |acc, &g| acc * self.radius as usize + (g - 1) as usize)
        })
    }

    pub fn state(&self, mut index: usize) -> Vec<i64> {
        let r = self.radius as usize;
        let mut s = vec![0; self.dim()];
        for slot in s.iter_mut().rev() {
            *slot = (index % r) as i64 + 1;
            index /= r;
        }
        s
    }

    pub(crate) fn successors(&self, state: &[i64]) -> Vec<(Vec<i64>, Successor)> {
        (1..=self.m)
            .map(|w| {
                let mut next = state.to_vec();
                crate::process::apply_winner(&mut next, w);
                let kind = if next.contains(&0) {
                    Successor::Absorbing
                } else if let Some(i) = self.index(&next) {
                    Successor::Interior(i)
                } else {
                    Successor::Exterior
                };
                (next, kind)
            })
            .collect()
    }

    /// Largest index distance between a state and one of its interior successors.
    pub(crate) fn bandwidth(&self) -> usize {
        (self.radius as usize).pow(self.dim().saturating_sub(1) as u32)
    }
}

/// The linear system `τ(s) = c(s) + (1/m) Σ τ(interior successors)`.
pub(crate) struct Recurrence {
    pub m: usize,
    /// Interior successor indices of state `s` at `nbr_start[s]..nbr_start[s+1]`.
    pub nbrs: Vec<u32>,
    pub nbr_start: Vec<usize>,
    /// `m + Σ exterior values`, exactly; `c(s)` is this over `m`.
    pub exact_rhs: Vec<Rational>,
}

impl Recurrence {
    pub fn build(grid: &SolverGrid, policy: &BoundaryPolicy) -> Result<Self> {
        match policy {
            BoundaryPolicy::UpperBound if grid.m < 3 => {
                return Err(Error::invalid("the upper-bound policy needs m >= 3 (E[T] is infinite for m = 2)"))
            }
            BoundaryPolicy::ClosedForm if grid.m != 3 => {
                return Err(Error::invalid("the closed-form policy exists only for m = 3"))
            }
            _ => {}
        }
        let n = grid.len();
        let mut nbrs = Vec::with_capacity(n * grid.m);
        let mut nbr_start = Vec::with_capacity(n + 1);
        let mut exact_rhs = Vec::with_capacity(n);
        let m_q = rational::int(grid.m as i64);
        for s in 0..n {
            nbr_start.push(nbrs.len());
            let mut rhs = m_q.clone();
            for (next, kind) in grid.successors(&grid.state(s)) {
                match kind {
                    Successor::Interior(i) => nbrs.push(i as u32),
                    Successor::Absorbing => {}
                    Successor::Exterior => rhs += policy.exterior_value(&next)?,
                }
            }
            exact_rhs.push(rhs);
        }
        nbr_start.push(nbrs.len());
        Ok(Self {
            m: grid.m,
            nbrs,
            nbr_start,
            exact_rhs,
        })
    }

    pub fn neighbors(&self, s: usize) -> &[u32] {
        &self.nbrs[self.nbr_start[s]..self.nbr_start[s + 1]]
    }

    fn float_constants(&self) -> Vec<f64> {
        let m = self.m as f64;
        self.exact_rhs.iter().map(|q| rational::to_f64(q) / m).collect()
    }
}

/// How the floating-point system is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Sweeps in lexicographic order from a zero start.
    GaussSeidel,
    /// Banded LU factorization, then Gauss–Seidel sweeps until the residual
    /// meets the tolerance. Much faster on large boxes.
    BandedLu,
}

/// Iteration controls for Gauss–Seidel sweeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub method: SolveMethod,
    /// Target for the max absolute residual.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Relaxation factor; 1 is plain Gauss–Seidel, below 1 damps.
    pub omega: f64,
    /// Sweeps between full residual checks.
    pub check_every: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            method: SolveMethod::GaussSeidel,
            tol: 1e-10,
            max_sweeps: 2_000_000,
            omega: 1.0,
            check_every: 8,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_method(mut self, method: SolveMethod) -> Self {
        self.method = method;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(Error::invalid(format!("omega must lie in (0, 2), got {}", self.omega)));
        }
        if self.check_every == 0 || self.max_sweeps == 0 {
            return Err(Error::invalid("check_every and max_sweeps must be positive"));
        }
        Ok(())
    }
}

/// Values on the interior of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub grid: SolverGrid,
    pub values: Vec<f64>,
    /// Present in exact mode.
    pub exact: Option<Vec<Rational>>,
    /// Max over the interior of `|v - c - (1/m) Σ v(successors)|`.
    pub residual: f64,
    pub iterations: usize,
    pub policy: String,
}

impl SolveResult {
    pub fn value(&self, state: &[i64]) -> Option<f64> {
        self.grid.index(state).map(|i| self.values[i])
    }

    pub fn exact_value(&self, state: &[i64]) -> Option<&Rational> {
        let i = self.grid.index(state)?;
        self.exact.as_ref().map(|v| &v[i])
    }

    pub fn meta(&self, tol: f64) -> SolveMeta {
        SolveMeta {
            m: self.grid.m,
            radius: self.grid.radius,
            policy: self.policy.clone(),
            tolerance: tol,
            iterations: self.iterations,
            residual: self.residual,
            exact: self.exact.is_some(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveMeta {
    pub m: usize,
    pub radius: i64,
    pub policy: String,
    pub tolerance: f64,
    pub iterations: usize,
    pub residual: f64,
    pub exact: bool,
}

fn residual(rec: &Recurrence, c: &[f64], v: &[f64]) -> f64 {
    let inv_m = 1.0 / rec.m as f64;
    (0..v.len())
        .map(|s| {
            let sum: f64 = rec.neighbors(s).iter().map(|&j| v[j as usize]).sum();
            (v[s] - c[s] - inv_m * sum).abs()
        })
        .fold(0.0, f64::max)
}

fn sweep_to_tolerance(
    rec: &Recurrence,
    bandwidth: usize,
    c: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, f64, usize)> {
    opts.validate()?;
    let inv_m = 1.0 / rec.m as f64;
    let mut v = match opts.method {
        SolveMethod::GaussSeidel => vec![0.0; c.len()],
        SolveMethod::BandedLu => banded::solve(rec, bandwidth, c)?,
    };
    let r = residual(rec, c, &v);
    if r <= opts.tol {
        return Ok((v, r, 0));
    }
    let mut sweeps = 0;
    loop {
        for _ in 0..opts.check_every {
            for s in 0..v.len() {
                let sum: f64 = rec.neighbors(s).iter().map(|&j| v[j as usize]).sum();
                let gs = c[s] + inv_m * sum;
                v[s] += opts.omega * (gs - v[s]);
            }
        }
        sweeps += opts.check_every;
        let r = residual(rec, c, &v);
        if !r.is_finite() {
            return Err(Error::NotConverged { iterations: sweeps, residual: r });
        }
        if r <= opts.tol {
            return Ok((v, r, sweeps));
        }
        if sweeps >= opts.max_sweeps {
            return Err(Error::NotConverged { iterations: sweeps, residual: r });
        }
    }
}

/// Solves `τ(s) = 1 + (1/m) Σ_k τ(s + ξ_k)` by Gauss–Seidel sweeps in index order.
pub fn solve_expected_t(grid: &SolverGrid, policy: &BoundaryPolicy, opts: &SolveOptions) -> Result<SolveResult> {
    let rec = Recurrence::build(grid, policy)?;
    let c = rec.float_constants();
    let (values, residual, iterations) = sweep_to_tolerance(&rec, grid.bandwidth(), &c, opts)?;
    Ok(SolveResult {
        grid: grid.clone(),
        values,
        exact: None,
        residual,
        iterations,
        policy: policy.name().to_string(),
    })
}

/// Exact rational solution by modular elimination, verified exactly before it
/// is returned. Limited to [`MAX_EXACT_STATES`] interior states.
pub fn solve_expected_t_exact(grid: &SolverGrid, policy: &BoundaryPolicy) -> Result<SolveResult> {
    let rec = Recurrence::build(grid, policy)?;
    let exact = modular::solve(grid, &rec)?;
    let values: Vec<f64> = exact.iter().map(rational::to_f64).collect();
    let c = rec.float_constants();
    let residual = residual(&rec, &c, &values);
    Ok(SolveResult {
        grid: grid.clone(),
        values,
        exact: Some(exact),
        residual,
        iterations: 0,
        policy: policy.name().to_string(),
    })
}

/// Lower and upper solves for `τ` at one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub m: usize,
    pub gaps: Vec<i64>,
    pub radius: i64,
    pub lower: f64,
    pub upper: f64,
    pub lower_meta: SolveMeta,
    pub upper_meta: SolveMeta,
}

/// Both bracket solves as full grids, for export.
pub struct BracketGrids {
    pub lower: SolveResult,
    pub upper: SolveResult,
}

pub fn bracket_grids(grid: &SolverGrid, opts: &SolveOptions) -> Result<BracketGrids> {
    let (lower, upper) = rayon::join(
        || solve_expected_t(grid, &BoundaryPolicy::Zero, opts),
        || solve_expected_t(grid, &BoundaryPolicy::UpperBound, opts),
    );
    Ok(BracketGrids {
        lower: lower?,
        upper: upper?,
    })
}

pub fn bracket_expected_t(m: usize, gaps: &[i64], radius: i64, opts: &SolveOptions) -> Result<Bracket> {
    let grid = SolverGrid::new(m, radius)?;
    if !grid.contains(gaps) {
        return Err(Error::invalid(format!(
            "gaps {gaps:?} must have length {} and lie in [1, {radius}]",
            m - 1
        )));
    }
    let BracketGrids { lower, upper } = bracket_grids(&grid, opts)?;
    Ok(Bracket {
        m,
        gaps: gaps.to_vec(),
        radius,
        lower: lower.value(gaps).expect("inside grid"),
        upper: upper.value(gaps).expect("inside grid"),
        lower_meta: lower.meta(opts.tol),
        upper_meta: upper.meta(opts.tol),
    })
}

/// Solves `S(s) = 1 + (1/m) Σ_k [2 τ(s+ξ_k) + S(s+ξ_k)]` with zero exterior
/// data, where `τ` is a zero-policy solve on the same grid. `S(s)` is then
/// `E[σ²]` for `σ` the first time the walk ties or leaves the box, a lower
/// bound for `E[T²]`.
pub fn solve_second_moment_truncated(tau: &SolveResult, opts: &SolveOptions) -> Result<SolveResult> {
    if tau.policy != BoundaryPolicy::Zero.name() {
        return Err(Error::invalid("the second-moment solve needs a zero-policy expected-time field"));
    }
    let rec = Recurrence::build(&tau.grid, &BoundaryPolicy::Zero)?;
    let m = rec.m as f64;
    let c: Vec<f64> = (0..tau.values.len())
        .map(|s| {
            let sum: f64 = rec.neighbors(s).iter().map(|&j| tau.values[j as usize]).sum();
            1.0 + 2.0 * sum / m
        })
        .collect();
    let (values, residual, iterations) = sweep_to_tolerance(&rec, tau.grid.bandwidth(), &c, opts)?;
    Ok(SolveResult {
        grid: tau.grid.clone(),
        values,
        exact: None,
        residual,
        iterations,
        policy: "second_moment".to_string(),
    })
}

/// `S(1,..,1)` for three teams at each radius, with relative increments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentRow {
    pub radius: i64,
    pub value: f64,
    pub relative_increment: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
}

pub fn second_moment_sequence(
    m: usize,
    gaps: &[i64],
    radii: &[i64],
    tol: f64,
) -> Result<Vec<SecondMomentRow>> {
    let mut rows: Vec<SecondMomentRow> = Vec::new();
    for &r in radii {
        let grid = SolverGrid::new(m, r)?;
        if !grid.contains(gaps) {
            return Err(Error::invalid(format!("gaps {gaps:?} outside radius {r}")));
        }
        let opts = SolveOptions::default().with_method(SolveMethod::BandedLu);
        let tau = solve_expected_t(&grid, &BoundaryPolicy::Zero, &opts)?;
        let s = solve_second_moment_truncated(&tau, &opts.with_tol(tol))?;
        let value = s.value(gaps).expect("inside grid");
        let relative_increment = rows.last().map(|p| (value - p.value) / p.value);
        rows.push(SecondMomentRow {
            radius: r,
            value,
            relative_increment,
            iterations: s.iterations,
            residual: s.residual,
        });
    }
    Ok(rows)
}

/// Writes `a1,...,a_{m-1},tau_lower,tau_upper` for every interior state.
pub fn write_bracket_csv<W: Write>(out: W, grids: &BracketGrids) -> Result<()> {
    let grid = &grids.lower.grid;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..grid.m).map(|i| format!("a{i}")).collect();
    header.extend(["tau_lower".to_string(), "tau_upper".to_string()]);
    w.write_record(&header)?;
    for s in 0..grid.len() {
        let mut rec: Vec<String> = grid.state(s).iter().map(|g| g.to_string()).collect();
        rec.push(grids.lower.values[s].to_string());
        rec.push(grids.upper.values[s].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;

    #[test]
    fn closed_form_values() {
        assert_eq!(closed_form_m3(2, 3), 18);
        assert_eq!(closed_form_m3(1, 1), 3);
        assert_eq!(closed_form_m3(0, 5), 0);
    }

    #[test]
    fn closed_form_is_harmonic() {
        for a in 1..=40i64 {
            for b in 1..=40i64 {
                let lhs = int(3 * a * b);
                let rhs = int(1)
                    + (int(3 * (a - 1) * b) + int(3 * (a + 1) * (b - 1)) + int(3 * a * (b + 1))) / int(3);
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn indexing_round_trips() {
        let g = SolverGrid::new(4, 5).unwrap();
        assert_eq!(g.len(), 125);
        for i in 0..g.len() {
            assert_eq!(g.index(&g.state(i)), Some(i));
        }
        assert_eq!(g.index(&[1, 1, 1]), Some(0));
        assert_eq!(g.index(&[1, 1, 2]), Some(1));
        assert_eq!(g.index(&[0, 1, 1]), None);
        assert_eq!(g.index(&[6, 1, 1]), None);
    }

    #[test]
    fn successors_are_within_bandwidth() {
        let g = SolverGrid::new(4, 6).unwrap();
        for s in 0..g.len() {
            for (_, kind) in g.successors(&g.state(s)) {
                if let Successor::Interior(j) = kind {
                    assert!(s.abs_diff(j) <= g.bandwidth());
                }
            }
        }
    }

    #[test]
    fn closed_form_boundary_reproduces_3ab() {
        let grid = SolverGrid::new(3, 20).unwrap();
        let r = solve_expected_t(&grid, &BoundaryPolicy::ClosedForm, &SolveOptions::default()).unwrap();
        assert!(r.residual <= 1e-10);
        for s in 0..grid.len() {
            let st = grid.state(s);
            assert!((r.values[s] - (3 * st[0] * st[1]) as f64).abs() < 1e-7);
        }
        let e = solve_expected_t_exact(&grid, &BoundaryPolicy::ClosedForm).unwrap();
        for s in 0..grid.len() {
            let st = grid.state(s);
            assert_eq!(e.exact.as_ref().unwrap()[s], int(3 * st[0] * st[1]));
        }
    }

    #[test]
    fn zero_policy_underestimates() {
        let grid = SolverGrid::new(3, 15).unwrap();
        let r = solve_expected_t(&grid, &BoundaryPolicy::Zero, &SolveOptions::default()).unwrap();
        assert!(r.value(&[5, 7]).unwrap() <= 105.0);
        for s in 0..grid.len() {
            let st = grid.state(s);
            assert!(r.values[s] <= (3 * st[0] * st[1]) as f64 + 1e-8);
        }
    }

    #[test]
    fn exact_and_iterative_agree() {
        for (m, radius) in [(3, 8), (4, 5), (5, 3), (2, 10)] {
            let grid = SolverGrid::new(m, radius).unwrap();
            for policy in [BoundaryPolicy::Zero, BoundaryPolicy::UpperBound] {
                if m == 2 && policy == BoundaryPolicy::UpperBound {
                    assert!(solve_expected_t(&grid, &policy, &SolveOptions::default()).is_err());
                    continue;
                }
                let it = solve_expected_t(&grid, &policy, &SolveOptions::default()).unwrap();
                let ex = solve_expected_t_exact(&grid, &policy).unwrap();
                for s in 0..grid.len() {
                    assert!((it.values[s] - ex.values[s]).abs() < 1e-7, "m={m} {policy:?} s={s}");
                }
            }
        }
    }

    #[test]
    fn exact_mode_satisfies_recurrence_exactly() {
        let grid = SolverGrid::new(4, 4).unwrap();
        let ex = solve_expected_t_exact(&grid, &BoundaryPolicy::Zero).unwrap();
        let v = ex.exact.unwrap();
        for s in 0..grid.len() {
            let st = grid.state(s);
            let mut sum = Rational::zero();
            for (_, kind) in grid.successors(&st) {
                if let Successor::Interior(j) = kind {
                    sum += &v[j];
                }
            }
            assert_eq!(&v[s], &(int(1) + sum / int(4)));
        }
    }

    #[test]
    fn custom_policy_needs_every_exterior_value() {
        let grid = SolverGrid::new(3, 2).unwrap();
        let mut map = BTreeMap::new();
        for a in 0..=3i64 {
            for b in 0..=3i64 {
                map.insert(vec![a, b], int(3 * a * b));
            }
        }
        let r = solve_expected_t_exact(&grid, &BoundaryPolicy::Custom(map.clone())).unwrap();
        assert_eq!(r.exact_value(&[2, 2]), Some(&int(12)));
        map.remove(&vec![3, 1]);
        assert!(solve_expected_t(&grid, &BoundaryPolicy::Custom(map), &SolveOptions::default()).is_err());
    }

    #[test]
    fn policy_monotonicity_and_brackets() {
        let b = bracket_expected_t(3, &[2, 3], 30, &SolveOptions::default()).unwrap();
        assert!(b.lower <= 18.0 + 1e-8 && 18.0 <= b.upper + 1e-8, "{b:?}");
        let grid = SolverGrid::new(4, 10).unwrap();
        let g = bracket_grids(&grid, &SolveOptions::default()).unwrap();
        assert!(g.lower.values.iter().zip(&g.upper.values).all(|(l, u)| l <= u));
        let b = bracket_expected_t(4, &[1, 1, 1], 12, &SolveOptions::default()).unwrap();
        assert!(b.lower <= b.upper);
        assert!(b.lower <= 2.0, "{b:?}");
    }

    #[test]
    fn policy_validation() {
        let g2 = SolverGrid::new(2, 5).unwrap();
        assert!(solve_expected_t(&g2, &BoundaryPolicy::UpperBound, &SolveOptions::default()).is_err());
        let g4 = SolverGrid::new(4, 3).unwrap();
        assert!(solve_expected_t(&g4, &BoundaryPolicy::ClosedForm, &SolveOptions::default()).is_err());
        assert!(SolverGrid::new(1, 5).is_err());
        assert!(bracket_expected_t(3, &[2, 9], 5, &SolveOptions::default()).is_err());
        let bad = SolveOptions::default().with_omega(2.5);
        assert!(solve_expected_t(&g4, &BoundaryPolicy::Zero, &bad).is_err());
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let grid = SolverGrid::new(3, 30).unwrap();
        let opts = SolveOptions {
            max_sweeps: 8,
            ..SolveOptions::default()
        };
        match solve_expected_t(&grid, &BoundaryPolicy::Zero, &opts) {
            Err(Error::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 8);
                assert!(residual > 1e-10);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn banded_lu_matches_plain_sweeps() {
        for (m, r) in [(3, 25), (4, 8), (2, 30)] {
            let grid = SolverGrid::new(m, r).unwrap();
            let plain = solve_expected_t(&grid, &BoundaryPolicy::Zero, &SolveOptions::default()).unwrap();
            let lu = solve_expected_t(
                &grid,
                &BoundaryPolicy::Zero,
                &SolveOptions::default().with_method(SolveMethod::BandedLu),
            )
            .unwrap();
            assert!(lu.residual <= 1e-10);
            assert!(lu.iterations < plain.iterations);
            for (a, b) in plain.values.iter().zip(&lu.values) {
                assert!((a - b).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn damped_sweeps_converge() {
        let grid = SolverGrid::new(3, 10).unwrap();
        let r = solve_expected_t(&grid, &BoundaryPolicy::ClosedForm, &SolveOptions::default().with_omega(0.8))
            .unwrap();
        assert!((r.value(&[4, 5]).unwrap() - 60.0).abs() < 1e-7);
    }

    #[test]
    fn second_moment_grows_with_radius() {
        let rows = second_moment_sequence(3, &[1, 1], &[10, 20], 1e-8).unwrap();
        assert!(rows[1].value > rows[0].value);
        // S(1,1) >= E[σ]^2 >= 1.
        assert!(rows[0].value >= 1.0);
    }

    #[test]
    fn bracket_csv_layout() {
        let grid = SolverGrid::new(3, 2).unwrap();
        let g = bracket_grids(&grid, &SolveOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_bracket_csv(&mut buf, &g).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("a1,a2,tau_lower,tau_upper\n1,1,"));
        assert_eq!(text.lines().count(), 5);
    }
}
