//! The Bethe permanent `perm_Bethe(A) = exp(-min_γ F(γ))`, minimizing the
//! Bethe free energy
//!
//! `F(γ) = Σ γ_ij·ln(γ_ij/a_ij) - Σ (1-γ_ij)·ln(1-γ_ij)`
//!
//! over doubly stochastic `γ` supported on the positive entries of `A`.
//!
//! The minimizer satisfies `γ = Sinkhorn(A ⊘ (1-γ))`. Each iteration takes
//! an entropic mirror-descent step `γ ← Sinkhorn(γ^{1-η}·(A ⊘ (1-γ))^η)`,
//! starting with `η = 1` (the plain fixed-point map) and halving `η` until
//! `F` does not increase.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::NonNegMatrix;
use crate::numeric::{pairwise_sum, LogValue};
use crate::perm_group::Permutation;
use crate::support;

const DS_TOL: f64 = 1e-9;
const SINKHORN_TOL: f64 = 1e-13;
const SINKHORN_WARMUP: usize = 200;
const NEWTON_MAX_ITER: usize = 100;
const NEWTON_RIDGE: f64 = 1e-12;
const MIN_STEP: f64 = 1.0 / (1u64 << 30) as f64;
const SNAP: f64 = 1e-10;

/// A doubly stochastic `n×n` matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublyStochastic {
    n: usize,
    gamma: Vec<f64>,
}

impl DoublyStochastic {
    /// Checks entries in `[0, 1]` and unit row and column sums within 1e-9.
    pub fn new(n: usize, gamma: Vec<f64>) -> Result<Self> {
        if n == 0 || gamma.len() != n * n {
            return Err(Error::NotDoublyStochastic(format!(
                "{} entries for dimension {n}",
                gamma.len()
            )));
        }
        if let Some(k) = gamma.iter().position(|&g| !(0.0..=1.0).contains(&g)) {
            return Err(Error::NotDoublyStochastic(format!(
                "entry ({}, {}) = {} outside [0, 1]",
                k / n + 1,
                k % n + 1,
                gamma[k]
            )));
        }
        for i in 0..n {
            let r = pairwise_sum(&gamma[i * n..(i + 1) * n]);
            let c: f64 = pairwise_sum(&(0..n).map(|k| gamma[k * n + i]).collect::<Vec<_>>());
            if (r - 1.0).abs() > DS_TOL || (c - 1.0).abs() > DS_TOL {
                return Err(Error::NotDoublyStochastic(format!(
                    "row/column {} sums to {r}/{c}",
                    i + 1
                )));
            }
        }
        Ok(DoublyStochastic { n, gamma })
    }

    pub fn uniform(n: usize) -> Self {
        DoublyStochastic {
            n,
            gamma: vec![1.0 / n as f64; n * n],
        }
    }

    /// The permutation matrix with ones at `(i, σ(i))`.
    pub fn from_permutation(sigma: &Permutation) -> Self {
        let n = sigma.n();
        let mut gamma = vec![0.0; n * n];
        for (i, &j) in sigma.as_zero_based().iter().enumerate() {
            gamma[i * n + j] = 1.0;
        }
        DoublyStochastic { n, gamma }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// 0-based entry access.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gamma[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gamma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetheResult {
    pub value: f64,
    /// `-F` at the returned `γ`.
    pub log_value: f64,
    pub gamma: DoublyStochastic,
    /// `max |T(γ) - γ|` for the fixed-point map `T`.
    pub residual: f64,
    pub iterations: usize,
}

impl BetheResult {
    pub fn log(&self) -> LogValue {
        LogValue::from_log(self.log_value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetheOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BetheOptions {
    fn default() -> Self {
        BetheOptions {
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

fn xlogx_ratio(g: f64, a: f64) -> f64 {
    if g == 0.0 {
        0.0
    } else {
        g * (g / a).ln()
    }
}

fn one_minus_entropy(g: f64) -> f64 {
    let h = 1.0 - g;
    if h <= 0.0 {
        0.0
    } else {
        h * h.ln()
    }
}

/// `F(γ)` with `0·ln 0 = 0`.
pub fn bethe_free_energy(a: &NonNegMatrix, gamma: &DoublyStochastic) -> Result<f64> {
    let n = a.n();
    if gamma.n != n {
        return Err(Error::DimensionMismatch {
            left: n,
            right: gamma.n,
        });
    }
    let mut terms = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (g, w) = (gamma.get(i, j), a.get(i, j));
            if g > 0.0 && w == 0.0 {
                return Err(Error::SupportViolation { row: i, col: j });
            }
            terms.push(xlogx_ratio(g, w) - one_minus_entropy(g));
        }
    }
    Ok(pairwise_sum(&terms))
}

/// Balances `k` (an `m×m` non-negative matrix with total support) to doubly
/// stochastic form in place.
///
/// A few alternating row/column normalizations are followed by Newton's
/// method on the convex dual `Σ k_ij e^{x_i+y_j} - Σx - Σy`, which stays
/// quadratically convergent when the limit is close to a permutation matrix
/// (where plain alternation slows to a crawl).
pub fn sinkhorn(m: usize, k: &mut [f64]) {
    for _ in 0..SINKHORN_WARMUP {
        normalize_rows(m, k);
        normalize_cols(m, k);
        if max_row_defect(m, k) < SINKHORN_TOL {
            return;
        }
    }
    newton_balance(m, k);
}

fn normalize_rows(m: usize, k: &mut [f64]) {
    for row in k.chunks_mut(m) {
        let s = pairwise_sum(row);
        row.iter_mut().for_each(|v| *v /= s);
    }
}

fn normalize_cols(m: usize, k: &mut [f64]) {
    let mut col = vec![0.0; m];
    for row in k.chunks(m) {
        for (c, v) in col.iter_mut().zip(row) {
            *c += v;
        }
    }
    for row in k.chunks_mut(m) {
        for (v, c) in row.iter_mut().zip(&col) {
            *v /= c;
        }
    }
}

fn max_row_defect(m: usize, k: &[f64]) -> f64 {
    k.chunks(m)
        .map(|row| (pairwise_sum(row) - 1.0).abs())
        .fold(0.0, f64::max)
}

fn newton_balance(m: usize, k: &mut [f64]) {
    let log_k: Vec<f64> = k.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).collect();
    let mut x = vec![0.0; 2 * m];
    let scaled = |x: &[f64]| -> Vec<f64> {
        (0..m * m)
            .map(|idx| (log_k[idx] + x[idx / m] + x[m + idx % m]).exp())
            .collect()
    };
    let dual = |s: &[f64], x: &[f64]| pairwise_sum(s) - x.iter().sum::<f64>();
    let mut s = scaled(&x);
    for _ in 0..NEWTON_MAX_ITER {
        let mut grad = vec![-1.0; 2 * m];
        for idx in 0..m * m {
            grad[idx / m] += s[idx];
            grad[m + idx % m] += s[idx];
        }
        if grad.iter().all(|g| g.abs() < SINKHORN_TOL) {
            break;
        }
        // Hessian [[diag(r), S], [Sᵀ, diag(c)]], singular along (1, -1)
        let dim = 2 * m;
        let mut h = vec![0.0; dim * dim];
        for (idx, &v) in s.iter().enumerate() {
            let (i, j) = (idx / m, m + idx % m);
            h[i * dim + i] += v;
            h[j * dim + j] += v;
            h[i * dim + j] = v;
            h[j * dim + i] = v;
        }
        for d in 0..dim {
            h[d * dim + d] += NEWTON_RIDGE;
        }
        let step = solve_spd(dim, h, grad.iter().map(|g| -g).collect());
        let slope: f64 = step.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let f0 = dual(&s, &x);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            let ts = scaled(&trial);
            if dual(&ts, &trial) <= f0 + 1e-4 * t * slope || t < 1e-12 {
                x = trial;
                s = ts;
                break;
            }
            t *= 0.5;
        }
    }
    k.copy_from_slice(&s);
    normalize_cols(m, k);
}

fn solve_spd(dim: usize, a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    let h = DMatrix::from_row_slice(dim, dim, &a);
    let rhs = DVector::from_vec(b);
    match h.clone().cholesky() {
        Some(c) => c.solve(&rhs).as_slice().to_vec(),
        None => h
            .lu()
            .solve(&rhs)
            .map(|v| v.as_slice().to_vec())
            .unwrap_or_else(|| vec![0.0; dim]),
    }
}

// The optimization over the free block: rows and columns not pinned by a
// forced entry.
struct FreeBlock {
    rows: Vec<usize>,
    cols: Vec<usize>,
    // a restricted to allowed edges, 0 elsewhere
    a: Vec<f64>,
}

impl FreeBlock {
    fn m(&self) -> usize {
        self.rows.len()
    }

    fn energy(&self, g: &[f64]) -> f64 {
        let terms: Vec<f64> = g
            .iter()
            .zip(&self.a)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&g, &w)| xlogx_ratio(g, w) - one_minus_entropy(g))
            .collect();
        pairwise_sum(&terms)
    }

    // Sinkhorn(g^{1-η}·(a/(1-g))^η)
    fn step(&self, g: &[f64], eta: f64) -> Vec<f64> {
        let mut k: Vec<f64> = g
            .iter()
            .zip(&self.a)
            .map(|(&g, &w)| {
                if w == 0.0 {
                    0.0
                } else {
                    let target = w / (1.0 - g).max(f64::EPSILON);
                    if eta == 1.0 {
                        target
                    } else {
                        g.powf(1.0 - eta) * target.powf(eta)
                    }
                }
            })
            .collect();
        sinkhorn(self.m(), &mut k);
        k
    }
}

fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// `perm_Bethe(A)` by minimizing the Bethe free energy.
///
/// Entries on no perfect matching are fixed at zero; entries that are the
/// only admissible one in their row are fixed at one. On hitting `max_iter`
/// the best iterate is returned inside [`Error::NotConverged`].
pub fn bethe_permanent(a: &NonNegMatrix, opts: &BetheOptions) -> Result<BetheResult> {
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::ParameterDomain(format!(
            "tolerance {} must be positive",
            opts.tol
        )));
    }
    let n = a.n();
    let mut gamma = vec![0.0; n * n];
    let mut pinned_row = vec![false; n];
    let mut pinned_col = vec![false; n];
    let mut residual = 0.0;
    let mut iterations = 0;
    let converged = loop {
        let Some(block) = reduce(a, &mut gamma, &mut pinned_row, &mut pinned_col)? else {
            break true;
        };
        let m = block.m();
        let mut g = block.a.clone();
        sinkhorn(m, &mut g);
        let mut f = block.energy(&g);
        let mut eta = 1.0f64;
        let mut snap = false;
        let done = loop {
            let t = block.step(&g, 1.0);
            residual = max_abs_diff(&t, &g);
            if residual <= opts.tol {
                break true;
            }
            // the minimizer sits on a face of the polytope; pin the entries
            // that reached it and re-solve the smaller problem
            if g.iter().any(|&v| v > 1.0 - SNAP) {
                snap = true;
                break false;
            }
            if iterations >= opts.max_iter {
                break false;
            }
            iterations += 1;
            let slack = 1e-14 * f.abs().max(1.0);
            let mut step = eta;
            loop {
                let trial = if step == 1.0 { t.clone() } else { block.step(&g, step) };
                let ft = block.energy(&trial);
                if ft <= f + slack || step <= MIN_STEP {
                    g = trial;
                    f = ft;
                    break;
                }
                step *= 0.5;
            }
            eta = (2.0 * step).min(1.0);
        };
        for (r, &i) in block.rows.iter().enumerate() {
            for (c, &j) in block.cols.iter().enumerate() {
                let v = g[r * m + c];
                gamma[i * n + j] = if snap && v > 1.0 - SNAP { 1.0 } else { v };
            }
        }
        if snap {
            for (r, &i) in block.rows.iter().enumerate() {
                for (c, &j) in block.cols.iter().enumerate() {
                    if g[r * m + c] > 1.0 - SNAP {
                        pin(&mut gamma, n, i, j, &mut pinned_row, &mut pinned_col);
                    }
                }
            }
            continue;
        }
        break done;
    };
    let gamma = DoublyStochastic { n, gamma };
    let log_value = -bethe_free_energy(a, &gamma)?;
    let result = BetheResult {
        value: log_value.exp(),
        log_value,
        gamma,
        residual,
        iterations,
    };
    if converged {
        Ok(result)
    } else {
        Err(Error::NotConverged(Box::new(result)))
    }
}

fn pin(gamma: &mut [f64], n: usize, i: usize, j: usize, rows: &mut [bool], cols: &mut [bool]) {
    for k in 0..n {
        gamma[i * n + k] = 0.0;
        gamma[k * n + j] = 0.0;
    }
    gamma[i * n + j] = 1.0;
    rows[i] = true;
    cols[j] = true;
}

// Restricts the unpinned part of `a` to entries lying on a perfect matching,
// pins rows left with a single such entry (repeatedly), and returns what
// remains, or `None` once everything is pinned.
fn reduce(
    a: &NonNegMatrix,
    gamma: &mut [f64],
    pinned_row: &mut [bool],
    pinned_col: &mut [bool],
) -> Result<Option<FreeBlock>> {
    let n = a.n();
    loop {
        let rows: Vec<usize> = (0..n).filter(|&i| !pinned_row[i]).collect();
        let cols: Vec<usize> = (0..n).filter(|&j| !pinned_col[j]).collect();
        let m = rows.len();
        if m == 0 {
            return Ok(None);
        }
        let allowed = support::allowed_edges(m, |r, c| a.get(rows[r], cols[c]) > 0.0)
            .ok_or(Error::InfeasibleSupport)?;
        let mut pinned_any = false;
        for r in 0..m {
            let mut it = (0..m).filter(|&c| allowed[r * m + c]);
            if let (Some(c), None) = (it.next(), it.next()) {
                pin(gamma, n, rows[r], cols[c], pinned_row, pinned_col);
                pinned_any = true;
            }
        }
        if pinned_any {
            continue;
        }
        let block_a = (0..m * m)
            .map(|k| {
                if allowed[k] {
                    a.get(rows[k / m], cols[k % m])
                } else {
                    0.0
                }
            })
            .collect();
        return Ok(Some(FreeBlock {
            rows,
            cols,
            a: block_a,
        }));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::permanent_ryser;
    use crate::numeric::rel_err;

    fn run(a: &NonNegMatrix) -> BetheResult {
        bethe_permanent(a, &BetheOptions::default()).unwrap()
    }

    #[test]
    fn all_one_closed_forms() {
        assert!((run(&NonNegMatrix::ones(2)).value - 1.0).abs() < 1e-6);
        assert!((run(&NonNegMatrix::ones(3)).value - 1728.0 / 729.0).abs() < 1e-5);
        for n in [4, 9] {
            let nf = n as f64;
            let closed = nf.powf(nf) * ((nf - 1.0) / nf).powf(nf * (nf - 1.0));
            assert!(rel_err(run(&NonNegMatrix::ones(n)).value, closed) < 1e-10);
        }
    }

    #[test]
    fn free_energy_examples() {
        let n = 3;
        let f = bethe_free_energy(&NonNegMatrix::ones(n), &DoublyStochastic::uniform(n)).unwrap();
        let nf = n as f64;
        let expected = -nf * nf.ln() - nf * (nf - 1.0) * ((nf - 1.0) / nf).ln();
        assert!((f - expected).abs() < 1e-14);
        assert!(
            bethe_free_energy(&NonNegMatrix::ones(2), &DoublyStochastic::uniform(2))
                .unwrap()
                .abs()
                < 1e-15
        );
        let a = NonNegMatrix::from_rows(&[[2.0, 1.0], [1.0, 5.0]]).unwrap();
        let vertex = DoublyStochastic::from_permutation(&Permutation::identity(2));
        assert!((bethe_free_energy(&a, &vertex).unwrap() + 10f64.ln()).abs() < 1e-15);
        let id = NonNegMatrix::identity(2);
        assert_eq!(bethe_free_energy(&id, &vertex).unwrap(), 0.0);
        assert!(matches!(
            bethe_free_energy(&id, &DoublyStochastic::uniform(2)),
            Err(Error::SupportViolation { .. })
        ));
    }

    #[test]
    fn permutation_supported_matrix_is_exact() {
        let a = NonNegMatrix::from_rows(&[[0.0, 2.0, 0.0], [0.0, 0.0, 3.0], [0.5, 0.0, 0.0]])
            .unwrap();
        let r = run(&a);
        assert!(rel_err(r.value, 3.0) < 1e-15);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn infeasible_support_errors() {
        let a = NonNegMatrix::from_rows(&[[1.0, 1.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(
            bethe_permanent(&a, &BetheOptions::default()),
            Err(Error::InfeasibleSupport)
        ));
    }

    #[test]
    fn mixed_support_with_forced_edges() {
        // column 3 only reachable from row 3, rest full
        let a = NonNegMatrix::from_rows(&[
            [1.0, 2.0, 0.0],
            [3.0, 1.0, 0.0],
            [1.0, 1.0, 4.0],
        ])
        .unwrap();
        let r = run(&a);
        assert!(r.residual <= 1e-8);
        assert!(r.gamma.get(2, 2) == 1.0 && r.gamma.get(2, 0) == 0.0);
        assert!(r.value <= permanent_ryser(&a).unwrap() * (1.0 + 1e-9));
        DoublyStochastic::new(3, r.gamma.as_slice().to_vec()).unwrap();
    }

    #[test]
    fn random_matrices_stay_below_permanent() {
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for n in 2..=6 {
            let a = NonNegMatrix::new(n, (0..n * n).map(|_| next()).collect()).unwrap();
            let r = run(&a);
            assert!(r.value <= permanent_ryser(&a).unwrap() * (1.0 + 1e-6));
            assert!(r.residual <= 1e-8);
        }
    }

    #[test]
    fn not_converged_carries_best_iterate() {
        let a = NonNegMatrix::from_rows(&[[1.0, 5.0, 0.2], [2.0, 1.0, 3.0], [0.1, 1.0, 1.0]])
            .unwrap();
        let opts = BetheOptions {
            tol: 1e-14,
            max_iter: 1,
        };
        match bethe_permanent(&a, &opts) {
            Err(Error::NotConverged(best)) => assert_eq!(best.iterations, 1),
            other => panic!("{other:?}"),
        }
        assert!(bethe_permanent(&a, &BetheOptions { tol: 0.0, max_iter: 5 }).is_err());
    }

    #[test]
    fn balancing_near_a_permutation() {
        let mut k = vec![1.0, 2.0 / 6.09e-9, 3.0 / 7.49e-9, 1.0];
        sinkhorn(2, &mut k);
        assert!((k[0] + k[1] - 1.0).abs() < 1e-13);
        assert!((k[2] + k[3] - 1.0).abs() < 1e-13);
        assert!((k[0] + k[2] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn doubly_stochastic_validation() {
        assert!(DoublyStochastic::new(2, vec![0.5, 0.5, 0.5, 0.5]).is_ok());
        assert!(DoublyStochastic::new(2, vec![1.0, 0.0, 1.0, 0.0]).is_err());
        assert!(DoublyStochastic::new(2, vec![1.5, -0.5, -0.5, 1.5]).is_err());
    }
}
