//! Dense non-negative square matrices, exact permanents, and graph-cover
//! lifts.

use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::numeric::{pairwise_sum, PairwiseAccumulator};
use crate::perm_group::Permutation;
use crate::support;

pub use crate::numeric::LogValue;

pub const MAX_NAIVE_N: usize = 12;
pub const MAX_RYSER_N: usize = 30;

// Gray-code terms handled by one sequential chunk in Ryser's sum. Row sums
// are recomputed from scratch at every chunk start.
const RYSER_CHUNK_LOG2: u32 = 12;

/// Square matrix with non-negative finite entries, stored row-major.
#[derive(Clone, PartialEq)]
pub struct NonNegMatrix {
    n: usize,
    data: Vec<f64>,
}

impl NonNegMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::NotSquare("empty matrix".into()));
        }
        if data.len() != n * n {
            return Err(Error::NotSquare(format!(
                "{} entries for dimension {n}",
                data.len()
            )));
        }
        for (k, &v) in data.iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidEntry {
                    row: k / n,
                    col: k % n,
                    value: v,
                });
            }
        }
        Ok(NonNegMatrix { n, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n {
                return Err(Error::NotSquare(format!(
                    "row {} has {} entries, expected {n}",
                    i + 1,
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(n, data)
    }

    pub fn ones(n: usize) -> Self {
        NonNegMatrix {
            n,
            data: vec![1.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n]).expect("identity is valid")
    }

    pub fn zeros(n: usize) -> Self {
        NonNegMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn diagonal(d: &[f64]) -> Result<Self> {
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for (i, &v) in d.iter().enumerate() {
            data[i * n + i] = v;
        }
        Self::new(n, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// 0-based entry access.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// `c·A`; panics if `c` is negative.
    pub fn scaled(&self, c: f64) -> Self {
        assert!(c >= 0.0);
        NonNegMatrix {
            n: self.n,
            data: self.data.iter().map(|&v| v * c).collect(),
        }
    }

    /// `D·A·E` for diagonal `D = diag(row)` and `E = diag(col)`.
    pub fn diag_scaled(&self, row: &[f64], col: &[f64]) -> Result<Self> {
        if row.len() != self.n || col.len() != self.n {
            return Err(Error::DimensionMismatch {
                left: self.n,
                right: row.len().max(col.len()),
            });
        }
        let n = self.n;
        let data = (0..n * n)
            .map(|k| row[k / n] * self.data[k] * col[k % n])
            .collect();
        Self::new(n, data)
    }

    /// `P·A·Q` where row `i` of the result is row `rows(i)` of `A` and column
    /// `j` is column `cols(j)`.
    pub fn permuted(&self, rows: &Permutation, cols: &Permutation) -> Result<Self> {
        if rows.n() != self.n || cols.n() != self.n {
            return Err(Error::DimensionMismatch {
                left: self.n,
                right: rows.n().max(cols.n()),
            });
        }
        let (r, c) = (rows.as_zero_based(), cols.as_zero_based());
        let n = self.n;
        let data = (0..n * n).map(|k| self.get(r[k / n], c[k % n])).collect();
        Ok(NonNegMatrix { n, data })
    }

    /// `Π_i a_{i,σ(i)}`.
    pub fn weight(&self, sigma: &Permutation) -> f64 {
        self.weight_of(sigma.as_zero_based())
    }

    #[inline]
    pub(crate) fn weight_of(&self, map: &[usize]) -> f64 {
        map.iter()
            .enumerate()
            .fold(1.0, |acc, (i, &j)| acc * self.get(i, j))
    }

    pub fn has_perfect_matching(&self) -> bool {
        support::perfect_matching(self.n, |i, j| self.get(i, j) > 0.0).is_some()
    }

    /// CSV: one row per line, comma-separated decimal entries.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .enumerate()
            .map(|(i, line)| {
                line.split(',')
                    .map(|t| {
                        t.trim().parse::<f64>().map_err(|e| {
                            Error::Parse(format!("line {}: {:?}: {e}", i + 1, t.trim()))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(&rows)
    }

    /// JSON array of arrays.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_rows(&rows)
    }

    /// Reads a `.json` or CSV file; content starting with `[` is taken as
    /// JSON regardless of extension.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let is_json = path.extension().is_some_and(|e| e == "json")
            || text.trim_start().starts_with('[');
        if is_json {
            Self::from_json_str(&text)
        } else {
            Self::from_csv_str(&text)
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.data.chunks(self.n) {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

impl fmt::Debug for NonNegMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.n)).finish()
    }
}

/// `Σ_σ Π_i a_{i,σ(i)}` by explicit enumeration of `S_n`.
pub fn permanent_naive(a: &NonNegMatrix) -> Result<f64> {
    check_dim("permanent_naive", a.n, MAX_NAIVE_N)?;
    let n = a.n;
    if n < 9 {
        return Ok(naive_raw(n, &a.data));
    }
    // one independent subtree per column of the first row
    let partials: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut acc = PairwiseAccumulator::new();
            naive_dfs(n, &a.data, 1, 1u32 << j, a.data[j], &mut acc);
            acc.sum()
        })
        .collect();
    Ok(pairwise_sum(&partials))
}

/// Sequential product-sum permanent.
pub(crate) fn naive_raw(n: usize, data: &[f64]) -> f64 {
    debug_assert_eq!(data.len(), n * n);
    let mut acc = PairwiseAccumulator::new();
    for j in 0..n {
        naive_dfs(n, data, 1, 1u32 << j, data[j], &mut acc);
    }
    acc.sum()
}

fn naive_dfs(n: usize, data: &[f64], row: usize, used: u32, prod: f64, acc: &mut PairwiseAccumulator) {
    if prod == 0.0 {
        return;
    }
    if row == n {
        acc.push(prod);
        return;
    }
    for j in 0..n {
        if used >> j & 1 == 0 {
            naive_dfs(n, data, row + 1, used | 1 << j, prod * data[row * n + j], acc);
        }
    }
}

/// Inclusion–exclusion permanent in Gray-code order.
///
/// Uses the centred form `perm(A) = 2 Σ_{S ⊆ [n-1]} (-1)^{n-|S|} Π_i (x_i +
/// Σ_{j∈S} a_ij)` with `x_i = -½ Σ_j a_ij`, which halves the number of terms
/// and shrinks their magnitude relative to the plain Ryser sum.
pub fn permanent_ryser(a: &NonNegMatrix) -> Result<f64> {
    check_dim("permanent_ryser", a.n, MAX_RYSER_N)?;
    if !a.has_perfect_matching() {
        return Ok(0.0);
    }
    Ok(ryser_raw(a.n, &a.data).max(0.0))
}

/// Ryser sum without support checks or clamping. Bit-identical for any
/// thread count.
pub(crate) fn ryser_raw(n: usize, data: &[f64]) -> f64 {
    debug_assert_eq!(data.len(), n * n);
    if n == 1 {
        return data[0];
    }
    let free = (n - 1) as u32;
    let total: u64 = 1 << free;
    let chunk: u64 = 1 << RYSER_CHUNK_LOG2.min(free);
    let chunks = total / chunk;
    let base: Vec<f64> = data.chunks(n).map(|r| -0.5 * pairwise_sum(r)).collect();
    let run = |c: u64| ryser_chunk(n, data, &base, c * chunk, (c + 1) * chunk);
    let s = if chunks == 1 {
        run(0)
    } else {
        let partials: Vec<f64> = (0..chunks).into_par_iter().map(run).collect();
        pairwise_sum(&partials)
    };
    2.0 * s
}

fn ryser_chunk(n: usize, data: &[f64], base: &[f64], lo: u64, hi: u64) -> f64 {
    let gray = |k: u64| k ^ (k >> 1);
    let mut g = gray(lo);
    let mut sums = base.to_vec();
    for (i, s) in sums.iter_mut().enumerate() {
        let row = &data[i * n..(i + 1) * n];
        let mut bits = g;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            *s += row[j];
            bits &= bits - 1;
        }
    }
    let mut acc = PairwiseAccumulator::new();
    let mut k = lo;
    loop {
        let prod: f64 = sums.iter().product();
        let odd = (n as u32 - g.count_ones()) % 2 == 1;
        acc.push(if odd { -prod } else { prod });
        k += 1;
        if k >= hi {
            break;
        }
        let j = k.trailing_zeros() as usize;
        g ^= 1 << j;
        if g >> j & 1 == 1 {
            for (i, s) in sums.iter_mut().enumerate() {
                *s += data[i * n + j];
            }
        } else {
            for (i, s) in sums.iter_mut().enumerate() {
                *s -= data[i * n + j];
            }
        }
    }
    acc.sum()
}

/// Permanent in the log domain. Rows and columns are rescaled by their
/// maxima before the inclusion–exclusion sum, so intermediate values stay
/// near unit scale.
pub fn log_permanent(a: &NonNegMatrix) -> Result<LogValue> {
    check_dim("log_permanent", a.n, MAX_RYSER_N)?;
    if !a.has_perfect_matching() {
        return Ok(LogValue::ZERO);
    }
    let n = a.n;
    let row_max: Vec<f64> = (0..n)
        .map(|i| a.row(i).iter().copied().fold(0.0, f64::max))
        .collect();
    let mut data: Vec<f64> = (0..n * n).map(|k| a.data[k] / row_max[k / n]).collect();
    let col_max: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| data[i * n + j]).fold(0.0, f64::max))
        .collect();
    for (k, v) in data.iter_mut().enumerate() {
        *v /= col_max[k % n];
    }
    let scaled = ryser_raw(n, &data);
    if scaled <= 0.0 {
        // only reachable through rounding on a vanishingly small permanent
        return Ok(LogValue::ZERO);
    }
    let log_scale: f64 = row_max.iter().chain(&col_max).map(|v| v.ln()).sum();
    Ok(LogValue::from_log(scaled.ln() + log_scale))
}

/// The `n²` permutation blocks `P̃^{(i,j)}` of an M-cover, row-major in
/// `(i, j)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverAssignment {
    m: usize,
    blocks: Vec<Permutation>,
}

impl CoverAssignment {
    pub fn new(m: usize, blocks: Vec<Permutation>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidCover("cover degree must be positive".into()));
        }
        let n = (blocks.len() as f64).sqrt().round() as usize;
        if n == 0 || n * n != blocks.len() {
            return Err(Error::InvalidCover(format!(
                "{} blocks is not a square count",
                blocks.len()
            )));
        }
        if let Some((k, b)) = blocks.iter().enumerate().find(|(_, b)| b.n() != m) {
            return Err(Error::InvalidCover(format!(
                "block ({}, {}) acts on [{}], expected [{m}]",
                k / n + 1,
                k % n + 1,
                b.n()
            )));
        }
        Ok(CoverAssignment { m, blocks })
    }

    /// Every block the identity: `M` disjoint copies of the base graph.
    pub fn trivial(n: usize, m: usize) -> Self {
        CoverAssignment {
            m,
            blocks: vec![Permutation::identity(m); n * n],
        }
    }

    /// Double cover from a bitmask: bit `i*n + j` set means block `(i, j)` is
    /// the swap.
    pub fn double_from_mask(n: usize, mask: u64) -> Self {
        let id = Permutation::identity(2);
        let swap = Permutation::transposition(2, 1, 2).expect("valid swap");
        let blocks = (0..n * n)
            .map(|k| {
                if mask >> k & 1 == 1 {
                    swap.clone()
                } else {
                    id.clone()
                }
            })
            .collect();
        CoverAssignment { m: 2, blocks }
    }

    pub fn degree(&self) -> usize {
        self.m
    }

    pub fn base_dimension(&self) -> usize {
        (self.blocks.len() as f64).sqrt().round() as usize
    }

    /// Block for 0-based edge `(i, j)`.
    pub fn block(&self, i: usize, j: usize) -> &Permutation {
        &self.blocks[i * self.base_dimension() + j]
    }

    pub fn blocks(&self) -> &[Permutation] {
        &self.blocks
    }
}

/// The `(Mn)×(Mn)` block matrix whose block `(i, j)` is `a_ij·P̃^{(i,j)}`,
/// where the permutation matrix of `π` has ones at `(s, π(s))`.
pub fn lift(a: &NonNegMatrix, cover: &CoverAssignment) -> Result<NonNegMatrix> {
    let n = a.n;
    if cover.blocks.len() != n * n {
        return Err(Error::InvalidCover(format!(
            "{} blocks for a {n}x{n} matrix",
            cover.blocks.len()
        )));
    }
    let m = cover.m;
    let big = m * n;
    let mut data = vec![0.0; big * big];
    for i in 0..n {
        for j in 0..n {
            let w = a.get(i, j);
            let block = cover.blocks[i * n + j].as_zero_based();
            for (s, &t) in block.iter().enumerate() {
                data[(i * m + s) * big + j * m + t] = w;
            }
        }
    }
    Ok(NonNegMatrix { n: big, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{factorial, rel_err};

    fn m(rows: &[&[f64]]) -> NonNegMatrix {
        NonNegMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(
            NonNegMatrix::from_rows(&[[1.0, -1.0], [0.0, 1.0]]),
            Err(Error::InvalidEntry { row: 0, col: 1, .. })
        ));
        assert!(NonNegMatrix::from_rows(&[vec![1.0, 2.0]]).is_err());
        assert!(NonNegMatrix::new(2, vec![1.0; 3]).is_err());
        assert!(NonNegMatrix::new(1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn naive_examples() {
        assert_eq!(permanent_naive(&NonNegMatrix::ones(3)).unwrap(), 6.0);
        assert_eq!(permanent_naive(&m(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap(), 10.0);
        assert_eq!(permanent_naive(&NonNegMatrix::identity(4)).unwrap(), 1.0);
        assert!(matches!(
            permanent_naive(&NonNegMatrix::ones(13)),
            Err(Error::DimensionLimit { .. })
        ));
    }

    #[test]
    fn ryser_examples() {
        assert!(rel_err(permanent_ryser(&m(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap(), 10.0) < 1e-15);
        assert!(rel_err(permanent_ryser(&NonNegMatrix::ones(6)).unwrap(), 720.0) < 1e-14);
        let doubled = lift(&NonNegMatrix::ones(3), &CoverAssignment::trivial(3, 2)).unwrap();
        assert!(rel_err(permanent_ryser(&doubled).unwrap(), 36.0) < 1e-14);
        assert_eq!(permanent_ryser(&NonNegMatrix::zeros(3)).unwrap(), 0.0);
        assert!(permanent_ryser(&NonNegMatrix::ones(31)).is_err());
    }

    #[test]
    fn ryser_handles_all_one_up_to_twenty() {
        for n in [1, 2, 9, 13, 14, 20] {
            let p = permanent_ryser(&NonNegMatrix::ones(n)).unwrap();
            assert!(rel_err(p, factorial(n as u64)) < 1e-12, "n = {n}: {p}");
        }
    }

    #[test]
    fn log_permanent_examples() {
        let lv = log_permanent(&NonNegMatrix::identity(2)).unwrap();
        assert!(!lv.is_zero && lv.log_magnitude.abs() < 1e-15);
        assert!(log_permanent(&NonNegMatrix::zeros(2)).unwrap().is_zero);
        let lv = log_permanent(&NonNegMatrix::ones(10)).unwrap();
        assert!((lv.log_magnitude - 15.104_412_573_075_516).abs() < 1e-9);
    }

    #[test]
    fn zero_flag_tracks_structural_zeros() {
        // positive entries, but all in two columns
        let a = m(&[&[1.0, 2.0, 0.0], &[3.0, 1.0, 0.0], &[5.0, 1.0, 0.0]]);
        assert!(log_permanent(&a).unwrap().is_zero);
        assert_eq!(permanent_ryser(&a).unwrap(), 0.0);
        let b = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(!log_permanent(&b).unwrap().is_zero);
    }

    #[test]
    fn lift_examples() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let two = lift(&a, &CoverAssignment::trivial(2, 2)).unwrap();
        assert_eq!(two.n(), 4);
        assert!(rel_err(permanent_ryser(&two).unwrap(), 100.0) < 1e-14);

        let swapped = lift(&a, &CoverAssignment::double_from_mask(2, 0b1111)).unwrap();
        assert_eq!(
            swapped.rows(),
            vec![
                vec![0.0, 1.0, 0.0, 2.0],
                vec![1.0, 0.0, 2.0, 0.0],
                vec![0.0, 3.0, 0.0, 4.0],
                vec![3.0, 0.0, 4.0, 0.0],
            ]
        );
        assert!(rel_err(permanent_ryser(&swapped).unwrap(), 100.0) < 1e-14);

        assert_eq!(lift(&a, &CoverAssignment::trivial(2, 1)).unwrap(), a);
    }

    #[test]
    fn lift_rejects_mismatched_covers() {
        let a = NonNegMatrix::ones(2);
        assert!(lift(&a, &CoverAssignment::trivial(3, 2)).is_err());
        let blocks = vec![Permutation::identity(2), Permutation::identity(3)];
        assert!(CoverAssignment::new(2, blocks).is_err());
        assert!(CoverAssignment::new(2, vec![Permutation::identity(2); 3]).is_err());
    }

    #[test]
    fn parses_csv_and_json() {
        let a = NonNegMatrix::from_csv_str("1, 2\n3,4\n\n").unwrap();
        assert_eq!(a, m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = NonNegMatrix::from_json_str("[[1,2],[3,4.0]]").unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            NonNegMatrix::from_csv_str("1,-2\n3,4"),
            Err(Error::InvalidEntry { .. })
        ));
        assert!(matches!(
            NonNegMatrix::from_csv_str("1,2,3\n3,4,5"),
            Err(Error::NotSquare(_))
        ));
        assert!(matches!(
            NonNegMatrix::from_json_str("[[1,2],[3]]"),
            Err(Error::NotSquare(_))
        ));
        assert!(matches!(
            NonNegMatrix::from_csv_str("1,x\n3,4"),
            Err(Error::Parse(_))
        ));
        assert_eq!(NonNegMatrix::from_csv_str(&a.to_csv()).unwrap(), a);
    }
}
