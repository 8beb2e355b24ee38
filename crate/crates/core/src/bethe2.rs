//! The degree-2 Bethe permanent `perm_{Bethe,2}(A)` by several independent
//! routes, and `perm_{Bethe,M}` by exhaustive cover enumeration for tiny `M`.
//!
//! * [`bethe2_pairsum`]: the weighted double sum over `S_n × S_n` with
//!   weights `2^{-c(σ1,σ2)}`.
//! * [`bethe2_grouped`]: the same sum regrouped by `σ = σ1∘σ2⁻¹`, one
//!   permanent per `σ`. This is the production evaluator.
//! * [`bethe2_cover_average`]: square root of the mean permanent over all
//!   `2^{n²}` double covers.
//! * [`zhat_partition`]: the partition function of the transformed factor
//!   graph, summed over its valid configurations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::matrix::{lift, naive_raw, permanent_ryser, ryser_raw, CoverAssignment, NonNegMatrix};
use crate::numeric::{pairwise_sum, LogValue, PairwiseAccumulator};
use crate::perm_group::{
    enumerate_all, for_each_in_rank_range, long_cycles_of, long_cycles_of_composition,
    rank_chunks, Permutation,
};

pub const MAX_PAIRSUM_N: usize = 7;
pub const MAX_GROUPED_N: usize = 10;
pub const MAX_COVERS_N: usize = 4;
pub const MAX_ZHAT_N: usize = 6;
/// Largest number of covers [`bethe_m_exhaustive`] will enumerate.
const GROUPED_NAIVE_MAX_N: usize = 6;

pub const COVER_BUDGET: f64 = 1e7;

const RANK_CHUNK: u64 = 720;

fn half_pow(c: usize) -> f64 {
    0.5f64.powi(c as i32)
}

/// `sqrt(Σ_{σ1,σ2} w(σ1)·w(σ2)·2^{-c(σ1,σ2)})`.
pub fn bethe2_pairsum(a: &NonNegMatrix) -> Result<f64> {
    check_dim("bethe2_pairsum", a.n(), MAX_PAIRSUM_N)?;
    let n = a.n();
    // (σ⁻¹, w(σ)) for every σ with non-zero weight, in lexicographic order
    let mut support: Vec<(Vec<usize>, Vec<usize>, f64)> = Vec::new();
    for_each_in_rank_range(n, 0, u64::MAX, |p| {
        let w = a.weight_of(p);
        if w != 0.0 {
            let mut inv = vec![0; n];
            for (i, &j) in p.iter().enumerate() {
                inv[j] = i;
            }
            support.push((p.to_vec(), inv, w));
        }
    });
    let rows: Vec<f64> = support
        .par_iter()
        .map(|(s1, _, w1)| {
            let mut acc = PairwiseAccumulator::new();
            for (_, inv2, w2) in &support {
                // c(σ1, σ2) = c_long(σ2⁻¹ ∘ σ1), a conjugate of σ1 ∘ σ2⁻¹
                let c = long_cycles_of_composition(inv2, s1);
                acc.push(w1 * w2 * half_pow(c));
            }
            acc.sum()
        })
        .collect();
    Ok(pairwise_sum(&rows).sqrt())
}

/// `sqrt(Σ_σ 2^{-c_long(σ)}·perm(B^σ))` with `B^σ_ij = a_{i,σ(j)}·a_ij`.
pub fn bethe2_grouped(a: &NonNegMatrix) -> Result<f64> {
    check_dim("bethe2_grouped", a.n(), MAX_GROUPED_N)?;
    if !a.has_perfect_matching() {
        return Ok(0.0);
    }
    let n = a.n();
    let partials: Vec<f64> = rank_chunks(n, RANK_CHUNK)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = PairwiseAccumulator::new();
            let mut b = vec![0.0; n * n];
            for_each_in_rank_range(n, lo, hi, |sigma| {
                let mut any_zero_row = false;
                for i in 0..n {
                    let mut row_sum = 0.0;
                    for j in 0..n {
                        let v = a.get(i, sigma[j]) * a.get(i, j);
                        b[i * n + j] = v;
                        row_sum += v;
                    }
                    any_zero_row |= row_sum == 0.0;
                }
                if !any_zero_row {
                    let perm = if n <= GROUPED_NAIVE_MAX_N {
                        naive_raw(n, &b)
                    } else {
                        ryser_raw(n, &b)
                    };
                    acc.push(half_pow(long_cycles_of(sigma)) * perm);
                }
            });
            acc.sum()
        })
        .collect();
    Ok(pairwise_sum(&partials).max(0.0).sqrt())
}

/// `sqrt` of the mean of `perm(A↑P̃)` over all `2^{n²}` double covers.
pub fn bethe2_cover_average(a: &NonNegMatrix) -> Result<f64> {
    check_dim("bethe2_cover_average", a.n(), MAX_COVERS_N)?;
    if !a.has_perfect_matching() {
        return Ok(0.0);
    }
    let n = a.n();
    let covers: u64 = 1 << (n * n);
    let chunk: u64 = 1024.min(covers);
    let partials: Vec<f64> = (0..covers / chunk)
        .into_par_iter()
        .map(|c| {
            let mut acc = PairwiseAccumulator::new();
            let mut buf = vec![0.0; 4 * n * n];
            for mask in c * chunk..(c + 1) * chunk {
                lift_double_into(a, mask, &mut buf);
                acc.push(ryser_raw(2 * n, &buf));
            }
            acc.sum()
        })
        .collect();
    let mean = pairwise_sum(&partials) / covers as f64;
    Ok(mean.max(0.0).sqrt())
}

// Same layout as `lift(a, &CoverAssignment::double_from_mask(n, mask))`.
fn lift_double_into(a: &NonNegMatrix, mask: u64, buf: &mut [f64]) {
    let n = a.n();
    let big = 2 * n;
    buf.fill(0.0);
    for i in 0..n {
        for j in 0..n {
            let w = a.get(i, j);
            let swap = (mask >> (i * n + j) & 1) as usize;
            for s in 0..2 {
                buf[(2 * i + s) * big + 2 * j + (s ^ swap)] = w;
            }
        }
    }
}

/// `M`-th root of the mean of `perm(A↑P̃)` over all `(M!)^{n²}` `M`-covers.
pub fn bethe_m_exhaustive(a: &NonNegMatrix, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidCover("cover degree must be positive".into()));
    }
    if m == 1 {
        return permanent_ryser(a);
    }
    let n = a.n();
    let blocks: Vec<Permutation> = enumerate_all(m)?.collect();
    let digits = n * n;
    let needed = (blocks.len() as f64).powi(digits as i32);
    if needed > COVER_BUDGET {
        return Err(Error::BudgetExceeded {
            needed,
            budget: COVER_BUDGET,
        });
    }
    check_dim("bethe_m_exhaustive", m * n, crate::matrix::MAX_RYSER_N)?;
    let total = needed as u64;
    let chunk = 256u64;
    let chunks = total.div_ceil(chunk);
    let partials = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = PairwiseAccumulator::new();
            for idx in c * chunk..((c + 1) * chunk).min(total) {
                let mut rest = idx;
                let assignment: Vec<Permutation> = (0..digits)
                    .map(|_| {
                        let d = (rest % blocks.len() as u64) as usize;
                        rest /= blocks.len() as u64;
                        blocks[d].clone()
                    })
                    .collect();
                let cover = CoverAssignment::new(m, assignment)?;
                acc.push(permanent_ryser(&lift(a, &cover)?)?);
            }
            Ok(acc.sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = pairwise_sum(&partials) / total as f64;
    Ok(mean.powf(1.0 / m as f64))
}

/// Label of a base edge `(i, j)` in a configuration of the transformed
/// factor graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeLabel {
    /// `(0,0)`
    Off,
    /// `(0,1)`: the edge lies on an alternating cycle.
    Cycle,
    /// `(1,1)`: the edge is selected by both permutations.
    Matched,
}

/// An alternating `(0,1)`-cycle `L_{r0} R_{c0} L_{r1} R_{c1} … L_{r0}`,
/// 0-based, starting at its smallest row and leaving it through its
/// smaller column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlternatingCycle {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl AlternatingCycle {
    /// Number of edges, `2L`.
    pub fn edge_count(&self) -> usize {
        2 * self.rows.len()
    }
}

/// A configuration with non-zero global function value: every vertex meets
/// exactly one `(1,1)`-edge or exactly two `(0,1)`-edges, and nothing else.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ValidConfig {
    n: usize,
    labels: Vec<EdgeLabel>,
}

impl ValidConfig {
    /// Row-major labels, 0-based `(i, j)` at `i * n + j`.
    pub fn new(n: usize, labels: Vec<EdgeLabel>) -> Result<Self> {
        if labels.len() != n * n || n == 0 {
            return Err(Error::InvalidConfig(format!(
                "{} labels for dimension {n}",
                labels.len()
            )));
        }
        let check = |side: &str, k: usize, it: &mut dyn Iterator<Item = EdgeLabel>| {
            let (mut matched, mut cyc) = (0, 0);
            for l in it {
                match l {
                    EdgeLabel::Matched => matched += 1,
                    EdgeLabel::Cycle => cyc += 1,
                    EdgeLabel::Off => {}
                }
            }
            if (matched, cyc) == (1, 0) || (matched, cyc) == (0, 2) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{side} vertex {} has {matched} (1,1)-edges and {cyc} (0,1)-edges",
                    k + 1
                )))
            }
        };
        for i in 0..n {
            check("left", i, &mut (0..n).map(|j| labels[i * n + j]))?;
        }
        for j in 0..n {
            check("right", j, &mut (0..n).map(|i| labels[i * n + j]))?;
        }
        Ok(ValidConfig { n, labels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// 0-based label lookup.
    pub fn label(&self, i: usize, j: usize) -> EdgeLabel {
        self.labels[i * self.n + j]
    }

    pub fn labels(&self) -> &[EdgeLabel] {
        &self.labels
    }

    /// `(1,1)`-edges as 0-based `(row, col)` pairs.
    pub fn matched_edges(&self) -> Vec<(usize, usize)> {
        (0..self.n * self.n)
            .filter(|&k| self.labels[k] == EdgeLabel::Matched)
            .map(|k| (k / self.n, k % self.n))
            .collect()
    }

    fn cycle_cols(&self, i: usize) -> (usize, usize) {
        let mut it = (0..self.n).filter(|&j| self.label(i, j) == EdgeLabel::Cycle);
        let first = it.next().expect("validated");
        (first, it.next().expect("validated"))
    }

    fn other_row(&self, j: usize, i: usize) -> usize {
        (0..self.n)
            .find(|&r| r != i && self.label(r, j) == EdgeLabel::Cycle)
            .expect("validated")
    }

    pub fn cycles(&self) -> Vec<AlternatingCycle> {
        let mut seen = vec![false; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if seen[start] || self.label_row_is_matched(start) {
                continue;
            }
            let (mut rows, mut cols) = (Vec::new(), Vec::new());
            let mut i = start;
            let mut j = self.cycle_cols(start).0;
            loop {
                seen[i] = true;
                rows.push(i);
                cols.push(j);
                i = self.other_row(j, i);
                if i == start {
                    break;
                }
                let (c0, c1) = self.cycle_cols(i);
                j = if c0 == j { c1 } else { c0 };
            }
            out.push(AlternatingCycle { rows, cols });
        }
        out
    }

    fn label_row_is_matched(&self, i: usize) -> bool {
        (0..self.n).any(|j| self.label(i, j) == EdgeLabel::Matched)
    }

    pub fn cycle_count(&self) -> usize {
        self.cycles().len()
    }

    /// `2^k` for `k` alternating cycles.
    pub fn preimage_count(&self) -> u64 {
        1 << self.cycle_count()
    }

    /// Every `(σ1, σ2)` with `config_from_pair(σ1, σ2) == self`: each cycle
    /// can be walked in either direction.
    pub fn preimages(&self) -> Vec<(Permutation, Permutation)> {
        let cycles = self.cycles();
        let mut base1 = vec![usize::MAX; self.n];
        for (i, j) in self.matched_edges() {
            base1[i] = j;
        }
        let base2 = base1.clone();
        (0..1u64 << cycles.len())
            .map(|orient| {
                let (mut s1, mut s2) = (base1.clone(), base2.clone());
                for (k, cyc) in cycles.iter().enumerate() {
                    let (f, g) = if orient >> k & 1 == 0 {
                        (&mut s1, &mut s2)
                    } else {
                        (&mut s2, &mut s1)
                    };
                    let l = cyc.rows.len();
                    for t in 0..l {
                        f[cyc.rows[t]] = cyc.cols[t];
                        g[cyc.rows[(t + 1) % l]] = cyc.cols[t];
                    }
                }
                (
                    Permutation::from_zero_based_unchecked(s1),
                    Permutation::from_zero_based_unchecked(s2),
                )
            })
            .collect()
    }

    /// Product of the local functions: a vertex on a `(1,1)`-edge `e`
    /// contributes `a_e`, a vertex on `(0,1)`-edges `e, e'` contributes
    /// `sqrt(a_e·a_e')`.
    pub fn global_value(&self, a: &NonNegMatrix) -> Result<f64> {
        if a.n() != self.n {
            return Err(Error::DimensionMismatch {
                left: self.n,
                right: a.n(),
            });
        }
        let n = self.n;
        let local = |edges: &mut dyn Iterator<Item = (usize, usize)>| {
            let mut prod = 1.0;
            let mut cyc = false;
            for (i, j) in edges {
                match self.label(i, j) {
                    EdgeLabel::Matched => prod *= a.get(i, j),
                    EdgeLabel::Cycle => {
                        prod *= a.get(i, j);
                        cyc = true;
                    }
                    EdgeLabel::Off => {}
                }
            }
            if cyc {
                prod.sqrt()
            } else {
                prod
            }
        };
        let left: f64 = (0..n)
            .map(|i| local(&mut (0..n).map(|j| (i, j))))
            .product();
        let right: f64 = (0..n)
            .map(|j| local(&mut (0..n).map(|i| (i, j))))
            .product();
        Ok(left * right)
    }
}

/// The configuration `h(σ1, σ2)`.
pub fn config_from_pair(s1: &Permutation, s2: &Permutation) -> Result<ValidConfig> {
    if s1.n() != s2.n() {
        return Err(Error::DimensionMismatch {
            left: s1.n(),
            right: s2.n(),
        });
    }
    let n = s1.n();
    let (p, q) = (s1.as_zero_based(), s2.as_zero_based());
    let mut labels = vec![EdgeLabel::Off; n * n];
    for i in 0..n {
        if p[i] == q[i] {
            labels[i * n + p[i]] = EdgeLabel::Matched;
        } else {
            labels[i * n + p[i]] = EdgeLabel::Cycle;
            labels[i * n + q[i]] = EdgeLabel::Cycle;
        }
    }
    ValidConfig::new(n, labels)
}

// Per-column state during the configuration search.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Col {
    Free,
    OneCycle,
    TwoCycles,
    Matched,
}

enum RowChoice {
    Match(usize),
    Pair(usize, usize),
}

struct ConfigSearch<'a, F: FnMut(&[EdgeLabel], f64)> {
    a: &'a NonNegMatrix,
    cols: Vec<Col>,
    col_prod: Vec<f64>,
    labels: Vec<EdgeLabel>,
    visit: F,
}

impl<F: FnMut(&[EdgeLabel], f64)> ConfigSearch<'_, F> {
    fn new(a: &NonNegMatrix, visit: F) -> ConfigSearch<'_, F> {
        let n = a.n();
        ConfigSearch {
            a,
            cols: vec![Col::Free; n],
            col_prod: vec![1.0; n],
            labels: vec![EdgeLabel::Off; n * n],
            visit,
        }
    }

    fn choices(&self, row: usize) -> Vec<RowChoice> {
        let n = self.a.n();
        let mut out = Vec::new();
        for j in 0..n {
            if self.cols[j] == Col::Free && self.a.get(row, j) != 0.0 {
                out.push(RowChoice::Match(j));
            }
        }
        let open = |j: usize| matches!(self.cols[j], Col::Free | Col::OneCycle);
        for j in 0..n {
            for k in j + 1..n {
                if open(j) && open(k) && self.a.get(row, j) * self.a.get(row, k) != 0.0 {
                    out.push(RowChoice::Pair(j, k));
                }
            }
        }
        out
    }

    fn apply(&mut self, row: usize, choice: &RowChoice, weight: f64) -> f64 {
        let n = self.a.n();
        match *choice {
            RowChoice::Match(j) => {
                self.cols[j] = Col::Matched;
                self.col_prod[j] = self.a.get(row, j);
                self.labels[row * n + j] = EdgeLabel::Matched;
                weight * self.a.get(row, j)
            }
            RowChoice::Pair(j, k) => {
                for c in [j, k] {
                    self.cols[c] = match self.cols[c] {
                        Col::Free => Col::OneCycle,
                        _ => Col::TwoCycles,
                    };
                    self.col_prod[c] *= self.a.get(row, c);
                    self.labels[row * n + c] = EdgeLabel::Cycle;
                }
                weight * (self.a.get(row, j) * self.a.get(row, k)).sqrt()
            }
        }
    }

    fn undo(&mut self, row: usize, choice: &RowChoice, saved: [(Col, f64); 2]) {
        let n = self.a.n();
        let touched = match *choice {
            RowChoice::Match(j) => [j, j],
            RowChoice::Pair(j, k) => [j, k],
        };
        for (c, (state, prod)) in touched.into_iter().zip(saved).rev() {
            self.cols[c] = state;
            self.col_prod[c] = prod;
            self.labels[row * n + c] = EdgeLabel::Off;
        }
    }

    fn snapshot(&self, choice: &RowChoice) -> [(Col, f64); 2] {
        let (j, k) = match *choice {
            RowChoice::Match(j) => (j, j),
            RowChoice::Pair(j, k) => (j, k),
        };
        [(self.cols[j], self.col_prod[j]), (self.cols[k], self.col_prod[k])]
    }

    fn run(&mut self, row: usize, weight: f64) {
        let n = self.a.n();
        if row == n {
            let mut w = weight;
            for j in 0..n {
                w *= match self.cols[j] {
                    Col::Matched => self.col_prod[j],
                    Col::TwoCycles => self.col_prod[j].sqrt(),
                    _ => return,
                };
            }
            (self.visit)(&self.labels, w);
            return;
        }
        // each pending half-cycle column still needs one more row
        let pending = self.cols.iter().filter(|&&c| c == Col::OneCycle).count();
        if pending > 2 * (n - row) {
            return;
        }
        for choice in self.choices(row) {
            let saved = self.snapshot(&choice);
            let w = self.apply(row, &choice, weight);
            self.run(row + 1, w);
            self.undo(row, &choice, saved);
        }
    }
}

/// `Z(N̂(A))`, summed over valid configurations. Its square root is
/// `perm_{Bethe,2}(A)`.
pub fn zhat_partition(a: &NonNegMatrix) -> Result<f64> {
    check_dim("zhat_partition", a.n(), MAX_ZHAT_N)?;
    let top = ConfigSearch::new(a, |_, _| {}).choices(0);
    let partials: Vec<f64> = top
        .par_iter()
        .map(|choice| {
            let mut acc = PairwiseAccumulator::new();
            let mut search = ConfigSearch::new(a, |_, w| acc.push(w));
            let w = search.apply(0, choice, 1.0);
            search.run(1, w);
            drop(search);
            acc.sum()
        })
        .collect();
    Ok(pairwise_sum(&partials))
}

/// Every valid configuration on the complete `n×n` bipartite graph.
pub fn enumerate_valid_configs(n: usize) -> Result<Vec<ValidConfig>> {
    check_dim("enumerate_valid_configs", n, MAX_ZHAT_N)?;
    let ones = NonNegMatrix::ones(n);
    let mut out = Vec::new();
    ConfigSearch::new(&ones, |labels, _| {
        out.push(ValidConfig {
            n,
            labels: labels.to_vec(),
        })
    })
    .run(0, 1.0);
    Ok(out)
}

/// Selects one of the `perm_{Bethe,2}` evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bethe2Method {
    PairSum,
    Grouped,
    Covers,
    Nfg,
}

impl Bethe2Method {
    pub fn name(self) -> &'static str {
        match self {
            Bethe2Method::PairSum => "pairsum",
            Bethe2Method::Grouped => "grouped",
            Bethe2Method::Covers => "covers",
            Bethe2Method::Nfg => "nfg",
        }
    }

    pub fn evaluate(self, a: &NonNegMatrix) -> Result<f64> {
        match self {
            Bethe2Method::PairSum => bethe2_pairsum(a),
            Bethe2Method::Grouped => bethe2_grouped(a),
            Bethe2Method::Covers => bethe2_cover_average(a),
            Bethe2Method::Nfg => Ok(zhat_partition(a)?.sqrt()),
        }
    }
}

impl std::str::FromStr for Bethe2Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairsum" => Ok(Bethe2Method::PairSum),
            "grouped" => Ok(Bethe2Method::Grouped),
            "covers" => Ok(Bethe2Method::Covers),
            "nfg" => Ok(Bethe2Method::Nfg),
            _ => Err(Error::Parse(format!("unknown bethe2 method {s:?}"))),
        }
    }
}

/// `perm_{Bethe,2}(A)` in the log domain: rows are normalized by their
/// maxima first, which multiplies the value by the product of the scales.
pub fn log_bethe2(a: &NonNegMatrix, method: Bethe2Method) -> Result<LogValue> {
    let n = a.n();
    let row_max: Vec<f64> = (0..n)
        .map(|i| a.row(i).iter().copied().fold(0.0, f64::max))
        .collect();
    if row_max.contains(&0.0) {
        return Ok(LogValue::ZERO);
    }
    let inv: Vec<f64> = row_max.iter().map(|m| 1.0 / m).collect();
    let scaled = a.diag_scaled(&inv, &vec![1.0; n])?;
    let v = method.evaluate(&scaled)?;
    if v == 0.0 {
        return Ok(LogValue::ZERO);
    }
    Ok(LogValue::from_log(
        v.ln() + row_max.iter().map(|m| m.ln()).sum::<f64>(),
    ))
}
