//! Summation and log-domain helpers shared by every evaluator.
//!
//! All accumulation of permanent-like sums goes through a fixed pairwise tree
//! so results do not depend on how work was split across threads: callers
//! partition by fixed index ranges, reduce each range with
//! [`PairwiseAccumulator`], and combine the per-range partials with
//! [`pairwise_sum`].

use serde::{Deserialize, Serialize};

const LEAF: usize = 8;

/// Sum a slice with a deterministic pairwise (cascade) tree.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        return xs.iter().fold(0.0, |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Streaming pairwise summation.
///
/// Values are grouped into blocks of 8 which are then merged like a binary
/// counter, so rounding error grows as O(log n) and the result depends only
/// on the order values were pushed.
#[derive(Debug, Clone, Default)]
pub struct PairwiseAccumulator {
    block: f64,
    block_len: usize,
    // levels[k] holds the sum of 2^k blocks, if occupied
    levels: Vec<Option<f64>>,
}

impl PairwiseAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.block += x;
        self.block_len += 1;
        if self.block_len == LEAF {
            let mut carry = self.block;
            self.block = 0.0;
            self.block_len = 0;
            for slot in self.levels.iter_mut() {
                match slot.take() {
                    Some(v) => carry += v,
                    None => {
                        *slot = Some(carry);
                        return;
                    }
                }
            }
            self.levels.push(Some(carry));
        }
    }

    pub fn sum(&self) -> f64 {
        let mut total = self.block;
        for v in self.levels.iter().flatten() {
            total += v;
        }
        total
    }
}

impl Extend<f64> for PairwiseAccumulator {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.push(x);
        }
    }
}

/// Neumaier-compensated running sum, used for running prefix sums in
/// recursions where a tree is not available.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Overflow-safe representation of a non-negative quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    /// Natural log of the magnitude. Meaningless when `is_zero` is set.
    pub log_magnitude: f64,
    pub is_zero: bool,
}

impl LogValue {
    pub const ZERO: LogValue = LogValue {
        log_magnitude: f64::NEG_INFINITY,
        is_zero: true,
    };

    pub const ONE: LogValue = LogValue {
        log_magnitude: 0.0,
        is_zero: false,
    };

    pub fn from_log(log_magnitude: f64) -> Self {
        if log_magnitude == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            LogValue {
                log_magnitude,
                is_zero: false,
            }
        }
    }

    /// Panics on negative or NaN input.
    pub fn from_value(x: f64) -> Self {
        assert!(x >= 0.0, "LogValue::from_value on negative or NaN {x}");
        if x == 0.0 {
            Self::ZERO
        } else {
            Self::from_log(x.ln())
        }
    }

    /// The linear value; `+inf` if it does not fit in a double.
    pub fn value(&self) -> f64 {
        if self.is_zero {
            0.0
        } else {
            self.log_magnitude.exp()
        }
    }

    /// Log of the value, `-inf` for zero.
    pub fn ln(&self) -> f64 {
        if self.is_zero {
            f64::NEG_INFINITY
        } else {
            self.log_magnitude
        }
    }

    pub fn powf(self, p: f64) -> LogValue {
        if self.is_zero {
            if p == 0.0 {
                Self::ONE
            } else {
                Self::ZERO
            }
        } else {
            Self::from_log(self.log_magnitude * p)
        }
    }

    pub fn sqrt(self) -> LogValue {
        self.powf(0.5)
    }
}

impl std::ops::Mul for LogValue {
    type Output = LogValue;

    fn mul(self, other: LogValue) -> LogValue {
        if self.is_zero || other.is_zero {
            LogValue::ZERO
        } else {
            LogValue::from_log(self.log_magnitude + other.log_magnitude)
        }
    }
}

impl std::ops::Div for LogValue {
    type Output = LogValue;

    /// Panics when dividing by zero.
    fn div(self, other: LogValue) -> LogValue {
        assert!(!other.is_zero, "LogValue division by zero");
        if self.is_zero {
            LogValue::ZERO
        } else {
            LogValue::from_log(self.log_magnitude - other.log_magnitude)
        }
    }
}

/// Log-magnitude representation of a real number with sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedLog {
    /// -1, 0 or +1.
    pub sign: i8,
    pub log_abs: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        sign: 0,
        log_abs: f64::NEG_INFINITY,
    };

    pub fn from_value(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            SignedLog {
                sign: if x > 0.0 { 1 } else { -1 },
                log_abs: x.abs().ln(),
            }
        }
    }

    pub fn value(&self) -> f64 {
        f64::from(self.sign) * self.log_abs.exp()
    }

    /// Converts to an unsigned log value, `None` if negative.
    pub fn to_log_value(self) -> Option<LogValue> {
        match self.sign {
            0 => Some(LogValue::ZERO),
            1 => Some(LogValue::from_log(self.log_abs)),
            _ => None,
        }
    }
}

/// Sum of signed terms given as (sign, log|term|), evaluated around the
/// largest magnitude so nothing overflows.
pub fn signed_log_sum(terms: &[SignedLog]) -> SignedLog {
    let max = terms
        .iter()
        .filter(|t| t.sign != 0)
        .map(|t| t.log_abs)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return SignedLog::ZERO;
    }
    let scaled: Vec<f64> = terms
        .iter()
        .filter(|t| t.sign != 0)
        .map(|t| f64::from(t.sign) * (t.log_abs - max).exp())
        .collect();
    let s = pairwise_sum(&scaled);
    if s == 0.0 {
        SignedLog::ZERO
    } else {
        SignedLog {
            sign: if s > 0.0 { 1 } else { -1 },
            log_abs: s.abs().ln() + max,
        }
    }
}

/// ln(n!) via the log-gamma function.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    statrs::function::gamma::ln_gamma(n as f64 + 1.0)
}

/// n! as a double (exact for n <= 22, `inf` beyond 170).
pub fn factorial(n: u64) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Relative deviation |a - b| / max(|a|, |b|); zero when both vanish.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulator_matches_slice_tree_on_exact_data() {
        let xs: Vec<f64> = (0..1000).map(|k| k as f64).collect();
        let mut acc = PairwiseAccumulator::new();
        acc.extend(xs.iter().copied());
        assert_eq!(acc.sum(), 499_500.0);
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    #[test]
    fn pairwise_beats_naive_on_many_small_terms() {
        let n = 10_000_000usize;
        let mut acc = PairwiseAccumulator::new();
        let mut naive = 0.0;
        for _ in 0..n {
            acc.push(0.1);
            naive += 0.1;
        }
        let exact = 1_000_000.0;
        assert!((acc.sum() - exact).abs() < (naive - exact).abs());
        assert!((acc.sum() - exact).abs() < 1e-6);
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let mut s = CompensatedSum::new();
        for x in [1.0, 1e100, 1.0, -1e100] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn log_value_arithmetic() {
        let a = LogValue::from_value(6.0);
        let b = LogValue::from_value(4.0);
        assert!(((a * b).value() - 24.0).abs() < 1e-12);
        assert!(((a / b).value() - 1.5).abs() < 1e-12);
        assert!((LogValue::ZERO * a).is_zero);
        assert_eq!(LogValue::ZERO.value(), 0.0);
        assert!((b.sqrt().value() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn signed_log_sum_handles_mixed_signs() {
        let terms = [
            SignedLog::from_value(5.0),
            SignedLog::from_value(-2.0),
            SignedLog::ZERO,
        ];
        let s = signed_log_sum(&terms);
        assert!((s.value() - 3.0).abs() < 1e-12);
        let neg = signed_log_sum(&[SignedLog::from_value(-1.0)]);
        assert_eq!(neg.sign, -1);
        assert!(neg.to_log_value().is_none());
    }

    #[test]
    fn factorial_helpers() {
        assert_eq!(factorial(5), 120.0);
        assert!((ln_factorial(10) - 3_628_800f64.ln()).abs() < 1e-12);
        assert_eq!(rel_err(0.0, 0.0), 0.0);
    }
}
