//! Random-matrix ensembles with i.i.d. entries. Exact second moments of
//! `perm` and `perm_{Bethe,2}` sit next to seeded per-sample scatter data.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::bethe2::bethe2_grouped;
use crate::bethe_vi::{bethe_permanent, BetheOptions};
use crate::cycle_index::{log_psi, reference_ratios, PsiParams};
use crate::error::{Error, Result};
use crate::matrix::{permanent_ryser, NonNegMatrix};
use crate::numeric::{factorial, pairwise_sum, LogValue};
use crate::perm_group::{cycle_type, enumerate_all};

/// Entry distribution with non-negative support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Uniform { low: f64, high: f64 },
    Exponential { rate: f64 },
    Constant { value: f64 },
    /// `v1` with probability `p`, otherwise `v0`.
    TwoPoint { p: f64, v0: f64, v1: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Distribution::Uniform { low, high } => 0.0 <= low && low < high && high.is_finite(),
            Distribution::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Distribution::Constant { value } => value >= 0.0 && value.is_finite(),
            Distribution::TwoPoint { p, v0, v1 } => {
                (0.0..=1.0).contains(&p) && v0 >= 0.0 && v1 >= 0.0 && v0.is_finite() && v1.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ParameterDomain(format!("invalid distribution {self}")))
        }
    }

    /// `E[X]`.
    pub fn mu1(&self) -> f64 {
        match *self {
            Distribution::Uniform { low, high } => 0.5 * (low + high),
            Distribution::Exponential { rate } => 1.0 / rate,
            Distribution::Constant { value } => value,
            Distribution::TwoPoint { p, v0, v1 } => (1.0 - p) * v0 + p * v1,
        }
    }

    /// `E[X²]`.
    pub fn mu2(&self) -> f64 {
        match *self {
            Distribution::Uniform { low, high } => (low * low + low * high + high * high) / 3.0,
            Distribution::Exponential { rate } => 2.0 / (rate * rate),
            Distribution::Constant { value } => value * value,
            Distribution::TwoPoint { p, v0, v1 } => (1.0 - p) * v0 * v0 + p * v1 * v1,
        }
    }

    /// Maps one uniformly random 64-bit word to a sample.
    pub fn sample(&self, word: u64) -> f64 {
        let u = (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        match *self {
            Distribution::Uniform { low, high } => low + (high - low) * u,
            Distribution::Exponential { rate } => -(-u).ln_1p() / rate,
            Distribution::Constant { value } => value,
            Distribution::TwoPoint { p, v0, v1 } => {
                if u < p {
                    v1
                } else {
                    v0
                }
            }
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Distribution::Uniform { low, high } => write!(f, "uniform:{low},{high}"),
            Distribution::Exponential { rate } => write!(f, "exponential:{rate}"),
            Distribution::Constant { value } => write!(f, "constant:{value}"),
            Distribution::TwoPoint { p, v0, v1 } => write!(f, "two-point:{p},{v0},{v1}"),
        }
    }
}

impl FromStr for Distribution {
    type Err = Error;

    /// `uniform:A,B`, `exponential:RATE`, `constant:C`, `two-point:P,V0,V1`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums = args
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let d = match (name, nums.as_slice()) {
            ("uniform", []) => Distribution::Uniform { low: 0.0, high: 1.0 },
            ("uniform", &[low, high]) => Distribution::Uniform { low, high },
            ("exponential", []) => Distribution::Exponential { rate: 1.0 },
            ("exponential", &[rate]) => Distribution::Exponential { rate },
            ("constant", &[value]) => Distribution::Constant { value },
            ("two-point", &[p, v0, v1]) => Distribution::TwoPoint { p, v0, v1 },
            _ => return Err(Error::Parse(format!("unknown distribution {s:?}"))),
        };
        d.validate()?;
        Ok(d)
    }
}

impl Serialize for Distribution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleSpec {
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    pub distribution: Distribution,
}

impl EnsembleSpec {
    pub fn new(n: usize, count: usize, seed: u64, distribution: Distribution) -> Result<Self> {
        if n == 0 {
            return Err(Error::ParameterDomain("ensemble dimension must be positive".into()));
        }
        distribution.validate()?;
        Ok(EnsembleSpec {
            n,
            count,
            seed,
            distribution,
        })
    }
}

/// Matrix number `index` of the ensemble. Entry `(i, j)` comes from word
/// `i·n + j` of the ChaCha stream `index` under key `seed`, so any sample
/// can be regenerated on its own.
pub fn sample_matrix(spec: &EnsembleSpec, index: usize) -> Result<NonNegMatrix> {
    if index >= spec.count {
        return Err(Error::ParameterDomain(format!(
            "sample index {index} >= count {}",
            spec.count
        )));
    }
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    rng.set_word_pos(0);
    let data = (0..n * n)
        .map(|_| spec.distribution.sample(rng.next_u64()))
        .collect();
    NonNegMatrix::new(n, data)
}

fn check_moments(mu1: f64, mu2: f64) -> Result<()> {
    if mu1 >= 0.0 && mu1.is_finite() && mu2.is_finite() && mu2 >= mu1 * mu1 {
        Ok(())
    } else {
        Err(Error::InvalidMoments { mu1, mu2 })
    }
}

fn log_moment(n: usize, mu1: f64, mu2: f64, theta3: f64) -> Result<LogValue> {
    check_moments(mu1, mu2)?;
    if mu1 == 0.0 {
        return if mu2 == 0.0 {
            Ok(LogValue::ZERO)
        } else {
            Err(Error::InvalidMoments { mu1, mu2 })
        };
    }
    Ok(log_psi(n, &PsiParams::new(mu2, mu1 * mu1, theta3)?))
}

/// `ln E[perm(A)²] = ln Ψ_n(μ2, μ1², 1)`.
pub fn log_moment_perm_sq(n: usize, mu1: f64, mu2: f64) -> Result<LogValue> {
    log_moment(n, mu1, mu2, 1.0)
}

/// `ln E[perm_{Bethe,2}(A)²] = ln Ψ_n(μ2, μ1², ½)`.
pub fn log_moment_bethe2_sq(n: usize, mu1: f64, mu2: f64) -> Result<LogValue> {
    log_moment(n, mu1, mu2, 0.5)
}

pub fn exact_moment_perm_sq(n: usize, mu1: f64, mu2: f64) -> Result<f64> {
    check_moments(mu1, mu2)?;
    if mu1 == 0.0 {
        return log_moment(n, mu1, mu2, 1.0).map(|v| v.value());
    }
    Ok(crate::cycle_index::psi(n, &PsiParams::new(mu2, mu1 * mu1, 1.0)?))
}

pub fn exact_moment_bethe2_sq(n: usize, mu1: f64, mu2: f64) -> Result<f64> {
    check_moments(mu1, mu2)?;
    if mu1 == 0.0 {
        return log_moment(n, mu1, mu2, 0.5).map(|v| v.value());
    }
    Ok(crate::cycle_index::psi(n, &PsiParams::new(mu2, mu1 * mu1, 0.5)?))
}

/// `sqrt(E[perm²] / E[perm_{Bethe,2}²])`, through the log domain.
pub fn gamma_ratio(n: usize, mu1: f64, mu2: f64) -> Result<f64> {
    let num = log_moment_perm_sq(n, mu1, mu2)?;
    let den = log_moment_bethe2_sq(n, mu1, mu2)?;
    if den.is_zero {
        return Err(Error::InvalidMoments { mu1, mu2 });
    }
    Ok((num / den).sqrt().value())
}

/// `n!·Σ_σ μ2^{c_1(σ)}·μ1^{2(n-c_1(σ))}·w^{c_long(σ)}` by enumerating `S_n`;
/// `w = 1` gives `E[perm²]` and `w = ½` gives `E[perm_{Bethe,2}²]`.
pub fn brute_force_moment(n: usize, mu1: f64, mu2: f64, long_cycle_weight: f64) -> Result<f64> {
    check_moments(mu1, mu2)?;
    let terms: Vec<f64> = enumerate_all(n)?
        .map(|s| {
            let ct = cycle_type(&s);
            let fixed = ct.count(1);
            mu2.powi(fixed as i32)
                * mu1.powi(2 * (n - fixed) as i32)
                * long_cycle_weight.powi(ct.long_cycles() as i32)
        })
        .collect();
    Ok(factorial(n as u64) * pairwise_sum(&terms))
}

/// One scatter sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub index: usize,
    pub perm: Option<f64>,
    pub bethe2: Option<f64>,
    pub bethe: Option<f64>,
    /// `perm / bethe2`
    pub ratio2: Option<f64>,
    /// `perm / bethe`
    pub ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn ratio(num: Option<f64>, den: Option<f64>) -> Option<f64> {
    match (num, den) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    }
}

fn evaluate_sample(spec: &EnsembleSpec, index: usize, include_bethe: bool) -> ExperimentRecord {
    let mut errors = Vec::new();
    let mut keep = |r: Result<f64>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(e.to_string());
            None
        }
    };
    let (perm, bethe2, bethe) = match sample_matrix(spec, index) {
        Ok(a) => {
            let perm = keep(permanent_ryser(&a));
            let bethe2 = keep(bethe2_grouped(&a));
            let bethe = if include_bethe {
                keep(bethe_permanent(&a, &BetheOptions::default()).map(|r| r.value))
            } else {
                None
            };
            (perm, bethe2, bethe)
        }
        Err(e) => {
            errors.push(e.to_string());
            (None, None, None)
        }
    };
    ExperimentRecord {
        index,
        perm,
        bethe2,
        bethe,
        ratio2: ratio(perm, bethe2),
        ratio: ratio(perm, bethe),
        error: (!errors.is_empty()).then(|| errors.join("; ")),
    }
}

/// One record per sample, in index order. Evaluator failures are recorded
/// in the row rather than aborting the run.
pub fn run_scatter(spec: &EnsembleSpec, include_bethe: bool) -> Vec<ExperimentRecord> {
    (0..spec.count)
        .into_par_iter()
        .map(|i| evaluate_sample(spec, i, include_bethe))
        .collect()
}

pub const CSV_HEADER: &str = "index,perm,bethe2,bethe,ratio2,ratio";

/// 17 significant digits, enough to round-trip any double.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn cell(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

pub fn write_csv(records: &[ExperimentRecord], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.index,
            cell(r.perm),
            cell(r.bethe2),
            cell(r.bethe),
            cell(r.ratio2),
            cell(r.ratio)
        )?;
    }
    Ok(())
}

pub fn write_json_lines(records: &[ExperimentRecord], mut out: impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        writeln!(out)?;
    }
    Ok(())
}

/// Sample mean and its standard error (unbiased sample variance).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = pairwise_sum(xs) / k;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterSummary {
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    pub distribution: Distribution,
    pub mean_perm_sq: f64,
    pub stderr_perm_sq: f64,
    pub mean_bethe2_sq: f64,
    pub stderr_bethe2_sq: f64,
    pub exact_perm_sq: f64,
    pub exact_bethe2_sq: f64,
    /// `sqrt(E[perm²]/E[perm_{Bethe,2}²])` from the exact moments.
    pub gamma_exact: f64,
    /// `(πn/e)^{1/4}`
    pub gamma_asymptotic: f64,
}

pub fn summarize(spec: &EnsembleSpec, records: &[ExperimentRecord]) -> Result<ScatterSummary> {
    let sq = |f: fn(&ExperimentRecord) -> Option<f64>| -> Vec<f64> {
        records.iter().filter_map(f).map(|v| v * v).collect()
    };
    let (mean_perm_sq, stderr_perm_sq) = mean_and_stderr(&sq(|r| r.perm));
    let (mean_bethe2_sq, stderr_bethe2_sq) = mean_and_stderr(&sq(|r| r.bethe2));
    let (mu1, mu2) = (spec.distribution.mu1(), spec.distribution.mu2());
    Ok(ScatterSummary {
        n: spec.n,
        count: spec.count,
        seed: spec.seed,
        distribution: spec.distribution,
        mean_perm_sq,
        stderr_perm_sq,
        mean_bethe2_sq,
        stderr_bethe2_sq,
        exact_perm_sq: log_moment_perm_sq(spec.n, mu1, mu2)?.value(),
        exact_bethe2_sq: log_moment_bethe2_sq(spec.n, mu1, mu2)?.value(),
        gamma_exact: gamma_ratio(spec.n, mu1, mu2)?,
        gamma_asymptotic: reference_ratios(spec.n).gamma2,
    })
}

/// Monte-Carlo samples of `(perm², perm_{Bethe,2}²)`.
pub fn sample_squares(spec: &EnsembleSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let pairs = (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let a = sample_matrix(spec, i)?;
            let p = permanent_ryser(&a)?;
            let b = bethe2_grouped(&a)?;
            Ok((p * p, b * b))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    Ok(pairs.into_iter().unzip())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycle_index::z_all_one;
    use crate::numeric::rel_err;

    const UNIFORM: Distribution = Distribution::Uniform { low: 0.0, high: 1.0 };

    #[test]
    fn distribution_moments_and_parsing() {
        assert_eq!(UNIFORM.mu1(), 0.5);
        assert!(rel_err(UNIFORM.mu2(), 1.0 / 3.0) < 1e-15);
        let e: Distribution = "exponential:2".parse().unwrap();
        assert_eq!((e.mu1(), e.mu2()), (0.5, 0.5));
        let t: Distribution = "two-point:0.25,0,4".parse().unwrap();
        assert_eq!((t.mu1(), t.mu2()), (1.0, 4.0));
        assert_eq!("uniform".parse::<Distribution>().unwrap(), UNIFORM);
        for d in [UNIFORM, e, t, Distribution::Constant { value: 2.0 }] {
            assert_eq!(d.to_string().parse::<Distribution>().unwrap(), d);
        }
        assert!("uniform:1,0".parse::<Distribution>().is_err());
        assert!("uniform:-1,1".parse::<Distribution>().is_err());
        assert!("gauss:0,1".parse::<Distribution>().is_err());
        assert!("two-point:0.5,-1,1".parse::<Distribution>().is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_keyed() {
        let spec = EnsembleSpec::new(4, 10, 7, UNIFORM).unwrap();
        assert_eq!(sample_matrix(&spec, 3).unwrap(), sample_matrix(&spec, 3).unwrap());
        assert_ne!(sample_matrix(&spec, 3).unwrap(), sample_matrix(&spec, 4).unwrap());
        let other = EnsembleSpec { seed: 8, ..spec };
        assert_ne!(sample_matrix(&spec, 3).unwrap(), sample_matrix(&other, 3).unwrap());
        assert!(sample_matrix(&spec, 10).is_err());
        let ones = EnsembleSpec::new(3, 2, 1, Distribution::Constant { value: 1.0 }).unwrap();
        assert_eq!(sample_matrix(&ones, 1).unwrap(), NonNegMatrix::ones(3));
    }

    #[test]
    fn uniform_entry_mean() {
        let spec = EnsembleSpec::new(5, 1000, 42, UNIFORM).unwrap();
        let xs: Vec<f64> = (0..spec.count)
            .flat_map(|i| sample_matrix(&spec, i).unwrap().as_slice().to_vec())
            .collect();
        let (mean, _) = mean_and_stderr(&xs);
        let se = (1.0f64 / 12.0).sqrt() / (xs.len() as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn exact_moment_examples() {
        assert!(rel_err(exact_moment_perm_sq(2, 0.5, 1.0 / 3.0).unwrap(), 25.0 / 72.0) < 1e-15);
        assert!(rel_err(exact_moment_bethe2_sq(2, 0.5, 1.0 / 3.0).unwrap(), 41.0 / 144.0) < 1e-15);
        for n in 1..=8 {
            let f = factorial(n as u64);
            assert!(rel_err(exact_moment_perm_sq(n, 1.0, 1.0).unwrap(), f * f) < 1e-15);
            let z = z_all_one(n).unwrap();
            assert!(rel_err(exact_moment_bethe2_sq(n, 1.0, 1.0).unwrap(), f * f * z) < 1e-13);
            assert!(rel_err(gamma_ratio(n, 1.0, 1.0).unwrap(), 1.0 / z.sqrt()) < 1e-13);
        }
        assert!(matches!(
            exact_moment_perm_sq(3, 1.0, 0.5),
            Err(Error::InvalidMoments { .. })
        ));
        assert_eq!(exact_moment_perm_sq(3, 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn moments_match_brute_force() {
        for &(mu1, mu2) in &[(0.5, 1.0 / 3.0), (1.0, 2.0), (0.3, 0.3)] {
            for n in 1..=7 {
                let p = exact_moment_perm_sq(n, mu1, mu2).unwrap();
                let b = exact_moment_bethe2_sq(n, mu1, mu2).unwrap();
                assert!(rel_err(p, brute_force_moment(n, mu1, mu2, 1.0).unwrap()) < 1e-12);
                assert!(rel_err(b, brute_force_moment(n, mu1, mu2, 0.5).unwrap()) < 1e-12);
            }
        }
    }

    #[test]
    fn gamma_ratio_examples() {
        let target = reference_ratios(5).gamma2;
        for (mu1, mu2) in [(0.5, 1.0 / 3.0), (1.0, 2.0)] {
            let g = gamma_ratio(5, mu1, mu2).unwrap();
            assert!((g / target - 1.0).abs() < 0.25, "{g}");
        }
        assert!(rel_err(gamma_ratio(5, 0.5, 1.0 / 3.0).unwrap(), 1.485_980_788_557_151_4) < 1e-12);
        assert!(rel_err(gamma_ratio(5, 1.0, 2.0).unwrap(), 1.399_270_509_214_697) < 1e-12);
        let g = gamma_ratio(1000, 0.5, 1.0 / 3.0).unwrap();
        assert!((g / reference_ratios(1000).gamma2 - 1.0).abs() < 0.02);
    }

    #[test]
    fn constant_ensemble_scatter() {
        let spec = EnsembleSpec::new(5, 3, 11, Distribution::Constant { value: 1.0 }).unwrap();
        let recs = run_scatter(&spec, false);
        assert_eq!(recs.len(), 3);
        let expected = 1.0 / z_all_one(5).unwrap().sqrt();
        for r in &recs {
            assert!(rel_err(r.ratio2.unwrap(), expected) < 1e-13);
            assert_eq!(r.bethe, None);
            assert_eq!((r.perm, r.bethe2, r.ratio2), (recs[0].perm, recs[0].bethe2, recs[0].ratio2));
        }
    }

    #[test]
    fn csv_layout() {
        let spec = EnsembleSpec::new(3, 2, 5, UNIFORM).unwrap();
        let recs = run_scatter(&spec, true);
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        let cells: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[1].parse::<f64>().unwrap(), recs[0].perm.unwrap());
        let mut no_bethe = Vec::new();
        write_csv(&run_scatter(&spec, false), &mut no_bethe).unwrap();
        let text = String::from_utf8(no_bethe).unwrap();
        let cells: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!((cells[3], cells[5]), ("", ""));
        assert!(!cells[4].is_empty());
    }

    #[test]
    fn scaling_leaves_gamma_unchanged() {
        let g = gamma_ratio(6, 0.5, 1.0 / 3.0).unwrap();
        let c = 3.7f64;
        assert!(rel_err(g, gamma_ratio(6, c * 0.5, c * c / 3.0).unwrap()) < 1e-12);
    }
}
