//! Runtime cross-oracle battery: every evaluator pair that should agree is
//! compared on a fixed set of matrices and parameters.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::bethe2::{
    bethe2_cover_average, bethe2_grouped, bethe2_pairsum, bethe_m_exhaustive, zhat_partition,
    MAX_COVERS_N, MAX_PAIRSUM_N, MAX_ZHAT_N,
};
use crate::bethe_vi::{bethe_permanent, BetheOptions};
use crate::cycle_index::{
    cycle_index, log_psi, psi, psi_via_bell, z_all_one, z_bounds, CycleIndexWeights, PsiParams,
};
use crate::error::{Error, Result};
use crate::experiments::{
    brute_force_moment, exact_moment_bethe2_sq, exact_moment_perm_sq, sample_matrix, Distribution,
    EnsembleSpec,
};
use crate::matrix::{permanent_naive, permanent_ryser, NonNegMatrix};
use crate::numeric::{factorial, rel_err};
use crate::perm_group::{c_long, enumerate_all, MAX_ENUMERATION_N};

pub const SCHEMA_VERSION: u32 = 1;
pub const MAX_VERIFY_N: usize = 8;
const SAMPLES_PER_N: usize = 3;
const VERIFY_SEED: u64 = 0x5eed;

pub type MatrixEval = fn(&NonNegMatrix) -> Result<f64>;

/// The evaluators under test; swap one out to run a negative control.
#[derive(Debug, Clone, Copy)]
pub struct Evaluators {
    pub permanent: MatrixEval,
    pub permanent_naive: MatrixEval,
    pub bethe2_pairsum: MatrixEval,
    pub bethe2_grouped: MatrixEval,
    pub bethe2_covers: MatrixEval,
    pub zhat: MatrixEval,
}

impl Default for Evaluators {
    fn default() -> Self {
        Evaluators {
            permanent: permanent_ryser,
            permanent_naive,
            bethe2_pairsum,
            bethe2_grouped,
            bethe2_covers: bethe2_cover_average,
            zhat: zhat_partition,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    All,
    Bethe2,
    CycleIndex,
    Moments,
    Bethe,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::All => "all",
            Suite::Bethe2 => "bethe2",
            Suite::CycleIndex => "cycle-index",
            Suite::Moments => "moments",
            Suite::Bethe => "bethe",
        }
    }

    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Suite::All,
            "bethe2" => Suite::Bethe2,
            "cycle-index" => Suite::CycleIndex,
            "moments" => Suite::Moments,
            "bethe" => Suite::Bethe,
            _ => return Err(Error::Parse(format!("unknown suite {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
    pub tol: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub suite: Suite,
    pub max_n: usize,
    pub passed: usize,
    pub failed: usize,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Default)]
struct Checks(Vec<Check>);

impl Checks {
    fn equal(&mut self, name: &str, n: usize, lhs: Result<f64>, rhs: Result<f64>, tol: f64) {
        let check = match (lhs, rhs) {
            (Ok(l), Ok(r)) => {
                let e = rel_err(l, r);
                Check {
                    name: name.into(),
                    n,
                    lhs: l,
                    rhs: r,
                    rel_err: e,
                    tol,
                    pass: e <= tol,
                    error: None,
                }
            }
            (l, r) => Check {
                name: name.into(),
                n,
                lhs: *l.as_ref().unwrap_or(&f64::NAN),
                rhs: *r.as_ref().unwrap_or(&f64::NAN),
                rel_err: f64::NAN,
                tol,
                pass: false,
                error: l.err().or(r.err()).map(|e| e.to_string()),
            },
        };
        self.0.push(check);
    }

    /// Passes when `lhs ≤ rhs·(1 + tol)`; `rel_err` is the relative excess.
    fn at_most(&mut self, name: &str, n: usize, lhs: Result<f64>, rhs: Result<f64>, tol: f64) {
        match (lhs, rhs) {
            (Ok(l), Ok(r)) => {
                let excess = if r > 0.0 { ((l - r) / r).max(0.0) } else { (l - r).max(0.0) };
                self.0.push(Check {
                    name: name.into(),
                    n,
                    lhs: l,
                    rhs: r,
                    rel_err: excess,
                    tol,
                    pass: excess <= tol,
                    error: None,
                });
            }
            (l, r) => self.equal(name, n, l, r, tol),
        }
    }
}

fn reuse(r: &Result<f64>) -> Result<f64> {
    r.as_ref().copied().map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn sample_set(n: usize) -> Result<Vec<NonNegMatrix>> {
    let spec = EnsembleSpec::new(
        n,
        SAMPLES_PER_N,
        VERIFY_SEED,
        Distribution::Uniform { low: 0.0, high: 1.0 },
    )?;
    let mut out = vec![NonNegMatrix::ones(n)];
    for i in 0..SAMPLES_PER_N {
        let a = sample_matrix(&spec, i)?;
        if i == SAMPLES_PER_N - 1 && n >= 2 {
            let mut data = a.as_slice().to_vec();
            for k in (0..n * n).step_by(3) {
                data[k] = 0.0;
            }
            out.push(NonNegMatrix::new(n, data)?);
        } else {
            out.push(a);
        }
    }
    Ok(out)
}

fn bethe2_checks(c: &mut Checks, ev: &Evaluators, n: usize) -> Result<()> {
    for a in sample_set(n)? {
        let grouped = (ev.bethe2_grouped)(&a);
        let g = || reuse(&grouped);
        if n <= MAX_ENUMERATION_N.min(9) {
            c.equal("perm_ryser_vs_naive", n, (ev.permanent)(&a), (ev.permanent_naive)(&a), 1e-12);
        }
        if n <= MAX_PAIRSUM_N {
            c.equal("bethe2_pairsum_vs_grouped", n, (ev.bethe2_pairsum)(&a), g(), 1e-9);
        }
        if n <= MAX_COVERS_N {
            c.equal("bethe2_covers_vs_grouped", n, (ev.bethe2_covers)(&a), g(), 1e-9);
        }
        if n <= MAX_ZHAT_N {
            c.equal("bethe2_zhat_vs_grouped", n, (ev.zhat)(&a).map(f64::sqrt), g(), 1e-9);
        }
        c.equal(
            "bethe1_equals_perm",
            n,
            bethe_m_exhaustive(&a, 1),
            (ev.permanent)(&a),
            1e-12,
        );
    }
    let ones = NonNegMatrix::ones(n);
    let ratio = (ev.bethe2_grouped)(&ones).and_then(|b| Ok(b / (ev.permanent)(&ones)?));
    c.equal("all_one_ratio_sqrt_z", n, ratio, z_all_one(n).map(f64::sqrt), 1e-12);
    Ok(())
}

fn brute_z(n: usize) -> Result<f64> {
    let total: f64 = enumerate_all(n)?.map(|s| 0.5f64.powi(c_long(&s) as i32)).sum();
    Ok(total / factorial(n as u64))
}

fn cycle_index_checks(c: &mut Checks, n: usize) {
    let z = z_all_one(n);
    let zr = || reuse(&z);
    c.equal(
        "z_simplified_vs_general",
        n,
        zr(),
        cycle_index(n, &CycleIndexWeights::half_long()),
        1e-12,
    );
    c.equal("z_simplified_vs_brute", n, zr(), brute_z(n), 1e-12);
    if let (Ok(zn), Ok((lo, hi))) = (zr(), z_bounds(n)) {
        c.at_most("z_lower_bound", n, Ok(lo * lo), Ok(zn * zn), 1e-15);
        c.at_most("z_upper_bound", n, Ok(zn * zn), Ok(hi * hi), 1e-15);
    }
    for theta3 in [0.25, 0.5, 1.0] {
        for (t1, t2) in [(1.0, 1.0), (1.0 / 3.0, 0.25), (2.0, 0.7)] {
            let res = PsiParams::new(t1, t2, theta3).map(|p| {
                let direct = log_psi(n, &p).ln();
                (direct, psi_via_bell(n, &p).map(|v| v.ln()))
            });
            let name = format!("psi_vs_bell(theta=({t1},{t2},{theta3}))");
            match res {
                Ok((d, b)) => c.equal(&name, n, Ok(d.exp()), b.map(f64::exp), 1e-9),
                Err(e) => c.equal(&name, n, Err(e), Ok(0.0), 1e-9),
            }
        }
    }
    let f2 = factorial(n as u64).powi(2);
    let psi_one = |t3| PsiParams::new(1.0, 1.0, t3).map(|p| psi(n, &p));
    c.equal("psi_one_equals_factorial_sq", n, psi_one(1.0), Ok(f2), 0.0);
    c.equal("psi_half_equals_factorial_sq_z", n, psi_one(0.5), zr().map(|z| f2 * z), 1e-10);
}

const MOMENT_PAIRS: [(f64, f64); 3] = [(0.5, 1.0 / 3.0), (1.0, 2.0), (1.0, 1.0)];

fn moment_checks(c: &mut Checks, n: usize) {
    for (mu1, mu2) in MOMENT_PAIRS {
        c.equal(
            &format!("moment_perm_sq_vs_brute(mu=({mu1},{mu2}))"),
            n,
            exact_moment_perm_sq(n, mu1, mu2),
            brute_force_moment(n, mu1, mu2, 1.0),
            1e-9,
        );
        c.equal(
            &format!("moment_bethe2_sq_vs_brute(mu=({mu1},{mu2}))"),
            n,
            exact_moment_bethe2_sq(n, mu1, mu2),
            brute_force_moment(n, mu1, mu2, 0.5),
            1e-9,
        );
    }
}

fn bethe_checks(c: &mut Checks, ev: &Evaluators, n: usize) -> Result<()> {
    let opts = BetheOptions::default();
    for a in sample_set(n)? {
        c.at_most(
            "bethe_at_most_perm",
            n,
            match bethe_permanent(&a, &opts) {
                Err(Error::InfeasibleSupport) => Ok(0.0),
                r => r.map(|r| r.value),
            },
            (ev.permanent)(&a),
            1e-6,
        );
    }
    let closed = match n {
        1 => Some(1.0),
        2 => Some(1.0),
        3 => Some(1728.0 / 729.0),
        _ => None,
    };
    if let Some(v) = closed {
        c.equal(
            "bethe_all_one_closed_form",
            n,
            bethe_permanent(&NonNegMatrix::ones(n), &opts).map(|r| r.value),
            Ok(v),
            1e-6,
        );
    }
    Ok(())
}

/// Runs `suite` for every `n ∈ [1, max_n]`; each oracle is skipped above
/// its own dimension cap.
pub fn verify_suite(max_n: usize, suite: Suite, ev: &Evaluators) -> Result<Report> {
    if max_n == 0 {
        return Err(Error::ParameterDomain("max_n must be positive".into()));
    }
    crate::error::check_dim("verify", max_n, MAX_VERIFY_N)?;
    let mut c = Checks::default();
    for n in 1..=max_n {
        if suite.includes(Suite::Bethe2) {
            bethe2_checks(&mut c, ev, n)?;
        }
        if suite.includes(Suite::CycleIndex) {
            cycle_index_checks(&mut c, n);
        }
        if suite.includes(Suite::Moments) && n <= 7 {
            moment_checks(&mut c, n);
        }
        if suite.includes(Suite::Bethe) && n <= 7 {
            bethe_checks(&mut c, ev, n)?;
        }
    }
    let checks = c.0;
    let passed = checks.iter().filter(|k| k.pass).count();
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        suite,
        max_n,
        passed,
        failed: checks.len() - passed,
        checks,
    })
}
