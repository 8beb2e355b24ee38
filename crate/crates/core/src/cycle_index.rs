//! Cycle index of `S_n`, the sequence `Z_n`, complete exponential Bell
//! polynomials, and the three-parameter family `Ψ_n`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{check_dim, Error, Result};
use crate::numeric::{
    factorial, ln_factorial, pairwise_sum, signed_log_sum, CompensatedSum, LogValue, SignedLog,
};

pub const MAX_CYCLE_INDEX_N: usize = 1_000_000;
pub const MAX_Z_ALL_ONE_N: usize = 100_000_000;
pub const MAX_BELL_N: usize = 400;
/// Above this `n` [`psi`] is evaluated in the log domain.
pub const PSI_LINEAR_MAX_N: usize = 150;

pub const C_LOWER: f64 = std::f64::consts::FRAC_1_SQRT_2;
pub const C_UPPER: f64 = 1.5 * std::f64::consts::FRAC_1_SQRT_2;

/// The indeterminates `z_ℓ`, `ℓ ≥ 1`, as a rule on cycle lengths.
#[derive(Clone)]
pub enum CycleIndexWeights {
    /// `z_ℓ = 1`.
    AllOne,
    /// `z_1 = fixed`, `z_ℓ = rest` for `ℓ ≥ 2`.
    FixedPointsAndRest { fixed: f64, rest: f64 },
    /// `z_1 = first`, `z_ℓ = scale·base^ℓ` for `ℓ ≥ 2`.
    Geometric { first: f64, scale: f64, base: f64 },
    Custom(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl CycleIndexWeights {
    /// `z_1 = 1`, `z_ℓ = ½` otherwise.
    pub fn half_long() -> Self {
        CycleIndexWeights::FixedPointsAndRest {
            fixed: 1.0,
            rest: 0.5,
        }
    }

    pub fn custom(f: impl Fn(usize) -> f64 + Send + Sync + 'static) -> Self {
        CycleIndexWeights::Custom(Arc::new(f))
    }

    /// `z_ℓ` for `ℓ ≥ 1`.
    pub fn weight_of(&self, len: usize) -> f64 {
        assert!(len >= 1, "cycle lengths start at 1");
        match self {
            CycleIndexWeights::AllOne => 1.0,
            CycleIndexWeights::FixedPointsAndRest { fixed, rest } => {
                if len == 1 {
                    *fixed
                } else {
                    *rest
                }
            }
            CycleIndexWeights::Geometric { first, scale, base } => {
                if len == 1 {
                    *first
                } else {
                    scale * base.powi(len as i32)
                }
            }
            CycleIndexWeights::Custom(f) => f(len),
        }
    }
}

impl fmt::Debug for CycleIndexWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CycleIndexWeights::AllOne => f.write_str("AllOne"),
            CycleIndexWeights::FixedPointsAndRest { fixed, rest } => f
                .debug_struct("FixedPointsAndRest")
                .field("fixed", fixed)
                .field("rest", rest)
                .finish(),
            CycleIndexWeights::Geometric { first, scale, base } => f
                .debug_struct("Geometric")
                .field("first", first)
                .field("scale", scale)
                .field("base", base)
                .finish(),
            CycleIndexWeights::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// `Z(S_n)` from `n·Z(S_n) = Σ_{ℓ=1}^{n} z_ℓ·Z(S_{n-ℓ})`, `Z(S_0) = 1`.
///
/// Linear time for the closed-form weight families, quadratic for
/// [`CycleIndexWeights::Custom`].
pub fn cycle_index(n: usize, z: &CycleIndexWeights) -> Result<f64> {
    check_dim("cycle_index", n, MAX_CYCLE_INDEX_N)?;
    Ok(*cycle_index_table(n, z).last().expect("non-empty"))
}

/// `[Z(S_0), …, Z(S_n)]`.
pub fn cycle_index_table(n: usize, z: &CycleIndexWeights) -> Vec<f64> {
    let mut zs = Vec::with_capacity(n + 1);
    zs.push(1.0);
    match z {
        CycleIndexWeights::AllOne => zs.resize(n + 1, 1.0),
        CycleIndexWeights::FixedPointsAndRest { fixed, rest } => {
            // prefix[k] = Σ_{m≤k} Z(S_m)
            let mut prefix = CompensatedSum::new();
            let mut prefixes = Vec::with_capacity(n + 1);
            prefix.add(1.0);
            prefixes.push(prefix.value());
            for m in 1..=n {
                let long = if m >= 2 { rest * prefixes[m - 2] } else { 0.0 };
                let v = (fixed * zs[m - 1] + long) / m as f64;
                zs.push(v);
                prefix.add(v);
                prefixes.push(prefix.value());
            }
        }
        CycleIndexWeights::Geometric { first, scale, base } => {
            // tail = Σ_{ℓ=2}^{m} base^ℓ Z(S_{m-ℓ}), advanced in O(1) per step
            let mut tail = 0.0;
            for m in 1..=n {
                if m >= 2 {
                    tail = base * (tail + base * zs[m - 2]);
                }
                let v = (first * zs[m - 1] + scale * tail) / m as f64;
                zs.push(v);
            }
        }
        CycleIndexWeights::Custom(f) => {
            let w: Vec<f64> = (1..=n).map(|l| f(l)).collect();
            let mut terms = Vec::with_capacity(n);
            for m in 1..=n {
                terms.clear();
                terms.extend((1..=m).map(|l| w[l - 1] * zs[m - l]));
                zs.push(pairwise_sum(&terms) / m as f64);
            }
        }
    }
    zs
}

/// `Z_n` via `Z_n = Z_{n-1} - Z_{n-2}/(2n)`, `Z_0 = Z_1 = 1`.
pub fn z_all_one(n: usize) -> Result<f64> {
    check_dim("z_all_one", n, MAX_Z_ALL_ONE_N)?;
    let (mut prev, mut cur) = (1.0f64, 1.0f64);
    for m in 2..=n {
        let next = cur - prev / (2.0 * m as f64);
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `(C_l/√n, C_u/√n)`.
pub fn z_bounds(n: usize) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::ParameterDomain("z_bounds needs n >= 1".into()));
    }
    let s = (n as f64).sqrt();
    Ok((C_LOWER / s, C_UPPER / s))
}

/// `B_n(x_1, …, x_n)` with `n = x.len()`.
///
/// Returns [`Error::Overflow`] carrying the log-magnitude when the value
/// does not fit in a double.
pub fn bell_polynomial(x: &[f64]) -> Result<f64> {
    let s = bell_polynomial_log(x)?;
    let v = s.value();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow {
            log_magnitude: s.log_abs,
        })
    }
}

/// `B_n(x)` as sign and log-magnitude.
pub fn bell_polynomial_log(x: &[f64]) -> Result<SignedLog> {
    check_dim("bell_polynomial", x.len(), MAX_BELL_N)?;
    // reduced coefficients y_k = x_{k+1}/k!
    let y: Vec<SignedLog> = x
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let s = SignedLog::from_value(v);
            SignedLog {
                sign: s.sign,
                log_abs: s.log_abs - ln_factorial(k as u64),
            }
        })
        .collect();
    let b = bell_from_reduced(&y);
    Ok(SignedLog {
        sign: b.sign,
        log_abs: b.log_abs + ln_factorial(x.len() as u64),
    })
}

/// `B_n/n!` from `y_k = x_{k+1}/k!`, through `(m+1)·b_{m+1} = Σ_k b_{m-k}·y_k`,
/// entirely in the log domain.
fn bell_from_reduced(y: &[SignedLog]) -> SignedLog {
    let n = y.len();
    let mut b = Vec::with_capacity(n + 1);
    b.push(SignedLog {
        sign: 1,
        log_abs: 0.0,
    });
    let mut terms = Vec::with_capacity(n);
    for m in 0..n {
        terms.clear();
        terms.extend((0..=m).map(|k| SignedLog {
            sign: b[m - k].sign * y[k].sign,
            log_abs: b[m - k].log_abs + y[k].log_abs,
        }));
        let s = signed_log_sum(&terms);
        b.push(SignedLog {
            sign: s.sign,
            log_abs: s.log_abs - ((m + 1) as f64).ln(),
        });
    }
    b[n]
}

/// Parameters `(θ1, θ2, θ3)` of `Ψ_n`, with `θ1, θ2 > 0` and `θ3 ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiParams {
    theta1: f64,
    theta2: f64,
    theta3: f64,
}

impl PsiParams {
    pub fn new(theta1: f64, theta2: f64, theta3: f64) -> Result<Self> {
        if !(theta1 > 0.0 && theta1.is_finite()) {
            return Err(Error::ParameterDomain(format!("theta1 = {theta1} must be > 0")));
        }
        if !(theta2 > 0.0 && theta2.is_finite()) {
            return Err(Error::ParameterDomain(format!("theta2 = {theta2} must be > 0")));
        }
        if !(theta3 > 0.0 && theta3 <= 1.0) {
            return Err(Error::ParameterDomain(format!(
                "theta3 = {theta3} must lie in (0, 1]"
            )));
        }
        Ok(PsiParams {
            theta1,
            theta2,
            theta3,
        })
    }

    pub fn theta1(&self) -> f64 {
        self.theta1
    }

    pub fn theta2(&self) -> f64 {
        self.theta2
    }

    pub fn theta3(&self) -> f64 {
        self.theta3
    }

    /// `τ = θ1/θ2 - θ3`.
    pub fn tau(&self) -> f64 {
        self.theta1 / self.theta2 - self.theta3
    }
}

/// `C(k + θ3 - 1, k) = Π_{i=1}^{k} (i - 1 + θ3)/i` for `k = 0..=n`.
fn generalized_binomials(n: usize, theta3: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut c = 1.0;
    out.push(c);
    for i in 1..=n {
        c *= (i as f64 - 1.0 + theta3) / i as f64;
        out.push(c);
    }
    out
}

/// `Ψ_n(θ) = (n!)²·θ2ⁿ·Σ_{ℓ=0}^{n} C(n-ℓ+θ3-1, n-ℓ)·τ^ℓ/ℓ!`.
///
/// May return `+inf` for large `n`; use [`log_psi`] there.
pub fn psi(n: usize, p: &PsiParams) -> f64 {
    if n > PSI_LINEAR_MAX_N {
        return log_psi(n, p).value();
    }
    let c = generalized_binomials(n, p.theta3);
    let tau = p.tau();
    let mut power = 1.0;
    let mut terms = Vec::with_capacity(n + 1);
    for l in 0..=n {
        if l > 0 {
            power *= tau / l as f64;
        }
        terms.push(c[n - l] * power);
    }
    let f = factorial(n as u64);
    f * f * p.theta2.powi(n as i32) * pairwise_sum(&terms)
}

/// `ln Ψ_n(θ)` by a signed log-sum; valid for negative `τ`.
pub fn log_psi(n: usize, p: &PsiParams) -> LogValue {
    let tau = SignedLog::from_value(p.tau());
    let mut ln_c = CompensatedSum::new();
    let mut ln_cs = Vec::with_capacity(n + 1);
    ln_cs.push(0.0);
    for i in 1..=n {
        ln_c.add(((i as f64 - 1.0 + p.theta3) / i as f64).ln());
        ln_cs.push(ln_c.value());
    }
    let terms: Vec<SignedLog> = (0..=n)
        .map(|l| {
            if l == 0 {
                return SignedLog {
                    sign: 1,
                    log_abs: ln_cs[n],
                };
            }
            if tau.sign == 0 {
                return SignedLog::ZERO;
            }
            SignedLog {
                sign: if l % 2 == 1 { tau.sign } else { 1 },
                log_abs: ln_cs[n - l] + l as f64 * tau.log_abs - ln_factorial(l as u64),
            }
        })
        .collect();
    let s = signed_log_sum(&terms);
    debug_assert!(s.sign > 0);
    LogValue::from_log(s.log_abs + 2.0 * ln_factorial(n as u64) + n as f64 * p.theta2.ln())
}

/// `n!·B_n(0!·θ1, 1!·θ3·θ2², …, (n-1)!·θ3·θ2ⁿ)`, evaluated from the reduced
/// coefficients `y_0 = θ1`, `y_k = θ3·θ2^{k+1}`, without forming factorials.
pub fn psi_via_bell(n: usize, p: &PsiParams) -> Result<LogValue> {
    check_dim("psi_via_bell", n, MAX_BELL_N)?;
    let y: Vec<SignedLog> = (0..n)
        .map(|k| {
            if k == 0 {
                SignedLog::from_value(p.theta1)
            } else {
                SignedLog {
                    sign: 1,
                    log_abs: p.theta3.ln() + (k + 1) as f64 * p.theta2.ln(),
                }
            }
        })
        .collect();
    let b = bell_from_reduced(&y);
    Ok(LogValue::from_log(b.log_abs + 2.0 * ln_factorial(n as u64)))
}

/// `ln` of the asymptote `(n!)²·θ2ⁿ·n^{θ3-1}/Γ(θ3)·exp(θ1/θ2 - θ3)`.
pub fn log_psi_asymptotic(n: usize, p: &PsiParams) -> LogValue {
    LogValue::from_log(
        2.0 * ln_factorial(n as u64) + n as f64 * p.theta2.ln()
            + (p.theta3 - 1.0) * (n as f64).ln()
            - ln_gamma(p.theta3)
            + p.tau(),
    )
}

pub fn psi_asymptotic(n: usize, p: &PsiParams) -> f64 {
    if n <= PSI_LINEAR_MAX_N {
        let f = factorial(n as u64);
        f * f * p.theta2.powi(n as i32) * (n as f64).powf(p.theta3 - 1.0) / gamma(p.theta3)
            * p.tau().exp()
    } else {
        log_psi_asymptotic(n, p).value()
    }
}

/// Large-`n` reference values for the all-one and i.i.d. ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceRatios {
    /// `√(2πn/e)`
    pub perm_over_bethe: f64,
    /// `(πn/e)^{1/4}`
    pub perm_over_bethe2: f64,
    /// `√2·(πn/e)^{1/4}`
    pub bethe2_over_bethe: f64,
    /// `(πn/e)^{1/4}`
    pub gamma2: f64,
}

pub fn reference_ratios(n: usize) -> ReferenceRatios {
    use std::f64::consts::{E, PI, SQRT_2};
    let x = PI * n as f64 / E;
    ReferenceRatios {
        perm_over_bethe: (2.0 * x).sqrt(),
        perm_over_bethe2: x.powf(0.25),
        bethe2_over_bethe: SQRT_2 * x.powf(0.25),
        gamma2: x.powf(0.25),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rel_err;
    use crate::perm_group::{cycle_type, enumerate_all};

    fn brute_cycle_index(n: usize, z: &CycleIndexWeights) -> f64 {
        let perms: Vec<_> = enumerate_all(n).unwrap().collect();
        let total: f64 = perms
            .iter()
            .map(|s| {
                cycle_type(s)
                    .nonzero()
                    .map(|(l, c)| z.weight_of(l).powi(c as i32))
                    .product::<f64>()
            })
            .sum();
        total / perms.len() as f64
    }

    #[test]
    fn cycle_index_examples() {
        for n in [0, 1, 5, 40] {
            assert_eq!(cycle_index(n, &CycleIndexWeights::AllOne).unwrap(), 1.0);
        }
        assert_eq!(cycle_index(2, &CycleIndexWeights::half_long()).unwrap(), 0.75);
        let z8 = cycle_index(8, &CycleIndexWeights::half_long()).unwrap();
        assert!(rel_err(z8, 72091.0 / 215040.0) < 1e-14);
    }

    #[test]
    fn all_families_match_brute_force() {
        let rules = [
            CycleIndexWeights::half_long(),
            CycleIndexWeights::FixedPointsAndRest {
                fixed: 0.3,
                rest: 2.0,
            },
            CycleIndexWeights::Geometric {
                first: 1.5,
                scale: 0.5,
                base: 0.8,
            },
            CycleIndexWeights::custom(|l| 1.0 / l as f64 + 0.25),
        ];
        for z in &rules {
            for n in 1..=7 {
                let got = cycle_index(n, z).unwrap();
                let want = brute_cycle_index(n, z);
                assert!(rel_err(got, want) < 1e-13, "{z:?} n={n}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn families_agree_with_custom_rule() {
        let g = CycleIndexWeights::Geometric {
            first: 0.7,
            scale: 0.5,
            base: 1.1,
        };
        let g2 = g.clone();
        let custom = CycleIndexWeights::custom(move |l| g2.weight_of(l));
        for n in [10, 50, 200] {
            assert!(rel_err(cycle_index(n, &g).unwrap(), cycle_index(n, &custom).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn z_all_one_examples() {
        assert_eq!(z_all_one(0).unwrap(), 1.0);
        assert_eq!(z_all_one(1).unwrap(), 1.0);
        assert!(rel_err(z_all_one(3).unwrap(), 7.0 / 12.0) < 1e-15);
        assert!(rel_err(z_all_one(4).unwrap(), 47.0 / 96.0) < 1e-15);
    }

    #[test]
    fn z_bounds_bracket_small_cases() {
        let (lo, hi) = z_bounds(1).unwrap();
        assert!((lo - 0.707_106_781_186_547_5).abs() < 1e-15);
        assert!((hi - 1.060_660_171_779_821_2).abs() < 1e-15);
        let (lo, hi) = z_bounds(250).unwrap();
        let z = z_all_one(250).unwrap();
        assert!(lo <= z && z <= hi);
        assert!(z_bounds(0).is_err());
    }

    #[test]
    fn bell_examples() {
        assert!(rel_err(bell_polynomial(&[1.0; 3]).unwrap(), 5.0) < 1e-14);
        assert!(rel_err(bell_polynomial(&[1.0; 10]).unwrap(), 115_975.0) < 1e-13);
        assert!(rel_err(bell_polynomial(&[2.5]).unwrap(), 2.5) < 1e-15);
        assert_eq!(bell_polynomial(&[]).unwrap(), 1.0);
        let x: Vec<f64> = (0..4)
            .map(|k| factorial(k) * if k == 0 { 1.0 } else { 0.5 })
            .collect();
        assert!(rel_err(bell_polynomial(&x).unwrap(), 11.75) < 1e-14);
        // B_2(x1, x2) = x1² + x2 with a negative argument
        assert!(rel_err(bell_polynomial(&[1.0, -3.0]).unwrap(), -2.0) < 1e-14);
        assert!(matches!(
            bell_polynomial(&[1e10; 300]),
            Err(Error::Overflow { .. })
        ));
        assert!(bell_polynomial(&[1.0; 401]).is_err());
    }

    #[test]
    fn psi_examples() {
        let one = PsiParams::new(1.0, 1.0, 1.0).unwrap();
        for n in 0..=30 {
            let f = factorial(n as u64);
            assert_eq!(psi(n, &one), f * f);
        }
        let half = PsiParams::new(1.0, 1.0, 0.5).unwrap();
        assert!(rel_err(psi(2, &half), 3.0) < 1e-15);
        let u1 = PsiParams::new(1.0 / 3.0, 0.25, 1.0).unwrap();
        assert!(rel_err(psi(2, &u1), 25.0 / 72.0) < 1e-15);
        let u2 = PsiParams::new(1.0 / 3.0, 0.25, 0.5).unwrap();
        assert!(rel_err(psi(2, &u2), 41.0 / 144.0) < 1e-15);
    }

    #[test]
    fn psi_parameter_domain() {
        assert!(PsiParams::new(1.0, 1.0, 0.0).is_err());
        assert!(PsiParams::new(1.0, 1.0, 1.5).is_err());
        assert!(PsiParams::new(0.0, 1.0, 0.5).is_err());
        assert!(PsiParams::new(1.0, -1.0, 0.5).is_err());
    }

    #[test]
    fn psi_forms_agree() {
        for &(t1, t2) in &[(1.0, 1.0), (1.0 / 3.0, 0.25), (2.0, 0.7), (0.1, 1.0)] {
            for &t3 in &[0.25, 0.5, 1.0] {
                let p = PsiParams::new(t1, t2, t3).unwrap();
                for n in [1, 7, 30, 90] {
                    let lin = psi(n, &p).ln();
                    let lg = log_psi(n, &p).ln();
                    let bell = psi_via_bell(n, &p).unwrap().ln();
                    let scale = lin.abs().max(1.0);
                    assert!((lin - lg).abs() / scale < 1e-12, "{p:?} n={n}");
                    assert!((lin - bell).abs() / scale < 1e-12, "{p:?} n={n}");
                }
            }
        }
    }

    #[test]
    fn psi_log_path_above_threshold() {
        let p = PsiParams::new(1.0, 1.0, 0.5).unwrap();
        let lv = log_psi(400, &p);
        let z = z_all_one(400).unwrap();
        assert!((lv.ln() - (2.0 * ln_factorial(400) + z.ln())).abs() < 1e-10);
    }

    #[test]
    fn asymptote_examples() {
        let one = PsiParams::new(1.0, 1.0, 1.0).unwrap();
        for n in [1, 5, 20] {
            assert!(rel_err(psi_asymptotic(n, &one), psi(n, &one)) < 1e-13);
        }
        let half = PsiParams::new(1.0, 1.0, 0.5).unwrap();
        let n = 10_000;
        let ratio = (log_psi(n, &half).ln() - log_psi_asymptotic(n, &half).ln()).exp();
        assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
        let u = PsiParams::new(1.0 / 3.0, 0.25, 0.5).unwrap();
        let ratio = (log_psi(200, &u).ln() - log_psi_asymptotic(200, &u).ln()).exp();
        assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
    }

    #[test]
    fn reference_ratio_identities() {
        let r = reference_ratios(5);
        assert!((r.gamma2 - 1.550_444_942_741_941_6).abs() < 1e-14);
        for n in [1, 10, 1000] {
            let r = reference_ratios(n);
            assert!(rel_err(r.bethe2_over_bethe, std::f64::consts::SQRT_2 * r.perm_over_bethe2) < 1e-15);
            assert!(
                rel_err(r.perm_over_bethe, r.perm_over_bethe2.powi(2) * std::f64::consts::SQRT_2)
                    < 1e-14
            );
        }
    }
}
