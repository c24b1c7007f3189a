//! Log-space modified Bessel function of the first kind and the vMF
//! normalizing constant.
//!
//! `log I_ν(κ)` is evaluated by one of three branches, none of which ever
//! forms `I_ν(κ)` itself:
//!
//! * ascending power series, for `ν < DEBYE_MIN_ORDER` and
//!   `κ < HANKEL_MIN_ARG`;
//! * Hankel's large-argument expansion, for `ν < DEBYE_MIN_ORDER` and
//!   `κ ≥ HANKEL_MIN_ARG`;
//! * Debye's uniform asymptotic expansion in `ν`, for `ν ≥ DEBYE_MIN_ORDER`
//!   (uniform in `κ/ν`, so it covers both tiny and huge arguments).
//!
//! The series and Hankel branches are also exported so callers can check
//! branch agreement at the seams.

use std::f64::consts::{LN_2, PI, TAU};
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Orders at or above this use the uniform asymptotic expansion.
pub const DEBYE_MIN_ORDER: f64 = 10.0;

/// For low orders, arguments at or above this use the Hankel expansion.
pub const HANKEL_MIN_ARG: f64 = 100.0;

/// Number of Debye polynomials `U_k` kept (k = 0..DEBYE_TERMS).
const DEBYE_TERMS: usize = 24;

/// Order `ν ≥ 0` of a modified Bessel function.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BesselOrder(f64);

impl BesselOrder {
    pub fn new(nu: f64) -> Result<Self> {
        if !nu.is_finite() || nu < 0.0 {
            return Err(Error::Domain(format!("Bessel order must be finite and >= 0, got {nu}")));
        }
        Ok(Self(nu))
    }

    /// `ν = d/2 − 1`, the order attached to the vMF density on `S^{d−1}`.
    pub fn for_dimension(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::Domain(format!("dimension must be >= 2, got {d}")));
        }
        Ok(Self(d as f64 / 2.0 - 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `log C_d(κ)` together with the arguments that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalizer {
    pub value: f64,
    pub d: usize,
    pub kappa: f64,
}

impl LogNormalizer {
    pub fn new(d: usize, kappa: f64) -> Result<Self> {
        Ok(Self {
            value: log_vmf_normalizer(d, kappa)?,
            d,
            kappa,
        })
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa.is_nan() || kappa < 0.0 || kappa == f64::INFINITY {
        return Err(Error::Domain(format!("kappa must be finite and >= 0, got {kappa}")));
    }
    Ok(())
}

/// Natural logarithm of `I_ν(κ)`.
///
/// `κ = 0` is accepted only for `ν = 0` (where `I₀(0) = 1`).
pub fn log_bessel_i(order: BesselOrder, kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    let nu = order.value();
    if kappa == 0.0 {
        return if nu == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Domain(format!("log I_{nu}(0) is -infinity")))
        };
    }
    let value = if nu >= DEBYE_MIN_ORDER {
        log_bessel_i_debye(nu, kappa)
    } else if kappa < HANKEL_MIN_ARG {
        log_bessel_i_series(nu, kappa)
    } else {
        log_bessel_i_hankel(nu, kappa)
    };
    Ok(value)
}

/// Ascending series `Σ_m (κ/2)^{2m+ν} / (m! Γ(m+ν+1))`, summed in log space.
///
/// Valid for every `ν ≥ 0`, `κ > 0`; the cost grows linearly with `κ`.
pub fn log_bessel_i_series(nu: f64, kappa: f64) -> f64 {
    const RESCALE_AT: f64 = 1e250;
    let q = 0.25 * kappa * kappa;
    // Sum of the terms m >= 1 relative to the m = 0 term, possibly rescaled.
    let mut term = 1.0;
    let mut tail = 0.0;
    let mut rescales = 0i32;
    let mut m = 0.0;
    loop {
        m += 1.0;
        let ratio = q / (m * (m + nu));
        term *= ratio;
        tail += term;
        if term > RESCALE_AT {
            term /= RESCALE_AT;
            tail /= RESCALE_AT;
            rescales += 1;
        }
        // Once the ratio drops below one the remainder is bounded by a
        // geometric series.
        if ratio < 1.0 {
            let remainder = term * ratio / (1.0 - ratio);
            let total = if rescales == 0 { 1.0 + tail } else { tail };
            if remainder <= f64::EPSILON * 0.05 * total {
                break;
            }
        }
    }
    let log_sum = if rescales == 0 {
        tail.ln_1p()
    } else {
        tail.ln() + f64::from(rescales) * RESCALE_AT.ln()
    };
    nu * (0.5 * kappa).ln() - libm::lgamma(nu + 1.0) + log_sum
}

/// Hankel expansion `e^κ / √(2πκ) · Σ_k (−1)^k a_k(ν) / κ^k`.
///
/// Accurate when `κ` is large compared with `ν²`; the series is summed until
/// the terms stop shrinking.
pub fn log_bessel_i_hankel(nu: f64, kappa: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    loop {
        k += 1.0;
        let odd = 2.0 * k - 1.0;
        let next = -term * (mu - odd * odd) / (8.0 * k * kappa);
        if next == 0.0 {
            break;
        }
        if next.abs() >= term.abs() {
            break;
        }
        sum += next;
        term = next;
        if term.abs() <= 0.05 * f64::EPSILON * sum.abs() {
            break;
        }
    }
    kappa - 0.5 * (TAU * kappa).ln() + sum.ln()
}

/// Debye's expansion `I_ν(νz) ~ e^{νη} / (√(2πν) (1+z²)^{1/4}) Σ_k U_k(p)/ν^k`
/// with `p = (1+z²)^{-1/2}` and `η = √(1+z²) + ln(z / (1 + √(1+z²)))`.
pub fn log_bessel_i_debye(nu: f64, kappa: f64) -> f64 {
    let z = kappa / nu;
    let root = 1.0f64.hypot(z);
    let p = 1.0 / root;
    let eta = root + (kappa.ln() - nu.ln()) - root.ln_1p();

    let polys = debye_polynomials();
    let mut sum = 1.0;
    let mut scale = 1.0;
    for poly in &polys[1..] {
        scale /= nu;
        let term = eval_poly(poly, p) * scale;
        sum += term;
        if term.abs() <= 0.05 * f64::EPSILON * sum.abs() {
            break;
        }
    }
    nu * eta - 0.5 * (TAU * nu).ln() - 0.5 * root.ln() + sum.ln()
}

/// Coefficients (ascending powers of `p`) of the Debye polynomials, generated
/// from `U₀ = 1` and
/// `U_{k+1}(p) = ½p²(1−p²) U_k'(p) + ⅛ ∫₀ᵖ (1−5t²) U_k(t) dt`.
fn debye_polynomials() -> &'static [Vec<f64>] {
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    POLYS.get_or_init(|| {
        let mut polys = vec![vec![1.0]];
        for _ in 1..DEBYE_TERMS {
            let prev = polys.last().unwrap();
            let mut next = vec![0.0; prev.len() + 3];
            // ½ (p² − p⁴) U'(p)
            for (j, &c) in prev.iter().enumerate().skip(1) {
                let deriv = c * j as f64;
                next[j + 1] += 0.5 * deriv;
                next[j + 3] -= 0.5 * deriv;
            }
            // ⅛ ∫ (1 − 5t²) U(t) dt
            for (j, &c) in prev.iter().enumerate() {
                next[j + 1] += 0.125 * c / (j + 1) as f64;
                next[j + 3] -= 0.625 * c / (j + 3) as f64;
            }
            polys.push(next);
        }
        polys
    })
}

fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// `log C_d(κ) = (d/2−1) log κ − (d/2) log 2π − log I_{d/2−1}(κ)`.
pub fn log_vmf_normalizer(d: usize, kappa: f64) -> Result<f64> {
    let order = BesselOrder::for_dimension(d)?;
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("kappa must be > 0, got {kappa}")));
    }
    let nu = order.value();
    let log_i = log_bessel_i(order, kappa)?;
    let power = if nu == 0.0 { 0.0 } else { nu * kappa.ln() };
    Ok(power - 0.5 * d as f64 * (TAU).ln() - log_i)
}

/// `log C_d(0⁺) = log Γ(d/2) − (d/2) log π − log 2`, the uniform density on `S^{d−1}`.
pub fn log_uniform_sphere_density(d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::Domain(format!("dimension must be >= 2, got {d}")));
    }
    let half = 0.5 * d as f64;
    Ok(libm::lgamma(half) - half * PI.ln() - LN_2)
}

/// Mean resultant length `A_d(κ) = I_{d/2}(κ) / I_{d/2−1}(κ)`.
pub fn mean_resultant_length(d: usize, kappa: f64) -> Result<f64> {
    let lower = BesselOrder::for_dimension(d)?;
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("kappa must be > 0, got {kappa}")));
    }
    let upper = BesselOrder::new(lower.value() + 1.0)?;
    Ok((log_bessel_i(upper, kappa)? - log_bessel_i(lower, kappa)?).exp())
}
