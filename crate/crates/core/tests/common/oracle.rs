//! Extended-precision reference values, independent of the library code paths.
//!
//! Bessel values come from the ascending power series summed in double-double
//! arithmetic (~106-bit significand) with an explicit power-of-two exponent, so
//! neither overflow nor cancellation limits the sum. Only the final assembly of
//! `ν log(κ/2) − log Γ(ν+1) + log S` happens in `f64`, which keeps the oracle
//! about three orders of magnitude tighter than the 1e-10 tolerance it checks.
//! Γ(ν+1) is an exact product, so orders must be integers or half-integers
//! (which covers every `ν = d/2 − 1`).

use std::f64::consts::{LN_2, TAU};

const SQRT_PI_HI: f64 = 1.772453850905516;
const SQRT_PI_LO: f64 = -7.666586499825799e-17;
const LN2_LO: f64 = 2.3190468138462996e-17;

#[derive(Debug, Clone, Copy)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }

    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn mul_f64(self, b: f64) -> Dd {
        self.mul(Dd::from(b))
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul_f64(-q1));
        let q2 = r.hi / o.hi;
        let r = r.add(o.mul_f64(-q2));
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add(Dd::from(q3))
    }

    pub fn div_f64(self, b: f64) -> Dd {
        self.div(Dd::from(b))
    }

    pub fn ln(self) -> f64 {
        self.hi.ln() + self.lo / self.hi
    }
}

/// Positive double-double value times `2^exp2`.
#[derive(Debug, Clone, Copy)]
struct Scaled {
    mant: Dd,
    exp2: i64,
}

const SHIFT: i32 = 600;

impl Scaled {
    fn renorm(&mut self) {
        let scale = 2f64.powi(-SHIFT);
        while self.mant.hi > 2f64.powi(SHIFT) {
            self.mant = self.mant.mul_f64(scale);
            self.exp2 += SHIFT as i64;
        }
    }

    fn ln(self) -> f64 {
        self.mant.ln() + (self.exp2 as f64) * LN_2 + (self.exp2 as f64) * LN2_LO
    }
}

fn assert_half_integer(nu: f64) {
    assert!(nu >= 0.0 && (2.0 * nu).fract() == 0.0, "oracle needs integer or half-integer order, got {nu}");
}

/// `log Γ(ν+1)` by exact recurrence down to Γ(1) or Γ(3/2).
pub fn log_gamma_plus_one(nu: f64) -> f64 {
    assert_half_integer(nu);
    let mut acc = Scaled { mant: Dd::ONE, exp2: 0 };
    let mut x = nu;
    while x >= 1.0 {
        acc.mant = acc.mant.mul_f64(x);
        acc.renorm();
        x -= 1.0;
    }
    if x == 0.5 {
        acc.mant = acc.mant.mul(Dd { hi: SQRT_PI_HI, lo: SQRT_PI_LO }).mul_f64(0.5);
    }
    acc.ln()
}

/// `log Σ_m (κ²/4)^m / (m! (ν+1)_m)`.
fn log_series_sum(nu: f64, kappa: f64) -> f64 {
    let (qh, ql) = two_prod(kappa, kappa);
    let q = Dd { hi: qh * 0.25, lo: ql * 0.25 };
    let mut term = Dd::ONE;
    let mut sum = Scaled { mant: Dd::ONE, exp2: 0 };
    let mut m = 0.0f64;
    loop {
        m += 1.0;
        let denom = m * (m + nu);
        term = term.mul(q).div_f64(denom);
        sum.mant = sum.mant.add(term);
        if sum.mant.hi > 2f64.powi(SHIFT) {
            let scale = 2f64.powi(-SHIFT);
            sum.mant = sum.mant.mul_f64(scale);
            term = term.mul_f64(scale);
            sum.exp2 += SHIFT as i64;
        }
        if denom > q.hi && term.hi < 1e-34 * sum.mant.hi {
            break;
        }
    }
    sum.ln()
}

/// Reference `log I_ν(κ)` for integer or half-integer `ν`, `κ > 0`.
pub fn log_bessel_i(nu: f64, kappa: f64) -> f64 {
    assert!(kappa > 0.0);
    let power = if nu == 0.0 { 0.0 } else { nu * (kappa.ln() - LN_2) };
    power - log_gamma_plus_one(nu) + log_series_sum(nu, kappa)
}

/// Reference `log C_d(κ)`.
pub fn log_vmf_normalizer(d: usize, kappa: f64) -> f64 {
    let nu = d as f64 / 2.0 - 1.0;
    let power = if nu == 0.0 { 0.0 } else { nu * kappa.ln() };
    power - 0.5 * d as f64 * TAU.ln() - log_bessel_i(nu, kappa)
}

/// Reference `A_d(κ)`.
pub fn mean_resultant_length(d: usize, kappa: f64) -> f64 {
    let nu = d as f64 / 2.0 - 1.0;
    (log_bessel_i(nu + 1.0, kappa) - log_bessel_i(nu, kappa)).exp()
}

/// Softmax evaluated term by term against the largest logit, accumulated in
/// double-double.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&q| (q - max).exp()).collect();
    let total = exps.iter().fold(Dd::from(0.0), |acc, &e| acc.add(Dd::from(e)));
    exps.iter().map(|&e| Dd::from(e).div(total).hi).collect()
}

/// `log Σ exp(q)` with a double-double accumulator.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total = logits.iter().fold(Dd::from(0.0), |acc, &q| acc.add(Dd::from((q - max).exp())));
    max + total.ln()
}
