#![allow(dead_code)]

pub mod fd;
pub mod instances;
pub mod metrics_oracle;
pub mod oracle;
pub mod spread;

/// Mixed relative/absolute error: `|got − want| / max(|want|, 1)`.
pub fn scaled_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

/// Half-integer orders spanning `[0, 300]`.
pub fn order_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| (600.0 * i as f64 / (n - 1) as f64).round() / 2.0).collect()
}

/// Log-spaced arguments on `[1e-3, 1e3]`.
pub fn kappa_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / (n - 1) as f64)).collect()
}
