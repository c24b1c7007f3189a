//! Central finite differences and the error measure used to compare them with
//! analytic gradients.

pub const STEP: f64 = 1e-5;

/// `(f(x + h e_j) − f(x − h e_j)) / 2h` for every coordinate `j`.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|j| {
            p[j] = x[j] + h;
            let up = f(&p);
            p[j] = x[j] - h;
            let down = f(&p);
            p[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest componentwise `|a − n| / max(|a|, |n|, floor)` with
/// `floor = 1e-3 · max(1, ‖n‖∞)`. Components far below the gradient's own
/// scale are thereby compared in absolute terms, where a central difference
/// carries O(h²) truncation and O(ε/h) rounding error regardless of the
/// component's size.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = numeric.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-3 * scale;
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
