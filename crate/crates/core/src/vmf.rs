//! von Mises-Fisher density, sampling, equiprobable mixtures and spread
//! statistics on the unit hypersphere `S^{d−1}`.

use std::collections::HashMap;

use crate::error::{ensure_dim, Error, Result};
use crate::rng::SeededRng;
use crate::specfn::log_vmf_normalizer;

/// Tolerance on `|‖z‖ − 1|` for a vector to count as a point of the sphere.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Below this norm a vector cannot be normalized.
pub const MIN_NORM: f64 = 1e-12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A direction in `R^d`: Euclidean norm 1 within [`UNIT_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Accepts `coords` only if it already has unit norm.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let n = norm(&coords);
        if coords.is_empty() || !((n - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(Error::Domain(format!("not a unit vector (norm {n})")));
        }
        Ok(Self(coords))
    }

    /// Scales `coords` onto the sphere.
    pub fn normalize(mut coords: Vec<f64>) -> Result<Self> {
        let n = norm(&coords);
        if coords.is_empty() || !(n > MIN_NORM) || !n.is_finite() {
            return Err(Error::ZeroNorm { norm: n });
        }
        coords.iter_mut().for_each(|c| *c /= n);
        Ok(Self(coords))
    }

    /// `e_axis` in `R^d`.
    pub fn basis(d: usize, axis: usize) -> Self {
        let mut v = vec![0.0; d];
        v[axis] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &UnitVector) -> Result<f64> {
        ensure_dim(self.dim(), other.dim())?;
        Ok(dot(&self.0, &other.0))
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Mean direction and concentration of a vMF distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct VmfParams {
    mu: UnitVector,
    kappa: f64,
}

impl VmfParams {
    pub fn new(mu: UnitVector, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::Domain(format!("kappa must be finite and > 0, got {kappa}")));
        }
        if mu.dim() < 2 {
            return Err(Error::Domain("vMF needs dimension >= 2".into()));
        }
        Ok(Self { mu, kappa })
    }

    pub fn mu(&self) -> &UnitVector {
        &self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.mu.dim()
    }
}

/// `log C_d(κ) + κ μᵀz`.
pub fn vmf_log_density(z: &UnitVector, p: &VmfParams) -> Result<f64> {
    let cos = p.mu.dot(z)?;
    Ok(log_vmf_normalizer(p.dim(), p.kappa)? + p.kappa * cos)
}

/// Draws `n` samples from `p` using stream 0 of `seed`.
pub fn sample_vmf(p: &VmfParams, n: usize, seed: u64) -> Result<Vec<UnitVector>> {
    if n == 0 {
        return Err(Error::Domain("sample count must be >= 1".into()));
    }
    let sampler = VmfSampler::new(p);
    let mut rng = SeededRng::new(seed);
    Ok((0..n).map(|_| sampler.sample(&mut rng)).collect())
}

/// Wood's rejection sampler: the cosine `w = μᵀz` is drawn from its marginal
/// by rejection against a transformed Beta((d−1)/2, (d−1)/2) proposal, the
/// tangential direction uniformly on the sphere orthogonal to `μ`.
#[derive(Debug, Clone)]
pub struct VmfSampler<'a> {
    params: &'a VmfParams,
    b: f64,
    x0: f64,
    c: f64,
}

impl<'a> VmfSampler<'a> {
    pub fn new(params: &'a VmfParams) -> Self {
        let m1 = (params.dim() - 1) as f64;
        let kappa = params.kappa;
        // b = (−2κ + √(4κ² + (d−1)²)) / (d−1), rationalized.
        let b = m1 / (2.0 * kappa + (4.0 * kappa * kappa + m1 * m1).sqrt());
        let x0 = (1.0 - b) / (1.0 + b);
        let c = kappa * x0 + m1 * (1.0 - x0 * x0).ln();
        Self { params, b, x0, c }
    }

    fn sample_cosine(&self, rng: &mut SeededRng) -> f64 {
        let d = self.params.dim();
        let m1 = (d - 1) as f64;
        let kappa = self.params.kappa;
        let mut g = vec![0.0; d];
        loop {
            // (1 + x₁)/2 for x uniform on S^{d−1} is Beta((d−1)/2, (d−1)/2).
            g.iter_mut().for_each(|v| *v = rng.standard_normal());
            let beta = 0.5 * (1.0 + g[0] / norm(&g));
            let w = (1.0 - (1.0 + self.b) * beta) / (1.0 - (1.0 - self.b) * beta);
            let u = rng.uniform_open0();
            if kappa * w + m1 * (1.0 - self.x0 * w).ln() - self.c >= u.ln() {
                return w.clamp(-1.0, 1.0);
            }
        }
    }

    pub fn sample(&self, rng: &mut SeededRng) -> UnitVector {
        let mu = self.params.mu.as_slice();
        let w = self.sample_cosine(rng);
        loop {
            let mut v: Vec<f64> = (0..mu.len()).map(|_| rng.standard_normal()).collect();
            let along = dot(&v, mu);
            v.iter_mut().zip(mu).for_each(|(x, m)| *x -= along * m);
            let vn = norm(&v);
            if vn <= MIN_NORM {
                continue;
            }
            let s = (1.0 - w * w).max(0.0).sqrt() / vn;
            let z: Vec<f64> = v.iter().zip(mu).map(|(x, m)| w * m + s * x).collect();
            // Renormalize against rounding.
            return UnitVector::normalize(z).expect("vMF sample has unit norm");
        }
    }
}

/// Uniform direction on `S^{d−1}`.
pub fn sample_uniform_sphere(d: usize, rng: &mut SeededRng) -> UnitVector {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        if let Ok(u) = UnitVector::normalize(g) {
            return u;
        }
    }
}

/// Equiprobable mixture of vMF components sharing one dimension.
#[derive(Debug, Clone)]
pub struct VmfMixture {
    components: Vec<VmfParams>,
    log_norms: Vec<f64>,
}

impl VmfMixture {
    pub fn new(components: Vec<VmfParams>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Domain("mixture needs at least one component".into()))?;
        let d = first.dim();
        // One normalizer per distinct κ, keyed by its bit pattern.
        let mut cache: HashMap<u64, f64> = HashMap::new();
        let mut log_norms = Vec::with_capacity(components.len());
        for c in &components {
            ensure_dim(d, c.dim())?;
            let v = match cache.get(&c.kappa.to_bits()) {
                Some(&v) => v,
                None => {
                    let v = log_vmf_normalizer(d, c.kappa)?;
                    cache.insert(c.kappa.to_bits(), v);
                    v
                }
            };
            log_norms.push(v);
        }
        Ok(Self { components, log_norms })
    }

    pub fn components(&self) -> &[VmfParams] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// Per-component log densities `log C_d(κ_k) + κ_k μ_kᵀz`.
    pub fn component_log_densities(&self, z: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.dim(), z.len())?;
        Ok(self
            .components
            .iter()
            .zip(&self.log_norms)
            .map(|(c, &ln)| ln + c.kappa * dot(c.mu.as_slice(), z))
            .collect())
    }
}

/// Softmax of `logits`, shifted by the maximum.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&q| (q - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// `log Σ_k exp(q_k)`, shifted by the maximum.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + logits.iter().map(|&q| (q - max).exp()).sum::<f64>().ln()
}

/// Posterior probability of each mixture component given `z`.
pub fn mixture_posteriors(z: &UnitVector, m: &VmfMixture) -> Result<Vec<f64>> {
    Ok(softmax(&m.component_log_densities(z.as_slice())?))
}

/// Spread of one identity's embeddings around their renormalized mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadStats {
    pub renormalized_mean: UnitVector,
    /// `(1/n) Σ ‖z_i − 𝔷‖²`.
    pub inertia: f64,
    /// `‖(1/n) Σ z_i‖`.
    pub mean_norm: f64,
    pub count: usize,
}

/// Scales every row of `rows` (row-major, `d` columns) to unit norm.
pub fn normalize_rows(rows: &mut [f64], d: usize) -> Result<()> {
    for row in rows.chunks_mut(d.max(1)) {
        let n = norm(row);
        if !(n > MIN_NORM) || !n.is_finite() {
            return Err(Error::ZeroNorm { norm: n });
        }
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok(())
}

pub fn spread_stats<V: AsRef<[f64]>>(embeddings: &[V]) -> Result<SpreadStats> {
    let first = embeddings
        .first()
        .ok_or_else(|| Error::Domain("spread of an empty set".into()))?;
    let d = first.as_ref().len();
    let n = embeddings.len() as f64;
    let mut mean = vec![0.0; d];
    for z in embeddings {
        let z = z.as_ref();
        ensure_dim(d, z.len())?;
        mean.iter_mut().zip(z).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mean_norm = norm(&mean);
    if mean_norm <= MIN_NORM {
        return Err(Error::DegenerateMean { norm: mean_norm });
    }
    let center: Vec<f64> = mean.iter().map(|m| m / mean_norm).collect();
    let inertia = embeddings
        .iter()
        .map(|z| {
            z.as_ref()
                .iter()
                .zip(&center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum::<f64>()
        / n;
    Ok(SpreadStats {
        renormalized_mean: UnitVector(center),
        inertia,
        mean_norm,
        count: embeddings.len(),
    })
}
