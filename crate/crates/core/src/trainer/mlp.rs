use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::vmf::MIN_NORM;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpConfig {
    pub d_in: usize,
    pub hidden: usize,
    pub d_out: usize,
}

impl MlpConfig {
    pub fn new(d_in: usize, hidden: usize, d_out: usize) -> Result<Self> {
        if d_in == 0 || hidden == 0 || d_out == 0 {
            return Err(Error::Config(format!("MLP dims must be >= 1, got ({d_in}, {hidden}, {d_out})")));
        }
        Ok(Self { d_in, hidden, d_out })
    }
}

/// `z = normalize(W₂ relu(W₁ x + b₁) + b₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Activations of a batch forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Array2<f64>,
    pub pre_activation: Array2<f64>,
    pub hidden: Array2<f64>,
    pub output_norms: Array1<f64>,
    pub output: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

fn uniform_matrix(rows: usize, cols: usize, limit: f64, rng: &mut SeededRng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || limit * (2.0 * rng.uniform() - 1.0))
}

impl Mlp {
    /// He-uniform `W₁`, Xavier-uniform `W₂`, zero biases.
    pub fn init(cfg: MlpConfig, rng: &mut SeededRng) -> Self {
        let he = (6.0 / cfg.d_in as f64).sqrt();
        let xavier = (6.0 / (cfg.hidden + cfg.d_out) as f64).sqrt();
        Self {
            w1: uniform_matrix(cfg.hidden, cfg.d_in, he, rng),
            b1: Array1::zeros(cfg.hidden),
            w2: uniform_matrix(cfg.d_out, cfg.hidden, xavier, rng),
            b2: Array1::zeros(cfg.d_out),
        }
    }

    pub fn config(&self) -> MlpConfig {
        MlpConfig { d_in: self.w1.ncols(), hidden: self.w1.nrows(), d_out: self.w2.nrows() }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        let cfg = self.config();
        if x.ncols() != cfg.d_in {
            return Err(Error::DimensionMismatch { expected: cfg.d_in, got: x.ncols() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite MLP input".into()));
        }
        let pre_activation = x.dot(&self.w1.t()) + &self.b1;
        let hidden = pre_activation.mapv(|v| v.max(0.0));
        let mut output = hidden.dot(&self.w2.t()) + &self.b2;
        let mut output_norms = Array1::zeros(x.nrows());
        for (i, mut row) in output.axis_iter_mut(Axis(0)).enumerate() {
            let n = row.dot(&row).sqrt();
            if !(n > MIN_NORM) || !n.is_finite() {
                return Err(Error::ZeroOutput { norm: n });
            }
            row /= n;
            output_norms[i] = n;
        }
        Ok(ForwardCache { input: x.to_owned(), pre_activation, hidden, output_norms, output })
    }

    /// Back-propagates `grad_output` (gradient of the loss with respect to the
    /// normalized outputs) through normalization, both affine maps and the
    /// rectifier.
    pub fn backward(&self, cache: &ForwardCache, grad_output: ArrayView2<f64>) -> Result<MlpGradients> {
        if grad_output.dim() != cache.output.dim() {
            return Err(Error::DimensionMismatch { expected: cache.output.ncols(), got: grad_output.ncols() });
        }
        let mut g_out = grad_output.to_owned();
        for ((mut g, z), &r) in g_out.rows_mut().into_iter().zip(cache.output.rows()).zip(&cache.output_norms) {
            let along = g.dot(&z);
            g.scaled_add(-along, &z);
            g /= r;
        }
        let w2 = g_out.t().dot(&cache.hidden);
        let b2 = g_out.sum_axis(Axis(0));
        let mut g_pre = g_out.dot(&self.w2);
        g_pre.zip_mut_with(&cache.pre_activation, |g, &a| {
            if a <= 0.0 {
                *g = 0.0;
            }
        });
        let w1 = g_pre.t().dot(&cache.input);
        let b1 = g_pre.sum_axis(Axis(0));
        Ok(MlpGradients { w1, b1, w2, b2 })
    }

    pub fn is_finite(&self) -> bool {
        [&self.w1, &self.w2].iter().all(|m| m.iter().all(|v| v.is_finite()))
            && [&self.b1, &self.b2].iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}
