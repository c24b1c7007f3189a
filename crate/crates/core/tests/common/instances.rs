//! Seeded random instances of the full training pipeline for gradient checks.

use fvmf_core::fairloss::{FairKappas, IdentityTable};
use fvmf_core::rng::SeededRng;
use fvmf_core::trainer::{Mlp, MlpConfig, ModelState, TrainConfig};
use ndarray::Array2;

use super::fd::{central_diff, max_rel_err, STEP};

/// Pre-activations closer than this to the rectifier kink make a central
/// difference straddle it; such instances are redrawn.
pub const KINK_MARGIN: f64 = 1e-3;

pub struct PipelineInstance {
    pub state: ModelState,
    pub x: Array2<f64>,
    pub labels: Vec<u32>,
    pub kappas: FairKappas,
}

impl PipelineInstance {
    /// `n` inputs, `k` identities (split between both groups), MLP `dims`.
    pub fn random(rng: &mut SeededRng, dims: (usize, usize, usize), k: usize, n: usize) -> Self {
        loop {
            let kappas = FairKappas::new(1.0 + 29.0 * rng.uniform(), 1.0 + 29.0 * rng.uniform()).unwrap();
            let identities: Vec<(u32, u8)> = (0..k as u32).map(|i| (10 + i, (i % 2) as u8)).collect();
            let cfg = TrainConfig::new(1, n, 0.01, rng.next_u64(), kappas);
            let mut state = ModelState::init(&identities, MlpConfig::new(dims.0, dims.1, dims.2).unwrap(), cfg).unwrap();
            state.mlp.b1.iter_mut().for_each(|b| *b = 0.3 * rng.standard_normal());
            state.mlp.b2.iter_mut().for_each(|b| *b = 0.3 * rng.standard_normal());
            let table = IdentityTable::new(
                &identities,
                Array2::from_shape_simple_fn((k, dims.2), || rng.standard_normal()),
            )
            .unwrap();
            state.table = table;
            let x = Array2::from_shape_simple_fn((n, dims.0), || rng.standard_normal());
            let labels: Vec<u32> = (0..n).map(|_| 10 + rng.below(k as u64) as u32).collect();
            let cache = state.mlp.forward(x.view()).unwrap();
            if cache.pre_activation.iter().all(|a| a.abs() > KINK_MARGIN) {
                return Self { state, x, labels, kappas };
            }
        }
    }

    pub fn loss(&self, mlp: &Mlp, centroids: &Array2<f64>) -> f64 {
        let mut s = self.state.clone();
        s.mlp = mlp.clone();
        *s.table.centroids_mut() = centroids.clone();
        s.evaluate_batch(self.x.view(), &self.labels, self.kappas).unwrap().loss
    }

    /// Worst error over every parameter block.
    pub fn gradient_error(&self) -> f64 {
        let g = self.state.evaluate_batch(self.x.view(), &self.labels, self.kappas).unwrap().gradients;
        let mlp = &self.state.mlp;
        let c = self.state.table.centroids();
        let mut worst = 0.0f64;
        let mut check = |analytic: &[f64], params: &[f64], rebuild: &dyn Fn(&[f64]) -> f64| {
            let numeric = central_diff(|p| rebuild(p), params, STEP);
            worst = worst.max(max_rel_err(analytic, &numeric));
        };
        check(g.mlp.w1.as_slice().unwrap(), mlp.w1.as_slice().unwrap(), &|p| {
            let mut m = mlp.clone();
            m.w1.as_slice_mut().unwrap().copy_from_slice(p);
            self.loss(&m, c)
        });
        check(g.mlp.b1.as_slice().unwrap(), mlp.b1.as_slice().unwrap(), &|p| {
            let mut m = mlp.clone();
            m.b1.as_slice_mut().unwrap().copy_from_slice(p);
            self.loss(&m, c)
        });
        check(g.mlp.w2.as_slice().unwrap(), mlp.w2.as_slice().unwrap(), &|p| {
            let mut m = mlp.clone();
            m.w2.as_slice_mut().unwrap().copy_from_slice(p);
            self.loss(&m, c)
        });
        check(g.mlp.b2.as_slice().unwrap(), mlp.b2.as_slice().unwrap(), &|p| {
            let mut m = mlp.clone();
            m.b2.as_slice_mut().unwrap().copy_from_slice(p);
            self.loss(&m, c)
        });
        check(g.centroids.as_slice().unwrap(), c.as_slice().unwrap(), &|p| {
            let mut cc = c.clone();
            cc.as_slice_mut().unwrap().copy_from_slice(p);
            self.loss(mlp, &cc)
        });
        worst
    }
}
