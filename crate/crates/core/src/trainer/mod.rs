//! The post-processing module: a one-hidden-layer MLP whose normalized outputs
//! are trained with the fair vMF loss using Adam.

mod adam;
pub mod checkpoint;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use mlp::{ForwardCache, Mlp, MlpConfig, MlpGradients};

use ndarray::{Array2, ArrayView2, Axis};

use crate::dataset::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::fairloss::{dataset_matrix, fair_vmf_loss, FairKappas, IdentityTable, LossBatch};
use crate::rng::SeededRng;
use crate::vmf::normalize_rows;

const WEIGHT_STREAM: u64 = 10;
const CENTROID_STREAM: u64 = 11;
const SHUFFLE_STREAM: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub kappas: FairKappas,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, learning_rate: f64, seed: u64, kappas: FairKappas) -> Self {
        Self {
            epochs,
            batch_size,
            adam: AdamConfig { learning_rate, ..AdamConfig::default() },
            seed,
            kappas,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        self.adam.validate()
    }
}

/// Gradients of every trainable block.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub mlp: MlpGradients,
    pub centroids: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchEvaluation {
    pub loss: f64,
    pub gradients: Gradients,
    pub bound_violations: usize,
}

/// How input embeddings are mapped before scoring.
#[derive(Debug, Clone, PartialEq)]
pub enum Embedder {
    /// Pass-through normalization.
    Identity,
    Mlp(Mlp),
}

impl Embedder {
    pub fn embed(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Embedder::Mlp(m) => Ok(m.forward(x)?.output),
            Embedder::Identity => {
                let mut out = x.as_standard_layout().into_owned();
                normalize_rows(out.as_slice_mut().unwrap(), x.ncols())?;
                Ok(out)
            }
        }
    }
}

/// MLP, classifier head and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub mlp: Mlp,
    pub table: IdentityTable,
    pub adam: Adam,
    pub config: TrainConfig,
}

impl ModelState {
    /// Seeded initial state for the identities of a dataset.
    pub fn init(identities: &[(u32, u8)], mlp_config: MlpConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mlp = Mlp::init(mlp_config, &mut SeededRng::with_stream(config.seed, WEIGHT_STREAM));
        let table = IdentityTable::random(
            identities,
            mlp_config.d_out,
            &mut SeededRng::with_stream(config.seed, CENTROID_STREAM),
        )?;
        let adam = Adam::new(config.adam, &Self::block_sizes(&mlp, &table))?;
        Ok(Self { mlp, table, adam, config })
    }

    fn block_sizes(mlp: &Mlp, table: &IdentityTable) -> Vec<usize> {
        vec![mlp.w1.len(), mlp.b1.len(), mlp.w2.len(), mlp.b2.len(), table.centroids().len()]
    }

    /// Loss and gradients of the whole pipeline on one batch of raw inputs.
    pub fn evaluate_batch(&self, x: ArrayView2<f64>, labels: &[u32], kappas: FairKappas) -> Result<BatchEvaluation> {
        let cache = self.mlp.forward(x)?;
        let out = fair_vmf_loss(&LossBatch::new(cache.output.view(), labels)?, &self.table, kappas)?;
        let mlp = self.mlp.backward(&cache, out.grad_embeddings.view())?;
        Ok(BatchEvaluation {
            loss: out.loss,
            gradients: Gradients { mlp, centroids: out.grad_centroids },
            bound_violations: out.bound_violations,
        })
    }

    pub fn apply(&mut self, g: &Gradients) -> Result<()> {
        let c = self.table.centroids_mut();
        let mut params: [&mut [f64]; 5] = [
            self.mlp.w1.as_slice_mut().unwrap(),
            self.mlp.b1.as_slice_mut().unwrap(),
            self.mlp.w2.as_slice_mut().unwrap(),
            self.mlp.b2.as_slice_mut().unwrap(),
            c.as_slice_mut().unwrap(),
        ];
        let grads: [&[f64]; 5] = [
            g.mlp.w1.as_slice().unwrap(),
            g.mlp.b1.as_slice().unwrap(),
            g.mlp.w2.as_slice().unwrap(),
            g.mlp.b2.as_slice().unwrap(),
            g.centroids.as_slice().unwrap(),
        ];
        self.adam.step(&mut params, &grads)
    }

    pub fn is_finite(&self) -> bool {
        self.mlp.is_finite() && self.table.centroids().iter().all(|v| v.is_finite())
    }

    pub fn embedder(&self) -> Embedder {
        Embedder::Mlp(self.mlp.clone())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: ModelState,
    /// Sample-weighted mean loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Logits outside their analytic bounds, summed over the whole run.
    pub bound_violations: usize,
    pub logits_checked: usize,
}

pub fn train(dataset: &EmbeddingDataset, mlp_config: MlpConfig, config: TrainConfig) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if dataset.dim() != mlp_config.d_in {
        return Err(Error::DimensionMismatch { expected: mlp_config.d_in, got: dataset.dim() });
    }
    let mut state = ModelState::init(&dataset.identities(), mlp_config, config)?;
    let (x, labels) = dataset_matrix(dataset)?;
    let n = x.nrows();
    let mut shuffle = SeededRng::with_stream(config.seed, SHUFFLE_STREAM);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut bound_violations = 0;
    let mut logits_checked = 0;
    for epoch in 0..config.epochs {
        let order = shuffle.permutation(n);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let xb = x.select(Axis(0), idx);
            let yb: Vec<u32> = idx.iter().map(|&i| labels[i]).collect();
            let ev = state.evaluate_batch(xb.view(), &yb, config.kappas)?;
            if !ev.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            bound_violations += ev.bound_violations;
            logits_checked += idx.len() * state.table.len();
            total += ev.loss * idx.len() as f64;
            state.apply(&ev.gradients)?;
        }
        if !state.is_finite() {
            return Err(Error::NonFiniteParameters { epoch });
        }
        epoch_losses.push(total / n as f64);
    }
    Ok(TrainOutcome { state, epoch_losses, bound_violations, logits_checked })
}

/// `epoch,mean_loss` rows, epochs counted from 1.
pub fn loss_log_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,mean_loss\n");
    for (e, l) in losses.iter().enumerate() {
        s.push_str(&format!("{},{}\n", e + 1, l));
    }
    s
}

/// Embeddings of every record under `embedder`, one unit row per record.
pub fn embed_dataset(dataset: &EmbeddingDataset, embedder: &Embedder) -> Result<Array2<f64>> {
    match embedder {
        Embedder::Identity => Ok(dataset_matrix(dataset)?.0),
        Embedder::Mlp(_) => {
            let mut x = Array2::zeros((dataset.len(), dataset.dim()));
            for (i, r) in dataset.records().iter().enumerate() {
                x.row_mut(i).iter_mut().zip(&r.embedding).for_each(|(o, &v)| *o = f64::from(v));
            }
            embedder.embed(x.view())
        }
    }
}
