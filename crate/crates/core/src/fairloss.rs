//! Softmax classification losses on the hypersphere: the classical
//! single-concentration loss, the vMF mixture negative log-likelihood and the
//! fair variant with one concentration per group.
//!
//! For embedding `z` and normalized centroids `μ̂_k` the logits are
//! `q_k = b_k + s_k μ̂_kᵀ z` where `s_k` is the concentration of identity
//! `k` and `b_k` is `log C_d(s_k)` (fair loss) or `0` (classical loss). The
//! per-sample loss `logsumexp(q) − q_y` is averaged over the batch.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView2};

use crate::dataset::{EmbeddingDataset, GROUPS};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::specfn::log_vmf_normalizer;
use crate::vmf::{log_sum_exp, norm, normalize_rows, VmfMixture, UNIT_TOLERANCE};

/// Centroid parameter vectors shorter than this cannot be normalized.
pub const MIN_CENTROID_NORM: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairKappas {
    kappa0: f64,
    kappa1: f64,
}

impl FairKappas {
    pub fn new(kappa0: f64, kappa1: f64) -> Result<Self> {
        for k in [kappa0, kappa1] {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Domain(format!("concentration must be positive, got {k}")));
            }
        }
        Ok(Self { kappa0, kappa1 })
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }

    pub fn kappa1(&self) -> f64 {
        self.kappa1
    }

    pub fn for_group(&self, g: u8) -> f64 {
        if g == 0 {
            self.kappa0
        } else {
            self.kappa1
        }
    }
}

/// Identities known to the classifier head, their groups and the unnormalized
/// centroid parameters (one row per identity, in sorted id order).
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityTable {
    ids: Vec<u32>,
    groups: Vec<u8>,
    index: HashMap<u32, usize>,
    centroids: Array2<f64>,
}

impl IdentityTable {
    /// `identities` must be sorted by id without duplicates; `centroids` has one
    /// row per identity.
    pub fn new(identities: &[(u32, u8)], centroids: Array2<f64>) -> Result<Self> {
        if identities.is_empty() {
            return Err(Error::Config("identity table is empty".into()));
        }
        if centroids.nrows() != identities.len() {
            return Err(Error::DimensionMismatch { expected: identities.len(), got: centroids.nrows() });
        }
        if !identities.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(Error::Config("identity ids must be sorted and distinct".into()));
        }
        if let Some(&(id, g)) = identities.iter().find(|(_, g)| usize::from(*g) >= GROUPS) {
            return Err(Error::Config(format!("identity {id} has group {g}, expected 0 or 1")));
        }
        let ids: Vec<u32> = identities.iter().map(|p| p.0).collect();
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Ok(Self { ids, groups: identities.iter().map(|p| p.1).collect(), index, centroids })
    }

    /// Centroid parameters drawn from a seeded standard normal and scaled to
    /// unit norm.
    pub fn random(identities: &[(u32, u8)], d: usize, rng: &mut SeededRng) -> Result<Self> {
        let mut c = Array2::from_shape_simple_fn((identities.len(), d), || rng.standard_normal());
        for mut row in c.rows_mut() {
            let n = norm(row.as_slice().unwrap());
            row /= n;
        }
        Self::new(identities, c)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn groups(&self) -> &[u8] {
        &self.groups
    }

    pub fn centroids(&self) -> &Array2<f64> {
        &self.centroids
    }

    pub fn centroids_mut(&mut self) -> &mut Array2<f64> {
        &mut self.centroids
    }

    pub fn index_of(&self, id: u32) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownIdentity(id))
    }

    /// Rows scaled to unit norm, with the original norms.
    pub fn normalized_centroids(&self) -> Result<(Array2<f64>, Array1<f64>)> {
        let mut out = self.centroids.clone();
        let mut norms = Array1::zeros(self.len());
        for (k, mut row) in out.rows_mut().into_iter().enumerate() {
            let n = row.dot(&row).sqrt();
            if !(n > MIN_CENTROID_NORM) || !n.is_finite() {
                return Err(Error::ZeroNorm { norm: n });
            }
            row /= n;
            norms[k] = n;
        }
        Ok((out, norms))
    }
}

/// Unit-norm embeddings (rows) with their identity labels.
#[derive(Debug, Clone, Copy)]
pub struct LossBatch<'a> {
    pub embeddings: ArrayView2<'a, f64>,
    pub labels: &'a [u32],
}

impl<'a> LossBatch<'a> {
    pub fn new(embeddings: ArrayView2<'a, f64>, labels: &'a [u32]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Domain("empty batch".into()));
        }
        if embeddings.nrows() != labels.len() {
            return Err(Error::DimensionMismatch { expected: labels.len(), got: embeddings.nrows() });
        }
        for row in embeddings.rows() {
            let n = row.dot(&row).sqrt();
            if !((n - 1.0).abs() <= UNIT_TOLERANCE) {
                return Err(Error::Domain(format!("loss embedding has norm {n}, expected 1")));
            }
        }
        Ok(Self { embeddings, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    /// Gradient with respect to the (unit) embeddings as free variables.
    pub grad_embeddings: Array2<f64>,
    /// Gradient with respect to the unnormalized centroid parameters.
    pub grad_centroids: Array2<f64>,
    /// Logits found outside `[b_k − s_k, b_k + s_k]`.
    pub bound_violations: usize,
}

/// Per-identity scale and offset of the logits.
#[derive(Debug, Clone)]
struct LogitAffine {
    scale: Array1<f64>,
    offset: Array1<f64>,
}

impl LogitAffine {
    fn fair(table: &IdentityTable, kappas: FairKappas) -> Result<Self> {
        let d = table.dim();
        let b = [log_vmf_normalizer(d, kappas.kappa0)?, log_vmf_normalizer(d, kappas.kappa1)?];
        Ok(Self {
            scale: table.groups.iter().map(|&g| kappas.for_group(g)).collect(),
            offset: table.groups.iter().map(|&g| b[usize::from(g)]).collect(),
        })
    }

    fn standard(table: &IdentityTable, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Domain(format!("concentration must be positive, got {kappa}")));
        }
        Ok(Self { scale: Array1::from_elem(table.len(), kappa), offset: Array1::zeros(table.len()) })
    }

    fn violations(&self, q: &Array2<f64>) -> usize {
        let mut count = 0;
        for row in q.rows() {
            for ((&v, &s), &b) in row.iter().zip(&self.scale).zip(&self.offset) {
                let (lo, hi) = (b - s, b + s);
                let tol = 1e-12 * 1f64.max(lo.abs()).max(hi.abs());
                if !(v >= lo - tol && v <= hi + tol) {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Fair logits of one unit embedding against every identity of the table.
pub fn logits(z: &[f64], table: &IdentityTable, kappas: FairKappas) -> Result<Vec<f64>> {
    if z.len() != table.dim() {
        return Err(Error::DimensionMismatch { expected: table.dim(), got: z.len() });
    }
    let (mhat, _) = table.normalized_centroids()?;
    let aff = LogitAffine::fair(table, kappas)?;
    let cos = mhat.dot(&ndarray::aview1(z));
    Ok((&aff.offset + &(&aff.scale * &cos)).to_vec())
}

fn softmax_loss(batch: &LossBatch, table: &IdentityTable, aff: &LogitAffine) -> Result<LossOutput> {
    let d = table.dim();
    if batch.embeddings.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: batch.embeddings.ncols() });
    }
    let labels = batch
        .labels
        .iter()
        .map(|&id| table.index_of(id))
        .collect::<Result<Vec<_>>>()?;
    let (mhat, norms) = table.normalized_centroids()?;
    let n = batch.len();

    let mut q = batch.embeddings.dot(&mhat.t());
    q *= &aff.scale;
    q += &aff.offset;
    let bound_violations = aff.violations(&q);

    // q becomes (softmax − onehot) / n in place.
    let mut loss = 0.0;
    for (mut row, &y) in q.rows_mut().into_iter().zip(&labels) {
        let lse = log_sum_exp(row.as_slice().unwrap());
        loss += lse - row[y];
        row.mapv_inplace(|v| (v - lse).exp());
        row[y] -= 1.0;
        row /= n as f64;
    }
    loss /= n as f64;

    q *= &aff.scale;
    let grad_embeddings = q.dot(&mhat);
    let mut grad_centroids = q.t().dot(&batch.embeddings);
    for ((mut g, m), &w) in grad_centroids.rows_mut().into_iter().zip(mhat.rows()).zip(&norms) {
        let along = g.dot(&m);
        g.scaled_add(-along, &m);
        g /= w;
    }
    Ok(LossOutput { loss, grad_embeddings, grad_centroids, bound_violations })
}

/// Mean fair vMF loss over the batch, with gradients.
pub fn fair_vmf_loss(batch: &LossBatch, table: &IdentityTable, kappas: FairKappas) -> Result<LossOutput> {
    softmax_loss(batch, table, &LogitAffine::fair(table, kappas)?)
}

/// Mean classical softmax loss with logits `κ μ̂_kᵀ z`, with gradients.
pub fn standard_softmax_loss(batch: &LossBatch, table: &IdentityTable, kappa: f64) -> Result<LossOutput> {
    softmax_loss(batch, table, &LogitAffine::standard(table, kappa)?)
}

/// Mean negative log-likelihood of the dataset's identity labels under an
/// equiprobable vMF mixture whose component `k` models `identities[k]`.
/// Embeddings are widened to `f64` and scaled to unit norm first.
pub fn mixture_nll(dataset: &EmbeddingDataset, identities: &[u32], mixture: &VmfMixture) -> Result<f64> {
    if identities.len() != mixture.len() {
        return Err(Error::DimensionMismatch { expected: mixture.len(), got: identities.len() });
    }
    if dataset.is_empty() {
        return Err(Error::Domain("empty dataset".into()));
    }
    let index: HashMap<u32, usize> = identities.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let mut total = 0.0;
    for (i, r) in dataset.records().iter().enumerate() {
        let y = *index.get(&r.identity).ok_or(Error::UnknownIdentity(r.identity))?;
        let mut z = dataset.embedding_f64(i);
        let zn = norm(&z);
        z.iter_mut().for_each(|v| *v /= zn);
        let q = mixture.component_log_densities(&z)?;
        total += log_sum_exp(&q) - q[y];
    }
    Ok(total / dataset.len() as f64)
}

/// Embeddings of a dataset as unit rows in `f64`, with their labels.
pub fn dataset_matrix(dataset: &EmbeddingDataset) -> Result<(Array2<f64>, Vec<u32>)> {
    let d = dataset.dim();
    let mut m = Array2::zeros((dataset.len(), d));
    for (i, r) in dataset.records().iter().enumerate() {
        m.row_mut(i).iter_mut().zip(&r.embedding).for_each(|(o, &v)| *o = f64::from(v));
    }
    normalize_rows(m.as_slice_mut().unwrap(), d)?;
    Ok((m, dataset.records().iter().map(|r| r.identity).collect()))
}
