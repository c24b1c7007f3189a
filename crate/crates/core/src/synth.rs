//! Seeded synthetic two-group embedding sets.
//!
//! Each identity gets a centroid on `S^{d−1}` and its images are vMF draws
//! around that centroid with the concentration of its group. With
//! `centroid_concentration = [0, 0]` centroids are uniform on the sphere; a
//! positive entry instead draws that group's centroids from
//! `vMF(e_g, τ_g)`, which packs its identities closer together.

use crate::dataset::{EmbeddingDataset, Record, GROUPS};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::vmf::{sample_uniform_sphere, UnitVector, VmfParams, VmfSampler};

const CENTROID_STREAM: u64 = 1;
const IMAGE_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub d: usize,
    pub identities_per_group: [usize; GROUPS],
    /// Inclusive range; each identity draws its image count uniformly.
    pub images_per_identity: (usize, usize),
    pub kappa_gen: [f64; GROUPS],
    pub centroid_concentration: [f64; GROUPS],
    pub centroid_seed: u64,
    pub sample_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            d: 32,
            identities_per_group: [200, 200],
            images_per_identity: (30, 30),
            kappa_gen: [40.0, 15.0],
            centroid_concentration: [0.0, 0.0],
            centroid_seed: 1,
            sample_seed: 2,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Config(format!("synthetic dimension must be >= 2, got {}", self.d)));
        }
        if self.identities_per_group.iter().any(|&n| n == 0) {
            return Err(Error::Config("identities per group must be positive".into()));
        }
        let (lo, hi) = self.images_per_identity;
        if lo == 0 || hi < lo {
            return Err(Error::Config(format!("bad images-per-identity range {lo}..={hi}")));
        }
        if !self.kappa_gen.iter().all(|k| k.is_finite() && *k > 0.0) {
            return Err(Error::Config("generation concentrations must be positive".into()));
        }
        if !self.centroid_concentration.iter().all(|k| k.is_finite() && *k >= 0.0) {
            return Err(Error::Config("centroid concentrations must be >= 0".into()));
        }
        Ok(())
    }

    /// Group of each identity id: group 0 takes ids `0..n0`, group 1 the next `n1`.
    pub fn identity_groups(&self) -> Vec<u8> {
        (0..GROUPS)
            .flat_map(|g| std::iter::repeat(g as u8).take(self.identities_per_group[g]))
            .collect()
    }

    /// Centroids, indexed by identity id. Depends on `centroid_seed` only.
    pub fn centroids(&self) -> Result<Vec<UnitVector>> {
        self.validate()?;
        let mut rng = SeededRng::with_stream(self.centroid_seed, CENTROID_STREAM);
        let mut out = Vec::new();
        for g in 0..GROUPS {
            let tau = self.centroid_concentration[g];
            let n = self.identities_per_group[g];
            if tau > 0.0 {
                let params = VmfParams::new(UnitVector::basis(self.d, g), tau)?;
                let sampler = VmfSampler::new(&params);
                out.extend((0..n).map(|_| sampler.sample(&mut rng)));
            } else {
                out.extend((0..n).map(|_| sample_uniform_sphere(self.d, &mut rng)));
            }
        }
        Ok(out)
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<EmbeddingDataset> {
    let centroids = spec.centroids()?;
    let groups = spec.identity_groups();
    let mut rng = SeededRng::with_stream(spec.sample_seed, IMAGE_STREAM);
    let (lo, hi) = spec.images_per_identity;
    let mut records = Vec::new();
    for (id, (mu, &g)) in centroids.into_iter().zip(&groups).enumerate() {
        let count = lo + rng.below((hi - lo + 1) as u64) as usize;
        let params = VmfParams::new(mu, spec.kappa_gen[usize::from(g)])?;
        let sampler = VmfSampler::new(&params);
        for _ in 0..count {
            let z = sampler.sample(&mut rng);
            records.push(Record {
                identity: id as u32,
                group: g,
                embedding: z.as_slice().iter().map(|&x| x as f32).collect(),
            });
        }
    }
    EmbeddingDataset::new(spec.d, records)
}
