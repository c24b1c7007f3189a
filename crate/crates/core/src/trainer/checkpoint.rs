//! Binary model checkpoints (little-endian):
//!
//! ```text
//! "FVMF-CKPT"                         9 bytes
//! version                             u32 = 1
//! d_in, hidden, d_out, K              u32 × 4
//! W₁ (hidden×d_in), b₁, W₂ (d_out×hidden), b₂, centroids (K×d_out)
//!                                     f64, row-major, in that order
//! seed                                u64
//! epochs, batch_size                  u64 × 2
//! learning_rate, β₁, β₂, ε, κ₀, κ₁    f64 × 6
//! optimizer steps                     u64
//! K × [identity u32][group u8]
//! ```
//!
//! Adam moment buffers are not stored; a loaded state restarts them at zero.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Adam, AdamConfig, Mlp, ModelState, TrainConfig};
use crate::error::{Error, Result};
use crate::fairloss::{FairKappas, IdentityTable};

pub const MAGIC: &[u8; 9] = b"FVMF-CKPT";
pub const VERSION: u32 = 1;

fn put_f64s<'a>(out: &mut Vec<u8>, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn to_bytes(state: &ModelState) -> Vec<u8> {
    let cfg = state.mlp.config();
    let k = state.table.len();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [cfg.d_in, cfg.hidden, cfg.d_out, k] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    put_f64s(&mut out, state.mlp.w1.iter());
    put_f64s(&mut out, state.mlp.b1.iter());
    put_f64s(&mut out, state.mlp.w2.iter());
    put_f64s(&mut out, state.mlp.b2.iter());
    put_f64s(&mut out, state.table.centroids().iter());
    let c = &state.config;
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.extend_from_slice(&(c.epochs as u64).to_le_bytes());
    out.extend_from_slice(&(c.batch_size as u64).to_le_bytes());
    put_f64s(
        &mut out,
        &[
            c.adam.learning_rate,
            c.adam.beta1,
            c.adam.beta2,
            c.adam.epsilon,
            c.kappas.kappa0(),
            c.kappas.kappa1(),
        ],
    );
    out.extend_from_slice(&state.adam.steps().to_le_bytes());
    for (&id, &g) in state.table.ids().iter().zip(state.table.groups()) {
        out.extend_from_slice(&id.to_le_bytes());
        out.push(g);
    }
    out
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0
            .read_exact(&mut b)
            .map_err(|_| Error::Format("truncated checkpoint".into()))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if self.0.len() < n.saturating_mul(8) {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        Array2::from_shape_vec((rows, cols), self.f64s(rows * cols)?)
            .map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelState> {
    let mut r = Reader(bytes);
    if &r.bytes::<9>()? != MAGIC {
        return Err(Error::Format("missing FVMF-CKPT magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let [d_in, hidden, d_out, k] = [r.u32()?, r.u32()?, r.u32()?, r.u32()?].map(|v| v as usize);
    let mlp = Mlp {
        w1: r.matrix(hidden, d_in)?,
        b1: Array1::from(r.f64s(hidden)?),
        w2: r.matrix(d_out, hidden)?,
        b2: Array1::from(r.f64s(d_out)?),
    };
    let centroids = r.matrix(k, d_out)?;
    let seed = r.u64()?;
    let epochs = r.u64()? as usize;
    let batch_size = r.u64()? as usize;
    let [learning_rate, beta1, beta2, epsilon, kappa0, kappa1] =
        [r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?];
    let steps = r.u64()?;
    let mut identities = Vec::with_capacity(k);
    for _ in 0..k {
        let id = r.u32()?;
        let [g] = r.bytes::<1>()?;
        identities.push((id, g));
    }
    if !r.0.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes in checkpoint", r.0.len())));
    }
    let config = TrainConfig {
        epochs,
        batch_size,
        adam: AdamConfig { learning_rate, beta1, beta2, epsilon },
        seed,
        kappas: FairKappas::new(kappa0, kappa1)?,
    };
    let table = IdentityTable::new(&identities, centroids)?;
    let mut adam = Adam::new(config.adam, &ModelState::block_sizes(&mlp, &table))?;
    adam.set_steps(steps);
    Ok(ModelState { mlp, table, adam, config })
}

pub fn save(state: &ModelState, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&to_bytes(state))?;
    f.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelState> {
    from_bytes(&std::fs::read(path)?)
}
