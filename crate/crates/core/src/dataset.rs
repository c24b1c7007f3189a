//! Embedding datasets: the `FVMF` binary file, CSV ingestion and per-identity
//! gender consolidation.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! "FVMF"            4 bytes
//! version  u32      = 1
//! d        u32
//! N        u64
//! N × [identity u32][group u8][3 zero bytes][d × f32]
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::vmf::{spread_stats, SpreadStats};

pub const MAGIC: &[u8; 4] = b"FVMF";
pub const FORMAT_VERSION: u32 = 1;

/// Load-time renormalization kicks in beyond this deviation from unit norm.
pub const LOAD_UNIT_TOLERANCE: f64 = 1e-6;

/// Number of sensitive-attribute groups handled (0 and 1).
pub const GROUPS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub identity: u32,
    pub group: u8,
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    d: usize,
    records: Vec<Record>,
}

fn renormalize(e: &mut [f32]) -> Result<()> {
    let n = e.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if !(n > 1e-12) || !n.is_finite() {
        return Err(Error::ZeroNorm { norm: n });
    }
    if (n - 1.0).abs() > LOAD_UNIT_TOLERANCE {
        e.iter_mut().for_each(|x| *x = (f64::from(*x) / n) as f32);
    }
    Ok(())
}

impl EmbeddingDataset {
    /// Validates shapes and group labels, and renormalizes embeddings that are
    /// off the sphere by more than [`LOAD_UNIT_TOLERANCE`].
    pub fn new(d: usize, mut records: Vec<Record>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Format("dimension must be >= 1".into()));
        }
        let mut group_of: BTreeMap<u32, u8> = BTreeMap::new();
        for r in &mut records {
            if r.embedding.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: r.embedding.len() });
            }
            if usize::from(r.group) >= GROUPS {
                return Err(Error::Format(format!("group label {} is not 0 or 1", r.group)));
            }
            if let Some(&g) = group_of.get(&r.identity) {
                if g != r.group {
                    return Err(Error::Format(format!(
                        "identity {} carries both group labels",
                        r.identity
                    )));
                }
            } else {
                group_of.insert(r.identity, r.group);
            }
            renormalize(&mut r.embedding)?;
        }
        Ok(Self { d, records })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    /// Embedding `i` widened to `f64`.
    pub fn embedding_f64(&self, i: usize) -> Vec<f64> {
        self.records[i].embedding.iter().map(|&x| f64::from(x)).collect()
    }

    /// Sorted distinct identities with their group.
    pub fn identities(&self) -> Vec<(u32, u8)> {
        let map: BTreeMap<u32, u8> = self.records.iter().map(|r| (r.identity, r.group)).collect();
        map.into_iter().collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.records.len() * (8 + 4 * self.d));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&r.identity.to_le_bytes());
            out.push(r.group);
            out.extend_from_slice(&[0u8; 3]);
            for x in &r.embedding {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut cur, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("missing FVMF magic".into()));
        }
        let version = read_u32(&mut cur)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported embedding file version {version}")));
        }
        let d = read_u32(&mut cur)? as usize;
        let n = read_u64(&mut cur)?;
        let record_len = 8 + 4 * d as u64;
        if (cur.len() as u64) != n.saturating_mul(record_len) {
            return Err(Error::Format(format!(
                "expected {n} records of {record_len} bytes, found {} bytes",
                cur.len()
            )));
        }
        let mut records = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let identity = read_u32(&mut cur)?;
            let mut gp = [0u8; 4];
            read_exact(&mut cur, &mut gp)?;
            let mut embedding = Vec::with_capacity(d);
            for _ in 0..d {
                let mut b = [0u8; 4];
                read_exact(&mut cur, &mut b)?;
                embedding.push(f32::from_le_bytes(b));
            }
            records.push(Record { identity, group: gp[0], embedding });
        }
        Self::new(d, records)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Spread statistics of every identity with at least `min_images` images.
    pub fn identity_spreads(&self, min_images: usize) -> Result<Vec<(u32, u8, SpreadStats)>> {
        let mut by_id: BTreeMap<u32, (u8, Vec<Vec<f64>>)> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            by_id
                .entry(r.identity)
                .or_insert_with(|| (r.group, Vec::new()))
                .1
                .push(self.embedding_f64(i));
        }
        by_id
            .into_iter()
            .filter(|(_, (_, v))| v.len() >= min_images.max(1))
            .map(|(id, (g, v))| Ok((id, g, spread_stats(&v)?)))
            .collect()
    }
}

fn read_exact(cur: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    cur.read_exact(buf)
        .map_err(|_| Error::Format("truncated embedding file".into()))
}

fn read_u32(cur: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(cur, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(cur: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(cur, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Result of the per-identity majority vote.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Consolidation {
    pub groups: BTreeMap<u32, u8>,
    pub discarded: Vec<u32>,
}

/// Keeps an identity with its majority label iff that label holds at least
/// `threshold` of its images' votes (boundary inclusive); otherwise the
/// identity is discarded. Ties between labels resolve to the smaller label.
pub fn consolidate_gender(votes: &BTreeMap<u32, Vec<u8>>, threshold: f64) -> Result<Consolidation> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("vote threshold must lie in [0, 1], got {threshold}")));
    }
    let mut out = Consolidation::default();
    for (&id, v) in votes {
        if v.is_empty() {
            return Err(Error::Format(format!("identity {id} has no votes")));
        }
        let mut counts = [0usize; GROUPS];
        for &g in v {
            *counts
                .get_mut(usize::from(g))
                .ok_or_else(|| Error::Format(format!("vote {g} is not 0 or 1")))? += 1;
        }
        let (label, &count) = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .unwrap();
        if count as f64 / v.len() as f64 >= threshold {
            out.groups.insert(id, label as u8);
        } else {
            out.discarded.push(id);
        }
    }
    Ok(out)
}

/// Drops every image of identities discarded by the vote and relabels the
/// rest. `votes` holds one raw label per record.
pub fn apply_consolidation(
    d: usize,
    raw: Vec<(u32, u8, Vec<f32>)>,
    threshold: f64,
) -> Result<(EmbeddingDataset, Consolidation)> {
    let mut votes: BTreeMap<u32, Vec<u8>> = BTreeMap::new();
    for (id, vote, _) in &raw {
        votes.entry(*id).or_default().push(*vote);
    }
    let cons = consolidate_gender(&votes, threshold)?;
    let records = raw
        .into_iter()
        .filter_map(|(identity, _, embedding)| {
            cons.groups.get(&identity).map(|&group| Record { identity, group, embedding })
        })
        .collect();
    Ok((EmbeddingDataset::new(d, records)?, cons))
}

/// Parses `identity,vote,e0,...,e{d-1}` rows (an optional header line whose
/// first field is not numeric is skipped).
pub fn read_vote_csv<R: BufRead>(reader: R) -> Result<(usize, Vec<(u32, u8, Vec<f32>)>)> {
    let mut rows = Vec::new();
    let mut d = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Ok(identity) = fields[0].parse::<u32>() else {
            if lineno == 0 {
                continue;
            }
            return Err(Error::Format(format!("line {}: bad identity {:?}", lineno + 1, fields[0])));
        };
        if fields.len() < 3 {
            return Err(Error::Format(format!("line {}: too few fields", lineno + 1)));
        }
        let vote: u8 = fields[1]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad vote {:?}", lineno + 1, fields[1])))?;
        let embedding = fields[2..]
            .iter()
            .map(|s| s.parse::<f32>())
            .collect::<std::result::Result<Vec<f32>, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        match d {
            None => d = Some(embedding.len()),
            Some(d) if d != embedding.len() => {
                return Err(Error::DimensionMismatch { expected: d, got: embedding.len() })
            }
            _ => {}
        }
        rows.push((identity, vote, embedding));
    }
    let d = d.ok_or_else(|| Error::Format("no embedding rows".into()))?;
    Ok((d, rows))
}

/// Reads either an `FVMF` binary file or a vote CSV, applying the majority
/// vote with `threshold`.
pub fn ingest(path: &Path, threshold: f64) -> Result<(EmbeddingDataset, Consolidation)> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        let ds = EmbeddingDataset::from_bytes(&bytes)?;
        let d = ds.dim();
        let raw = ds.records.into_iter().map(|r| (r.identity, r.group, r.embedding)).collect();
        apply_consolidation(d, raw, threshold)
    } else {
        let (d, raw) = read_vote_csv(std::io::BufReader::new(&bytes[..]))?;
        apply_consolidation(d, raw, threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn votes(v: &[u8]) -> BTreeMap<u32, Vec<u8>> {
        BTreeMap::from([(7, v.to_vec())])
    }

    #[test]
    fn majority_vote_boundary_is_inclusive() {
        let c = consolidate_gender(&votes(&[1, 1, 1, 0]), 0.75).unwrap();
        assert_eq!(c.groups.get(&7), Some(&1));
        assert!(c.discarded.is_empty());
    }

    #[test]
    fn split_vote_is_discarded() {
        let c = consolidate_gender(&votes(&[1, 0]), 0.75).unwrap();
        assert!(c.groups.is_empty());
        assert_eq!(c.discarded, vec![7]);
    }

    #[test]
    fn unanimous_vote_kept() {
        let c = consolidate_gender(&votes(&[0, 0, 0]), 0.75).unwrap();
        assert_eq!(c.groups.get(&7), Some(&0));
    }

    #[test]
    fn vote_errors() {
        assert!(consolidate_gender(&votes(&[]), 0.75).is_err());
        assert!(consolidate_gender(&votes(&[2]), 0.75).is_err());
        assert!(consolidate_gender(&votes(&[0]), 1.5).is_err());
    }

    fn tiny() -> EmbeddingDataset {
        EmbeddingDataset::new(
            2,
            vec![
                Record { identity: 3, group: 1, embedding: vec![1.0, 0.0] },
                Record { identity: 3, group: 1, embedding: vec![0.6, 0.8] },
                Record { identity: 9, group: 0, embedding: vec![0.0, 2.0] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn load_renormalizes_off_sphere_rows_only() {
        let ds = tiny();
        assert_eq!(ds.records()[2].embedding, vec![0.0, 1.0]);
        assert_eq!(ds.records()[1].embedding, vec![0.6, 0.8]);
        assert_eq!(ds.identities(), vec![(3, 1), (9, 0)]);
    }

    #[test]
    fn binary_layout() {
        let bytes = tiny().to_bytes();
        assert_eq!(&bytes[..4], b"FVMF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 3);
        assert_eq!(&bytes[24..28], &[1, 0, 0, 0]);
        assert_eq!(f32::from_le_bytes(bytes[28..32].try_into().unwrap()), 1.0);
        assert_eq!(bytes.len(), 20 + 3 * (8 + 8));
        assert_eq!(EmbeddingDataset::from_bytes(&bytes).unwrap(), tiny());
    }

    #[test]
    fn malformed_binary() {
        let bytes = tiny().to_bytes();
        assert!(EmbeddingDataset::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(EmbeddingDataset::from_bytes(&bad).is_err());
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(EmbeddingDataset::from_bytes(&v2).is_err());
    }

    #[test]
    fn inconsistent_groups_rejected() {
        let r = EmbeddingDataset::new(
            1,
            vec![
                Record { identity: 1, group: 0, embedding: vec![1.0] },
                Record { identity: 1, group: 1, embedding: vec![1.0] },
            ],
        );
        assert!(r.is_err());
    }

    #[test]
    fn csv_ingest_applies_vote() {
        let csv = "identity,vote,e0,e1\n1,1,1,0\n1,1,0,1\n1,1,1,1\n1,0,1,0\n2,0,1,0\n2,1,0,1\n";
        let (d, raw) = read_vote_csv(csv.as_bytes()).unwrap();
        assert_eq!(d, 2);
        let (ds, cons) = apply_consolidation(d, raw, 0.75).unwrap();
        assert_eq!(cons.discarded, vec![2]);
        assert_eq!(ds.len(), 4);
        assert!(ds.records().iter().all(|r| r.identity == 1 && r.group == 1));
        // the (1, 1) row was renormalized on load
        let e = &ds.records()[2].embedding;
        assert!((e[0] - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-7);
    }

    #[test]
    fn spreads_respect_min_images() {
        let s = tiny().identity_spreads(2).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].0, 3);
        assert_eq!(tiny().identity_spreads(1).unwrap().len(), 2);
    }
}
