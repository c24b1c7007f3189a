//! Verification scores and error-rate metrics, per group and pooled.
//!
//! A pair is accepted when its cosine score is `>= t`. `FAR(t)` is the share
//! of impostor pairs accepted and `FRR(t)` the share of genuine pairs
//! rejected. Thresholds are always one of the observed impostor scores or
//! [`SENTINEL`], and the selected threshold is the smallest candidate that
//! keeps the relevant false acceptance rate at or below `α`.

use std::fmt::Write as _;

use ndarray::ArrayView2;

use crate::dataset::{EmbeddingDataset, GROUPS};
use crate::error::{Error, PairCategory, Result};
use crate::rng::SeededRng;
use crate::trainer::{embed_dataset, Embedder};
use crate::vmf::dot;

/// Threshold above every attainable score: `1 + ε`.
pub const SENTINEL: f64 = 1.0 + f64::EPSILON;

pub const REPORT_HEADER: &str = "alpha,threshold,frr_at_far,bfrr,bfar,far0,far1,frr0,frr1,far_ratio,frr_ratio,flags";
pub const CURVE_HEADER: &str = "t,group,far,frr";

/// Cosine score of two unit vectors, clamped to `[−1, 1]`.
pub fn cosine_score(z1: &[f64], z2: &[f64]) -> Result<f64> {
    if z1.len() != z2.len() {
        return Err(Error::DimensionMismatch { expected: z1.len(), got: z2.len() });
    }
    Ok(dot(z1, z2).clamp(-1.0, 1.0))
}

/// Fraction of `impostors` with score `>= t`.
pub fn far(impostors: &[f64], t: f64) -> Result<f64> {
    if impostors.is_empty() {
        return Err(Error::Domain("FAR of an empty score list".into()));
    }
    Ok(impostors.iter().filter(|&&s| s >= t).count() as f64 / impostors.len() as f64)
}

/// Fraction of `genuines` with score `< t`.
pub fn frr(genuines: &[f64], t: f64) -> Result<f64> {
    if genuines.is_empty() {
        return Err(Error::Domain("FRR of an empty score list".into()));
    }
    Ok(genuines.iter().filter(|&&s| s < t).count() as f64 / genuines.len() as f64)
}

fn sorted_far(sorted: &[f64], t: f64) -> f64 {
    (sorted.len() - sorted.partition_point(|&s| s < t)) as f64 / sorted.len() as f64
}

fn sorted_frr(sorted: &[f64], t: f64) -> f64 {
    sorted.partition_point(|&s| s < t) as f64 / sorted.len() as f64
}

/// Genuine and impostor scores of every group, each list sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScores {
    genuine: Vec<Vec<f64>>,
    impostor: Vec<Vec<f64>>,
    pooled_genuine: Vec<f64>,
    pooled_impostor: Vec<f64>,
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

impl PairScores {
    /// `genuine[a]` and `impostor[a]` hold the scores of group `a`.
    pub fn new(genuine: Vec<Vec<f64>>, impostor: Vec<Vec<f64>>) -> Result<Self> {
        if genuine.len() != impostor.len() || genuine.is_empty() {
            return Err(Error::Domain("genuine and impostor lists must cover the same groups".into()));
        }
        for (cat, lists) in [(PairCategory::Genuine, &genuine), (PairCategory::Impostor, &impostor)] {
            for (g, list) in lists.iter().enumerate() {
                if list.is_empty() {
                    return Err(Error::EmptyCategory { group: g as u8, category: cat });
                }
                if let Some(s) = list.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
                    return Err(Error::Domain(format!("score {s} outside [-1, 1]")));
                }
            }
        }
        let genuine: Vec<Vec<f64>> = genuine.into_iter().map(sorted).collect();
        let impostor: Vec<Vec<f64>> = impostor.into_iter().map(sorted).collect();
        Ok(Self {
            pooled_genuine: sorted(genuine.concat()),
            pooled_impostor: sorted(impostor.concat()),
            genuine,
            impostor,
        })
    }

    pub fn groups(&self) -> usize {
        self.genuine.len()
    }

    pub fn genuine(&self, group: usize) -> &[f64] {
        &self.genuine[group]
    }

    pub fn impostor(&self, group: usize) -> &[f64] {
        &self.impostor[group]
    }

    pub fn pooled_genuine(&self) -> &[f64] {
        &self.pooled_genuine
    }

    pub fn pooled_impostor(&self) -> &[f64] {
        &self.pooled_impostor
    }

    /// Group labels reversed.
    pub fn relabeled(&self) -> Self {
        let mut g = self.genuine.clone();
        let mut i = self.impostor.clone();
        g.reverse();
        i.reverse();
        Self::new(g, i).expect("relabeling keeps scores valid")
    }

    /// Scores with `f` applied to every value (clamped back to `[−1, 1]`).
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let apply = |v: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            v.iter().map(|l| l.iter().map(|&s| f(s).clamp(-1.0, 1.0)).collect()).collect()
        };
        Self::new(apply(&self.genuine), apply(&self.impostor))
    }

    pub fn group_far(&self, group: usize, t: f64) -> f64 {
        sorted_far(&self.impostor[group], t)
    }

    pub fn group_frr(&self, group: usize, t: f64) -> f64 {
        sorted_frr(&self.genuine[group], t)
    }

    pub fn pooled_far(&self, t: f64) -> f64 {
        sorted_far(&self.pooled_impostor, t)
    }

    pub fn pooled_frr(&self, t: f64) -> f64 {
        sorted_frr(&self.pooled_genuine, t)
    }

    fn max_group_far(&self, t: f64) -> f64 {
        (0..self.groups()).map(|g| self.group_far(g, t)).fold(0.0, f64::max)
    }

    fn require_two_groups(&self) -> Result<()> {
        if self.groups() != GROUPS {
            return Err(Error::Domain(format!("expected {GROUPS} groups, got {}", self.groups())));
        }
        Ok(())
    }
}

/// Smallest value of `sorted_candidates` (or [`SENTINEL`]) satisfying the
/// monotone predicate `ok`.
fn smallest_candidate(sorted_candidates: &[f64], ok: impl Fn(f64) -> bool) -> f64 {
    let i = sorted_candidates.partition_point(|&t| !ok(t));
    sorted_candidates.get(i).copied().unwrap_or(SENTINEL)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalThreshold {
    pub threshold: f64,
    pub far: f64,
}

pub fn threshold_at_global_far(scores: &PairScores, alpha: f64) -> Result<GlobalThreshold> {
    check_alpha(alpha)?;
    let threshold = smallest_candidate(&scores.pooled_impostor, |t| scores.pooled_far(t) <= alpha);
    Ok(GlobalThreshold { threshold, far: scores.pooled_far(threshold) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupThreshold {
    pub threshold: f64,
    pub far_by_group: Vec<f64>,
}

pub fn threshold_at_max_group_far(scores: &PairScores, alpha: f64) -> Result<GroupThreshold> {
    check_alpha(alpha)?;
    let threshold = smallest_candidate(&scores.pooled_impostor, |t| scores.max_group_far(t) <= alpha);
    Ok(GroupThreshold {
        threshold,
        far_by_group: (0..scores.groups()).map(|g| scores.group_far(g, threshold)).collect(),
    })
}

/// Pooled FRR at the global-FAR threshold.
pub fn frr_at_far(scores: &PairScores, alpha: f64) -> Result<f64> {
    let t = threshold_at_global_far(scores, alpha)?.threshold;
    Ok(scores.pooled_frr(t))
}

/// `|FRR₁(t) − FRR₀(t)|` at the global-FAR threshold.
pub fn eq2_gap(scores: &PairScores, alpha: f64) -> Result<f64> {
    scores.require_two_groups()?;
    let t = threshold_at_global_far(scores, alpha)?.threshold;
    Ok((scores.group_frr(1, t) - scores.group_frr(0, t)).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioKind {
    Finite,
    /// Positive numerator over a zero denominator.
    Infinite,
    /// Zero over zero, reported as 1.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio {
    pub value: f64,
    pub kind: RatioKind,
}

impl Ratio {
    pub fn of(num: f64, den: f64) -> Self {
        match (num == 0.0, den == 0.0) {
            (true, true) => Ratio { value: 1.0, kind: RatioKind::Degenerate },
            (false, true) => Ratio { value: f64::INFINITY, kind: RatioKind::Infinite },
            _ => Ratio { value: num / den, kind: RatioKind::Finite },
        }
    }

    fn max_over_min(values: &[f64]) -> Self {
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        Self::of(max, min)
    }

    fn flag(&self, name: &str) -> Option<String> {
        match self.kind {
            RatioKind::Finite => None,
            RatioKind::Infinite => Some(format!("{name}_inf")),
            RatioKind::Degenerate => Some(format!("{name}_degenerate")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub alpha: f64,
    /// Threshold where the largest group FAR first drops to `α` or below.
    pub threshold: f64,
    /// Pooled FRR at the global-FAR threshold.
    pub frr_at_far: f64,
    pub bfrr: Ratio,
    pub bfar: Ratio,
    pub far: [f64; GROUPS],
    pub frr: [f64; GROUPS],
    /// `FAR₁ / FAR₀`.
    pub far_ratio: Ratio,
    /// `FRR₁ / FRR₀`.
    pub frr_ratio: Ratio,
}

pub fn fairness_report(scores: &PairScores, alpha: f64) -> Result<FairnessReport> {
    scores.require_two_groups()?;
    let t = threshold_at_max_group_far(scores, alpha)?.threshold;
    let far = [scores.group_far(0, t), scores.group_far(1, t)];
    let frr = [scores.group_frr(0, t), scores.group_frr(1, t)];
    Ok(FairnessReport {
        alpha,
        threshold: t,
        frr_at_far: frr_at_far(scores, alpha)?,
        bfrr: Ratio::max_over_min(&frr),
        bfar: Ratio::max_over_min(&far),
        far,
        frr,
        far_ratio: Ratio::of(far[1], far[0]),
        frr_ratio: Ratio::of(frr[1], frr[0]),
    })
}

/// `inf`, `-inf` and `nan` for non-finite values, shortest round-trip
/// decimal otherwise.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x}")
    }
}

impl FairnessReport {
    /// `|`-separated tokens for every non-finite or degenerate ratio.
    pub fn flags(&self) -> String {
        [
            self.bfrr.flag("bfrr"),
            self.bfar.flag("bfar"),
            self.far_ratio.flag("far_ratio"),
            self.frr_ratio.flag("frr_ratio"),
        ]
        .into_iter()
        .flatten()
        .collect::<Vec<_>>()
        .join("|")
    }

    /// One row under [`REPORT_HEADER`], without a line terminator.
    pub fn csv_row(&self) -> String {
        let nums = [
            self.alpha,
            self.threshold,
            self.frr_at_far,
            self.bfrr.value,
            self.bfar.value,
            self.far[0],
            self.far[1],
            self.frr[0],
            self.frr[1],
            self.far_ratio.value,
            self.frr_ratio.value,
        ];
        let mut s = nums.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(",");
        s.push(',');
        s.push_str(&self.flags());
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub t: f64,
    pub group: usize,
    pub far: f64,
    pub frr: f64,
}

/// Per-group FAR/FRR over `grid`, or over every distinct observed score when
/// `grid` is `None`. Rows are grouped by group, then ascending `t`.
pub fn metric_curves(scores: &PairScores, grid: Option<&[f64]>) -> Result<Vec<CurvePoint>> {
    let mut ts: Vec<f64> = match grid {
        Some(g) => g.to_vec(),
        None => scores.pooled_genuine.iter().chain(&scores.pooled_impostor).copied().collect(),
    };
    if ts.is_empty() {
        return Err(Error::Domain("empty threshold grid".into()));
    }
    if ts.iter().any(|t| t.is_nan()) {
        return Err(Error::Domain("NaN in threshold grid".into()));
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    Ok((0..scores.groups())
        .flat_map(|g| {
            ts.iter().map(move |&t| CurvePoint { t, group: g, far: scores.group_far(g, t), frr: scores.group_frr(g, t) })
        })
        .collect())
}

pub fn curves_csv(points: &[CurvePoint]) -> String {
    let mut s = format!("{CURVE_HEADER}\n");
    for p in points {
        let _ = writeln!(s, "{},{},{},{}", fmt_num(p.t), p.group, fmt_num(p.far), fmt_num(p.frr));
    }
    s
}

/// Which pairs enter the score lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairPolicy {
    /// Keep at most this many genuine pairs per group (seeded uniform subset).
    pub max_genuine_per_group: Option<usize>,
    /// Keep at most this many impostor pairs per group.
    pub max_impostor_per_group: Option<usize>,
    pub seed: u64,
}

/// Positions (in enumeration order) of the pairs to keep.
fn keep_set(total: u64, cap: Option<usize>, rng: &mut SeededRng) -> Option<Vec<u64>> {
    match cap {
        Some(c) if (c as u64) < total => Some(rng.sample_indices(total, c as u64)),
        _ => None,
    }
}

struct Selector {
    keep: Option<Vec<u64>>,
    next: usize,
    seen: u64,
}

impl Selector {
    fn take(&mut self) -> bool {
        let pos = self.seen;
        self.seen += 1;
        match &self.keep {
            None => true,
            Some(k) => {
                if k.get(self.next) == Some(&pos) {
                    self.next += 1;
                    true
                } else {
                    false
                }
            }
        }
    }
}

/// Scores of all same-group pairs `i < j` (records in file order): genuine if
/// the identities agree, impostor otherwise. `embeddings` holds one unit row
/// per record.
pub fn pair_scores_from_embeddings(
    embeddings: ArrayView2<f64>,
    dataset: &EmbeddingDataset,
    policy: PairPolicy,
) -> Result<PairScores> {
    if embeddings.nrows() != dataset.len() {
        return Err(Error::DimensionMismatch { expected: dataset.len(), got: embeddings.nrows() });
    }
    let emb = embeddings.as_standard_layout();
    let d = emb.ncols();
    let rows = emb.as_slice().unwrap();
    let row = |i: usize| &rows[i * d..(i + 1) * d];
    let mut rng = SeededRng::with_stream(policy.seed, 3);
    let mut genuine = Vec::with_capacity(GROUPS);
    let mut impostor = Vec::with_capacity(GROUPS);
    for g in 0..GROUPS as u8 {
        let members: Vec<(usize, u32)> = dataset
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.group == g)
            .map(|(i, r)| (i, r.identity))
            .collect();
        let n = members.len() as u64;
        let mut per_id: std::collections::HashMap<u32, u64> = std::collections::HashMap::new();
        for &(_, id) in &members {
            *per_id.entry(id).or_default() += 1;
        }
        let total = n * n.saturating_sub(1) / 2;
        let n_gen: u64 = per_id.values().map(|&c| c * (c - 1) / 2).sum();
        let mut gsel = Selector { keep: keep_set(n_gen, policy.max_genuine_per_group, &mut rng), next: 0, seen: 0 };
        let mut isel =
            Selector { keep: keep_set(total - n_gen, policy.max_impostor_per_group, &mut rng), next: 0, seen: 0 };
        let (mut gs, mut is) = (Vec::new(), Vec::new());
        for (a, &(i, id_i)) in members.iter().enumerate() {
            for &(j, id_j) in &members[a + 1..] {
                if id_i == id_j {
                    if gsel.take() {
                        gs.push(cosine_score(row(i), row(j))?);
                    }
                } else if isel.take() {
                    is.push(cosine_score(row(i), row(j))?);
                }
            }
        }
        if gs.is_empty() {
            return Err(Error::EmptyCategory { group: g, category: PairCategory::Genuine });
        }
        if is.is_empty() {
            return Err(Error::EmptyCategory { group: g, category: PairCategory::Impostor });
        }
        genuine.push(gs);
        impostor.push(is);
    }
    PairScores::new(genuine, impostor)
}

pub fn build_pair_scores(dataset: &EmbeddingDataset, embedder: &Embedder, policy: PairPolicy) -> Result<PairScores> {
    let emb = embed_dataset(dataset, embedder)?;
    pair_scores_from_embeddings(emb.view(), dataset, policy)
}

/// Impostor pairs needed for an `α`-level FAR estimate to rest on about 100
/// accepted impostors.
pub fn impostors_needed(alpha: f64) -> f64 {
    100.0 / alpha
}
