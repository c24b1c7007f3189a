//! Grid search over the two group concentrations, emitting one trend CSV row
//! per `(κ₀, κ₁, α)`.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::dataset::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::fairloss::FairKappas;
use crate::metrics::{build_pair_scores, fairness_report, fmt_num, FairnessReport, PairPolicy, REPORT_HEADER};
use crate::trainer::{train, Embedder, MlpConfig, TrainConfig};

pub const THREADS_ENV: &str = "FVMF_THREADS";

pub fn trend_header() -> String {
    format!("kappa0,kappa1,{REPORT_HEADER}")
}

/// Fairness reports of `dataset` embedded by `embedder`, one per `α`.
pub fn evaluate(
    dataset: &EmbeddingDataset,
    embedder: &Embedder,
    policy: PairPolicy,
    alphas: &[f64],
) -> Result<Vec<FairnessReport>> {
    let scores = build_pair_scores(dataset, embedder, policy)?;
    alphas.iter().map(|&a| fairness_report(&scores, a)).collect()
}

/// One trend row. `columns` holds everything after `kappa0,kappa1,`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendRow {
    pub kappa0: f64,
    pub kappa1: f64,
    pub alpha: f64,
    pub columns: String,
}

impl TrendRow {
    pub fn from_report(kappa0: f64, kappa1: f64, report: &FairnessReport) -> Self {
        Self { kappa0, kappa1, alpha: report.alpha, columns: report.csv_row() }
    }

    /// Row for a cell whose training or evaluation failed: every number is
    /// `nan` and the flag names the error category.
    pub fn failed(kappa0: f64, kappa1: f64, alpha: f64, err: &Error) -> Self {
        let nans = vec!["nan"; REPORT_HEADER.split(',').count() - 2].join(",");
        Self { kappa0, kappa1, alpha, columns: format!("{},{nans},failed_{}", fmt_num(alpha), err.category()) }
    }

    pub fn line(&self) -> String {
        format!("{},{},{}", fmt_num(self.kappa0), fmt_num(self.kappa1), self.columns)
    }

    fn key_cmp(&self, o: &Self) -> Ordering {
        self.kappa0
            .total_cmp(&o.kappa0)
            .then(self.kappa1.total_cmp(&o.kappa1))
            .then(self.alpha.total_cmp(&o.alpha))
    }

    fn same_key(&self, o: &Self) -> bool {
        self.key_cmp(o) == Ordering::Equal
    }
}

pub fn trend_csv(rows: &[TrendRow]) -> String {
    let mut s = trend_header();
    s.push('\n');
    for r in rows {
        s.push_str(&r.line());
        s.push('\n');
    }
    s
}

/// Rows of a (possibly partial) trend CSV written by [`trend_csv`].
pub fn parse_trend_csv(text: &str) -> Result<Vec<TrendRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == trend_header() => {}
        None => return Ok(Vec::new()),
        Some(h) => return Err(Error::Format(format!("unexpected trend header {h:?}"))),
    }
    let width = trend_header().split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            // A torn last line from an interrupted run is dropped.
            continue;
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("trend line {}: bad number {s:?}", i + 2)))
        };
        rows.push(TrendRow {
            kappa0: num(fields[0])?,
            kappa1: num(fields[1])?,
            alpha: num(fields[2])?,
            columns: fields[2..].join(","),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub kappa0: Vec<f64>,
    pub kappa1: Vec<f64>,
    pub alphas: Vec<f64>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kappa0.is_empty() || self.kappa1.is_empty() || self.alphas.is_empty() {
            return Err(Error::Config("grid lists must be nonempty".into()));
        }
        FairKappas::new(
            self.kappa0.iter().copied().fold(f64::INFINITY, f64::min),
            self.kappa1.iter().copied().fold(f64::INFINITY, f64::min),
        )?;
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {a}")));
        }
        Ok(())
    }

    fn cells(&self) -> Vec<(f64, f64)> {
        self.kappa0.iter().flat_map(|&a| self.kappa1.iter().map(move |&b| (a, b))).collect()
    }
}

/// Training and evaluation inputs shared by every grid cell.
#[derive(Debug, Clone, Copy)]
pub struct GridInputs<'a> {
    pub train: &'a EmbeddingDataset,
    pub eval: &'a EmbeddingDataset,
    pub mlp: MlpConfig,
    /// Every cell trains with this config, only the concentrations replaced.
    pub template: TrainConfig,
    pub policy: PairPolicy,
}

/// Trains and evaluates one cell; failures become flagged rows.
pub fn run_cell(inputs: &GridInputs, kappa0: f64, kappa1: f64, alphas: &[f64]) -> Vec<TrendRow> {
    let result = FairKappas::new(kappa0, kappa1).and_then(|kappas| {
        let cfg = TrainConfig { kappas, ..inputs.template };
        let outcome = train(inputs.train, inputs.mlp, cfg)?;
        evaluate(inputs.eval, &outcome.state.embedder(), inputs.policy, alphas)
    });
    match result {
        Ok(reports) => reports.iter().map(|r| TrendRow::from_report(kappa0, kappa1, r)).collect(),
        Err(e) => alphas.iter().map(|&a| TrendRow::failed(kappa0, kappa1, a, &e)).collect(),
    }
}

/// Worker count from [`THREADS_ENV`], defaulting to the available cores.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs every cell not already present in `existing` and returns all rows
/// sorted by `(κ₀, κ₁, α)`. Output does not depend on the thread count.
pub fn grid_search(inputs: &GridInputs, spec: &GridSpec, existing: Vec<TrendRow>, threads: usize) -> Result<Vec<TrendRow>> {
    spec.validate()?;
    let todo: Vec<(f64, f64)> = spec
        .cells()
        .into_iter()
        .filter(|&(k0, k1)| {
            !spec.alphas.iter().all(|&alpha| {
                let probe = TrendRow { kappa0: k0, kappa1: k1, alpha, columns: String::new() };
                existing.iter().any(|r| r.same_key(&probe))
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let fresh: Vec<TrendRow> = pool.install(|| {
        todo.par_iter()
            .map(|&(k0, k1)| run_cell(inputs, k0, k1, &spec.alphas))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    let mut rows: Vec<TrendRow> = Vec::with_capacity(existing.len() + fresh.len());
    for r in existing.into_iter().chain(fresh) {
        if !rows.iter().any(|o| o.same_key(&r)) {
            rows.push(r);
        }
    }
    rows.sort_by(TrendRow::key_cmp);
    Ok(rows)
}
