use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fvmf_core::dataset::{ingest, EmbeddingDataset};
use fvmf_core::fairloss::FairKappas;
use fvmf_core::grid::{self, GridInputs, GridSpec};
use fvmf_core::metrics::{build_pair_scores, curves_csv, fairness_report, impostors_needed, metric_curves, PairPolicy, PairScores, REPORT_HEADER};
use fvmf_core::specfn::{log_bessel_i, log_vmf_normalizer, mean_resultant_length, BesselOrder};
use fvmf_core::synth::{generate_synthetic, SyntheticSpec};
use fvmf_core::trainer::{checkpoint, loss_log_csv, train, Embedder, MlpConfig, TrainConfig};
use fvmf_core::{Error, Result};

#[derive(Parser)]
#[command(name = "fvmf", version, about = "Fair vMF embedding post-processing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-group embedding file.
    Gen(GenArgs),
    /// Read a vote CSV or embedding file, apply the per-identity majority vote
    /// and write an embedding file.
    Ingest(IngestArgs),
    /// Train the post-processing MLP and write a checkpoint.
    Train(TrainArgs),
    /// Write the fairness report of an embedding file.
    Eval(EvalArgs),
    /// Train and evaluate over a grid of group concentrations.
    Grid(GridArgs),
    /// Print log-Bessel values, normalizers and resultant lengths.
    SpecfnProbe(ProbeArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Identities in group 0 and group 1.
    #[arg(long, value_delimiter = ',', default_values_t = [200, 200])]
    identities: Vec<usize>,
    /// Images per identity: one count or an inclusive `min,max` range.
    #[arg(long, value_delimiter = ',', default_values_t = [30])]
    images: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [40.0, 15.0])]
    kappa_gen: Vec<f64>,
    /// Concentration of each group's centroids around its own axis (0 = uniform).
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.0])]
    centroid_concentration: Vec<f64>,
    /// Centroid seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    sample_seed: u64,
}

#[derive(Args)]
struct IngestArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Minimum share of an identity's votes its majority label needs.
    #[arg(long, default_value_t = 0.75)]
    threshold: f64,
}

#[derive(Args, Clone)]
struct TrainingOptions {
    /// `d_in,hidden,d_out`; `d_in` must match the data.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 1024)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainingOptions {
    fn mlp(&self, d: usize) -> Result<MlpConfig> {
        match self.dims.as_deref() {
            Some(&[a, h, o]) => MlpConfig::new(a, h, o),
            Some(_) => Err(Error::Config("--dims takes d_in,hidden,d_out".into())),
            None => MlpConfig::new(d, 2 * d, d),
        }
    }

    fn config(&self, kappas: FairKappas) -> TrainConfig {
        TrainConfig::new(self.epochs, self.batch_size, self.lr, self.seed, kappas)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    kappa0: f64,
    #[arg(long)]
    kappa1: f64,
    #[command(flatten)]
    training: TrainingOptions,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss CSV.
    #[arg(long)]
    loss_log: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct PairOptions {
    /// Cap on impostor pairs per group (seeded subset).
    #[arg(long)]
    max_impostors: Option<usize>,
    /// Cap on genuine pairs per group.
    #[arg(long)]
    max_genuines: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pair_seed: u64,
}

impl PairOptions {
    fn policy(&self) -> PairPolicy {
        PairPolicy {
            max_genuine_per_group: self.max_genuines,
            max_impostor_per_group: self.max_impostors,
            seed: self.pair_seed,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to embed with; raw embeddings are scored without one.
    #[arg(long, conflicts_with = "identity_module")]
    model: Option<PathBuf>,
    /// Score through the pass-through (normalize-only) module.
    #[arg(long)]
    identity_module: bool,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3])]
    alpha: Vec<f64>,
    #[command(flatten)]
    pairs: PairOptions,
    /// Report CSV; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-group FAR/FRR curves CSV.
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    data: PathBuf,
    /// Held-out evaluation file; the training file is used when absent.
    #[arg(long)]
    eval_data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0])]
    kappa0: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0])]
    kappa1: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3])]
    alpha: Vec<f64>,
    #[command(flatten)]
    training: TrainingOptions,
    #[command(flatten)]
    pairs: PairOptions,
    /// Trend CSV.
    #[arg(long)]
    out: PathBuf,
    /// Keep rows already in `--out` and only run the missing cells.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ProbeArgs {
    /// Sphere dimension (order ν = d/2 − 1).
    #[arg(long, conflicts_with = "nu")]
    dim: Option<usize>,
    /// Bessel order.
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    kappa: Vec<f64>,
}

fn two<T: Copy>(flag: &str, v: &[T]) -> Result<[T; 2]> {
    match v {
        &[a, b] => Ok([a, b]),
        _ => Err(Error::Config(format!("--{flag} takes two comma-separated values"))),
    }
}

fn run_gen(a: GenArgs) -> Result<()> {
    let images = match a.images.as_slice() {
        &[n] => (n, n),
        &[lo, hi] => (lo, hi),
        _ => return Err(Error::Config("--images takes a count or a min,max range".into())),
    };
    let spec = SyntheticSpec {
        d: a.dim,
        identities_per_group: two("identities", &a.identities)?,
        images_per_identity: images,
        kappa_gen: two("kappa-gen", &a.kappa_gen)?,
        centroid_concentration: two("centroid-concentration", &a.centroid_concentration)?,
        centroid_seed: a.seed,
        sample_seed: a.sample_seed,
    };
    let ds = generate_synthetic(&spec)?;
    ds.write(&a.out)?;
    eprintln!("wrote {} embeddings of dimension {} to {}", ds.len(), ds.dim(), a.out.display());
    Ok(())
}

fn run_ingest(a: IngestArgs) -> Result<()> {
    let (ds, cons) = ingest(&a.input, a.threshold)?;
    ds.write(&a.out)?;
    eprintln!(
        "kept {} identities ({} embeddings), discarded {}",
        cons.groups.len(),
        ds.len(),
        cons.discarded.len()
    );
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<()> {
    let ds = EmbeddingDataset::read(&a.data)?;
    let mlp = a.training.mlp(ds.dim())?;
    let out = train(&ds, mlp, a.training.config(FairKappas::new(a.kappa0, a.kappa1)?))?;
    checkpoint::save(&out.state, &a.out)?;
    if let Some(p) = &a.loss_log {
        std::fs::write(p, loss_log_csv(&out.epoch_losses))?;
    }
    if out.bound_violations > 0 {
        eprintln!("warning: {} logits left their analytic bounds", out.bound_violations);
    }
    eprintln!(
        "final mean loss {} after {} epochs",
        out.epoch_losses.last().copied().unwrap_or(f64::NAN),
        out.epoch_losses.len()
    );
    Ok(())
}

fn warn_thin_impostors(scores: &PairScores, alphas: &[f64]) {
    let n = scores.pooled_impostor().len() as f64;
    for &a in alphas {
        if a > 0.0 && n < impostors_needed(a) {
            eprintln!("warning: {n} impostor pairs are too few for alpha={a} (want >= {})", impostors_needed(a));
        }
    }
}

fn run_eval(a: EvalArgs) -> Result<()> {
    let ds = EmbeddingDataset::read(&a.data)?;
    let embedder = match &a.model {
        Some(p) => checkpoint::load(p)?.embedder(),
        None => Embedder::Identity,
    };
    let scores = build_pair_scores(&ds, &embedder, a.pairs.policy())?;
    warn_thin_impostors(&scores, &a.alpha);
    let mut csv = format!("{REPORT_HEADER}\n");
    for &alpha in &a.alpha {
        csv.push_str(&fairness_report(&scores, alpha)?.csv_row());
        csv.push('\n');
    }
    match &a.out {
        Some(p) => std::fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    if let Some(p) = &a.curves {
        std::fs::write(p, curves_csv(&metric_curves(&scores, None)?))?;
    }
    Ok(())
}

fn run_grid(a: GridArgs) -> Result<()> {
    let train_ds = EmbeddingDataset::read(&a.data)?;
    let eval_ds = match &a.eval_data {
        Some(p) => EmbeddingDataset::read(p)?,
        None => train_ds.clone(),
    };
    let existing = if a.resume && a.out.exists() {
        grid::parse_trend_csv(&std::fs::read_to_string(&a.out)?)?
    } else {
        Vec::new()
    };
    let policy = a.pairs.policy();
    let baseline = build_pair_scores(&eval_ds, &Embedder::Identity, policy)?;
    warn_thin_impostors(&baseline, &a.alpha);
    let inputs = GridInputs {
        train: &train_ds,
        eval: &eval_ds,
        mlp: a.training.mlp(train_ds.dim())?,
        template: a.training.config(FairKappas::new(1.0, 1.0)?),
        policy,
    };
    let spec = GridSpec { kappa0: a.kappa0, kappa1: a.kappa1, alphas: a.alpha };
    let rows = grid::grid_search(&inputs, &spec, existing, grid::thread_count()?)?;
    write_atomic(&a.out, &grid::trend_csv(&rows))?;
    let failed = rows.iter().filter(|r| r.columns.contains("failed_")).count();
    if failed > 0 {
        eprintln!("warning: {failed} rows come from failed cells");
    }
    Ok(())
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn run_probe(a: ProbeArgs) -> Result<()> {
    let (order, d) = match (a.dim, a.nu) {
        (Some(d), _) => (BesselOrder::for_dimension(d)?, Some(d)),
        (None, Some(nu)) => (BesselOrder::new(nu)?, None),
        (None, None) => return Err(Error::Config("pass --dim or --nu".into())),
    };
    println!("nu,kappa,log_bessel_i,log_normalizer,resultant_length");
    for &k in &a.kappa {
        let lb = log_bessel_i(order, k)?;
        let (lc, ad) = match d {
            Some(d) => (log_vmf_normalizer(d, k)?.to_string(), mean_resultant_length(d, k)?.to_string()),
            None => (String::new(), String::new()),
        };
        println!("{},{k},{lb},{lc},{ad}", order.value());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => run_gen(a),
        Command::Ingest(a) => run_ingest(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Grid(a) => run_grid(a),
        Command::SpecfnProbe(a) => run_probe(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
