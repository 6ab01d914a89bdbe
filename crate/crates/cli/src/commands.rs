use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};
use sgl_core::synth::{gaussian_blobs, noise_view, union_of_subspaces, BlobSpec, SubspaceSpec};
use sgl_core::{
    evaluate, fit_msgl_observed, fit_sgl_observed, fit_views, ClusterModel, MetricSummary,
    OosPredictor, SglState, SolverConfig,
};

use crate::archive;
use crate::ingest::{ingest, read_labels, write_csv, write_labels, Format, Input};

/// One line of structured output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum Record {
    Iteration {
        iteration: usize,
        objective: f64,
        elapsed_seconds: f64,
        view_weights: Vec<f64>,
        max_qp_residual: f64,
    },
    Fit {
        n_samples: usize,
        n_views: usize,
        iterations: usize,
        converged: bool,
        objective: f64,
        view_weights: Vec<f64>,
        metrics: Option<MetricSummary>,
    },
    Prediction {
        n: usize,
        knn: usize,
        in_sample: bool,
        metrics: Option<MetricSummary>,
    },
    Metrics {
        n: usize,
        #[serde(flatten)]
        metrics: MetricSummary,
    },
    SweepSummary {
        alpha: f64,
        beta: f64,
        m: usize,
        repeats: usize,
        acc_mean: f64,
        acc_std: f64,
        nmi_mean: f64,
        nmi_std: f64,
        purity_mean: f64,
        purity_std: f64,
        seconds_mean: f64,
    },
    Bench {
        n: usize,
        m: usize,
        d: usize,
        iterations: usize,
        wall_seconds: f64,
    },
    Generated {
        n: usize,
        d: usize,
        k: usize,
    },
}

fn emit(out: &mut (dyn Write + Send), record: &Record) -> Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Input file (csv, or a manifest for multi-view data).
    #[arg(long)]
    pub input: PathBuf,
    /// Input format; defaults to labeled-csv, or multi-view-manifest with --multiview.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Fit the multi-view model (shared graph, learned view weights).
    #[arg(long)]
    pub multiview: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Input> {
        let format = self.format.unwrap_or(if self.multiview {
            Format::MultiViewManifest
        } else {
            Format::LabeledCsv
        });
        let input = ingest(&self.input, format)?;
        if matches!(input, Input::Multi(_)) && !self.multiview {
            bail!("input has several views; pass --multiview");
        }
        Ok(input)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Regularizer on the affinity.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Weight of the connectivity penalty.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// View-weight exponent (multi-view only, negative).
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

impl SolverArgs {
    fn config(&self, k: usize, m: usize) -> SolverConfig {
        SolverConfig {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            seed: self.seed,
            max_iter: self.max_iter,
            tol: self.tol,
            ..SolverConfig::new(k, m)
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of clusters.
    #[arg(long)]
    pub k: usize,
    /// Number of anchors.
    #[arg(long)]
    pub m: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Model directory to write.
    #[arg(long)]
    pub out: PathBuf,
}

/// Fits on already loaded input, reporting each iteration to `on_iteration`.
pub fn fit_input(
    input: &Input,
    config: &SolverConfig,
    multiview: bool,
    on_iteration: Option<&mut dyn FnMut(&SglState<'_>)>,
) -> Result<ClusterModel> {
    let model = match input {
        Input::Multi(views) => fit_msgl_observed(views, config, on_iteration)?,
        Input::Single(d) if multiview => fit_views(std::slice::from_ref(d), config, on_iteration)?,
        Input::Single(d) => fit_sgl_observed(d, config, on_iteration)?,
    };
    Ok(model)
}

pub fn fit(args: &FitArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let input = args.data.load()?;
    let config = args.solver.config(args.k, args.m);
    let mut io_error = None;
    let mut observer = |s: &SglState<'_>| {
        if io_error.is_some() {
            return;
        }
        let record = Record::Iteration {
            iteration: s.iteration,
            objective: s.objective,
            elapsed_seconds: s.elapsed.as_secs_f64(),
            view_weights: s.view_weights.to_vec(),
            max_qp_residual: s.max_qp_residual,
        };
        if let Err(e) = emit(out, &record) {
            io_error = Some(e);
        }
    };
    let model = fit_input(&input, &config, args.data.multiview, Some(&mut observer))?;
    if let Some(e) = io_error {
        return Err(e);
    }
    let metrics = input
        .labels()
        .map(|y| evaluate(y, &model.sample_labels))
        .transpose()?;
    archive::save(&args.out, &model, metrics)?;
    let objective = model.objective_trace.last().copied().unwrap_or(f64::NAN);
    emit(
        out,
        &Record::Fit {
            n_samples: model.n_samples(),
            n_views: model.n_views(),
            iterations: model.iterations(),
            converged: model.converged,
            objective,
            view_weights: model.view_weights.clone(),
            metrics,
        },
    )?;
    eprintln!(
        "fit: n={} views={} iterations={} converged={} objective={objective:.6e}",
        model.n_samples(),
        model.n_views(),
        model.iterations(),
        model.converged
    );
    if let Some(m) = metrics {
        eprintln!("ACC {:.4}  NMI {:.4}  Purity {:.4}", m.acc, m.nmi, m.purity);
    }
    eprintln!("model written to {}", args.out.display());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Model directory written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Points to label.
    #[arg(long)]
    pub input: PathBuf,
    /// Input format; defaults to labeled-csv, or multi-view-manifest for multi-view models.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Neighbors in the vote.
    #[arg(long, default_value_t = 1)]
    pub knn: usize,
    /// Vote among these training points (with the model's sample labels)
    /// instead of the anchors.
    #[arg(long)]
    pub in_sample: Option<PathBuf>,
    /// Format of the --in-sample file; defaults like --format.
    #[arg(long, value_enum)]
    pub in_sample_format: Option<Format>,
    /// Where to write one predicted label per line.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn predict(args: &PredictArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let (model, _) = archive::load(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let default_format = if model.n_views() > 1 {
        Format::MultiViewManifest
    } else {
        Format::LabeledCsv
    };
    let input = ingest(&args.input, args.format.unwrap_or(default_format))?;
    let predictor = match &args.in_sample {
        None => OosPredictor::from_model(&model, args.knn)?,
        Some(path) => {
            let train = ingest(path, args.in_sample_format.unwrap_or(default_format))?;
            ensure!(
                train.n_samples() == model.n_samples(),
                "in-sample data has {} rows, the model was fit on {}",
                train.n_samples(),
                model.n_samples()
            );
            OosPredictor::in_sample(
                train.feature_matrices(),
                model.view_weights.clone(),
                model.sample_labels.clone(),
                args.knn,
            )?
        }
    };
    let labels = predictor
        .predict_views(&input.feature_matrices())
        .context("predicting")?;
    write_labels(&args.out, &labels)?;
    let metrics = input.labels().map(|y| evaluate(y, &labels)).transpose()?;
    emit(
        out,
        &Record::Prediction {
            n: labels.len(),
            knn: args.knn,
            in_sample: args.in_sample.is_some(),
            metrics,
        },
    )?;
    if let Some(m) = metrics {
        eprintln!("ACC {:.4}  NMI {:.4}  Purity {:.4}", m.acc, m.nmi, m.purity);
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// True labels, one integer per line.
    #[arg(long)]
    pub truth: PathBuf,
    /// Predicted labels, one integer per line.
    #[arg(long)]
    pub pred: PathBuf,
}

pub fn eval(args: &EvalArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let truth = read_labels(&args.truth)?;
    let pred = read_labels(&args.pred)?;
    let metrics = evaluate(&truth, &pred)?;
    emit(
        out,
        &Record::Metrics {
            n: truth.len(),
            metrics,
        },
    )?;
    eprintln!(
        "ACC {:.4}  NMI {:.4}  Purity {:.4}",
        metrics.acc, metrics.nmi, metrics.purity
    );
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub alpha_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub beta_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub m_grid: Vec<usize>,
    /// Fits per grid point; repeat `r` uses seed `seed + r`.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub gamma: f64,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// CSV file with one row per fit.
    #[arg(long)]
    pub out: PathBuf,
}

pub const SWEEP_HEADER: &str = "alpha,beta,m,repeat,seed,acc,nmi,purity,iterations,converged,seconds";

pub fn sweep(args: &SweepArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    if args.alpha_grid.is_empty() || args.beta_grid.is_empty() || args.m_grid.is_empty() {
        bail!("alpha, beta and m grids must be nonempty");
    }
    ensure!(args.repeats >= 1, "repeats must be at least 1");
    let input = args.data.load()?;
    let truth = input
        .labels()
        .context("sweep needs labeled input to score fits")?
        .to_vec();
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for &alpha in &args.alpha_grid {
        for &beta in &args.beta_grid {
            for &m in &args.m_grid {
                let mut scores = Vec::with_capacity(args.repeats);
                let mut seconds = Vec::with_capacity(args.repeats);
                for r in 0..args.repeats {
                    let seed = args.seed.wrapping_add(r as u64);
                    let config = SolverConfig {
                        alpha,
                        beta,
                        gamma: args.gamma,
                        seed,
                        max_iter: args.max_iter,
                        tol: args.tol,
                        ..SolverConfig::new(args.k, m)
                    };
                    let start = Instant::now();
                    let model = fit_input(&input, &config, args.data.multiview, None)?;
                    let secs = start.elapsed().as_secs_f64();
                    let s = evaluate(&truth, &model.sample_labels)?;
                    writeln!(
                        csv,
                        "{alpha},{beta},{m},{r},{seed},{},{},{},{},{},{secs}",
                        s.acc,
                        s.nmi,
                        s.purity,
                        model.iterations(),
                        model.converged
                    )?;
                    scores.push(s);
                    seconds.push(secs);
                }
                let acc: Vec<f64> = scores.iter().map(|s| s.acc).collect();
                let nmi: Vec<f64> = scores.iter().map(|s| s.nmi).collect();
                let purity: Vec<f64> = scores.iter().map(|s| s.purity).collect();
                let summary = Record::SweepSummary {
                    alpha,
                    beta,
                    m,
                    repeats: args.repeats,
                    acc_mean: mean(&acc),
                    acc_std: std_dev(&acc),
                    nmi_mean: mean(&nmi),
                    nmi_std: std_dev(&nmi),
                    purity_mean: mean(&purity),
                    purity_std: std_dev(&purity),
                    seconds_mean: mean(&seconds),
                };
                emit(out, &summary)?;
                eprintln!(
                    "alpha={alpha} beta={beta} m={m}: ACC {:.4} ± {:.4}",
                    mean(&acc),
                    std_dev(&acc)
                );
            }
        }
    }
    fs::write(&args.out, csv).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
fn std_dev(v: &[f64]) -> f64 {
    let mu = mean(v);
    (v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / v.len() as f64).sqrt()
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Sample counts to time.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub n_grid: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Outer iterations per fit (always run in full).
    #[arg(long, default_value_t = 5)]
    pub iterations: usize,
    /// Timed fits per size; the fastest is reported.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub wall_seconds: f64,
}

/// Times a full fit on blob data of each size in `n_grid`.
pub fn run_bench(args: &BenchArgs) -> Result<Vec<BenchRow>> {
    ensure!(args.repeats >= 1, "repeats must be at least 1");
    ensure!(args.iterations >= 1, "iterations must be at least 1");
    ensure!(args.d >= 1 && args.k >= 2, "need d ≥ 1 and k ≥ 2");
    if let Some(&n) = args.n_grid.iter().find(|&&n| n < args.m) {
        bail!("n = {n} is smaller than m = {}", args.m);
    }
    let mut rows = Vec::with_capacity(args.n_grid.len());
    for &n in &args.n_grid {
        let data = blob_data(n, args.d, args.k, args.seed)?;
        let config = SolverConfig {
            seed: args.seed,
            max_iter: args.iterations,
            fixed_iterations: true,
            ..SolverConfig::new(args.k, args.m)
        };
        let mut best = f64::INFINITY;
        for _ in 0..args.repeats {
            let start = Instant::now();
            sgl_core::fit_sgl(&data, &config)?;
            best = best.min(start.elapsed().as_secs_f64());
        }
        rows.push(BenchRow {
            n,
            wall_seconds: best,
        });
    }
    Ok(rows)
}

/// Exactly `n` blob points (clusters as balanced as possible).
pub fn blob_data(n: usize, d: usize, k: usize, seed: u64) -> Result<sgl_core::Dataset> {
    let per = n.div_ceil(k);
    let full = gaussian_blobs(&BlobSpec {
        n_per_cluster: per,
        k,
        dim: d,
        separation: 10.0,
        std_dev: 1.0,
        seed,
    });
    let idx: Vec<usize> = (0..n).collect();
    Ok(full.subset(&idx)?)
}

pub fn bench(args: &BenchArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    for row in run_bench(args)? {
        emit(
            out,
            &Record::Bench {
                n: row.n,
                m: args.m,
                d: args.d,
                iterations: args.iterations,
                wall_seconds: row.wall_seconds,
            },
        )?;
        eprintln!("n={:>8}  {:.4}s", row.n, row.wall_seconds);
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(subcommand)]
    pub kind: GenerateKind,
    /// labeled-csv output (dense-csv for `noise`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum GenerateKind {
    /// Isotropic Gaussian blobs around well-separated centers.
    Blobs {
        #[arg(long, default_value_t = 100)]
        n_per_cluster: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 10.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        std_dev: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Points on random low-dimensional linear subspaces.
    Subspaces {
        #[arg(long, default_value_t = 100)]
        n_per_cluster: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 30)]
        ambient_dim: usize,
        #[arg(long, default_value_t = 3)]
        subspace_dim: usize,
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pure Gaussian noise, e.g. an uninformative extra view.
    Noise {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        std_dev: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

pub fn generate(args: &GenerateArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let path: &Path = args.out.as_deref().context("--out is required")?;
    let data = match args.kind {
        GenerateKind::Blobs {
            n_per_cluster,
            k,
            dim,
            separation,
            std_dev,
            seed,
        } => gaussian_blobs(&BlobSpec {
            n_per_cluster,
            k,
            dim,
            separation,
            std_dev,
            seed,
        }),
        GenerateKind::Subspaces {
            n_per_cluster,
            k,
            ambient_dim,
            subspace_dim,
            noise,
            seed,
        } => union_of_subspaces(&SubspaceSpec {
            n_per_cluster,
            k,
            ambient_dim,
            subspace_dim,
            noise,
            seed,
        }),
        GenerateKind::Noise {
            n,
            dim,
            std_dev,
            seed,
        } => noise_view(n, dim, std_dev, seed),
    };
    write_csv(path, data.features(), data.labels())?;
    let k = data
        .labels()
        .map_or(0, |y| y.iter().max().map_or(0, |m| m + 1));
    emit(
        out,
        &Record::Generated {
            n: data.n_samples(),
            d: data.n_features(),
            k,
        },
    )
}
