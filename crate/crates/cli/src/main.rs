use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use grpca::datagen::{export_bundle, import_bundle};
use grpca::graphs::density_to_params;
use grpca::harness::{
    self, default_penalties, emit_density_plot, load_config_with, read_rows, select_penalties, write_tables, PenaltySearch,
    PlotMetric, Preset, Regime, SweepResult,
};
use grpca::metrics::{alignment, laplacian_energy, r2_global};
use grpca::models::{export_model, fit_grpca, fit_pca, fit_sparse_pca, reconstruct, GrpcaConfig};
use grpca::precision::{oracle_precision, SUPPORT_THRESHOLD};
use grpca::graphs::FeatureGraph;

#[derive(Parser)]
#[command(name = "grpca", version, about = "Graph regularized PCA experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Paper => Preset::Paper,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Selectivity,
    Alignment,
    R2,
}

impl From<MetricArg> for PlotMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Selectivity => PlotMetric::Selectivity,
            MetricArg::Alignment => PlotMetric::Alignment,
            MetricArg::R2 => PlotMetric::R2Global,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Pca,
    SparsePca,
    Grpca,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphArg {
    /// The bundle's own edge list (or --edges).
    Edges,
    /// Support of the generator's noise precision.
    Oracle,
    /// Cross-validated graphical lasso on the data.
    Learn,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write rows, tables, plots and a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
    },
    /// Rebuild the tables from one or more rows.csv directories.
    Tables {
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        /// Where to write the tables (default: the first input).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot a metric against achieved density.
    Plot {
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "selectivity")]
        metric: MetricArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the data sets of every sweep point without fitting.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
    },
    /// Grid search for per-sample alpha and lambda on the config's seeds.
    Tune {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated alpha values.
        #[arg(long, value_delimiter = ',', default_value = "0.01")]
        alpha: Vec<f64>,
        /// Comma-separated lambda values.
        #[arg(long, value_delimiter = ',', default_value = "0.1,1,10,100,1000,10000")]
        lambda: Vec<f64>,
        /// Reject candidates losing more global R2 than this against PCA.
        #[arg(long)]
        max_r2_loss: Option<f64>,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Fit one model on an exported data set.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "grpca")]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "edges")]
        graph: GraphArg,
        /// Edge list overriding the bundle's own with `--graph edges`.
        #[arg(long)]
        edges: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        r: usize,
        /// Per-sample sparsity weight (default: the anisotropic preset).
        #[arg(long)]
        alpha: Option<f64>,
        /// Per-sample smoothness weight (default: the anisotropic preset).
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_rows(inputs: &[PathBuf]) -> Result<SweepResult> {
    let mut rows = Vec::new();
    for dir in inputs {
        let path = dir.join("rows.csv");
        rows.extend(read_rows(&path).with_context(|| format!("reading {}", path.display()))?);
    }
    if rows.is_empty() {
        bail!("no rows found");
    }
    Ok(SweepResult::from_rows(rows))
}

fn run(config: &Path, out: Option<PathBuf>, threads: Option<usize>, preset: Option<PresetArg>) -> Result<()> {
    let cfg = load_config_with(config, preset.map(Into::into))
        .with_context(|| format!("loading {}", config.display()))?;
    let out = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let result = harness::run_experiment_with_threads(&cfg, threads)?;
    harness::write_outputs(&cfg, &result, &out)?;
    let tables = harness::aggregate_tables(&result);
    for (_, t) in tables.named() {
        println!("{}", t.to_text());
    }
    println!("wrote {} rows to {}", result.rows.len(), out.display());
    Ok(())
}

fn gen(config: &Path, out: Option<PathBuf>, preset: Option<PresetArg>) -> Result<()> {
    let cfg = load_config_with(config, preset.map(Into::into))
        .with_context(|| format!("loading {}", config.display()))?;
    let out = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"))
        .join("bundles");
    let mut written = 0;
    for &t in &cfg.topologies {
        for &d in &cfg.density_grid {
            if let Err(e) = density_to_params(t, cfg.generator.p, d) {
                log::warn!("skipping {t} at {d}: {e}");
                continue;
            }
            for &s in &cfg.seeds {
                let dir = out.join(format!("{t}_d{d}_s{s}"));
                match harness::point_bundle(&cfg, s, t, d) {
                    Ok(b) => {
                        export_bundle(&b, &dir)?;
                        written += 1;
                    }
                    Err(e) => log::warn!("{t} density {d} seed {s}: {e}"),
                }
            }
        }
    }
    println!("wrote {written} bundles to {}", out.display());
    Ok(())
}

fn tune(
    config: &Path,
    alphas: &[f64],
    lambdas: &[f64],
    max_r2_loss: Option<f64>,
    preset: Option<PresetArg>,
    threads: Option<usize>,
) -> Result<()> {
    let cfg = load_config_with(config, preset.map(Into::into))
        .with_context(|| format!("loading {}", config.display()))?;
    let search = PenaltySearch {
        grid: alphas
            .iter()
            .flat_map(|&a| lambdas.iter().map(move |&l| (a, l)))
            .collect(),
        max_r2_loss,
    };
    let choice = harness::with_threads(threads, || select_penalties(&cfg, &search))??;
    println!("{:>10} {:>10} {:>12} {:>8} admissible", "alpha", "lambda", "selectivity", "r2 loss");
    for c in &choice.candidates {
        println!(
            "{:>10} {:>10} {:>12.4} {:>8.4} {}",
            c.alpha, c.lambda, c.selectivity, c.r2_loss, c.admissible
        );
    }
    println!("chosen alpha {} lambda {}", choice.alpha, choice.lambda);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fit(
    data: &Path,
    method: MethodArg,
    graph: GraphArg,
    edges: Option<PathBuf>,
    r: usize,
    alpha: Option<f64>,
    lambda: Option<f64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let bundle = import_bundle(data).with_context(|| format!("reading bundle {}", data.display()))?;
    let x = &bundle.x;
    let n = x.nrows() as f64;
    let (a0, l0) = default_penalties(Regime::Anisotropic);
    let cfg = GrpcaConfig {
        r,
        alpha: alpha.unwrap_or(a0) * n,
        lambda: lambda.unwrap_or(l0) * n,
        ..GrpcaConfig::default()
    };
    let (model, label) = match method {
        MethodArg::Pca => (fit_pca(x, r)?, "pca".to_string()),
        MethodArg::SparsePca => (fit_sparse_pca(x, &cfg)?, "sparse_pca".to_string()),
        MethodArg::Grpca => {
            let (g, source): (FeatureGraph, &str) = match graph {
                GraphArg::Edges => match &edges {
                    Some(path) => (
                        FeatureGraph::from_edge_list(&fs::read_to_string(path)?, Some(x.ncols()))?,
                        "edges",
                    ),
                    None => (bundle.graph.clone(), "edges"),
                },
                GraphArg::Oracle => (oracle_precision(&bundle.theta_true)?.support_graph, "oracle"),
                GraphArg::Learn => {
                    let est = harness::learn_precision(x, &harness::GlassoSettings::default())?;
                    println!(
                        "learned precision: penalty {:.4e}, {} edges, converged {} (support threshold {SUPPORT_THRESHOLD:e})",
                        est.penalty,
                        est.support_graph.edges().len(),
                        est.diagnostics.converged
                    );
                    (est.support_graph, "learn")
                }
            };
            (fit_grpca(x, &g, &cfg)?, format!("grpca_{source}"))
        }
    };
    let xhat = reconstruct(&model, x)?;
    println!("method           {label}");
    println!("iterations       {}", model.iterations);
    println!("converged        {}", model.converged);
    if let Some(f) = model.objective_trace.last() {
        println!("objective        {f:.6e}");
    }
    println!("in-sample R2     {:.4}", r2_global(x, &xhat)?);
    println!("alignment        {:.4}", alignment(&model.v, &bundle.v_star)?.score);
    println!("laplacian energy {:.4}", laplacian_energy(&bundle.graph, &model.v)?);
    let out = out.unwrap_or_else(|| data.join(format!("fit_{label}")));
    export_model(&model, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            threads,
            preset,
        } => run(&config, out, threads, preset),
        Command::Tables { inputs, out } => {
            let result = load_rows(&inputs)?;
            let out = out.unwrap_or_else(|| inputs[0].clone());
            fs::create_dir_all(&out)?;
            let tables = write_tables(&result, &out)?;
            for (_, t) in tables.named() {
                println!("{}", t.to_text());
            }
            Ok(())
        }
        Command::Plot { inputs, metric, out } => {
            let result = load_rows(&inputs)?;
            let metric: PlotMetric = metric.into();
            let svg = emit_density_plot(&result, metric)?;
            let dir = out.unwrap_or_else(|| inputs[0].join("plots"));
            fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{}.svg", metric.label()));
            fs::write(&path, svg)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Gen { config, out, preset } => gen(&config, out, preset),
        Command::Tune {
            config,
            alpha,
            lambda,
            max_r2_loss,
            preset,
            threads,
        } => tune(&config, &alpha, &lambda, max_r2_loss, preset, threads),
        Command::Fit {
            data,
            method,
            graph,
            edges,
            r,
            alpha,
            lambda,
            out,
        } => fit(&data, method, graph, edges, r, alpha, lambda, out),
    }
}
