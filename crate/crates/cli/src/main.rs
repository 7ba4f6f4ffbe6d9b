//! `cdwce`: seeded benchmarks of ordinal losses on small MLPs.
//!
//! Exit codes: 0 on success, 1 for configuration or input errors, 2 for
//! runtime failures such as I/O or divergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cdwce_core::data::load_csv;
use cdwce_core::experiments::{
    emit_report, markdown_summary, run_alpha_sweep, run_benchmark, run_margin_sweep,
    DatasetSource,
};
use cdwce_core::metrics::silhouette;
use cdwce_core::{AggregateReport, Error, ExperimentConfig, LossKind, ReportFormat};

#[derive(Parser)]
#[command(name = "cdwce", version, about = "Ordinal loss benchmarks on synthetic or CSV data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every loss of the grid over seeded trials.
    Bench(RunArgs),
    /// Benchmark CDW-CE once per alpha.
    SweepAlpha {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated alphas.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
        alphas: Vec<f64>,
    },
    /// Benchmark CDW-CE with margin at a fixed alpha, once per margin.
    SweepMargin {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 5.0)]
        alpha: f64,
        /// Comma-separated margins in [0, 0.5).
        #[arg(long, value_delimiter = ',', default_value = "0,0.0025,0.025,0.05")]
        margins: Vec<f64>,
    },
    /// Write the configured dataset as CSV (`x0..x{d-1},label`).
    GenData {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-emit a saved `aggregate.json`.
    Report {
        /// Path to `aggregate.json`.
        input: PathBuf,
        #[arg(long, default_value = "markdown", value_parser = parse_format)]
        format: ReportFormat,
        /// Output directory; markdown goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Silhouette score of embeddings stored in a CSV file.
    Silhouette {
        input: PathBuf,
        #[arg(long, default_value = "label")]
        label_column: String,
    },
}

#[derive(Args)]
struct DataArgs {
    /// JSON experiment config; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use a CSV dataset instead of synthetic data.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "label", requires = "data")]
    label_column: String,
    #[arg(long)]
    num_classes: Option<usize>,
    /// Synthetic sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Synthetic feature dimension.
    #[arg(long)]
    input_dim: Option<usize>,
    /// Synthetic per-class noise standard deviation.
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    /// Comma-separated hidden layer widths.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Loss grid, e.g. `ce,mse,corn,co2,ho2,cdw_ce:5,cdw_ce_margin:5:0.05`.
    #[arg(long, value_delimiter = ',', value_parser = parse_loss)]
    losses: Option<Vec<LossKind>>,
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |i: usize| -> Result<f64, String> {
        parts
            .get(i)
            .ok_or_else(|| format!("{s:?} is missing a parameter"))?
            .parse::<f64>()
            .map_err(|e| format!("{s:?}: {e}"))
    };
    let kind = match (parts[0], parts.len()) {
        ("ce", 1) => LossKind::Ce,
        ("mse", 1) | ("mse_reg", 1) => LossKind::MseReg,
        ("corn", 1) => LossKind::Corn,
        ("co2", 1) => LossKind::co2_default(),
        ("ho2", 1) => LossKind::ho2_default(),
        ("co2", 3) => LossKind::Co2 { lambda: num(1)?, delta: num(2)? },
        ("ho2", 3) => LossKind::Ho2 { lambda: num(1)?, delta: num(2)? },
        ("cdw_ce", 2) => LossKind::CdwCe { alpha: num(1)? },
        ("cdw_ce_margin", 3) => LossKind::CdwCeMargin { alpha: num(1)?, margin: num(2)? },
        _ => return Err(format!("unrecognised loss {s:?}")),
    };
    kind.validate().map_err(|e| e.to_string())?;
    Ok(kind)
}

impl DataArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(path) = &self.data {
            cfg.dataset = DatasetSource::Csv {
                path: path.clone(),
                label_column: self.label_column.clone(),
                num_classes: self.num_classes,
            };
        }
        match &mut cfg.dataset {
            DatasetSource::Synthetic { params } => {
                if let Some(k) = self.num_classes {
                    if k != params.num_classes {
                        bail!(Error::Config(
                            "--num-classes on synthetic data requires matching proportions in a config file".into()
                        ));
                    }
                }
                if let Some(n) = self.samples {
                    params.n_samples = n;
                }
                if let Some(d) = self.input_dim {
                    params.input_dim = d;
                }
                if let Some(s) = self.noise {
                    params.noise_sigma = s;
                }
            }
            DatasetSource::Csv { .. } => {
                if self.samples.is_some() || self.input_dim.is_some() || self.noise.is_some() {
                    bail!(Error::Config(
                        "--samples, --input-dim and --noise apply to synthetic data only".into()
                    ));
                }
            }
        }
        Ok(cfg)
    }
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = self.data.config()?;
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
        if let Some(v) = &self.out {
            cfg.output_dir = Some(v.clone());
        }
        if let Some(v) = self.jobs {
            cfg.jobs = Some(v);
        }
        if let Some(v) = self.trials {
            cfg.n_trials = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = self.momentum {
            cfg.train.momentum = v;
        }
        if let Some(v) = self.patience {
            cfg.train.patience = Some(v);
        }
        if let Some(v) = &self.hidden {
            cfg.model.hidden_dims = v.clone();
        }
        if let Some(v) = &self.losses {
            cfg.losses = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_summary(report: &AggregateReport, out: Option<&Path>) {
    print!("{}", markdown_summary(report));
    if let Some(dir) = out {
        eprintln!("reports written to {}", dir.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bench(args) => {
            let cfg = args.config()?;
            let report = run_benchmark(&cfg)?;
            print_summary(&report, cfg.output_dir.as_deref());
        }
        Command::SweepAlpha { run, alphas } => {
            let cfg = run.config()?;
            let report = run_alpha_sweep(&cfg, &alphas)?;
            print_summary(&report, cfg.output_dir.as_deref());
        }
        Command::SweepMargin { run, alpha, margins } => {
            let cfg = run.config()?;
            let report = run_margin_sweep(&cfg, alpha, &margins)?;
            print_summary(&report, cfg.output_dir.as_deref());
        }
        Command::GenData { data, seed, out } => {
            let mut cfg = data.config()?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let dataset = cfg.dataset.load(cfg.master_seed)?;
            dataset.write_csv(&out)?;
            eprintln!(
                "wrote {} samples, class counts {:?}, to {}",
                dataset.len(),
                dataset.class_counts(),
                out.display()
            );
        }
        Command::Report { input, format, out } => {
            let report = AggregateReport::load(&input)?;
            match out {
                Some(dir) => {
                    for path in emit_report(&report, format, &dir)? {
                        println!("{}", path.display());
                    }
                }
                None if format == ReportFormat::Markdown => print!("{}", markdown_summary(&report)),
                None => print!("{}", report.to_json()?),
            }
        }
        Command::Silhouette { input, label_column } => {
            let data = load_csv(&input, &label_column, None)?;
            let score = silhouette(data.features(), data.labels())
                .with_context(|| format!("silhouette of {}", input.display()))?;
            println!("{score}");
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_config() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_syntax() {
        assert_eq!(parse_loss("ce").unwrap(), LossKind::Ce);
        assert_eq!(parse_loss("cdw_ce:5").unwrap(), LossKind::CdwCe { alpha: 5.0 });
        assert_eq!(
            parse_loss("cdw_ce_margin:5:0.05").unwrap(),
            LossKind::CdwCeMargin { alpha: 5.0, margin: 0.05 }
        );
        assert_eq!(parse_loss("co2").unwrap(), LossKind::co2_default());
        assert!(parse_loss("cdw_ce").is_err());
        assert!(parse_loss("cdw_ce:0").is_err());
        assert!(parse_loss("cdw_ce_margin:5:0.7").is_err());
        assert!(parse_loss("hinge").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from(["cdwce", "bench", "--seed", "7", "--trials", "2", "--losses", "ce,cdw_ce:3"])
            .unwrap();
        let Command::Bench(args) = cli.command else { panic!() };
        let cfg = args.config().unwrap();
        assert_eq!(cfg.master_seed, 7);
        assert_eq!(cfg.n_trials, 2);
        assert_eq!(cfg.losses, vec![LossKind::Ce, LossKind::CdwCe { alpha: 3.0 }]);
    }
}
