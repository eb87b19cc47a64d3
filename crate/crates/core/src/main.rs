//! Command-line front end: run experiments, sweep parameters, summarize
//! result files, export the server's synthetic dataset, and generate the
//! bundled benchmark datasets.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use guardfed::fixtures::{self, BenchmarkKind};
use guardfed::harness::{self, ExperimentConfig};

/// Directory for result files when `--out` is not given.
const RESULTS_DIR_ENV: &str = "GUARDFED_RESULTS_DIR";

#[derive(Parser)]
#[command(
    name = "guardfed",
    version,
    about = "Deterministic federated-learning simulator with dual-facet attacks and trust-scored aggregation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment from a config file.
    Run {
        config: PathBuf,
        /// Output NDJSON path (default: $GUARDFED_RESULTS_DIR/<name>.ndjson).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suppress per-round progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Run the config once per value of one parameter.
    Sweep {
        config: PathBuf,
        /// Parameter name (e.g. tau, synth_fraction, attack_fraction).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Output directory (default: $GUARDFED_RESULTS_DIR or ./results).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Tabulate final-round metrics from result files.
    Summarize {
        /// NDJSON result files.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Tag keys to group rows by.
        #[arg(long, value_delimiter = ',', default_value = "dataset,aggregator,attack,alpha")]
        group_by: Vec<String>,
        /// Emit CSV instead of an aligned text table.
        #[arg(long)]
        csv: bool,
    },
    /// Export the server's root + synthetic dataset for a config to CSV.
    SynthExport {
        config: PathBuf,
        /// Output CSV path (default: <results dir>/<name>-synth.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a bundled benchmark dataset (CSV + manifest) into a directory.
    GenData {
        /// compas_like or adult_like.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 6000)]
        rows: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn results_dir() -> PathBuf {
    std::env::var_os(RESULTS_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn load(config: &Path) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let (cfg, base, warnings) =
        harness::load_config(config).with_context(|| format!("loading {}", config.display()))?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok((cfg, base))
}

fn write_output(out: &harness::RunOutput, path: &Path) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    out.write_to(std::io::BufWriter::new(file))?;
    Ok(())
}

fn report_final(out: &harness::RunOutput) {
    let e = &out.summary.final_eval;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "undef".into());
    eprintln!(
        "{}: acc {:.4}  aeod {}  aspd {}  fairness_valid {}",
        out.meta.name,
        e.accuracy,
        fmt(e.aeod),
        fmt(e.aspd),
        e.fairness_valid
    );
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::Run { config, out, quiet } => {
            let (cfg, base) = load(&config)?;
            let output = harness::run_experiment(&cfg, &base)?;
            if !quiet {
                for r in &output.records {
                    if r.round % 10 == 0 || r.round == cfg.rounds {
                        eprintln!(
                            "round {:>4}: acc {:.4} ({} ms)",
                            r.round,
                            r.eval.accuracy,
                            r.duration.as_millis()
                        );
                    }
                }
            }
            let path = out.unwrap_or_else(|| {
                results_dir().join(format!("{}.ndjson", output.meta.name))
            });
            write_output(&output, &path)?;
            report_final(&output);
            eprintln!("results written to {}", path.display());
        }
        Cmd::Sweep { config, param, values, out_dir } => {
            let (cfg, base) = load(&config)?;
            let dir = out_dir.unwrap_or_else(results_dir);
            let outputs = harness::sweep(&cfg, &base, &param, &values)?;
            for output in &outputs {
                let path = dir.join(format!("{}.ndjson", output.meta.name));
                write_output(output, &path)?;
                report_final(output);
                eprintln!("results written to {}", path.display());
            }
        }
        Cmd::Summarize { files, group_by, csv } => {
            let table = harness::summarize(&files, &group_by)?;
            if csv {
                table.to_csv(std::io::stdout().lock())?;
            } else {
                print!("{}", table.to_text());
            }
        }
        Cmd::SynthExport { config, out } => {
            let (cfg, base) = load(&config)?;
            let synth = harness::build_synth_for_config(&cfg, &base)?;
            let path = out.unwrap_or_else(|| {
                results_dir().join(format!("{}-synth.csv", cfg.run_name()))
            });
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            synth.export_csv(&path)?;
            eprintln!(
                "{} rows ({} synthesized) written to {}",
                synth.n_rows(),
                synth.n_synthesized(),
                path.display()
            );
        }
        Cmd::GenData { kind, rows, seed, out_dir } => {
            let Some(kind) = BenchmarkKind::parse(&kind) else {
                bail!("unknown dataset kind '{kind}' (use compas_like or adult_like)");
            };
            let manifest = fixtures::write_benchmark(&out_dir, kind, rows, seed)?;
            eprintln!("wrote {} rows; manifest at {}", rows, manifest.display());
        }
    }
    Ok(())
}
