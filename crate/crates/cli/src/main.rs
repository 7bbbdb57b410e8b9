use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::Settings;

#[derive(Parser)]
#[command(name = "inqmad", version, about = "Streaming anomaly detection with adaptive Fourier features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a detector on the initialization window and write a checkpoint.
    Fit {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fit, stream the rest of the dataset, and report AUC.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// `noadp` disables training, `d200` uses a 200-dimensional embedding.
        #[arg(long)]
        ablation: Option<String>,
    },
    /// Evaluate every combination of a parameter grid; resumes from earlier rows.
    Grid {
        #[command(flatten)]
        run: RunArgs,
        /// File with `n_init=`, `lr_base=`, `sigma=`, `alpha=` comma lists.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Write the synthetic two-sine stream as CSV.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long = "synth-n")]
        n: Option<usize>,
        #[arg(long = "synth-rate")]
        rate: Option<f64>,
    },
    /// Friedman and Nemenyi tests on a dataset-by-method AUC table.
    Stats {
        /// CSV with header `dataset,<method>,...`; empty or `-` cells are missing.
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Significance level for the pairwise table.
        #[arg(long, default_value_t = 0.05)]
        level: f64,
    },
    /// Per-record latency, either for a checkpoint or across embedding sizes.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "250,500,1000,2000")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        input_dim: usize,
        #[arg(long, default_value_t = 200)]
        batch_len: usize,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key=value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: current directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// CSV path, or `synth` for the synthetic stream.
    #[arg(long)]
    data: Option<String>,
    /// Label column name, or its index when the file has no header.
    #[arg(long)]
    label_column: Option<String>,
    /// The CSV has no header row.
    #[arg(long)]
    no_header: bool,
    #[arg(long)]
    synth_n: Option<usize>,
    #[arg(long)]
    synth_rate: Option<f64>,
    #[arg(long)]
    n_init: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Embedding dimension.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    lr_base: Option<f64>,
    #[arg(long)]
    lr_end: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    num_pairs: Option<usize>,
    /// `quantile` or `best_auc`.
    #[arg(long)]
    threshold_mode: Option<String>,
    /// Train the feature map (`true`) or keep the random one (`false`).
    #[arg(long)]
    adaptive: Option<bool>,
}

impl CommonArgs {
    fn settings(&self) -> Result<Settings> {
        let mut s = Settings::load(self.config.as_deref())?;
        s.set("seed", self.seed);
        s.set("out", self.out.as_ref().map(|p| p.display()));
        Ok(s)
    }
}

impl RunArgs {
    fn settings(&self) -> Result<Settings> {
        let mut s = self.common.settings()?;
        s.set("data", self.data.as_ref());
        s.set("label_column", self.label_column.as_ref());
        s.set("header", self.no_header.then_some(false));
        s.set("synth_n", self.synth_n);
        s.set("synth_rate", self.synth_rate);
        s.set("n_init", self.n_init);
        s.set("sigma", self.sigma);
        s.set("alpha", self.alpha);
        s.set("beta", self.beta);
        s.set("dim", self.dim);
        s.set("lr_base", self.lr_base);
        s.set("lr_end", self.lr_end);
        s.set("epochs", self.epochs);
        s.set("batch_size", self.batch_size);
        s.set("num_pairs", self.num_pairs);
        s.set("threshold_mode", self.threshold_mode.as_ref());
        s.set("adaptive", self.adaptive);
        Ok(s)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { run } => commands::fit(run.settings()?),
        Command::Eval { run, ablation } => {
            let mut s = run.settings()?;
            s.set("ablation", ablation);
            commands::eval(s)
        }
        Command::Grid { run, grid } => commands::grid(run.settings()?, &grid),
        Command::Synth { common, n, rate } => {
            let mut s = common.settings()?;
            s.set("synth_n", n);
            s.set("synth_rate", rate);
            commands::synth(s)
        }
        Command::Stats { table, out, level } => commands::stats(&table, out, level),
        Command::Bench {
            common,
            checkpoint,
            dims,
            input_dim,
            batch_len,
            repetitions,
        } => commands::bench(
            common.settings()?,
            &commands::BenchArgs {
                checkpoint,
                dims,
                input_dim,
                batch_len,
                repetitions,
            },
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
