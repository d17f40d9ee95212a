use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use diagc::commands::{self, Failure};
use diagc::config::RunConfig;
use diagc::report;
use diagc_core::graphdata::DEFAULT_FEATURE_DIM;
use diagc_core::SyntheticSpec;

/// Multi-view attributed graph clustering.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train `repeat` seeds and write checkpoints, histories and reports.
    Train(RunArgs),
    /// Train once per KL weight α and tabulate the metric means.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated α values (default 0.0001,0.001,0.01,0.1,1).
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
    },
    /// Train the full model and each ablation, one table row per variant.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated subset of full,no_mim,no_sir,no_sc.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
    },
    /// Write a planted-partition dataset (features, edges, labels, manifest).
    Synth(SynthArgs),
    /// Run the oracle suites; exit code 3 if any fails.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a predicted label file against a ground-truth label file.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
}

/// Config file plus overrides. Precedence: specific flags, then `--set`,
/// then the config file, then built-in defaults.
#[derive(Args)]
struct RunArgs {
    /// Run config (TOML).
    config: PathBuf,
    /// Override any config key, e.g. `--set train.encoder.hidden=[64,32]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    repeat: Option<usize>,
    /// Run repeats concurrently.
    #[arg(long)]
    parallel: bool,
    /// Output directory (relative to the working directory).
    #[arg(long)]
    output: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self, extra: Vec<String>) -> Result<RunConfig, Failure> {
        let mut o = self.overrides.clone();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push(format!("{k}={v}"));
            }
        };
        push("train.seed", self.seed.map(|x| x.to_string()));
        push("train.iterations", self.iterations.map(|x| x.to_string()));
        push("train.alpha", self.alpha.map(|x| format!("{x:?}")));
        push("train.adam.lr", self.lr.map(|x| format!("{x:?}")));
        push("train.clusters", self.clusters.map(|x| x.to_string()));
        push("train.variant", self.variant.clone());
        push("repeat", self.repeat.map(|x| x.to_string()));
        if self.parallel {
            o.push("parallel=true".into());
        }
        o.extend(extra);
        commands::load_config(&self.config, &o, self.output.as_deref())
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Directory to write into.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    c: usize,
    #[arg(long, default_value_t = 2)]
    views: usize,
    #[arg(long, default_value_t = 0.2)]
    p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    p_out: f64,
    #[arg(long, default_value_t = DEFAULT_FEATURE_DIM)]
    feature_dim: usize,
    #[arg(long, default_value_t = 2.0)]
    signal: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.load(Vec::new())?;
            let out = commands::train(&cfg)?;
            for r in &out.reports {
                match &r.metrics {
                    Some(m) => println!(
                        "seed {}: ACC {:.4} F1 {:.4} NMI {:.4} ARI {:.4} (loss {:.4} -> {:.4})",
                        r.seed, m.acc, m.f1, m.nmi, m.ari, r.initial_loss, r.final_loss
                    ),
                    None => println!("seed {}: loss {:.4} -> {:.4}", r.seed, r.initial_loss, r.final_loss),
                }
            }
            if let Some(row) = &out.aggregate {
                print!("{}", report::format_table(std::slice::from_ref(row)));
            }
            println!("artifacts in {}", cfg.output_dir.display());
        }
        Command::Sweep { run, alphas } => {
            let extra = if alphas.is_empty() {
                Vec::new()
            } else {
                let list: Vec<String> = alphas.iter().map(|a| format!("{a:?}")).collect();
                vec![format!("alphas=[{}]", list.join(","))]
            };
            let cfg = run.load(extra)?;
            let out = commands::sweep(&cfg)?;
            print!("{}", report::format_table(&out.rows));
            let [acc, f1, nmi, ari] = out.spread;
            println!("spread across α: ACC {acc:.4} F1 {f1:.4} NMI {nmi:.4} ARI {ari:.4}");
            if !out.stable() {
                println!("note: a metric varies by more than {} across α", commands::SWEEP_SPREAD);
            }
        }
        Command::Ablate { run, variants } => {
            let extra = if variants.is_empty() {
                Vec::new()
            } else {
                let list: Vec<String> = variants.iter().map(|v| format!("{v:?}")).collect();
                vec![format!("variants=[{}]", list.join(","))]
            };
            let cfg = run.load(extra)?;
            let rows = commands::ablate(&cfg)?;
            print!("{}", report::format_table(&rows));
        }
        Command::Synth(a) => {
            let spec = SyntheticSpec {
                feature_dim: a.feature_dim,
                ..SyntheticSpec::planted(a.n, a.c, a.views, a.p_in, a.p_out, a.signal, a.seed)
            };
            let manifest = commands::synth(&spec, &a.out)?;
            println!("wrote {}", manifest.display());
        }
        Command::Verify { seed } => {
            let (results, failure) = match commands::verify(seed) {
                Ok(r) => (r, None),
                Err((r, f)) => (r, Some(f)),
            };
            for r in &results {
                println!("{}", r.line());
            }
            if let Some(f) = failure {
                return Err(f);
            }
        }
        Command::Eval { truth, pred } => {
            let m = commands::eval(&truth, &pred)?;
            println!("ACC {:.4} F1 {:.4} NMI {:.4} ARI {:.4} (n = {}, c = {})", m.acc, m.f1, m.nmi, m.ari, m.n, m.c);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits with 2 on usage errors, which is reserved for numerical failures
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
