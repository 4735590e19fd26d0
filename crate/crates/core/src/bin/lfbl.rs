use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lfbl::harness::{self, ExperimentConfig};
use lfbl::linearize::DriftForm;
use lfbl::{Error, Result};

#[derive(Parser)]
#[command(name = "lfbl", version, about = "Learned feedback linearization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML); defaults to the shipped config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed and every derived seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Drift term cancelled by the nominal controller.
    #[arg(long, global = true, value_parser = parse_drift)]
    drift: Option<DriftForm>,
}

#[derive(Subcommand)]
enum Command {
    /// Plan the reference trajectory and write plan.csv.
    Plan,
    /// Run the nominal controller with no learned correction.
    Baseline,
    /// Train a correction policy.
    Train,
    /// Evaluate a saved policy, optionally through the pedal network.
    Eval {
        /// Policy file; defaults to <out>/policy.json.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Route acceleration through the pedal network and actuator.
        #[arg(long)]
        use_prenet: bool,
        /// Pedal network file; defaults to <out>/prenet.json.
        #[arg(long)]
        prenet: Option<PathBuf>,
    },
    /// Collect actuator data and train the pedal network.
    Prenet {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        hold_steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Write an SVG of planned, nominal and learned paths.
    Plot {
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Print the default config.
    DefaultConfig,
}

fn parse_drift(s: &str) -> std::result::Result<DriftForm, String> {
    s.parse::<DriftForm>().map_err(|e| e.to_string())
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(d) = cli.drift {
        cfg.drift = d;
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Command::DefaultConfig = cli.command {
        print!("{}", harness::DEFAULT_CONFIG);
        return Ok(());
    }
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::Plan => print_json(&harness::cmd_plan(&cfg)?),
        Command::Baseline => {
            let report = harness::cmd_baseline(&cfg)?;
            print_json(&report)?;
            match report.diverged {
                Some(d) => Err(Error::EpisodeDiverged { step: d.step, norm: d.norm }),
                None => Ok(()),
            }
        }
        Command::Train => print_json(&harness::cmd_train(&cfg)?.report),
        Command::Eval { policy, use_prenet, prenet } => {
            let policy = policy.clone().unwrap_or_else(|| cfg.out_dir.join("policy.json"));
            let prenet = use_prenet.then(|| prenet.clone().unwrap_or_else(|| cfg.out_dir.join("prenet.json")));
            print_json(&harness::cmd_eval(&cfg, &policy, prenet.as_deref())?)
        }
        Command::Prenet { n, hold_steps, lr, epochs } => {
            let pn = &mut cfg.prenet;
            if let Some(v) = n {
                pn.collect.n = *v;
            }
            if let Some(v) = hold_steps {
                pn.collect.hold_steps = *v;
            }
            if let Some(v) = lr {
                pn.train.lr = *v;
            }
            if let Some(v) = epochs {
                pn.train.epochs = *v;
            }
            print_json(&harness::cmd_prenet(&cfg)?.0)
        }
        Command::Plot { policy } => {
            let path = harness::cmd_plot(&cfg, policy.as_deref())?;
            println!("{}", path.display());
            Ok(())
        }
        Command::DefaultConfig => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
