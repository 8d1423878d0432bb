use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dyndisc::ExperimentConfig;
use dyndisc_cli::{layout, CliError, Run};

#[derive(Parser)]
#[command(name = "dyndisc", version, about = "Simulate, train neural ODEs and discover governing equations")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output root; each stage writes a subdirectory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Check existing artifacts against the config instead of running.
    #[arg(long)]
    verify: bool,
    /// Suppress progress messages.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate ground truth and write the observed dataset.
    Simulate(Common),
    /// Train a neural ODE on the observed dataset.
    Train(Common),
    /// Heatmaps, long-horizon error curves, phase fields and the sampling sweep.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Also render SVG figures.
        #[arg(long)]
        svg: bool,
        /// Only the heatmap (default grid if the config has none).
        #[arg(long)]
        heatmap: bool,
        #[arg(long)]
        curves: bool,
        #[arg(long)]
        phase_field: bool,
        #[arg(long)]
        sweep: bool,
    },
    /// Symbolic regression of the state derivatives.
    Discover(Common),
    /// Run every stage the config describes.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        svg: bool,
    },
}

fn load(common: &Common) -> Result<Run, CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let mut run = Run::new(cfg, &common.out);
    run.quiet = common.quiet;
    Ok(run)
}

fn stages_of(run: &Run) -> Vec<&'static str> {
    let mut s = vec![layout::GROUND_TRUTH, layout::DATASET];
    if run.cfg.training.is_some() {
        s.push(layout::MODEL);
    }
    let ev = &run.cfg.evaluation;
    if ev.heatmap.is_some() || ev.curves.is_some() || ev.phase_field.is_some() || ev.sweep.is_some() {
        s.push(layout::EVAL);
    }
    if run.cfg.sr.is_some() {
        s.push(layout::SR);
    }
    s
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(c) => {
            let run = load(&c)?;
            if c.verify {
                run.verify(&[layout::GROUND_TRUTH, layout::DATASET])
            } else {
                run.simulate()
            }
        }
        Command::Train(c) => {
            let run = load(&c)?;
            if c.verify {
                run.verify(&[layout::MODEL])
            } else {
                run.train()
            }
        }
        Command::Evaluate {
            common,
            svg,
            heatmap,
            curves,
            phase_field,
            sweep,
        } => {
            let mut run = load(&common)?;
            run.svg = svg;
            if common.verify {
                return run.verify(&[layout::EVAL]);
            }
            let only: Vec<&str> = [
                ("heatmap", heatmap),
                ("curves", curves),
                ("phase_field", phase_field),
                ("sweep", sweep),
            ]
            .into_iter()
            .filter_map(|(name, on)| on.then_some(name))
            .collect();
            run.evaluate(&only)
        }
        Command::Discover(c) => {
            let run = load(&c)?;
            if c.verify {
                return run.verify(&[layout::SR]);
            }
            let verdicts = run.discover()?;
            print!("{}", dyndisc_cli::verdict_csv(&verdicts));
            Ok(())
        }
        Command::Pipeline { common, svg } => {
            let mut run = load(&common)?;
            run.svg = svg;
            if common.verify {
                return run.verify(&stages_of(&run));
            }
            if let Some(verdicts) = run.pipeline()? {
                print!("{}", dyndisc_cli::verdict_csv(&verdicts));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
