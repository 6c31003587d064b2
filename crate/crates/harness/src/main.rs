use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use glean_core::{Error, Execution, Result};
use glean_harness::criteria;
use glean_harness::pipeline::{
    Pipeline, STAGE_COMPARE, STAGE_DATA, STAGE_LOOKAHEAD, STAGE_PLAN, STAGE_PRIOR, STAGE_REGEN, STAGE_TRAIN,
};
use glean_harness::{exit_code, ExperimentSpec};

/// Goal-directed planning lab: PV-RNN with GLean planning against forward
/// model and stochastic-initial-state baselines on a 2D trajectory task.
#[derive(Debug, Parser)]
#[command(name = "glean", version)]
struct Cli {
    /// Experiment spec file; the bundled experiment1 spec when omitted.
    #[arg(long, global = true)]
    spec: Option<PathBuf>,

    /// Overrides the spec's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run directory; each stage writes a subdirectory here.
    #[arg(long, global = true, env = "GLEAN_OUT_DIR", default_value = "runs/experiment1")]
    out_dir: PathBuf,

    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the training, test and center-goal trajectory sets.
    GenData,
    /// Train the three meta-prior PV-RNNs and the FM and SI baselines.
    Train,
    /// Free-running prior rollouts of each PV-RNN.
    PriorGen,
    /// Rollouts from one trained first-step posterior.
    TargetRegen,
    /// GLean plans to trained-region and center goals.
    Plan,
    /// One-step look-ahead prediction for GLean, SI and FM.
    Lookahead,
    /// GLean, SI and FM plans on the test goals.
    Compare,
    /// Summarise completed stages and check the trend criteria.
    Report,
}

fn execution(threads: Option<usize>) -> Result<Execution> {
    let n = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if n == 0 {
        return Err(Error::Config("--threads must be >= 1".into()));
    }
    if n == 1 || !cfg!(feature = "parallel") {
        return Ok(Execution::Sequential);
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(Execution::Parallel)
}

fn report(p: &Pipeline) -> Result<()> {
    let records = p.records()?;
    if records.is_empty() {
        return Err(Error::Config(format!("no completed stages under {}", p.out_dir.display())));
    }
    for r in &records {
        r.check_aggregates().map_err(Error::Config)?;
        println!("[{}]", r.stage);
        for g in &r.groups {
            let a = &g.aggregate;
            let mut line = format!("  {:<22} n={:<4}", g.name, a.n);
            if let Some(s) = a.rmse {
                line += &format!(" rmse {:.5} ± {:.5}", s.mean, s.std);
            }
            if let Some(s) = a.goal_deviation {
                line += &format!(" gd {:.3e} ± {:.3e}", s.mean, s.std);
            }
            if let Some(s) = a.kld_pq {
                line += &format!(" kld_pq {:.4} ± {:.4}", s.mean, s.std);
            }
            if let Some(d) = g.goal_distribution {
                line += &format!(
                    " left {:.1}% right {:.1}% neither {:.1}% (nearest {:.1}/{:.1})",
                    d.left, d.right, d.neither, d.nearest_left, d.nearest_right
                );
            }
            println!("{line}");
            for (k, v) in &g.scalars {
                println!("      {k} = {v}");
            }
        }
    }
    let train_seconds = criteria::training_seconds(&p.out_dir);
    println!();
    for o in criteria::evaluate(&records, train_seconds) {
        println!("{o}");
    }
    println!("criteria 1, 2 and 9 are checked by the acceptance test target");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut spec = match &cli.spec {
        Some(p) => ExperimentSpec::load(p)?,
        None => ExperimentSpec::bundled(),
    };
    if let Some(s) = cli.seed {
        spec = spec.with_seed(s);
    }
    let exec = execution(cli.threads)?;
    let p = Pipeline::new(spec, cli.out_dir, exec);
    let stage = match cli.command {
        Command::GenData => STAGE_DATA,
        Command::Train => STAGE_TRAIN,
        Command::PriorGen => STAGE_PRIOR,
        Command::TargetRegen => STAGE_REGEN,
        Command::Plan => STAGE_PLAN,
        Command::Lookahead => STAGE_LOOKAHEAD,
        Command::Compare => STAGE_COMPARE,
        Command::Report => return report(&p),
    };
    let record = p.run_stage(stage)?;
    println!("{}", p.record_path(&record.stage).display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
