use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stepwise_rl::envs::EnvId;
use stepwise_rl::harness::{
    cmd_ablation_rewardtype, cmd_eval, cmd_gen_expert, cmd_sweep, cmd_train, exit_code, write_csv,
    Algo, RunConfig, SweepAxis,
};
use stepwise_rl::metrics::EvalMode;
use stepwise_rl::reflect_inverse::RewardMode;
use stepwise_rl::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "stepwise",
    version,
    about = "Step-wise imitation learning on toy POMDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample expert demonstrations and write them as JSONL.
    GenExpert {
        #[arg(long)]
        env: EnvId,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Behavior cloning followed by the selected reflection algorithm.
    Train(RunArgs),
    /// Greedy (or sampled) evaluation of a policy checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: EnvId,
        #[arg(long, default_value_t = 500)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample actions instead of acting greedily.
        #[arg(long)]
        sample: bool,
        /// Write the metrics row to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One training run per value of the chosen axis.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// `iterations` or `practice`.
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
    },
    /// Inverse reflection under step, final and combined rewards.
    AblateReward(RunArgs),
}

/// Overrides applied on top of `--config` (or the defaults).
#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvId>,
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    practice: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    reward_mode: Option<RewardMode>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.env {
            cfg.env = v;
        }
        if let Some(v) = self.algo {
            cfg.algo = v;
        }
        if let Some(v) = &self.dataset {
            cfg.dataset = Some(v.clone());
        }
        if let Some(v) = self.iters {
            cfg.iterations = v;
        }
        if let Some(v) = self.practice {
            cfg.practice_m = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.clip {
            cfg.clip_eps = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.reward_mode {
            cfg.reward_mode = Some(v);
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenExpert {
            env,
            count,
            seed,
            out,
        } => {
            let data = cmd_gen_expert(env, count, seed, &out)?;
            println!(
                "wrote {} {} trajectories to {}",
                data.len(),
                env,
                out.display()
            );
        }
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let record = cmd_train(&cfg)?;
            for (seed, report) in &record.final_reports {
                println!(
                    "seed {seed}: success_rate {:.4} mean_final_reward {:.4} mean_length {:.2}",
                    report.success_rate, report.mean_final_reward, report.mean_length
                );
            }
            println!("artifacts in {}", cfg.output_dir.display());
        }
        Command::Eval {
            checkpoint,
            env,
            episodes,
            seed,
            sample,
            out,
        } => {
            let mode = if sample {
                EvalMode::Sample
            } else {
                EvalMode::Greedy
            };
            let (report, row) = cmd_eval(&checkpoint, env, episodes, seed, mode)?;
            println!(
                "episodes {} success_rate {:.4} mean_final_reward {:.4} mean_length {:.2} js_div {:.6} kl_div {:.6}",
                report.episodes, report.success_rate, report.mean_final_reward, report.mean_length, row.js_div, row.kl_div
            );
            if let Some(path) = out {
                write_csv(&path, &[row])?;
            }
        }
        Command::Sweep { run, axis, values } => {
            let cfg = run.resolve()?;
            let rows = cmd_sweep(&cfg, axis, &values)?;
            println!(
                "{} rows written to {}",
                rows.len(),
                cfg.output_dir.join("sweep.csv").display()
            );
        }
        Command::AblateReward(args) => {
            let cfg = args.resolve()?;
            let seeds = cfg.seeds.clone();
            let table = cmd_ablation_rewardtype(&cfg, &seeds)?;
            println!(
                "{:<8} {:>18} {:>8} {:>12}",
                "reward", "mean_final_reward", "stderr", "success_rate"
            );
            for c in &table.cells {
                println!(
                    "{:<8} {:>18.4} {:>8.4} {:>12.4}",
                    c.reward_mode, c.mean_final_reward, c.stderr, c.success_rate
                );
            }
            println!("{}", table.note());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if matches!(err, Error::Config(_)) {
                eprintln!("run `stepwise --help` for usage");
            }
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
