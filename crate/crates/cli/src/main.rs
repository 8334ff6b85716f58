use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use asp_core::cop::io::write_jsonl;
use asp_core::curriculum::AspCheckpoint;
use asp_core::flow::write_density_csv;
use asp_core::meta_game::MetaSolver;
use asp_core::pipeline::{
    cmd_eval, cmd_gen_data, cmd_nash, cmd_train, cmd_weakness, landscape, load_distribution, load_policy, plan_train,
    read_utility_csv, write_eval_csv, write_landscape_csv, EvalRequest, OutputDir, RunConfig,
};
use asp_core::seed;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

/// Adaptive-staircase PSRO training and analysis for a neural TSP solver.
#[derive(Debug, Parser)]
#[command(name = "asp", version)]
struct Cli {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the staircase training loop.
    Train {
        /// Print the resolved config and plan without touching any file.
        #[arg(long)]
        dry_run: bool,
        /// Continue from the resume state left by a failed run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Gap table for one or more solvers.
    Eval {
        /// `oracle`, `nearest`, `random`, `farthest` or a checkpoint `.json`.
        #[arg(long = "solver", required = true)]
        solvers: Vec<String>,
        /// `uniform`, `mixed-gaussian[:lambda_max]`, a distribution `.json` or a dataset `.jsonl`.
        #[arg(long, default_value = "mixed-gaussian")]
        data: String,
        /// Comma-separated scales (defaults to `eval.scales`).
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<usize>>,
        /// Instances per scale (defaults to `eval.samples`).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Write a JSONL dataset.
    GenData {
        /// `uniform`, `mixed-gaussian[:lambda_max]` or a distribution `.json`.
        #[arg(long, default_value = "uniform")]
        kind: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        count: usize,
        /// File name inside the output directory.
        #[arg(long, default_value = "data.jsonl")]
        name: String,
    },
    /// Loss-landscape grid around a checkpoint.
    Landscape {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSONL dataset; otherwise uniform instances at `landscape.scale`.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        extent: Option<f64>,
    },
    /// Node-density grid of a flow mixture.
    Weakness {
        /// Distribution `.json` (for example an exploration `mixed_dist.json`).
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Equilibrium of a utility matrix.
    Nash {
        #[arg(long)]
        utility: PathBuf,
        /// Use fictitious play with this many iterations instead of the LP.
        #[arg(long)]
        fictitious_play: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Train { .. } => "train",
            Self::Eval { .. } => "eval",
            Self::GenData { .. } => "gen-data",
            Self::Landscape { .. } => "landscape",
            Self::Weakness { .. } => "weakness",
            Self::Nash { .. } => "nash",
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.asp.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let seed = cfg.asp.seed;
    let args = json!({ "seed": seed });
    match &cli.command {
        Command::Train { resume, .. } => {
            let cp = match resume {
                Some(p) => {
                    let doc: Value = serde_json::from_str(&std::fs::read_to_string(p)?)?;
                    Some(AspCheckpoint::from_json(&doc)?)
                }
                None => None,
            };
            let summary = cmd_train(cfg, out, cp)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Eval { solvers, data, scales, samples } => {
            let req = EvalRequest {
                solvers: solvers.iter().map(|s| s.parse()).collect::<asp_core::Result<_>>()?,
                data: data.parse()?,
                scales: scales.clone().unwrap_or_else(|| cfg.eval.scales.clone()),
                samples: samples.unwrap_or(cfg.eval.samples),
                seed,
                exact_limit: cfg.asp.de.exact_limit,
            };
            let rows = cmd_eval(&req)?;
            let p = out.write_with("eval.csv", args, |p| write_eval_csv(p, &rows))?;
            for r in &rows {
                println!("{:<28} n={:<3} M={:<4} gap={:>8.3}% time={:.3}ms", r.solver, r.n, r.m, r.mean_gap_pct, r.mean_time_ms);
            }
            println!("wrote {}", p.display());
        }
        Command::GenData { kind, n, count, name } => {
            if !name.ends_with(".jsonl") {
                bail!("dataset name `{name}` must end in .jsonl");
            }
            let data = cmd_gen_data(&kind.parse()?, *n, *count, seed)?;
            let p = out.write_with(name, json!({"seed": seed, "kind": kind, "n": n, "count": count}), |p| write_jsonl(p, &data))?;
            println!("wrote {} instances to {}", data.len(), p.display());
        }
        Command::Landscape { checkpoint, data, steps, extent } => {
            let policy = load_policy(checkpoint)?;
            let lc = cfg.landscape;
            let instances = match data {
                Some(p) => asp_core::cop::io::read_jsonl(p)?,
                None => asp_core::cop::InstanceDistribution::uniform(lc.scale)
                    .sample(lc.instances, seed::derive(seed, seed::stream::SAMPLE))?,
            };
            let oracle = cfg.asp.oracle();
            let set = asp_core::cop::EvalSet::new(instances, &oracle)?;
            let grid = landscape(&policy, &set, steps.unwrap_or(lc.steps), extent.unwrap_or(lc.extent), seed)?;
            let meta = json!({"seed": seed, "direction_seeds": grid.direction_seeds, "steps": grid.steps, "extent": grid.extent});
            let p = out.write_with("landscape.csv", meta, |p| write_landscape_csv(p, &grid))?;
            println!("center gap {:.4}%, wrote {}", grid.center().gap, p.display());
        }
        Command::Weakness { dist, resolution } => {
            let d = load_distribution(dist)?;
            let cells = cmd_weakness(&d, resolution.unwrap_or(cfg.weakness.resolution))?;
            let p = out.write_with("weakness.csv", json!({"source": dist}), |p| write_density_csv(p, &cells))?;
            println!("wrote {}", p.display());
        }
        Command::Nash { utility, fictitious_play } => {
            let g = read_utility_csv(utility)?;
            let solver = match fictitious_play {
                Some(iterations) => MetaSolver::FictitiousPlay { iterations: *iterations },
                None => MetaSolver::Lp,
            };
            let report = cmd_nash(&g, solver)?;
            let doc = serde_json::to_value(&report)?;
            out.write_json("nash.json", &doc)?;
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
    }
    let cfg = resolve_config(cli)?;
    cfg.validate()?;
    if let Command::Train { dry_run: true, .. } = cli.command {
        print!("{}", plan_train(&cfg));
        return Ok(());
    }
    let mut out = OutputDir::create(Path::new(&cfg.output_dir), &cfg.hash(), cli.command.name())?;
    if let Err(e) = run(cli, &cfg, &mut out) {
        let failed = out.mark_failed(&format!("{e:#}"))?;
        return Err(e.context(format!("partial outputs moved to {}", failed.display())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
