use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ewald_core::dataset::{compare, read_dataset, read_json, simulate, write_dataset, write_json, RunConfig, Truth, TRUTH_FILE};
use ewald_core::recovery::{recover, Mode, RecoveryResult, RecoveryTolerances};
use ewald_core::studies::{flat_limit_object, flat_limit_table, hand_demo, selftest};

#[derive(Parser)]
#[command(name = "ewald", version, about = "Curved-Ewald simulation and moment-based recovery")]
struct Cli {
    /// Overrides the seed of the run configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "EWALD_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a pose-blinded dataset and its sealed truth.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover canonical moments from a dataset directory.
    Recover {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        order: usize,
        #[arg(long, default_value = "oracle")]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
        /// Run configuration whose tolerances replace the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare a recovery result with the sealed truth.
    Compare {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired-mirror and flat-limit demonstrations.
    Demo {
        which: Demo,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quick pass over the core invariants.
    Selftest {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Demo {
    Hand,
    FlatLimit,
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn emit(value: &Value, out: Option<&Path>) -> Result<()> {
    if let Some(path) = out {
        write_json(path, value)?;
    }
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("thread count must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = load_config(Some(&config), cli.seed)?;
            let dataset = simulate(&cfg)?;
            let manifest = write_dataset(&out, &dataset)?;
            emit(
                &json!({
                    "dataset": out,
                    "records": manifest.record_count,
                    "coefficient_order": manifest.coefficient_order,
                    "has_grids": manifest.has_grids,
                    "seed": cfg.seed,
                    "truth": out.join(TRUTH_FILE),
                }),
                None,
            )?;
        }
        Command::Recover {
            dataset,
            order,
            mode,
            out,
            config,
        } => {
            let tol = match &config {
                Some(p) => RunConfig::load(p)?.tolerances,
                None => RecoveryTolerances::default(),
            };
            let (manifest, records) = read_dataset(&dataset)?;
            let result = recover(&records, &manifest.optics, order, mode, &tol)?;
            write_json(&out, &result)?;
            emit(
                &json!({
                    "result": out,
                    "order": result.order,
                    "mode": result.mode,
                    "hand": result.hand,
                    "family_size": result.family_size,
                    "small_angle_members": result.small_angle_members,
                    "epsilon": result.epsilon.value,
                    "redundancy": result.redundancy,
                    "max_condition": result.conditions.iter().cloned().fold(0.0, f64::max),
                }),
                None,
            )?;
        }
        Command::Compare { truth, result, out } => {
            let truth: Truth = read_json(&truth)?;
            let result: RecoveryResult = read_json(&result)?;
            let c = compare(&truth, &result);
            emit(&serde_json::to_value(&c)?, out.as_deref())?;
        }
        Command::Demo { which, config, out } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let phantom = cfg.phantom.build(cfg.optics.k)?;
            let value = match which {
                Demo::Hand => serde_json::to_value(hand_demo(
                    &phantom,
                    &cfg.optics,
                    cfg.demo.rotations,
                    cfg.seed,
                    cfg.demo.ring,
                )?)?,
                Demo::FlatLimit => {
                    let object = flat_limit_object(&phantom, cfg.optics.c0, cfg.seed);
                    let k0 = cfg.demo.flat_k0.unwrap_or(4.0 * cfg.optics.k);
                    let rows = flat_limit_table(&object, k0, cfg.demo.flat_xi, cfg.demo.flat_steps)?;
                    json!({ "xi": cfg.demo.flat_xi, "k0": k0, "rows": rows })
                }
            };
            emit(&value, out.as_deref())?;
        }
        Command::Selftest { out } => {
            let checks = selftest();
            let passed = checks.iter().all(|c| c.passed);
            for c in &checks {
                eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            emit(&json!({ "passed": passed, "checks": checks }), out.as_deref())?;
            return Ok(passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            let causes: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
            let record = json!({ "error": { "message": e.to_string(), "causes": causes } });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
