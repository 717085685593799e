use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use fluidbody::experiment::{run_experiment, verify, with_override, ExperimentConfig, DEFAULT_CONFIG};
use fluidbody::{Error, Result};

#[derive(Parser)]
#[command(
    name = "fluidbody",
    version,
    about = "Boundary feedback stabilization of a rigid body in a Stokes fluid"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write every artifact.
    Run(Common),
    /// Run the invariant suite and print one line per check.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Exit with status 2 when a check fails.
        #[arg(long)]
        strict: bool,
    },
    /// Run the pipeline over a grid of parameter values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `name=v1,v2,...`; repeat for a Cartesian product.
        #[arg(long = "param", required = true)]
        params: Vec<String>,
        /// Number of concurrent sweep entries.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Print the bundled default config.
    DefaultConfig,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Output directory; overrides `outputs.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_path(&self.config)
            .map_err(|e| Error::Config(format!("{}: {e}", self.config.display())))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.outputs.directory.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn run_one(cfg: &ExperimentConfig, dir: &Path) -> Result<String> {
    let out = run_experiment(cfg)?;
    out.write(dir, &cfg.outputs.formats)?;
    let s = &out.summary;
    Ok(format!(
        "lambda {} N {} rank {}/{} measured rate {:.4} open-loop rate {:.4} target {}",
        s.lambda,
        s.unstable_dimension,
        s.rank.rank,
        s.rank.n,
        s.measured_rate,
        s.open_loop_rate,
        if s.target_met { "met" } else { "missed" }
    ))
}

fn parse_params(params: &[String]) -> Result<Vec<(String, Vec<f64>)>> {
    params
        .iter()
        .map(|p| {
            let (name, values) = p
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("parameter `{p}` is not of the form name=v1,v2")))?;
            let values = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("`{v}` in `{p}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((name.trim().to_string(), values))
        })
        .collect()
}

fn grid(params: &[(String, Vec<f64>)]) -> Vec<Vec<(String, f64)>> {
    params.iter().fold(vec![Vec::new()], |acc, (name, values)| {
        acc.iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut entry = prefix.clone();
                    entry.push((name.clone(), v));
                    entry
                })
            })
            .collect()
    })
}

fn sweep(common: &Common, params: &[String], jobs: usize) -> Result<bool> {
    let base = common.load()?;
    let root = common.out_dir(&base);
    let entries: Vec<(String, ExperimentConfig)> = grid(&parse_params(params)?)
        .into_iter()
        .map(|entry| {
            let label = entry
                .iter()
                .map(|(n, v)| format!("{n}={v}"))
                .collect::<Vec<_>>()
                .join(",");
            let cfg = entry
                .iter()
                .try_fold(base.clone(), |c, (n, v)| with_override(&c, n, *v))?;
            Ok((label, cfg))
        })
        .collect::<Result<_>>()?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<String>>>> = Mutex::new((0..entries.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, entries.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((label, cfg)) = entries.get(i) else { break };
                let r = run_one(cfg, &root.join(label));
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });

    let mut ok = true;
    for ((label, _), r) in entries.iter().zip(results.into_inner().expect("no worker panicked")) {
        match r.expect("every entry ran") {
            Ok(line) => println!("{label}: {line}"),
            Err(e) => {
                ok = false;
                println!("{label}: error: {e}");
            }
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(common) => common.load().and_then(|cfg| {
            let dir = common.out_dir(&cfg);
            let line = run_one(&cfg, &dir)?;
            println!("{line}\nartifacts in {}", dir.display());
            Ok(true)
        }),
        Command::Verify { common, strict } => common.load().map(|cfg| {
            let report = verify(&cfg);
            print!("{}", report.to_text());
            report.all_passed() || !strict
        }),
        Command::Sweep { common, params, jobs } => sweep(common, params, *jobs),
        Command::DefaultConfig => {
            print!("{DEFAULT_CONFIG}");
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
