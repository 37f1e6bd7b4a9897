use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};

use tcb::commands::{self, AblationPlan, KalmanChoice};
use tcb::config::{parse_fusion, RunConfig, KEYS};
use tcb::sim::SubsampleRatio;
use tcb::{Error, Result};

#[derive(Parser)]
#[command(name = "tcb", version, about = "Correlation-fused multi-object tracking toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Subcommands that accept `--<config key> <value>` for every config key.
const OVERRIDABLE: [&str; 3] = ["track", "simulate", "ablate"];

type Overrides = Vec<(String, String)>;

fn command() -> clap::Command {
    let mut cmd = Cli::command();
    for name in OVERRIDABLE {
        cmd = cmd.mut_subcommand(name, |mut sub| {
            for &key in KEYS {
                if sub.get_arguments().all(|a| a.get_id() != key) {
                    sub =
                        sub.arg(Arg::new(key).long(key).value_name("VALUE").help_heading("Config overrides"));
                }
            }
            sub
        });
    }
    cmd
}

/// Override pairs in `KEYS` order, skipping keys the subcommand defines itself.
fn overrides(matches: &ArgMatches) -> Overrides {
    let Some((name, sub)) = matches.subcommand() else {
        return Vec::new();
    };
    let base = Cli::command();
    let own = base.find_subcommand(name);
    KEYS.iter()
        .filter(|&&k| own.is_some_and(|c| c.get_arguments().all(|a| a.get_id() != k)))
        .filter_map(|&k| sub.try_get_one::<String>(k).ok().flatten().map(|v| (k.to_string(), v.clone())))
        .collect()
}

#[derive(Subcommand)]
enum Command {
    /// Track a detection file and write MOT-style results.
    Track {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        embs: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        fusion: Option<String>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        no_kalman: bool,
    },
    /// Score results against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou_thresh: f64,
    },
    /// Generate a synthetic sequence directory.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Keep every k-th frame of a sequence directory.
    Subsample {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        ratio: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare fusion modes over seeded scenarios.
    Ablate {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "product,linear,iou")]
        modes: String,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value = "on")]
        kalman: String,
        #[arg(long, default_value = "1.0")]
        ratios: String,
    },
    /// Check the analytic loss gradient against finite differences.
    Losscheck {
        #[arg(long, default_value = "16x16")]
        size: String,
        #[arg(long, default_value_t = 4)]
        templates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time association steps and report latency percentiles.
    Bench {
        #[arg(long, default_value_t = 200)]
        tracks: usize,
        #[arg(long, default_value_t = 200)]
        dets: usize,
        #[arg(long, default_value_t = 100)]
        frames: u32,
    },
}

fn load(path: Option<&PathBuf>, overrides: &Overrides) -> Result<RunConfig> {
    let base = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    base.with_overrides(overrides.iter().map(|(k, v)| (k.as_str(), v.as_str())))
}

fn run(cli: Cli, overrides: &Overrides) -> Result<String> {
    match cli.command {
        Command::Track { dets, embs, config, out, fusion, delta, no_kalman } => {
            let mut cfg = load(config.as_ref(), overrides)?;
            if let Some(d) = delta {
                cfg.set("delta", &d.to_string())?;
            }
            if let Some(f) = fusion {
                cfg.tracker.fusion = parse_fusion(&f, cfg.delta)?;
            }
            if no_kalman {
                cfg.tracker.use_kalman = false;
            }
            cfg.validate()?;
            commands::track(&dets, &embs, &cfg.tracker, &out)
        }
        Command::Eval { gt, results, iou_thresh } => commands::eval(&gt, &results, iou_thresh),
        Command::Simulate { config, out, seed } => {
            let mut cfg = load(config.as_ref(), overrides)?;
            if let Some(s) = seed {
                cfg.scenario.seed = s;
            }
            commands::simulate(&cfg, &out)
        }
        Command::Subsample { input, ratio, out } => {
            commands::subsample_dir(&input, SubsampleRatio::parse(&ratio)?, &out)
        }
        Command::Ablate { scenario, modes, seeds, kalman, ratios } => {
            let cfg = load(scenario.as_ref(), overrides)?;
            let plan = AblationPlan {
                scenario: cfg.scenario,
                tracker: cfg.tracker,
                modes: commands::parse_modes(&modes)?,
                kalman: KalmanChoice::parse(&kalman)?,
                ratios: ratios.split(',').map(|r| SubsampleRatio::parse(r.trim())).collect::<Result<_>>()?,
                seeds,
                iou_threshold: cfg.iou_threshold,
            };
            Ok(commands::ablation_table(&commands::run_ablation(&plan)?))
        }
        Command::Losscheck { size, templates, seed } => {
            let (h, w) = commands::parse_size(&size)?;
            commands::losscheck(h, w, templates, seed)
        }
        Command::Bench { tracks, dets, frames } => commands::bench(tracks, dets, frames),
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("TCB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidConfig(format!("TCB_THREADS='{v}' must be a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let matches = command().get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let overrides = overrides(&matches);
    match init_threads().and_then(|()| run(cli, &overrides)) {
        Ok(text) => {
            println!("{}", text.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
