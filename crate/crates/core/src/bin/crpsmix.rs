use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crpsmix::aggregation::{Rule, DEFAULT_ALPHA};
use crpsmix::cli::{self, Mode, RunConfig, ScenarioSpec};
use crpsmix::distributions::{GridDomain, DEFAULT_GRID};
use crpsmix::regret::Verdict;
use crpsmix::synthetic::{Method, DEFAULT_HORIZON, DEFAULT_SEGMENTS};

#[derive(Parser)]
#[command(
    name = "crpsmix",
    version,
    about = "Aggregate probabilistic forecasts under the CRPS loss"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Aggregation rule
    #[arg(long, default_value = "aa", value_parser = parse_rule)]
    rule: Rule,
    /// Lower end of the outcome interval
    #[arg(long = "a", default_value_t = 0.0, allow_negative_numbers = true)]
    a: f64,
    /// Upper end of the outcome interval
    #[arg(long = "b", default_value_t = 1.0, allow_negative_numbers = true)]
    b: f64,
    /// Number of grid cells
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
    /// Fixed Share parameter (0 disables mixing)
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Weight experts by their per-round confidence
    #[arg(long)]
    confidence: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Reject outcomes outside [a, b] (default)
    #[arg(long, conflicts_with = "lenient")]
    strict: bool,
    /// Clip outcomes outside [a, b] with a warning
    #[arg(long)]
    lenient: bool,
    /// JSON file whose values override the flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated rounds whose learner CDF is exported
    #[arg(long, value_delimiter = ',')]
    snapshots: Vec<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run AA and WA on a synthetic triangular-mixture stream
    Synth {
        #[command(flatten)]
        common: Common,
        /// Mixing schedule: 1 (abrupt) or 2 (smooth)
        #[arg(long, default_value = "1", value_parser = parse_method)]
        method: Method,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
        #[arg(long, default_value_t = DEFAULT_SEGMENTS)]
        segments: usize,
    },
    /// Aggregate a forecast CSV
    Aggregate {
        #[command(flatten)]
        common: Common,
        /// Forecast stream (t, y, expert<k>_kind, expert<k>_params, expert<k>_conf ...)
        #[arg(long)]
        input: PathBuf,
    },
    /// Export curves, weights and snapshots for a finished run
    Report {
        /// Run directory (or a synth directory holding aa/ and wa/)
        run: PathBuf,
        /// Output directory (default: <run>/report)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        snapshots: Vec<u64>,
    },
    /// Write the demo forecast CSV with trapezoidal confidences
    GenSample {
        #[arg(long, default_value_t = 500)]
        rows: usize,
        #[arg(long, default_value_t = 2014)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_rule(s: &str) -> Result<Rule, String> {
    s.parse().map_err(|e: crpsmix::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: crpsmix::Error| e.to_string())
}

fn build_config(
    mode: Mode,
    common: &Common,
    scenario: Option<ScenarioSpec>,
    input: Option<PathBuf>,
) -> Result<RunConfig> {
    let mut cfg = RunConfig::new(mode, common.out.clone());
    cfg.domain = GridDomain::new(common.a, common.b, common.grid)?;
    cfg.rule = common.rule;
    cfg.alpha = common.alpha;
    cfg.confidence = common.confidence;
    cfg.lenient = common.lenient;
    cfg.seed = common.seed;
    cfg.scenario = scenario;
    cfg.input = input;
    cfg.snapshots = common.snapshots.clone();
    if let Some(path) = &common.config {
        cfg = cfg.merge_file(path)?;
    }
    Ok(cfg)
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth {
            common,
            method,
            horizon,
            segments,
        } => {
            let spec = ScenarioSpec {
                method,
                horizon,
                segments,
                components: None,
            };
            let cfg = build_config(Mode::Synth, &common, Some(spec), None)?;
            let cmp = cli::cmd_synth(&cfg)?;
            println!("rounds        {}", cmp.rounds);
            for (i, l) in cmp.expert_losses.iter().enumerate() {
                println!("expert {:<6} {l:.6}", i + 1);
            }
            println!("AA            {:.6}", cmp.aa_loss);
            println!("WA            {:.6}", cmp.wa_loss);
            println!("written to    {}", cfg.out.display());
            Ok(true)
        }
        Command::Aggregate { common, input } => {
            let cfg = build_config(Mode::Aggregate, &common, None, Some(input))?;
            let summary = cli::cmd_aggregate(&cfg)?;
            println!("rounds        {}", summary.rounds);
            println!("learner loss  {:.6}", summary.learner_loss);
            for (i, r) in summary.discounted_regret.iter().enumerate() {
                println!(
                    "expert {:<6} loss {:.6}  discounted regret {r:.6}",
                    i + 1,
                    summary.expert_losses[i]
                );
            }
            println!(
                "bound         {:.6} ({:?})",
                summary.bound.value, summary.bound.verdict
            );
            Ok(summary.bound.verdict != Verdict::Fail)
        }
        Command::Report {
            run,
            out,
            snapshots,
        } => {
            let targets = cli::report_targets(&run)?;
            let mut ok = true;
            for target in &targets {
                let dest = match (&out, targets.len()) {
                    (Some(o), 1) => Some(o.clone()),
                    (Some(o), _) => Some(o.join(target.file_name().unwrap_or_default())),
                    (None, _) => None,
                };
                let report = cli::cmd_report(target, dest.as_deref(), &snapshots)?;
                println!(
                    "{}: {} rounds, learner loss {:.6}, bound {:.6} ({:?}), consistent: {}",
                    target.display(),
                    report.rounds,
                    report.learner_loss,
                    report.bound,
                    report.verdict,
                    report.consistent
                );
                ok &= report.consistent;
            }
            Ok(ok)
        }
        Command::GenSample { rows, seed, out } => {
            cli::cmd_gen_sample(&out, rows, seed)?;
            println!("wrote {rows} rows to {}", out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
