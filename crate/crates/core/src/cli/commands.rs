use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::aggregation::Rule;
use crate::distributions::GridCdf;
use crate::regret::{bound_report, theoretical_bound, Verdict};
use crate::synthetic::{schedule, RNG_ALGORITHM};

use super::config::{Mode, RunConfig, SCHEMA_VERSION};
use super::forecast_csv::write_forecasts;
use super::output::{
    self, fmt, read_rounds, read_summary, write_json, write_run, write_snapshots, RunSummary,
    ROUNDS_FILE, SNAPSHOTS_FILE, SUMMARY_FILE,
};
use super::run::{csv_rounds, run_rounds, synthetic_rounds, Round, RunResult};
use super::sample::generate_sample;

/// Copy of the forecast stream kept inside an aggregate run directory.
pub const INPUT_COPY: &str = "input.csv";
pub const COMPARISON_FILE: &str = "comparison.json";
pub const OUTCOMES_FILE: &str = "outcomes.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub schema_version: u32,
    pub rounds: usize,
    pub expert_losses: Vec<f64>,
    pub aa_loss: f64,
    pub wa_loss: f64,
    pub aa_advantage: f64,
}

fn rounds_for(config: &RunConfig, input: Option<&Path>) -> Result<(usize, Vec<Round>)> {
    match config.mode {
        Mode::Synth => {
            let rounds = synthetic_rounds(&config.scenario()?, &config.domain)?;
            Ok((3, rounds))
        }
        Mode::Aggregate => {
            let path = input
                .map(Path::to_path_buf)
                .or_else(|| config.input.clone())
                .context("no input file")?;
            let (experts, rounds) = csv_rounds(&path, config.domain, config.lenient)?;
            Ok((experts, rounds.collect::<Result<Vec<_>>>()?))
        }
    }
}

fn run_with(
    config: &RunConfig,
    rule: Rule,
    experts: usize,
    rounds: Vec<Round>,
) -> Result<RunResult> {
    if rounds.is_empty() {
        bail!("no rounds to aggregate");
    }
    let agg = config.aggregator(rule, experts)?;
    run_rounds(agg, rounds.into_iter().map(Ok), &config.snapshots)
}

fn warn_irregular(result: &RunResult) {
    if !result.fallback_rounds.is_empty() {
        eprintln!(
            "warning: {} round(s) had every expert asleep; previous forecast repeated, weights kept (first: {})",
            result.fallback_rounds.len(),
            result.fallback_rounds[0]
        );
    }
    if !result.clipped_rounds.is_empty() {
        eprintln!(
            "warning: {} outcome(s) clipped into the domain (first at round {})",
            result.clipped_rounds.len(),
            result.clipped_rounds[0]
        );
    }
}

/// Synthetic experiment: AA and WA over the same outcome sequence.
pub fn cmd_synth(config: &RunConfig) -> Result<Comparison> {
    config.validate()?;
    let scenario = config.scenario()?;
    let (experts, rounds) = rounds_for(config, None)?;
    std::fs::create_dir_all(&config.out)
        .with_context(|| format!("creating {}", config.out.display()))?;

    let sched = schedule(&scenario);
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(
        config.out.join(OUTCOMES_FILE),
    )?));
    w.write_record(["t", "y", "mix_1", "mix_2", "mix_3"])?;
    for (r, row) in rounds.iter().zip(sched.rows()) {
        w.write_record([
            r.t.to_string(),
            fmt(r.y.value()),
            fmt(row[0]),
            fmt(row[1]),
            fmt(row[2]),
        ])?;
    }
    w.flush()?;

    let mut losses = Vec::new();
    let mut expert_losses = Vec::new();
    for rule in [Rule::Aa, Rule::Wa] {
        let result = run_with(config, rule, experts, rounds.clone())?;
        warn_irregular(&result);
        let mut echo = config.clone();
        echo.rule = rule;
        let summary = RunSummary::new(echo, &result, Some(RNG_ALGORITHM.to_string()))?;
        write_run(&config.out.join(rule.as_str()), &summary, &result)?;
        losses.push(summary.learner_loss);
        expert_losses = summary.expert_losses;
    }
    let comparison = Comparison {
        schema_version: SCHEMA_VERSION,
        rounds: rounds.len(),
        expert_losses,
        aa_loss: losses[0],
        wa_loss: losses[1],
        aa_advantage: losses[1] - losses[0],
    };
    write_json(&config.out.join(COMPARISON_FILE), &comparison)?;
    Ok(comparison)
}

/// Aggregate a forecast CSV with one protocol round per row.
pub fn cmd_aggregate(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let input = config.input.clone().context("no input")?;
    let (experts, rounds) = rounds_for(config, Some(&input))?;
    let result = run_with(config, config.rule, experts, rounds)?;
    warn_irregular(&result);
    std::fs::create_dir_all(&config.out)
        .with_context(|| format!("creating {}", config.out.display()))?;
    let copy = config.out.join(INPUT_COPY);
    if std::fs::canonicalize(&input).ok() != std::fs::canonicalize(&copy).ok() {
        std::fs::copy(&input, &copy).with_context(|| format!("copying {}", input.display()))?;
    }
    let summary = RunSummary::new(config.clone(), &result, None)?;
    write_run(&config.out, &summary, &result)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub schema_version: u32,
    pub run: PathBuf,
    pub rule: Rule,
    pub rounds: usize,
    pub learner_loss: f64,
    pub expert_losses: Vec<f64>,
    pub discounted_regret: Vec<f64>,
    pub bound: f64,
    pub verdict: Verdict,
    /// Recomputed regrets agree with the run's summary.json.
    pub consistent: bool,
    pub snapshot_rounds: Vec<u64>,
}

/// Export curves for one completed run directory into `out`
/// (default `<run>/report`). Snapshot rounds are replayed from the run's
/// configuration.
pub fn cmd_report(run: &Path, out: Option<&Path>, snapshots: &[u64]) -> Result<ReportSummary> {
    let summary = read_summary(&run.join(SUMMARY_FILE))?;
    let ledger = read_rounds(&run.join(ROUNDS_FILE), summary.ledger)?;
    if ledger.len() != summary.rounds {
        bail!(
            "{} has {} rounds but summary records {}",
            ROUNDS_FILE,
            ledger.len(),
            summary.rounds
        );
    }
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run.join("report"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let n = summary.ledger.experts;
    let bound = theoretical_bound(n, summary.ledger.eta);

    let mut cum = csv::Writer::from_writer(BufWriter::new(File::create(
        out.join("cumulative_loss.csv"),
    )?));
    let mut weights =
        csv::Writer::from_writer(BufWriter::new(File::create(out.join("weights.csv"))?));
    let mut regret =
        csv::Writer::from_writer(BufWriter::new(File::create(out.join("regret_curves.csv"))?));
    let mut head = vec!["t".to_string(), "learner".to_string()];
    head.extend((1..=n).map(|i| format!("expert_{i}")));
    cum.write_record(&head)?;
    weights
        .write_record(std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("w_{i}"))))?;
    regret.write_record(
        std::iter::once("t".to_string())
            .chain((1..=n).map(|i| format!("dr_{i}")))
            .chain(std::iter::once("bound".to_string())),
    )?;
    let curves = (0..n)
        .map(|i| ledger.discounted_regret_curve(i))
        .collect::<Result<Vec<_>, _>>()?;
    let mut learner = 0.0;
    let mut experts = vec![0.0; n];
    for (k, r) in ledger.rounds().iter().enumerate() {
        learner += r.learner_loss;
        for (acc, l) in experts.iter_mut().zip(&r.expert_losses) {
            *acc += l;
        }
        let mut row = vec![r.t.to_string(), fmt(learner)];
        row.extend(experts.iter().map(|&x| fmt(x)));
        cum.write_record(&row)?;
        weights.write_record(
            std::iter::once(r.t.to_string()).chain(r.weights.iter().map(|&w| fmt(w))),
        )?;
        regret.write_record(
            std::iter::once(r.t.to_string())
                .chain(curves.iter().map(|c| fmt(c[k])))
                .chain(std::iter::once(fmt(bound))),
        )?;
    }
    cum.flush()?;
    weights.flush()?;
    regret.flush()?;

    let discounted: Vec<f64> = curves
        .iter()
        .map(|c| *c.last().expect("non-empty"))
        .collect();
    let consistent = discounted
        .iter()
        .zip(&summary.discounted_regret)
        .all(|(a, b)| a == b)
        && (ledger.learner_loss() - summary.learner_loss).abs()
            <= 1e-12 * summary.learner_loss.abs().max(1.0);

    let mut snapshot_rounds = Vec::new();
    if !snapshots.is_empty() {
        let mut config = summary.config.clone();
        config.snapshots = snapshots.to_vec();
        let input_copy = run.join(INPUT_COPY);
        let input = (config.mode == Mode::Aggregate).then_some(input_copy.as_path());
        let (experts, rounds) = rounds_for(&config, input)?;
        let replay = run_with(&config, config.rule, experts, rounds)?;
        if replay.ledger != ledger {
            bail!(
                "replaying {} did not reproduce {}",
                run.display(),
                ROUNDS_FILE
            );
        }
        let snaps: Vec<(u64, GridCdf)> = replay.snapshots;
        snapshot_rounds = snaps.iter().map(|(t, _)| *t).collect();
        write_snapshots(&out.join(SNAPSHOTS_FILE), &snaps)?;
    }

    let report = ReportSummary {
        schema_version: SCHEMA_VERSION,
        run: run.to_path_buf(),
        rule: summary.ledger.rule,
        rounds: ledger.len(),
        learner_loss: ledger.learner_loss(),
        expert_losses: (0..n)
            .map(|i| ledger.expert_loss(i))
            .collect::<Result<_, _>>()?,
        discounted_regret: discounted,
        bound,
        verdict: bound_report(&ledger)?.verdict,
        consistent,
        snapshot_rounds,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

/// Write the demo forecast stream.
pub fn cmd_gen_sample(path: &Path, rows: usize, seed: u64) -> Result<()> {
    let rows = generate_sample(rows, seed)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_forecasts(BufWriter::new(file), &rows)?;
    Ok(())
}

/// Report every run directory found at `path` (itself, or `aa/` and `wa/`).
pub fn report_targets(path: &Path) -> Result<Vec<PathBuf>> {
    if path.join(output::SUMMARY_FILE).is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let subs: Vec<PathBuf> = [Rule::Aa, Rule::Wa]
        .iter()
        .map(|r| path.join(r.as_str()))
        .filter(|p| p.join(SUMMARY_FILE).is_file())
        .collect();
    if subs.is_empty() {
        bail!("{} does not contain a completed run", path.display());
    }
    Ok(subs)
}
