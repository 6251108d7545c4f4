//! Run artifacts: `rounds.csv`, `regret.csv`, `cdf_snapshots.csv`, `summary.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::distributions::GridCdf;
use crate::regret::{
    bound_report, theoretical_bound, LedgerConfig, RegretLedger, RoundRecord, Verdict,
};

use super::config::{RunConfig, SCHEMA_VERSION};
use super::run::RunResult;

pub const ROUNDS_FILE: &str = "rounds.csv";
pub const REGRET_FILE: &str = "regret.csv";
pub const SNAPSHOTS_FILE: &str = "cdf_snapshots.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// 17 significant digits, enough to round-trip an `f64`.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

/// `t, y, h_t, l_1..l_N, p_1..p_N, w_1..w_N`.
pub fn write_rounds(path: &Path, ledger: &RegretLedger) -> Result<()> {
    let n = ledger.config().experts;
    let mut w = csv_writer(path)?;
    let mut head = vec!["t".to_string(), "y".to_string(), "h_t".to_string()];
    head.extend(indexed("l", n));
    head.extend(indexed("p", n));
    head.extend(indexed("w", n));
    w.write_record(&head)?;
    for r in ledger.rounds() {
        let mut row = vec![r.t.to_string(), fmt(r.outcome), fmt(r.learner_loss)];
        row.extend(r.expert_losses.iter().map(|&x| fmt(x)));
        row.extend(r.confidences.iter().map(|&x| fmt(x)));
        row.extend(r.weights.iter().map(|&x| fmt(x)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuild a ledger from `rounds.csv`.
pub fn read_rounds(path: &Path, config: LedgerConfig) -> Result<RegretLedger> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let n = config.experts;
    let width = reader.headers()?.len();
    if width != 3 + 3 * n {
        bail!(
            "{}: expected {} columns, found {width}",
            path.display(),
            3 + 3 * n
        );
    }
    let mut ledger = RegretLedger::new(config);
    for record in reader.records() {
        let record = record.with_context(|| format!("reading {}", path.display()))?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            record[i].parse::<f64>().with_context(|| {
                format!(
                    "{} line {line}: bad number {:?}",
                    path.display(),
                    &record[i]
                )
            })
        };
        let t: u64 = record[0]
            .parse()
            .with_context(|| format!("{} line {line}: bad round", path.display()))?;
        let slice = |from: usize| (from..from + n).map(num).collect::<Result<Vec<_>>>();
        ledger.push(RoundRecord {
            t,
            outcome: num(1)?,
            learner_loss: num(2)?,
            expert_losses: slice(3)?,
            confidences: slice(3 + n)?,
            weights: slice(3 + 2 * n)?,
        })?;
    }
    Ok(ledger)
}

/// `t, dr_1..dr_N, bound` with discounted regret prefix sums.
pub fn write_regret(path: &Path, ledger: &RegretLedger) -> Result<()> {
    let n = ledger.config().experts;
    let bound = theoretical_bound(n, ledger.config().eta);
    let mut w = csv_writer(path)?;
    let mut head = vec!["t".to_string()];
    head.extend(indexed("dr", n));
    head.push("bound".into());
    w.write_record(&head)?;
    let curves = (0..n)
        .map(|i| ledger.discounted_regret_curve(i))
        .collect::<Result<Vec<_>, _>>()?;
    for (k, r) in ledger.rounds().iter().enumerate() {
        let mut row = vec![r.t.to_string()];
        row.extend(curves.iter().map(|c| fmt(c[k])));
        row.push(fmt(bound));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `t, s, z, cdf, density` for each requested round.
pub fn write_snapshots(path: &Path, snapshots: &[(u64, GridCdf)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "s", "z", "cdf", "density"])?;
    for (t, cdf) in snapshots {
        let dom = cdf.domain();
        for (s, (f, p)) in cdf.values().iter().zip(cdf.density()).enumerate() {
            w.write_record([
                t.to_string(),
                (s + 1).to_string(),
                fmt(dom.point(s + 1)),
                fmt(*f),
                fmt(p),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    /// `ln N / eta`, proven for runs without Fixed Share.
    pub value: f64,
    pub verdict: Verdict,
    pub tolerance: f64,
    pub max_prefix_discounted_regret: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub config: RunConfig,
    pub ledger: LedgerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
    pub rounds: usize,
    pub learner_loss: f64,
    pub expert_losses: Vec<f64>,
    pub cumulative_regret: Vec<f64>,
    pub discounted_regret: Vec<f64>,
    pub bound: BoundSummary,
    pub fallback_rounds: Vec<u64>,
    pub clipped_rounds: Vec<u64>,
    pub max_mixability_excess: f64,
}

impl RunSummary {
    pub fn new(config: RunConfig, result: &RunResult, rng: Option<String>) -> Result<Self> {
        let ledger = &result.ledger;
        let n = ledger.config().experts;
        let report = bound_report(ledger)?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            config,
            ledger: *ledger.config(),
            rng,
            rounds: ledger.len(),
            learner_loss: ledger.learner_loss(),
            expert_losses: (0..n)
                .map(|i| ledger.expert_loss(i))
                .collect::<Result<_, _>>()?,
            cumulative_regret: (0..n)
                .map(|i| ledger.cumulative_regret(i))
                .collect::<Result<_, _>>()?,
            discounted_regret: (0..n)
                .map(|i| ledger.discounted_regret(i))
                .collect::<Result<_, _>>()?,
            bound: BoundSummary {
                value: report.bound,
                verdict: report.verdict,
                tolerance: report.tolerance,
                max_prefix_discounted_regret: report.max_prefix_regret,
            },
            fallback_rounds: result.fallback_rounds.clone(),
            clipped_rounds: result.clipped_rounds.clone(),
            max_mixability_excess: result.max_mix_excess,
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let summary: RunSummary = serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))?;
    if summary.schema_version != SCHEMA_VERSION {
        bail!(
            "{}: schema version {} (expected {SCHEMA_VERSION})",
            path.display(),
            summary.schema_version
        );
    }
    Ok(summary)
}

/// Write the standard artifacts of one run into `dir`.
pub fn write_run(dir: &Path, summary: &RunSummary, result: &RunResult) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_rounds(&dir.join(ROUNDS_FILE), &result.ledger)?;
    write_regret(&dir.join(REGRET_FILE), &result.ledger)?;
    if !result.snapshots.is_empty() {
        write_snapshots(&dir.join(SNAPSHOTS_FILE), &result.snapshots)?;
    }
    write_json(&dir.join(SUMMARY_FILE), summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::Rule;

    #[test]
    fn fmt_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 0.0, -2.5e10, std::f64::consts::PI] {
            let s = fmt(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn rounds_csv_round_trip() {
        let cfg = LedgerConfig {
            experts: 2,
            eta: 2.0,
            rule: Rule::Aa,
            alpha: 0.0,
        };
        let mut ledger = RegretLedger::new(cfg);
        for t in 1..=3 {
            ledger
                .push(RoundRecord {
                    t,
                    outcome: 0.1 * t as f64,
                    learner_loss: 1.0 / (t as f64 + 2.0),
                    expert_losses: vec![0.2, 1.0 / 7.0],
                    confidences: vec![1.0, 0.3],
                    weights: vec![0.6, 0.4],
                })
                .unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(ROUNDS_FILE);
        write_rounds(&path, &ledger).unwrap();
        assert_eq!(read_rounds(&path, cfg).unwrap(), ledger);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,y,h_t,l_1,l_2,p_1,p_2,w_1,w_2\n"));
    }
}
