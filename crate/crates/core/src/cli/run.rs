//! Sequential driver: feeds rounds through an [`Aggregator`] and records them.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{Context, Result};

use crate::aggregation::{Aggregator, AggregatorConfig, ExpertForecast};
use crate::distributions::{discretize, GridCdf, GridDomain, Outcome};
use crate::regret::{mix_loss, LedgerConfig, RegretLedger, RoundRecord};
use crate::synthetic::{
    build_expert_pool, expert_round, sample_sequence, schedule, MixtureScenario,
};

use super::forecast_csv::{ForecastReader, ForecastRow};

/// Inputs for one protocol round.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub t: u64,
    pub y: Outcome,
    pub forecasts: Vec<ExpertForecast>,
    /// Raw outcome before clipping, if it was clipped.
    pub clipped_from: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub ledger: RegretLedger,
    pub snapshots: Vec<(u64, GridCdf)>,
    pub fallback_rounds: Vec<u64>,
    pub clipped_rounds: Vec<u64>,
    /// Largest `h_t - m_t` seen; non-positive up to rounding for a mixable run.
    pub max_mix_excess: f64,
}

/// Run every round in order. `snapshots` lists rounds whose learner CDF is kept.
pub fn run_rounds<I>(config: AggregatorConfig, rounds: I, snapshots: &[u64]) -> Result<RunResult>
where
    I: IntoIterator<Item = Result<Round>>,
{
    let eta = config.eta();
    let mut ledger = RegretLedger::new(LedgerConfig::from(&config));
    let mut agg = Aggregator::new(config);
    let mut result_snapshots = Vec::new();
    let mut fallback_rounds = Vec::new();
    let mut clipped_rounds = Vec::new();
    let mut max_mix_excess = f64::NEG_INFINITY;

    for round in rounds {
        let round = round?;
        let t = agg.state().round();
        if round.t != t {
            anyhow::bail!("round {} arrived when {t} was expected", round.t);
        }
        let prior = agg.state().weights();
        let prediction = agg
            .predict(&round.forecasts)
            .with_context(|| format!("round {t}"))?;
        if snapshots.contains(&t) {
            result_snapshots.push((t, prediction.learner.clone()));
        }
        let fallback = prediction.fallback;
        let weights = prediction.weights.clone();
        let confidences = prediction.confidences.clone();
        let losses = agg
            .observe(prediction, &round.forecasts, round.y)
            .with_context(|| format!("round {t}"))?;
        if fallback {
            fallback_rounds.push(t);
        } else {
            let m = mix_loss(&prior, &losses.experts, &confidences, losses.learner, eta);
            max_mix_excess = max_mix_excess.max(losses.learner - m);
        }
        if round.clipped_from.is_some() {
            clipped_rounds.push(t);
        }
        ledger.push(RoundRecord {
            t,
            outcome: round.y.value(),
            learner_loss: losses.learner,
            expert_losses: losses.experts,
            confidences,
            weights,
        })?;
    }
    Ok(RunResult {
        ledger,
        snapshots: result_snapshots,
        fallback_rounds,
        clipped_rounds,
        max_mix_excess,
    })
}

/// Discretize the parametric forecasts of a CSV row.
pub fn round_from_row(row: &ForecastRow, domain: &GridDomain) -> Result<Round> {
    let forecasts = row
        .experts
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let cdf = discretize(&e.dist, domain)
                .with_context(|| format!("line {}: expert {}", row.line, k + 1))?;
            Ok(ExpertForecast::new(cdf, e.confidence)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Round {
        t: row.t,
        y: row.y,
        forecasts,
        clipped_from: row.clipped_from,
    })
}

/// Open a forecast CSV as a stream of rounds plus its expert count.
pub fn csv_rounds(
    path: &Path,
    domain: GridDomain,
    lenient: bool,
) -> Result<(usize, impl Iterator<Item = Result<Round>>)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let reader = ForecastReader::new(BufReader::new(file), domain, lenient)
        .with_context(|| format!("reading {}", path.display()))?;
    let experts = reader.experts();
    let display = path.display().to_string();
    let rounds = reader.map(move |row| {
        let row = row.with_context(|| display.clone())?;
        round_from_row(&row, &domain)
    });
    Ok((experts, rounds))
}

/// Outcomes and the fixed expert pool of a synthetic scenario.
pub fn synthetic_rounds(scenario: &MixtureScenario, domain: &GridDomain) -> Result<Vec<Round>> {
    let sched = schedule(scenario);
    let outcomes = sample_sequence(scenario, &sched, domain)?;
    let pool = build_expert_pool(scenario, domain)?;
    let forecasts = expert_round(&pool);
    Ok(outcomes
        .into_iter()
        .enumerate()
        .map(|(i, y)| Round {
            t: i as u64 + 1,
            y,
            forecasts: forecasts.clone(),
            clipped_from: None,
        })
        .collect())
}
