//! Per-round loss bookkeeping and regret bounds.

use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregatorConfig, Rule};
use crate::error::{Error, Result};

/// Absolute slack used when comparing regrets to the theoretical bound.
pub const BOUND_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    pub outcome: f64,
    pub learner_loss: f64,
    pub expert_losses: Vec<f64>,
    pub confidences: Vec<f64>,
    /// Normalized (confidence-adjusted) weights the forecast was built with.
    pub weights: Vec<f64>,
}

/// Configuration captured alongside a ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerConfig {
    pub experts: usize,
    pub eta: f64,
    pub rule: Rule,
    pub alpha: f64,
}

impl From<&AggregatorConfig> for LedgerConfig {
    fn from(c: &AggregatorConfig) -> Self {
        Self {
            experts: c.experts(),
            eta: c.eta(),
            rule: c.rule(),
            alpha: c.alpha(),
        }
    }
}

/// Append-only record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    config: LedgerConfig,
    rounds: Vec<RoundRecord>,
}

impl RegretLedger {
    pub fn new(config: LedgerConfig) -> Self {
        Self {
            config,
            rounds: Vec::new(),
        }
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Append a round; its index must follow the previous one.
    pub fn push(&mut self, record: RoundRecord) -> Result<()> {
        let expected = self.rounds.len() as u64 + 1;
        if record.t != expected {
            return Err(Error::RoundMismatch {
                prediction: record.t,
                state: expected,
            });
        }
        let n = self.config.experts;
        for len in [
            record.expert_losses.len(),
            record.confidences.len(),
            record.weights.len(),
        ] {
            if len != n {
                return Err(Error::ExpertCountMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        self.rounds.push(record);
        Ok(())
    }

    fn check(&self, expert: usize) -> Result<()> {
        if self.rounds.is_empty() {
            return Err(Error::EmptyLedger);
        }
        if expert >= self.config.experts {
            return Err(Error::UnknownExpert(expert));
        }
        Ok(())
    }

    /// Learner's cumulative loss `H_T`.
    pub fn learner_loss(&self) -> f64 {
        self.rounds.iter().map(|r| r.learner_loss).sum()
    }

    /// Expert's cumulative loss `L^i_T` (0-based expert index).
    pub fn expert_loss(&self, expert: usize) -> Result<f64> {
        self.check(expert)?;
        Ok(self.rounds.iter().map(|r| r.expert_losses[expert]).sum())
    }

    /// `sum_t (h_t - l_{i,t})`.
    pub fn cumulative_regret(&self, expert: usize) -> Result<f64> {
        Ok(*self
            .cumulative_regret_curve(expert)?
            .last()
            .expect("non-empty"))
    }

    /// `sum_t p_{i,t} (h_t - l_{i,t})`.
    pub fn discounted_regret(&self, expert: usize) -> Result<f64> {
        Ok(*self
            .discounted_regret_curve(expert)?
            .last()
            .expect("non-empty"))
    }

    /// Prefix sums of `h_t - l_{i,t}`.
    pub fn cumulative_regret_curve(&self, expert: usize) -> Result<Vec<f64>> {
        self.check(expert)?;
        Ok(prefix_sums(
            self.rounds
                .iter()
                .map(|r| r.learner_loss - r.expert_losses[expert]),
        ))
    }

    /// Prefix sums of `p_{i,t} (h_t - l_{i,t})`.
    pub fn discounted_regret_curve(&self, expert: usize) -> Result<Vec<f64>> {
        self.check(expert)?;
        Ok(prefix_sums(self.rounds.iter().map(|r| {
            r.confidences[expert] * (r.learner_loss - r.expert_losses[expert])
        })))
    }
}

fn prefix_sums(xs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    xs.map(|x| {
        acc += x;
        acc
    })
    .collect()
}

/// `ln N / eta`: `(b - a)/2 ln N` for AA, `2 (b - a) ln N` for WA.
pub fn theoretical_bound(experts: usize, eta: f64) -> f64 {
    (experts as f64).ln() / eta
}

/// Per-round benchmark `m_t = -(1/eta) ln sum_i u_i e^{-eta lhat_i}` with
/// `lhat_i = p_i l_i + (1 - p_i) h`, where `u` are the plain normalized weights
/// before the update. For an exactly mixable round `h <= m_t`.
pub fn mix_loss(
    prior_weights: &[f64],
    expert_losses: &[f64],
    confidences: &[f64],
    learner_loss: f64,
    eta: f64,
) -> f64 {
    let terms: Vec<f64> = prior_weights
        .iter()
        .zip(expert_losses.iter().zip(confidences))
        .map(|(&u, (&l, &p))| u.ln() - eta * (p * l + (1.0 - p) * learner_loss))
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + terms.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    -lse / eta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Fixed Share runs: numbers are reported against the plain bound, not checked.
    Advisory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Largest prefix discounted regret per expert.
    pub max_prefix_regret: Vec<f64>,
    pub bound: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl BoundReport {
    pub fn worst(&self) -> f64 {
        self.max_prefix_regret
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Compare every prefix discounted regret with `ln N / eta`.
///
/// Ledgers produced with Fixed Share get an advisory verdict.
pub fn bound_report(ledger: &RegretLedger) -> Result<BoundReport> {
    if ledger.is_empty() {
        return Err(Error::EmptyLedger);
    }
    let cfg = ledger.config;
    let bound = theoretical_bound(cfg.experts, cfg.eta);
    let max_prefix_regret = (0..cfg.experts)
        .map(|i| {
            ledger
                .discounted_regret_curve(i)
                .map(|c| c.into_iter().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = if cfg.alpha > 0.0 {
        Verdict::Advisory
    } else if max_prefix_regret
        .iter()
        .all(|&r| r <= bound + BOUND_TOLERANCE)
    {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(BoundReport {
        max_prefix_regret,
        bound,
        tolerance: BOUND_TOLERANCE,
        verdict,
    })
}

/// Like [`bound_report`] but refuses ledgers outside the proven setting.
pub fn verify_bounds(ledger: &RegretLedger) -> Result<BoundReport> {
    if ledger.config.alpha > 0.0 {
        return Err(Error::BoundScope(ledger.config.alpha));
    }
    bound_report(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg(n: usize, rule: Rule, alpha: f64) -> LedgerConfig {
        let eta = match rule {
            Rule::Aa => 2.0,
            Rule::Wa => 0.5,
        };
        LedgerConfig {
            experts: n,
            eta,
            rule,
            alpha,
        }
    }

    fn record(t: u64, h: f64, l: &[f64], p: &[f64]) -> RoundRecord {
        RoundRecord {
            t,
            outcome: 0.5,
            learner_loss: h,
            expert_losses: l.to_vec(),
            confidences: p.to_vec(),
            weights: vec![1.0 / l.len() as f64; l.len()],
        }
    }

    #[test]
    fn regret_examples() {
        let mut ledger = RegretLedger::new(cfg(2, Rule::Aa, 0.0));
        ledger
            .push(record(1, 0.3, &[0.1, 0.3], &[1.0, 1.0]))
            .unwrap();
        assert_abs_diff_eq!(ledger.cumulative_regret(0).unwrap(), 0.2, epsilon = 1e-15);
        assert_eq!(ledger.cumulative_regret(1).unwrap(), 0.0);
        assert_eq!(
            ledger.discounted_regret(0).unwrap(),
            ledger.cumulative_regret(0).unwrap()
        );
    }

    #[test]
    fn sleeping_expert_has_zero_discounted_regret() {
        let mut ledger = RegretLedger::new(cfg(2, Rule::Aa, 0.0));
        for t in 1..=5 {
            ledger
                .push(record(t, 0.4, &[0.1, 0.05], &[1.0, 0.0]))
                .unwrap();
        }
        assert_eq!(ledger.discounted_regret(1).unwrap(), 0.0);
        assert!(ledger.cumulative_regret(1).unwrap() > 0.0);
    }

    #[test]
    fn ledger_errors() {
        let mut ledger = RegretLedger::new(cfg(2, Rule::Aa, 0.0));
        assert_eq!(ledger.cumulative_regret(0), Err(Error::EmptyLedger));
        assert!(ledger
            .push(record(2, 0.1, &[0.1, 0.1], &[1.0, 1.0]))
            .is_err());
        assert!(ledger.push(record(1, 0.1, &[0.1], &[1.0])).is_err());
        ledger
            .push(record(1, 0.1, &[0.1, 0.1], &[1.0, 1.0]))
            .unwrap();
        assert_eq!(ledger.discounted_regret(2), Err(Error::UnknownExpert(2)));
    }

    #[test]
    fn bound_values() {
        assert_eq!(theoretical_bound(1, 2.0), 0.0);
        assert_abs_diff_eq!(theoretical_bound(3, 2.0), 0.549_306_1, epsilon = 1e-7);
        assert_abs_diff_eq!(theoretical_bound(3, 0.5), 2.197_224_6, epsilon = 1e-7);
    }

    #[test]
    fn verify_scope_rules() {
        let mut ledger = RegretLedger::new(cfg(2, Rule::Aa, 0.001));
        ledger
            .push(record(1, 0.3, &[0.1, 0.3], &[1.0, 1.0]))
            .unwrap();
        assert_eq!(verify_bounds(&ledger), Err(Error::BoundScope(0.001)));
        assert_eq!(bound_report(&ledger).unwrap().verdict, Verdict::Advisory);

        let mut single = RegretLedger::new(cfg(1, Rule::Aa, 0.0));
        single.push(record(1, 0.2, &[0.2], &[1.0])).unwrap();
        let report = verify_bounds(&single).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
        assert_eq!(report.bound, 0.0);

        let mut bad = RegretLedger::new(cfg(2, Rule::Aa, 0.0));
        bad.push(record(1, 1.0, &[0.0, 1.0], &[1.0, 1.0])).unwrap();
        assert_eq!(verify_bounds(&bad).unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn prefix_maximum_is_reported() {
        let mut ledger = RegretLedger::new(cfg(2, Rule::Aa, 0.0));
        ledger
            .push(record(1, 0.5, &[0.1, 0.5], &[1.0, 1.0]))
            .unwrap();
        ledger
            .push(record(2, 0.1, &[0.5, 0.1], &[1.0, 1.0]))
            .unwrap();
        let report = bound_report(&ledger).unwrap();
        assert_abs_diff_eq!(report.max_prefix_regret[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(ledger.cumulative_regret(0).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn mix_loss_single_expert_equals_its_loss() {
        assert_abs_diff_eq!(
            mix_loss(&[1.0], &[0.3], &[1.0], 0.9, 2.0),
            0.3,
            epsilon = 1e-15
        );
        // sleeping: the virtual expert suffers the learner's loss
        assert_abs_diff_eq!(
            mix_loss(&[1.0], &[0.3], &[0.0], 0.9, 2.0),
            0.9,
            epsilon = 1e-15
        );
    }
}
