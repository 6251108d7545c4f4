//! Online aggregation of expert CDF forecasts.
//!
//! One round runs in two halves:
//!
//! 1. [`step`] turns the current weights and the experts' confidences into
//!    normalized weights `w*_i = p_i w_i / sum_j p_j w_j` and combines the
//!    forecasts with either the AA substitution rule or the weighted average.
//! 2. [`observe`] scores everyone on the outcome, applies the loss update
//!    `log w_i -= eta * (p_i * l_i + (1 - p_i) * h)` and, when `alpha > 0`,
//!    the Fixed Share mix with the uniform distribution.
//!
//! Weights are kept as unnormalized logs; they are renormalized (log-sum-exp
//! shifted) after every update so they never drift out of range.

use serde::{Deserialize, Serialize};

use crate::distributions::{crps, GridCdf, GridDomain, Outcome};
use crate::error::{Error, Result};

/// Fixed Share parameter used in the reference experiments.
pub const DEFAULT_ALPHA: f64 = 0.001;

/// How the learner's forecast is built from the experts'.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    /// Aggregating Algorithm with the CRPS substitution rule, `eta = 2 / (b - a)`.
    Aa,
    /// Weighted average of CDFs, `eta = 1 / (2 (b - a))`.
    Wa,
}

impl Rule {
    pub fn learning_rate(self, domain: &GridDomain) -> f64 {
        match self {
            Rule::Aa => 2.0 / domain.width(),
            Rule::Wa => 1.0 / (2.0 * domain.width()),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Aa => "aa",
            Rule::Wa => "wa",
        }
    }
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aa" => Ok(Rule::Aa),
            "wa" => Ok(Rule::Wa),
            other => Err(Error::InvalidConfig(format!("unknown rule {other:?}"))),
        }
    }
}

/// What to do when every expert has zero confidence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AsleepPolicy {
    /// Repeat the previous learner CDF (uniform on the first round) and skip
    /// the weight update.
    #[default]
    Fallback,
    /// Surface [`Error::AllExpertsAsleep`].
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorConfig {
    rule: Rule,
    domain: GridDomain,
    experts: usize,
    alpha: f64,
    confidence_enabled: bool,
    asleep_policy: AsleepPolicy,
}

impl AggregatorConfig {
    pub fn new(rule: Rule, domain: GridDomain, experts: usize) -> Result<Self> {
        if experts == 0 {
            return Err(Error::InvalidConfig("need at least one expert".into()));
        }
        Ok(Self {
            rule,
            domain,
            experts,
            alpha: 0.0,
            confidence_enabled: false,
            asleep_policy: AsleepPolicy::default(),
        })
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha {alpha} outside [0, 1]"
            )));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn with_confidence(mut self, enabled: bool) -> Self {
        self.confidence_enabled = enabled;
        self
    }

    pub fn with_asleep_policy(mut self, policy: AsleepPolicy) -> Self {
        self.asleep_policy = policy;
        self
    }

    pub fn rule(&self) -> Rule {
        self.rule
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn experts(&self) -> usize {
        self.experts
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn confidence_enabled(&self) -> bool {
        self.confidence_enabled
    }

    pub fn asleep_policy(&self) -> AsleepPolicy {
        self.asleep_policy
    }

    pub fn eta(&self) -> f64 {
        self.rule.learning_rate(&self.domain)
    }
}

/// Log-weights of the experts plus the index of the next round (from 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorState {
    log_weights: Vec<f64>,
    round: u64,
}

impl AggregatorState {
    /// Uniform prior `w_i = 1/N` at round 1.
    pub fn new(experts: usize) -> Self {
        let lw = -(experts as f64).ln();
        Self {
            log_weights: vec![lw; experts],
            round: 1,
        }
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Plain normalized weights `w_i / sum_j w_j`.
    pub fn weights(&self) -> Vec<f64> {
        softmax(self.log_weights.iter().copied()).expect("log-weights are finite")
    }
}

/// One expert's contribution to a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertForecast {
    pub cdf: GridCdf,
    pub confidence: f64,
}

impl ExpertForecast {
    pub fn new(cdf: GridCdf, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidConfidence(confidence));
        }
        Ok(Self { cdf, confidence })
    }

    /// Fully confident forecast.
    pub fn awake(cdf: GridCdf) -> Self {
        Self {
            cdf,
            confidence: 1.0,
        }
    }
}

/// Normalize `exp(x_i)` with a max shift. `None` if every entry is `-inf`.
fn softmax(xs: impl Iterator<Item = f64> + Clone) -> Option<Vec<f64>> {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let unnorm: Vec<f64> = xs.map(|x| (x - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    Some(unnorm.into_iter().map(|u| u / total).collect())
}

/// `ln sum_i exp(x_i)`; `-inf` on an empty or all `-inf` input.
fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Confidence-adjusted normalized weights `w*_i = p_i w_i / sum_j p_j w_j`.
pub fn normalized_weights(state: &AggregatorState, confidences: &[f64]) -> Result<Vec<f64>> {
    if confidences.len() != state.log_weights.len() {
        return Err(Error::ExpertCountMismatch {
            expected: state.log_weights.len(),
            actual: confidences.len(),
        });
    }
    for &p in confidences {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidConfidence(p));
        }
    }
    let shifted = state
        .log_weights
        .iter()
        .zip(confidences)
        .map(|(&lw, &p)| lw + p.ln());
    softmax(shifted).ok_or(Error::AllExpertsAsleep)
}

fn check_inputs(forecasts: &[&GridCdf], q: &[f64]) -> Result<GridDomain> {
    let Some(first) = forecasts.first() else {
        return Err(Error::ExpertCountMismatch {
            expected: q.len(),
            actual: 0,
        });
    };
    if forecasts.len() != q.len() {
        return Err(Error::ExpertCountMismatch {
            expected: q.len(),
            actual: forecasts.len(),
        });
    }
    let domain = *first.domain();
    if forecasts.iter().any(|f| f.domain() != &domain) {
        return Err(Error::DomainMismatch);
    }
    Ok(domain)
}

/// AA substitution rule, pointwise
///
/// ```text
/// f_s = 1/2 - 1/4 ln( sum_i q_i e^{-2 f_{i,s}^2} / sum_i q_i e^{-2 (1 - f_{i,s})^2} )
/// ```
///
/// The constant 2 is the square-loss mixability constant and does not depend
/// on the domain width.
pub fn substitute_aa(forecasts: &[&GridCdf], q: &[f64]) -> Result<GridCdf> {
    let domain = check_inputs(forecasts, q)?;
    let log_q: Vec<f64> = q.iter().map(|w| w.ln()).collect();
    let mut zero_terms = vec![0.0; q.len()];
    let mut one_terms = vec![0.0; q.len()];
    let values = (0..domain.cells())
        .map(|s| {
            for (i, f) in forecasts.iter().enumerate() {
                let v = f.values()[s];
                zero_terms[i] = log_q[i] - 2.0 * v * v;
                one_terms[i] = log_q[i] - 2.0 * (1.0 - v) * (1.0 - v);
            }
            0.5 - 0.25 * (log_sum_exp(&zero_terms) - log_sum_exp(&one_terms))
        })
        .collect();
    GridCdf::new(domain, values)
}

/// Weighted average `sum_i q_i F_i`.
pub fn substitute_wa(forecasts: &[&GridCdf], q: &[f64]) -> Result<GridCdf> {
    let domain = check_inputs(forecasts, q)?;
    let values = (0..domain.cells())
        .map(|s| {
            forecasts
                .iter()
                .zip(q)
                .map(|(f, &w)| w * f.values()[s])
                .sum()
        })
        .collect();
    GridCdf::new(domain, values)
}

/// Dispatch on `rule`.
pub fn substitute(rule: Rule, forecasts: &[&GridCdf], q: &[f64]) -> Result<GridCdf> {
    match rule {
        Rule::Aa => substitute_aa(forecasts, q),
        Rule::Wa => substitute_wa(forecasts, q),
    }
}

/// Learner forecast for one round plus the context [`observe`] needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub round: u64,
    pub learner: GridCdf,
    /// Normalized weights used to build `learner`; all zero on a fallback round.
    pub weights: Vec<f64>,
    /// Confidences as applied (all 1 when confidence is disabled).
    pub confidences: Vec<f64>,
    /// Set when every expert was asleep and the fallback forecast was emitted.
    pub fallback: bool,
}

fn effective_confidences(forecasts: &[ExpertForecast], config: &AggregatorConfig) -> Vec<f64> {
    if config.confidence_enabled {
        forecasts.iter().map(|f| f.confidence).collect()
    } else {
        vec![1.0; forecasts.len()]
    }
}

fn check_round(forecasts: &[ExpertForecast], config: &AggregatorConfig) -> Result<()> {
    if forecasts.len() != config.experts {
        return Err(Error::ExpertCountMismatch {
            expected: config.experts,
            actual: forecasts.len(),
        });
    }
    for f in forecasts {
        if f.cdf.domain() != &config.domain {
            return Err(Error::DomainMismatch);
        }
        if !(0.0..=1.0).contains(&f.confidence) {
            return Err(Error::InvalidConfidence(f.confidence));
        }
    }
    Ok(())
}

/// Present the learner forecast for the current round.
///
/// `previous` is the last emitted learner CDF, used by the asleep fallback.
pub fn step(
    state: &AggregatorState,
    forecasts: &[ExpertForecast],
    config: &AggregatorConfig,
    previous: Option<&GridCdf>,
) -> Result<Prediction> {
    check_round(forecasts, config)?;
    let confidences = effective_confidences(forecasts, config);
    match normalized_weights(state, &confidences) {
        Ok(weights) => {
            let cdfs: Vec<&GridCdf> = forecasts.iter().map(|f| &f.cdf).collect();
            let learner = substitute(config.rule, &cdfs, &weights)?;
            Ok(Prediction {
                round: state.round,
                learner,
                weights,
                confidences,
                fallback: false,
            })
        }
        Err(Error::AllExpertsAsleep) if config.asleep_policy == AsleepPolicy::Fallback => {
            let learner = previous
                .cloned()
                .unwrap_or_else(|| GridCdf::uniform(config.domain));
            Ok(Prediction {
                round: state.round,
                learner,
                weights: vec![0.0; config.experts],
                confidences,
                fallback: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// Loss update `log w_i -= eta * (p_i l_i + (1 - p_i) h)`.
///
/// With confidence disabled this is the plain update `log w_i -= eta * l_i`.
pub fn update_weights(
    state: &AggregatorState,
    expert_losses: &[f64],
    learner_loss: f64,
    confidences: &[f64],
    config: &AggregatorConfig,
) -> Result<AggregatorState> {
    let n = state.log_weights.len();
    if expert_losses.len() != n || confidences.len() != n {
        return Err(Error::ExpertCountMismatch {
            expected: n,
            actual: expert_losses.len().min(confidences.len()),
        });
    }
    let eta = config.eta();
    let mut log_weights: Vec<f64> = if config.confidence_enabled {
        state
            .log_weights
            .iter()
            .zip(expert_losses.iter().zip(confidences))
            .map(|(&lw, (&l, &p))| lw - eta * (p * l + (1.0 - p) * learner_loss))
            .collect()
    } else {
        state
            .log_weights
            .iter()
            .zip(expert_losses)
            .map(|(&lw, &l)| lw - eta * l)
            .collect()
    };
    let total = log_sum_exp(&log_weights);
    for lw in &mut log_weights {
        *lw -= total;
    }
    Ok(AggregatorState {
        log_weights,
        round: state.round + 1,
    })
}

/// Fixed Share: `w_i <- alpha / N + (1 - alpha) w_i` on normalized weights.
pub fn fixed_share(state: &AggregatorState, alpha: f64) -> AggregatorState {
    if alpha == 0.0 {
        return state.clone();
    }
    let n = state.log_weights.len() as f64;
    let log_weights = state
        .weights()
        .into_iter()
        .map(|w| (alpha / n + (1.0 - alpha) * w).ln())
        .collect();
    AggregatorState {
        log_weights,
        round: state.round,
    }
}

/// Losses suffered in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLosses {
    pub learner: f64,
    pub experts: Vec<f64>,
}

/// Score the round and move the state forward.
///
/// Fallback rounds keep the weights and only advance the round counter.
pub fn observe(
    state: &AggregatorState,
    prediction: &Prediction,
    forecasts: &[ExpertForecast],
    y: Outcome,
    config: &AggregatorConfig,
) -> Result<(AggregatorState, RoundLosses)> {
    if prediction.round != state.round {
        return Err(Error::RoundMismatch {
            prediction: prediction.round,
            state: state.round,
        });
    }
    check_round(forecasts, config)?;
    if !config.domain.contains(y.value()) {
        return Err(Error::OutcomeOutOfRange {
            y: y.value(),
            a: config.domain.a(),
            b: config.domain.b(),
        });
    }
    let learner = crps(&prediction.learner, y)?;
    let experts = forecasts
        .iter()
        .map(|f| crps(&f.cdf, y))
        .collect::<Result<Vec<_>>>()?;
    let next = if prediction.fallback {
        AggregatorState {
            log_weights: state.log_weights.clone(),
            round: state.round + 1,
        }
    } else {
        let updated = update_weights(state, &experts, learner, &prediction.confidences, config)?;
        fixed_share(&updated, config.alpha)
    };
    Ok((next, RoundLosses { learner, experts }))
}

/// Outcome of a mixability check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixabilityCheck {
    pub passed: bool,
    /// `ln LHS - ln RHS`; non-negative when the inequality holds.
    pub slack: f64,
}

/// Slack allowed by [`superprediction_check`].
pub const MIXABILITY_TOLERANCE: f64 = 1e-9;

/// Check `e^{-eta CRPS(F, y)} >= sum_i q_i e^{-eta CRPS(F_i, y)}` at one outcome.
pub fn superprediction_check(
    learner: &GridCdf,
    forecasts: &[&GridCdf],
    q: &[f64],
    y: Outcome,
    eta: f64,
) -> Result<MixabilityCheck> {
    check_inputs(forecasts, q)?;
    let lhs = -eta * crps(learner, y)?;
    let terms = forecasts
        .iter()
        .zip(q)
        .map(|(f, &w)| Ok(w.ln() - eta * crps(f, y)?))
        .collect::<Result<Vec<_>>>()?;
    let slack = lhs - log_sum_exp(&terms);
    Ok(MixabilityCheck {
        passed: slack >= -MIXABILITY_TOLERANCE,
        slack,
    })
}

/// Minimum [`superprediction_check`] slack over all grid outcomes `z_0..=z_d`.
pub fn worst_case_mixability(
    learner: &GridCdf,
    forecasts: &[&GridCdf],
    q: &[f64],
    eta: f64,
) -> Result<MixabilityCheck> {
    let domain = *learner.domain();
    let mut worst = f64::INFINITY;
    for s in 0..=domain.cells() {
        let y = Outcome::new(domain.point(s), &domain)?;
        worst = worst.min(superprediction_check(learner, forecasts, q, y, eta)?.slack);
    }
    Ok(MixabilityCheck {
        passed: worst >= -MIXABILITY_TOLERANCE,
        slack: worst,
    })
}

/// Stateful driver owning the weights and the last learner forecast.
#[derive(Debug, Clone)]
pub struct Aggregator {
    config: AggregatorConfig,
    state: AggregatorState,
    last_learner: Option<GridCdf>,
}

impl Aggregator {
    pub fn new(config: AggregatorConfig) -> Self {
        let state = AggregatorState::new(config.experts);
        Self {
            config,
            state,
            last_learner: None,
        }
    }

    pub fn config(&self) -> &AggregatorConfig {
        &self.config
    }

    pub fn state(&self) -> &AggregatorState {
        &self.state
    }

    pub fn predict(&self, forecasts: &[ExpertForecast]) -> Result<Prediction> {
        step(
            &self.state,
            forecasts,
            &self.config,
            self.last_learner.as_ref(),
        )
    }

    pub fn observe(
        &mut self,
        prediction: Prediction,
        forecasts: &[ExpertForecast],
        y: Outcome,
    ) -> Result<RoundLosses> {
        let (next, losses) = observe(&self.state, &prediction, forecasts, y, &self.config)?;
        self.state = next;
        self.last_learner = Some(prediction.learner);
        Ok(losses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{discretize, ParametricDistribution};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit(d: usize) -> GridDomain {
        GridDomain::unit(d).unwrap()
    }

    fn state_from(weights: &[f64]) -> AggregatorState {
        AggregatorState {
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            round: 1,
        }
    }

    /// Two-point CDF with the given value in the first cell.
    fn two_cell(v: f64) -> GridCdf {
        GridCdf::new(unit(2), vec![v, 1.0]).unwrap()
    }

    #[test]
    fn normalized_weight_examples() {
        let s = AggregatorState::new(3);
        for w in normalized_weights(&s, &[1.0, 1.0, 1.0]).unwrap() {
            assert_abs_diff_eq!(w, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_eq!(
            normalized_weights(&s, &[1.0, 0.0, 0.0]).unwrap(),
            vec![1.0, 0.0, 0.0]
        );

        let s = state_from(&[2.0, 1.0, 1.0]);
        for w in normalized_weights(&s, &[0.5, 1.0, 1.0]).unwrap() {
            assert_abs_diff_eq!(w, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn normalized_weights_errors() {
        let s = AggregatorState::new(2);
        assert_eq!(
            normalized_weights(&s, &[0.0, 0.0]),
            Err(Error::AllExpertsAsleep)
        );
        assert!(matches!(
            normalized_weights(&s, &[1.0]),
            Err(Error::ExpertCountMismatch { .. })
        ));
        assert_eq!(
            normalized_weights(&s, &[1.5, 0.0]),
            Err(Error::InvalidConfidence(1.5))
        );
    }

    #[test]
    fn aa_substitution_examples() {
        let f = discretize(
            &ParametricDistribution::triangular(0.1, 0.3, 0.9).unwrap(),
            &unit(64),
        )
        .unwrap();
        let out = substitute_aa(&[&f], &[1.0]).unwrap();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }

        let out = substitute_aa(&[&two_cell(0.3), &two_cell(0.7)], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(out.values()[0], 0.5, epsilon = 1e-15);

        // 1/2 - 1/4 ln((0.7 e^{-0.08} + 0.3 e^{-1.28}) / (0.7 e^{-1.28} + 0.3 e^{-0.08}))
        let out = substitute_aa(&[&two_cell(0.2), &two_cell(0.8)], &[0.7, 0.3]).unwrap();
        assert_abs_diff_eq!(out.values()[0], 0.390_890_539_342_366, epsilon = 1e-12);
    }

    #[test]
    fn wa_substitution_examples() {
        let f = two_cell(0.2);
        assert_eq!(substitute_wa(&[&f], &[1.0]).unwrap(), f);
        let g = two_cell(0.8);
        assert_abs_diff_eq!(
            substitute_wa(&[&f, &g], &[0.5, 0.5]).unwrap().values()[0],
            0.5
        );
        assert_abs_diff_eq!(
            substitute_wa(&[&f, &g], &[0.7, 0.3]).unwrap().values()[0],
            0.38,
            epsilon = 1e-15
        );
    }

    #[test]
    fn substitution_rejects_mismatched_domains() {
        let f = two_cell(0.2);
        let g = GridCdf::uniform(unit(4));
        assert_eq!(
            substitute_aa(&[&f, &g], &[0.5, 0.5]),
            Err(Error::DomainMismatch)
        );
        assert!(substitute_wa(&[&f], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn update_examples() {
        let dom = unit(4);
        let cfg = AggregatorConfig::new(Rule::Aa, dom, 2).unwrap();
        let s = AggregatorState::new(2);
        let next = update_weights(&s, &[0.1, 0.3], 0.2, &[1.0, 1.0], &cfg).unwrap();
        let w = next.weights();
        let (e1, e2) = ((-0.2f64).exp(), (-0.6f64).exp());
        assert_abs_diff_eq!(w[0], e1 / (e1 + e2), epsilon = 1e-15);
        assert_abs_diff_eq!(w[0], 0.5987, epsilon = 1e-4);
        assert_abs_diff_eq!(w[1], 0.4013, epsilon = 1e-4);
        assert_eq!(next.round(), 2);

        // zero loss keeps the weight when nothing else changes
        let next = update_weights(&s, &[0.0, 0.0], 0.0, &[1.0, 1.0], &cfg).unwrap();
        assert_abs_diff_eq!(next.weights()[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn sleeping_expert_shares_learner_factor() {
        let cfg = AggregatorConfig::new(Rule::Aa, unit(4), 3)
            .unwrap()
            .with_confidence(true);
        let s = state_from(&[0.5, 0.3, 0.2]);
        let h = 0.25;
        let next = update_weights(&s, &[0.9, 0.1, 0.7], h, &[0.0, 1.0, 0.0], &cfg).unwrap();
        // experts 0 and 2 both sleep: their ratio is untouched
        let ratio = (next.log_weights[0] - next.log_weights[2]).exp();
        assert_abs_diff_eq!(ratio, 0.5 / 0.2, epsilon = 1e-12);
        // and each was multiplied by e^{-eta h}
        let drop = next.log_weights[0] - next.log_weights[1];
        assert_abs_diff_eq!(
            drop,
            (0.5f64 / 0.3).ln() - 2.0 * h + 2.0 * 0.1,
            epsilon = 1e-12
        );
    }

    #[test]
    fn fixed_share_examples() {
        let s = state_from(&[0.6, 0.3, 0.1]);
        assert_eq!(fixed_share(&s, 0.0), s);
        for w in fixed_share(&s, 1.0).weights() {
            assert_abs_diff_eq!(w, 1.0 / 3.0, epsilon = 1e-15);
        }
        let one_hot = AggregatorState {
            log_weights: vec![0.0, f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
            round: 1,
        };
        let mixed = fixed_share(&one_hot, 0.001).weights();
        let expected = [0.99925, 0.00025, 0.00025, 0.00025];
        for (w, e) in mixed.iter().zip(expected) {
            assert_abs_diff_eq!(*w, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_awake_expert_is_copied() {
        let dom = unit(32);
        let cfg = AggregatorConfig::new(Rule::Aa, dom, 3)
            .unwrap()
            .with_confidence(true);
        let state = AggregatorState::new(3);
        let dists = [
            ParametricDistribution::triangular(0.0, 0.2, 0.5).unwrap(),
            ParametricDistribution::uniform(0.3, 0.9).unwrap(),
            ParametricDistribution::point_mass(0.5).unwrap(),
        ];
        let forecasts: Vec<_> = dists
            .iter()
            .zip([1.0, 0.0, 0.0])
            .map(|(d, p)| ExpertForecast::new(discretize(d, &dom).unwrap(), p).unwrap())
            .collect();
        let pred = step(&state, &forecasts, &cfg, None).unwrap();
        for (a, b) in pred.learner.values().iter().zip(forecasts[0].cdf.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_forecasts_pass_through() {
        let dom = unit(50);
        let f = discretize(
            &ParametricDistribution::triangular(0.2, 0.6, 0.8).unwrap(),
            &dom,
        )
        .unwrap();
        let forecasts = vec![ExpertForecast::awake(f.clone()); 4];
        for rule in [Rule::Aa, Rule::Wa] {
            let cfg = AggregatorConfig::new(rule, dom, 4).unwrap();
            let state = state_from(&[0.1, 0.2, 0.3, 0.4]);
            let pred = step(&state, &forecasts, &cfg, None).unwrap();
            for (a, b) in pred.learner.values().iter().zip(f.values()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn asleep_fallback_and_error() {
        let dom = unit(8);
        let forecasts = vec![ExpertForecast::new(GridCdf::uniform(dom), 0.0).unwrap(); 2];
        let cfg = AggregatorConfig::new(Rule::Aa, dom, 2)
            .unwrap()
            .with_confidence(true);
        let mut agg = Aggregator::new(cfg.clone());
        let pred = agg.predict(&forecasts).unwrap();
        assert!(pred.fallback);
        assert_eq!(pred.learner, GridCdf::uniform(dom));
        let before = agg.state().log_weights().to_vec();
        agg.observe(pred, &forecasts, Outcome::new(0.3, &dom).unwrap())
            .unwrap();
        assert_eq!(agg.state().log_weights(), &before[..]);
        assert_eq!(agg.state().round(), 2);

        let strict = cfg.with_asleep_policy(AsleepPolicy::Error);
        let err = step(&AggregatorState::new(2), &forecasts, &strict, None);
        assert_eq!(err, Err(Error::AllExpertsAsleep));
    }

    #[test]
    fn observe_rejects_stale_prediction() {
        let dom = unit(8);
        let cfg = AggregatorConfig::new(Rule::Wa, dom, 1).unwrap();
        let forecasts = vec![ExpertForecast::awake(GridCdf::uniform(dom))];
        let state = AggregatorState::new(1);
        let pred = step(&state, &forecasts, &cfg, None).unwrap();
        let y = Outcome::new(0.5, &dom).unwrap();
        let (next, _) = observe(&state, &pred, &forecasts, y, &cfg).unwrap();
        assert!(matches!(
            observe(&next, &pred, &forecasts, y, &cfg),
            Err(Error::RoundMismatch {
                prediction: 1,
                state: 2
            })
        ));
    }

    #[test]
    fn step_validates_round_inputs() {
        let dom = unit(8);
        let cfg = AggregatorConfig::new(Rule::Aa, dom, 2).unwrap();
        let state = AggregatorState::new(2);
        let one = vec![ExpertForecast::awake(GridCdf::uniform(dom))];
        assert!(matches!(
            step(&state, &one, &cfg, None),
            Err(Error::ExpertCountMismatch { .. })
        ));
        let wrong = vec![ExpertForecast::awake(GridCdf::uniform(unit(4))); 2];
        assert_eq!(step(&state, &wrong, &cfg, None), Err(Error::DomainMismatch));
        assert_eq!(
            ExpertForecast::new(GridCdf::uniform(dom), -0.1),
            Err(Error::InvalidConfidence(-0.1))
        );
        assert!(AggregatorConfig::new(Rule::Aa, dom, 2)
            .unwrap()
            .with_alpha(1.5)
            .is_err());
        assert!(AggregatorConfig::new(Rule::Aa, dom, 0).is_err());
    }

    #[test]
    fn superprediction_trivial_cases() {
        let dom = unit(16);
        let f = discretize(&ParametricDistribution::uniform(0.2, 0.7).unwrap(), &dom).unwrap();
        let y = Outcome::new(0.4, &dom).unwrap();
        let single = superprediction_check(&f, &[&f], &[1.0], y, 2.0).unwrap();
        assert!(single.slack.abs() <= 1e-12);
        let same = superprediction_check(&f, &[&f, &f, &f], &[0.2, 0.3, 0.5], y, 2.0).unwrap();
        assert!(same.slack.abs() <= 1e-12);
    }

    fn arb_forecasts(d: usize) -> impl Strategy<Value = (Vec<GridCdf>, Vec<f64>)> {
        let cdf = proptest::collection::vec(0.0..1.0f64, d - 1).prop_map(move |mut v| {
            v.sort_by(f64::total_cmp);
            v.push(1.0);
            GridCdf::new(unit(d), v).unwrap()
        });
        (1usize..7).prop_flat_map(move |n| {
            (
                proptest::collection::vec(cdf.clone(), n),
                proptest::collection::vec(0.01..1.0f64, n).prop_map(|w| {
                    let t: f64 = w.iter().sum();
                    w.into_iter().map(|x| x / t).collect::<Vec<_>>()
                }),
            )
        })
    }

    proptest! {
        #[test]
        fn aa_output_nearly_monotone_before_clamp((fs, q) in arb_forecasts(24)) {
            // raw substitution values, recomputed without the clamp
            let refs: Vec<&GridCdf> = fs.iter().collect();
            let raw: Vec<f64> = (0..24).map(|s| {
                let num: f64 = refs.iter().zip(&q).map(|(f, w)| w * (-2.0 * f.values()[s].powi(2)).exp()).sum();
                let den: f64 = refs.iter().zip(&q).map(|(f, w)| w * (-2.0 * (1.0 - f.values()[s]).powi(2)).exp()).sum();
                0.5 - 0.25 * (num / den).ln()
            }).collect();
            prop_assert!(raw.windows(2).all(|w| w[1] >= w[0] - 1e-9));
            prop_assert!(substitute_aa(&refs, &q).is_ok());
        }

        #[test]
        fn wa_within_pointwise_envelope((fs, q) in arb_forecasts(16)) {
            let refs: Vec<&GridCdf> = fs.iter().collect();
            let out = substitute_wa(&refs, &q).unwrap();
            for s in 0..16 {
                let lo = fs.iter().map(|f| f.values()[s]).fold(f64::INFINITY, f64::min);
                let hi = fs.iter().map(|f| f.values()[s]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out.values()[s] >= lo - 1e-12 && out.values()[s] <= hi + 1e-12);
            }
        }

        #[test]
        fn permutation_equivariance((fs, q) in arb_forecasts(16), rot in 0usize..7) {
            let n = fs.len();
            let refs: Vec<&GridCdf> = fs.iter().collect();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let prefs: Vec<&GridCdf> = perm.iter().map(|&i| &fs[i]).collect();
            let pq: Vec<f64> = perm.iter().map(|&i| q[i]).collect();
            for rule in [Rule::Aa, Rule::Wa] {
                let a = substitute(rule, &refs, &q).unwrap();
                let b = substitute(rule, &prefs, &pq).unwrap();
                for (x, y) in a.values().iter().zip(b.values()) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn aa_round_is_mixable((fs, q) in arb_forecasts(12)) {
            let refs: Vec<&GridCdf> = fs.iter().collect();
            let learner = substitute_aa(&refs, &q).unwrap();
            let check = worst_case_mixability(&learner, &refs, &q, 2.0).unwrap();
            prop_assert!(check.passed, "slack {}", check.slack);
        }

        #[test]
        fn fixed_share_keeps_probability_vector(
            w in proptest::collection::vec(0.001..1.0f64, 1..8), alpha in 0.0..=1.0f64,
        ) {
            let s = state_from(&w);
            let out = fixed_share(&s, alpha).weights();
            let n = w.len() as f64;
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(out.iter().all(|&x| x >= alpha / n - 1e-15));
        }
    }
}
