//! Online aggregation of probabilistic forecasts under the continuous ranked
//! probability score.
//!
//! Experts publish CDFs on a bounded interval; the learner combines them with
//! the Aggregating Algorithm (AA) substitution rule or a weighted average (WA),
//! optionally discounting experts by per-round confidence and mixing weights
//! with Fixed Share. The [`regret`] module checks cumulative and discounted
//! regret against `ln N / eta`.
//!
//! ```
//! use crpsmix::aggregation::{Aggregator, AggregatorConfig, ExpertForecast, Rule};
//! use crpsmix::distributions::{discretize, GridDomain, Outcome, ParametricDistribution};
//!
//! let domain = GridDomain::unit(256).unwrap();
//! let experts = [
//!     ParametricDistribution::triangular(0.0, 0.25, 0.5).unwrap(),
//!     ParametricDistribution::triangular(0.5, 0.75, 1.0).unwrap(),
//! ];
//! let round: Vec<_> = experts
//!     .iter()
//!     .map(|d| ExpertForecast::awake(discretize(d, &domain).unwrap()))
//!     .collect();
//!
//! let mut agg = Aggregator::new(AggregatorConfig::new(Rule::Aa, domain, 2).unwrap());
//! let prediction = agg.predict(&round).unwrap();
//! let losses = agg.observe(prediction, &round, Outcome::new(0.3, &domain).unwrap()).unwrap();
//! assert!(losses.experts[0] < losses.experts[1]);
//! assert!(agg.state().weights()[0] > 0.5);
//! ```

pub mod aggregation;
pub mod cli;
pub mod distributions;
pub mod error;
pub mod regret;
pub mod synthetic;

pub use error::{Error, Result};
