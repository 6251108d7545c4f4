//! Synthetic outcome streams drawn from a time-varying mixture of three
//! triangular distributions, and the matching pool of fixed experts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::ExpertForecast;
use crate::distributions::{discretize, GridCdf, GridDomain, Outcome, ParametricDistribution};
use crate::error::{Error, Result};

/// Name of the generator recorded in run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9)";

pub const DEFAULT_HORIZON: usize = 3000;
pub const DEFAULT_SEGMENTS: usize = 6;

/// How the mixture weights move between segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// One-hot leader per segment, abrupt switches.
    Method1,
    /// Linear cross-fade between the leaders of consecutive segments.
    Method2,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "method1" => Ok(Method::Method1),
            "2" | "method2" => Ok(Method::Method2),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureScenario {
    pub components: [ParametricDistribution; 3],
    pub horizon: usize,
    pub segments: usize,
    pub method: Method,
    pub seed: u64,
}

impl MixtureScenario {
    /// Triangles peaking at 0.25, 0.5 and 0.75 with base width 0.5 on `[a, b]`.
    pub fn default_components(domain: &GridDomain) -> [ParametricDistribution; 3] {
        let at = |x: f64| domain.a() + x * domain.width();
        [0.25, 0.5, 0.75].map(|peak| {
            ParametricDistribution::triangular(at(peak - 0.25), at(peak), at(peak + 0.25))
                .expect("valid triangle")
        })
    }

    pub fn new(domain: &GridDomain, method: Method, seed: u64) -> Self {
        Self {
            components: Self::default_components(domain),
            horizon: DEFAULT_HORIZON,
            segments: DEFAULT_SEGMENTS,
            method,
            seed,
        }
    }

    pub fn validate(&self, domain: &GridDomain) -> Result<()> {
        if self.segments == 0 || self.horizon == 0 || !self.horizon.is_multiple_of(self.segments) {
            return Err(Error::InvalidConfig(format!(
                "horizon {} must be a positive multiple of segments {}",
                self.horizon, self.segments
            )));
        }
        for c in &self.components {
            if !matches!(c, ParametricDistribution::Triangular { .. }) {
                return Err(Error::InvalidConfig(
                    "scenario components must be triangular".into(),
                ));
            }
            c.validate(domain)?;
        }
        Ok(())
    }

    pub fn segment_len(&self) -> usize {
        self.horizon / self.segments
    }

    /// Component leading segment `k`.
    pub fn leader(&self, segment: usize) -> usize {
        segment % 3
    }
}

/// Per-round mixture weights over the three components.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSchedule {
    rows: Vec<[f64; 3]>,
}

impl WeightSchedule {
    pub fn rows(&self) -> &[[f64; 3]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn one_hot(k: usize) -> [f64; 3] {
    let mut row = [0.0; 3];
    row[k] = 1.0;
    row
}

pub fn schedule_method1(scenario: &MixtureScenario) -> WeightSchedule {
    let len = scenario.segment_len();
    let rows = (0..scenario.horizon)
        .map(|t| one_hot(scenario.leader(t / len)))
        .collect();
    WeightSchedule { rows }
}

/// One-hot at each segment centre `k L + floor(L/2)`, linear in between,
/// held constant before the first and after the last centre.
pub fn schedule_method2(scenario: &MixtureScenario) -> WeightSchedule {
    let len = scenario.segment_len();
    let centre = |k: usize| k * len + len / 2;
    let last = scenario.segments - 1;
    let rows = (0..scenario.horizon)
        .map(|t| {
            if t <= centre(0) {
                return one_hot(scenario.leader(0));
            }
            if t >= centre(last) {
                return one_hot(scenario.leader(last));
            }
            let k = (t - centre(0)) / len;
            let frac = (t - centre(k)) as f64 / len as f64;
            let mut row = [0.0; 3];
            row[scenario.leader(k)] += 1.0 - frac;
            row[scenario.leader(k + 1)] += frac;
            row
        })
        .collect();
    WeightSchedule { rows }
}

pub fn schedule(scenario: &MixtureScenario) -> WeightSchedule {
    match scenario.method {
        Method::Method1 => schedule_method1(scenario),
        Method::Method2 => schedule_method2(scenario),
    }
}

/// Draw one outcome per round: component from the schedule row, value by
/// inverse CDF of that triangle.
pub fn sample_sequence(
    scenario: &MixtureScenario,
    schedule: &WeightSchedule,
    domain: &GridDomain,
) -> Result<Vec<Outcome>> {
    scenario.validate(domain)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    schedule
        .rows
        .iter()
        .map(|row| {
            let pick: f64 = rng.random();
            let mut acc = 0.0;
            let mut k = 2;
            for (i, &w) in row.iter().enumerate() {
                acc += w;
                if pick < acc {
                    k = i;
                    break;
                }
            }
            // a trailing zero-weight component must never be chosen
            while row[k] == 0.0 && k > 0 {
                k -= 1;
            }
            let u: f64 = rng.random();
            let y = scenario.components[k].quantile(u).expect("triangular");
            Outcome::new(y.clamp(domain.a(), domain.b()), domain)
        })
        .collect()
}

/// Each expert forecasts one fixed component every round.
pub fn build_expert_pool(scenario: &MixtureScenario, domain: &GridDomain) -> Result<Vec<GridCdf>> {
    scenario.validate(domain)?;
    scenario
        .components
        .iter()
        .map(|c| discretize(c, domain))
        .collect()
}

/// Pool as fully confident round inputs.
pub fn expert_round(pool: &[GridCdf]) -> Vec<ExpertForecast> {
    pool.iter().cloned().map(ExpertForecast::awake).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::crps;

    fn unit() -> GridDomain {
        GridDomain::unit(256).unwrap()
    }

    fn scenario(method: Method, horizon: usize, segments: usize) -> MixtureScenario {
        MixtureScenario {
            horizon,
            segments,
            ..MixtureScenario::new(&unit(), method, 7)
        }
    }

    #[test]
    fn method1_examples() {
        let s = schedule_method1(&scenario(Method::Method1, 3, 3));
        assert_eq!(
            s.rows(),
            &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        );

        let sc = scenario(Method::Method1, 600, 6);
        let s = schedule_method1(&sc);
        for (t, row) in s.rows().iter().enumerate() {
            assert_eq!(row.iter().filter(|&&w| w == 1.0).count(), 1);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
            assert_eq!(row[sc.leader(t / 100)], 1.0);
        }
        // switches only at segment boundaries
        for t in 1..600 {
            let changed = s.rows()[t] != s.rows()[t - 1];
            assert_eq!(changed, t % 100 == 0, "t = {t}");
        }
    }

    #[test]
    fn method2_examples() {
        let sc = scenario(Method::Method2, 600, 6);
        let s = schedule_method2(&sc);
        let len = 100;
        for k in 0..6 {
            assert_eq!(s.rows()[k * len + len / 2], one_hot(sc.leader(k)));
        }
        // halfway between the first two centres
        assert_eq!(s.rows()[len / 2 + len / 2], [0.5, 0.5, 0.0]);
        for (t, row) in s.rows().iter().enumerate() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
            assert!(row.iter().all(|&w| w >= 0.0));
            let inner = t > len / 2 && t < 5 * len + len / 2 && (t - len / 2) % len != 0;
            if inner {
                let mixed = row.iter().filter(|&&w| w > 0.0).count();
                assert_eq!(mixed, 2, "t = {t} row {row:?}");
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_supported() {
        let dom = unit();
        let sc = scenario(Method::Method1, 600, 6);
        let sched = schedule(&sc);
        let a = sample_sequence(&sc, &sched, &dom).unwrap();
        let b = sample_sequence(&sc, &sched, &dom).unwrap();
        assert_eq!(a, b);
        for (t, y) in a.iter().enumerate() {
            let (l, r) = match &sc.components[sc.leader(t / 100)] {
                ParametricDistribution::Triangular { left, right, .. } => (*left, *right),
                _ => unreachable!(),
            };
            assert!(y.value() >= l && y.value() <= r);
        }
        let other = MixtureScenario {
            seed: 8,
            ..sc.clone()
        };
        assert_ne!(sample_sequence(&other, &sched, &dom).unwrap(), a);
    }

    #[test]
    fn empirical_cdf_matches_triangle() {
        let dom = unit();
        let sc = MixtureScenario {
            segments: 1,
            horizon: 100_000,
            ..scenario(Method::Method1, 3, 3)
        };
        let ys = sample_sequence(&sc, &schedule(&sc), &dom).unwrap();
        let mut v: Vec<f64> = ys.iter().map(|y| y.value()).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let tri = &sc.components[0];
        let ks = v
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = tri.eval_cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS distance {ks}");
    }

    #[test]
    fn expert_pool() {
        let dom = unit();
        let sc = scenario(Method::Method1, 600, 6);
        let pool = build_expert_pool(&sc, &dom).unwrap();
        assert_eq!(pool.len(), 3);
        assert!(pool.iter().all(|f| f.values()[255] == 1.0));
        assert_eq!(expert_round(&pool), expert_round(&pool));
    }

    #[test]
    fn leader_has_lowest_mean_loss_per_segment() {
        let dom = unit();
        let sc = scenario(Method::Method1, 3000, 6);
        let ys = sample_sequence(&sc, &schedule(&sc), &dom).unwrap();
        let pool = build_expert_pool(&sc, &dom).unwrap();
        for (k, chunk) in ys.chunks(sc.segment_len()).enumerate() {
            let mean: Vec<f64> = pool
                .iter()
                .map(|f| {
                    chunk.iter().map(|&y| crps(f, y).unwrap()).sum::<f64>() / chunk.len() as f64
                })
                .collect();
            let best = (0..3).min_by(|&a, &b| mean[a].total_cmp(&mean[b])).unwrap();
            assert_eq!(best, sc.leader(k), "segment {k}: {mean:?}");
        }
    }

    #[test]
    fn invalid_scenarios() {
        let dom = unit();
        assert!(scenario(Method::Method1, 100, 3).validate(&dom).is_err());
        let mut sc = scenario(Method::Method1, 90, 3);
        sc.components[0] = ParametricDistribution::uniform(0.0, 1.0).unwrap();
        assert!(sc.validate(&dom).is_err());
    }
}
