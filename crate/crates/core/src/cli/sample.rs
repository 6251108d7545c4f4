//! Demo forecast stream in the style of hourly load forecasting: four
//! specialist experts, each trusted on its own block of hours through a
//! trapezoidal confidence profile.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::distributions::{GaussianComponent, GridDomain, Outcome, ParametricDistribution};
use crate::error::Result;

use super::forecast_csv::{ExpertSpec, ForecastRow};

/// Trapezoidal confidence: 1 within `plateau` of `centre`, falling linearly to
/// 0 at `plateau + ramp`. Distances are taken on a circle of length `period`.
pub fn trapezoid_confidence(x: f64, centre: f64, plateau: f64, ramp: f64, period: f64) -> f64 {
    let raw = (x - centre).rem_euclid(period);
    let dist = raw.min(period - raw);
    if dist <= plateau {
        1.0
    } else if dist >= plateau + ramp {
        0.0
    } else {
        1.0 - (dist - plateau) / ramp
    }
}

const HOURS: f64 = 24.0;
const EXPERTS: usize = 4;

fn daily_profile(hour: f64) -> f64 {
    0.5 + 0.25 * (2.0 * std::f64::consts::PI * (hour - 8.0) / HOURS).sin()
}

/// Deterministic demo stream on `[0, 1]`.
pub fn generate_sample(rows: usize, seed: u64) -> Result<Vec<ForecastRow>> {
    let domain = GridDomain::unit(2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.05).expect("valid normal");
    let drift = Normal::new(0.0, 0.02).expect("valid normal");
    let mut level = 0.0f64;
    (0..rows)
        .map(|i| {
            let hour = (i % 24) as f64;
            level = (0.9 * level + drift.sample(&mut rng)).clamp(-0.1, 0.1);
            let mean = daily_profile(hour) + level;
            let y = (mean + noise.sample(&mut rng)).clamp(0.0, 1.0);
            let experts = (0..EXPERTS)
                .map(|k| {
                    let centre = 6.0 * k as f64 + 3.0;
                    let confidence = trapezoid_confidence(hour, centre, 3.0, 4.0, HOURS);
                    // accurate near its own block, increasingly biased away from it
                    let off = (1.0 - confidence) * if k % 2 == 0 { 0.12 } else { -0.12 };
                    let centre_mean = (daily_profile(hour) + off).clamp(0.05, 0.95);
                    let dist = ParametricDistribution::gaussian_mixture(
                        vec![
                            GaussianComponent {
                                weight: 0.7,
                                mean: centre_mean,
                                std: 0.06,
                            },
                            GaussianComponent {
                                weight: 0.3,
                                mean: (centre_mean + 0.08 * (k as f64 - 1.5)).clamp(0.05, 0.95),
                                std: 0.12,
                            },
                        ],
                        &domain,
                    )?;
                    Ok(ExpertSpec { dist, confidence })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ForecastRow {
                t: i as u64 + 1,
                y: Outcome::new(y, &domain)?,
                clipped_from: None,
                line: i as u64 + 2,
                experts,
            })
        })
        .collect()
}
