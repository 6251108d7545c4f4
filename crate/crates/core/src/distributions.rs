//! Probability distribution functions on a bounded interval `[a, b]`.
//!
//! Forecasts are represented on a uniform grid `z_s = a + s * delta`,
//! `s = 0..=d`, storing the CDF value at the right endpoint of each cell.
//! The CRPS of a grid forecast against an outcome `y` is
//!
//! ```text
//! delta * sum_{s=1..d} (f_s - 1{z_s >= y})^2
//! ```
//!
//! which is the loss the aggregation rules are exactly mixable for.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Slack allowed on CDF values before clamping into a valid CDF.
pub const CLAMP_TOLERANCE: f64 = 1e-9;

/// Minimum untruncated mass a Gaussian component must place on `[a, b]`.
pub const MIN_COMPONENT_MASS: f64 = 1e-6;

/// Default number of grid cells.
pub const DEFAULT_GRID: usize = 1024;

/// Interval `[a, b]` split into `d` equal cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDomain", into = "RawDomain")]
pub struct GridDomain {
    a: f64,
    b: f64,
    cells: usize,
    delta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawDomain {
    a: f64,
    b: f64,
    d: usize,
}

impl TryFrom<RawDomain> for GridDomain {
    type Error = Error;

    fn try_from(raw: RawDomain) -> Result<Self> {
        GridDomain::new(raw.a, raw.b, raw.d)
    }
}

impl From<GridDomain> for RawDomain {
    fn from(domain: GridDomain) -> Self {
        RawDomain {
            a: domain.a,
            b: domain.b,
            d: domain.cells,
        }
    }
}

impl GridDomain {
    pub fn new(a: f64, b: f64, cells: usize) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidDomain(format!(
                "non-finite endpoint [{a}, {b}]"
            )));
        }
        if a >= b {
            return Err(Error::InvalidDomain(format!("need a < b, got [{a}, {b}]")));
        }
        if cells < 2 {
            return Err(Error::InvalidDomain(format!("need d >= 2, got {cells}")));
        }
        Ok(Self {
            a,
            b,
            cells,
            delta: (b - a) / cells as f64,
        })
    }

    pub fn unit(cells: usize) -> Result<Self> {
        Self::new(0.0, 1.0, cells)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    /// Number of cells `d`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Grid point `z_s`; `z_0 = a` and `z_d = b` exactly.
    pub fn point(&self, s: usize) -> f64 {
        debug_assert!(s <= self.cells);
        if s == self.cells {
            self.b
        } else {
            self.a + s as f64 * self.delta
        }
    }

    /// Right endpoints `z_1..=z_d`.
    pub fn right_points(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.cells).map(move |s| self.point(s))
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.a && y <= self.b
    }

    /// Same grid with a different number of cells.
    pub fn with_cells(&self, cells: usize) -> Result<Self> {
        Self::new(self.a, self.b, cells)
    }
}

/// Observed outcome, guaranteed to lie in the domain it was checked against.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Outcome(f64);

impl Outcome {
    pub fn new(y: f64, domain: &GridDomain) -> Result<Self> {
        if !y.is_finite() || !domain.contains(y) {
            return Err(Error::OutcomeOutOfRange {
                y,
                a: domain.a,
                b: domain.b,
            });
        }
        Ok(Self(y))
    }

    /// Clip into `[a, b]`, returning whether clipping happened.
    pub fn clipped(y: f64, domain: &GridDomain) -> Result<(Self, bool)> {
        if !y.is_finite() {
            return Err(Error::OutcomeOutOfRange {
                y,
                a: domain.a,
                b: domain.b,
            });
        }
        let c = y.clamp(domain.a, domain.b);
        Ok((Self(c), c != y))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Piecewise-constant CDF: `values[s - 1] = F(z_s)` for `s = 1..=d`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCdf {
    domain: GridDomain,
    values: Vec<f64>,
}

impl GridCdf {
    /// Validate and clamp raw values into a CDF.
    pub fn new(domain: GridDomain, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.cells {
            return Err(Error::InvalidCdf(format!(
                "expected {} values, got {}",
                domain.cells,
                values.len()
            )));
        }
        monotone_clamp(&mut values)?;
        Ok(Self { domain, values })
    }

    /// The uniform distribution on `[a, b]`.
    pub fn uniform(domain: GridDomain) -> Self {
        let d = domain.cells as f64;
        let mut values: Vec<f64> = (1..=domain.cells).map(|s| s as f64 / d).collect();
        values[domain.cells - 1] = 1.0;
        Self { domain, values }
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Finite-difference density on each cell; `sum(density) * delta == 1`.
    pub fn density(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.values
            .iter()
            .map(|&f| {
                let p = (f - prev) / self.domain.delta;
                prev = f;
                p
            })
            .collect()
    }
}

/// Running maximum, clip to `[0, 1]` and pin the last value to 1.
///
/// Violations larger than [`CLAMP_TOLERANCE`] are rejected.
pub fn monotone_clamp(values: &mut [f64]) -> Result<()> {
    let Some(&last) = values.last() else {
        return Err(Error::InvalidCdf("empty".into()));
    };
    let mut running = f64::NEG_INFINITY;
    for (s, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidCdf(format!(
                "non-finite value at cell {}",
                s + 1
            )));
        }
        if !(-CLAMP_TOLERANCE..=1.0 + CLAMP_TOLERANCE).contains(&v) {
            return Err(Error::InvalidCdf(format!(
                "value {v} at cell {} outside [0, 1]",
                s + 1
            )));
        }
        if v < running - CLAMP_TOLERANCE {
            return Err(Error::InvalidCdf(format!(
                "decrease of {} at cell {}",
                running - v,
                s + 1
            )));
        }
        running = running.max(v);
    }
    if (last - 1.0).abs() > CLAMP_TOLERANCE {
        return Err(Error::InvalidCdf(format!("final value {last} is not 1")));
    }
    let mut running = 0.0f64;
    for v in values.iter_mut() {
        running = running.max(*v);
        *v = running.min(1.0);
    }
    if let Some(v) = values.last_mut() {
        *v = 1.0;
    }
    Ok(())
}

/// One Gaussian component of a mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

impl GaussianComponent {
    fn cdf(&self, u: f64) -> f64 {
        0.5 * erfc(-(u - self.mean) / (self.std * std::f64::consts::SQRT_2))
    }
}

/// Gaussian mixture truncated and renormalized to `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture", into = "RawMixture")]
pub struct GaussianMixture {
    components: Vec<GaussianComponent>,
    lower: f64,
    upper: f64,
    cdf_lower: f64,
    mass: f64,
}

#[derive(Serialize, Deserialize)]
struct RawMixture {
    components: Vec<GaussianComponent>,
    lower: f64,
    upper: f64,
}

impl TryFrom<RawMixture> for GaussianMixture {
    type Error = Error;

    fn try_from(raw: RawMixture) -> Result<Self> {
        GaussianMixture::new(raw.components, raw.lower, raw.upper)
    }
}

impl From<GaussianMixture> for RawMixture {
    fn from(m: GaussianMixture) -> Self {
        RawMixture {
            components: m.components,
            lower: m.lower,
            upper: m.upper,
        }
    }
}

impl GaussianMixture {
    /// Weights must sum to 1 (within 1e-6; they are renormalized exactly).
    pub fn new(mut components: Vec<GaussianComponent>, lower: f64, upper: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDistribution(
                "mixture has no components".into(),
            ));
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidDistribution(format!(
                "bad truncation interval [{lower}, {upper}]"
            )));
        }
        let mut total = 0.0;
        for c in &components {
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "bad weight {}",
                    c.weight
                )));
            }
            if !c.mean.is_finite() {
                return Err(Error::InvalidDistribution(format!("bad mean {}", c.mean)));
            }
            if !(c.std.is_finite() && c.std > 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "std must be > 0, got {}",
                    c.std
                )));
            }
            let inside = c.cdf(upper) - c.cdf(lower);
            if inside < MIN_COMPONENT_MASS {
                return Err(Error::InvalidDistribution(format!(
                    "component (mean {}, std {}) has mass {inside:e} on [{lower}, {upper}]",
                    c.mean, c.std
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, not 1"
            )));
        }
        for c in &mut components {
            c.weight /= total;
        }
        let mixture_cdf = |u: f64| components.iter().map(|c| c.weight * c.cdf(u)).sum::<f64>();
        let cdf_lower = mixture_cdf(lower);
        let mass = mixture_cdf(upper) - cdf_lower;
        Ok(Self {
            components,
            lower,
            upper,
            cdf_lower,
            mass,
        })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    fn cdf(&self, u: f64) -> f64 {
        if u <= self.lower {
            return 0.0;
        }
        if u >= self.upper {
            return 1.0;
        }
        let raw: f64 = self.components.iter().map(|c| c.weight * c.cdf(u)).sum();
        ((raw - self.cdf_lower) / self.mass).clamp(0.0, 1.0)
    }
}

/// Closed-form forecast families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParametricDistribution {
    PointMass { location: f64 },
    Uniform { left: f64, right: f64 },
    Triangular { left: f64, peak: f64, right: f64 },
    Gmm(GaussianMixture),
}

impl ParametricDistribution {
    pub fn point_mass(location: f64) -> Result<Self> {
        if !location.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "bad location {location}"
            )));
        }
        Ok(Self::PointMass { location })
    }

    pub fn uniform(left: f64, right: f64) -> Result<Self> {
        if !(left.is_finite() && right.is_finite() && left < right) {
            return Err(Error::InvalidDistribution(format!(
                "uniform needs l < r, got [{left}, {right}]"
            )));
        }
        Ok(Self::Uniform { left, right })
    }

    pub fn triangular(left: f64, peak: f64, right: f64) -> Result<Self> {
        let finite = left.is_finite() && peak.is_finite() && right.is_finite();
        if !(finite && left <= peak && peak <= right && left < right) {
            return Err(Error::InvalidDistribution(format!(
                "triangular needs l <= c <= r and l < r, got ({left}, {peak}, {right})"
            )));
        }
        Ok(Self::Triangular { left, peak, right })
    }

    pub fn gaussian_mixture(
        components: Vec<GaussianComponent>,
        domain: &GridDomain,
    ) -> Result<Self> {
        Ok(Self::Gmm(GaussianMixture::new(
            components, domain.a, domain.b,
        )?))
    }

    /// Check that the support fits inside the domain.
    pub fn validate(&self, domain: &GridDomain) -> Result<()> {
        let inside = |x: f64| domain.contains(x);
        let ok = match self {
            Self::PointMass { location } => inside(*location),
            Self::Uniform { left, right } => inside(*left) && inside(*right),
            Self::Triangular { left, right, .. } => inside(*left) && inside(*right),
            Self::Gmm(m) => m.lower == domain.a && m.upper == domain.b,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidDistribution(format!(
                "{} support outside [{}, {}]",
                self.kind(),
                domain.a,
                domain.b
            )))
        }
    }

    /// CDF value `F(u)`.
    pub fn eval_cdf(&self, u: f64) -> f64 {
        match self {
            Self::PointMass { location } => {
                if u >= *location {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Uniform { left, right } => ((u - left) / (right - left)).clamp(0.0, 1.0),
            Self::Triangular { left, peak, right } => triangular_cdf(*left, *peak, *right, u),
            Self::Gmm(m) => m.cdf(u),
        }
    }

    /// Short tag used by the forecast CSV format.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::PointMass { .. } => "point",
            Self::Uniform { .. } => "uniform",
            Self::Triangular { .. } => "triangular",
            Self::Gmm(_) => "gmm",
        }
    }

    /// Flat parameter list matching [`ParametricDistribution::kind`].
    pub fn params(&self) -> Vec<f64> {
        match self {
            Self::PointMass { location } => vec![*location],
            Self::Uniform { left, right } => vec![*left, *right],
            Self::Triangular { left, peak, right } => vec![*left, *peak, *right],
            Self::Gmm(m) => m
                .components
                .iter()
                .flat_map(|c| [c.weight, c.mean, c.std])
                .collect(),
        }
    }

    /// Inverse of [`kind`](Self::kind)/[`params`](Self::params), validated against `domain`.
    pub fn from_kind_params(kind: &str, params: &[f64], domain: &GridDomain) -> Result<Self> {
        let arity = |n: usize| {
            if params.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidDistribution(format!(
                    "{kind} takes {n} parameters, got {}",
                    params.len()
                )))
            }
        };
        let dist = match kind.trim().to_ascii_lowercase().as_str() {
            "point" | "point_mass" => {
                arity(1)?;
                Self::point_mass(params[0])?
            }
            "uniform" => {
                arity(2)?;
                Self::uniform(params[0], params[1])?
            }
            "triangular" => {
                arity(3)?;
                Self::triangular(params[0], params[1], params[2])?
            }
            "gmm" | "gaussian_mixture" => {
                if params.is_empty() || !params.len().is_multiple_of(3) {
                    return Err(Error::InvalidDistribution(format!(
                        "gmm takes weight;mean;std triples, got {} values",
                        params.len()
                    )));
                }
                let components = params
                    .chunks_exact(3)
                    .map(|c| GaussianComponent {
                        weight: c[0],
                        mean: c[1],
                        std: c[2],
                    })
                    .collect();
                Self::gaussian_mixture(components, domain)?
            }
            other => {
                return Err(Error::InvalidDistribution(format!(
                    "unknown kind {other:?}"
                )));
            }
        };
        dist.validate(domain)?;
        Ok(dist)
    }

    /// Inverse CDF for a uniform draw `p` in `[0, 1)`. Not defined for mixtures.
    pub fn quantile(&self, p: f64) -> Option<f64> {
        match self {
            Self::PointMass { location } => Some(*location),
            Self::Uniform { left, right } => Some(left + p * (right - left)),
            Self::Triangular { left, peak, right } => {
                Some(triangular_quantile(*left, *peak, *right, p))
            }
            Self::Gmm(_) => None,
        }
    }
}

fn triangular_cdf(l: f64, c: f64, r: f64, u: f64) -> f64 {
    if u <= l {
        0.0
    } else if u >= r {
        1.0
    } else if u <= c {
        (u - l) * (u - l) / ((r - l) * (c - l))
    } else {
        1.0 - (r - u) * (r - u) / ((r - l) * (r - c))
    }
}

fn triangular_quantile(l: f64, c: f64, r: f64, p: f64) -> f64 {
    let split = (c - l) / (r - l);
    if p < split {
        l + (p * (r - l) * (c - l)).sqrt()
    } else {
        r - ((1.0 - p) * (r - l) * (r - c)).sqrt()
    }
}

/// Convenience wrapper for [`ParametricDistribution::eval_cdf`].
pub fn eval_cdf(dist: &ParametricDistribution, u: f64) -> f64 {
    dist.eval_cdf(u)
}

/// Sample the CDF at `z_1..=z_d`, pin `f_d = 1` and clamp.
pub fn discretize(dist: &ParametricDistribution, domain: &GridDomain) -> Result<GridCdf> {
    dist.validate(domain)?;
    let mut values: Vec<f64> = domain.right_points().map(|z| dist.eval_cdf(z)).collect();
    values[domain.cells - 1] = 1.0;
    GridCdf::new(*domain, values)
}

/// `1{z_s >= y}` for `s = 1..=d`.
pub fn heaviside_grid(y: Outcome, domain: &GridDomain) -> Vec<bool> {
    domain.right_points().map(|z| z >= y.0).collect()
}

/// Grid CRPS `delta * sum (f_s - 1{z_s >= y})^2`, summed in ascending `s`.
pub fn crps(cdf: &GridCdf, y: Outcome) -> Result<f64> {
    let domain = &cdf.domain;
    if !domain.contains(y.0) {
        return Err(Error::DomainMismatch);
    }
    let mut sum = 0.0;
    for (s, &f) in cdf.values.iter().enumerate() {
        let step = if domain.point(s + 1) >= y.0 { 1.0 } else { 0.0 };
        let diff = f - step;
        sum += diff * diff;
    }
    Ok(domain.delta * sum)
}

/// CRPS of `dist` discretized on `domain` refined to `fine_cells` cells.
pub fn crps_refined(
    dist: &ParametricDistribution,
    y: Outcome,
    domain: &GridDomain,
    fine_cells: usize,
) -> Result<f64> {
    let fine = domain.with_cells(fine_cells)?;
    crps(&discretize(dist, &fine)?, y)
}
