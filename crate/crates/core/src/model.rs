//! The driven ring: energy landscape, nearest-neighbour transition rates and
//! the backward generator.
//!
//! Sites are labelled `0..n`; site `i` sits at position `i / n` on the unit
//! circle. A jump `i -> i+1` is clockwise, `i -> i-1` counter-clockwise, with
//! all index arithmetic taken modulo `n`.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative tolerance on singular values used for every numerical rank in
/// this crate.
pub const RANK_RTOL: f64 = 1e-10;

/// Accepts `1`, `"1"`, `"family1"` or `"unbounded1"` (and likewise for 2, 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", try_from = "FamilyRepr")]
pub enum RateFamily {
    /// `exp(beta*(u(x)-u(x')))*exp(+-eps/(2N))`
    Unbounded1,
    /// `exp(beta/2*(u(x)-u(x')))*exp(+-beta*eps/(2N))`
    Unbounded2,
    /// `exp(+-eps/(2N)) / (1 + exp(-beta*(u(x)-u(x'))))`
    Bounded3,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FamilyRepr {
    Number(u64),
    Name(String),
}

impl TryFrom<FamilyRepr> for RateFamily {
    type Error = String;

    fn try_from(r: FamilyRepr) -> std::result::Result<Self, String> {
        let found = match &r {
            FamilyRepr::Number(k) => u8::try_from(*k).ok().and_then(RateFamily::from_number),
            FamilyRepr::Name(s) => match s.as_str() {
                "1" | "family1" | "unbounded1" => Some(RateFamily::Unbounded1),
                "2" | "family2" | "unbounded2" => Some(RateFamily::Unbounded2),
                "3" | "family3" | "bounded3" => Some(RateFamily::Bounded3),
                _ => None,
            },
        };
        found.ok_or_else(|| match r {
            FamilyRepr::Number(k) => format!("unknown rate family {k} (use 1, 2 or 3)"),
            FamilyRepr::Name(s) => format!("unknown rate family `{s}` (use 1, 2 or 3)"),
        })
    }
}

impl RateFamily {
    pub const ALL: [RateFamily; 3] = [
        RateFamily::Unbounded1,
        RateFamily::Unbounded2,
        RateFamily::Bounded3,
    ];

    /// Short numeric label (1, 2 or 3) used in CSV output.
    pub fn number(self) -> u8 {
        match self {
            RateFamily::Unbounded1 => 1,
            RateFamily::Unbounded2 => 2,
            RateFamily::Bounded3 => 3,
        }
    }

    /// `c` such that at zero driving the rates satisfy detailed balance with
    /// respect to `exp(-c beta u)`. Family 1 has `c = 2`: its rate ratio
    /// `k(x,y)/k(y,x)` is `exp(2 beta (u(x) - u(y)))`.
    pub fn reversible_beta_factor(self) -> f64 {
        match self {
            RateFamily::Unbounded1 => 2.0,
            RateFamily::Unbounded2 | RateFamily::Bounded3 => 1.0,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(RateFamily::Unbounded1),
            2 => Some(RateFamily::Unbounded2),
            3 => Some(RateFamily::Bounded3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// `x -> x + 1/N`
    Clockwise,
    /// `x -> x - 1/N`
    CounterClockwise,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Clockwise => 1.0,
            Direction::CounterClockwise => -1.0,
        }
    }

    /// Neighbour of `site` on a ring of size `n` in this direction.
    pub fn step(self, site: usize, n: usize) -> usize {
        match self {
            Direction::Clockwise => (site + 1) % n,
            Direction::CounterClockwise => (site + n - 1) % n,
        }
    }
}

/// A 1-periodic energy function on `[0, 1)`.
///
/// Models only ever evaluate the landscape at the sites `i / n`, so both
/// variants are sampled there; the continuum routines evaluate it anywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergyLandscape {
    /// `u(x) = amplitude * sin(2 pi x)`
    Sine { amplitude: f64 },
    /// Values at `i / len`, linearly interpolated (periodically) in between.
    Table { values: Vec<f64> },
}

impl Default for EnergyLandscape {
    fn default() -> Self {
        EnergyLandscape::Sine { amplitude: 0.3 }
    }
}

impl EnergyLandscape {
    pub fn flat() -> Self {
        EnergyLandscape::Sine { amplitude: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnergyLandscape::Sine { amplitude } if !amplitude.is_finite() => {
                Err(invalid("energy.amplitude", "must be finite"))
            }
            EnergyLandscape::Table { values } if values.is_empty() => {
                Err(invalid("energy.values", "table must not be empty"))
            }
            EnergyLandscape::Table { values } if values.iter().any(|v| !v.is_finite()) => {
                Err(invalid("energy.values", "all entries must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// Evaluate at an arbitrary point; the argument is reduced modulo 1.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            EnergyLandscape::Sine { amplitude } => amplitude * (TAU * x).sin(),
            EnergyLandscape::Table { values } => {
                let m = values.len();
                let t = x.rem_euclid(1.0) * m as f64;
                let i = (t.floor() as usize).min(m - 1);
                let frac = t - i as f64;
                values[i] * (1.0 - frac) + values[(i + 1) % m] * frac
            }
        }
    }

    /// `du/dx`. For tables this is the slope of the interpolant.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            EnergyLandscape::Sine { amplitude } => amplitude * TAU * (TAU * x).cos(),
            EnergyLandscape::Table { values } => {
                let m = values.len();
                let t = x.rem_euclid(1.0) * m as f64;
                let i = (t.floor() as usize).min(m - 1);
                (values[(i + 1) % m] - values[i]) * m as f64
            }
        }
    }

    /// Energies at the `n` sites `i / n`.
    pub fn sample(&self, n: usize) -> Result<Vec<f64>> {
        self.validate()?;
        match self {
            EnergyLandscape::Table { values } if values.len() != n => Err(Error::LengthMismatch {
                expected: n,
                actual: values.len(),
            }),
            EnergyLandscape::Table { values } => Ok(values.clone()),
            EnergyLandscape::Sine { .. } => Ok((0..n).map(|i| self.eval(i as f64 / n as f64)).collect()),
        }
    }
}

/// Anything that assigns a positive rate to each nearest-neighbour jump of a
/// ring. Sites passed in are always `< n_sites()`.
pub trait TransitionRates: Sync {
    fn n_sites(&self) -> usize;

    fn log_rate(&self, site: usize, dir: Direction) -> f64;

    fn rate(&self, site: usize, dir: Direction) -> f64 {
        self.log_rate(site, dir).exp()
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// The physical system: `n` sites, temperature, driving and a rate family.
#[derive(Debug, Clone, PartialEq)]
pub struct RingModel {
    n_sites: usize,
    temperature: f64,
    driving: f64,
    energy: Vec<f64>,
    family: RateFamily,
}

impl RingModel {
    pub fn new(
        n_sites: usize,
        temperature: f64,
        driving: f64,
        family: RateFamily,
        energy: Vec<f64>,
    ) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::RingTooSmall { n: n_sites, min: 2 });
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(invalid("temperature", format!("must be positive and finite, got {temperature}")));
        }
        if !driving.is_finite() {
            return Err(invalid("epsilon", "must be finite"));
        }
        if energy.len() != n_sites {
            return Err(Error::LengthMismatch {
                expected: n_sites,
                actual: energy.len(),
            });
        }
        if energy.iter().any(|u| !u.is_finite()) {
            return Err(invalid("energy", "all entries must be finite"));
        }
        Ok(RingModel {
            n_sites,
            temperature,
            driving,
            energy,
            family,
        })
    }

    pub fn from_landscape(
        n_sites: usize,
        temperature: f64,
        driving: f64,
        family: RateFamily,
        landscape: &EnergyLandscape,
    ) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::RingTooSmall { n: n_sites, min: 2 });
        }
        Self::new(n_sites, temperature, driving, family, landscape.sample(n_sites)?)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn beta(&self) -> f64 {
        1.0 / self.temperature
    }

    pub fn driving(&self) -> f64 {
        self.driving
    }

    pub fn energy(&self) -> &[f64] {
        &self.energy
    }

    pub fn family(&self) -> RateFamily {
        self.family
    }

    /// Same system at another temperature.
    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        Self::new(self.n_sites, temperature, self.driving, self.family, self.energy.clone())
    }

    pub fn with_driving(&self, driving: f64) -> Result<Self> {
        Self::new(self.n_sites, self.temperature, driving, self.family, self.energy.clone())
    }

    pub fn with_family(&self, family: RateFamily) -> Self {
        RingModel { family, ..self.clone() }
    }

    /// Materialize all `2n` rates.
    pub fn rates(&self) -> RingRates {
        let n = self.n_sites;
        let cw = (0..n).map(|i| self.rate(i, Direction::Clockwise)).collect();
        let ccw = (0..n).map(|i| self.rate(i, Direction::CounterClockwise)).collect();
        RingRates::new(cw, ccw).expect("model rates are positive and finite")
    }
}

impl TransitionRates for RingModel {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn log_rate(&self, site: usize, dir: Direction) -> f64 {
        let n = self.n_sites;
        let beta = self.beta();
        let delta = self.energy[site] - self.energy[dir.step(site, n)];
        let drift = dir.sign() * self.driving / (2.0 * n as f64);
        match self.family {
            RateFamily::Unbounded1 => beta * delta + drift,
            RateFamily::Unbounded2 => 0.5 * beta * delta + beta * drift,
            RateFamily::Bounded3 => drift - softplus(-beta * delta),
        }
    }
}

/// `k(x, x +- 1/N)` for the model's rate family, with a range check on `site`.
pub fn rate(model: &RingModel, site: usize, dir: Direction) -> Result<f64> {
    if site >= model.n_sites() {
        return Err(Error::SiteOutOfRange {
            site,
            n: model.n_sites(),
        });
    }
    Ok(model.rate(site, dir))
}

/// An explicit table of ring rates, e.g. for user-supplied or symbolic tests.
#[derive(Debug, Clone, PartialEq)]
pub struct RingRates {
    clockwise: Vec<f64>,
    counter_clockwise: Vec<f64>,
    log_cw: Vec<f64>,
    log_ccw: Vec<f64>,
}

impl RingRates {
    pub fn new(clockwise: Vec<f64>, counter_clockwise: Vec<f64>) -> Result<Self> {
        if clockwise.len() != counter_clockwise.len() {
            return Err(Error::LengthMismatch {
                expected: clockwise.len(),
                actual: counter_clockwise.len(),
            });
        }
        if clockwise.len() < 2 {
            return Err(Error::RingTooSmall {
                n: clockwise.len(),
                min: 2,
            });
        }
        for (site, &value) in clockwise.iter().chain(&counter_clockwise).enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidRate {
                    site: site % clockwise.len(),
                    value,
                });
            }
        }
        let log_cw = clockwise.iter().map(|k| k.ln()).collect();
        let log_ccw = counter_clockwise.iter().map(|k| k.ln()).collect();
        Ok(RingRates {
            clockwise,
            counter_clockwise,
            log_cw,
            log_ccw,
        })
    }

    pub fn clockwise(&self) -> &[f64] {
        &self.clockwise
    }

    pub fn counter_clockwise(&self) -> &[f64] {
        &self.counter_clockwise
    }
}

impl TransitionRates for RingRates {
    fn n_sites(&self) -> usize {
        self.clockwise.len()
    }

    fn log_rate(&self, site: usize, dir: Direction) -> f64 {
        match dir {
            Direction::Clockwise => self.log_cw[site],
            Direction::CounterClockwise => self.log_ccw[site],
        }
    }

    fn rate(&self, site: usize, dir: Direction) -> f64 {
        match dir {
            Direction::Clockwise => self.clockwise[site],
            Direction::CounterClockwise => self.counter_clockwise[site],
        }
    }
}

/// Backward generator `L`: cyclic tridiagonal, zero row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    entries: DMatrix<f64>,
}

impl GeneratorMatrix {
    /// Wrap a dense matrix after checking it is a valid generator: square,
    /// finite, nonnegative off the diagonal, rows summing to zero.
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n != entries.ncols() {
            return Err(invalid("generator", "matrix must be square"));
        }
        if n < 2 {
            return Err(Error::RingTooSmall { n, min: 2 });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("generator"));
        }
        for i in 0..n {
            let mut scale = 0.0f64;
            let mut sum = 0.0;
            for j in 0..n {
                let v = entries[(i, j)];
                if i != j && v < 0.0 {
                    return Err(Error::InvalidRate { site: i, value: v });
                }
                scale = scale.max(v.abs());
                sum += v;
            }
            if sum.abs() > 1e-12 * scale.max(1.0) {
                return Err(invalid("generator", format!("row {i} sums to {sum:e}")));
            }
        }
        Ok(GeneratorMatrix { entries })
    }

    /// Two-state generator `[[-a, a], [b, -b]]`.
    pub fn two_state(a: f64, b: f64) -> Result<Self> {
        Self::from_matrix(DMatrix::from_row_slice(2, 2, &[-a, a, b, -b]))
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    /// `(L g)(x)`
    pub fn apply(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                actual: g.len(),
            });
        }
        Ok((0..self.n())
            .map(|i| (0..self.n()).map(|j| self.entries[(i, j)] * g[j]).sum())
            .collect())
    }
}

/// Assemble `L` from ring rates:
/// `L[x][x+1] = k(x, x+1/N)`, `L[x][x-1] = k(x, x-1/N)`, `L[x][x] = -(both)`.
///
/// For `n = 2` both neighbours are the same site, so `L[0][1]` holds
/// `k(0,+) + k(0,-)`.
pub fn build_generator<R: TransitionRates + ?Sized>(rates: &R) -> Result<GeneratorMatrix> {
    let n = rates.n_sites();
    if n < 2 {
        return Err(Error::RingTooSmall { n, min: 2 });
    }
    let mut l = DMatrix::zeros(n, n);
    for x in 0..n {
        let kp = rates.rate(x, Direction::Clockwise);
        let km = rates.rate(x, Direction::CounterClockwise);
        l[(x, Direction::Clockwise.step(x, n))] += kp;
        l[(x, Direction::CounterClockwise.step(x, n))] += km;
        l[(x, x)] = -(kp + km);
    }
    Ok(GeneratorMatrix { entries: l })
}

/// Stationary probability vector of a ring walk.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    probs: Vec<f64>,
}

impl StationaryDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(invalid("distribution", "entries must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(invalid("distribution", format!("sums to {total}, not 1")));
        }
        Ok(StationaryDistribution { probs })
    }

    /// Uniform distribution on `n` sites.
    pub fn uniform(n: usize) -> Self {
        StationaryDistribution {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `<g> = sum_y rho(y) g(y)`
    pub fn expectation(&self, g: &[f64]) -> Result<f64> {
        stationary_expectation(self, g)
    }

    /// `g - <g>`
    pub fn center(&self, g: &[f64]) -> Result<Vec<f64>> {
        let mean = self.expectation(g)?;
        Ok(g.iter().map(|v| v - mean).collect())
    }
}

pub fn stationary_expectation(dist: &StationaryDistribution, g: &[f64]) -> Result<f64> {
    if g.len() != dist.probs.len() {
        return Err(Error::LengthMismatch {
            expected: dist.probs.len(),
            actual: g.len(),
        });
    }
    Ok(dist.probs.iter().zip(g).map(|(p, v)| p * v).sum())
}

/// Explicit rate table that replaces the family formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub clockwise: Vec<f64>,
    pub counterclockwise: Vec<f64>,
}

/// On-disk model description.
///
/// ```json
/// {"n_sites": 10, "temperature": 2.0, "epsilon": 1.0, "rate_family": "unbounded1",
///  "energy": {"kind": "sine", "amplitude": 0.3}}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_sites: usize,
    pub temperature: f64,
    pub epsilon: f64,
    pub rate_family: RateFamily,
    #[serde(default)]
    pub energy: EnergyLandscape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RateTable>,
}

impl Default for ModelConfig {
    /// Six sites, `T = 1`, `eps = 1`, family 1, sine landscape.
    fn default() -> Self {
        ModelConfig {
            n_sites: 6,
            temperature: 1.0,
            epsilon: 1.0,
            rate_family: RateFamily::Unbounded1,
            energy: EnergyLandscape::default(),
            rates: None,
        }
    }
}

impl ModelConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn model(&self) -> Result<RingModel> {
        RingModel::from_landscape(
            self.n_sites,
            self.temperature,
            self.epsilon,
            self.rate_family,
            &self.energy,
        )
    }

    /// The explicit rate table, if the config carries one.
    pub fn rate_table(&self) -> Option<Result<RingRates>> {
        self.rates.as_ref().map(|t| {
            if t.clockwise.len() != self.n_sites {
                return Err(Error::LengthMismatch {
                    expected: self.n_sites,
                    actual: t.clockwise.len(),
                });
            }
            RingRates::new(t.clockwise.clone(), t.counterclockwise.clone())
        })
    }
}
