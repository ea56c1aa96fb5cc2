//! Dissipative source, nonequilibrium heat capacity and temperature sweeps.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::forest::{forest_pseudopotential, kirchhoff_stationary, Centering};
use crate::model::{
    build_generator, Direction, EnergyLandscape, RateFamily, RingModel, StationaryDistribution,
    TransitionRates,
};
use crate::pseudo_inverse::dense_stationary;

/// Excess expected dissipative power `f_s = h - <h>`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceFunction {
    /// `h(x) = -eps * (k(x, x+1/N) - k(x, x-1/N))`
    pub raw: Vec<f64>,
    /// `<h>` under the stationary distribution
    pub mean: f64,
    pub values: Vec<f64>,
}

/// Stationary distribution by tree weights, or by a dense solve on two sites.
pub fn stationary<R: TransitionRates + ?Sized>(rates: &R) -> Result<StationaryDistribution> {
    if rates.n_sites() >= 3 {
        kirchhoff_stationary(rates)
    } else {
        dense_stationary(&build_generator(rates)?)
    }
}

pub fn dissipative_source(model: &RingModel) -> Result<SourceFunction> {
    let rho = stationary(model)?;
    dissipative_source_with(model, model.driving(), &rho)
}

/// Source for arbitrary rates with driving `eps`, centered under `rho`.
pub fn dissipative_source_with<R: TransitionRates + ?Sized>(
    rates: &R,
    eps: f64,
    rho: &StationaryDistribution,
) -> Result<SourceFunction> {
    let raw: Vec<f64> = (0..rates.n_sites())
        .map(|x| -eps * (rates.rate(x, Direction::Clockwise) - rates.rate(x, Direction::CounterClockwise)))
        .collect();
    let mean = rho.expectation(&raw)?;
    let values = raw.iter().map(|h| h - mean).collect();
    Ok(SourceFunction { raw, mean, values })
}

/// `max(1e-4, 1e-3 T)`
pub fn default_step(temperature: f64) -> f64 {
    (1e-3 * temperature).max(1e-4)
}

/// Stationary mean energy and pseudo-potential of the dissipative source.
#[derive(Debug, Clone)]
struct OperatingPoint {
    mean_energy: f64,
    potential: Vec<f64>,
}

fn operating_point(model: &RingModel) -> Result<OperatingPoint> {
    let rho = kirchhoff_stationary(model)?;
    let source = dissipative_source_with(model, model.driving(), &rho)?;
    let potential = forest_pseudopotential(model, &source.values, Centering::Require)?.values;
    let mean_energy = rho.expectation(model.energy())?;
    Ok(OperatingPoint {
        mean_energy,
        potential,
    })
}

/// `C(T) = d<u>/dT - <dV/dT>` by central differences with step `step`.
///
/// Rates, stationary distribution and source are all re-evaluated at
/// `T +- step`; the outer expectation uses the distribution at `T`.
pub fn heat_capacity(model: &RingModel, step: f64) -> Result<f64> {
    let t = model.temperature();
    if !(step.is_finite() && step > 0.0) {
        return Err(invalid("fd_step", format!("must be positive, got {step}")));
    }
    if t - step <= 0.0 {
        return Err(invalid(
            "fd_step",
            format!("shifted temperature {} is not positive", t - step),
        ));
    }
    let plus = operating_point(&model.with_temperature(t + step)?)?;
    let minus = operating_point(&model.with_temperature(t - step)?)?;
    let rho = kirchhoff_stationary(model)?;
    let dv: Vec<f64> = plus
        .potential
        .iter()
        .zip(&minus.potential)
        .map(|(a, b)| (a - b) / (2.0 * step))
        .collect();
    let c = (plus.mean_energy - minus.mean_energy) / (2.0 * step) - rho.expectation(&dv)?;
    if !c.is_finite() {
        return Err(Error::NonFinite("heat capacity"));
    }
    Ok(c)
}

/// Equilibrium heat capacity `beta^2 Var(u)` under `rho ~ exp(-beta u)`.
pub fn gibbs_heat_capacity(energy: &[f64], temperature: f64) -> f64 {
    let beta = 1.0 / temperature;
    let umin = energy.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energy.iter().map(|u| (-beta * (u - umin)).exp()).collect();
    let z: f64 = w.iter().sum();
    let mean: f64 = w.iter().zip(energy).map(|(w, u)| w * u).sum::<f64>() / z;
    let var: f64 = w.iter().zip(energy).map(|(w, u)| w * (u - mean).powi(2)).sum::<f64>() / z;
    beta * beta * var
}

/// Heat capacity at zero driving, `c beta^2 Var(u)` under
/// `rho ~ exp(-c beta u)` with `c` the family's reversible factor.
pub fn equilibrium_heat_capacity(energy: &[f64], temperature: f64, family: RateFamily) -> f64 {
    let c = family.reversible_beta_factor();
    gibbs_heat_capacity(energy, temperature / c) / c
}

/// Temperatures as `T0:T1:steps[:log]` with `steps` points including both
/// ends.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureGrid {
    pub start: f64,
    pub end: f64,
    pub points: usize,
    pub log: bool,
}

impl TemperatureGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                let s = i as f64 / last;
                if self.log {
                    (self.start.ln() + s * (self.end.ln() - self.start.ln())).exp()
                } else {
                    self.start + s * (self.end - self.start)
                }
            })
            .collect()
    }
}

impl FromStr for TemperatureGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(invalid("grid", format!("expected T0:T1:steps[:log], got `{s}`")));
        }
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| invalid("grid", format!("`{p}` is not a number")))
        };
        let start = num(parts[0])?;
        let end = num(parts[1])?;
        let points: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| invalid("grid", format!("`{}` is not a point count", parts[2])))?;
        let log = match parts.get(3).map(|p| p.trim()) {
            None | Some("lin") => false,
            Some("log") => true,
            Some(other) => return Err(invalid("grid", format!("unknown spacing `{other}`"))),
        };
        if points == 0 {
            return Err(invalid("grid", "temperature grid is empty"));
        }
        if !(start > 0.0 && end > 0.0 && start.is_finite() && end.is_finite()) {
            return Err(invalid("grid", "temperatures must be positive"));
        }
        if points > 1 && end <= start {
            return Err(invalid("grid", "T1 must exceed T0"));
        }
        Ok(TemperatureGrid {
            start,
            end,
            points,
            log,
        })
    }
}

/// How ring sizes are chosen in a sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum SizeSpec {
    /// Every listed size for every driving.
    List(Vec<usize>),
    /// `N = round(ratio * |eps|)`, at least 3.
    Ratio(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub family: RateFamily,
    pub landscape: EnergyLandscape,
    pub temperatures: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub sizes: SizeSpec,
    /// Fixed finite-difference step; `None` uses [`default_step`] per point.
    pub fd_step: Option<f64>,
}

impl SweepSpec {
    fn combinations(&self) -> Vec<(f64, usize)> {
        match &self.sizes {
            SizeSpec::List(ns) => self
                .epsilons
                .iter()
                .flat_map(|&e| ns.iter().map(move |&n| (e, n)))
                .collect(),
            SizeSpec::Ratio(r) => self
                .epsilons
                .iter()
                .map(|&e| (e, ((r * e.abs()).round() as usize).max(3)))
                .collect(),
        }
    }

    fn step_at(&self, t: f64) -> f64 {
        self.fd_step.unwrap_or_else(|| default_step(t))
    }
}

/// Heat capacity sampled along a temperature grid for one `(eps, N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityCurve {
    pub n_sites: usize,
    pub epsilon: f64,
    pub family: RateFamily,
    pub temperatures: Vec<f64>,
    /// `NaN` where the point failed; see `failures`.
    pub capacities: Vec<f64>,
    pub fd_steps: Vec<f64>,
    pub failures: Vec<(usize, Error)>,
}

impl CapacityCurve {
    pub fn max_abs(&self) -> f64 {
        self.capacities
            .iter()
            .filter(|c| c.is_finite())
            .fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// One curve per `(eps, N)` pair, in input order. Points are computed in
/// parallel; failures are recorded on the curve rather than aborting.
pub fn capacity_sweep(spec: &SweepSpec) -> Result<Vec<CapacityCurve>> {
    if spec.temperatures.is_empty() {
        return Err(invalid("grid", "temperature grid is empty"));
    }
    if spec.epsilons.is_empty() {
        return Err(invalid("epsilon", "no driving values given"));
    }
    if let SizeSpec::List(ns) = &spec.sizes {
        if ns.is_empty() {
            return Err(invalid("n_sites", "no ring sizes given"));
        }
    }
    if spec.temperatures.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("grid", "temperatures must be strictly increasing"));
    }
    for &t in &spec.temperatures {
        let h = spec.step_at(t);
        if !(h > 0.0 && t - h > 0.0) {
            return Err(invalid("grid", format!("temperature {t} does not exceed the step {h}")));
        }
    }
    let combos = spec.combinations();
    let mut models = Vec::with_capacity(combos.len());
    for &(eps, n) in &combos {
        let t0 = spec.temperatures[0];
        models.push(RingModel::from_landscape(n, t0, eps, spec.family, &spec.landscape)?);
    }
    let jobs: Vec<(usize, f64)> = (0..combos.len())
        .flat_map(|c| spec.temperatures.iter().map(move |&t| (c, t)))
        .collect();
    let results: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(c, t)| heat_capacity(&models[c].with_temperature(t)?, spec.step_at(t)))
        .collect();
    let mut results = results.into_iter();
    Ok(combos
        .iter()
        .map(|&(epsilon, n_sites)| {
            let mut capacities = Vec::with_capacity(spec.temperatures.len());
            let mut failures = Vec::new();
            for i in 0..spec.temperatures.len() {
                match results.next().expect("one result per job") {
                    Ok(c) => capacities.push(c),
                    Err(e) => {
                        capacities.push(f64::NAN);
                        failures.push((i, e));
                    }
                }
            }
            CapacityCurve {
                n_sites,
                epsilon,
                family: spec.family,
                temperatures: spec.temperatures.clone(),
                fd_steps: spec.temperatures.iter().map(|&t| spec.step_at(t)).collect(),
                capacities,
                failures,
            }
        })
        .collect())
}

/// Write curves as CSV with columns `T,C,N,epsilon,family,fd_step`, after
/// `#`-prefixed comment lines.
pub fn write_capacity_csv<W: Write>(out: W, curves: &[CapacityCurve], comments: &[String]) -> Result<()> {
    let mut out = out;
    for c in comments {
        writeln!(out, "# {c}").map_err(|e| Error::Singular(format!("write failed: {e}")))?;
    }
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Singular(format!("write failed: {e}"));
    w.write_record(["T", "C", "N", "epsilon", "family", "fd_step"]).map_err(io)?;
    for curve in curves {
        for i in 0..curve.temperatures.len() {
            w.write_record([
                curve.temperatures[i].to_string(),
                curve.capacities[i].to_string(),
                curve.n_sites.to_string(),
                curve.epsilon.to_string(),
                curve.family.number().to_string(),
                curve.fd_steps[i].to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::Singular(format!("write failed: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sine(n: usize, t: f64, eps: f64, family: RateFamily) -> RingModel {
        RingModel::from_landscape(n, t, eps, family, &EnergyLandscape::Sine { amplitude: 0.3 }).unwrap()
    }

    #[test]
    fn source_vanishes_without_driving() {
        let s = dissipative_source(&sine(6, 1.0, 0.0, RateFamily::Unbounded2)).unwrap();
        assert!(s.raw.iter().chain(&s.values).all(|v| *v == 0.0));
    }

    #[test]
    fn flat_source_is_constant() {
        let (n, eps) = (8, 1.5);
        let m = RingModel::from_landscape(n, 1.0, eps, RateFamily::Unbounded1, &EnergyLandscape::flat()).unwrap();
        let s = dissipative_source(&m).unwrap();
        let expected = -eps * ((eps / (2.0 * n as f64)).exp() - (-eps / (2.0 * n as f64)).exp());
        for (h, f) in s.raw.iter().zip(&s.values) {
            assert_relative_eq!(*h, expected, max_relative = 1e-14);
            assert!(f.abs() < 1e-15);
        }
    }

    #[test]
    fn source_is_centered() {
        let m = sine(5, 0.8, 2.0, RateFamily::Bounded3);
        let rho = kirchhoff_stationary(&m).unwrap();
        let s = dissipative_source_with(&m, m.driving(), &rho).unwrap();
        assert!(rho.expectation(&s.values).unwrap().abs() < 1e-12);
    }

    #[test]
    fn equilibrium_matches_gibbs() {
        for family in [RateFamily::Unbounded1, RateFamily::Unbounded2, RateFamily::Bounded3] {
            for t in [0.3, 1.0, 4.0] {
                let m = sine(10, t, 0.0, family);
                let c = heat_capacity(&m, default_step(t)).unwrap();
                let g = equilibrium_heat_capacity(m.energy(), t, family);
                assert!((c - g).abs() < 1e-6, "family {family:?} T={t}: {c} vs {g}");
            }
        }
    }

    #[test]
    fn gibbs_formula_matches_numeric_derivative() {
        let u = [0.1f64, -0.4, 0.3, 0.0, 0.25];
        let mean = |t: f64| {
            let w: Vec<f64> = u.iter().map(|x: &f64| (-x / t).exp()).collect();
            w.iter().zip(&u).map(|(w, x)| w * x).sum::<f64>() / w.iter().sum::<f64>()
        };
        let t = 0.7;
        let h = 1e-5;
        let numeric = (mean(t + h) - mean(t - h)) / (2.0 * h);
        assert_relative_eq!(gibbs_heat_capacity(&u, t), numeric, max_relative = 1e-8);
    }

    #[test]
    fn flat_landscape_has_no_capacity() {
        let m = RingModel::from_landscape(7, 1.3, 2.0, RateFamily::Bounded3, &EnergyLandscape::flat()).unwrap();
        assert!(heat_capacity(&m, 1e-3).unwrap().abs() < 1e-9);
    }

    #[test]
    fn step_must_keep_temperature_positive() {
        let m = sine(5, 0.1, 1.0, RateFamily::Unbounded1);
        assert!(heat_capacity(&m, 0.1).is_err());
        assert!(heat_capacity(&m, -1e-3).is_err());
    }

    #[test]
    fn central_difference_is_second_order() {
        let m = sine(8, 1.0, 2.0, RateFamily::Unbounded1);
        let c1 = heat_capacity(&m, 0.04).unwrap();
        let c2 = heat_capacity(&m, 0.02).unwrap();
        let c3 = heat_capacity(&m, 0.01).unwrap();
        let order = ((c1 - c2) / (c2 - c3)).abs().log2();
        assert!(order > 1.8, "order {order}");
    }

    #[test]
    fn grid_parsing() {
        let g: TemperatureGrid = "0.5:2:4".parse().unwrap();
        assert_eq!(g.values(), vec![0.5, 1.0, 1.5, 2.0]);
        let g: TemperatureGrid = "0.1:10:3:log".parse().unwrap();
        let v = g.values();
        assert_relative_eq!(v[1], 1.0, max_relative = 1e-14);
        assert!("1:2".parse::<TemperatureGrid>().is_err());
        assert!("1:2:0".parse::<TemperatureGrid>().is_err());
        assert!("2:1:5".parse::<TemperatureGrid>().is_err());
        assert!("1:2:5:cubic".parse::<TemperatureGrid>().is_err());
    }

    #[test]
    fn single_point_sweep_equals_direct() {
        let spec = SweepSpec {
            family: RateFamily::Unbounded2,
            landscape: EnergyLandscape::Sine { amplitude: 0.3 },
            temperatures: vec![1.5],
            epsilons: vec![1.0],
            sizes: SizeSpec::List(vec![10]),
            fd_step: None,
        };
        let curves = capacity_sweep(&spec).unwrap();
        assert_eq!(curves.len(), 1);
        let direct = heat_capacity(&sine(10, 1.5, 1.0, RateFamily::Unbounded2), default_step(1.5)).unwrap();
        assert_eq!(curves[0].capacities, vec![direct]);
    }

    #[test]
    fn ratio_mode_sizes() {
        let spec = SweepSpec {
            family: RateFamily::Unbounded1,
            landscape: EnergyLandscape::default(),
            temperatures: vec![1.0],
            epsilons: vec![0.1, 1.0, 2.5],
            sizes: SizeSpec::Ratio(10.0),
            fd_step: Some(1e-3),
        };
        let sizes: Vec<usize> = capacity_sweep(&spec).unwrap().iter().map(|c| c.n_sites).collect();
        assert_eq!(sizes, vec![3, 10, 25]);
    }

    #[test]
    fn sweep_rejects_empty_grid() {
        let spec = SweepSpec {
            family: RateFamily::Unbounded1,
            landscape: EnergyLandscape::default(),
            temperatures: vec![],
            epsilons: vec![1.0],
            sizes: SizeSpec::List(vec![5]),
            fd_step: None,
        };
        assert!(capacity_sweep(&spec).is_err());
    }

    #[test]
    fn csv_layout() {
        let curve = CapacityCurve {
            n_sites: 10,
            epsilon: 1.0,
            family: RateFamily::Bounded3,
            temperatures: vec![0.5, 1.0],
            capacities: vec![0.25, -0.125],
            fd_steps: vec![5e-4, 1e-3],
            failures: vec![],
        };
        let mut buf = Vec::new();
        write_capacity_csv(&mut buf, &[curve], &["manifest: run.json".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# manifest: run.json\nT,C,N,epsilon,family,fd_step\n0.5,0.25,10,1,3,0.0005\n1,-0.125,10,1,3,0.001\n"
        );
    }
}
