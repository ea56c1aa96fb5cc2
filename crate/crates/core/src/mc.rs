//! Monte-Carlo cross-check by exact continuous-time simulation (Gillespie).
//!
//! Random numbers come from ChaCha8. Trajectory `j` uses the generator
//! seeded with `seed_from_u64(seed)` and then switched to stream `j`, so
//! every trajectory has its own independent stream and results do not
//! depend on the thread count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{Direction, GeneratorMatrix, TransitionRates};
use crate::thermo::stationary;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// Trajectories per start site (excess) or in total (occupation).
    pub trajectories: usize,
    /// Integration window length.
    pub horizon: f64,
    /// Discarded initial time for occupation estimates.
    pub burn_in: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trajectories == 0 {
            return Err(invalid("trajectories", "need at least one"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid("horizon", "must be positive"));
        }
        if !(self.burn_in.is_finite() && self.burn_in >= 0.0) {
            return Err(invalid("burn_in", "must be nonnegative"));
        }
        Ok(())
    }
}

fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Jump chain with exponential holding times. Calls `visit(site, t0, t1)`
/// for every sojourn clipped to `[0, end]`.
fn run<R, F>(rates: &R, start: usize, end: f64, rng: &mut ChaCha8Rng, mut visit: F)
where
    R: TransitionRates + ?Sized,
    F: FnMut(usize, f64, f64),
{
    let n = rates.n_sites();
    let mut site = start;
    let mut t = 0.0;
    while t < end {
        let up = rates.rate(site, Direction::Clockwise);
        let down = rates.rate(site, Direction::CounterClockwise);
        let total = up + down;
        let hold: f64 = rng.sample::<f64, _>(Exp1) / total;
        let leave = (t + hold).min(end);
        visit(site, t, leave);
        t += hold;
        let dir = if rng.random::<f64>() * total < up {
            Direction::Clockwise
        } else {
            Direction::CounterClockwise
        };
        site = dir.step(site, n);
    }
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let k = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / k;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcessEstimate {
    /// Mean of `int_0^H f(X_t) dt` per start site.
    pub estimates: Vec<f64>,
    pub stderr: Vec<f64>,
    pub relaxation_time: f64,
    /// Set when the horizon is shorter than five relaxation times.
    pub short_horizon: bool,
}

/// Estimate `int_0^infinity E[f(X_t) | X_0 = x] dt` for a centered `f`.
///
/// This is the time integral of the semigroup, i.e. `-V` for the solution
/// `V` of `L V = f` with `<V> = 0`.
pub fn simulate_excess<R: TransitionRates + ?Sized>(
    rates: &R,
    f: &[f64],
    cfg: &SimConfig,
) -> Result<ExcessEstimate> {
    cfg.validate()?;
    let n = rates.n_sites();
    if f.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: f.len(),
        });
    }
    let rho = stationary(rates)?;
    crate::forest::check_centered(rho.expectation(f)?, f)?;
    let relaxation = relaxation_time(&crate::model::build_generator(rates)?)?;
    let per_site = cfg.trajectories;
    let samples: Vec<f64> = (0..n * per_site)
        .into_par_iter()
        .map(|job| {
            let start = job / per_site;
            let mut rng = trajectory_rng(cfg.seed, job as u64);
            let mut acc = 0.0;
            run(rates, start, cfg.horizon, &mut rng, |site, t0, t1| acc += f[site] * (t1 - t0));
            acc
        })
        .collect();
    let (estimates, stderr) = samples.chunks(per_site).map(mean_and_stderr).unzip();
    Ok(ExcessEstimate {
        estimates,
        stderr,
        relaxation_time: relaxation,
        short_horizon: cfg.horizon < 5.0 * relaxation,
    })
}

/// Fraction of time spent at each site over `[burn_in, burn_in + horizon]`,
/// averaged over independent trajectories started at site 0.
pub fn estimate_occupation<R: TransitionRates + ?Sized>(
    rates: &R,
    cfg: &SimConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    let n = rates.n_sites();
    let end = cfg.burn_in + cfg.horizon;
    let fractions: Vec<Vec<f64>> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|j| {
            let mut rng = trajectory_rng(cfg.seed, j as u64);
            let mut occ = vec![0.0; n];
            run(rates, 0, end, &mut rng, |site, t0, t1| {
                let lo = t0.max(cfg.burn_in);
                if t1 > lo {
                    occ[site] += (t1 - lo) / cfg.horizon;
                }
            });
            occ
        })
        .collect();
    let mut means = Vec::with_capacity(n);
    let mut errs = Vec::with_capacity(n);
    for site in 0..n {
        let column: Vec<f64> = fractions.iter().map(|o| o[site]).collect();
        let (m, e) = mean_and_stderr(&column);
        means.push(m);
        errs.push(e);
    }
    Ok((means, errs))
}

/// `1 / min |Re lambda|` over the nonzero eigenvalues of `L`.
pub fn relaxation_time(l: &GeneratorMatrix) -> Result<f64> {
    let eig = l.matrix().complex_eigenvalues();
    let scale = l.matrix().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap = eig
        .iter()
        .filter(|z| z.norm() > 1e-10 * scale.max(1.0))
        .map(|z| z.re.abs())
        .fold(f64::INFINITY, f64::min);
    if !(gap.is_finite() && gap > 0.0) {
        return Err(Error::Singular("generator has no nonzero eigenvalue".into()));
    }
    Ok(1.0 / gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_generator, EnergyLandscape, RateFamily, RingModel};
    use approx::assert_relative_eq;

    fn cfg(trajectories: usize) -> SimConfig {
        SimConfig {
            seed: 2024,
            trajectories,
            horizon: 20.0,
            burn_in: 5.0,
        }
    }

    #[test]
    fn relaxation_examples() {
        let l = GeneratorMatrix::two_state(0.4, 1.1).unwrap();
        assert_relative_eq!(relaxation_time(&l).unwrap(), 1.0 / 1.5, max_relative = 1e-12);
        let flat = RingModel::from_landscape(4, 1.0, 0.0, RateFamily::Unbounded1, &EnergyLandscape::flat()).unwrap();
        let l = build_generator(&flat).unwrap();
        assert_relative_eq!(relaxation_time(&l).unwrap(), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn single_zero_eigenvalue() {
        let m = RingModel::from_landscape(7, 0.6, 2.0, RateFamily::Bounded3, &EnergyLandscape::default()).unwrap();
        let eig = build_generator(&m).unwrap().matrix().complex_eigenvalues();
        assert_eq!(eig.iter().filter(|z| z.norm() < 1e-10).count(), 1);
    }

    #[test]
    fn zero_source() {
        let m = RingModel::from_landscape(5, 1.0, 1.0, RateFamily::Unbounded1, &EnergyLandscape::default()).unwrap();
        let est = simulate_excess(&m, &[0.0; 5], &cfg(50)).unwrap();
        assert_eq!(est.estimates, vec![0.0; 5]);
        assert_eq!(est.stderr, vec![0.0; 5]);
    }

    #[test]
    fn same_seed_same_bits() {
        let m = RingModel::from_landscape(5, 1.0, 1.0, RateFamily::Unbounded1, &EnergyLandscape::default()).unwrap();
        let rho = stationary(&m).unwrap();
        let f = rho.center(&[1.0, -0.5, 0.2, 0.0, 0.3]).unwrap();
        let a = simulate_excess(&m, &f, &cfg(200)).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| simulate_excess(&m, &f, &cfg(200)).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn short_horizon_is_flagged() {
        let m = RingModel::from_landscape(5, 1.0, 1.0, RateFamily::Unbounded1, &EnergyLandscape::default()).unwrap();
        let rho = stationary(&m).unwrap();
        let f = rho.center(&[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let mut c = cfg(10);
        c.horizon = 0.01;
        assert!(simulate_excess(&m, &f, &c).unwrap().short_horizon);
        assert!(!simulate_excess(&m, &f, &cfg(10)).unwrap().short_horizon);
    }

    #[test]
    fn occupation_matches_stationary() {
        let m = RingModel::from_landscape(5, 0.8, 1.5, RateFamily::Bounded3, &EnergyLandscape::default()).unwrap();
        let rho = stationary(&m).unwrap();
        let (occ, err) = estimate_occupation(&m, &cfg(2000)).unwrap();
        for i in 0..5 {
            assert!((occ[i] - rho.probs()[i]).abs() < 4.0 * err[i], "site {i}");
        }
    }

    #[test]
    fn stderr_halves_with_four_times_the_samples() {
        let m = RingModel::from_landscape(5, 1.0, 1.0, RateFamily::Unbounded1, &EnergyLandscape::default()).unwrap();
        let rho = stationary(&m).unwrap();
        let f = rho.center(&[1.0, -0.5, 0.2, 0.0, 0.3]).unwrap();
        let a = simulate_excess(&m, &f, &cfg(4000)).unwrap();
        let b = simulate_excess(&m, &f, &cfg(16000)).unwrap();
        for i in 0..5 {
            let ratio = a.stderr[i] / b.stderr[i];
            assert!((1.6..=2.4).contains(&ratio), "site {i}: {ratio}");
        }
    }
}
