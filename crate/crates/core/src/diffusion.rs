//! Continuum (N -> infinity) limits of the stationary density and of the
//! pseudo-potential for the second rate family.
//!
//! With `E(t) = exp(beta (u(t) - eps t))` and `K = 1/E` on the unwrapped line,
//! a two-tree forest whose main arc `[a, b]` holds `x` and the root `y`, and
//! whose other arc `[b, a + 1]` is rooted at `k`, has weight
//! `exp(-beta eps / 2) E(a) E(b) K(y) K(k)` in the limit. The sums over gaps
//! and roots become integrals, evaluated here from cumulative tables, so
//! each point costs O(P) for P panels per unit length.
//!
//! Scaling against the finite ring: `N rho_N(i) -> rho_inf(i/N)`, the forest
//! numerator divided by `N^4` tends to [`continuum_forest_numerator`], and
//! `V_N(i) / N -> V_inf(i/N)` because the dissipative source is `O(1/N)`.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{EnergyLandscape, RateFamily, RingModel};

/// Minimum quadrature resolution (panels per unit length).
pub const MIN_PANELS: usize = 64;
pub const DEFAULT_PANELS: usize = 512;

/// Tolerance on `<f>` for a continuum source, scaled by `max|f|`.
pub const CONTINUUM_CENTER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumModel {
    beta: f64,
    epsilon: f64,
    landscape: EnergyLandscape,
    panels: usize,
}

impl ContinuumModel {
    pub fn new(beta: f64, epsilon: f64, landscape: EnergyLandscape, panels: usize) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(invalid("temperature", "must be positive and finite"));
        }
        if !epsilon.is_finite() {
            return Err(invalid("epsilon", "must be finite"));
        }
        if panels < MIN_PANELS {
            return Err(invalid("panels", format!("need at least {MIN_PANELS}, got {panels}")));
        }
        landscape.validate()?;
        Ok(ContinuumModel {
            beta,
            epsilon,
            landscape,
            panels,
        })
    }

    /// Continuum counterpart of a family-2 ring model.
    pub fn from_ring(model: &RingModel, landscape: EnergyLandscape, panels: usize) -> Result<Self> {
        if model.family() != RateFamily::Unbounded2 {
            return Err(invalid(
                "rate_family",
                "continuum limit defined for family 2 only",
            ));
        }
        Self::new(model.beta(), model.driving(), landscape, panels)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn landscape(&self) -> &EnergyLandscape {
        &self.landscape
    }

    pub fn panels(&self) -> usize {
        self.panels
    }

    pub fn with_panels(&self, panels: usize) -> Result<Self> {
        Self::new(self.beta, self.epsilon, self.landscape.clone(), panels)
    }

    fn h(&self) -> f64 {
        1.0 / self.panels as f64
    }

    /// `beta (u(t) - eps t)`, the log of `E(t)`.
    fn log_e(&self, t: f64) -> f64 {
        self.beta * (self.landscape.eval(t) - self.epsilon * t)
    }

    /// Uniform nodes `x_i = i / P`, `i = 0..P`.
    pub fn grid(&self) -> Vec<f64> {
        (0..self.panels).map(|i| i as f64 * self.h()).collect()
    }
}

/// Composite Simpson rule on equally spaced samples. An odd panel count
/// finishes with the 3/8 rule; a single panel falls back to the trapezoid.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let panels = values.len().saturating_sub(1);
    match panels {
        0 => 0.0,
        1 => 0.5 * h * (values[0] + values[1]),
        _ => {
            let (even, tail) = if panels.is_multiple_of(2) { (panels, 0) } else { (panels - 3, 3) };
            let mut s = 0.0;
            for i in (0..even).step_by(2) {
                s += values[i] + 4.0 * values[i + 1] + values[i + 2];
            }
            let mut total = s * h / 3.0;
            if tail == 3 {
                let v = &values[even..];
                total += 3.0 * h / 8.0 * (v[0] + 3.0 * v[1] + 3.0 * v[2] + v[3]);
            }
            total
        }
    }
}

/// Running integral from the first node: Simpson at even nodes, and at odd
/// nodes the previous even value plus `h/12 (5 f_0 + 8 f_1 - f_2)`.
pub fn cumulative_simpson(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (values[0] + values[1]);
        return out;
    }
    let mut i = 0;
    while i + 2 < n {
        out[i + 1] = out[i] + h / 12.0 * (5.0 * values[i] + 8.0 * values[i + 1] - values[i + 2]);
        out[i + 2] = out[i] + h / 3.0 * (values[i] + 4.0 * values[i + 1] + values[i + 2]);
        i += 2;
    }
    if i + 1 < n {
        // last odd node: backward form of the one-step rule
        out[i + 1] = out[i] + h / 12.0 * (-values[i - 1] + 8.0 * values[i] + 5.0 * values[i + 1]);
    }
    out
}

/// Mean of a periodic function sampled on a uniform grid over one period;
/// spectrally accurate for smooth integrands.
fn periodic_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// `lim w(x) = int_{x<=y} exp(beta(u(y) - u(x) + eps(x - y) + eps/2)) dy
///           + int_{y<x} exp(beta(u(y) - u(x) + eps(x - y) - eps/2)) dy`,
/// written as `exp(-beta eps / 2) K(x) int_{x-1}^{x} E(a) da`.
pub fn continuum_tree_weight(m: &ContinuumModel, x: f64) -> f64 {
    let h = m.h();
    let lx = m.log_e(x);
    let values: Vec<f64> = (0..=m.panels)
        .map(|j| (m.log_e(x - 1.0 + j as f64 * h) - lx).exp())
        .collect();
    (-0.5 * m.beta * m.epsilon).exp() * simpson(&values, h)
}

/// `rho_inf` at arbitrary points of `[0, 1]`, normalized over one period.
pub fn continuum_stationary(m: &ContinuumModel, grid: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = grid.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(invalid("grid", format!("point {bad} outside [0, 1]")));
    }
    let z = normalization(m);
    Ok(grid.iter().map(|&x| continuum_tree_weight(m, x) / z).collect())
}

/// `int_0^1 w_inf(x) dx`
fn normalization(m: &ContinuumModel) -> f64 {
    let w: Vec<f64> = m.grid().par_iter().map(|&x| continuum_tree_weight(m, x)).collect();
    periodic_mean(&w)
}

/// Continuum density on the model's own uniform nodes.
fn stationary_on_grid(m: &ContinuumModel) -> Vec<f64> {
    let w: Vec<f64> = m.grid().par_iter().map(|&x| continuum_tree_weight(m, x)).collect();
    let z = periodic_mean(&w);
    w.into_iter().map(|v| v / z).collect()
}

/// `<g>_inf` for a periodic function, by the trapezoid rule on the model grid.
pub fn continuum_expectation(m: &ContinuumModel, g: &dyn Fn(f64) -> f64) -> f64 {
    let rho = stationary_on_grid(m);
    let vals: Vec<f64> = m.grid().iter().zip(&rho).map(|(&x, r)| r * g(x)).collect();
    periodic_mean(&vals)
}

/// Leading order of `N f_s`: `eps beta (u'(x) - <u'>_inf)`.
#[derive(Debug, Clone)]
pub struct ContinuumSource {
    scale: f64,
    mean_slope: f64,
    landscape: EnergyLandscape,
}

impl ContinuumSource {
    pub fn eval(&self, x: f64) -> f64 {
        self.scale * (self.landscape.derivative(x) - self.mean_slope)
    }
}

pub fn continuum_source(m: &ContinuumModel) -> ContinuumSource {
    let mean_slope = continuum_expectation(m, &|x| m.landscape.derivative(x));
    ContinuumSource {
        scale: m.epsilon * m.beta,
        mean_slope,
        landscape: m.landscape.clone(),
    }
}

/// `lim N^{-4} sum_y w(F^{x->y}) f(y)` for a periodic `f` centered under
/// `rho_inf`.
///
/// The `y` integral runs over `(x, x + 1)`, where the main arc holds either
/// the copy `y` (to the right of `x`) or `y - 1` (to the left). For a copy
/// with `lo = min(x, y)` and `hi = max(x, y)` the gap integrals are
///
/// `J = int_{hi-1}^{lo} da E(a) int_{hi}^{a+1} db E(b) int_b^{a+1} dk K(k)`,
///
/// which reduces to one-dimensional running integrals of `E`, `K` and their
/// products.
pub fn continuum_forest_numerator(m: &ContinuumModel, x: f64, f: &dyn Fn(f64) -> f64) -> Result<f64> {
    let mean = continuum_expectation(m, f);
    let scale = m.grid().iter().fold(1.0f64, |s, &y| s.max(f(y).abs()));
    let tolerance = CONTINUUM_CENTER_TOL * scale;
    if mean.abs() > tolerance {
        return Err(Error::Uncentered { mean, tolerance });
    }
    Ok(numerator_unchecked(m, x, f))
}

fn numerator_unchecked(m: &ContinuumModel, x: f64, f: &dyn Fn(f64) -> f64) -> f64 {
    let p = m.panels;
    let h = m.h();
    // nodes t_j = x - 1 + j h, j = 0..=2P; rescale E and K by a common shift
    let log_e: Vec<f64> = (0..=2 * p).map(|j| m.log_e(x - 1.0 + j as f64 * h)).collect();
    let shift = 0.5 * (log_e.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        + log_e.iter().copied().fold(f64::INFINITY, f64::min));
    let e: Vec<f64> = log_e.iter().map(|l| (l - shift).exp()).collect();
    let k: Vec<f64> = log_e.iter().map(|l| (shift - l).exp()).collect();
    let kc = cumulative_simpson(&k, h);
    let ec = cumulative_simpson(&e, h);
    let ekc_integrand: Vec<f64> = e.iter().zip(&kc).map(|(a, b)| a * b).collect();
    let ekc = cumulative_simpson(&ekc_integrand, h);

    // functions of a = t_j, j = 0..=P, that pair E(a) with tables at a + 1
    let c1 = cumulative_simpson(&(0..=p).map(|j| e[j] * kc[j + p] * ec[j + p]).collect::<Vec<_>>(), h);
    let c2 = cumulative_simpson(&(0..=p).map(|j| e[j] * kc[j + p]).collect::<Vec<_>>(), h);
    let c3 = cumulative_simpson(&(0..=p).map(|j| e[j] * ekc[j + p]).collect::<Vec<_>>(), h);
    let c4 = cumulative_simpson(&e[..=p], h);

    // J over a in [t_lo_a, t_hi_a] (a-table indices) with b lower limit at node hb
    let gap_integral = |from: usize, to: usize, hb: usize| {
        (c1[to] - c1[from]) - ec[hb] * (c2[to] - c2[from]) - (c3[to] - c3[from])
            + ekc[hb] * (c4[to] - c4[from])
    };
    let integrand: Vec<f64> = (0..=p)
        .map(|mi| {
            let y = x + mi as f64 * h;
            // copy to the right of x: lo = x (node P), hi = y (node P + mi)
            let right = k[p + mi] * gap_integral(mi, p, p + mi);
            // copy to the left: lo = y - 1 (node mi), hi = x (node P)
            let left = k[mi] * gap_integral(0, mi, p);
            f(y.rem_euclid(1.0)) * (right + left)
        })
        .collect();
    (-0.5 * m.beta * m.epsilon).exp() * simpson(&integrand, h)
}

/// `rho_inf` and `V_inf = -numerator / int w_inf` on a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumProfile {
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
    pub potential: Vec<f64>,
}

/// Continuum pseudo-potential of the dissipative source. Points are
/// evaluated in parallel and returned in input order.
pub fn continuum_pseudopotential(m: &ContinuumModel, grid: &[f64]) -> Result<ContinuumProfile> {
    let rho = continuum_stationary(m, grid)?;
    let source = continuum_source(m);
    let f = |y: f64| source.eval(y);
    let z = normalization(m);
    let potential: Vec<f64> = grid
        .par_iter()
        .map(|&x| -numerator_unchecked(m, x, &f) / z)
        .collect();
    if potential.iter().chain(&rho).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("continuum pseudo-potential"));
    }
    Ok(ContinuumProfile {
        x: grid.to_vec(),
        rho,
        potential,
    })
}

/// Finite-ring values aligned with a continuum profile: `N rho_N` and
/// `V_N / N` at `x = i / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteComparison {
    pub n_sites: usize,
    pub rho_scaled: Vec<f64>,
    pub potential_scaled: Vec<f64>,
}

/// Write `x,rho_inf,V_inf` (plus `rho_N,V_N` when a comparison is given)
/// after `#` comment lines.
pub fn write_continuum_csv<W: Write>(
    out: W,
    profile: &ContinuumProfile,
    finite: Option<&FiniteComparison>,
    comments: &[String],
) -> Result<()> {
    let io = |e: std::io::Error| Error::Singular(format!("write failed: {e}"));
    let mut out = out;
    for c in comments {
        writeln!(out, "# {c}").map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(out);
    let cio = |e: csv::Error| Error::Singular(format!("write failed: {e}"));
    let mut header = vec!["x", "rho_inf", "V_inf"];
    if finite.is_some() {
        header.extend(["rho_N", "V_N"]);
    }
    w.write_record(&header).map_err(cio)?;
    for i in 0..profile.x.len() {
        let mut row = vec![
            profile.x[i].to_string(),
            profile.rho[i].to_string(),
            profile.potential[i].to_string(),
        ];
        if let Some(fc) = finite {
            row.push(fc.rho_scaled[i].to_string());
            row.push(fc.potential_scaled[i].to_string());
        }
        w.write_record(&row).map_err(cio)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sine_model(beta: f64, eps: f64, panels: usize) -> ContinuumModel {
        ContinuumModel::new(beta, eps, EnergyLandscape::Sine { amplitude: 0.3 }, panels).unwrap()
    }

    #[test]
    fn simpson_rules() {
        let h = 0.1;
        for n in [3usize, 4, 7, 10] {
            let xs: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
            let vals: Vec<f64> = xs.iter().map(|x| x * x * x).collect();
            let end = xs[n - 1];
            assert_relative_eq!(simpson(&vals, h), end.powi(4) / 4.0, max_relative = 1e-12);
            let squares: Vec<f64> = xs.iter().map(|x| x * x).collect();
            let cum = cumulative_simpson(&squares, h);
            for (x, c) in xs.iter().zip(&cum) {
                assert!((c - x.powi(3) / 3.0).abs() < 1e-15, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn cumulative_simpson_is_fourth_order() {
        let err = |p: usize| {
            let h = 1.0 / p as f64;
            let vals: Vec<f64> = (0..=p).map(|i| (3.0 * i as f64 * h).exp()).collect();
            let cum = cumulative_simpson(&vals, h);
            (0..=p)
                .map(|i| (cum[i] - ((3.0 * i as f64 * h).exp() - 1.0) / 3.0).abs())
                .fold(0.0, f64::max)
        };
        let order = (err(64) / err(128)).log2();
        assert!(order > 3.5, "order {order}");
    }

    #[test]
    fn tree_weight_closed_form() {
        let m = ContinuumModel::new(1.0, 1.0, EnergyLandscape::flat(), 128).unwrap();
        let expected = 0.5f64.exp() * (1.0 - (-1.0f64).exp());
        assert_relative_eq!(continuum_tree_weight(&m, 0.0), expected, max_relative = 1e-10);
    }

    #[test]
    fn flat_landscape_is_uniform() {
        let m = ContinuumModel::new(2.0, 1.5, EnergyLandscape::flat(), 64).unwrap();
        for r in continuum_stationary(&m, &[0.0, 0.3, 0.9]).unwrap() {
            assert_relative_eq!(r, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn equilibrium_is_gibbs() {
        let m = sine_model(2.0, 0.0, 256);
        let grid = [0.0, 0.1, 0.25, 0.5, 0.8];
        let rho = continuum_stationary(&m, &grid).unwrap();
        let z = periodic_mean(&m.grid().iter().map(|&x| (-2.0 * 0.3 * (std::f64::consts::TAU * x).sin()).exp()).collect::<Vec<_>>());
        for (x, r) in grid.iter().zip(&rho) {
            let g = (-2.0 * 0.3 * (std::f64::consts::TAU * x).sin()).exp() / z;
            assert_relative_eq!(*r, g, max_relative = 1e-9);
        }
    }

    #[test]
    fn zero_source_zero_numerator() {
        let m = sine_model(0.5, 2.0, 64);
        assert_eq!(continuum_forest_numerator(&m, 0.3, &|_| 0.0).unwrap(), 0.0);
        assert!(matches!(
            continuum_forest_numerator(&m, 0.3, &|_| 1.0),
            Err(Error::Uncentered { .. })
        ));
    }

    #[test]
    fn source_is_centered() {
        let m = sine_model(0.5, 2.0, 128);
        let s = continuum_source(&m);
        assert!(continuum_expectation(&m, &|x| s.eval(x)).abs() < 1e-14);
    }

    #[test]
    fn doubling_panels_changes_little() {
        let coarse = sine_model(0.5, 3.0, DEFAULT_PANELS);
        let fine = coarse.with_panels(2 * DEFAULT_PANELS).unwrap();
        let grid = [0.0, 0.25, 0.5, 0.75];
        let a = continuum_pseudopotential(&coarse, &grid).unwrap();
        let b = continuum_pseudopotential(&fine, &grid).unwrap();
        let amp = b.potential.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..grid.len() {
            assert!((a.rho[i] - b.rho[i]).abs() < 1e-6 * b.rho[i]);
            assert!((a.potential[i] - b.potential[i]).abs() < 1e-6 * amp);
        }
    }

    #[test]
    fn family_restriction() {
        let ring = RingModel::from_landscape(10, 2.0, 1.0, RateFamily::Unbounded1, &EnergyLandscape::default()).unwrap();
        let err = ContinuumModel::from_ring(&ring, EnergyLandscape::default(), 128).unwrap_err();
        assert!(err.to_string().contains("continuum limit defined for family 2 only"));
        assert!(ContinuumModel::new(1.0, 1.0, EnergyLandscape::default(), 32).is_err());
    }
}
