//! Family-2 rings approach the continuum diffusion: `N rho_N -> rho_inf`
//! and `V_N / N -> V_inf`, with the error shrinking about fourfold per
//! doubling of `N`.

use ringwalk::diffusion::{continuum_pseudopotential, ContinuumModel, DEFAULT_PANELS};
use ringwalk::thermo::dissipative_source;
use ringwalk::{forest_pseudopotential, stationary, Centering, EnergyLandscape, RateFamily, RingModel};

fn main() -> ringwalk::Result<()> {
    let landscape = EnergyLandscape::default();
    let (temperature, eps) = (2.0, 2.0);
    let mut previous: Option<f64> = None;
    for n in [25, 50, 100, 200] {
        let ring = RingModel::from_landscape(n, temperature, eps, RateFamily::Unbounded2, &landscape)?;
        let cm = ContinuumModel::from_ring(&ring, landscape.clone(), DEFAULT_PANELS)?;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let profile = continuum_pseudopotential(&cm, &xs)?;
        let rho = stationary(&ring)?;
        let v = forest_pseudopotential(&ring, &dissipative_source(&ring)?.values, Centering::Require)?;
        let rho_err = rho
            .probs()
            .iter()
            .zip(&profile.rho)
            .map(|(p, q)| (p * n as f64 - q).abs())
            .fold(0.0, f64::max);
        let v_err = v
            .values
            .iter()
            .zip(&profile.potential)
            .map(|(a, b)| (a / n as f64 - b).abs())
            .fold(0.0, f64::max);
        let ratio = previous.map(|p| format!("  ratio {:.2}", p / rho_err)).unwrap_or_default();
        println!("N={n:4}  sup rho error {rho_err:.3e}  sup V error {v_err:.3e}{ratio}");
        previous = Some(rho_err);
    }
    Ok(())
}
