//! Pseudo-potential of the dissipative source on a 30-site ring.

use ringwalk::thermo::dissipative_source;
use ringwalk::{forest_pseudopotential, Centering, EnergyLandscape, RateFamily, RingModel};

fn main() -> ringwalk::Result<()> {
    let m = RingModel::from_landscape(30, 2.0, 3.0, RateFamily::Unbounded1, &EnergyLandscape::default())?;
    let f = dissipative_source(&m)?;
    let v = forest_pseudopotential(&m, &f.values, Centering::Require)?;
    let n = m.n_sites();
    let (argmax, vmax) = v
        .values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best });
    for (i, x) in v.values.iter().enumerate() {
        println!("{:.4} {x:+.6}", i as f64 / n as f64);
    }
    println!("max V = {vmax:.6} at x = {:.3}", argmax as f64 / n as f64);
    println!("residual |LV - f| = {:.2e}", v.residual);
    Ok(())
}
