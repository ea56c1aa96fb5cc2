//! Stationary distribution from tree weights, against the dense null space
//! and, at zero driving, the Boltzmann weights.

use ringwalk::pseudo_inverse::dense_stationary;
use ringwalk::{build_generator, kirchhoff_stationary, EnergyLandscape, RateFamily, RingModel};

fn main() -> ringwalk::Result<()> {
    let landscape = EnergyLandscape::Sine { amplitude: 0.4 };
    let m = RingModel::from_landscape(10, 2.0, 1.0, RateFamily::Unbounded1, &landscape)?;
    let rho = kirchhoff_stationary(&m)?;
    let dense = dense_stationary(&build_generator(&m)?)?;
    for (x, (a, b)) in rho.probs().iter().zip(dense.probs()).enumerate() {
        println!("x={x}  trees {a:.12}  null space {b:.12}");
    }

    let eq = m.with_driving(0.0)?.with_family(RateFamily::Unbounded2);
    let rho = kirchhoff_stationary(&eq)?;
    let z: f64 = eq.energy().iter().map(|u| (-eq.beta() * u).exp()).sum();
    let worst = eq
        .energy()
        .iter()
        .zip(rho.probs())
        .map(|(u, p)| ((-eq.beta() * u).exp() / z - p).abs())
        .fold(0.0, f64::max);
    println!("eps = 0, family 2: max |rho - Gibbs| = {worst:.2e}");
    Ok(())
}
