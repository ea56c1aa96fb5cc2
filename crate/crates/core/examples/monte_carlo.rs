//! Gillespie estimate of `int_0^inf E_x[f(X_t)] dt`, which equals `-V(x)`.

use ringwalk::mc::{relaxation_time, simulate_excess, SimConfig};
use ringwalk::thermo::dissipative_source;
use ringwalk::{build_generator, forest_pseudopotential, Centering, EnergyLandscape, RateFamily, RingModel};

fn main() -> ringwalk::Result<()> {
    let m = RingModel::from_landscape(5, 1.0, 1.0, RateFamily::Unbounded1, &EnergyLandscape::default())?;
    let f = dissipative_source(&m)?.values;
    let v = forest_pseudopotential(&m, &f, Centering::Require)?.values;
    let tau = relaxation_time(&build_generator(&m)?)?;
    let cfg = SimConfig {
        seed: 7,
        trajectories: 20_000,
        horizon: 20.0 * tau,
        burn_in: 0.0,
    };
    let est = simulate_excess(&m, &f, &cfg)?;
    println!("relaxation time {tau:.4}");
    for x in 0..5 {
        let z = (est.estimates[x] + v[x]) / est.stderr[x];
        println!(
            "x={x}  -V {:+.5}  MC {:+.5} +- {:.5}  z {z:+.2}",
            -v[x], est.estimates[x], est.stderr[x]
        );
    }
    Ok(())
}
