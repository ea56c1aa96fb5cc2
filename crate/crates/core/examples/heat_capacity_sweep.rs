//! Heat capacity against temperature for each family at fixed driving,
//! written as CSV to stdout.

use ringwalk::thermo::{capacity_sweep, write_capacity_csv, SizeSpec, SweepSpec, TemperatureGrid};
use ringwalk::{EnergyLandscape, RateFamily};

fn main() -> ringwalk::Result<()> {
    let grid: TemperatureGrid = "0.05:5:30:log".parse()?;
    let mut curves = Vec::new();
    for family in RateFamily::ALL {
        let spec = SweepSpec {
            family,
            landscape: EnergyLandscape::default(),
            temperatures: grid.values(),
            epsilons: vec![0.0, 3.0],
            sizes: SizeSpec::List(vec![10]),
            fd_step: None,
        };
        curves.extend(capacity_sweep(&spec)?);
    }
    for c in &curves {
        eprintln!(
            "family {} eps {}: C(T_min) = {:+.4}, max |C| = {:.4}",
            c.family.number(),
            c.epsilon,
            c.capacities[0],
            c.max_abs()
        );
    }
    write_capacity_csv(std::io::stdout().lock(), &curves, &["heat capacity, N = 10".to_string()])
}
