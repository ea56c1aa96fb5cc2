//! Drazin, group and Moore-Penrose inverses of a generator, and the
//! routes that must agree with the forest formula.

use ringwalk::pseudo_inverse::{
    drazin_apply, drazin_inverse, group_inverse, matrix_index, moore_penrose, resolvent_apply, time_integral,
};
use ringwalk::{build_generator, forest_pseudopotential, stationary, Centering, GeneratorMatrix};
use ringwalk::{EnergyLandscape, RateFamily, RingModel};

fn main() -> ringwalk::Result<()> {
    let (a, b) = (0.5, 2.0);
    let l = GeneratorMatrix::two_state(a, b)?;
    println!("two states, a = {a}, b = {b}");
    println!("Drazin:{:.6}", drazin_inverse(l.matrix())?);
    println!("Moore-Penrose:{:.6}", moore_penrose(l.matrix()));

    let m = RingModel::from_landscape(6, 1.0, 2.0, RateFamily::Unbounded2, &EnergyLandscape::default())?;
    let l = build_generator(&m)?;
    let report = matrix_index(l.matrix());
    println!("index {} with ranks {:?}", report.index, report.ranks);

    let rho = stationary(&m)?;
    let f = rho.center(&[1.0, 2.0, 0.0, -1.0, 0.5, 0.0])?;
    let forest = forest_pseudopotential(&m, &f, Centering::Require)?.values;
    let bordered = drazin_apply(&l, &f)?;
    let group: Vec<f64> = (group_inverse(l.matrix())? * nalgebra::DVector::from_column_slice(&f))
        .iter()
        .copied()
        .collect();
    let resolvent = resolvent_apply(&l, 1e6, &f)?;
    let integral = time_integral(&l, &f, 1e-12)?;
    println!("    forest     bordered   group      resolvent  -integral");
    for i in 0..6 {
        println!(
            "{i}  {:+.6}  {:+.6}  {:+.6}  {:+.6}  {:+.6}",
            forest[i], bordered[i], group[i], resolvent[i], -integral[i]
        );
    }
    Ok(())
}
