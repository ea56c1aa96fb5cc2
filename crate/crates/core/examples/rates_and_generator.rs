//! Hopping rates of the three families and the generator they build.

use ringwalk::model::rate;
use ringwalk::{build_generator, Direction, EnergyLandscape, RateFamily, RingModel};

fn main() -> ringwalk::Result<()> {
    let landscape = EnergyLandscape::Sine { amplitude: 0.5 };
    for family in RateFamily::ALL {
        let m = RingModel::from_landscape(6, 1.0, 2.0, family, &landscape)?;
        println!("family {}", family.number());
        for x in 0..m.n_sites() {
            println!(
                "  x={x}  k+={:.6}  k-={:.6}",
                rate(&m, x, Direction::Clockwise)?,
                rate(&m, x, Direction::CounterClockwise)?
            );
        }
    }

    let m = RingModel::from_landscape(5, 1.0, 1.0, RateFamily::Unbounded1, &landscape)?;
    let l = build_generator(&m)?;
    println!("generator L (N = 5):\n{:.4}", l.matrix());
    let worst = l.matrix().row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max);
    println!("max |row sum| = {worst:.1e}");
    Ok(())
}
