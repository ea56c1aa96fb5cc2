//! Rooted spanning trees and two-tree forests of a small ring, checked
//! against the fast log-space tables.

use ringwalk::forest::{enumerate_forests, enumerate_rooted_trees, weight, ForestWeights};
use ringwalk::{EnergyLandscape, RateFamily, RingModel};

fn main() -> ringwalk::Result<()> {
    let n = 4;
    println!("trees rooted at 0 on Z_{n}:");
    for code in enumerate_rooted_trees(n, 0)? {
        println!("  {code}");
    }
    for y in 0..n {
        let forests = enumerate_forests(n, 0, y)?;
        println!("forests with 0 in the tree of {y}: {}", forests.len());
        for code in &forests {
            println!("  {code}  roots {:?}", code.roots());
        }
    }

    let m = RingModel::from_landscape(n, 0.7, 1.5, RateFamily::Bounded3, &EnergyLandscape::default())?;
    let tables = ForestWeights::new(&m)?;
    let row = tables.log_forest_row(0);
    for y in 0..n {
        let brute: f64 = enumerate_forests(n, 0, y)?.iter().map(|c| weight(c, &m)).sum();
        println!("w(F^(0->{y})): enumerated {brute:.12}  table {:.12}", row[y].exp());
    }
    Ok(())
}
