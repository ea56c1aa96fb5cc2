//! Library routes against oracles written from scratch here.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ringwalk::diffusion::{continuum_stationary, continuum_tree_weight, ContinuumModel};
use ringwalk::pseudo_inverse::{drazin_matrix, group_inverse, time_integral};
use ringwalk::thermo::heat_capacity;
use ringwalk::{
    build_generator, forest_pseudopotential, kirchhoff_stationary, Centering, Direction, EnergyLandscape, RateFamily,
    RingModel, TransitionRates,
};

fn random_model(r: &mut ChaCha8Rng, n: usize) -> RingModel {
    let family = RateFamily::ALL[r.random_range(0..3)];
    let amp: f64 = r.random_range(0.0..1.0);
    let energy = (0..n).map(|_| amp * r.random_range(-1.0..1.0)).collect();
    RingModel::new(n, r.random_range(0.3..5.0), r.random_range(-4.0..4.0), family, energy).unwrap()
}

/// Out-edge choice per site: 0 none, 1 clockwise, 2 counter-clockwise.
/// Returns the root reached from every site, or None if a cycle exists.
fn roots(choice: &[u8]) -> Option<Vec<usize>> {
    let n = choice.len();
    let next = |i: usize| match choice[i] {
        0 => None,
        1 => Some((i + 1) % n),
        _ => Some((i + n - 1) % n),
    };
    (0..n)
        .map(|start| {
            let mut at = start;
            for _ in 0..=n {
                match next(at) {
                    None => return Some(at),
                    Some(j) => at = j,
                }
            }
            None
        })
        .collect()
}

/// V(x) = -sum_y w(F^{x->y}) f(y) / sum_r w(T_r) by direct enumeration.
fn brute_force_potential(m: &RingModel, f: &[f64]) -> Vec<f64> {
    let n = m.n_sites();
    let mut trees = 0.0;
    let mut forests = vec![vec![0.0; n]; n];
    for code in 0..3usize.pow(n as u32) {
        let choice: Vec<u8> = (0..n).map(|i| ((code / 3usize.pow(i as u32)) % 3) as u8).collect();
        let Some(root) = roots(&choice) else { continue };
        let w: f64 = choice
            .iter()
            .enumerate()
            .map(|(i, &c)| match c {
                0 => 1.0,
                1 => m.rate(i, Direction::Clockwise),
                _ => m.rate(i, Direction::CounterClockwise),
            })
            .product();
        match choice.iter().filter(|&&c| c == 0).count() {
            1 => trees += w,
            2 => {
                for x in 0..n {
                    forests[x][root[x]] += w;
                }
            }
            _ => {}
        }
    }
    (0..n)
        .map(|x| -(0..n).map(|y| forests[x][y] * f[y]).sum::<f64>() / trees)
        .collect()
}

fn power_stationary(l: &DMatrix<f64>) -> Vec<f64> {
    let n = l.nrows();
    let lambda = (0..n).map(|i| -l[(i, i)]).fold(0.0, f64::max) * 1.5;
    let p = DMatrix::identity(n, n) + l / lambda;
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..200_000 {
        let next = p.transpose() * &v;
        let done = (&next - &v).amax() < 1e-16;
        v = next;
        if done {
            break;
        }
    }
    let s = v.sum();
    v.iter().map(|x| x / s).collect()
}

#[test]
fn forest_formula_against_enumeration() {
    let mut r = ChaCha8Rng::seed_from_u64(31);
    for n in 3..=7 {
        for _ in 0..4 {
            let m = random_model(&mut r, n);
            let rho = kirchhoff_stationary(&m).unwrap();
            let raw: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
            let f = rho.center(&raw).unwrap();
            let ours = forest_pseudopotential(&m, &f, Centering::Require).unwrap().values;
            let brute = brute_force_potential(&m, &f);
            let scale = brute.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            for (a, b) in ours.iter().zip(&brute) {
                assert!((a - b).abs() <= 1e-11 * scale, "n={n}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn stationary_against_power_iteration() {
    let mut r = ChaCha8Rng::seed_from_u64(32);
    for n in [3, 5, 9, 16] {
        let m = random_model(&mut r, n);
        let ours = kirchhoff_stationary(&m).unwrap();
        let power = power_stationary(build_generator(&m).unwrap().matrix());
        for (a, b) in ours.probs().iter().zip(&power) {
            assert_relative_eq!(*a, *b, max_relative = 1e-9);
        }
    }
}

#[test]
fn group_inverse_against_fundamental_matrix() {
    let mut r = ChaCha8Rng::seed_from_u64(33);
    for n in [2, 3, 6, 11] {
        let m = random_model(&mut r, n);
        let l = build_generator(&m).unwrap();
        let rho = power_stationary(l.matrix());
        let pi = DMatrix::from_fn(n, n, |_, j| rho[j]);
        // L# = Pi - (Pi - L)^{-1}
        let z = (&pi - l.matrix()).try_inverse().unwrap();
        let oracle = &pi - z;
        let scale = oracle.amax();
        assert!((group_inverse(l.matrix()).unwrap() - &oracle).amax() < 1e-9 * scale);
        assert!((drazin_matrix(&l).unwrap() - &oracle).amax() < 1e-9 * scale);
    }
}

#[test]
fn time_integral_against_runge_kutta() {
    let m = RingModel::from_landscape(4, 1.0, 1.5, RateFamily::Bounded3, &EnergyLandscape::default()).unwrap();
    let l = build_generator(&m).unwrap();
    let rho = kirchhoff_stationary(&m).unwrap();
    let f = rho.center(&[1.0, 0.0, -2.0, 0.5]).unwrap();
    let a = l.matrix();
    let mut g = DVector::from_column_slice(&f);
    let mut acc = DVector::zeros(4);
    let h = 1e-3;
    for _ in 0..60_000 {
        // augmented system d/dt (g, acc) = (L g, g)
        let k1 = a * &g;
        let k2 = a * (&g + &k1 * (h / 2.0));
        let k3 = a * (&g + &k2 * (h / 2.0));
        let k4 = a * (&g + &k3 * h);
        let i1 = g.clone();
        let i2 = &g + &k1 * (h / 2.0);
        let i3 = &g + &k2 * (h / 2.0);
        let i4 = &g + &k3 * h;
        acc += (i1 + i2 * 2.0 + i3 * 2.0 + i4) * (h / 6.0);
        g += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    let ours = time_integral(&l, &f, 1e-13).unwrap();
    for i in 0..4 {
        assert!((ours[i] - acc[i]).abs() < 1e-9, "{} vs {}", ours[i], acc[i]);
    }
}

/// `d<u>/dT - <dV/dT>` with V from a dense bordered solve and a
/// fourth-order central difference.
fn dense_heat_capacity(n: usize, t: f64, eps: f64, family: RateFamily) -> f64 {
    let at = |t: f64| -> (f64, Vec<f64>, Vec<f64>) {
        let m = RingModel::from_landscape(n, t, eps, family, &EnergyLandscape::default()).unwrap();
        let l = build_generator(&m).unwrap().into_matrix();
        let mut b = DMatrix::zeros(n + 1, n + 1);
        b.view_mut((0, 0), (n, n)).copy_from(&l.transpose());
        for i in 0..n {
            b[(i, n)] = 1.0;
            b[(n, i)] = 1.0;
        }
        let mut rhs = DVector::zeros(n + 1);
        rhs[n] = 1.0;
        let rho: Vec<f64> = b.lu().solve(&rhs).unwrap().rows(0, n).iter().copied().collect();
        let h: Vec<f64> = (0..n)
            .map(|x| -eps * (m.rate(x, Direction::Clockwise) - m.rate(x, Direction::CounterClockwise)))
            .collect();
        let mean_h: f64 = rho.iter().zip(&h).map(|(p, h)| p * h).sum();
        let mut a = DMatrix::zeros(n + 1, n + 1);
        a.view_mut((0, 0), (n, n)).copy_from(&l);
        for i in 0..n {
            a[(i, n)] = 1.0;
            a[(n, i)] = rho[i];
        }
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = h[i] - mean_h;
        }
        let v: Vec<f64> = a.lu().solve(&rhs).unwrap().rows(0, n).iter().copied().collect();
        let mean_u: f64 = rho.iter().zip(m.energy()).map(|(p, u)| p * u).sum();
        (mean_u, v, rho)
    };
    let d = 1e-3 * t;
    let (_, _, rho) = at(t);
    let pts: Vec<_> = [-2.0, -1.0, 1.0, 2.0].iter().map(|k| at(t + k * d)).collect();
    let w = [1.0, -8.0, 8.0, -1.0];
    let du: f64 = pts.iter().zip(w).map(|(p, w)| w * p.0).sum::<f64>() / (12.0 * d);
    let dv: Vec<f64> = (0..n)
        .map(|x| pts.iter().zip(w).map(|(p, w)| w * p.1[x]).sum::<f64>() / (12.0 * d))
        .collect();
    du - rho.iter().zip(&dv).map(|(p, v)| p * v).sum::<f64>()
}

#[test]
fn heat_capacity_against_dense_differences() {
    for family in RateFamily::ALL {
        for (t, eps) in [(0.3, 2.0), (1.0, -3.0), (2.5, 1.0)] {
            let m = RingModel::from_landscape(9, t, eps, family, &EnergyLandscape::default()).unwrap();
            let ours = heat_capacity(&m, 1e-4).unwrap();
            let oracle = dense_heat_capacity(9, t, eps, family);
            assert!(
                (ours - oracle).abs() < 1e-6 * oracle.abs().max(1.0),
                "family {} T={t} eps={eps}: {ours} vs {oracle}",
                family.number()
            );
        }
    }
}

#[test]
fn continuum_closed_forms() {
    let flat = ContinuumModel::new(1.0, 1.0, EnergyLandscape::flat(), 512).unwrap();
    let expected = 0.5f64.exp() * (1.0 - (-1.0f64).exp());
    assert_relative_eq!(continuum_tree_weight(&flat, 0.0), expected, max_relative = 1e-10);

    let landscape = EnergyLandscape::Sine { amplitude: 0.3 };
    let eq = ContinuumModel::new(2.0, 0.0, landscape.clone(), 512).unwrap();
    let xs: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
    let rho = continuum_stationary(&eq, &xs).unwrap();
    let m = 100_000;
    let z = (0..m).map(|i| (-2.0 * landscape.eval((i as f64 + 0.5) / m as f64)).exp()).sum::<f64>() / m as f64;
    for (x, p) in xs.iter().zip(&rho) {
        assert_relative_eq!(*p, (-2.0 * landscape.eval(*x)).exp() / z, max_relative = 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forest_potential_solves_the_poisson_equation(
        n in 3usize..40,
        t in 0.2f64..5.0,
        eps in -5.0f64..5.0,
        family in 0usize..3,
        amp in 0.0f64..1.0,
        phase in 0.0f64..1.0,
    ) {
        let energy: Vec<f64> = (0..n)
            .map(|i| amp * (std::f64::consts::TAU * (i as f64 / n as f64 + phase)).sin())
            .collect();
        let m = RingModel::new(n, t, eps, RateFamily::ALL[family], energy).unwrap();
        let rho = kirchhoff_stationary(&m).unwrap();
        let raw: Vec<f64> = (0..n).map(|i| ((3 * i) % 7) as f64).collect();
        let f = rho.center(&raw).unwrap();
        let v = forest_pseudopotential(&m, &f, Centering::Require).unwrap();
        let lv = build_generator(&m).unwrap().apply(&v.values).unwrap();
        let scale = v.values.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        for i in 0..n {
            prop_assert!((lv[i] - f[i]).abs() < 1e-9 * scale);
        }
        prop_assert!(rho.expectation(&v.values).unwrap().abs() < 1e-11 * scale);
    }
}

mod continuum {
    use super::*;
    use ringwalk::diffusion::{
        continuum_forest_numerator, continuum_pseudopotential, continuum_source, DEFAULT_PANELS,
    };
    use ringwalk::forest::ForestWeights;
    use ringwalk::thermo::dissipative_source;

    fn ring(n: usize, t: f64, eps: f64) -> RingModel {
        RingModel::from_landscape(n, t, eps, RateFamily::Unbounded2, &EnergyLandscape::default()).unwrap()
    }

    #[test]
    fn forest_numerator_converges() {
        let mut errs = Vec::new();
        for n in [48usize, 96, 192] {
            let m = ring(n, 2.0, 2.0);
            let cm = ContinuumModel::from_ring(&m, EnergyLandscape::default(), DEFAULT_PANELS).unwrap();
            let src = continuum_source(&cm);
            let fw = ForestWeights::new(&m).unwrap();
            let raw: Vec<f64> = (0..n).map(|i| src.eval(i as f64 / n as f64)).collect();
            let f = fw.stationary().center(&raw).unwrap();
            let mut err = 0.0f64;
            for x in [0, n / 4, n / 2, 3 * n / 4] {
                let num: f64 = fw.log_forest_row(x).iter().zip(&f).map(|(lw, fy)| lw.exp() * fy).sum();
                let c = continuum_forest_numerator(&cm, x as f64 / n as f64, &|y| src.eval(y)).unwrap();
                err = err.max((num / (n as f64).powi(4) - c).abs());
            }
            errs.push(err);
        }
        assert!(errs[0] / errs[1] >= 1.7 && errs[1] / errs[2] >= 1.7, "{errs:?}");
    }

    #[test]
    fn finite_density_approaches_continuum() {
        let (n, t, eps) = (400, 2.0, 2.0);
        let m = ring(n, t, eps);
        let cm = ContinuumModel::from_ring(&m, EnergyLandscape::default(), DEFAULT_PANELS).unwrap();
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let cont = continuum_stationary(&cm, &xs).unwrap();
        let rho = kirchhoff_stationary(&m).unwrap();
        for (p, c) in rho.probs().iter().zip(&cont) {
            assert!((p * n as f64 - c).abs() < 0.02 * c);
        }
    }

    #[test]
    fn finite_potential_approaches_continuum() {
        let mut errs = Vec::new();
        for n in [40usize, 80, 160] {
            let m = ring(n, 1.0, 1.5);
            let cm = ContinuumModel::from_ring(&m, EnergyLandscape::default(), DEFAULT_PANELS).unwrap();
            let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
            let profile = continuum_pseudopotential(&cm, &xs).unwrap();
            let f = dissipative_source(&m).unwrap().values;
            let v = forest_pseudopotential(&m, &f, Centering::Require).unwrap().values;
            let err = v
                .iter()
                .zip(&profile.potential)
                .map(|(a, b)| (a / n as f64 - b).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] / errs[1] >= 1.7 && errs[1] / errs[2] >= 1.7, "{errs:?}");
    }

    #[test]
    fn continuum_potential_grows_with_driving() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let amplitude: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&eps| {
                let cm = ContinuumModel::new(1.0, eps, EnergyLandscape::default(), DEFAULT_PANELS).unwrap();
                let p = continuum_pseudopotential(&cm, &xs).unwrap();
                p.potential.iter().fold(0.0f64, |a, b| a.max(b.abs()))
            })
            .collect();
        assert!(amplitude[0] < amplitude[1] && amplitude[1] < amplitude[2], "{amplitude:?}");
    }
}
