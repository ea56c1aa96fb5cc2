//! Dense generalized inverses: matrix index, Drazin/group inverse,
//! Moore-Penrose inverse, and independent routes to `L_D^{-1} f` (bordered
//! solve, resolvent, time integral of the semigroup).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forest::check_centered;
use crate::model::{GeneratorMatrix, StationaryDistribution, RANK_RTOL};

/// Number of singular values above `RANK_RTOL * sigma_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_RTOL * max).count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexReport {
    /// Smallest `k >= 0` with `rank(A^k) = rank(A^{k+1})`.
    pub index: usize,
    /// `ranks[j] = rank(A^j)` for `j = 0..=index + 1`.
    pub ranks: Vec<usize>,
}

pub fn matrix_index(a: &DMatrix<f64>) -> IndexReport {
    let n = a.nrows();
    let mut ranks = vec![n];
    let mut power = DMatrix::identity(n, n);
    for k in 0..=n {
        power = &power * a;
        ranks.push(numerical_rank(&power));
        if ranks[k] == ranks[k + 1] {
            return IndexReport { index: k, ranks };
        }
    }
    IndexReport { index: n, ranks }
}

fn solve(system: DMatrix<f64>, rhs: DVector<f64>, what: &str) -> Result<DVector<f64>> {
    system
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular(what.to_string()))
}

/// Stationary distribution from the bordered system
/// `[[L^T, 1], [1^T, 0]] [rho; c] = [0; 1]`.
pub fn dense_stationary(l: &GeneratorMatrix) -> Result<StationaryDistribution> {
    let n = l.n();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&l.matrix().transpose());
    for i in 0..n {
        m[(i, n)] = 1.0;
        m[(n, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let sol = solve(m, rhs, "stationary bordered system")?;
    let mut probs: Vec<f64> = sol.rows(0, n).iter().copied().collect();
    // clear round-off negatives before validating
    for p in &mut probs {
        if *p < 0.0 && *p > -1e-14 {
            *p = 0.0;
        }
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    StationaryDistribution::new(probs)
}

/// `L_D^{-1} f` via the bordered system `[[L, 1], [rho^T, 0]] [V; c] = [f; 0]`.
///
/// The multiplier `c` equals `<f>`, so a nonzero `c` flags an uncentered
/// source and the call fails.
pub fn drazin_apply(l: &GeneratorMatrix, f: &[f64]) -> Result<Vec<f64>> {
    let rho = dense_stationary(l)?;
    drazin_apply_with(l, &rho, f)
}

/// As [`drazin_apply`] with a precomputed stationary distribution.
pub fn drazin_apply_with(l: &GeneratorMatrix, rho: &StationaryDistribution, f: &[f64]) -> Result<Vec<f64>> {
    let n = l.n();
    if f.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: f.len(),
        });
    }
    let sol = solve(bordered(l, rho), rhs_with_zero(f), "Drazin bordered system")?;
    check_centered(sol[n], f)?;
    Ok(sol.rows(0, n).iter().copied().collect())
}

fn bordered(l: &GeneratorMatrix, rho: &StationaryDistribution) -> DMatrix<f64> {
    let n = l.n();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(l.matrix());
    for i in 0..n {
        m[(i, n)] = 1.0;
        m[(n, i)] = rho.probs()[i];
    }
    m
}

fn rhs_with_zero(f: &[f64]) -> DVector<f64> {
    let mut rhs = DVector::zeros(f.len() + 1);
    rhs.rows_mut(0, f.len()).copy_from_slice(f);
    rhs
}

/// Full Drazin inverse of a generator, one column per centered unit vector
/// `e_j - rho_j 1` (the all-ones vector spans the kernel and is mapped to 0).
pub fn drazin_matrix(l: &GeneratorMatrix) -> Result<DMatrix<f64>> {
    let report = matrix_index(l.matrix());
    if report.index != 1 {
        return Err(Error::IndexMismatch {
            operation: "drazin_matrix",
            index: report.index,
            required: "1",
        });
    }
    let n = l.n();
    let rho = dense_stationary(l)?;
    let lu = bordered(l, &rho).lu();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let col: Vec<f64> = (0..n)
            .map(|i| f64::from(u8::from(i == j)) - rho.probs()[j])
            .collect();
        let sol = lu
            .solve(&rhs_with_zero(&col))
            .ok_or_else(|| Error::Singular("Drazin bordered system".into()))?;
        out.column_mut(j).copy_from(&sol.rows(0, n));
    }
    Ok(out)
}

/// Moore-Penrose inverse through the SVD with the shared rank threshold.
pub fn moore_penrose(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.is_empty() {
        return a.transpose();
    }
    let svd = a.clone().svd(true, true);
    let eps = RANK_RTOL * svd.singular_values.max();
    svd.pseudo_inverse(eps).expect("threshold is nonnegative")
}

/// Group inverse `A#` (`A A# A = A`, `A# A A# = A#`, `A A# = A# A`).
///
/// Exists exactly when the index is 0 or 1. Built from the full-rank
/// factorization `A = B C` as `B (C B)^{-2} C`.
pub fn group_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let report = matrix_index(a);
    match report.index {
        0 => a
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("invertible matrix".into())),
        1 => {
            let svd = a.clone().svd(true, true);
            let max = svd.singular_values.max();
            let r = report.ranks[1];
            if r == 0 {
                return Ok(DMatrix::zeros(n, n));
            }
            debug_assert!(svd.singular_values[r - 1] > RANK_RTOL * max);
            let u = svd.u.as_ref().expect("U requested");
            let vt = svd.v_t.as_ref().expect("V^T requested");
            let mut b = u.columns(0, r).into_owned();
            for j in 0..r {
                b.column_mut(j).scale_mut(svd.singular_values[j]);
            }
            let c = vt.rows(0, r).into_owned();
            let cb_inv = (&c * &b)
                .try_inverse()
                .ok_or(Error::NoGroupInverse { index: report.index })?;
            Ok(&b * (&cb_inv * &cb_inv) * &c)
        }
        index => Err(Error::NoGroupInverse { index }),
    }
}

/// Drazin inverse for index 0 (ordinary inverse) and index 1 (group
/// inverse). Higher indices are not supported.
pub fn drazin_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let index = matrix_index(a).index;
    if index > 1 {
        return Err(Error::IndexMismatch {
            operation: "drazin_inverse",
            index,
            required: "0 or 1",
        });
    }
    group_inverse(a)
}

/// `alpha (I + alpha L)^{-1} f`, which tends to `L_D^{-1} f` for centered
/// `f` as `alpha -> infinity`.
///
/// Evaluated as `alpha <f> 1 + x` with `(L + I/alpha) x = f - <f>`. The
/// exact `x` has stationary mean zero, so it is obtained from the bordered
/// system `[[L + I/alpha, 1], [rho^T, 0]]`, which stays well conditioned as
/// `alpha` grows (the plain solve loses about `alpha * eps` relative accuracy).
/// A mean within the centering tolerance is treated as round-off and the
/// `alpha <f>` term is dropped.
pub fn resolvent_apply(l: &GeneratorMatrix, alpha: f64, f: &[f64]) -> Result<Vec<f64>> {
    let n = l.n();
    if f.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: f.len(),
        });
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(crate::error::invalid("alpha", "must be positive and finite"));
    }
    let rho = dense_stationary(l)?;
    let mut mean = rho.expectation(f)?;
    let g = rho.center(f)?;
    if check_centered(mean, f).is_ok() {
        mean = 0.0;
    }
    let mut m = bordered(l, &rho);
    for i in 0..n {
        m[(i, i)] += 1.0 / alpha;
    }
    let sol = solve(m, rhs_with_zero(&g), "resolvent")?;
    Ok(sol.rows(0, n).iter().map(|v| v + alpha * mean).collect())
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(order);
    for i in 0..order {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = order as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn norm_inf(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `int_0^infinity e^{tL} f dt` by adaptive Gauss-Legendre panels, stopping
/// once `|e^{tL} f|_inf < cutoff`.
///
/// Since `d/dt e^{tL} f = L e^{tL} f`, the integral solves `L W = -f`, so it
/// equals `-L_D^{-1} f`. Intended for small dense problems.
pub fn time_integral(l: &GeneratorMatrix, f: &[f64], cutoff: f64) -> Result<Vec<f64>> {
    let n = l.n();
    let rho = dense_stationary(l)?;
    check_centered(rho.expectation(f)?, f)?;
    if cutoff.is_nan() || cutoff <= 0.0 {
        return Err(crate::error::invalid("cutoff", "must be positive"));
    }
    let lm = l.matrix();
    let hi = gauss_legendre(8);
    let lo = gauss_legendre(4);
    let panel = |width: f64, state: &DVector<f64>| {
        let rule = |nodes: &[(f64, f64)]| {
            let mut acc = DVector::zeros(n);
            for &(x, w) in nodes {
                let tau = 0.5 * width * (1.0 + x);
                acc += (lm * tau).exp() * state * (0.5 * width * w);
            }
            acc
        };
        (rule(&hi), rule(&lo))
    };
    let scale = lm.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut width = 1.0 / scale;
    let mut state = DVector::from_column_slice(f);
    let mut total = DVector::zeros(n);
    let panel_tol = 1e-15;
    let mut panels = 0usize;
    while norm_inf(&state) >= cutoff {
        panels += 1;
        if panels > 1_000_000 {
            return Err(Error::Singular("semigroup did not decay".into()));
        }
        let (fine, coarse) = panel(width, &state);
        let err = norm_inf(&(&fine - &coarse));
        if err > panel_tol * norm_inf(&state).max(1.0) * width && width * scale > 1e-6 {
            width *= 0.5;
            continue;
        }
        total += fine;
        state = (lm * width).exp() * state;
        if err < 0.01 * panel_tol * width {
            width *= 2.0;
        }
    }
    if total.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("time integral"));
    }
    Ok(total.iter().copied().collect())
}
