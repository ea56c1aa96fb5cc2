//! Spanning trees and two-tree forests of the ring, and the two quantities
//! built from them: the Kirchhoff stationary distribution and the forest
//! formula for the pseudo-potential.
//!
//! A ring subgraph in which every vertex has at most one outgoing edge is
//! written as a [`ForestCode`]: slot `i` describes the edge between sites `i`
//! and `i + 1` (mod `n`). Removing one slot leaves a path, and once a root is
//! chosen the orientation of every remaining edge is forced. So a rooted
//! spanning tree is fixed by (gap, root) and a rooted two-tree forest by
//! (two gaps, two roots).
//!
//! Weights are accumulated as logarithms throughout, so low temperatures
//! and strong driving do not overflow.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Direction, StationaryDistribution, TransitionRates};

/// Orientation code of a subgraph of the ring.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ForestCode(Vec<i8>);

impl ForestCode {
    pub fn new(slots: Vec<i8>) -> Result<Self> {
        if let Some(&bad) = slots.iter().find(|s| !(-1..=1).contains(*s)) {
            return Err(crate::error::invalid(
                "code",
                format!("entries must be -1, 0 or 1, found {bad}"),
            ));
        }
        Ok(ForestCode(slots))
    }

    pub fn slots(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.0.iter().filter(|&&s| s != 0).count()
    }

    /// The unique outgoing neighbour of `site`, or `None` for a root.
    ///
    /// Returns `Err` if the site has two outgoing edges.
    pub fn successor(&self, site: usize) -> Result<Option<usize>> {
        let n = self.len();
        let forward = self.0[site] == 1;
        let prev = (site + n - 1) % n;
        let backward = self.0[prev] == -1;
        match (forward, backward) {
            (true, true) => Err(crate::error::invalid(
                "code",
                format!("site {site} has two outgoing edges"),
            )),
            (true, false) => Ok(Some((site + 1) % n)),
            (false, true) => Ok(Some(prev)),
            (false, false) => Ok(None),
        }
    }

    /// Follow outgoing edges from `site` to its root. `None` if the walk
    /// does not terminate or a vertex has two outgoing edges.
    pub fn root_of(&self, site: usize) -> Option<usize> {
        let mut cur = site;
        for _ in 0..=self.len() {
            match self.successor(cur) {
                Ok(Some(next)) => cur = next,
                Ok(None) => return Some(cur),
                Err(_) => return None,
            }
        }
        None
    }

    /// Sites with no outgoing edge.
    pub fn roots(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&s| matches!(self.successor(s), Ok(None)))
            .collect()
    }
}

impl fmt::Display for ForestCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "]")
    }
}

fn require_graph_size(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::RingTooSmall { n, min: 3 });
    }
    Ok(())
}

fn require_site(site: usize, n: usize) -> Result<()> {
    if site >= n {
        return Err(Error::SiteOutOfRange { site, n });
    }
    Ok(())
}

/// Write the orientation of a path of `len` vertices starting at `start`
/// (clockwise) rooted at `root` into `slots`. Edge slots outside the path are
/// left untouched.
fn orient_arc(slots: &mut [i8], start: usize, len: usize, root: usize) {
    let n = slots.len();
    let offset = (root + n - start) % n;
    for j in 0..len - 1 {
        slots[(start + j) % n] = if j < offset { 1 } else { -1 };
    }
}

/// Offset of `site` along the arc starting at `start`, if it lies within the
/// first `len` vertices.
fn arc_offset(site: usize, start: usize, len: usize, n: usize) -> Option<usize> {
    let off = (site + n - start) % n;
    (off < len).then_some(off)
}

/// All spanning trees rooted at `root`, one per missing edge slot, ordered by
/// the position of the gap.
pub fn enumerate_rooted_trees(n: usize, root: usize) -> Result<Vec<ForestCode>> {
    require_graph_size(n)?;
    require_site(root, n)?;
    Ok((0..n)
        .map(|gap| {
            let mut slots = vec![0i8; n];
            orient_arc(&mut slots, (gap + 1) % n, n, root);
            ForestCode(slots)
        })
        .collect())
}

/// All two-tree spanning forests in which `x` and `y` share a tree rooted at
/// `y`. Ordered lexicographically by the gap pair, then by the root of the
/// other tree.
pub fn enumerate_forests(n: usize, x: usize, y: usize) -> Result<Vec<ForestCode>> {
    require_graph_size(n)?;
    require_site(x, n)?;
    require_site(y, n)?;
    let mut out = Vec::new();
    for g1 in 0..n {
        for g2 in g1 + 1..n {
            let arcs = [(g1 + 1, g2 - g1), ((g2 + 1) % n, n - (g2 - g1))];
            for (k, &(start, len)) in arcs.iter().enumerate() {
                if arc_offset(x, start, len, n).is_none() || arc_offset(y, start, len, n).is_none() {
                    continue;
                }
                let (other_start, other_len) = arcs[1 - k];
                let mut other_roots: Vec<usize> = (0..other_len).map(|j| (other_start + j) % n).collect();
                other_roots.sort_unstable();
                for r in other_roots {
                    let mut slots = vec![0i8; n];
                    orient_arc(&mut slots, start, len, y);
                    orient_arc(&mut slots, other_start, other_len, r);
                    out.push(ForestCode(slots));
                }
            }
        }
    }
    Ok(out)
}

/// Product of edge weights; an edgeless code has weight 1.
pub fn weight<R: TransitionRates + ?Sized>(code: &ForestCode, rates: &R) -> f64 {
    log_weight(code, rates).exp()
}

pub fn log_weight<R: TransitionRates + ?Sized>(code: &ForestCode, rates: &R) -> f64 {
    let n = code.len();
    code.0
        .iter()
        .enumerate()
        .map(|(i, &s)| match s {
            1 => rates.log_rate(i, Direction::Clockwise),
            -1 => rates.log_rate((i + 1) % n, Direction::CounterClockwise),
            _ => 0.0,
        })
        .sum()
}

/// Streaming log-sum-exp.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    scaled: f64,
}

impl LogSum {
    const EMPTY: LogSum = LogSum {
        max: f64::NEG_INFINITY,
        scaled: 0.0,
    };

    fn add(&mut self, v: f64) {
        if v > self.max {
            self.scaled = self.scaled * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.scaled += (v - self.max).exp();
        }
    }

    fn value(self) -> f64 {
        if self.scaled == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Precomputed log-weight tables for one set of ring rates.
///
/// Positions are unwrapped to `0..2n` so that every arc is a contiguous
/// interval. With `cw[t] = ln k(t, +)` and `ccw[t] = ln k(t+1, -)` (the two
/// orientations of slot `t`), the arc `s..s+len` rooted at `c` has log weight
/// `(Pcw[c] - Pcw[s]) + (Pccw[s+len-1] - Pccw[c])`.
#[derive(Debug, Clone)]
pub struct ForestWeights {
    n: usize,
    pcw: Vec<f64>,
    pccw: Vec<f64>,
    /// `arc_total[s * (n + 1) + len]`: log of the sum over roots of arc weights.
    arc_total: Vec<f64>,
    log_trees: Vec<f64>,
    log_total: f64,
}

impl ForestWeights {
    pub fn new<R: TransitionRates + ?Sized>(rates: &R) -> Result<Self> {
        let n = rates.n_sites();
        require_graph_size(n)?;
        let mut pcw = vec![0.0; 2 * n + 1];
        let mut pccw = vec![0.0; 2 * n + 1];
        for t in 0..2 * n {
            let cw = rates.log_rate(t % n, Direction::Clockwise);
            let ccw = rates.log_rate((t + 1) % n, Direction::CounterClockwise);
            if !(cw.is_finite() && ccw.is_finite()) {
                return Err(Error::NonFinite("log rates"));
            }
            pcw[t + 1] = pcw[t] + cw;
            pccw[t + 1] = pccw[t] + ccw;
        }
        let mut arc_total = vec![f64::NEG_INFINITY; n * (n + 1)];
        for s in 0..n {
            arc_total[s * (n + 1) + 1] = 0.0;
            for len in 1..n {
                let extend = arc_total[s * (n + 1) + len] + (pccw[s + len] - pccw[s + len - 1]);
                let new_root = pcw[s + len] - pcw[s];
                arc_total[s * (n + 1) + len + 1] = log_add(extend, new_root);
            }
        }
        let mut fw = ForestWeights {
            n,
            pcw,
            pccw,
            arc_total,
            log_trees: Vec::new(),
            log_total: 0.0,
        };
        let log_trees: Vec<f64> = (0..n)
            .map(|root| {
                let mut acc = LogSum::EMPTY;
                for gap in 0..n {
                    acc.add(fw.arc_log_weight((gap + 1) % n, n, root));
                }
                acc.value()
            })
            .collect();
        let mut total = LogSum::EMPTY;
        for &w in &log_trees {
            total.add(w);
        }
        fw.log_total = total.value();
        fw.log_trees = log_trees;
        if !fw.log_total.is_finite() {
            return Err(Error::NonFinite("tree weights"));
        }
        Ok(fw)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Log weight of the arc of `len` vertices starting at `start`, rooted
    /// at `root` (which must lie on the arc).
    fn arc_log_weight(&self, start: usize, len: usize, root: usize) -> f64 {
        let c = start + (root + self.n - start) % self.n;
        debug_assert!(c < start + len);
        (self.pcw[c] - self.pcw[start]) + (self.pccw[start + len - 1] - self.pccw[c])
    }

    fn arc_log_total(&self, start: usize, len: usize) -> f64 {
        self.arc_total[start * (self.n + 1) + len]
    }

    /// `ln w(x)`: log total weight of spanning trees rooted at each site.
    pub fn log_tree_weights(&self) -> &[f64] {
        &self.log_trees
    }

    /// `ln w(F_{N-1})`: log total weight of all rooted spanning trees.
    pub fn log_total_tree_weight(&self) -> f64 {
        self.log_total
    }

    /// `ln w(F_{N-2}^{x -> y})` for every `y`. Costs O(n^3).
    pub fn log_forest_row(&self, x: usize) -> Vec<f64> {
        let n = self.n;
        let mut acc = vec![LogSum::EMPTY; n];
        for g1 in 0..n {
            for g2 in g1 + 1..n {
                let arcs = [(g1 + 1, g2 - g1), ((g2 + 1) % n, n - (g2 - g1))];
                let k = usize::from(arc_offset(x, arcs[0].0, arcs[0].1, n).is_none());
                let (start, len) = arcs[k];
                let (other_start, other_len) = arcs[1 - k];
                let other = self.arc_log_total(other_start, other_len);
                for j in 0..len {
                    let y = (start + j) % n;
                    acc[y].add(self.arc_log_weight(start, len, y) + other);
                }
            }
        }
        acc.into_iter().map(LogSum::value).collect()
    }

    /// `sum_y w(F^{x->y}) f(y) / w(F_{N-1})`, i.e. `-V(x)`.
    pub fn forest_ratio(&self, x: usize, f: &[f64]) -> f64 {
        self.log_forest_row(x)
            .iter()
            .zip(f)
            .map(|(lw, fy)| (lw - self.log_total).exp() * fy)
            .sum()
    }

    pub fn stationary(&self) -> StationaryDistribution {
        let probs = self.log_trees.iter().map(|w| (w - self.log_total).exp()).collect();
        StationaryDistribution::new(probs).expect("tree weights normalize to a distribution")
    }
}

/// `rho(x) = w(x) / sum_y w(y)` with `w(x)` the total weight of spanning
/// trees rooted at `x`. The `n` trees rooted at `x` are indexed by the
/// missing edge slot.
pub fn kirchhoff_stationary<R: TransitionRates + ?Sized>(rates: &R) -> Result<StationaryDistribution> {
    Ok(ForestWeights::new(rates)?.stationary())
}

/// Solution `V` of `L V = f` with `<V> = 0`, plus the source it solves for.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoPotential {
    pub values: Vec<f64>,
    pub source: Vec<f64>,
    /// `max_x |(L V)(x) - f(x)|`
    pub residual: f64,
}

/// Whether [`forest_pseudopotential`] may subtract the stationary mean from
/// the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centering {
    /// Reject sources whose stationary mean is not zero.
    Require,
    /// Replace `f` by `f - <f>` first.
    Auto,
}

/// Absolute tolerance on `<f>` accepted as centered, scaled by `max|f|`.
pub const CENTER_TOL: f64 = 1e-10;

pub(crate) fn check_centered(mean: f64, f: &[f64]) -> Result<()> {
    let scale = f.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tolerance = CENTER_TOL * scale;
    if mean.abs() > tolerance {
        return Err(Error::Uncentered { mean, tolerance });
    }
    Ok(())
}

/// `max_x |(L V)(x) - f(x)|` evaluated directly from the rates.
pub fn ring_residual<R: TransitionRates + ?Sized>(rates: &R, v: &[f64], f: &[f64]) -> f64 {
    let n = rates.n_sites();
    (0..n)
        .map(|x| {
            let up = Direction::Clockwise.step(x, n);
            let down = Direction::CounterClockwise.step(x, n);
            let lv = rates.rate(x, Direction::Clockwise) * (v[up] - v[x])
                + rates.rate(x, Direction::CounterClockwise) * (v[down] - v[x]);
            (lv - f[x]).abs()
        })
        .fold(0.0, f64::max)
}

/// `V(x) = -sum_y w(F_{N-2}^{x->y}) f(y) / w(F_{N-1})`.
///
/// Total cost O(n^4); rows are evaluated in parallel and collected in site
/// order, so the result does not depend on the thread count.
pub fn forest_pseudopotential<R: TransitionRates + ?Sized>(
    rates: &R,
    f: &[f64],
    centering: Centering,
) -> Result<PseudoPotential> {
    let fw = ForestWeights::new(rates)?;
    let n = fw.n();
    if f.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: f.len(),
        });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("source"));
    }
    let rho = fw.stationary();
    let mean = rho.expectation(f)?;
    let source = match centering {
        Centering::Auto => f.iter().map(|v| v - mean).collect(),
        Centering::Require => {
            check_centered(mean, f)?;
            f.to_vec()
        }
    };
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|x| -fw.forest_ratio(x, &source))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pseudo-potential"));
    }
    let residual = ring_residual(rates, &values, &source);
    Ok(PseudoPotential {
        values,
        source,
        residual,
    })
}
