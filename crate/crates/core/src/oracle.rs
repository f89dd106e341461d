//! Numerical ground truth: the stationary distribution of the walk cut to a
//! finite box, balance residuals of candidate measures, brute-force
//! partitions and a sampled convexity test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::curve::{self, CurveError, KernelPoly};
use crate::gamma::{canonical, same_coordinate, GammaSet, PartitionResult, WeightedTerm};
use crate::walk::{ValidatedWalk, WalkSpec};

/// Largest box solved directly; bigger boxes use power iteration.
pub const DIRECT_MAX_N: usize = 120;
pub const POWER_TOL: f64 = 1e-13;
pub const POWER_MAX_ITER: usize = 1_000_000;
/// Oracle cells lighter than this are left out of relative errors.
pub const MASS_FLOOR: f64 = 1e-13;
/// Cells required between the compared core and the truncation edge.
pub const MIN_MARGIN: usize = 10;
pub const BRUTE_FORCE_MAX: usize = 10;
/// Lower cut of the log-domain box for curves pinched at the origin.
pub const LOG_FLOOR: f64 = -13.815510557964274; // ln(1e-6)

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("truncation size {0} is below 8")]
    TooSmall(usize),
    #[error("power iteration stopped after {iterations} iterations at residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("zero pivot at state {0} in the direct solve")]
    ZeroPivot(usize),
    #[error("core {core} needs a margin of {MIN_MARGIN} inside the oracle box {n}")]
    InsufficientMargin { core: usize, n: usize },
    #[error("brute force handles at most {BRUTE_FORCE_MAX} terms, got {0}")]
    TooLarge(usize),
    #[error("several uncoupled partitions reach the maximum of {0} parts")]
    AmbiguousMaximum(usize),
}

/// A distribution on `{0..n}^2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeWindow {
    pub n: usize,
    /// Row-major: `values[i * (n + 1) + j]` is the mass of `(i, j)`.
    pub values: Vec<f64>,
}

impl LatticeWindow {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.n + 1) + j]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,pi\n");
        for i in 0..=self.n {
            for j in 0..=self.n {
                out.push_str(&format!("{i},{j},{:.16e}\n", self.get(i, j)));
            }
        }
        out
    }
}

/// Outgoing transitions of `(i, j)` as `(ds, dt, p)`, zero-probability
/// steps omitted and the origin's stay included.
fn moves(spec: &WalkSpec, i: usize, j: usize) -> Vec<(i8, i8, f64)> {
    let mut out = Vec::with_capacity(9);
    let mut push = |s: i8, t: i8, p: f64| {
        if p != 0.0 {
            out.push((s, t, p));
        }
    };
    match (i > 0, j > 0) {
        (true, true) => {
            for s in -1..=1 {
                for t in -1..=1 {
                    push(s, t, spec.p(s, t));
                }
            }
        }
        (true, false) => {
            for s in -1..=1 {
                push(s, 0, spec.h(s));
                push(s, 1, spec.p(s, 1));
            }
        }
        (false, true) => {
            for t in -1..=1 {
                push(0, t, spec.v(t));
                push(1, t, spec.p(1, t));
            }
        }
        (false, false) => {
            push(1, 0, spec.h(1));
            push(0, 1, spec.v(1));
            push(1, 1, spec.p(1, 1));
            push(0, 0, spec.origin_stay());
        }
    }
    out
}

/// Transition list of the chain cut to `{0..n}^2`; steps leaving the box
/// turn into self-loops.
fn truncated_moves(spec: &WalkSpec, n: usize) -> Vec<Vec<(usize, f64)>> {
    let side = n + 1;
    let mut all = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            let here = i * side + j;
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(9);
            for (s, t, p) in moves(spec, i, j) {
                let a = i as i64 + s as i64;
                let b = j as i64 + t as i64;
                let target = if a > n as i64 || b > n as i64 {
                    here
                } else {
                    a as usize * side + b as usize
                };
                match row.iter_mut().find(|(k, _)| *k == target) {
                    Some(e) => e.1 += p,
                    None => row.push((target, p)),
                }
            }
            all.push(row);
        }
    }
    all
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    for x in &mut v {
        *x /= total;
    }
    v
}

/// Stationary distribution of the truncated chain; direct solve up to
/// [`DIRECT_MAX_N`], power iteration beyond.
pub fn truncated_stationary(spec: &WalkSpec, n: usize) -> Result<LatticeWindow, OracleError> {
    if n <= DIRECT_MAX_N {
        direct_stationary(spec, n)
    } else {
        power_stationary(spec, n, POWER_TOL, POWER_MAX_ITER)
    }
}

/// Solves `pi (P - I) = 0` with `pi(0,0) = 1` by banded elimination, then
/// normalizes.
///
/// Every column of `P^T - I` is weakly diagonally dominant, so elimination
/// without pivoting is stable and keeps the fill inside the band.
pub fn direct_stationary(spec: &WalkSpec, n: usize) -> Result<LatticeWindow, OracleError> {
    if n < 8 {
        return Err(OracleError::TooSmall(n));
    }
    let side = n + 1;
    let size = side * side;
    let bw = side + 1;
    let width = 2 * bw + 1;
    let mut band = vec![0.0; size * width];
    let at = |r: usize, c: usize| r * width + (c + bw - r);

    for (src, row) in truncated_moves(spec, n).into_iter().enumerate() {
        band[at(src, src)] -= 1.0;
        for (dst, p) in row {
            band[at(dst, src)] += p;
        }
    }
    // Pin the origin.
    for c in 0..=bw.min(size - 1) {
        band[at(0, c)] = 0.0;
    }
    band[at(0, 0)] = 1.0;
    let mut rhs = vec![0.0; size];
    rhs[0] = 1.0;

    for c in 0..size {
        let pivot = band[at(c, c)];
        if pivot == 0.0 {
            return Err(OracleError::ZeroPivot(c));
        }
        let last = (c + bw).min(size - 1);
        for r in c + 1..=last {
            let l = band[at(r, c)] / pivot;
            if l == 0.0 {
                continue;
            }
            band[at(r, c)] = 0.0;
            for cc in c + 1..=last {
                band[at(r, cc)] -= l * band[at(c, cc)];
            }
            rhs[r] -= l * rhs[c];
        }
    }
    let mut x = vec![0.0; size];
    for r in (0..size).rev() {
        let last = (r + bw).min(size - 1);
        let mut acc = rhs[r];
        for c in r + 1..=last {
            acc -= band[at(r, c)] * x[c];
        }
        x[r] = acc / band[at(r, r)];
    }
    Ok(LatticeWindow {
        n,
        values: normalized(x),
    })
}

/// Power iteration `pi <- pi P` until `|pi P - pi|_1 < tol`.
pub fn power_stationary(
    spec: &WalkSpec,
    n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<LatticeWindow, OracleError> {
    if n < 8 {
        return Err(OracleError::TooSmall(n));
    }
    let moves = truncated_moves(spec, n);
    let size = moves.len();
    let mut pi = vec![1.0 / size as f64; size];
    let mut next = vec![0.0; size];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (src, row) in moves.iter().enumerate() {
            let m = pi[src];
            for &(dst, p) in row {
                next[dst] += m * p;
            }
        }
        residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if residual < tol {
            return Ok(LatticeWindow {
                n,
                values: normalized(pi),
            });
        }
    }
    Err(OracleError::NotConverged {
        iterations: max_iter,
        residual,
    })
}

/// `max |pi P - pi|` of a window against its own truncated chain.
pub fn stationarity_residual(spec: &WalkSpec, w: &LatticeWindow) -> f64 {
    let moves = truncated_moves(spec, w.n);
    let mut next = vec![0.0; w.values.len()];
    for (src, row) in moves.iter().enumerate() {
        for &(dst, p) in row {
            next[dst] += w.values[src] * p;
        }
    }
    next.iter()
        .zip(&w.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Inflow minus value of the measure `m` at state `(i, j)`.
///
/// Interior states use the interior law throughout; an axis state
/// collects along-axis moves with `h` (or `v`) and moves off the
/// neighbouring row (or column) with the interior law.
pub fn balance_residual(spec: &WalkSpec, m: &dyn Fn(usize, usize) -> f64, i: usize, j: usize) -> f64 {
    let back = |k: usize, d: i8| (k as i64 - d as i64) as usize;
    let inflow = match (i > 0, j > 0) {
        (true, true) => {
            let mut acc = 0.0;
            for s in -1..=1 {
                for t in -1..=1 {
                    acc += m(back(i, s), back(j, t)) * spec.p(s, t);
                }
            }
            acc
        }
        (true, false) => (-1..=1)
            .map(|s| m(back(i, s), 0) * spec.h(s) + m(back(i, s), 1) * spec.p(s, -1))
            .sum(),
        (false, true) => (-1..=1)
            .map(|t| m(0, back(j, t)) * spec.v(t) + m(1, back(j, t)) * spec.p(-1, t))
            .sum(),
        (false, false) => {
            m(0, 0) * spec.origin_stay()
                + m(1, 0) * spec.h(-1)
                + m(0, 1) * spec.v(-1)
                + m(1, 1) * spec.p(-1, -1)
        }
    };
    inflow - m(i, j)
}

/// Balance violations of an induced measure on `{0..window}^2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub window: usize,
    /// Residuals divided by `|m(i, j)|`, per region.
    pub max_residual_interior: f64,
    pub max_residual_h: f64,
    pub max_residual_v: f64,
    pub max_residual_origin: f64,
    /// Largest unscaled residual over the window.
    pub max_abs_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sup_rel_error: Option<f64>,
}

impl VerificationReport {
    pub fn max_scaled(&self) -> f64 {
        self.max_residual_interior
            .max(self.max_residual_h)
            .max(self.max_residual_v)
            .max(self.max_residual_origin)
    }
}

pub fn balance_residuals(spec: &WalkSpec, g: &GammaSet, window: usize) -> VerificationReport {
    let side = window + 2;
    let mut grid = vec![0.0; side * side];
    for i in 0..side {
        for j in 0..side {
            grid[i * side + j] = g.value(i, j);
        }
    }
    let m = |i: usize, j: usize| grid[i * side + j];
    let mut rep = VerificationReport {
        window,
        max_residual_interior: 0.0,
        max_residual_h: 0.0,
        max_residual_v: 0.0,
        max_residual_origin: 0.0,
        max_abs_residual: 0.0,
        sup_rel_error: None,
    };
    for i in 0..=window {
        for j in 0..=window {
            let r = balance_residual(spec, &m, i, j).abs();
            let scale = m(i, j).abs();
            let scaled = if scale > 0.0 { r / scale } else { r };
            let slot = match (i > 0, j > 0) {
                (true, true) => &mut rep.max_residual_interior,
                (true, false) => &mut rep.max_residual_h,
                (false, true) => &mut rep.max_residual_v,
                (false, false) => &mut rep.max_residual_origin,
            };
            *slot = slot.max(scaled);
            rep.max_abs_residual = rep.max_abs_residual.max(r);
        }
    }
    rep
}

/// Largest relative deviation of `g` from the oracle on `{0..core}^2`,
/// both normalized to unit mass there.
pub fn compare(g: &GammaSet, oracle: &LatticeWindow, core: usize) -> Result<f64, OracleError> {
    if core + MIN_MARGIN > oracle.n {
        return Err(OracleError::InsufficientMargin { core, n: oracle.n });
    }
    let mut gm = 0.0;
    let mut om = 0.0;
    for i in 0..=core {
        for j in 0..=core {
            gm += g.value(i, j);
            om += oracle.get(i, j);
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..=core {
        for j in 0..=core {
            let p = oracle.get(i, j);
            if p < MASS_FLOOR {
                continue;
            }
            let rel = (g.value(i, j) / gm - p / om).abs() / (p / om);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Calls `visit` with every set partition of `0..n` as a restricted growth
/// string (`labels[i]` is the block of `i`, blocks numbered by first use).
fn for_each_partition(n: usize, mut visit: impl FnMut(&[usize], usize)) {
    if n == 0 {
        visit(&[], 0);
        return;
    }
    let mut labels = vec![0usize; n];
    let mut maxes = vec![0usize; n];
    loop {
        visit(&labels, maxes[n - 1] + 1);
        // Advance to the next restricted growth string.
        let mut k = n - 1;
        loop {
            if k == 0 {
                return;
            }
            let cap = maxes[k - 1] + 1;
            if labels[k] < cap {
                labels[k] += 1;
                maxes[k] = maxes[k - 1].max(labels[k]);
                for r in k + 1..n {
                    labels[r] = 0;
                    maxes[r] = maxes[k];
                }
                break;
            }
            k -= 1;
        }
    }
}

fn best_partition(coupled: &[Vec<bool>]) -> Result<Vec<Vec<usize>>, OracleError> {
    let n = coupled.len();
    let mut best: Option<(usize, Vec<usize>)> = None;
    let mut ties = 0;
    for_each_partition(n, |labels, blocks| {
        let uncoupled = (0..n).all(|a| (a + 1..n).all(|b| labels[a] == labels[b] || !coupled[a][b]));
        if !uncoupled {
            return;
        }
        match &best {
            Some((k, _)) if blocks < *k => {}
            Some((k, _)) if blocks == *k => ties += 1,
            _ => {
                best = Some((blocks, labels.to_vec()));
                ties = 0;
            }
        }
    });
    let (blocks, labels) = best.expect("the single-block partition is always uncoupled");
    if ties > 0 {
        return Err(OracleError::AmbiguousMaximum(blocks));
    }
    let mut groups = vec![Vec::new(); blocks];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    Ok(canonical(groups))
}

/// Maximal uncoupled partitions found by enumerating every set partition.
pub fn brute_force_partition(terms: &[WeightedTerm], tol: f64) -> Result<PartitionResult, OracleError> {
    let n = terms.len();
    if n > BRUTE_FORCE_MAX {
        return Err(OracleError::TooLarge(n));
    }
    let relation = |f: &dyn Fn(&WeightedTerm, &WeightedTerm) -> bool| -> Vec<Vec<bool>> {
        (0..n)
            .map(|a| (0..n).map(|b| f(&terms[a], &terms[b])).collect())
            .collect()
    };
    let rho = relation(&|a, b| same_coordinate(a.rho, b.rho, tol));
    let sigma = relation(&|a, b| same_coordinate(a.sigma, b.sigma, tol));
    let either: Vec<Vec<bool>> = (0..n)
        .map(|a| (0..n).map(|b| rho[a][b] || sigma[a][b]).collect())
        .collect();
    Ok(PartitionResult {
        h_groups: best_partition(&rho)?,
        v_groups: best_partition(&sigma)?,
        g_groups: best_partition(&either)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityViolation {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub midpoint_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    /// Sampling box in log coordinates.
    pub u_range: (f64, f64),
    pub v_range: (f64, f64),
    pub pairs_tested: usize,
    pub violations: Vec<ConvexityViolation>,
}

impl ConvexityReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty() && self.pairs_tested > 0
    }
}

/// Midpoint test of the convexity of `{(u, v) : Q(e^u, e^v) < 0}` on the
/// log box spanned by the corners of the positive component, clamped to
/// `[ln 1e-6, ln 10]`.
pub fn convexity_check(walk: &ValidatedWalk, samples: usize, seed: u64) -> Result<ConvexityReport, CurveError> {
    let k = curve::kernel(walk)?;
    let r = curve::branch_points(walk)?;
    let lo = |z: f64| if z > 0.0 { z.ln().max(LOG_FLOOR) } else { LOG_FLOOR };
    let hi = |z: crate::poly::ExtReal| {
        z.finite()
            .map_or(curve::UNBOUNDED_CAP, |z| z.min(curve::UNBOUNDED_CAP))
            .ln()
    };
    let u_range = (lo(r.x_l()), hi(r.x_r()));
    let v_range = (lo(r.y_b()), hi(r.y_t()));
    let e = |k: &KernelPoly, u: f64, v: f64| k.eval(u.exp(), v.exp());
    // Sign test through the convex function sum p e^{-su-tv} - 1.
    let slack = 1e-14 * k.scale();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Option<(f64, f64)> {
        for _ in 0..1000 {
            let u = rng.gen_range(u_range.0..=u_range.1);
            let v = rng.gen_range(v_range.0..=v_range.1);
            if e(&k, u, v) < 0.0 {
                return Some((u, v));
            }
        }
        None
    };
    let mut violations = Vec::new();
    let mut pairs_tested = 0;
    if u_range.0 < u_range.1 && v_range.0 < v_range.1 {
        for _ in 0..samples {
            let (Some(a), Some(b)) = (draw(&mut rng), draw(&mut rng)) else {
                break;
            };
            pairs_tested += 1;
            let mid = (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1));
            let val = e(&k, mid.0, mid.1);
            if val * (-(mid.0 + mid.1)).exp() > slack {
                violations.push(ConvexityViolation {
                    a,
                    b,
                    midpoint_value: val,
                });
            }
        }
    }
    Ok(ConvexityReport {
        u_range,
        v_range,
        pairs_tested,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamma::{maximal_partitions, COUPLING_TOL};
    use crate::presets;

    #[test]
    fn symmetric_walk_gives_symmetric_grid() {
        let w = presets::fig2c();
        let pi = truncated_stationary(&w, 20).unwrap();
        for i in 0..=20 {
            for j in 0..=20 {
                assert!((pi.get(i, j) - pi.get(j, i)).abs() < 1e-14);
            }
        }
        assert!((pi.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(pi.values.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn direct_solution_is_stationary() {
        let w = presets::switch_fig7();
        let pi = direct_stationary(&w, 30).unwrap();
        assert!(stationarity_residual(&w, &pi) < 1e-14);
    }

    #[test]
    fn power_agrees_with_direct() {
        let w = presets::switch_fig7();
        let a = direct_stationary(&w, 20).unwrap();
        let b = power_stationary(&w, 20, 1e-14, 100_000).unwrap();
        let d = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d < 1e-12, "{d:e}");
    }

    #[test]
    fn tiny_box_rejected() {
        assert_eq!(direct_stationary(&presets::fig2a(), 5), Err(OracleError::TooSmall(5)));
    }

    #[test]
    fn identical_inputs_compare_to_zero() {
        let g = GammaSet::new(vec![WeightedTerm::new(0.5, 0.25, 3.0)]).unwrap();
        let n = 20;
        let mut values = Vec::new();
        for i in 0..=n {
            for j in 0..=n {
                values.push(g.value(i, j));
            }
        }
        let w = LatticeWindow { n, values };
        assert_eq!(compare(&g, &w, 8).unwrap(), 0.0);
        assert!(matches!(compare(&g, &w, 15), Err(OracleError::InsufficientMargin { .. })));

        let pi = direct_stationary(&presets::switch_fig7(), 30).unwrap();
        assert!(compare(&g, &pi, 8).unwrap() > 0.1);
    }

    #[test]
    fn restricted_growth_strings_count_bell_numbers() {
        for (n, bell) in [(1, 1), (3, 5), (5, 52), (8, 4140)] {
            let mut count = 0;
            for_each_partition(n, |_, _| count += 1);
            assert_eq!(count, bell);
        }
    }

    #[test]
    fn brute_force_matches_union_find() {
        let t = |r, s| WeightedTerm::new(r, s, 1.0);
        let terms = vec![t(0.5, 0.5), t(0.5, 0.3), t(0.2, 0.3), t(0.2, 0.1), t(0.7, 0.9), t(0.1, 0.9)];
        let g = GammaSet::new(terms.clone()).unwrap();
        assert_eq!(brute_force_partition(&terms, COUPLING_TOL).unwrap(), maximal_partitions(&g));
        let distinct = vec![t(0.1, 0.2), t(0.3, 0.4), t(0.5, 0.6)];
        assert_eq!(brute_force_partition(&distinct, COUPLING_TOL).unwrap().counts(), (3, 3, 3));
        assert_eq!(
            brute_force_partition(&vec![t(0.5, 0.5); 11], COUPLING_TOL),
            Err(OracleError::TooLarge(11))
        );
    }

    #[test]
    fn product_form_fixture_balances() {
        // Blocked steps become stays, so each coordinate is a birth-death
        // chain with ratio 2/3 and the measure is a single product.
        let w = crate::walk::WalkSpec::with_folded_boundaries({
            let mut p = [[0.0; 3]; 3];
            p[0][1] = 0.3;
            p[2][1] = 0.2;
            p[1][0] = 0.3;
            p[1][2] = 0.2;
            p
        })
        .validate()
        .unwrap();
        let g = GammaSet::new(vec![WeightedTerm::new(2.0 / 3.0, 2.0 / 3.0, 1.0 / 9.0)]).unwrap();
        let r = balance_residuals(&w, &g, 12);
        assert!(r.max_scaled() <= 1e-12, "{r:?}");
        let pi = direct_stationary(&w, 60).unwrap();
        assert!(compare(&g, &pi, 8).unwrap() < 1e-6);
    }

    #[test]
    fn convexity_on_presets() {
        for w in presets::fig2() {
            let r = convexity_check(&w, 2000, 7).unwrap();
            assert!(r.pass(), "{r:?}");
        }
    }
}
