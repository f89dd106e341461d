//! Compensation series: alternating chains of geometric terms for walks
//! without east, north-east or north interior steps.
//!
//! A seed term on the kernel curve that balances one axis is paired with
//! the other point of the curve sharing one coordinate. The pair's
//! coefficients are fixed so that the pair balances the other axis; the new
//! term then spoils the first axis, which the next pair repairs, and so on.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{self, Boundary, CurveError, KernelPoly};
use crate::gamma::{same_coordinate, GammaError, GammaSet, WeightedTerm, COUPLING_TOL};
use crate::oracle::{balance_residual, balance_residuals, VerificationReport};
use crate::walk::{ValidatedWalk, WalkSpec};

/// Largest scaled kernel residual accepted for an input term.
pub const CURVE_TOL: f64 = 1e-10;
/// Below this `|A sigma|` Vieta's formula gives way to the quadratic formula.
pub const VIETA_TOL: f64 = 1e-14;
/// Companions this close to the input are the same (double) root.
pub const SAME_ROOT_TOL: f64 = 1e-12;
/// `|T|` below this makes a coefficient ratio meaningless.
pub const DEGENERATE_T_TOL: f64 = 1e-14;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_TERMS: usize = 200;
/// Steps allowed before the coordinates must start shrinking.
pub const DIVERGENCE_GRACE: usize = 4;
/// Condition number above which the superposition weights are rejected.
pub const MAX_CONDITION: f64 = 1e12;
/// States whose balance fixes the superposition weights.
pub const ASSEMBLY_STATES: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompensationError {
    #[error("term ({0}, {1}) is off the kernel curve (scaled residual {2:e})")]
    OffCurve(f64, f64, f64),
    #[error("walk has east, north-east or north interior steps")]
    NotEligible,
    #[error("seed ({x}, {y}) does not solve the kernel and {which:?} (residuals {q_residual:e}, {boundary_residual:e})")]
    BadSeed {
        x: f64,
        y: f64,
        which: Boundary,
        q_residual: f64,
        boundary_residual: f64,
    },
    #[error("terms do not share a coordinate")]
    NotCoupled,
    #[error("T of the second term vanishes ({0:e}); this pair cannot balance the axis")]
    DegenerateT(f64),
    #[error("series stalled after {terms} terms: companion {outcome:?}")]
    StalledAtBranchPoint { terms: usize, outcome: Companion },
    #[error("coordinates stopped decreasing at term {0}")]
    Diverged(usize),
    #[error("superposition system is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Gamma(#[from] GammaError),
}

/// The horizontal quantity `T = -H(rho, sigma) / rho`, written out:
/// `(1 - 1/rho) h_1 + (1 - rho) h_{-1} + sum_s p_{s,1} - sigma sum_s rho^{-s} p_{s,-1}`.
pub fn t_value(spec: &WalkSpec, (rho, sigma): (f64, f64)) -> f64 {
    let up: f64 = (-1..=1).map(|s| spec.p(s, 1)).sum();
    let down: f64 = (-1..=1).map(|s| rho.powi(-(s as i32)) * spec.p(s, -1)).sum();
    (1.0 - 1.0 / rho) * spec.h(1) + (1.0 - rho) * spec.h(-1) + up - sigma * down
}

/// Vertical analogue of [`t_value`], equal to `-V(rho, sigma) / sigma`.
pub fn t_value_v(spec: &WalkSpec, (rho, sigma): (f64, f64)) -> f64 {
    let right: f64 = (-1..=1).map(|t| spec.p(1, t)).sum();
    let left: f64 = (-1..=1).map(|t| sigma.powi(-(t as i32)) * spec.p(-1, t)).sum();
    (1.0 - 1.0 / sigma) * spec.v(1) + (1.0 - sigma) * spec.v(-1) + right - rho * left
}

/// The other point of the kernel curve on a coordinate line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Companion {
    Found(f64, f64),
    /// The line is tangent to the curve here.
    DoubleRoot,
    NonPositive,
    ExitsU,
    /// The quadratic degenerates to a linear equation on this line.
    Missing,
}

fn on_curve(k: &KernelPoly, x: f64, y: f64) -> Result<(), CompensationError> {
    let r = k.eval(x, y).abs() / k.scale();
    if r > CURVE_TOL {
        return Err(CompensationError::OffCurve(x, y, r));
    }
    Ok(())
}

/// Second root of `q` given the root `z`.
fn other_root(q: curve::Quadratic, z: f64) -> Option<f64> {
    if q.a == 0.0 {
        return None;
    }
    if (q.a * z).abs() > VIETA_TOL {
        return Some(q.c / (q.a * z));
    }
    let roots = q.real_roots();
    roots
        .into_iter()
        .max_by(|a, b| (a - z).abs().total_cmp(&(b - z).abs()))
}

fn classify(own: f64, other: Option<f64>, fixed: f64, swap: bool) -> Companion {
    let Some(w) = other else {
        return Companion::Missing;
    };
    if (w - own).abs() <= SAME_ROOT_TOL * own.abs().max(1.0) {
        return Companion::DoubleRoot;
    }
    if !(w > 0.0) {
        return Companion::NonPositive;
    }
    if w >= 1.0 || !(fixed > 0.0 && fixed < 1.0) {
        return Companion::ExitsU;
    }
    if swap {
        Companion::Found(w, fixed)
    } else {
        Companion::Found(fixed, w)
    }
}

/// The other curve point with the same `rho`; paired with the input it
/// forms a horizontally coupled pair.
pub fn companion_v(walk: &ValidatedWalk, (rho, sigma): (f64, f64)) -> Result<Companion, CompensationError> {
    let k = KernelPoly::of(walk.spec());
    on_curve(&k, rho, sigma)?;
    Ok(classify(sigma, other_root(k.y_quadratic(rho), sigma), rho, false))
}

/// The other curve point with the same `sigma`.
pub fn companion_h(walk: &ValidatedWalk, (rho, sigma): (f64, f64)) -> Result<Companion, CompensationError> {
    let k = KernelPoly::of(walk.spec());
    on_curve(&k, rho, sigma)?;
    Ok(classify(rho, other_root(k.x_quadratic(sigma), rho), sigma, true))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ratio {
    /// `alpha_2 / alpha_1`.
    pub value: f64,
    /// The first term balances the axis on its own.
    pub numerator_zero: bool,
}

fn ratio(t1: f64, t2: f64) -> Result<Ratio, CompensationError> {
    if t2.abs() < DEGENERATE_T_TOL {
        return Err(CompensationError::DegenerateT(t2));
    }
    Ok(Ratio {
        value: -t1 / t2,
        numerator_zero: t1 == 0.0,
    })
}

/// Coefficient ratio making a pair with shared `rho` balance the
/// horizontal axis: `alpha_2 = -T_1 / T_2 * alpha_1`.
pub fn coefficient_ratio_h(
    spec: &WalkSpec,
    first: (f64, f64),
    second: (f64, f64),
) -> Result<Ratio, CompensationError> {
    if !same_coordinate(first.0, second.0, COUPLING_TOL) {
        return Err(CompensationError::NotCoupled);
    }
    ratio(t_value(spec, first), t_value(spec, second))
}

/// Coefficient ratio making a pair with shared `sigma` balance the
/// vertical axis.
pub fn coefficient_ratio_v(
    spec: &WalkSpec,
    first: (f64, f64),
    second: (f64, f64),
) -> Result<Ratio, CompensationError> {
    if !same_coordinate(first.1, second.1, COUPLING_TOL) {
        return Err(CompensationError::NotCoupled);
    }
    ratio(t_value_v(spec, first), t_value_v(spec, second))
}

/// Coordinate shared by a consecutive pair of series terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    /// Shared `rho`; the pair balances the horizontal axis.
    #[serde(rename = "H-coupled")]
    H,
    /// Shared `sigma`; the pair balances the vertical axis.
    #[serde(rename = "V-coupled")]
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub x: f64,
    pub y: f64,
    /// Axis balanced by the seed on its own.
    pub which: Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompensationSeries {
    pub terms: Vec<WeightedTerm>,
    /// `links[k]` joins `terms[k]` and `terms[k + 1]`.
    pub links: Vec<Link>,
    /// Estimated absolute-convergence norm of the discarded terms, with the
    /// origin state left out.
    pub tail_bound: f64,
    pub seed: Seed,
    /// False when `max_terms` stopped the construction first.
    pub converged: bool,
}

impl CompensationSeries {
    /// `T_a / T_b` for every horizontally coupled pair `(a, b)`.
    pub fn t_ratios(&self, spec: &WalkSpec) -> Vec<f64> {
        self.pair_ratios(spec, Link::H, t_value)
    }

    /// Vertical counterpart of [`Self::t_ratios`].
    pub fn t_ratios_v(&self, spec: &WalkSpec) -> Vec<f64> {
        self.pair_ratios(spec, Link::V, t_value_v)
    }

    fn pair_ratios(&self, spec: &WalkSpec, link: Link, t: fn(&WalkSpec, (f64, f64)) -> f64) -> Vec<f64> {
        self.links
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == link)
            .map(|(k, _)| {
                let (a, b) = (self.terms[k], self.terms[k + 1]);
                t(spec, (a.rho, a.sigma)) / t(spec, (b.rho, b.sigma))
            })
            .collect()
    }

    /// The series value at `(i, j)`; the origin is excluded (zero there).
    pub fn off_origin_value(&self, i: usize, j: usize) -> f64 {
        if i == 0 && j == 0 {
            0.0
        } else {
            self.terms.iter().map(|t| t.value(i, j)).sum()
        }
    }

    /// Mass of the series away from the origin.
    pub fn off_origin_mass(&self) -> f64 {
        self.terms.iter().map(|t| t.mass() - t.alpha).sum()
    }
}

/// Geometric estimate of the norm of all terms after `norms.last()`.
fn tail_estimate(norms: &[f64]) -> f64 {
    let n = norms.len();
    if n < 3 {
        return f64::INFINITY;
    }
    let last = norms[n - 1];
    if last == 0.0 {
        return 0.0;
    }
    // Two steps cover one H link and one V link.
    let r = (last / norms[n - 3]).sqrt();
    if r < 1.0 {
        last * r / (1.0 - r)
    } else {
        f64::INFINITY
    }
}

/// Builds the alternating series started at `seed`.
pub fn build_series(
    walk: &ValidatedWalk,
    seed: Seed,
    tol: f64,
    max_terms: usize,
) -> Result<CompensationSeries, CompensationError> {
    if !walk.lacks_northeast_steps() {
        return Err(CompensationError::NotEligible);
    }
    let spec = walk.spec();
    let k = KernelPoly::of(spec);
    let q_residual = k.eval(seed.x, seed.y).abs() / k.scale();
    let boundary_residual = seed.which.eval(spec, seed.x, seed.y).abs();
    if q_residual > CURVE_TOL || boundary_residual > CURVE_TOL {
        return Err(CompensationError::BadSeed {
            x: seed.x,
            y: seed.y,
            which: seed.which,
            q_residual,
            boundary_residual,
        });
    }

    let first = WeightedTerm::new(seed.x, seed.y, 1.0);
    let mut terms = vec![first];
    let mut norms = vec![first.off_origin_norm()];
    let mut links = Vec::new();
    // The seed spoils the other axis; the first pair repairs it.
    let mut next = match seed.which {
        Boundary::V => Link::H,
        Boundary::H => Link::V,
    };
    let mut converged = false;
    let mut tail = f64::INFINITY;
    while terms.len() < max_terms.max(1) {
        tail = tail_estimate(&norms);
        if tail < tol {
            converged = true;
            break;
        }
        let last = *terms.last().unwrap();
        let point = (last.rho, last.sigma);
        let outcome = match next {
            Link::H => companion_v(walk, point)?,
            Link::V => companion_h(walk, point)?,
        };
        let Companion::Found(x, y) = outcome else {
            return Err(CompensationError::StalledAtBranchPoint {
                terms: terms.len(),
                outcome,
            });
        };
        let r = match next {
            Link::H => coefficient_ratio_h(spec, point, (x, y))?,
            Link::V => coefficient_ratio_v(spec, point, (x, y))?,
        };
        let term = WeightedTerm::new(x, y, r.value * last.alpha);
        let idx = terms.len();
        if idx > DIVERGENCE_GRACE {
            let back = terms[idx - 2];
            let shrinks = x <= back.rho && y <= back.sigma && (x < back.rho || y < back.sigma);
            if !shrinks {
                return Err(CompensationError::Diverged(idx));
            }
        }
        terms.push(term);
        links.push(next);
        norms.push(term.off_origin_norm());
        next = match next {
            Link::H => Link::V,
            Link::V => Link::H,
        };
        if r.numerator_zero {
            tail = 0.0;
            converged = true;
            break;
        }
    }
    if !converged {
        tail = tail_estimate(&norms);
        converged = tail < tol;
    }
    Ok(CompensationSeries {
        terms,
        links,
        tail_bound: tail,
        seed,
        converged,
    })
}

/// Seeds at every intersection of the curve with `H` or `V` in the unit
/// square; with `all` false only the `V` seeds are returned.
pub fn find_seeds(walk: &ValidatedWalk, n_points: usize, all: bool) -> Result<Vec<Seed>, CompensationError> {
    let hits = curve::curve_boundary_intersections(walk, n_points)?;
    Ok(hits
        .into_iter()
        .filter(|h| all || h.which == Boundary::V)
        .map(|h| Seed {
            x: h.x,
            y: h.y,
            which: h.which,
        })
        .collect())
}

/// Superposition of several series into one measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assembly {
    pub gamma: GammaSet,
    /// Weight applied to each input series.
    pub weights: Vec<f64>,
    pub origin_mass: f64,
    pub condition_number: f64,
    /// Largest residual of the weight equations.
    pub fit_residual: f64,
    pub report: VerificationReport,
    pub weighting: &'static str,
}

/// Weights the series so that the combined measure balances the states
/// nearest the origin and has unit mass.
///
/// The coefficient sums of the series need not converge at the origin, so
/// the origin value is a separate unknown.
pub fn assemble_measure(
    walk: &ValidatedWalk,
    series: &[CompensationSeries],
    window: usize,
) -> Result<Assembly, CompensationError> {
    let spec = walk.spec();
    let unknowns = series.len() + 1;
    let rows = ASSEMBLY_STATES.len() + 1;
    let mut a = DMatrix::<f64>::zeros(rows, unknowns);
    for (col, s) in series.iter().enumerate() {
        let f = |i: usize, j: usize| s.off_origin_value(i, j);
        for (row, &(i, j)) in ASSEMBLY_STATES.iter().enumerate() {
            a[(row, col)] = balance_residual(spec, &f, i, j);
        }
        a[(rows - 1, col)] = s.off_origin_mass();
    }
    let origin = |i: usize, j: usize| if i == 0 && j == 0 { 1.0 } else { 0.0 };
    for (row, &(i, j)) in ASSEMBLY_STATES.iter().enumerate() {
        a[(row, unknowns - 1)] = balance_residual(spec, &origin, i, j);
    }
    a[(rows - 1, unknowns - 1)] = 1.0;
    let mut b = DVector::<f64>::zeros(rows);
    b[rows - 1] = 1.0;

    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) || sv.len() < unknowns {
        return Err(CompensationError::IllConditioned(cond));
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|_| CompensationError::IllConditioned(cond))?;
    let fit_residual = (&a * &x - &b).amax();

    let weights: Vec<f64> = x.iter().take(series.len()).copied().collect();
    let origin_mass = x[unknowns - 1];
    let terms: Vec<WeightedTerm> = series
        .iter()
        .zip(&weights)
        .flat_map(|(s, &w)| {
            s.terms
                .iter()
                .map(move |t| WeightedTerm::new(t.rho, t.sigma, t.alpha * w))
        })
        .collect();
    let mut gamma = GammaSet::new(terms)?;
    gamma.origin_mass = Some(origin_mass);
    let report = balance_residuals(spec, &gamma, window);
    Ok(Assembly {
        gamma,
        weights,
        origin_mass,
        condition_number: cond,
        fit_residual,
        report,
        weighting: "least squares on the balance of (0,0), (1,0), (0,1), (1,1) and unit mass",
    })
}
