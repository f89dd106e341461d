//! The kernel curve `Q(x, y) = 0` of a walk and its positive component.
//!
//! `Q(x, y) = sum_{s,t} p_{s,t} x^{1-s} y^{1-t} - x y`. A geometric term
//! `rho^i sigma^j` balances every interior state iff `Q(rho, sigma) = 0`.

use serde::Serialize;
use thiserror::Error;

use crate::poly::{self, ExtReal};
use crate::walk::{Drift, SingularClass, ValidatedWalk, WalkSpec};

/// Tolerance used for sign and unit-circle decisions on branch points.
pub const BRANCH_TOL: f64 = 1e-8;
/// Equality tolerance in the coefficient tests that classify branch pairs.
pub const PAIR_CASE_TOL: f64 = 1e-12;
/// Crunode test: the Hessian determinant must lie below `-CRUNODE_TOL`.
pub const CRUNODE_TOL: f64 = 1e-12;
/// Gradient test for a singular point.
pub const SINGULAR_GRAD_TOL: f64 = 1e-12;
/// Bound used in place of an infinite corner while tracing.
pub const UNBOUNDED_CAP: f64 = 10.0;
/// Intersections closer than this to the edge of the unit square are
/// treated as lying on it.
pub const U_EDGE_TOL: f64 = 1e-9;
/// Default number of abscissae sampled by [`trace_qplus`].
pub const DEFAULT_TRACE_POINTS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("walk is singular ({0:?}); the kernel analysis needs a non-singular walk")]
    SingularWalk(SingularClass),
    #[error("discriminant in {variable} has {pairs} complex root pair(s): {detail}")]
    ComplexRoots {
        variable: char,
        pairs: usize,
        detail: String,
    },
    #[error("discriminant in {0} vanishes identically")]
    DegenerateDiscriminant(char),
    #[error("no real point of the positive component was found")]
    EmptyComponent,
    #[error("singularity tests disagree: {0}")]
    InconsistentSingularity(String),
}

/// `a y^2 + b y + c` (or the same in `x`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quadratic {
    pub fn eval(&self, z: f64) -> f64 {
        (self.a * z + self.b) * z + self.c
    }

    pub fn discriminant(&self) -> f64 {
        self.b * self.b - 4.0 * self.a * self.c
    }

    /// Real roots in ascending order, computed without cancellation.
    /// A vanishing leading coefficient yields the single linear root.
    pub fn real_roots(&self) -> Vec<f64> {
        if self.a == 0.0 {
            return if self.b != 0.0 {
                vec![-self.c / self.b]
            } else {
                Vec::new()
            };
        }
        let d = self.discriminant();
        if d < 0.0 {
            return Vec::new();
        }
        let (lo, hi) = self.roots_clamped(d);
        if lo == hi {
            vec![lo]
        } else {
            vec![lo, hi]
        }
    }

    /// Both roots using `max(d, 0)` as discriminant; `a` must be nonzero.
    fn roots_clamped(&self, d: f64) -> (f64, f64) {
        let sq = d.max(0.0).sqrt();
        let q = -0.5 * (self.b + self.b.signum() * sq);
        let (r1, r2) = if q == 0.0 {
            let r = -self.b / (2.0 * self.a);
            (r, r)
        } else {
            (q / self.a, self.c / q)
        };
        if r1 <= r2 {
            (r1, r2)
        } else {
            (r2, r1)
        }
    }

    /// Double root as an extended value: a quadratic that degenerates to a
    /// nonzero constant has both roots at infinity.
    fn double_root_ext(&self) -> ExtReal {
        if self.a.abs() <= f64::EPSILON * (self.b.abs() + self.c.abs()) && self.b == 0.0 && self.c != 0.0 {
            ExtReal::Infinite
        } else {
            ExtReal::Finite(self.double_root())
        }
    }

    /// Value at which the two roots coincide.
    fn double_root(&self) -> f64 {
        // Adding zero turns a negative zero into a positive one.
        if self.a.abs() > f64::EPSILON * (self.b.abs() + self.c.abs()) {
            -self.b / (2.0 * self.a) + 0.0
        } else if self.b != 0.0 {
            -self.c / self.b + 0.0
        } else {
            0.0
        }
    }
}

/// Coefficients of `Q(x, y) = sum c[a][b] x^a y^b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelPoly {
    pub c: [[f64; 3]; 3],
}

impl KernelPoly {
    /// Kernel coefficients of any walk, singular or not.
    pub fn of(spec: &WalkSpec) -> Self {
        let mut c = [[0.0; 3]; 3];
        for (a, row) in c.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                *cell = spec.p(1 - a as i8, 1 - b as i8);
            }
        }
        c[1][1] -= 1.0;
        KernelPoly { c }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let xs = [1.0, x, x * x];
        let ys = [1.0, y, y * y];
        let mut acc = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                acc += self.c[a][b] * xs[a] * ys[b];
            }
        }
        acc
    }

    /// Largest coefficient magnitude; used to scale residuals.
    pub fn scale(&self) -> f64 {
        self.c.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn dx(&self, x: f64, y: f64) -> f64 {
        let ys = [1.0, y, y * y];
        (0..3)
            .map(|b| (self.c[1][b] + 2.0 * self.c[2][b] * x) * ys[b])
            .sum()
    }

    pub fn dy(&self, x: f64, y: f64) -> f64 {
        let xs = [1.0, x, x * x];
        (0..3)
            .map(|a| (self.c[a][1] + 2.0 * self.c[a][2] * y) * xs[a])
            .sum()
    }

    /// `(Q_xx, Q_xy, Q_yy)` at `(x, y)`.
    pub fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let xs = [1.0, x, x * x];
        let ys = [1.0, y, y * y];
        let qxx = (0..3).map(|b| 2.0 * self.c[2][b] * ys[b]).sum();
        let qyy = (0..3).map(|a| 2.0 * self.c[a][2] * xs[a]).sum();
        let qxy = self.c[1][1]
            + 2.0 * self.c[2][1] * x
            + 2.0 * self.c[1][2] * y
            + 4.0 * self.c[2][2] * x * y;
        (qxx, qxy, qyy)
    }

    /// `Q(x, .)` as a quadratic in `y`; its roots are `Y(x)`.
    pub fn y_quadratic(&self, x: f64) -> Quadratic {
        let col = |b: usize| self.c[0][b] + self.c[1][b] * x + self.c[2][b] * x * x;
        Quadratic {
            a: col(2),
            b: col(1),
            c: col(0),
        }
    }

    /// `Q(., y)` as a quadratic in `x`; its roots are `X(y)`.
    pub fn x_quadratic(&self, y: f64) -> Quadratic {
        let row = |a: usize| self.c[a][0] + self.c[a][1] * y + self.c[a][2] * y * y;
        Quadratic {
            a: row(2),
            b: row(1),
            c: row(0),
        }
    }

    /// Ascending coefficients of the discriminant of the `y`-quadratic,
    /// a polynomial of degree at most four in `x`.
    pub fn delta_y(&self) -> [f64; 5] {
        let a = [self.c[0][2], self.c[1][2], self.c[2][2]];
        let b = [self.c[0][1], self.c[1][1], self.c[2][1]];
        let c = [self.c[0][0], self.c[1][0], self.c[2][0]];
        discriminant_coeffs(&a, &b, &c)
    }

    /// Ascending coefficients of the discriminant of the `x`-quadratic in `y`.
    pub fn delta_x(&self) -> [f64; 5] {
        self.transposed().delta_y()
    }

    pub fn transposed(&self) -> KernelPoly {
        let mut c = [[0.0; 3]; 3];
        for (a, row) in c.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                *cell = self.c[b][a];
            }
        }
        KernelPoly { c }
    }
}

fn discriminant_coeffs(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> [f64; 5] {
    let bb = poly::mul(b, b);
    let ac = poly::mul(a, c);
    let mut out = [0.0; 5];
    for k in 0..5 {
        out[k] = bb[k] - 4.0 * ac[k];
    }
    out
}

/// Kernel of a validated walk; singular walks are rejected.
pub fn kernel(walk: &ValidatedWalk) -> Result<KernelPoly, CurveError> {
    match walk.singular_class() {
        SingularClass::NonSingular => Ok(KernelPoly::of(walk.spec())),
        other => Err(CurveError::SingularWalk(other)),
    }
}

pub fn y_quadratic(kernel: &KernelPoly, x: f64) -> Quadratic {
    kernel.y_quadratic(x)
}

pub fn x_quadratic(kernel: &KernelPoly, y: f64) -> Quadratic {
    kernel.x_quadratic(y)
}

/// Position of a branch point relative to the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Inside,
    /// Within [`BRANCH_TOL`] of `1`; only occurs for zero vertical
    /// (resp. horizontal) drift.
    Unit,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Negative,
    Zero,
    Positive,
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RootLabel {
    pub location: Location,
    pub sign: Sign,
}

fn label(root: ExtReal) -> RootLabel {
    match root {
        ExtReal::Infinite => RootLabel {
            location: Location::Outside,
            sign: Sign::Infinite,
        },
        ExtReal::Finite(x) => {
            let location = if (x - 1.0).abs() <= BRANCH_TOL {
                Location::Unit
            } else if x.abs() < 1.0 {
                Location::Inside
            } else {
                Location::Outside
            };
            let sign = if x.abs() <= BRANCH_TOL {
                Sign::Zero
            } else if x > 0.0 {
                Sign::Positive
            } else {
                Sign::Negative
            };
            RootLabel { location, sign }
        }
    }
}

/// Sign pattern predicted for a pair of branch points from the coefficient
/// test `q` versus `2 sqrt(p r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairCase {
    /// `q > 2 sqrt(p r)`: both points positive.
    BothPositive,
    /// `q = 2 sqrt(p r)`: for the outer pair one point is infinite and the
    /// other positive, possibly infinite; for the inner pair one point is
    /// zero and the other non-negative.
    Boundary,
    /// `q < 2 sqrt(p r)`: one positive and one negative point.
    OppositeSigns,
}

fn pair_case(q: f64, p: f64, r: f64) -> PairCase {
    let rhs = 2.0 * (p * r).sqrt();
    if (q - rhs).abs() <= PAIR_CASE_TOL {
        PairCase::Boundary
    } else if q > rhs {
        PairCase::BothPositive
    } else {
        PairCase::OppositeSigns
    }
}

/// Branch points of one algebraic function (`Y(x)` or `X(y)`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchSet {
    /// Ascending by modulus: the first two are the inner pair.
    pub roots: [ExtReal; 4],
    pub labels: [RootLabel; 4],
    pub inner_case: PairCase,
    pub outer_case: PairCase,
    /// Ascending coefficients of the discriminant.
    pub discriminant: [f64; 5],
    /// Largest absolute discriminant value over the finite roots, relative
    /// to the coefficient scale.
    pub max_relative_residual: f64,
}

/// A corner of the positive component: a point where the curve has a
/// vertical (left/right) or horizontal (bottom/top) tangent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Corner {
    pub x: ExtReal,
    pub y: ExtReal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Corners {
    pub left: Corner,
    pub bottom: Corner,
    pub right: Corner,
    pub top: Corner,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchPointReport {
    pub roots_x: BranchSet,
    pub roots_y: BranchSet,
    pub corners: Corners,
    pub drift: Drift,
}

impl BranchPointReport {
    pub fn x_l(&self) -> f64 {
        self.corners.left.x.finite().unwrap_or(0.0)
    }
    pub fn y_b(&self) -> f64 {
        self.corners.bottom.y.finite().unwrap_or(0.0)
    }
    pub fn x_r(&self) -> ExtReal {
        self.corners.right.x
    }
    pub fn y_t(&self) -> ExtReal {
        self.corners.top.y
    }
}

fn branch_set(
    disc: [f64; 5],
    variable: char,
    inner_case: PairCase,
    outer_case: PairCase,
) -> Result<BranchSet, CurveError> {
    let found = poly::roots(&disc).ok_or(CurveError::DegenerateDiscriminant(variable))?;
    if !found.complex_pairs.is_empty() {
        return Err(CurveError::ComplexRoots {
            variable,
            pairs: found.complex_pairs.len(),
            detail: format!("{:?}", found.complex_pairs),
        });
    }
    let mut roots = found.real;
    debug_assert_eq!(roots.len(), 4);
    roots.sort_by(|a, b| {
        a.modulus()
            .partial_cmp(&b.modulus())
            .unwrap()
            .then_with(|| {
                let fa = a.finite().unwrap_or(f64::INFINITY);
                let fb = b.finite().unwrap_or(f64::INFINITY);
                fa.partial_cmp(&fb).unwrap()
            })
    });
    let roots: [ExtReal; 4] = roots
        .try_into()
        .map_err(|_| CurveError::DegenerateDiscriminant(variable))?;
    let scale = disc.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let max_relative_residual = roots
        .iter()
        .filter_map(|r| r.finite())
        .map(|x| poly::eval(&disc, x).abs() / (scale * x.abs().max(1.0).powi(4)))
        .fold(0.0, f64::max);
    Ok(BranchSet {
        labels: roots.map(label),
        roots,
        inner_case,
        outer_case,
        discriminant: disc,
        max_relative_residual,
    })
}

/// The interval `[lo, hi]` of consecutive branch points that contains `1`
/// and on which the discriminant is non-negative.
fn positive_interval(set: &BranchSet) -> (f64, ExtReal) {
    let disc = &set.discriminant;
    let mut finite: Vec<f64> = set.roots.iter().filter_map(|r| r.finite()).collect();
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let unit = finite.iter().copied().find(|r| (r - 1.0).abs() <= BRANCH_TOL);
    let below = |v: f64| finite.iter().copied().filter(|&r| r < v).fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
    let above = |v: f64| finite.iter().copied().filter(|&r| r > v).fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.min(r))));

    match unit {
        None => {
            let lo = below(1.0).unwrap_or(0.0).max(0.0);
            let hi = above(1.0).map_or(ExtReal::Infinite, ExtReal::Finite);
            (lo, hi)
        }
        Some(u) => {
            let left = below(u - BRANCH_TOL).unwrap_or(0.0).max(0.0);
            let right = above(u + BRANCH_TOL);
            let mid_left = 0.5 * (left + u);
            let mid_right = right.map_or(u + 1.0, |r| 0.5 * (u + r));
            let pos_left = poly::eval(disc, mid_left) > 0.0;
            let pos_right = poly::eval(disc, mid_right) > 0.0;
            let right_ext = right.map_or(ExtReal::Infinite, ExtReal::Finite);
            match (pos_left, pos_right) {
                (true, true) => (left, right_ext),
                (true, false) => (left, ExtReal::Finite(u)),
                _ => (u, right_ext),
            }
        }
    }
}

/// All branch points of `Y(x)` and `X(y)`, their labels and the corners
/// of the positive component.
pub fn branch_points(walk: &ValidatedWalk) -> Result<BranchPointReport, CurveError> {
    let k = kernel(walk)?;
    let p = |s: i8, t: i8| walk.p(s, t);
    let roots_x = branch_set(
        k.delta_y(),
        'x',
        pair_case(p(1, 0), p(1, -1), p(1, 1)),
        pair_case(p(-1, 0), p(-1, -1), p(-1, 1)),
    )?;
    let roots_y = branch_set(
        k.delta_x(),
        'y',
        pair_case(p(0, 1), p(-1, 1), p(1, 1)),
        pair_case(p(0, -1), p(-1, -1), p(1, -1)),
    )?;

    let (x_l, x_r) = positive_interval(&roots_x);
    let (y_b, y_t) = positive_interval(&roots_y);
    // At infinity the leading coefficient polynomial takes the place of the
    // quadratic.
    let corner_y = |x: ExtReal| match x {
        ExtReal::Finite(x) => k.y_quadratic(x).double_root_ext(),
        ExtReal::Infinite => Quadratic {
            a: k.c[2][2],
            b: k.c[2][1],
            c: k.c[2][0],
        }
        .double_root_ext(),
    };
    let corner_x = |y: ExtReal| match y {
        ExtReal::Finite(y) => k.x_quadratic(y).double_root_ext(),
        ExtReal::Infinite => Quadratic {
            a: k.c[2][2],
            b: k.c[1][2],
            c: k.c[0][2],
        }
        .double_root_ext(),
    };
    let corners = Corners {
        left: Corner {
            x: ExtReal::Finite(x_l),
            y: corner_y(ExtReal::Finite(x_l)),
        },
        right: Corner {
            x: x_r,
            y: corner_y(x_r),
        },
        bottom: Corner {
            x: corner_x(ExtReal::Finite(y_b)),
            y: ExtReal::Finite(y_b),
        },
        top: Corner {
            x: corner_x(y_t),
            y: y_t,
        },
    };
    Ok(BranchPointReport {
        roots_x,
        roots_y,
        corners,
        drift: walk.drift(),
    })
}

/// Checks the branch-point structure against the classification of the
/// four branch points; returns a description of every mismatch.
///
/// `drift_along` is the drift in the other variable (`M_y` for the roots in
/// `x`) and `drift_across` the drift in the same variable. With zero
/// `drift_along` one root must sit at `1`, and the remaining three split
/// one inside and two outside the unit circle when `drift_across < 0`,
/// two inside and one outside when `drift_across > 0`.
pub fn branch_point_violations(set: &BranchSet, drift_along: f64, drift_across: f64) -> Vec<String> {
    let mut out = Vec::new();
    let inside = set
        .roots
        .iter()
        .filter(|r| r.modulus() < 1.0 - BRANCH_TOL)
        .count();
    let unit = set
        .labels
        .iter()
        .filter(|l| l.location == Location::Unit)
        .count();
    if drift_along.abs() > BRANCH_TOL {
        if inside != 2 || unit != 0 {
            out.push(format!("{inside} roots inside the unit circle, expected 2"));
        }
    } else {
        if unit == 0 {
            out.push("zero drift but no branch point at 1".to_string());
        }
        let expected_inside = if drift_across < 0.0 { 1 } else { 2 };
        if unit == 1 && drift_across != 0.0 && inside != expected_inside {
            out.push(format!(
                "zero drift with cross drift {drift_across}: {inside} roots inside the unit circle, rule expects {expected_inside}"
            ));
        }
        return out;
    }
    let sign = |r: ExtReal| label(r).sign;
    let pair_ok = |a: ExtReal, b: ExtReal, case: PairCase, outer: bool| -> bool {
        let (sa, sb) = (sign(a), sign(b));
        let has = |s: Sign| sa == s || sb == s;
        match case {
            PairCase::BothPositive => sa == Sign::Positive && sb == Sign::Positive,
            PairCase::OppositeSigns => has(Sign::Positive) && has(Sign::Negative),
            PairCase::Boundary if outer => {
                has(Sign::Infinite)
                    && matches!(
                        (sa, sb),
                        (Sign::Infinite, Sign::Positive | Sign::Infinite)
                            | (Sign::Positive, Sign::Infinite)
                    )
            }
            PairCase::Boundary => {
                has(Sign::Zero)
                    && matches!(
                        (sa, sb),
                        (Sign::Zero, Sign::Zero | Sign::Positive) | (Sign::Positive, Sign::Zero)
                    )
            }
        }
    };
    if drift_along.abs() > BRANCH_TOL {
        let [r0, r1, r2, r3] = set.roots;
        if !pair_ok(r0, r1, set.inner_case, false) {
            out.push(format!(
                "inner pair {:?} does not match {:?}",
                [r0, r1],
                set.inner_case
            ));
        }
        if !pair_ok(r2, r3, set.outer_case, true) {
            out.push(format!(
                "outer pair {:?} does not match {:?}",
                [r2, r3],
                set.outer_case
            ));
        }
    }
    out
}

/// Arcs of the positive component between consecutive corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Arc {
    /// Left corner to bottom corner.
    Q00,
    /// Left corner to top corner.
    Q01,
    /// Bottom corner to right corner.
    Q10,
    /// Right corner to top corner.
    Q11,
}

impl Arc {
    /// Along `Q01` and `Q10` `y` grows with `x`; along `Q00`, `Q11` it falls.
    pub fn increasing(self) -> bool {
        matches!(self, Arc::Q01 | Arc::Q10)
    }

    pub fn name(self) -> &'static str {
        match self {
            Arc::Q00 => "Q00",
            Arc::Q01 => "Q01",
            Arc::Q10 => "Q10",
            Arc::Q11 => "Q11",
        }
    }
}

/// Which root of the `y`-quadratic a trace point uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub x: f64,
    pub y: f64,
    pub arc: Arc,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QPlusTrace {
    /// Loop order: from the left corner along the lower branch to the right
    /// corner, then back along the upper branch.
    pub points: Vec<TracePoint>,
    /// False when a corner is at infinity and the trace was cut at
    /// [`UNBOUNDED_CAP`].
    pub closed: bool,
    pub corners: Corners,
}

impl QPlusTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,arc\n");
        for p in &self.points {
            out.push_str(&format!("{:.16e},{:.16e},{}\n", p.x, p.y, p.arc.name()));
        }
        out
    }
}

/// Samples the positive component of the kernel curve.
///
/// `n_points` abscissae are placed on `[x_l, x_r]` with cosine spacing,
/// which clusters them at the corners where the two branches meet. `x = 1`
/// is always included.
pub fn trace_qplus(walk: &ValidatedWalk, n_points: usize) -> Result<QPlusTrace, CurveError> {
    let report = branch_points(walk)?;
    let k = kernel(walk)?;
    trace_with(&k, &report, n_points.max(3))
}

fn trace_with(
    k: &KernelPoly,
    report: &BranchPointReport,
    n: usize,
) -> Result<QPlusTrace, CurveError> {
    let x_lo = report.x_l();
    let (x_hi, x_bounded) = match report.x_r() {
        ExtReal::Finite(x) => (x, true),
        ExtReal::Infinite => (UNBOUNDED_CAP.max(x_lo + 1.0), false),
    };
    // The upper branch is only cut when it really escapes to infinity.
    let (y_cap, y_bounded) = match report.y_t() {
        ExtReal::Finite(_) => (f64::INFINITY, true),
        ExtReal::Infinite => (UNBOUNDED_CAP, false),
    };
    let closed = x_bounded && y_bounded;
    let x_b = report.corners.bottom.x.finite().unwrap_or(f64::INFINITY);
    let x_t = report.corners.top.x.finite().unwrap_or(f64::INFINITY);

    let mut xs: Vec<f64> = (0..n)
        .map(|i| {
            let th = std::f64::consts::PI * i as f64 / (n - 1) as f64;
            x_lo + (x_hi - x_lo) * 0.5 * (1.0 - th.cos())
        })
        .collect();
    xs[0] = x_lo;
    xs[n - 1] = x_hi;
    if x_lo < 1.0 && 1.0 < x_hi {
        let pos = xs.partition_point(|&x| x < 1.0);
        if xs[pos] != 1.0 {
            xs.insert(pos, 1.0);
        }
    }

    let scale = k.scale();
    let mut lower = Vec::with_capacity(xs.len());
    let mut upper = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        let q = k.y_quadratic(x);
        if q.a == 0.0 {
            continue;
        }
        let d = q.discriminant();
        let endpoint = i == 0 || i == xs.len() - 1;
        if d < 0.0 && !endpoint && d < -1e-12 * scale * scale {
            continue;
        }
        let (mut lo, mut hi) = q.roots_clamped(d);
        if x == 1.0 {
            // Exact root at (1,1); snap the nearer one to remove rounding.
            if (lo - 1.0).abs() < (hi - 1.0).abs() {
                lo = 1.0;
            } else {
                hi = 1.0;
            }
        }
        if endpoint && x_bounded && d <= 0.0 {
            let y = q.double_root();
            lo = y;
            hi = y;
        }
        if lo < 0.0 || hi.is_nan() || lo > y_cap {
            continue;
        }
        lower.push((x, lo));
        if hi <= y_cap {
            upper.push((x, hi));
        }
    }
    if lower.is_empty() {
        return Err(CurveError::EmptyComponent);
    }

    let mut points = Vec::with_capacity(lower.len() + upper.len());
    for &(x, y) in &lower {
        let arc = if x <= x_b { Arc::Q00 } else { Arc::Q10 };
        points.push(TracePoint {
            x,
            y,
            arc,
            branch: Branch::Lower,
        });
    }
    let first_x = lower[0].0;
    let last_x = lower[lower.len() - 1].0;
    for &(x, y) in upper.iter().rev() {
        // The two branches meet at the corners; keep one copy.
        let at_corner = (x == last_x && closed) || (x == first_x && closed);
        if at_corner && (y - k.y_quadratic(x).double_root()).abs() <= 1e-12 {
            continue;
        }
        let arc = if x >= x_t { Arc::Q11 } else { Arc::Q01 };
        points.push(TracePoint {
            x,
            y,
            arc,
            branch: Branch::Upper,
        });
    }
    Ok(QPlusTrace {
        points,
        closed,
        corners: report.corners,
    })
}

/// A singular point of the kernel curve with its local data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Singularity {
    pub x: f64,
    pub y: f64,
    /// `Q_xx Q_yy - Q_xy^2`; negative for a crunode.
    pub hessian_det: f64,
}

/// Locates the singularity of the curve in `[0,1)^2`, if any.
///
/// The transition test (no east, north-east or north steps) is checked
/// against the derivatives of the kernel at the origin; a disagreement is
/// an error.
pub fn detect_singularity(walk: &ValidatedWalk) -> Result<Option<Singularity>, CurveError> {
    let k = kernel(walk)?;
    let structural = walk.lacks_northeast_steps();
    let value = k.eval(0.0, 0.0);
    let gx = k.dx(0.0, 0.0);
    let gy = k.dy(0.0, 0.0);
    let numeric = value.abs() <= SINGULAR_GRAD_TOL
        && gx.abs() <= SINGULAR_GRAD_TOL
        && gy.abs() <= SINGULAR_GRAD_TOL;
    if structural != numeric {
        return Err(CurveError::InconsistentSingularity(format!(
            "transition test says {structural}, derivatives (Q, Qx, Qy) = ({value:e}, {gx:e}, {gy:e})"
        )));
    }
    if !structural {
        return Ok(None);
    }
    let (qxx, qxy, qyy) = k.hessian(0.0, 0.0);
    let det = qxx * qyy - qxy * qxy;
    if !(det < -CRUNODE_TOL) {
        return Err(CurveError::InconsistentSingularity(format!(
            "origin is singular but not a crunode (Hessian determinant {det:e})"
        )));
    }
    Ok(Some(Singularity {
        x: 0.0,
        y: 0.0,
        hessian_det: det,
    }))
}

/// Horizontal-axis balance of the single term `x^i y^j`, divided by `x^{i-1}`:
/// `sum_s x^{1-s} (h_s + y p_{s,-1}) - x`.
pub fn boundary_h(spec: &WalkSpec, x: f64, y: f64) -> f64 {
    let xs = [x * x, x, 1.0];
    let mut acc = -x;
    for s in -1..=1i8 {
        acc += xs[(s + 1) as usize] * (spec.h(s) + y * spec.p(s, -1));
    }
    acc
}

/// Vertical-axis balance of a single term:
/// `sum_t y^{1-t} (v_t + x p_{-1,t}) - y`.
pub fn boundary_v(spec: &WalkSpec, x: f64, y: f64) -> f64 {
    let ys = [y * y, y, 1.0];
    let mut acc = -y;
    for t in -1..=1i8 {
        acc += ys[(t + 1) as usize] * (spec.v(t) + x * spec.p(-1, t));
    }
    acc
}

/// Which boundary polynomial a point annihilates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum Boundary {
    H,
    V,
}

impl Boundary {
    pub fn eval(self, spec: &WalkSpec, x: f64, y: f64) -> f64 {
        match self {
            Boundary::H => boundary_h(spec, x, y),
            Boundary::V => boundary_v(spec, x, y),
        }
    }

    pub fn other(self) -> Boundary {
        match self {
            Boundary::H => Boundary::V,
            Boundary::V => Boundary::H,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Intersection {
    pub x: f64,
    pub y: f64,
    pub which: Boundary,
}

fn bisect_on_branch(
    k: &KernelPoly,
    spec: &WalkSpec,
    which: Boundary,
    branch: Branch,
    mut a: f64,
    mut b: f64,
) -> (f64, f64) {
    let y_at = |x: f64| {
        let q = k.y_quadratic(x);
        let (lo, hi) = q.roots_clamped(q.discriminant());
        match branch {
            Branch::Lower => lo,
            Branch::Upper => hi,
        }
    };
    let f = |x: f64| which.eval(spec, x, y_at(x));
    let mut fa = f(a);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * a.abs().max(1.0) {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            a = m;
            b = m;
            break;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    let x = 0.5 * (a + b);
    (x, y_at(x))
}

/// Points of the positive component inside the open unit square where a
/// single geometric term also balances the horizontal (`H`) or vertical
/// (`V`) axis.
pub fn curve_boundary_intersections(
    walk: &ValidatedWalk,
    n_points: usize,
) -> Result<Vec<Intersection>, CurveError> {
    let k = kernel(walk)?;
    let trace = trace_qplus(walk, n_points)?;
    let spec = walk.spec();
    let in_u = |x: f64, y: f64| x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0;
    // Roots that bisection places on the edge of the square belong to it.
    let inside = |x: f64, y: f64| {
        let m = U_EDGE_TOL;
        x > m && x < 1.0 - m && y > m && y < 1.0 - m
    };
    let mut out: Vec<Intersection> = Vec::new();
    for which in [Boundary::H, Boundary::V] {
        for w in trace.points.windows(2) {
            let (p, q) = (w[0], w[1]);
            if p.branch != q.branch {
                continue;
            }
            if !(in_u(p.x, p.y) || in_u(q.x, q.y)) {
                continue;
            }
            let fp = which.eval(spec, p.x, p.y);
            let fq = which.eval(spec, q.x, q.y);
            if fp == 0.0 || (fp > 0.0) != (fq > 0.0) {
                let (x, y) = if fp == 0.0 {
                    (p.x, p.y)
                } else {
                    bisect_on_branch(&k, spec, which, p.branch, p.x, q.x)
                };
                if inside(x, y)
                    && !out
                        .iter()
                        .any(|o| o.which == which && (o.x - x).abs() < 1e-9 && (o.y - y).abs() < 1e-9)
                {
                    out.push(Intersection { x, y, which });
                }
            }
        }
    }
    Ok(out)
}
