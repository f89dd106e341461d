//! Finite sets of weighted geometric terms, their uncoupled partitions and
//! the necessary-condition battery for sum-of-geometric-terms measures.

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::compensation::{companion_h, companion_v, Companion};
use crate::curve::{boundary_h, boundary_v, KernelPoly};
use crate::walk::{ValidatedWalk, WalkSpec};

/// Relative tolerance under which two coordinates count as shared.
pub const COUPLING_TOL: f64 = 1e-9;
/// Default tolerance of [`check_on_curve`].
pub const ON_CURVE_TOL: f64 = 1e-10;
/// Default bound of [`separating_exponent`].
pub const SEPARATION_BOUND: u32 = 64;

pub fn same_coordinate(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// The measure `alpha * rho^i * sigma^j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
}

impl WeightedTerm {
    pub fn new(rho: f64, sigma: f64, alpha: f64) -> Self {
        WeightedTerm { rho, sigma, alpha }
    }

    pub fn in_u(&self) -> bool {
        self.rho > 0.0 && self.rho < 1.0 && self.sigma > 0.0 && self.sigma < 1.0
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.alpha * self.rho.powi(i as i32) * self.sigma.powi(j as i32)
    }

    /// `|alpha| / ((1 - rho)(1 - sigma))`, the term's share of the
    /// absolute-convergence norm.
    pub fn norm(&self) -> f64 {
        self.alpha.abs() / ((1.0 - self.rho) * (1.0 - self.sigma))
    }

    /// The same norm without the origin state.
    pub fn off_origin_norm(&self) -> f64 {
        self.alpha.abs() * (1.0 / ((1.0 - self.rho) * (1.0 - self.sigma)) - 1.0)
    }

    /// Total mass `alpha / ((1 - rho)(1 - sigma))`.
    pub fn mass(&self) -> f64 {
        self.alpha / ((1.0 - self.rho) * (1.0 - self.sigma))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GammaError {
    #[error("term {index} = ({rho}, {sigma}) lies outside the open unit square")]
    OutsideU { index: usize, rho: f64, sigma: f64 },
    #[error("term {index} has zero coefficient")]
    ZeroAlpha { index: usize },
    #[error("terms {0} and {1} coincide")]
    Duplicate(usize, usize),
    #[error("group mixes coordinates {0} and {1}")]
    MixedGroup(f64, f64),
}

/// A finite set of weighted terms.
///
/// The induced measure is `m(i, j) = sum alpha rho^i sigma^j`, except that
/// `origin_mass`, when present, replaces the value at `(0, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaSet {
    pub terms: Vec<WeightedTerm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin_mass: Option<f64>,
    #[serde(skip)]
    pub tol: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GammaFile {
    List(Vec<WeightedTerm>),
    Object {
        terms: Vec<WeightedTerm>,
        #[serde(default)]
        origin_mass: Option<f64>,
    },
}

impl GammaSet {
    pub fn new(terms: Vec<WeightedTerm>) -> Result<Self, GammaError> {
        Self::with_tol(terms, COUPLING_TOL)
    }

    pub fn with_tol(terms: Vec<WeightedTerm>, tol: f64) -> Result<Self, GammaError> {
        for (index, t) in terms.iter().enumerate() {
            if !t.in_u() {
                return Err(GammaError::OutsideU {
                    index,
                    rho: t.rho,
                    sigma: t.sigma,
                });
            }
            if t.alpha == 0.0 {
                return Err(GammaError::ZeroAlpha { index });
            }
        }
        for i in 0..terms.len() {
            for j in i + 1..terms.len() {
                if same_coordinate(terms[i].rho, terms[j].rho, tol)
                    && same_coordinate(terms[i].sigma, terms[j].sigma, tol)
                {
                    return Err(GammaError::Duplicate(i, j));
                }
            }
        }
        Ok(GammaSet {
            terms,
            origin_mass: None,
            tol,
        })
    }

    /// Parses a JSON list of `{rho, sigma, alpha}` or an object with a
    /// `terms` list (series output is accepted as is).
    pub fn from_json(text: &str) -> Result<Self, String> {
        let file: GammaFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let (terms, origin_mass) = match file {
            GammaFile::List(terms) => (terms, None),
            GammaFile::Object { terms, origin_mass } => (terms, origin_mass),
        };
        let mut g = GammaSet::new(terms).map_err(|e| e.to_string())?;
        g.origin_mass = origin_mass;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        if i == 0 && j == 0 {
            if let Some(z) = self.origin_mass {
                return z;
            }
        }
        self.terms.iter().map(|t| t.value(i, j)).sum()
    }

    /// `sum |alpha| / ((1 - rho)(1 - sigma))`.
    pub fn norm(&self) -> f64 {
        self.terms.iter().map(WeightedTerm::norm).sum()
    }

    /// Total mass of the induced measure.
    pub fn total_mass(&self) -> f64 {
        match self.origin_mass {
            None => self.terms.iter().map(WeightedTerm::mass).sum(),
            Some(z) => {
                z + self
                    .terms
                    .iter()
                    .map(|t| t.mass() - t.alpha)
                    .sum::<f64>()
            }
        }
    }
}

/// Maximal uncoupled partitions of a term set, as sorted index groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionResult {
    pub h_groups: Vec<Vec<usize>>,
    pub v_groups: Vec<Vec<usize>>,
    pub g_groups: Vec<Vec<usize>>,
}

impl PartitionResult {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.h_groups.len(), self.v_groups.len(), self.g_groups.len())
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    fn groups(mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let r = self.find(i);
            by_root[r].push(i);
        }
        canonical(by_root.into_iter().filter(|g| !g.is_empty()).collect())
    }
}

/// Sorts each group and orders groups by their smallest index.
pub fn canonical(mut groups: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort_by_key(|g| g[0]);
    groups
}

fn components(terms: &[WeightedTerm], tol: f64, by_rho: bool, by_sigma: bool) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(terms.len());
    for i in 0..terms.len() {
        for j in i + 1..terms.len() {
            let (a, b) = (&terms[i], &terms[j]);
            if (by_rho && same_coordinate(a.rho, b.rho, tol))
                || (by_sigma && same_coordinate(a.sigma, b.sigma, tol))
            {
                uf.union(i, j);
            }
        }
    }
    uf.groups()
}

/// Maximal horizontally, vertically and fully uncoupled partitions.
pub fn maximal_partitions(g: &GammaSet) -> PartitionResult {
    partitions_of(&g.terms, g.tol)
}

pub fn partitions_of(terms: &[WeightedTerm], tol: f64) -> PartitionResult {
    PartitionResult {
        h_groups: components(terms, tol, true, false),
        v_groups: components(terms, tol, false, true),
        g_groups: components(terms, tol, true, true),
    }
}

/// Horizontal boundary balance of a group of terms sharing `rho`.
pub fn bh_sum(group: &[WeightedTerm], spec: &WalkSpec, tol: f64) -> Result<f64, GammaError> {
    if let Some(first) = group.first() {
        if let Some(t) = group.iter().find(|t| !same_coordinate(t.rho, first.rho, tol)) {
            return Err(GammaError::MixedGroup(first.rho, t.rho));
        }
    }
    Ok(group
        .iter()
        .map(|t| t.alpha * boundary_h(spec, t.rho, t.sigma))
        .sum())
}

/// Vertical boundary balance of a group of terms sharing `sigma`.
pub fn bv_sum(group: &[WeightedTerm], spec: &WalkSpec, tol: f64) -> Result<f64, GammaError> {
    if let Some(first) = group.first() {
        if let Some(t) = group
            .iter()
            .find(|t| !same_coordinate(t.sigma, first.sigma, tol))
        {
            return Err(GammaError::MixedGroup(first.sigma, t.sigma));
        }
    }
    Ok(group
        .iter()
        .map(|t| t.alpha * boundary_v(spec, t.rho, t.sigma))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TermResidual {
    pub index: usize,
    /// `|Q(rho, sigma)|` divided by the largest kernel coefficient.
    pub residual: f64,
    pub outside_u: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveCheck {
    pub residuals: Vec<TermResidual>,
    pub tol: f64,
    pub pass: bool,
}

impl CurveCheck {
    pub fn worst(&self) -> Option<&TermResidual> {
        self.residuals
            .iter()
            .max_by(|a, b| a.residual.total_cmp(&b.residual))
    }
}

/// Distance of every term from the kernel curve. Terms outside the open
/// unit square fail regardless of their residual.
pub fn check_on_curve(terms: &[WeightedTerm], spec: &WalkSpec, tol: f64) -> CurveCheck {
    let k = KernelPoly::of(spec);
    let scale = k.scale();
    let residuals: Vec<TermResidual> = terms
        .iter()
        .enumerate()
        .map(|(index, t)| TermResidual {
            index,
            residual: k.eval(t.rho, t.sigma).abs() / scale,
            outside_u: !t.in_u(),
        })
        .collect();
    let pass = residuals.iter().all(|r| r.residual <= tol && !r.outside_u);
    CurveCheck {
        residuals,
        tol,
        pass,
    }
}

/// Smallest `(w, v)` in lexicographic order, `1 <= w, v <= bound`, for which
/// `rho_i^w sigma_i^v` differs from the same power of every other term.
pub fn separating_exponent(terms: &[WeightedTerm], i: usize, bound: u32) -> Option<(u32, u32)> {
    let logs: Vec<(f64, f64)> = terms.iter().map(|t| (t.rho.ln(), t.sigma.ln())).collect();
    let (lr, ls) = logs[i];
    for w in 1..=bound {
        for v in 1..=bound {
            let own = w as f64 * lr + v as f64 * ls;
            let separated = logs.iter().enumerate().all(|(j, &(r, s))| {
                j == i || (own - (w as f64 * r + v as f64 * s)).exp_m1().abs() > COUPLING_TOL
            });
            if separated {
                return Some((w, v));
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub status: Status,
    pub witness: serde_json::Value,
}

impl Verdict {
    fn new(pass: bool, witness: serde_json::Value) -> Self {
        Verdict {
            status: if pass { Status::Pass } else { Status::Fail },
            witness,
        }
    }

    fn not_applicable() -> Self {
        Verdict {
            status: Status::NotApplicable,
            witness: serde_json::Value::Null,
        }
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

/// How a group of coupled terms can be continued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupExtension {
    /// The deepest term has a companion inside the unit square that is not
    /// yet in the group.
    ConsistentWithInfinite,
    /// No companion of the deepest term stays inside the closed square.
    FiniteClosed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub on_curve: Verdict,
    pub pairwise_coupled: Verdict,
    pub origin_accumulation: Verdict,
    pub negative_coefficient: Verdict,
    pub tolerances: serde_json::Value,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        [
            &self.on_curve,
            &self.pairwise_coupled,
            &self.origin_accumulation,
            &self.negative_coefficient,
        ]
        .iter()
        .all(|v| v.passed())
    }
}

fn group_extension(walk: &ValidatedWalk, terms: &[WeightedTerm], group: &[usize], tol: f64) -> GroupExtension {
    let deepest = group
        .iter()
        .map(|&i| terms[i])
        .min_by(|a, b| (a.rho * a.sigma).total_cmp(&(b.rho * b.sigma)))
        .expect("groups are non-empty");
    let fresh = |x: f64, y: f64| {
        !group
            .iter()
            .any(|&i| same_coordinate(terms[i].rho, x, tol) && same_coordinate(terms[i].sigma, y, tol))
    };
    let point = (deepest.rho, deepest.sigma);
    for c in [companion_v(walk, point), companion_h(walk, point)] {
        if let Ok(Companion::Found(x, y)) = c {
            if fresh(x, y) {
                return GroupExtension::ConsistentWithInfinite;
            }
        }
    }
    GroupExtension::FiniteClosed
}

/// Runs the four necessary conditions on a candidate term set.
///
/// Every term must lie on the positive part of the kernel curve inside the
/// unit square. When the set stands for an infinite family, each coupled
/// group must admit a continuation, the walk must lack east, north-east and
/// north steps with terms heading to the origin, and some coefficient must
/// be negative.
pub fn necessary_conditions(walk: &ValidatedWalk, g: &GammaSet, claims_infinite: bool) -> ConditionReport {
    let check = check_on_curve(&g.terms, walk.spec(), ON_CURVE_TOL);
    let on_curve = Verdict::new(
        check.pass,
        json!({
            "worst": check.worst(),
            "outside_u": check.residuals.iter().filter(|r| r.outside_u).map(|r| r.index).collect::<Vec<_>>(),
        }),
    );

    let parts = maximal_partitions(g);
    let pairwise_coupled = if claims_infinite {
        let ext: Vec<GroupExtension> = parts
            .g_groups
            .iter()
            .map(|grp| group_extension(walk, &g.terms, grp, g.tol))
            .collect();
        let pass = ext.iter().all(|e| *e == GroupExtension::ConsistentWithInfinite);
        Verdict::new(
            pass,
            json!({
                "groups": parts.g_groups.len(),
                "sizes": parts.g_groups.iter().map(Vec::len).collect::<Vec<_>>(),
                "extension": ext,
            }),
        )
    } else {
        Verdict {
            status: Status::Pass,
            witness: json!({ "groups": parts.g_groups.len() }),
        }
    };

    let origin_accumulation = if claims_infinite {
        let structural = walk.lacks_northeast_steps();
        let reach: Vec<f64> = g.terms.iter().map(|t| t.rho.max(t.sigma)).collect();
        let n = reach.len();
        let q = (n / 4).max(1);
        let trend = n >= 2 && {
            let head = reach[..q].iter().copied().fold(f64::INFINITY, f64::min);
            reach[n - q..].iter().all(|&r| r < head)
        };
        Verdict::new(
            structural && trend,
            json!({
                "no_east_northeast_north": structural,
                "p10": walk.p(1, 0), "p11": walk.p(1, 1), "p01": walk.p(0, 1),
                "first_reach": reach.first(),
                "last_reach": reach.last(),
                "heads_to_origin": trend,
            }),
        )
    } else {
        Verdict::not_applicable()
    };

    let negative_coefficient = if claims_infinite {
        let (idx, min) = g
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (i, t.alpha))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, f64::NAN));
        Verdict::new(min < 0.0, json!({ "index": idx, "min_alpha": min }))
    } else {
        Verdict::not_applicable()
    };

    ConditionReport {
        on_curve,
        pairwise_coupled,
        origin_accumulation,
        negative_coefficient,
        tolerances: json!({ "on_curve": ON_CURVE_TOL, "coupling": g.tol }),
    }
}
