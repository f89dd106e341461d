//! Homogeneous nearest-neighbour random walks on the quarter-plane.
//!
//! A walk is described by three translation-invariant laws: the interior
//! law `p[s][t]`, the law `h[s]` for steps along the horizontal axis and the
//! law `v[t]` for steps along the vertical axis. From a horizontal-axis state
//! the upward steps use the interior probabilities `p[s][1]`; from a
//! vertical-axis state the rightward steps use `p[1][t]`. The origin moves
//! to `(1,0)` with `h[1]`, to `(0,1)` with `v[1]`, to `(1,1)` with `p[1][1]`
//! and stays put otherwise.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for every stochasticity check.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Region of the state space a transition law belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Interior,
    Horizontal,
    Vertical,
    Origin,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Region::Interior => "interior",
            Region::Horizontal => "horizontal axis",
            Region::Vertical => "vertical axis",
            Region::Origin => "origin",
        };
        f.write_str(name)
    }
}

/// One violated walk invariant.
#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WalkViolation {
    #[error("{region} law is not stochastic (|sum - 1| = {residual:e})")]
    NonStochastic { region: Region, residual: f64 },
    #[error("negative probability {value} in {region} law at {index:?}")]
    NegativeProbability {
        region: Region,
        index: (i8, i8),
        value: f64,
    },
    #[error("probability {value} above one in {region} law at {index:?}")]
    ExceedsOne {
        region: Region,
        index: (i8, i8),
        value: f64,
    },
    #[error("non-finite probability in {region} law at {index:?}")]
    NotFinite { region: Region, index: (i8, i8) },
    #[error("interior law never moves (p[0][0] = 1)")]
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SwitchError {
    #[error("routing row {row} sums to {sum}, expected 1")]
    InvalidRouting { row: usize, sum: f64 },
    #[error("routing probability t{0}{1} = {2} must be positive")]
    NonPositiveRouting(usize, usize, f64),
    #[error("arrival rate r{0} = {1} outside (0, 1]")]
    InvalidRate(usize, f64),
}

/// Full transition law of a homogeneous quarter-plane walk.
///
/// `interior[s + 1][t + 1]` is the probability of the step `(s, t)`,
/// `horizontal[s + 1]` is `h_s` and `vertical[t + 1]` is `v_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkSpec {
    pub interior: [[f64; 3]; 3],
    pub horizontal: [f64; 3],
    pub vertical: [f64; 3],
}

#[inline]
fn slot(k: i8) -> usize {
    debug_assert!((-1..=1).contains(&k), "step component out of range: {k}");
    (k + 1) as usize
}

impl WalkSpec {
    /// Interior step probability `p_{s,t}`.
    #[inline]
    pub fn p(&self, s: i8, t: i8) -> f64 {
        self.interior[slot(s)][slot(t)]
    }

    #[inline]
    pub fn h(&self, s: i8) -> f64 {
        self.horizontal[slot(s)]
    }

    #[inline]
    pub fn v(&self, t: i8) -> f64 {
        self.vertical[slot(t)]
    }

    /// Builds a walk whose axis laws fold the blocked downward (resp.
    /// leftward) interior steps into the along-axis moves:
    /// `h_s = p_{s,0} + p_{s,-1}` and `v_t = p_{0,t} + p_{-1,t}`.
    pub fn with_folded_boundaries(interior: [[f64; 3]; 3]) -> Self {
        let mut horizontal = [0.0; 3];
        let mut vertical = [0.0; 3];
        for k in 0..3 {
            horizontal[k] = interior[k][1] + interior[k][0];
            vertical[k] = interior[1][k] + interior[0][k];
        }
        WalkSpec {
            interior,
            horizontal,
            vertical,
        }
    }

    /// Swaps the roles of the two coordinates.
    pub fn transposed(&self) -> Self {
        let mut interior = [[0.0; 3]; 3];
        for (a, row) in interior.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                *cell = self.interior[b][a];
            }
        }
        WalkSpec {
            interior,
            horizontal: self.vertical,
            vertical: self.horizontal,
        }
    }

    /// Upward flux `sum_s p_{s,1}` leaving a horizontal-axis state.
    pub fn up_mass(&self) -> f64 {
        (-1..=1).map(|s| self.p(s, 1)).sum()
    }

    /// Rightward flux `sum_t p_{1,t}` leaving a vertical-axis state.
    pub fn right_mass(&self) -> f64 {
        (-1..=1).map(|t| self.p(1, t)).sum()
    }

    /// Probability that the origin stays put.
    pub fn origin_stay(&self) -> f64 {
        1.0 - self.h(1) - self.v(1) - self.p(1, 1)
    }

    /// Checks every invariant and returns all violations at once.
    pub fn validate(self) -> Result<ValidatedWalk, Vec<WalkViolation>> {
        let mut errors = Vec::new();

        let mut check = |region: Region, index: (i8, i8), value: f64| {
            if !value.is_finite() {
                errors.push(WalkViolation::NotFinite { region, index });
            } else if value < 0.0 {
                errors.push(WalkViolation::NegativeProbability {
                    region,
                    index,
                    value,
                });
            } else if value > 1.0 {
                errors.push(WalkViolation::ExceedsOne {
                    region,
                    index,
                    value,
                });
            }
        };
        for s in -1..=1 {
            for t in -1..=1 {
                check(Region::Interior, (s, t), self.p(s, t));
            }
            check(Region::Horizontal, (s, 0), self.h(s));
            check(Region::Vertical, (0, s), self.v(s));
        }

        let interior_sum: f64 = self.interior.iter().flatten().sum();
        let horizontal_sum: f64 = self.horizontal.iter().sum::<f64>() + self.up_mass();
        let vertical_sum: f64 = self.vertical.iter().sum::<f64>() + self.right_mass();
        for (region, sum) in [
            (Region::Interior, interior_sum),
            (Region::Horizontal, horizontal_sum),
            (Region::Vertical, vertical_sum),
        ] {
            let residual = (sum - 1.0).abs();
            if !(residual <= STOCHASTIC_TOL) {
                errors.push(WalkViolation::NonStochastic { region, residual });
            }
        }
        let origin_out = self.h(1) + self.v(1) + self.p(1, 1);
        if origin_out > 1.0 + STOCHASTIC_TOL {
            errors.push(WalkViolation::NonStochastic {
                region: Region::Origin,
                residual: origin_out - 1.0,
            });
        }
        if (self.p(0, 0) - 1.0).abs() <= STOCHASTIC_TOL {
            errors.push(WalkViolation::Degenerate);
        }

        if errors.is_empty() {
            Ok(ValidatedWalk(self))
        } else {
            Err(errors)
        }
    }
}

/// A [`WalkSpec`] that passed [`WalkSpec::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ValidatedWalk(WalkSpec);

impl ValidatedWalk {
    pub fn spec(&self) -> &WalkSpec {
        &self.0
    }

    pub fn into_spec(self) -> WalkSpec {
        self.0
    }

    pub fn drift(&self) -> Drift {
        let p = &self.0;
        let mx = (-1..=1).map(|t| p.p(1, t) - p.p(-1, t)).sum();
        let my = (-1..=1).map(|s| p.p(s, 1) - p.p(s, -1)).sum();
        Drift { mx, my }
    }

    /// Ergodicity needs at least one negative interior drift component. This
    /// is necessary only; `true` here does not certify ergodicity.
    pub fn drift_permits_ergodicity(&self) -> bool {
        let d = self.drift();
        d.mx < 0.0 || d.my < 0.0
    }

    pub fn singular_class(&self) -> SingularClass {
        singular_class(&self.0)
    }

    pub fn is_nonsingular(&self) -> bool {
        self.singular_class() == SingularClass::NonSingular
    }

    /// `p_{1,0} = p_{1,1} = p_{0,1} = 0`: no east, north-east or north steps.
    pub fn lacks_northeast_steps(&self) -> bool {
        self.p(1, 0) == 0.0 && self.p(1, 1) == 0.0 && self.p(0, 1) == 0.0
    }

    pub fn transposed(&self) -> ValidatedWalk {
        ValidatedWalk(self.0.transposed())
    }
}

impl Deref for ValidatedWalk {
    type Target = WalkSpec;

    fn deref(&self) -> &WalkSpec {
        &self.0
    }
}

/// Mean interior step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub mx: f64,
    pub my: f64,
}

/// The five maximal supports of singular walks (the centre step is free).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularPattern {
    /// Only the diagonal steps `(1,1)` and `(-1,-1)`.
    A,
    /// No step with `s = -1`: degree one in `x`.
    B,
    /// No step with `s = 1`: `x` divides the kernel.
    C,
    /// No step with `t = -1`: degree one in `y`.
    D,
    /// No step with `t = 1`: `y` divides the kernel.
    E,
}

impl SingularPattern {
    pub const ALL: [SingularPattern; 5] = [
        SingularPattern::A,
        SingularPattern::B,
        SingularPattern::C,
        SingularPattern::D,
        SingularPattern::E,
    ];

    /// Steps that may carry positive mass under this pattern.
    pub fn allowed(self, s: i8, t: i8) -> bool {
        if (s, t) == (0, 0) {
            return true;
        }
        match self {
            SingularPattern::A => s == t,
            SingularPattern::B => s != -1,
            SingularPattern::C => s != 1,
            SingularPattern::D => t != -1,
            SingularPattern::E => t != 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", content = "pattern", rename_all = "snake_case")]
pub enum SingularClass {
    NonSingular,
    SingularPattern(SingularPattern),
    /// Support inside `{(1,-1), (-1,1)}`: the kernel is a product of two
    /// lines through the origin.
    ReducibleAntiDiagonal,
}

/// Every singular support mask that `spec` fits. A walk may fit several;
/// [`singular_class`] reports the first.
pub fn singular_patterns(spec: &WalkSpec) -> Vec<SingularPattern> {
    SingularPattern::ALL
        .into_iter()
        .filter(|pat| {
            (-1..=1).all(|s| (-1..=1).all(|t| spec.p(s, t) == 0.0 || pat.allowed(s, t)))
        })
        .collect()
}

/// Classifies the kernel of `spec`.
///
/// First the degree test on the rows/columns of the kernel coefficients,
/// then the support masks.
pub fn singular_class(spec: &WalkSpec) -> SingularClass {
    let nz = |s: i8, t: i8| spec.p(s, t) != 0.0;
    let row = |s: i8| (-1..=1).any(|t| nz(s, t));
    let col = |t: i8| (-1..=1).any(|s| nz(s, t));

    // Leading coefficient in x is sum_t p_{-1,t} y^{1-t}, constant term in x
    // is sum_t p_{1,t} y^{1-t}; same in y.
    if !row(-1) {
        return SingularClass::SingularPattern(SingularPattern::B);
    }
    if !row(1) {
        return SingularClass::SingularPattern(SingularPattern::C);
    }
    if !col(-1) {
        return SingularClass::SingularPattern(SingularPattern::D);
    }
    if !col(1) {
        return SingularClass::SingularPattern(SingularPattern::E);
    }
    let support: Vec<(i8, i8)> = (-1..=1)
        .flat_map(|s| (-1..=1).map(move |t| (s, t)))
        .filter(|&(s, t)| nz(s, t))
        .collect();
    if let Some(pattern) = SingularPattern::ALL
        .into_iter()
        .find(|pat| support.iter().all(|&(s, t)| pat.allowed(s, t)))
    {
        return SingularClass::SingularPattern(pattern);
    }
    if support
        .iter()
        .all(|&st| matches!(st, (0, 0) | (1, -1) | (-1, 1)))
    {
        return SingularClass::ReducibleAntiDiagonal;
    }
    SingularClass::NonSingular
}

/// Parameters of the clocked 2x2 buffered switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchParams {
    pub r1: f64,
    pub r2: f64,
    pub t11: f64,
    pub t12: f64,
    pub t21: f64,
    pub t22: f64,
}

impl SwitchParams {
    /// Parameters drawn in the switch balance-curve figure.
    pub const FIG7: SwitchParams = SwitchParams {
        r1: 0.8,
        r2: 0.9,
        t11: 0.3,
        t12: 0.7,
        t21: 0.6,
        t22: 0.4,
    };
}

/// Builds the quarter-plane walk of a 2x2 switch, states counting the jobs
/// waiting at server 1 and server 2.
///
/// Both jobs routed to server 1 gives the step `(1,-1)`: the product is
/// `t11 * t21` (routing type 1 and type 2 jobs to server 1).
pub fn from_switch(params: SwitchParams) -> Result<ValidatedWalk, SwitchError> {
    let SwitchParams {
        r1,
        r2,
        t11,
        t12,
        t21,
        t22,
    } = params;
    for (i, r) in [(1, r1), (2, r2)] {
        if !(r > 0.0 && r <= 1.0) {
            return Err(SwitchError::InvalidRate(i, r));
        }
    }
    for (i, j, t) in [(1, 1, t11), (1, 2, t12), (2, 1, t21), (2, 2, t22)] {
        if !(t > 0.0) {
            return Err(SwitchError::NonPositiveRouting(i, j, t));
        }
    }
    for (row, sum) in [(1, t11 + t12), (2, t21 + t22)] {
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(SwitchError::InvalidRouting { row, sum });
        }
    }

    let both = r1 * r2;
    let p_se = both * t11 * t21;
    let p_stay = both * (t11 * t22 + t12 * t21);
    let p_nw = both * t12 * t22;
    let p_s = r1 * (1.0 - r2) * t11 + r2 * (1.0 - r1) * t21;
    let p_w = r1 * (1.0 - r2) * t12 + r2 * (1.0 - r1) * t22;
    let p_sw = (1.0 - r1) * (1.0 - r2);

    let mut interior = [[0.0; 3]; 3];
    interior[2][0] = p_se;
    interior[1][1] = p_stay;
    interior[0][2] = p_nw;
    interior[1][0] = p_s;
    interior[0][1] = p_w;
    interior[0][0] = p_sw;

    let spec = WalkSpec::with_folded_boundaries(interior);
    // The construction is stochastic for every admissible parameter set.
    Ok(spec
        .validate()
        .expect("switch construction produced a non-stochastic walk"))
}
