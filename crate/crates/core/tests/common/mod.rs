//! Shared generators and independent re-derivations for the integration
//! tests. Nothing here calls into the kernel code under test.

#![allow(dead_code)]

use qpwalk::walk::{ValidatedWalk, WalkSpec};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Steps other than `(0,0)`, as `(s, t)`.
pub const STEPS: [(i8, i8); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

pub fn is_northeast(s: i8, t: i8) -> bool {
    matches!((s, t), (1, 0) | (1, 1) | (0, 1))
}

/// Builds a folded walk from eight step weights and the share of the stay
/// step. Returns `None` unless the result validates and is non-singular.
pub fn walk_from_weights(weights: [f64; 8], stay: f64) -> Option<ValidatedWalk> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || !(0.0..1.0).contains(&stay) {
        return None;
    }
    let mut interior = [[0.0; 3]; 3];
    for (w, (s, t)) in weights.iter().zip(STEPS) {
        interior[(s + 1) as usize][(t + 1) as usize] = w / total * (1.0 - stay);
    }
    let moving: f64 = STEPS
        .iter()
        .map(|&(s, t)| interior[(s + 1) as usize][(t + 1) as usize])
        .sum();
    interior[1][1] = 1.0 - moving;
    let walk = WalkSpec::with_folded_boundaries(interior).validate().ok()?;
    walk.is_nonsingular().then_some(walk)
}

/// A random non-singular walk. Each step is dropped with probability
/// `zero_prob`; `no_northeast` removes the east, north-east and north steps.
pub fn random_walk(rng: &mut ChaCha8Rng, zero_prob: f64, no_northeast: bool) -> ValidatedWalk {
    loop {
        let mut w = [0.0; 8];
        for (k, &(s, t)) in STEPS.iter().enumerate() {
            if no_northeast && is_northeast(s, t) {
                continue;
            }
            if !rng.gen_bool(zero_prob) {
                w[k] = rng.gen_range(0.01..1.0);
            }
        }
        if !no_northeast && STEPS.iter().zip(&w).all(|(&(s, t), &x)| !is_northeast(s, t) || x == 0.0) {
            continue;
        }
        let stay = rng.gen_range(0.0..0.5);
        if let Some(walk) = walk_from_weights(w, stay) {
            return walk;
        }
    }
}

/// `Q(x, y) = sum p_{s,t} x^{1-s} y^{1-t} - x y`, straight from the law.
pub fn q(spec: &WalkSpec, x: f64, y: f64) -> f64 {
    let mut sum = -x * y;
    for s in -1i8..=1 {
        for t in -1i8..=1 {
            sum += spec.p(s, t) * x.powi((1 - s) as i32) * y.powi((1 - t) as i32);
        }
    }
    sum
}

/// Ascending coefficients of the discriminant in `y` of `Q(x, .)`, expanded
/// by hand: `Q = a(x) y^2 + b(x) y + c(x)` with
/// `a = p_{1,-1} + p_{0,-1} x + p_{-1,-1} x^2`,
/// `b = p_{1,0} + (p_{0,0} - 1) x + p_{-1,0} x^2`,
/// `c = p_{1,1} + p_{0,1} x + p_{-1,1} x^2`.
pub fn delta_y(spec: &WalkSpec) -> [f64; 5] {
    let a = [spec.p(1, -1), spec.p(0, -1), spec.p(-1, -1)];
    let b = [spec.p(1, 0), spec.p(0, 0) - 1.0, spec.p(-1, 0)];
    let c = [spec.p(1, 1), spec.p(0, 1), spec.p(-1, 1)];
    let mut out = [0.0; 5];
    for i in 0..3 {
        for j in 0..3 {
            out[i + j] += b[i] * b[j] - 4.0 * a[i] * c[j];
        }
    }
    out
}

pub fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

/// Positive real roots of `a y^2 + b y + c`.
pub fn positive_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b != 0.0 && -c / b > 0.0 { vec![-c / b] } else { vec![] };
    }
    let d = b * b - 4.0 * a * c;
    if d < 0.0 {
        return vec![];
    }
    let r = d.sqrt();
    [(-b - r) / (2.0 * a), (-b + r) / (2.0 * a)]
        .into_iter()
        .filter(|&y| y > 0.0)
        .collect()
}

/// `y`-quadratic coefficients of the kernel at `x`.
pub fn y_coefficients(spec: &WalkSpec, x: f64) -> (f64, f64, f64) {
    let row = |t: i8| spec.p(1, t) + spec.p(0, t) * x + spec.p(-1, t) * x * x;
    (row(-1), row(0) - x, row(1))
}
