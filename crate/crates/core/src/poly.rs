//! Real roots of low-degree polynomials through companion-matrix eigenvalues.
//!
//! Coefficients are stored in ascending order: `c[k]` multiplies `x^k`.

use nalgebra::DMatrix;
use serde::{Serialize, Serializer};

/// Leading coefficients below this fraction of the largest coefficient are
/// treated as zero; each dropped degree contributes a root at infinity.
pub const DEGREE_DROP_TOL: f64 = 1e-12;
/// Eigenvalues with `|im| < IMAG_TOL * max(1, |z|)` count as real.
pub const IMAG_TOL: f64 = 1e-9;
/// Conjugate pairs this close to the real axis are accepted as a double
/// real root when the polynomial nearly vanishes at their real part.
const NEAR_DOUBLE_TOL: f64 = 1e-6;
/// Trailing coefficients below this fraction of the scale are exact zero roots.
const ZERO_ROOT_TOL: f64 = 1e-14;

/// A real root, possibly at infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            ExtReal::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtReal::Infinite)
    }

    /// Modulus, with infinity mapped to `f64::INFINITY`.
    pub fn modulus(self) -> f64 {
        match self {
            ExtReal::Finite(x) => x.abs(),
            ExtReal::Infinite => f64::INFINITY,
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(x) => ser.serialize_f64(*x),
            ExtReal::Infinite => ser.serialize_str("inf"),
        }
    }
}

/// Roots of a polynomial of nominal degree `n`: always `n` entries in
/// `real` + `2 * complex_pairs.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Roots {
    pub real: Vec<ExtReal>,
    /// One representative `(re, im)` per conjugate pair.
    pub complex_pairs: Vec<(f64, f64)>,
}

pub fn eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck)
}

pub fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(k, &ck)| k as f64 * ck)
        .collect()
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn scale_of(c: &[f64]) -> f64 {
    c.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
}

/// Newton polishing; keeps the original root unless the residual improves.
fn polish(c: &[f64], dc: &[f64], mut x: f64) -> f64 {
    let mut best = (eval(c, x).abs(), x);
    for _ in 0..8 {
        let d = eval(dc, x);
        if d == 0.0 {
            break;
        }
        x -= eval(c, x) / d;
        if !x.is_finite() {
            break;
        }
        let r = eval(c, x).abs();
        if r < best.0 {
            best = (r, x);
        }
        if r == 0.0 {
            break;
        }
    }
    best.1
}

/// All roots of the polynomial with ascending coefficients `c`.
///
/// Returns `None` for the zero polynomial.
pub fn roots(c: &[f64]) -> Option<Roots> {
    let scale = scale_of(c);
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let mut work: Vec<f64> = c.to_vec();
    let mut real = Vec::with_capacity(c.len());

    while work.len() > 1 && work.last().unwrap().abs() < DEGREE_DROP_TOL * scale {
        work.pop();
        real.push(ExtReal::Infinite);
    }
    while work.len() > 1 && work[0].abs() <= ZERO_ROOT_TOL * scale {
        work.remove(0);
        real.push(ExtReal::Finite(0.0));
    }
    let degree = work.len() - 1;
    let mut complex_pairs = Vec::new();
    if degree == 0 {
        return Some(Roots {
            real,
            complex_pairs,
        });
    }

    let lead = work[degree];
    let mut companion = DMatrix::<f64>::zeros(degree, degree);
    for i in 1..degree {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..degree {
        companion[(i, degree - 1)] = -work[i] / lead;
    }
    let eig = companion.complex_eigenvalues();

    let dwork = derivative(&work);
    let local_scale = scale_of(&work);
    let mut pending: Vec<(f64, f64)> = Vec::new();
    for z in eig.iter() {
        let mag = z.norm().max(1.0);
        if z.im.abs() < IMAG_TOL * mag {
            real.push(ExtReal::Finite(polish(&work, &dwork, z.re)));
        } else if z.im > 0.0 {
            pending.push((z.re, z.im));
        }
    }
    for (re, im) in pending {
        let mag = re.abs().max(im.abs()).max(1.0);
        let resid = eval(&work, re).abs();
        let resid_tol = 1e-10 * local_scale * mag.powi(degree as i32);
        if im < NEAR_DOUBLE_TOL * mag && resid <= resid_tol {
            // Split double root: locate the stationary point nearby.
            let x = polish(&dwork, &derivative(&dwork), re);
            let x = if eval(&work, x).abs() <= eval(&work, re).abs() {
                x
            } else {
                re
            };
            real.push(ExtReal::Finite(x));
            real.push(ExtReal::Finite(x));
        } else {
            complex_pairs.push((re, im));
        }
    }
    Some(Roots {
        real,
        complex_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_sorted(r: &Roots) -> Vec<f64> {
        let mut v: Vec<f64> = r.real.iter().filter_map(|x| x.finite()).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn simple_quartic() {
        // (x-1)(x-2)(x+3)(x-0.5)
        let c = mul(&mul(&[-1.0, 1.0], &[-2.0, 1.0]), &mul(&[3.0, 1.0], &[-0.5, 1.0]));
        let r = roots(&c).unwrap();
        assert!(r.complex_pairs.is_empty());
        let v = finite_sorted(&r);
        for (got, want) in v.iter().zip([-3.0, 0.5, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-13, "{v:?}");
        }
    }

    #[test]
    fn degree_drop_pads_infinity() {
        let r = roots(&[-1.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.real.iter().filter(|x| x.is_infinite()).count(), 2);
        assert_eq!(finite_sorted(&r).len(), 2);
    }

    #[test]
    fn double_zero_root_is_exact() {
        // x^2 (3/4 - x^2/2)
        let r = roots(&[0.0, 0.0, 0.75, 0.0, -0.5]).unwrap();
        let v = finite_sorted(&r);
        assert_eq!(v.len(), 4);
        assert_eq!(v[1], 0.0);
        assert_eq!(v[2], 0.0);
        assert!((v[3] - 1.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn near_double_root_is_kept_real() {
        // (x - 1)^2 (x + 2)(x - 3)
        let c = mul(&mul(&[-1.0, 1.0], &[-1.0, 1.0]), &mul(&[2.0, 1.0], &[-3.0, 1.0]));
        let r = roots(&c).unwrap();
        assert!(r.complex_pairs.is_empty(), "{r:?}");
        let v = finite_sorted(&r);
        assert!((v[1] - 1.0).abs() < 1e-7 && (v[2] - 1.0).abs() < 1e-7, "{v:?}");
    }

    #[test]
    fn complex_pair_reported() {
        let r = roots(&[1.0, 0.0, 1.0]).unwrap();
        assert!(r.real.is_empty());
        assert_eq!(r.complex_pairs.len(), 1);
    }

    #[test]
    fn zero_polynomial() {
        assert!(roots(&[0.0, 0.0]).is_none());
    }
}
