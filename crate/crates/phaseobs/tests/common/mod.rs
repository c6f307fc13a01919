//! Oracles independent of the library's computational paths: adaptive
//! Simpson quadrature and a matrix-exponential construction of displacement
//! operators. Deliberately slow and simple.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use phaseobs::specfun::ladder_matrices;

/// Adaptive Simpson with Richardson acceptance test; panics on breakdown so
/// a miscalibrated oracle fails loudly instead of passing silently.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 {
            panic!("adaptive_simpson recursion exhausted on [{a}, {b}]");
        }
        if delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
            + rec(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// exp(z a* - conj(z) a) on a d-level truncation by scaling and squaring with
/// a Taylor core. Entries well below the truncation edge are accurate to
/// roundoff for moderate |z|.
pub fn displacement_oracle(d: usize, z: Complex64) -> DMatrix<Complex64> {
    let ladders = ladder_matrices(d).expect("ladder matrices");
    let gen = ladders.raising.map(|v| v * z) - ladders.lowering.map(|v| v * z.conj());

    let norm: f64 = (0..d)
        .map(|i| (0..d).map(|j| gen[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = gen.map(|v| v / 2f64.powi(squarings as i32));

    let mut result = DMatrix::<Complex64>::identity(d, d);
    let mut term = DMatrix::<Complex64>::identity(d, d);
    for order in 1..=40u64 {
        term = (&term * &scaled).map(|v| v / order as f64);
        result += &term;
        let tail: f64 = term.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if tail < 1e-20 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

#[cfg(test)]
mod oracle_tests {
    use super::*;

    #[test]
    fn simpson_matches_closed_forms() {
        let v = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-12);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-10);
        let v = adaptive_simpson(&|x: f64| (-x * x).exp(), -8.0, 8.0, 1e-12);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn displacement_oracle_is_unitary_in_the_bulk() {
        let d = 24;
        let z = Complex64::new(0.6, -0.4);
        let u = displacement_oracle(d, z);
        let gram = u.adjoint() * &u;
        for k in 0..8 {
            for l in 0..8 {
                let expect = if k == l { 1.0 } else { 0.0 };
                assert!((gram[(k, l)] - Complex64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }
}
