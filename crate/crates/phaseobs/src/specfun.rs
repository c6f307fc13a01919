//! Special functions and exact combinatorics underlying the displacement
//! kernel: factorials and binomials correctly rounded from integer
//! arithmetic, Hermite polynomials/functions, generalized Laguerre
//! polynomials, displacement expansion coefficients and matrix elements,
//! and truncated ladder matrices.

use nalgebra::DMatrix;
use num_bigint::BigUint;
use num_complex::Complex64;
use std::sync::OnceLock;

use crate::{Error, Result};

/// Largest n with n! finite in f64.
pub const FACTORIAL_MAX: u32 = 170;

fn factorial_table() -> &'static [f64; (FACTORIAL_MAX + 1) as usize] {
    static TABLE: OnceLock<[f64; (FACTORIAL_MAX + 1) as usize]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = [0.0; (FACTORIAL_MAX + 1) as usize];
        let mut acc = BigUint::from(1u32);
        out[0] = 1.0;
        for n in 1..=FACTORIAL_MAX {
            acc *= n;
            out[n as usize] = big_to_f64(&acc);
        }
        out
    })
}

fn big_to_f64(v: &BigUint) -> f64 {
    let s = v.to_str_radix(10);
    // Correctly rounded: f64 from decimal string parses to nearest.
    s.parse::<f64>().expect("decimal parse")
}

/// n! as the correctly rounded f64; exact for n <= 22 where n! < 2^53.
pub fn factorial(n: u32) -> Result<f64> {
    if n > FACTORIAL_MAX {
        return Err(Error::Overflow(format!("{n}! exceeds f64 range")));
    }
    Ok(factorial_table()[n as usize])
}

fn big_factorial_table() -> &'static Vec<BigUint> {
    static TABLE: OnceLock<Vec<BigUint>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = Vec::with_capacity((FACTORIAL_MAX + 1) as usize);
        let mut acc = BigUint::from(1u32);
        out.push(acc.clone());
        for n in 1..=FACTORIAL_MAX {
            acc *= n;
            out.push(acc.clone());
        }
        out
    })
}

/// n! as an exact integer, n <= FACTORIAL_MAX.
pub(crate) fn big_factorial(n: u32) -> BigUint {
    big_factorial_table()[n as usize].clone()
}

/// C(n, k) as an exact integer.
pub(crate) fn big_binomial(n: u32, k: u32) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Falling factorial n (n-1) ... (n-r+1) as an exact integer, r <= n.
pub(crate) fn big_falling(n: u32, r: u32) -> BigUint {
    let mut acc = BigUint::from(1u32);
    for i in 0..r {
        acc *= n - i;
    }
    acc
}

/// Top bits of a positive integer as (mantissa, binary exponent) with
/// mantissa < 2^63 and relative truncation error below 2^-62.
fn top_mant_exp(v: &BigUint) -> (f64, i64) {
    let bits = v.bits();
    if bits <= 63 {
        return (u64::try_from(v).expect("fits u64") as f64, 0);
    }
    let shift = (bits - 63) as usize;
    let top = v >> shift;
    (u64::try_from(&top).expect("fits u64") as f64, shift as i64)
}

/// sqrt(num / den) for positive integers of arbitrary size, accurate to a
/// few ulp; +inf when the value leaves f64 range. Exact when num == den.
pub(crate) fn sqrt_big_ratio(num: &BigUint, den: &BigUint) -> f64 {
    let (mn, en) = top_mant_exp(num);
    let (md, ed) = top_mant_exp(den);
    let mut m = mn / md;
    let mut e = en - ed;
    if e % 2 != 0 {
        m *= 2.0;
        e -= 1;
    }
    libm::ldexp(m.sqrt(), (e / 2) as i32)
}

/// Binomial coefficient C(n, k), correctly rounded (exact below 2^53).
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    big_to_f64(&acc)
}

/// Physicists' Hermite polynomial H_n(x) by the three-term recurrence
/// H_{n+1} = 2x H_n - 2n H_{n-1}. Errors if the value leaves f64 range.
pub fn hermite_polynomial(n: u32, x: f64) -> Result<f64> {
    let mut prev = 1.0;
    if n == 0 {
        return Ok(prev);
    }
    let mut cur = 2.0 * x;
    for m in 1..n {
        let next = 2.0 * x * cur - 2.0 * (m as f64) * prev;
        prev = cur;
        cur = next;
    }
    if cur.is_finite() {
        Ok(cur)
    } else {
        Err(Error::Overflow(format!("H_{n}({x}) exceeds f64 range")))
    }
}

/// Integer coefficient table of H_n: returns c with
/// H_n(x) = sum_i c[i] x^i, c[i] = 0 for i != n (mod 2).
pub fn hermite_coefficients(n: u32) -> Result<Vec<i128>> {
    let n = n as usize;
    let mut prev = vec![0i128; n + 1];
    let mut cur = vec![0i128; n + 1];
    prev[0] = 1;
    if n == 0 {
        return Ok(prev);
    }
    cur[1] = 2;
    for m in 1..n {
        let mut next = vec![0i128; n + 1];
        for i in 0..=m {
            let c = cur[i];
            if c != 0 {
                let t = next[i + 1]
                    .checked_add(c.checked_mul(2).ok_or_else(coeff_overflow)?)
                    .ok_or_else(coeff_overflow)?;
                next[i + 1] = t;
            }
            let p = prev[i];
            if p != 0 {
                let t = next[i]
                    .checked_sub(p.checked_mul(2 * m as i128).ok_or_else(coeff_overflow)?)
                    .ok_or_else(coeff_overflow)?;
                next[i] = t;
            }
        }
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

fn coeff_overflow() -> Error {
    Error::Overflow("Hermite coefficient exceeds i128".into())
}

/// L^2-normalized Hermite function f_n(x) = (sqrt(pi) 2^n n!)^{-1/2} e^{-x^2/2} H_n(x),
/// evaluated by the scaled recurrence
/// f_{n+1} = x sqrt(2/(n+1)) f_n - sqrt(n/(n+1)) f_{n-1},
/// which stays bounded for all n (no 2^n n! blowup). Underflows to 0 for
/// |x| beyond ~38, far outside the oscillatory region for moderate n.
pub fn hermite_function(n: u32, x: f64) -> f64 {
    let mut seq = HermiteFunctionSeq::new(x);
    let mut val = seq.next_value();
    for _ in 0..n {
        val = seq.next_value();
    }
    val
}

/// Streaming evaluator for f_0(x), f_1(x), ... at fixed x.
pub struct HermiteFunctionSeq {
    x: f64,
    n: u32,
    prev: f64,
    cur: f64,
}

impl HermiteFunctionSeq {
    pub fn new(x: f64) -> Self {
        HermiteFunctionSeq {
            x,
            n: 0,
            prev: 0.0,
            cur: std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp(),
        }
    }

    /// Returns f_n(x) for the next n (starting at n = 0).
    pub fn next_value(&mut self) -> f64 {
        if self.n == 0 {
            self.n = 1;
            return self.cur;
        }
        let m = (self.n - 1) as f64;
        let next = self.x * (2.0 / (m + 1.0)).sqrt() * self.cur
            - (m / (m + 1.0)).sqrt() * self.prev;
        self.prev = self.cur;
        self.cur = next;
        self.n += 1;
        self.cur
    }
}

/// Generalized Laguerre polynomial L_n^{(alpha)}(x) by the three-term
/// recurrence (n+1) L_{n+1} = (2n+1+alpha-x) L_n - (n+alpha) L_{n-1}.
pub fn laguerre(n: u32, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for m in 1..n {
        let mf = m as f64;
        let next = ((2.0 * mf + 1.0 + alpha - x) * cur - (mf + alpha) * prev) / (mf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Expansion coefficient a(s, k, r) = (-1)^{s-r} C(s, r) sqrt(k!) / (k-r)!
/// of the displacement kernel. Requires 0 <= r <= min(k, s).
pub fn disp_coeff(s: u32, k: u32, r: u32) -> Result<f64> {
    if r > k.min(s) {
        return Err(Error::Domain(format!(
            "disp_coeff requires r <= min(k, s); got s={s}, k={k}, r={r}"
        )));
    }
    let sign = if (s - r) % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * binomial(s, r) * factorial(k)?.sqrt() / factorial(k - r)?)
}

/// Matrix element <k| D_z |s> of the displacement D_z = exp(z a* - conj(z) a),
/// via the Laguerre closed form
///   <k|D_z|s> = prod_{j=s+1}^{k} (z / sqrt(j)) e^{-|z|^2/2} L_s^{(k-s)}(|z|^2)   (k >= s),
/// and the adjoint relation for k < s. The factorial ratio and the power of z
/// are interleaved into one product so no intermediate over/underflows when
/// the result is representable.
pub fn displacement_element(k: u32, s: u32, z: Complex64) -> Result<Complex64> {
    let r2 = z.norm_sqr();
    let gauss = (-0.5 * r2).exp();
    let val = if k >= s {
        let mut pref = Complex64::new(gauss, 0.0);
        for j in (s + 1)..=k {
            pref *= z / (j as f64).sqrt();
        }
        pref * laguerre(s, (k - s) as f64, r2)
    } else {
        let mut pref = Complex64::new(gauss, 0.0);
        for j in (k + 1)..=s {
            pref *= -z.conj() / (j as f64).sqrt();
        }
        pref * laguerre(k, (s - k) as f64, r2)
    };
    if val.re.is_finite() && val.im.is_finite() {
        Ok(val)
    } else {
        Err(Error::Overflow(format!(
            "displacement element (k={k}, s={s}, |z|={}) left f64 range",
            z.norm()
        )))
    }
}

/// Truncated ladder matrices on span{|0>, ..., |d-1>}.
pub struct LadderTriple {
    /// <m| a |n>: entries sqrt(n) on the superdiagonal.
    pub lowering: DMatrix<Complex64>,
    /// <m| a* |n>: exact conjugate transpose of `lowering`.
    pub raising: DMatrix<Complex64>,
    /// Number operator diag(0, 1, ..., d-1), built exactly (not as a product).
    pub number: DMatrix<Complex64>,
    pub dim: usize,
}

/// Builds the ladder triple at truncation dimension d >= 1.
pub fn ladder_matrices(d: usize) -> Result<LadderTriple> {
    if d == 0 {
        return Err(Error::Domain("ladder_matrices requires d >= 1".into()));
    }
    let mut lowering = DMatrix::zeros(d, d);
    let mut raising = DMatrix::zeros(d, d);
    let mut number = DMatrix::zeros(d, d);
    for n in 0..d {
        number[(n, n)] = Complex64::new(n as f64, 0.0);
        if n + 1 < d {
            let v = Complex64::new(((n + 1) as f64).sqrt(), 0.0);
            lowering[(n, n + 1)] = v;
            raising[(n + 1, n)] = v;
        }
    }
    Ok(LadderTriple {
        lowering,
        raising,
        number,
        dim: d,
    })
}
