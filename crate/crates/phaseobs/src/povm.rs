//! The phase-space observable generated by a number state |s>: outcome
//! densities, POVM elements over plane regions, closed-form moment-operator
//! matrix elements with the selection rule, polarization reconstruction,
//! exponential bounds, and a seeded rejection sampler.
//!
//! Matrix elements are computed on the dense span of the number basis;
//! domain questions for the unbounded moment operators are out of scope.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::moments::{ClosedFormDensity, MeasureBody, MeasureRep, MomentSequence};
use crate::quadrature::{integrate_region, region_scheme, Kahan, Region, SchemeHint};
use crate::specfun::{binomial, disp_coeff, displacement_element, factorial, ladder_matrices};
use crate::{Error, Result};

/// Coefficient vector in the number basis.
#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    pub coeffs: Vec<Complex64>,
}

impl FockVector {
    pub fn from_coeffs(coeffs: Vec<Complex64>) -> Result<FockVector> {
        if coeffs.is_empty() {
            return Err(Error::Domain("FockVector needs at least one coefficient".into()));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Domain("FockVector coefficients must be finite".into()));
        }
        Ok(FockVector { coeffs })
    }

    /// The number state |s> as a coordinate vector of dimension d > s.
    pub fn number_state(s: u32, d: usize) -> Result<FockVector> {
        if d <= s as usize {
            return Err(Error::Domain(format!(
                "number state |{s}> needs dimension > {s}, got {d}"
            )));
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); d];
        coeffs[s as usize] = Complex64::new(1.0, 0.0);
        Ok(FockVector { coeffs })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs
            .iter()
            .map(Complex64::norm_sqr)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> Result<FockVector> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::Domain("cannot normalize the zero vector".into()));
        }
        Ok(FockVector {
            coeffs: self.coeffs.iter().map(|c| c / n).collect(),
        })
    }

    /// Mean of the number observable, <N>_phi, for a normalized vector.
    pub fn mean_number(&self) -> f64 {
        let n2 = self.coeffs.iter().map(Complex64::norm_sqr).sum::<f64>();
        if n2 == 0.0 {
            return 0.0;
        }
        self.coeffs
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c.norm_sqr())
            .sum::<f64>()
            / n2
    }
}

/// Dense operator on span{|0>, ..., |d-1>}.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedOperator {
    mat: DMatrix<Complex64>,
    hermitian: bool,
}

impl TruncatedOperator {
    pub fn from_matrix(mat: DMatrix<Complex64>, hermitian: bool) -> Result<TruncatedOperator> {
        if mat.nrows() != mat.ncols() || mat.nrows() == 0 {
            return Err(Error::Domain(format!(
                "operator matrix must be square and nonempty, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let op = TruncatedOperator { mat, hermitian };
        if hermitian && !op.is_hermitian(1e-12) {
            return Err(Error::Domain(
                "matrix tagged hermitian deviates from its conjugate transpose beyond 1e-12".into(),
            ));
        }
        Ok(op)
    }

    pub fn identity(d: usize) -> Result<TruncatedOperator> {
        if d == 0 {
            return Err(Error::Domain("operator dimension must be >= 1".into()));
        }
        Ok(TruncatedOperator {
            mat: DMatrix::identity(d, d),
            hermitian: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn entry(&self, k: usize, l: usize) -> Complex64 {
        self.mat[(k, l)]
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn hermitian_flag(&self) -> bool {
        self.hermitian
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let d = self.dim();
        for k in 0..d {
            for l in k..d {
                if (self.mat[(k, l)] - self.mat[(l, k)].conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Smallest eigenvalue; requires the hermitian tag.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        if !self.hermitian {
            return Err(Error::Domain(
                "min_eigenvalue requires a hermitian-tagged operator".into(),
            ));
        }
        let ev = self.mat.symmetric_eigenvalues();
        Ok(ev.iter().fold(f64::INFINITY, |a, &b| a.min(b)))
    }

    /// Largest entrywise deviation from another operator.
    pub fn max_abs_diff(&self, other: &TruncatedOperator) -> f64 {
        let mut m: f64 = 0.0;
        for k in 0..self.dim().min(other.dim()) {
            for l in 0..self.dim().min(other.dim()) {
                m = m.max((self.mat[(k, l)] - other.mat[(k, l)]).norm());
            }
        }
        m
    }

    /// JSON form {dim, re[][], im[][]} (row-major).
    pub fn to_value(&self) -> Value {
        let d = self.dim();
        let re: Vec<Vec<f64>> = (0..d)
            .map(|k| (0..d).map(|l| self.mat[(k, l)].re).collect())
            .collect();
        let im: Vec<Vec<f64>> = (0..d)
            .map(|k| (0..d).map(|l| self.mat[(k, l)].im).collect())
            .collect();
        json!({"dim": d, "re": re, "im": im})
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_value())?)
    }

    pub fn from_value(v: &Value) -> Result<TruncatedOperator> {
        let d = v
            .get("dim")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::InvalidConfig("operator JSON missing 'dim'".into()))?
            as usize;
        let grab = |name: &str| -> Result<Vec<Vec<f64>>> {
            let rows = v
                .get(name)
                .and_then(Value::as_array)
                .ok_or_else(|| Error::InvalidConfig(format!("operator JSON missing '{name}'")))?;
            if rows.len() != d {
                return Err(Error::InvalidConfig(format!(
                    "'{name}' has {} rows, dim is {d}",
                    rows.len()
                )));
            }
            rows.iter()
                .map(|r| {
                    let row = r
                        .as_array()
                        .filter(|a| a.len() == d)
                        .ok_or_else(|| Error::InvalidConfig(format!("ragged '{name}' row")))?;
                    row.iter()
                        .map(|x| {
                            x.as_f64()
                                .ok_or_else(|| Error::InvalidConfig("non-numeric entry".into()))
                        })
                        .collect()
                })
                .collect()
        };
        let re = grab("re")?;
        let im = grab("im")?;
        let mat = DMatrix::from_fn(d, d, |k, l| Complex64::new(re[k][l], im[k][l]));
        let mut op = TruncatedOperator {
            mat,
            hermitian: false,
        };
        op.hermitian = op.is_hermitian(1e-12);
        Ok(op)
    }

    pub fn from_json(s: &str) -> Result<TruncatedOperator> {
        TruncatedOperator::from_value(&serde_json::from_str(s)?)
    }
}

/// Exact powers of the imaginary unit.
pub(crate) fn ipow(t: u32) -> Complex64 {
    match t % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Displacement column <.|D_z|s> truncated to d entries.
fn displacement_column(s: u32, d: usize, z: Complex64) -> Result<Vec<Complex64>> {
    (0..d as u32)
        .map(|k| displacement_element(k, s, z))
        .collect()
}

/// Outcome-density kernel (1/pi) <k|D_z|s> conj(<l|D_z|s>): the integrand of
/// every POVM element.
pub fn pair_density(s: u32, k: u32, l: u32, z: Complex64) -> Result<Complex64> {
    let dk = displacement_element(k, s, z)?;
    let dl = displacement_element(l, s, z)?;
    Ok(dk * dl.conj() / PI)
}

/// The same kernel through the double-sum expansion
/// (1/pi)(1/s!) sum_{r,r'} a(s,k,r) a(s,l,r') e^{-|z|^2}
/// z^{s+k-r-r'} conj(z)^{s+l-r-r'}. Kept as an independent evaluation route
/// for cross-checks; `pair_density` must match it to 1e-10.
pub fn pair_density_expansion(s: u32, k: u32, l: u32, z: Complex64) -> Result<Complex64> {
    let gauss = (-z.norm_sqr()).exp();
    let mut acc = Complex64::new(0.0, 0.0);
    for r in 0..=k.min(s) {
        let ar = disp_coeff(s, k, r)?;
        for rp in 0..=l.min(s) {
            let arp = disp_coeff(s, l, rp)?;
            let zp = z.powu(s + k - r - rp);
            let zq = z.conj().powu(s + l - r - rp);
            acc += ar * arp * zp * zq;
        }
    }
    Ok(acc * gauss / (PI * factorial(s)?))
}

/// Diagonal outcome density (1/pi) |<k|D_z|s>|^2, a probability density on
/// the plane.
pub fn diagonal_density(s: u32, k: u32, z: Complex64) -> Result<f64> {
    let dk = displacement_element(k, s, z)?;
    Ok(dk.norm_sqr() / PI)
}

/// POVM element over a region, entries integral_Z pair_density(s,k,l) dlambda,
/// with quadrature sizes derived from (s, d).
pub fn povm_element(s: u32, region: &Region, d: usize) -> Result<TruncatedOperator> {
    povm_element_with(s, region, d, &default_hint(s, d))
}

/// Quadrature sizes ample for pair densities of degree <= 2(s+d).
pub fn default_hint(s: u32, d: usize) -> SchemeHint {
    SchemeHint {
        n_radial: (d + s as usize + 24).max(64),
        n_angular: (4 * (d + s as usize)).max(64),
    }
}

pub fn povm_element_with(
    s: u32,
    region: &Region,
    d: usize,
    hint: &SchemeHint,
) -> Result<TruncatedOperator> {
    if d == 0 {
        return Err(Error::Domain("povm_element requires d >= 1".into()));
    }
    let scheme = region_scheme(region, hint)?;
    // One displacement column per node serves all d^2 entries.
    let mut acc = vec![(Kahan::default(), Kahan::default()); d * d];
    for (i, (&z, &w)) in scheme.nodes.iter().zip(&scheme.weights).enumerate() {
        let col = displacement_column(s, d, z).map_err(|_| Error::NonFiniteNode {
            index: i,
            re: z.re,
            im: z.im,
        })?;
        for k in 0..d {
            for l in 0..d {
                let v = col[k] * col[l].conj() * (w / PI);
                let cell = &mut acc[k * d + l];
                cell.0.add(v.re);
                cell.1.add(v.im);
            }
        }
    }
    let mut mat = DMatrix::from_fn(d, d, |k, l| {
        Complex64::new(acc[k * d + l].0.sum(), acc[k * d + l].1.sum())
    });
    // Enforce exact hermitian symmetry (accumulation order may differ by ulps).
    for k in 0..d {
        mat[(k, k)] = Complex64::new(mat[(k, k)].re, 0.0);
        for l in (k + 1)..d {
            let v = (mat[(k, l)] + mat[(l, k)].conj()) * 0.5;
            mat[(k, l)] = v;
            mat[(l, k)] = v.conj();
        }
    }
    TruncatedOperator::from_matrix(mat, true)
}

/// Closed-form matrix element <k| A^{|s>}[m,n] |l>. Returns 0 exactly when
/// the selection rule k+m != l+n applies; otherwise evaluates
/// (1/s!) sum_{r<=min(k,s)} sum_{r'<=min(l,s)} a(s,k,r) a(s,l,r') (m+s+k-r-r')!.
/// The alternating double sum cancels catastrophically in f64, so the
/// rational part is accumulated as an exact integer with sqrt(k! l!) split
/// off, keeping every value correctly rounded to a few ulp. The integer sum
/// is symmetric under (m,k) <-> (n,l), so the adjoint identity
/// <k|A[m,n]|l> = conj(<l|A[n,m]|k>) holds bitwise.
pub fn moment_matrix_element(s: u32, m: u32, n: u32, k: u32, l: u32) -> Result<f64> {
    if k + m != l + n {
        return Ok(0.0);
    }
    let top = m + s + k;
    if top > crate::specfun::FACTORIAL_MAX {
        return Err(Error::Overflow(format!(
            "moment element needs ({top})! beyond f64 range (s={s}, m={m}, k={k})"
        )));
    }
    use crate::specfun::{big_binomial, big_factorial, big_falling, sqrt_big_ratio};
    // sum of (-1)^{r+r'} C(s,r) C(s,r') (top-r-r')! k!/(k-r)! l!/(l-r')!,
    // equal to s! sqrt(k! l!) <k|A[m,n]|l>.
    let mut pos = num_bigint::BigUint::from(0u32);
    let mut neg = num_bigint::BigUint::from(0u32);
    for r in 0..=k.min(s) {
        for rp in 0..=l.min(s) {
            let term = big_binomial(s, r)
                * big_binomial(s, rp)
                * big_factorial(top - r - rp)
                * big_falling(k, r)
                * big_falling(l, rp);
            if (r + rp) % 2 == 0 {
                pos += term;
            } else {
                neg += term;
            }
        }
    }
    let (sign, mag) = if pos >= neg {
        (1.0, pos - neg)
    } else {
        (-1.0, neg - pos)
    };
    if mag == num_bigint::BigUint::from(0u32) {
        return Ok(0.0);
    }
    let sfac = big_factorial(s);
    let den = &sfac * &sfac * big_factorial(k) * big_factorial(l);
    let v = sign * sqrt_big_ratio(&(&mag * &mag), &den);
    if !v.is_finite() {
        return Err(Error::Overflow(format!(
            "moment element leaves f64 range at (s={s}, m={m}, n={n}, k={k}, l={l})"
        )));
    }
    Ok(v)
}

/// Moment operator A^{|s>}[m,n] truncated to d dimensions: a single stripe
/// l = k + (m-n).
pub fn moment_operator(s: u32, m: u32, n: u32, d: usize) -> Result<TruncatedOperator> {
    if d == 0 {
        return Err(Error::Domain("moment_operator requires d >= 1".into()));
    }
    let mut mat = DMatrix::zeros(d, d);
    for k in 0..d {
        for l in 0..d {
            let v = moment_matrix_element(s, m, n, k as u32, l as u32)?;
            mat[(k, l)] = Complex64::new(v, 0.0);
        }
    }
    TruncatedOperator::from_matrix(mat, m == n)
}

/// Operator with a truncation-validity mask.
#[derive(Clone, Debug)]
pub struct MaskedOperator {
    pub op: TruncatedOperator,
    /// valid[(k, l)] marks entries free of truncation error.
    pub valid: DMatrix<bool>,
}

/// Normal-ordered ladder product a^m (a*)^n on d dimensions. An entry (k, l)
/// is truncation-exact iff every intermediate level stays below d: (a*)^n
/// lifts |l> to level l+n and a^m needs k+m = l+n, so the mask is
/// l+n <= d-1 (equivalently k+m <= d-1 on the stripe).
pub fn normal_ordered_operator(m: u32, n: u32, d: usize) -> Result<MaskedOperator> {
    if d < (m + n) as usize {
        return Err(Error::Domain(format!(
            "normal_ordered_operator needs d >= m+n = {}, got {d}",
            m + n
        )));
    }
    let ladder = ladder_matrices(d)?;
    let mut mat = DMatrix::identity(d, d);
    for _ in 0..m {
        mat = &mat * &ladder.lowering;
    }
    for _ in 0..n {
        mat = &mat * &ladder.raising;
    }
    let valid = DMatrix::from_fn(d, d, |k, l| {
        l + (n as usize) <= d - 1 && k + (m as usize) <= d - 1
    });
    Ok(MaskedOperator {
        op: TruncatedOperator::from_matrix(mat, m == n)?,
        valid,
    })
}

/// Integer-coefficient polynomial in k (ascending degree).
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalPolynomial {
    pub coeffs: Vec<i64>,
}

impl DiagonalPolynomial {
    pub fn eval(&self, k: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * k + c as f64)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }
}

/// Fits the degree-<=n polynomial through the diagonal moment values
/// <k|A^{|s>}[n,n]|k>, k = 0..n, verifies it on (n, k_max], and snaps the
/// coefficients to integers (they are integers for integer s).
pub fn fit_diagonal_polynomial(s: u32, n: u32, k_max: u32) -> Result<DiagonalPolynomial> {
    if k_max < n + 1 {
        return Err(Error::Domain(format!(
            "fit_diagonal_polynomial needs k_max >= n+1, got n={n}, k_max={k_max}"
        )));
    }
    let pts = (n + 1) as usize;
    let mut vander = DMatrix::zeros(pts, pts);
    let mut rhs = nalgebra::DVector::zeros(pts);
    for k in 0..pts {
        for j in 0..pts {
            vander[(k, j)] = (k as f64).powi(j as i32);
        }
        rhs[k] = moment_matrix_element(s, n, n, k as u32, k as u32)?;
    }
    let coeffs = vander
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Domain("degenerate Vandermonde system".into()))?;
    let mut snapped = Vec::with_capacity(pts);
    for c in coeffs.iter() {
        let r = c.round();
        if (c - r).abs() > 1e-6 * r.abs().max(1.0) {
            return Err(Error::Domain(format!(
                "fitted coefficient {c} is not integral within 1e-6"
            )));
        }
        snapped.push(r as i64);
    }
    let poly = DiagonalPolynomial { coeffs: snapped };
    for k in (n + 1)..=k_max {
        let actual = moment_matrix_element(s, n, n, k, k)?;
        let predicted = poly.eval(k as f64);
        if (predicted - actual).abs() > 1e-6 * actual.abs().max(1.0) {
            return Err(Error::PolynomialMismatch {
                k: k as usize,
                predicted,
                actual,
            });
        }
    }
    Ok(poly)
}

/// Exponential moment integral e^{a|z|} dA^{|s>}_{|k>,|k>} via the
/// completed-square radial integrals: each term reduces to
/// 2 e^{c^2} J_{2p+1}(c) with c = a/2, p = s+k-r-r', and
/// J_q(c) = integral_0^inf t^q e^{-(t-c)^2} dt satisfies
/// J_0 = (sqrt(pi)/2)(1+erf c), J_1 = c J_0 + e^{-c^2}/2,
/// J_q = c J_{q-1} + ((q-1)/2) J_{q-2}. Always finite.
pub fn exp_bound_closed_form(s: u32, k: u32, a: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(Error::Domain(format!("exp_bound_closed_form requires a >= 0, got {a}")));
    }
    if a == 0.0 {
        // Total mass of a probability measure.
        return Ok(1.0);
    }
    let c = 0.5 * a;
    let qmax = (2 * (s + k) + 1) as usize;
    let mut j = vec![0.0_f64; qmax + 1];
    j[0] = 0.5 * PI.sqrt() * (1.0 + libm::erf(c));
    if qmax >= 1 {
        j[1] = c * j[0] + 0.5 * (-c * c).exp();
    }
    for q in 2..=qmax {
        j[q] = c * j[q - 1] + 0.5 * (q as f64 - 1.0) * j[q - 2];
    }
    let scale = (c * c).exp();
    let mut acc = 0.0;
    for r in 0..=k.min(s) {
        let ar = disp_coeff(s, k, r)?;
        for rp in 0..=k.min(s) {
            let arp = disp_coeff(s, k, rp)?;
            let p = (s + k - r - rp) as usize;
            acc += ar * arp * 2.0 * scale * j[2 * p + 1];
        }
    }
    let v = acc / factorial(s)?;
    if !v.is_finite() {
        return Err(Error::Overflow(format!(
            "exponential bound left f64 range at (s={s}, k={k}, a={a})"
        )));
    }
    Ok(v)
}

/// Measure of a region under a plane measure rep: filtered sums for atomic
/// and grid bodies, quadrature for closed forms.
pub fn mass_in_region(mu: &MeasureRep, region: &Region, hint: &SchemeHint) -> Result<f64> {
    if mu.dim != 2 {
        return Err(Error::Domain(
            "mass_in_region needs a plane (dim 2) measure".into(),
        ));
    }
    region.validate()?;
    match &mu.body {
        MeasureBody::Atomic { atoms } => Ok(atoms
            .iter()
            .filter(|(p, _)| region.contains(Complex64::new(p[0], p[1])))
            .map(|(_, w)| w)
            .sum()),
        MeasureBody::Grid2 {
            x0,
            y0,
            dx,
            dy,
            rows,
            cols,
            values,
            ..
        } => {
            let cell = dx * dy;
            let mut acc = Kahan::default();
            for i in 0..*rows {
                for j in 0..*cols {
                    let z = Complex64::new(x0 + i as f64 * dx, y0 + j as f64 * dy);
                    if region.contains(z) {
                        acc.add(values[i * cols + j] * cell);
                    }
                }
            }
            Ok(acc.sum())
        }
        MeasureBody::ClosedForm(cf) => {
            let v = integrate_region(
                |z| Complex64::new(cf.eval(&[z.re, z.im]), 0.0),
                region,
                hint,
            )?;
            Ok(v.re)
        }
        MeasureBody::Grid1 { .. } => unreachable!("dim 2 checked above"),
    }
}

/// Polarization reconstruction of the sesquilinear region function from its
/// diagonal: Z -> (1/4) sum_{r=0}^{3} i^r diag(phi + i^r psi)(Z). With diag
/// built from the observable, this recovers integral_Z of the (psi, phi)
/// pair density.
pub fn polarization_reconstruct<'a, F>(
    diag: F,
    psi: &'a FockVector,
    phi: &'a FockVector,
) -> impl Fn(&Region) -> Result<Complex64> + 'a
where
    F: Fn(&FockVector) -> Result<MeasureRep> + 'a,
{
    let hint = SchemeHint::default();
    move |region: &Region| {
        let d = psi.dim().max(phi.dim());
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..4u32 {
            let w = ipow(r);
            let mut coeffs = vec![Complex64::new(0.0, 0.0); d];
            for (i, c) in phi.coeffs.iter().enumerate() {
                coeffs[i] += c;
            }
            for (i, c) in psi.coeffs.iter().enumerate() {
                coeffs[i] += w * c;
            }
            let combo = FockVector { coeffs };
            let mu = diag(&combo)?;
            acc += w * mass_in_region(&mu, region, &hint)?;
        }
        Ok(acc / 4.0)
    }
}

// ---------------------------------------------------------------------------
// Closed-form density families.

/// Diagonal outcome density of the observable: (1/pi)|<k|D_z|s>|^2.
struct DiagonalFamily {
    s: u32,
    k: u32,
}

impl ClosedFormDensity for DiagonalFamily {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64]) -> f64 {
        diagonal_density(self.s, self.k, Complex64::new(x[0], x[1])).unwrap_or(f64::NAN)
    }

    fn moment(&self, idx: &[usize]) -> Result<f64> {
        real_moment_from_complex(
            |m, n| {
                Ok(Complex64::new(
                    moment_matrix_element(self.s, m, n, self.k, self.k)?,
                    0.0,
                ))
            },
            idx[0] as u32,
            idx[1] as u32,
        )
    }

    fn exp_bound(&self, a: f64) -> Result<f64> {
        exp_bound_closed_form(self.s, self.k, a)
    }

    fn describe(&self) -> Value {
        json!({"family": "diagonal_density", "s": self.s, "k": self.k})
    }
}

/// Outcome density of the observable in a pure state phi:
/// (1/pi)|<phi|D_z|s>|^2 (phi need not be normalized; the polarization
/// identity feeds unnormalized combinations).
struct StateFamily {
    s: u32,
    coeffs: Vec<Complex64>,
}

impl StateFamily {
    fn amplitude(&self, z: Complex64) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, c) in self.coeffs.iter().enumerate() {
            acc += c.conj() * displacement_element(k as u32, self.s, z)?;
        }
        Ok(acc)
    }
}

impl ClosedFormDensity for StateFamily {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match self.amplitude(Complex64::new(x[0], x[1])) {
            Ok(a) => a.norm_sqr() / PI,
            Err(_) => f64::NAN,
        }
    }

    fn moment(&self, idx: &[usize]) -> Result<f64> {
        real_moment_from_complex(
            |m, n| state_complex_moment(self.s, &self.coeffs, m, n),
            idx[0] as u32,
            idx[1] as u32,
        )
    }

    fn exp_bound(&self, a: f64) -> Result<f64> {
        // Angular modes e^{i(k-l)theta} kill every cross term exactly.
        let mut acc = 0.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            let w = c.norm_sqr();
            if w > 0.0 {
                acc += w * exp_bound_closed_form(self.s, k as u32, a)?;
            }
        }
        Ok(acc)
    }

    fn describe(&self) -> Value {
        json!({
            "family": "state_density",
            "s": self.s,
            "re": self.coeffs.iter().map(|c| c.re).collect::<Vec<_>>(),
            "im": self.coeffs.iter().map(|c| c.im).collect::<Vec<_>>(),
        })
    }
}

/// Diagonal density of the observable as a closed-form plane measure.
pub fn diagonal_measure(s: u32, k: u32) -> MeasureRep {
    MeasureRep::closed_form(Arc::new(DiagonalFamily { s, k }))
}

/// Outcome measure of the observable in state phi as a closed-form plane
/// measure.
pub fn state_measure(s: u32, phi: &FockVector) -> MeasureRep {
    MeasureRep::closed_form(Arc::new(StateFamily {
        s,
        coeffs: phi.coeffs.clone(),
    }))
}

/// Complex moment <phi| A^{|s>}[m,n] |phi> = sum conj(c_k) c_l <k|A[m,n]|l>.
pub fn state_complex_moment(
    s: u32,
    coeffs: &[Complex64],
    m: u32,
    n: u32,
) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, ck) in coeffs.iter().enumerate() {
        for (l, cl) in coeffs.iter().enumerate() {
            if ck.norm_sqr() == 0.0 || cl.norm_sqr() == 0.0 {
                continue;
            }
            let v = moment_matrix_element(s, m, n, k as u32, l as u32)?;
            if v != 0.0 {
                acc += ck.conj() * cl * v;
            }
        }
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Complex <-> real moment bridge (the one-to-one correspondence of complex
// and two-dimensional moment sequences).

/// c^{complex}_{m,n} = integral z^m conj(z)^n dmu from the real sequence:
/// expand (x+iy)^m (x-iy)^n binomially.
pub fn complex_moment_from_real(c: &MomentSequence, m: u32, n: u32) -> Result<Complex64> {
    if c.dim() != 2 {
        return Err(Error::Domain(
            "complex moments need a two-dimensional sequence".into(),
        ));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..=m {
        for jj in 0..=n {
            let xpow = (i + jj) as usize;
            let ypow = ((m - i) + (n - jj)) as usize;
            let entry = c.get(&[xpow, ypow]).ok_or_else(|| Error::Domain(format!(
                "sequence is missing entry ({xpow}, {ypow}) for complex moment ({m}, {n})"
            )))?;
            let w = binomial(m, i) * binomial(n, jj);
            acc += ipow(m - i) * ipow(n - jj).conj() * w * entry;
        }
    }
    Ok(acc)
}

/// Real moment c_{(j1,j2)} from complex moments: expand
/// x^{j1} y^{j2} = ((z+conj z)/2)^{j1} ((z-conj z)/(2i))^{j2}.
pub fn real_moment_from_complex(
    f: impl Fn(u32, u32) -> Result<Complex64>,
    j1: u32,
    j2: u32,
) -> Result<f64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..=j1 {
        for q in 0..=j2 {
            let sign = if (j2 - q) % 2 == 0 { 1.0 } else { -1.0 };
            let w = binomial(j1, p) * binomial(j2, q) * sign;
            acc += f(p + q, j1 + j2 - p - q)? * w;
        }
    }
    // 1/(2^{j1} (2i)^{j2})
    let scale = ipow(j2).conj() / 2f64.powi((j1 + j2) as i32);
    Ok((acc * scale).re)
}

// ---------------------------------------------------------------------------
// Sampling.

/// Draws i.i.d. outcomes of the observable measured in state phi by rejection
/// sampling against a centered Gaussian proposal with variance
/// sigma^2 = s + <N>_phi + 2 per coordinate pair; the envelope constant comes
/// from a coarse grid maximization of the density/proposal ratio with a 1.5x
/// safety factor. Deterministic for a fixed seed.
pub fn sample_outcomes(
    s: u32,
    phi: &FockVector,
    count: usize,
    seed: u64,
) -> Result<Vec<Complex64>> {
    if count == 0 {
        return Err(Error::Domain("sample_outcomes requires count >= 1".into()));
    }
    if !phi.is_normalized(1e-10) {
        return Err(Error::Domain(format!(
            "sample_outcomes requires a normalized state, got norm {}",
            phi.norm()
        )));
    }
    let family = StateFamily {
        s,
        coeffs: phi.coeffs.clone(),
    };
    let sigma2 = s as f64 + phi.mean_number() + 2.0;
    let proposal = move |z: Complex64| (-z.norm_sqr() / (2.0 * sigma2)).exp() / (2.0 * PI * sigma2);

    // Coarse grid maximization of p/q.
    let r_max = 2.0 * ((s as usize + phi.dim()) as f64).sqrt() + 6.0 * sigma2.sqrt();
    let mut ratio_max = 0.0_f64;
    let radial_steps = 160;
    let angular_steps = 48;
    for i in 0..=radial_steps {
        let r = r_max * i as f64 / radial_steps as f64;
        for j in 0..angular_steps {
            let theta = 2.0 * PI * j as f64 / angular_steps as f64;
            let z = Complex64::from_polar(r, theta);
            let p = family.eval(&[z.re, z.im]);
            if p.is_finite() {
                ratio_max = ratio_max.max(p / proposal(z));
            }
        }
    }
    if ratio_max <= 0.0 || !ratio_max.is_finite() {
        return Err(Error::Domain(
            "degenerate density; envelope maximization failed".into(),
        ));
    }
    let envelope = 1.5 * ratio_max;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sigma = sigma2.sqrt();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        // Box-Muller keeps the stream stable across RNG library versions.
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        let r = sigma * (-2.0 * u1.ln()).sqrt();
        let z = Complex64::new(r * (2.0 * PI * u2).cos(), r * (2.0 * PI * u2).sin());
        let p = family.eval(&[z.re, z.im]);
        if !p.is_finite() {
            return Err(Error::NonFiniteNode {
                index: out.len(),
                re: z.re,
                im: z.im,
            });
        }
        let bound = envelope * proposal(z);
        if p > bound * (1.0 + 1e-9) {
            return Err(Error::EnvelopeViolation {
                ratio: p / proposal(z),
                bound: envelope,
                re: z.re,
                im: z.im,
            });
        }
        let u: f64 = rng.random::<f64>();
        if u * bound <= p {
            out.push(z);
        }
    }
    Ok(out)
}

/// Rebuilds a measure from JSON, resolving the closed-form families defined
/// here ("diagonal_density", "state_density").
pub fn measure_from_json(text: &str) -> Result<MeasureRep> {
    let value: Value = serde_json::from_str(text)?;
    measure_from_value(&value)
}

pub fn measure_from_value(value: &Value) -> Result<MeasureRep> {
    crate::moments::measure_from_value_with(value, |payload| {
        let family = payload
            .get("family")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::InvalidConfig("closed_form payload missing 'family'".into()))?;
        match family {
            "diagonal_density" => {
                let s = u32_field(payload, "s")?;
                let k = u32_field(payload, "k")?;
                Ok(Arc::new(DiagonalFamily { s, k }) as Arc<dyn ClosedFormDensity>)
            }
            "state_density" => {
                let s = u32_field(payload, "s")?;
                let re = f64_list(payload, "re")?;
                let im = f64_list(payload, "im")?;
                if re.len() != im.len() || re.is_empty() {
                    return Err(Error::InvalidConfig(
                        "state_density needs matching nonempty 're'/'im'".into(),
                    ));
                }
                let coeffs = re
                    .iter()
                    .zip(&im)
                    .map(|(&a, &b)| Complex64::new(a, b))
                    .collect();
                Ok(Arc::new(StateFamily { s, coeffs }) as Arc<dyn ClosedFormDensity>)
            }
            other => Err(Error::InvalidConfig(format!(
                "unknown closed-form family '{other}'"
            ))),
        }
    })
}

fn u32_field(v: &Value, name: &str) -> Result<u32> {
    v.get(name)
        .and_then(Value::as_u64)
        .map(|x| x as u32)
        .ok_or_else(|| Error::InvalidConfig(format!("payload missing integer '{name}'")))
}

fn f64_list(v: &Value, name: &str) -> Result<Vec<f64>> {
    v.get(name)
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InvalidConfig(format!("payload missing list '{name}'")))?
        .iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| Error::InvalidConfig(format!("non-numeric entry in '{name}'")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{self, ExpBound};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn pair_density_examples() {
        let v = pair_density(0, 0, 0, Complex64::new(0.0, 0.0)).unwrap();
        assert_relative_eq!(v.re, 1.0 / PI, max_relative = 1e-15);
        assert_eq!(v.im, 0.0);
        // z = 0: D_0 = I, so the kernel is delta_{ks} delta_{ls} / pi.
        for s in 0..4u32 {
            for k in 0..4u32 {
                for l in 0..4u32 {
                    let v = pair_density(s, k, l, Complex64::new(0.0, 0.0)).unwrap();
                    let expect = if k == s && l == s { 1.0 / PI } else { 0.0 };
                    assert_abs_diff_eq!(v.re, expect, epsilon = 1e-15);
                    assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
                }
            }
        }
        // (1,0,0) at |z| = 1: e^{-1}/pi.
        let z = Complex64::from_polar(1.0, 0.7);
        let v = pair_density(1, 0, 0, z).unwrap();
        assert_relative_eq!(v.re, (-1.0f64).exp() / PI, max_relative = 1e-12);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn pair_density_matches_expansion() {
        let zs = [
            Complex64::new(0.3, -0.8),
            Complex64::new(-1.2, 0.4),
            Complex64::new(2.0, 1.5),
        ];
        for s in 0..=4u32 {
            for k in 0..=5u32 {
                for l in 0..=5u32 {
                    for &z in &zs {
                        let a = pair_density(s, k, l, z).unwrap();
                        let b = pair_density_expansion(s, k, l, z).unwrap();
                        assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn pair_density_hermitian_in_kl() {
        let z = Complex64::new(0.9, -1.1);
        for s in 0..3u32 {
            for k in 0..5u32 {
                for l in 0..5u32 {
                    let a = pair_density(s, k, l, z).unwrap();
                    let b = pair_density(s, l, k, z).unwrap().conj();
                    assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn diagonal_density_properties() {
        // (0,0): (1/pi) e^{-|z|^2}.
        for &r in &[0.0, 0.7, 2.2] {
            let z = Complex64::from_polar(r, 1.1);
            let v = diagonal_density(0, 0, z).unwrap();
            assert_relative_eq!(v, (-r * r).exp() / PI, max_relative = 1e-13);
        }
        // Rotation invariance.
        for &theta in &[0.0, 1.0, 2.5, 4.4] {
            let v = diagonal_density(1, 1, Complex64::from_polar(1.3, theta)).unwrap();
            let v0 = diagonal_density(1, 1, Complex64::new(1.3, 0.0)).unwrap();
            assert_relative_eq!(v, v0, max_relative = 1e-12);
        }
        // Nonnegative and consistent with the pair kernel.
        for s in 0..3u32 {
            for k in 0..4u32 {
                let z = Complex64::new(0.4, -1.7);
                let d = diagonal_density(s, k, z).unwrap();
                assert!(d >= 0.0);
                let p = pair_density(s, k, k, z).unwrap();
                assert_abs_diff_eq!(d, p.re, epsilon = 1e-12);
                assert_abs_diff_eq!(p.im, 0.0, epsilon = 1e-15);
            }
        }
        // Probability normalization over the plane.
        let mu = diagonal_measure(2, 3);
        assert_relative_eq!(moments::total_mass(&mu).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn selection_rule_exact_zero() {
        for s in 0..=6u32 {
            for m in 0..=4u32 {
                for n in 0..=4u32 {
                    for k in 0..=8u32 {
                        for l in 0..=8u32 {
                            if k + m != l + n {
                                assert_eq!(
                                    moment_matrix_element(s, m, n, k, l).unwrap(),
                                    0.0,
                                    "selection rule broken at ({s},{m},{n},{k},{l})"
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn moment_element_examples() {
        assert_eq!(moment_matrix_element(0, 1, 1, 0, 0).unwrap(), 1.0);
        assert_eq!(moment_matrix_element(1, 1, 1, 1, 1).unwrap(), 3.0);
        assert_eq!(moment_matrix_element(3, 1, 0, 0, 2).unwrap(), 0.0);
        // Diagonal of A[1,1] is k+s+1.
        for s in 0..=8u32 {
            for k in 0..=20u32 {
                assert_relative_eq!(
                    moment_matrix_element(s, 1, 1, k, k).unwrap(),
                    (k + s + 1) as f64,
                    max_relative = 1e-12
                );
            }
        }
        // Factorial overflow guard errors rather than saturating.
        assert!(matches!(
            moment_matrix_element(100, 50, 50, 30, 30),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn moment_element_mass_sum_consistency() {
        // m = n = 0 is the total mass: exactly 1 on the diagonal, and the
        // raw f64 double sum (which loses digits to cancellation) must agree
        // with the exact-integer evaluation.
        for s in 0..=5u32 {
            for k in 0..=8u32 {
                assert_eq!(moment_matrix_element(s, 0, 0, k, k).unwrap(), 1.0);
                let mut acc = 0.0;
                for r in 0..=k.min(s) {
                    for rp in 0..=k.min(s) {
                        acc += disp_coeff(s, k, r).unwrap()
                            * disp_coeff(s, k, rp).unwrap()
                            * factorial(s + k - r - rp).unwrap();
                    }
                }
                acc /= factorial(s).unwrap();
                assert_relative_eq!(acc, 1.0, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn moment_operator_structure() {
        // A[0,0] is the identity exactly.
        let op = moment_operator(3, 0, 0, 6).unwrap();
        assert_eq!(op, TruncatedOperator::identity(6).unwrap());
        // Single stripe l = k + (m-n).
        let op = moment_operator(2, 3, 1, 9).unwrap();
        for k in 0..9usize {
            for l in 0..9usize {
                let v = op.entry(k, l);
                if l != k + 2 {
                    assert_eq!(v, Complex64::new(0.0, 0.0));
                } else {
                    assert!(v.re != 0.0);
                }
            }
        }
        assert!(!op.hermitian_flag());
        assert!(moment_operator(2, 1, 1, 9).unwrap().hermitian_flag());
    }

    #[test]
    fn adjoint_symmetry_bitwise() {
        for s in 0..=3u32 {
            for m in 0..=3u32 {
                for n in 0..=3u32 {
                    let a = moment_operator(s, m, n, 10).unwrap();
                    let b = moment_operator(s, n, m, 10).unwrap();
                    for k in 0..10usize {
                        for l in 0..10usize {
                            assert_eq!(
                                a.entry(k, l),
                                b.entry(l, k).conj(),
                                "adjoint symmetry broken at (s={s},m={m},n={n},k={k},l={l})"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn normal_ordered_examples() {
        let d = 8;
        // (1,1): diagonal k+1 on masked entries.
        let mo = normal_ordered_operator(1, 1, d).unwrap();
        for k in 0..d {
            if mo.valid[(k, k)] {
                assert_relative_eq!(mo.op.entry(k, k).re, (k + 1) as f64, max_relative = 1e-14);
            }
        }
        assert!(mo.valid[(d - 2, d - 2)]);
        assert!(!mo.valid[(d - 1, d - 1)]);
        // (0,0): identity, fully valid.
        let id = normal_ordered_operator(0, 0, d).unwrap();
        assert_eq!(id.op, TruncatedOperator::identity(d).unwrap());
        assert!(id.valid.iter().all(|&v| v));
        // (2,0): entries (k, k+2) = sqrt((k+1)(k+2)).
        let sq = normal_ordered_operator(2, 0, d).unwrap();
        for k in 0..d - 2 {
            let expect = (((k + 1) * (k + 2)) as f64).sqrt();
            assert_relative_eq!(sq.op.entry(k, k + 2).re, expect, max_relative = 1e-14);
        }
        assert!(matches!(
            normal_ordered_operator(3, 2, 4),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn normal_ordered_matches_vacuum_moments() {
        // The s=0 moment operator equals a^m (a*)^n on the validity mask.
        let d = 16;
        for m in 0..=3u32 {
            for n in 0..=3u32 {
                let closed = moment_operator(0, m, n, d).unwrap();
                let ordered = normal_ordered_operator(m, n, d).unwrap();
                for k in 0..d {
                    for l in 0..d {
                        if ordered.valid[(k, l)] {
                            let a = closed.entry(k, l);
                            let b = ordered.op.entry(k, l);
                            assert_abs_diff_eq!(
                                (a - b).norm(),
                                0.0,
                                epsilon = 1e-9 * b.norm().max(1.0)
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn fit_diagonal_examples() {
        assert_eq!(
            fit_diagonal_polynomial(0, 1, 10).unwrap().coeffs,
            vec![1, 1]
        );
        assert_eq!(
            fit_diagonal_polynomial(1, 1, 10).unwrap().coeffs,
            vec![2, 1]
        );
        assert_eq!(fit_diagonal_polynomial(4, 0, 6).unwrap().coeffs, vec![1]);
        // s=1, n=2 computed by hand from the closed sum: k^2 + 7k + 6.
        assert_eq!(
            fit_diagonal_polynomial(1, 2, 12).unwrap().coeffs,
            vec![6, 7, 1]
        );
        assert!(matches!(
            fit_diagonal_polynomial(0, 3, 3),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn exp_bound_values() {
        // a = 0: exact mass.
        for s in 0..=6u32 {
            for k in 0..=6u32 {
                assert_eq!(exp_bound_closed_form(s, k, 0.0).unwrap(), 1.0);
            }
        }
        // Monotone in a.
        let v1 = exp_bound_closed_form(1, 1, 1.0).unwrap();
        let v2 = exp_bound_closed_form(1, 1, 2.0).unwrap();
        assert!(v2 > v1 && v1 > 1.0);
        assert!(matches!(
            exp_bound_closed_form(0, 0, -0.5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn exp_bound_against_panel_quadrature() {
        // Oracle: radial panels of integral 2 r^{2p+1} e^{ar - r^2} assembled
        // with the same coefficient double sum.
        for (s, k, a) in [(0u32, 0u32, 1.0), (1, 1, 0.5), (2, 1, 2.0), (3, 4, 1.0)] {
            let closed = exp_bound_closed_form(s, k, a).unwrap();
            let rule = crate::quadrature::legendre_panels(0.0, 12.0 + a, 40, 24).unwrap();
            let quad = rule.integrate(|r| {
                let dens = diagonal_density(s, k, Complex64::new(r, 0.0)).unwrap();
                (a * r).exp() * dens * 2.0 * PI * r
            });
            assert_relative_eq!(closed, quad, max_relative = 1e-9);
        }
    }

    #[test]
    fn povm_full_plane_is_identity() {
        for s in 0..=2u32 {
            let op = povm_element(s, &Region::FullPlane, 8).unwrap();
            let diff = op.max_abs_diff(&TruncatedOperator::identity(8).unwrap());
            assert!(diff < 1e-9, "s={s}: deviation {diff}");
        }
    }

    #[test]
    fn povm_disk_entries() {
        let region = Region::disk(0.0, 0.0, 1.0).unwrap();
        let op = povm_element(0, &region, 6).unwrap();
        // (0,0): 1 - e^{-1}.
        assert_abs_diff_eq!(
            op.entry(0, 0).re,
            1.0 - (-1.0f64).exp(),
            epsilon = 1e-8
        );
        // (0,1): angular mode integrates to zero over the symmetric disk.
        assert!(op.entry(0, 1).norm() < 1e-10);
        // Hermitian and PSD.
        assert!(op.is_hermitian(1e-14));
        assert!(op.min_eigenvalue().unwrap() >= -1e-10);
    }

    #[test]
    fn state_family_moments_match_elements() {
        // <phi|A[1,1]|phi> for phi = (|0> + |1>)/sqrt(2), s = 0:
        // average of diagonal entries 1 and 2 (selection kills cross terms).
        let phi = FockVector::from_coeffs(vec![
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ])
        .unwrap();
        let v = state_complex_moment(0, &phi.coeffs, 1, 1).unwrap();
        assert_relative_eq!(v.re, 1.5, max_relative = 1e-12);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);

        // Real second moments of the s=0, k=0 family: x^2 -> 1/2.
        let mu = diagonal_measure(0, 0);
        assert_relative_eq!(
            moments::moment(&mu, &[2, 0]).unwrap(),
            0.5,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            moments::moment(&mu, &[0, 2]).unwrap(),
            0.5,
            max_relative = 1e-12
        );
        assert_abs_diff_eq!(moments::moment(&mu, &[1, 1]).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn bridge_roundtrip() {
        // Atomic plane measure: real sequence -> complex moments -> real.
        let mu = MeasureRep::atomic(
            2,
            vec![(vec![0.5, -1.0], 1.0), (vec![-2.0, 0.25], 0.5)],
        )
        .unwrap();
        let seq = MomentSequence::from_measure(&mu, 8).unwrap();
        for m in 0..=3u32 {
            for n in 0..=3u32 {
                let cm = complex_moment_from_real(&seq, m, n).unwrap();
                // Direct evaluation.
                let direct: Complex64 = [(0.5, -1.0, 1.0), (-2.0, 0.25, 0.5)]
                    .iter()
                    .map(|&(x, y, w)| {
                        let z = Complex64::new(x, y);
                        z.powu(m) * z.conj().powu(n) * w
                    })
                    .sum();
                assert_abs_diff_eq!((cm - direct).norm(), 0.0, epsilon = 1e-12);
            }
        }
        for j1 in 0..=3u32 {
            for j2 in 0..=3u32 {
                let back = real_moment_from_complex(
                    |m, n| complex_moment_from_real(&seq, m, n),
                    j1,
                    j2,
                )
                .unwrap();
                let direct = moments::moment(&mu, &[j1 as usize, j2 as usize]).unwrap();
                assert_abs_diff_eq!(back, direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn determinacy_of_closed_forms() {
        for (s, k) in [(0u32, 0u32), (2, 3), (5, 8)] {
            let mu = diagonal_measure(s, k);
            let rep = moments::determinacy_report(&mu).unwrap();
            assert!(rep.determinate, "family ({s},{k}) must pass");
            assert_eq!(rep.per_axis[0].witness, Some(1.0));
        }
    }

    #[test]
    fn equal_density_families_match() {
        // (s=1,k=0) and (s=0,k=1) give the same density (1/pi)e^{-|z|^2}|z|^2.
        let a = diagonal_measure(1, 0);
        let b = diagonal_measure(0, 1);
        assert!(moments::moment_match(&a, &b, 8, 1e-10).unwrap());
        match moments::exp_bound_integral(&a, 1.0).unwrap() {
            ExpBound::Finite(va) => match moments::exp_bound_integral(&b, 1.0).unwrap() {
                ExpBound::Finite(vb) => assert_relative_eq!(va, vb, max_relative = 1e-12),
                _ => panic!(),
            },
            _ => panic!(),
        }
    }

    #[test]
    fn polarization_examples() {
        let s = 0u32;
        let diag = |v: &FockVector| -> Result<MeasureRep> { Ok(state_measure(s, v)) };
        let psi = FockVector::number_state(0, 2).unwrap();
        let phi = FockVector::number_state(1, 2).unwrap();
        let region = Region::disk(0.0, 0.0, 2.0).unwrap();

        // psi = phi reproduces the diagonal.
        let same = polarization_reconstruct(diag, &phi, &phi);
        let direct = mass_in_region(&state_measure(s, &phi), &region, &SchemeHint::default())
            .unwrap();
        let got = same(&region).unwrap();
        assert_abs_diff_eq!(got.re, direct, epsilon = 1e-10);
        assert_abs_diff_eq!(got.im, 0.0, epsilon = 1e-10);

        // Zero diagonal reconstructs zero.
        let zero_diag = |_: &FockVector| -> Result<MeasureRep> {
            MeasureRep::atomic(2, vec![(vec![0.0, 0.0], 1e-300)])
        };
        let z = polarization_reconstruct(zero_diag, &psi, &phi)(&region).unwrap();
        assert_abs_diff_eq!(z.norm(), 0.0, epsilon = 1e-12);

        // Off-diagonal matches the pair-density integral.
        let rec = polarization_reconstruct(diag, &psi, &phi);
        let got = rec(&region).unwrap();
        let oracle = integrate_region(
            |z| pair_density(s, 0, 1, z).unwrap_or(Complex64::new(f64::NAN, 0.0)),
            &region,
            &SchemeHint::default(),
        )
        .unwrap();
        assert_abs_diff_eq!((got - oracle).norm(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn sampler_deterministic_and_calibrated() {
        let phi = FockVector::number_state(0, 1).unwrap();
        let a = sample_outcomes(0, &phi, 2000, 42).unwrap();
        let b = sample_outcomes(0, &phi, 2000, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_outcomes(0, &phi, 2000, 43).unwrap();
        assert_ne!(a, c);
        // <|z|^2> = 1 for (s, phi) = (0, |0>); 2000 samples, sigma ~ 1.
        let mean: f64 = a.iter().map(Complex64::norm_sqr).sum::<f64>() / a.len() as f64;
        assert!((mean - 1.0).abs() < 0.12, "mean {mean}");
        assert!(matches!(
            sample_outcomes(0, &phi, 0, 1),
            Err(Error::Domain(_))
        ));
        let unnorm = FockVector::from_coeffs(vec![Complex64::new(0.5, 0.0)]).unwrap();
        assert!(matches!(
            sample_outcomes(0, &unnorm, 10, 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn operator_json_roundtrip() {
        let op = moment_operator(1, 2, 1, 5).unwrap();
        let text = op.to_json().unwrap();
        let back = TruncatedOperator::from_json(&text).unwrap();
        assert_eq!(op.matrix(), back.matrix());
        let herm = povm_element(0, &Region::disk(0.0, 0.0, 1.0).unwrap(), 4).unwrap();
        let back = TruncatedOperator::from_json(&herm.to_json().unwrap()).unwrap();
        assert!(back.hermitian_flag());
    }

    #[test]
    fn measure_json_roundtrip_closed_forms() {
        let mu = diagonal_measure(2, 1);
        let text = crate::moments::measure_to_json(&mu).unwrap();
        let back = measure_from_json(&text).unwrap();
        for idx in crate::moments::multi_indices(2, 4) {
            assert_relative_eq!(
                moments::moment(&back, &idx).unwrap(),
                moments::moment(&mu, &idx).unwrap(),
                max_relative = 1e-13
            );
        }

        let phi = FockVector::from_coeffs(vec![
            Complex64::new(0.6, 0.0),
            Complex64::new(0.0, 0.8),
        ])
        .unwrap();
        let mu = state_measure(1, &phi);
        let text = crate::moments::measure_to_json(&mu).unwrap();
        let back = measure_from_json(&text).unwrap();
        assert_relative_eq!(
            moments::total_mass(&back).unwrap(),
            moments::total_mass(&mu).unwrap(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn fock_vector_basics() {
        let v = FockVector::number_state(2, 4).unwrap();
        assert_eq!(v.dim(), 4);
        assert!(v.is_normalized(1e-15));
        assert_eq!(v.mean_number(), 2.0);
        assert!(FockVector::number_state(4, 4).is_err());
        assert!(FockVector::from_coeffs(vec![]).is_err());
        let w = FockVector::from_coeffs(vec![Complex64::new(3.0, 0.0), Complex64::new(0.0, 4.0)])
            .unwrap();
        assert_relative_eq!(w.norm(), 5.0, max_relative = 1e-15);
        let wn = w.normalized().unwrap();
        assert!(wn.is_normalized(1e-15));
        assert_relative_eq!(wn.mean_number(), 0.64, max_relative = 1e-15);
    }
}
