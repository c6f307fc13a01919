//! Marginal measures of the phase-space observable: unsharp position and
//! momentum along Cartesian axes (coordinate convention z = (q+ip)/sqrt(2)),
//! radial and angular margins in polar form, and the Gaussian envelope bound
//! for compactly supported states.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::povm::{self, FockVector};
use crate::quadrature::{gauss_hermite, gauss_laguerre, legendre_panels, Region};
use crate::specfun::{factorial, hermite_coefficients, hermite_function, HermiteFunctionSeq};
use crate::{Error, Result};

/// Wavefunction in either the number basis or sampled on a uniform grid.
#[derive(Clone, Debug)]
pub enum WavefunctionBasis {
    Fock(FockVector),
    Grid {
        x0: f64,
        dx: f64,
        values: Vec<Complex64>,
    },
}

#[derive(Clone, Debug)]
pub struct WavefunctionRep {
    pub basis: WavefunctionBasis,
    pub normalized: bool,
}

impl WavefunctionRep {
    pub fn fock(v: FockVector) -> Result<WavefunctionRep> {
        if !v.is_normalized(1e-10) {
            return Err(Error::Domain(format!(
                "fock wavefunction must be normalized, got norm {}",
                v.norm()
            )));
        }
        Ok(WavefunctionRep {
            basis: WavefunctionBasis::Fock(v),
            normalized: true,
        })
    }

    pub fn grid(x0: f64, dx: f64, values: Vec<Complex64>) -> Result<WavefunctionRep> {
        if !(dx > 0.0 && dx.is_finite() && x0.is_finite()) || values.is_empty() {
            return Err(Error::Domain(
                "grid wavefunction needs finite x0, dx > 0 and nonempty values".into(),
            ));
        }
        let norm2: f64 = values.iter().map(Complex64::norm_sqr).sum::<f64>() * dx;
        Ok(WavefunctionRep {
            normalized: (norm2.sqrt() - 1.0).abs() <= 1e-10,
            basis: WavefunctionBasis::Grid { x0, dx, values },
        })
    }

    /// L2 norm (exact coefficient norm for fock, Riemann sum for grids).
    pub fn norm(&self) -> f64 {
        match &self.basis {
            WavefunctionBasis::Fock(v) => v.norm(),
            WavefunctionBasis::Grid { dx, values, .. } => {
                (values.iter().map(Complex64::norm_sqr).sum::<f64>() * dx).sqrt()
            }
        }
    }

    /// Highest occupied number level (grid reps count as 0).
    fn top_level(&self) -> usize {
        match &self.basis {
            WavefunctionBasis::Fock(v) => v.dim().saturating_sub(1),
            WavefunctionBasis::Grid { .. } => 0,
        }
    }

    /// Position wavefunction value phi(q).
    pub fn eval(&self, q: f64) -> Complex64 {
        match &self.basis {
            WavefunctionBasis::Fock(v) => {
                let mut seq = HermiteFunctionSeq::new(q);
                let mut acc = Complex64::new(0.0, 0.0);
                for c in &v.coeffs {
                    acc += c * seq.next_value();
                }
                acc
            }
            WavefunctionBasis::Grid { x0, dx, values } => {
                // Piecewise-constant read of the sampled state.
                let t = (q - x0) / dx;
                if t < -0.5 || t > values.len() as f64 - 0.5 {
                    return Complex64::new(0.0, 0.0);
                }
                let i = (t.round() as usize).min(values.len() - 1);
                values[i]
            }
        }
    }
}

fn require_normalized(phi: &WavefunctionRep) -> Result<()> {
    let n = phi.norm();
    if (n - 1.0).abs() > 1e-8 {
        return Err(Error::Domain(format!(
            "wavefunction must be normalized, got norm {n}"
        )));
    }
    Ok(())
}

/// Unsharp position density g(x) = integral |f_s(x-q)|^2 |phi(q)|^2 dq.
/// The substitution q = x/2 + u/sqrt(2) turns the exponential factor into
/// exactly e^{-u^2 - x^2/2}, so one plain Gauss-Hermite rule in u integrates
/// the fock form exactly; grid states use the Riemann sum on their support.
pub fn unsharp_position_density(s: u32, phi: &WavefunctionRep, x: f64) -> Result<f64> {
    require_normalized(phi)?;
    match &phi.basis {
        WavefunctionBasis::Fock(_) => {
            let n = (s as usize + phi.top_level() + 12).max(48);
            let rule = gauss_hermite(n)?;
            let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
            let g = rule.integrate(|u| {
                let q = 0.5 * x + u * inv_sqrt2;
                let fs = hermite_function(s, x - q);
                fs * fs * phi.eval(q).norm_sqr()
            });
            Ok(g.max(0.0) * inv_sqrt2)
        }
        WavefunctionBasis::Grid { x0, dx, values } => {
            let mut acc = 0.0;
            for (i, v) in values.iter().enumerate() {
                let q = x0 + i as f64 * dx;
                let fs = hermite_function(s, x - q);
                acc += fs * fs * v.norm_sqr() * dx;
            }
            Ok(acc)
        }
    }
}

/// Half-width beyond which the unsharp densities are below f64 resolution.
fn support_radius(s: u32, phi: &WavefunctionRep) -> f64 {
    let levels = (s as usize + phi.top_level() + 1) as f64;
    let grid_reach = match &phi.basis {
        WavefunctionBasis::Grid { x0, dx, values } => {
            x0.abs().max((x0 + values.len() as f64 * dx).abs())
        }
        WavefunctionBasis::Fock(_) => 0.0,
    };
    (2.0 * levels).sqrt() + grid_reach + 14.0
}

/// integral of the unsharp position density over a finite union of
/// intervals (endpoints may be infinite).
pub fn unsharp_position_prob(
    s: u32,
    phi: &WavefunctionRep,
    intervals: &[(f64, f64)],
) -> Result<f64> {
    require_normalized(phi)?;
    let reach = support_radius(s, phi);
    let mut total = 0.0;
    for &(a, b) in intervals {
        if a.is_nan() || b.is_nan() || a > b {
            return Err(Error::Domain(format!("invalid interval [{a}, {b}]")));
        }
        let lo = a.max(-reach);
        let hi = b.min(reach);
        if lo >= hi {
            continue;
        }
        let panels = ((hi - lo) / 0.75).ceil() as usize;
        let rule = legendre_panels(lo, hi, panels.clamp(1, 128), 16)?;
        total += rule.integrate(|x| unsharp_position_density(s, phi, x).unwrap_or(f64::NAN));
    }
    if !total.is_finite() {
        return Err(Error::Domain("position probability integrand failed".into()));
    }
    Ok(total.clamp(0.0, 1.0 + 1e-12).min(1.0))
}

/// Fock coefficients of the Fourier transform: f_n has Fourier eigenvalue
/// (-i)^n, so c_n -> (-i)^n c_n.
pub fn momentum_rotated(v: &FockVector) -> FockVector {
    FockVector {
        coeffs: v
            .coeffs
            .iter()
            .enumerate()
            .map(|(n, c)| povm::ipow(n as u32).conj() * c)
            .collect(),
    }
}

/// Unsharp momentum density h(p) = integral |f_s(p-q)|^2 |phihat(q)|^2 dq.
/// |fhat_s|^2 = |f_s|^2, so this is the position path applied to the
/// phase-rotated coefficient vector; raw grids carry no Fourier data.
pub fn unsharp_momentum_density(s: u32, phi: &WavefunctionRep, p: f64) -> Result<f64> {
    match &phi.basis {
        WavefunctionBasis::Fock(v) => {
            let rotated = WavefunctionRep {
                basis: WavefunctionBasis::Fock(momentum_rotated(v)),
                normalized: phi.normalized,
            };
            unsharp_position_density(s, &rotated, p)
        }
        WavefunctionBasis::Grid { .. } => Err(Error::FockBasisRequired),
    }
}

/// Gaussian envelope dominating the unsharp position density of a compactly
/// supported state: M N_s^2 (b-a) e^{-x^2 + 2C|x|} p_{2s}(|x|+C), where M
/// bounds |phi|^2 on the support [a, b], C = max(|a|, |b|), and p_{2s} is
/// the even polynomial with coefficients |h_j h_k| majorizing H_s(u)^2.
pub fn envelope_bound(s: u32, phi: &WavefunctionRep, x: f64) -> Result<f64> {
    let (x0, dx, values) = match &phi.basis {
        WavefunctionBasis::Grid { x0, dx, values } => (*x0, *dx, values),
        WavefunctionBasis::Fock(_) => {
            return Err(Error::Domain(
                "envelope bound needs a compactly supported grid wavefunction".into(),
            ))
        }
    };
    let a = x0;
    let b = x0 + (values.len() - 1) as f64 * dx;
    let c = a.abs().max(b.abs());
    let m = values
        .iter()
        .map(Complex64::norm_sqr)
        .fold(0.0f64, f64::max);
    let h = hermite_coefficients(s)?;
    // H_s(u)^2 <= sum_{j,k} |h_j h_k| u^{j+k}; all powers share the parity
    // of 2s, so the majorant is even with degree 2s.
    let mut beta = vec![0i128; s as usize + 1];
    for (j, &hj) in h.iter().enumerate() {
        for (k, &hk) in h.iter().enumerate() {
            let prod = hj.checked_mul(hk).ok_or_else(|| {
                Error::Overflow(format!("envelope coefficients overflow at s={s}"))
            })?;
            if prod != 0 {
                beta[(j + k) / 2] += prod.abs();
            }
        }
    }
    let t = x.abs() + c;
    let t2 = t * t;
    let mut poly = 0.0;
    for &bj in beta.iter().rev() {
        poly = poly * t2 + bj as f64;
    }
    let n_s2 = 1.0 / (2f64.powi(s as i32) * factorial(s)? * PI.sqrt());
    let v = m * n_s2 * (b - a + dx) * (-x * x + 2.0 * c * x.abs()).exp() * poly;
    if !v.is_finite() {
        return Err(Error::Overflow(format!("envelope overflow at x={x}")));
    }
    Ok(v)
}

/// Radial margin matrix element: the POVM element of the full-angle annulus
/// r in [r0, r1]. Equispaced angular nodes kill every off-diagonal stripe.
pub fn radial_margin_element(
    s: u32,
    k: u32,
    l: u32,
    r_interval: (f64, f64),
    d: usize,
) -> Result<Complex64> {
    if d <= k.max(l) as usize {
        return Err(Error::Domain(format!(
            "radial margin needs d > max(k, l) = {}",
            k.max(l)
        )));
    }
    let region = Region::annulus_sector(r_interval.0, r_interval.1, 0.0, 2.0 * PI)?;
    let op = povm::povm_element(s, &region, d)?;
    Ok(op.entry(k as usize, l as usize))
}

/// Angular margin matrix element: the POVM element of the full-radius sector
/// theta in [t0, t1]. Diagonal entries equal |X|/2pi (diagonal densities are
/// rotation invariant).
pub fn angular_margin_element(
    s: u32,
    k: u32,
    l: u32,
    theta_interval: (f64, f64),
    d: usize,
) -> Result<Complex64> {
    if d <= k.max(l) as usize {
        return Err(Error::Domain(format!(
            "angular margin needs d > max(k, l) = {}",
            k.max(l)
        )));
    }
    let region =
        Region::annulus_sector(0.0, f64::INFINITY, theta_interval.0, theta_interval.1)?;
    let op = povm::povm_element(s, &region, d)?;
    Ok(op.entry(k as usize, l as usize))
}

/// Polar moment integral_0^inf integral_0^{2pi} r^n theta^m
/// pair_density(s,k,l,r e^{i theta}) r dr dtheta. Radial part via
/// Gauss-Laguerre in u = r^2 with alpha in {0, 1/2} chosen so the remaining
/// factor is a polynomial in u; angular part via Legendre panels (theta^m is
/// not periodic, so equispaced angles would converge only linearly).
pub fn polar_moment_element(s: u32, n: u32, m: u32, k: u32, l: u32) -> Result<Complex64> {
    let alpha = if (n + k + l) % 2 == 0 { 0.0 } else { 0.5 };
    let n_radial = ((n + s + k + l) as usize + 24).min(150);
    let radial = gauss_laguerre(n_radial, alpha)?;
    let osc = k.abs_diff(l) as usize;
    let angular = legendre_panels(0.0, 2.0 * PI, (osc + 4).clamp(6, 64), 24)?;

    let mut acc = Complex64::new(0.0, 0.0);
    for (&theta, &wt) in angular.nodes.iter().zip(&angular.weights) {
        let phase = wt * theta.powi(m as i32);
        let mut radial_acc = Complex64::new(0.0, 0.0);
        for (&u, &wu) in radial.nodes.iter().zip(&radial.weights) {
            let r = u.sqrt();
            let z = Complex64::from_polar(r, theta);
            let rho = povm::pair_density(s, k, l, z)?;
            // r^n rho / 2 is u^alpha e^{-u} times a polynomial in u, the
            // exactness class of the plain-convention rule.
            radial_acc += rho * (wu * 0.5 * r.powi(n as i32));
        }
        acc += radial_acc * phase;
    }
    if !acc.re.is_finite() || !acc.im.is_finite() {
        return Err(Error::Overflow(format!(
            "polar moment left f64 range at (s={s}, n={n}, m={m}, k={k}, l={l})"
        )));
    }
    Ok(acc)
}
