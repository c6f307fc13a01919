//! Gauss rules and plane integration.
//!
//! All rules use the plain-integral convention: `sum_i w_i f(x_i)` targets
//! `integral f(x) dx` with the classical weight absorbed into `w_i`, so the
//! integrand carries its own Gaussian/exponential factor. Weights are built
//! from weight-scaled orthonormal recurrences (Hermite functions, Laguerre
//! polynomials times `x^{a/2} e^{-x/2}`), which keeps every intermediate in
//! f64 range even for rules with hundreds of nodes.
//!
//! Plane schemes and region integration assume integrands bounded by
//! `poly(|z|) e^{-|z|^2}` when the region is unbounded; accuracy targets are
//! absolute 1e-10 for that class at default hint sizes.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use crate::{Error, Result};

/// One-dimensional rule in the plain-integral convention.
#[derive(Clone, Debug)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Kahan-compensated quadrature sum.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut acc = Kahan::default();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(x));
        }
        acc.sum()
    }
}

#[derive(Default, Clone, Copy)]
pub(crate) struct Kahan {
    s: f64,
    c: f64,
}

impl Kahan {
    pub(crate) fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.s + y;
        self.c = (t - self.s) - y;
        self.s = t;
    }

    pub(crate) fn sum(&self) -> f64 {
        self.s
    }
}

#[derive(PartialEq, Eq, Hash, Clone, Copy)]
enum RuleKey {
    Hermite(usize),
    Laguerre(usize, u64),
    Legendre(usize),
}

fn rule_cache() -> &'static Mutex<HashMap<RuleKey, Arc<Rule1d>>> {
    static CACHE: OnceLock<Mutex<HashMap<RuleKey, Arc<Rule1d>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached(key: RuleKey, build: impl FnOnce() -> Rule1d) -> Rule1d {
    let mut cache = rule_cache().lock().expect("rule cache poisoned");
    if let Some(rule) = cache.get(&key) {
        return rule.as_ref().clone();
    }
    let rule = Arc::new(build());
    cache.insert(key, Arc::clone(&rule));
    rule.as_ref().clone()
}

/// Eigenvalues of the symmetric tridiagonal matrix with the given diagonal
/// and off-diagonal, ascending.
fn tridiag_eigenvalues(diag: &[f64], offdiag: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
        if i + 1 < n {
            m[(i, i + 1)] = offdiag[i];
            m[(i + 1, i)] = offdiag[i];
        }
    }
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    ev
}

/// Gauss-Hermite rule with n nodes: `sum w_i f(x_i) ~ integral_R f(x) dx`,
/// exact when f(x) = p(x) e^{-x^2} with deg p <= 2n-1.
pub fn gauss_hermite(n: usize) -> Result<Rule1d> {
    if n == 0 {
        return Err(Error::Domain("gauss_hermite requires n >= 1".into()));
    }
    // Past ~700 nodes e^{-x^2/2} underflows at the outermost node and the
    // scaled recurrence loses the weight there.
    if n > 700 {
        return Err(Error::Domain(format!(
            "gauss_hermite supports n <= 700, got {n}"
        )));
    }
    Ok(cached(RuleKey::Hermite(n), || build_hermite(n)))
}

fn build_hermite(n: usize) -> Rule1d {
    let diag = vec![0.0; n];
    let offdiag: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    let mut nodes = tridiag_eigenvalues(&diag, &offdiag);
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = nodes[i];
        // Newton polish on the Hermite function f_n; f_n'(x) = sqrt(2n) f_{n-1} - x f_n.
        for _ in 0..3 {
            let (_, fm, fn_) = hermite_scaled_seq(n, x);
            let deriv = (2.0 * n as f64).sqrt() * fm - x * fn_;
            if deriv != 0.0 {
                let step = fn_ / deriv;
                if step.is_finite() {
                    x -= step;
                }
            }
        }
        let (sumsq, _, _) = hermite_scaled_seq(n, x);
        nodes[i] = x;
        weights[i] = 1.0 / sumsq;
    }
    // The rule is symmetric; enforce x_{n-1-i} = -x_i and equal weights so
    // odd integrands cancel pairwise.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        nodes[j] = x;
        nodes[i] = -x;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        let mid = n / 2;
        nodes[mid] = 0.0;
        let (sumsq, _, _) = hermite_scaled_seq(n, 0.0);
        weights[mid] = 1.0 / sumsq;
    }
    Rule1d { nodes, weights }
}

/// Hermite functions f_0..f_n at x: returns (sum_{k<n} f_k^2, f_{n-1}, f_n).
fn hermite_scaled_seq(n: usize, x: f64) -> (f64, f64, f64) {
    let mut seq = crate::specfun::HermiteFunctionSeq::new(x);
    let mut sumsq = 0.0;
    let mut prev = 0.0;
    let mut cur = 0.0;
    for _ in 0..=n {
        prev = cur;
        cur = seq.next_value();
        // prev holds f_{k-1}, cur holds f_k after k+1 pulls
    }
    // Recompute the running sum over k < n in one pass (cheap, avoids drift).
    let mut seq2 = crate::specfun::HermiteFunctionSeq::new(x);
    for _ in 0..n {
        let v = seq2.next_value();
        sumsq += v * v;
    }
    (sumsq, prev, cur)
}

/// Generalized Gauss-Laguerre rule with n nodes on (0, inf):
/// `sum w_i f(x_i) ~ integral_0^inf f(x) dx`, exact when
/// f(x) = x^alpha p(x) e^{-x} with deg p <= 2n-1. Requires alpha > -1.
pub fn gauss_laguerre(n: usize, alpha: f64) -> Result<Rule1d> {
    if n == 0 {
        return Err(Error::Domain("gauss_laguerre requires n >= 1".into()));
    }
    if !(alpha > -1.0) {
        return Err(Error::Domain(format!(
            "gauss_laguerre requires alpha > -1, got {alpha}"
        )));
    }
    // Past ~340 nodes e^{-x/2} underflows at the outermost node (~4n) and the
    // scaled recurrence loses the weight there.
    if n > 340 {
        return Err(Error::Domain(format!(
            "gauss_laguerre supports n <= 340, got {n}"
        )));
    }
    Ok(cached(RuleKey::Laguerre(n, alpha.to_bits()), || {
        build_laguerre(n, alpha)
    }))
}

fn build_laguerre(n: usize, alpha: f64) -> Rule1d {
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + alpha + 1.0).collect();
    let offdiag: Vec<f64> = (1..n)
        .map(|k| (k as f64 * (k as f64 + alpha)).sqrt())
        .collect();
    let mut nodes = tridiag_eigenvalues(&diag, &offdiag);
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = nodes[i].max(f64::MIN_POSITIVE);
        // Newton polish; x l_n'(x) = n l_n - sqrt(n(n+alpha)) l_{n-1}, the
        // x^{a/2} e^{-x/2} scaling cancels in the ratio.
        for _ in 0..3 {
            let (_, lm, ln) = laguerre_scaled_seq(n, alpha, x);
            let denom = n as f64 * ln - (n as f64 * (n as f64 + alpha)).sqrt() * lm;
            if denom != 0.0 {
                let step = x * ln / denom;
                if step.is_finite() && step.abs() < 0.5 * x.max(1.0) {
                    x -= step;
                }
            }
        }
        let (sumsq, _, _) = laguerre_scaled_seq(n, alpha, x);
        nodes[i] = x;
        weights[i] = 1.0 / sumsq;
    }
    Rule1d { nodes, weights }
}

/// Scaled orthonormal Laguerre sequence l_k(x) x^{alpha/2} e^{-x/2} for
/// k = 0..n at x > 0: returns (sum_{k<n} v_k^2, v_{n-1}, v_n).
fn laguerre_scaled_seq(n: usize, alpha: f64, x: f64) -> (f64, f64, f64) {
    let l0 = (0.5 * alpha * x.ln() - 0.5 * x).exp() / libm::tgamma(alpha + 1.0).sqrt();
    let mut prev = 0.0;
    let mut cur = l0;
    let mut sumsq = 0.0;
    for k in 0..n {
        sumsq += cur * cur;
        let kf = k as f64;
        let next = ((2.0 * kf + alpha + 1.0 - x) * cur
            - (kf * (kf + alpha)).sqrt() * prev)
            / (((kf + 1.0) * (kf + 1.0 + alpha)).sqrt());
        prev = cur;
        cur = next;
    }
    (sumsq, prev, cur)
}

/// Gauss-Legendre rule with n nodes on [-1, 1] (weight function 1).
pub fn gauss_legendre(n: usize) -> Result<Rule1d> {
    if n == 0 {
        return Err(Error::Domain("gauss_legendre requires n >= 1".into()));
    }
    Ok(cached(RuleKey::Legendre(n), || build_legendre(n)))
}

fn build_legendre(n: usize) -> Rule1d {
    let diag = vec![0.0; n];
    let offdiag: Vec<f64> = (1..n)
        .map(|k| {
            let kf = k as f64;
            kf / (4.0 * kf * kf - 1.0).sqrt()
        })
        .collect();
    let mut nodes = tridiag_eigenvalues(&diag, &offdiag);
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = nodes[i];
        for _ in 0..3 {
            let (_, _, pn, dpn) = legendre_seq(n, x);
            if dpn != 0.0 {
                let step = pn / dpn;
                if step.is_finite() {
                    x -= step;
                }
            }
        }
        let (sumsq, _, _, _) = legendre_seq(n, x);
        nodes[i] = x;
        weights[i] = 1.0 / sumsq;
    }
    Rule1d { nodes, weights }
}

/// Orthonormal Legendre values p_0..p_n and derivative of p_n at x:
/// returns (sum_{k<n} p_k^2, p_{n-1}, p_n, p_n').
fn legendre_seq(n: usize, x: f64) -> (f64, f64, f64, f64) {
    let b = |k: usize| {
        let kf = k as f64;
        kf / (4.0 * kf * kf - 1.0).sqrt()
    };
    let mut prev = 0.0;
    let mut dprev = 0.0;
    let mut cur = std::f64::consts::FRAC_1_SQRT_2;
    let mut dcur = 0.0;
    let mut sumsq = 0.0;
    for k in 0..n {
        sumsq += cur * cur;
        let bk = if k == 0 { 0.0 } else { b(k) };
        let bk1 = b(k + 1);
        let next = (x * cur - bk * prev) / bk1;
        let dnext = (cur + x * dcur - bk * dprev) / bk1;
        prev = cur;
        dprev = dcur;
        cur = next;
        dcur = dnext;
    }
    (sumsq, prev, cur, dcur)
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn legendre_panel(a: f64, b: f64, n: usize) -> Result<Rule1d> {
    let base = gauss_legendre(n)?;
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    Ok(Rule1d {
        nodes: base.nodes.iter().map(|t| mid + half * t).collect(),
        weights: base.weights.iter().map(|w| w * half).collect(),
    })
}

/// Composite Gauss-Legendre rule: `panels` equal panels on [a, b] with
/// `nodes_per` nodes each.
pub fn legendre_panels(a: f64, b: f64, panels: usize, nodes_per: usize) -> Result<Rule1d> {
    if panels == 0 {
        return Err(Error::Domain("legendre_panels requires panels >= 1".into()));
    }
    let mut nodes = Vec::with_capacity(panels * nodes_per);
    let mut weights = Vec::with_capacity(panels * nodes_per);
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let rule = legendre_panel(lo, lo + h, nodes_per)?;
        nodes.extend(rule.nodes);
        weights.extend(rule.weights);
    }
    Ok(Rule1d { nodes, weights })
}

/// Node/weight set for integrals over the complex plane with Lebesgue
/// measure: `sum w_i f(z_i) ~ integral f dlambda`.
#[derive(Clone, Debug)]
pub struct PlaneScheme {
    pub label: String,
    pub nodes: Vec<Complex64>,
    pub weights: Vec<f64>,
}

/// Polar product scheme: Gauss-Laguerre in u = r^2 (n_radial nodes) times
/// equispaced angles (n_angular nodes). Exact for
/// f = e^{-|z|^2} z^m conj(z)^n with (m+n)/2 < n_radial and |m-n| < n_angular.
pub fn radial_angular(n_radial: usize, n_angular: usize) -> Result<PlaneScheme> {
    if n_angular == 0 {
        return Err(Error::Domain("radial_angular requires n_angular >= 1".into()));
    }
    let radial = gauss_laguerre(n_radial, 0.0)?;
    let mut nodes = Vec::with_capacity(n_radial * n_angular);
    let mut weights = Vec::with_capacity(n_radial * n_angular);
    let wtheta = PI / n_angular as f64; // (2 pi / n) * (1/2 from u = r^2)
    for (&u, &wu) in radial.nodes.iter().zip(&radial.weights) {
        let r = u.sqrt();
        for i in 0..n_angular {
            let theta = 2.0 * PI * i as f64 / n_angular as f64;
            nodes.push(Complex64::from_polar(r, theta));
            weights.push(wu * wtheta);
        }
    }
    Ok(PlaneScheme {
        label: format!("radial_angular({n_radial}, {n_angular})"),
        nodes,
        weights,
    })
}

/// Uniform midpoint grid covering [-extent, extent]^2. The spacing is snapped
/// so an integer number of cells spans the box; halving the spacing refines
/// the same box.
pub fn grid_2d(spacing: f64, extent: f64) -> Result<PlaneScheme> {
    if !(spacing > 0.0) || !(extent > 0.0) {
        return Err(Error::Domain(
            "grid_2d requires positive spacing and extent".into(),
        ));
    }
    let n = ((2.0 * extent / spacing).round() as usize).max(1);
    let h = 2.0 * extent / n as f64;
    let w = h * h;
    let mut nodes = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        let x = -extent + (i as f64 + 0.5) * h;
        for j in 0..n {
            let y = -extent + (j as f64 + 0.5) * h;
            nodes.push(Complex64::new(x, y));
            weights.push(w);
        }
    }
    Ok(PlaneScheme {
        label: format!("grid_2d({h}, {extent})"),
        nodes,
        weights,
    })
}

/// Quadrature sum over a plane scheme. Errors with the offending node if the
/// integrand produces a non-finite value.
pub fn integrate_plane(
    mut f: impl FnMut(Complex64) -> Complex64,
    scheme: &PlaneScheme,
) -> Result<Complex64> {
    let mut re = Kahan::default();
    let mut im = Kahan::default();
    for (i, (&z, &w)) in scheme.nodes.iter().zip(&scheme.weights).enumerate() {
        let v = f(z);
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::NonFiniteNode {
                index: i,
                re: z.re,
                im: z.im,
            });
        }
        re.add(w * v.re);
        im.add(w * v.im);
    }
    Ok(Complex64::new(re.sum(), im.sum()))
}

/// Measurable plane region.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    FullPlane,
    /// [x0, x1] x [y0, y1]
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
    Disk { center: Complex64, radius: f64 },
    /// r in [r0, r1] (r1 may be infinite), theta in [theta0, theta1] with
    /// 0 <= theta0 <= theta1 <= 2 pi, measured from the positive real axis.
    AnnulusSector {
        r0: f64,
        r1: f64,
        theta0: f64,
        theta1: f64,
    },
    /// { z : Re(z e^{-i angle}) >= offset }
    HalfPlane { angle: f64, offset: f64 },
}

impl Region {
    pub fn disk(cx: f64, cy: f64, radius: f64) -> Result<Region> {
        let r = Region::Disk {
            center: Complex64::new(cx, cy),
            radius,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Region> {
        let r = Region::Rectangle { x0, x1, y0, y1 };
        r.validate()?;
        Ok(r)
    }

    pub fn annulus_sector(r0: f64, r1: f64, theta0: f64, theta1: f64) -> Result<Region> {
        let r = Region::AnnulusSector {
            r0,
            r1,
            theta0,
            theta1,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn half_plane(angle: f64, offset: f64) -> Result<Region> {
        let r = Region::HalfPlane { angle, offset };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Region::FullPlane => Ok(()),
            Region::Rectangle { x0, x1, y0, y1 } => {
                if !(x0.is_finite() && x1.is_finite() && y0.is_finite() && y1.is_finite()) {
                    return Err(Error::Domain("rectangle bounds must be finite".into()));
                }
                if x0 > x1 || y0 > y1 {
                    return Err(Error::Domain(format!(
                        "degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]"
                    )));
                }
                Ok(())
            }
            Region::Disk { center, radius } => {
                if !center.re.is_finite() || !center.im.is_finite() {
                    return Err(Error::Domain("disk center must be finite".into()));
                }
                if !(radius >= 0.0) || !radius.is_finite() {
                    return Err(Error::Domain(format!("disk radius must be >= 0, got {radius}")));
                }
                Ok(())
            }
            Region::AnnulusSector {
                r0,
                r1,
                theta0,
                theta1,
            } => {
                if !(r0 >= 0.0) || r0.is_nan() || r1.is_nan() || r0 > r1 {
                    return Err(Error::Domain(format!(
                        "annulus radii must satisfy 0 <= r0 <= r1, got [{r0}, {r1}]"
                    )));
                }
                let eps = 1e-12;
                if !(theta0 >= -eps && theta0 <= theta1 && theta1 <= 2.0 * PI + eps) {
                    return Err(Error::Domain(format!(
                        "sector angles must satisfy 0 <= theta0 <= theta1 <= 2 pi, got [{theta0}, {theta1}]"
                    )));
                }
                Ok(())
            }
            Region::HalfPlane { angle, offset } => {
                if !angle.is_finite() || !offset.is_finite() {
                    return Err(Error::Domain("half-plane parameters must be finite".into()));
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        match *self {
            Region::FullPlane => true,
            Region::Rectangle { x0, x1, y0, y1 } => {
                z.re >= x0 && z.re <= x1 && z.im >= y0 && z.im <= y1
            }
            Region::Disk { center, radius } => (z - center).norm() <= radius,
            Region::AnnulusSector {
                r0,
                r1,
                theta0,
                theta1,
            } => {
                let r = z.norm();
                if r < r0 || r > r1 {
                    return false;
                }
                if theta1 - theta0 >= 2.0 * PI - 1e-12 {
                    return true;
                }
                let mut t = z.arg();
                if t < 0.0 {
                    t += 2.0 * PI;
                }
                t >= theta0 && t <= theta1
            }
            Region::HalfPlane { angle, offset } => {
                (z * Complex64::from_polar(1.0, -angle)).re >= offset
            }
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Region::FullPlane => write!(f, "full"),
            Region::Rectangle { x0, x1, y0, y1 } => write!(f, "rect:{x0},{x1},{y0},{y1}"),
            Region::Disk { center, radius } => {
                write!(f, "disk:{},{},{}", center.re, center.im, radius)
            }
            Region::AnnulusSector {
                r0,
                r1,
                theta0,
                theta1,
            } => write!(f, "annulus:{r0},{r1},{theta0},{theta1}"),
            Region::HalfPlane { angle, offset } => write!(f, "halfplane:{angle},{offset}"),
        }
    }
}

impl FromStr for Region {
    type Err = Error;

    /// Parses `full`, `rect:x0,x1,y0,y1`, `disk:cx,cy,r`,
    /// `annulus:r0,r1,theta0,theta1` (r1 may be `inf`), `halfplane:angle,offset`.
    fn from_str(s: &str) -> Result<Region> {
        let s = s.trim();
        if s == "full" || s == "full_plane" {
            return Ok(Region::FullPlane);
        }
        let (head, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidConfig(format!("unrecognized region '{s}'")))?;
        let parts: Vec<f64> = rest
            .split(',')
            .map(|p| {
                let p = p.trim();
                match p {
                    "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                    _ => p
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidConfig(format!("bad number '{p}' in region '{s}'"))),
                }
            })
            .collect::<Result<_>>()?;
        let expect = |n: usize| {
            if parts.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "region '{head}' takes {n} numbers, got {}",
                    parts.len()
                )))
            }
        };
        match head {
            "rect" | "rectangle" => {
                expect(4)?;
                Region::rectangle(parts[0], parts[1], parts[2], parts[3])
            }
            "disk" => {
                expect(3)?;
                Region::disk(parts[0], parts[1], parts[2])
            }
            "annulus" | "sector" => {
                expect(4)?;
                Region::annulus_sector(parts[0], parts[1], parts[2], parts[3])
            }
            "halfplane" | "half_plane" => {
                expect(2)?;
                Region::half_plane(parts[0], parts[1])
            }
            _ => Err(Error::InvalidConfig(format!("unrecognized region '{s}'"))),
        }
    }
}

/// Size hints for region schemes.
#[derive(Clone, Copy, Debug)]
pub struct SchemeHint {
    pub n_radial: usize,
    pub n_angular: usize,
}

impl Default for SchemeHint {
    fn default() -> Self {
        SchemeHint {
            n_radial: 80,
            n_angular: 64,
        }
    }
}

const GAUSS_DECAY_CUTOFF: f64 = 9.6; // e^{-x^2} below 1e-40 past here

/// Truncation radius for Gaussian-class integrands whose polynomial degree
/// scales with the requested rule size.
fn gaussian_cutoff(n: usize) -> f64 {
    GAUSS_DECAY_CUTOFF.max(0.7 * (n as f64).sqrt() + 5.5)
}

/// Materializes a node/weight scheme for a region. Shared by all operator
/// entries over the same region.
pub fn region_scheme(region: &Region, hint: &SchemeHint) -> Result<PlaneScheme> {
    region.validate()?;
    let nr = hint.n_radial.max(4);
    let na = hint.n_angular.max(4);
    match *region {
        Region::FullPlane => radial_angular(nr, na),
        Region::Rectangle { x0, x1, y0, y1 } => {
            if x0 == x1 || y0 == y1 {
                return Ok(PlaneScheme {
                    label: "rectangle(empty)".into(),
                    nodes: vec![],
                    weights: vec![],
                });
            }
            let rx = axis_panels(x0, x1)?;
            let ry = axis_panels(y0, y1)?;
            let mut nodes = Vec::with_capacity(rx.len() * ry.len());
            let mut weights = Vec::with_capacity(rx.len() * ry.len());
            for (&x, &wx) in rx.nodes.iter().zip(&rx.weights) {
                for (&y, &wy) in ry.nodes.iter().zip(&ry.weights) {
                    nodes.push(Complex64::new(x, y));
                    weights.push(wx * wy);
                }
            }
            Ok(PlaneScheme {
                label: format!("rectangle[{x0},{x1}]x[{y0},{y1}]"),
                nodes,
                weights,
            })
        }
        Region::Disk { center, radius } => {
            if radius == 0.0 {
                return Ok(PlaneScheme {
                    label: "disk(empty)".into(),
                    nodes: vec![],
                    weights: vec![],
                });
            }
            let radial = axis_panels(0.0, radius)?;
            let mut nodes = Vec::with_capacity(radial.len() * na);
            let mut weights = Vec::with_capacity(radial.len() * na);
            let wtheta = 2.0 * PI / na as f64;
            for (&r, &wr) in radial.nodes.iter().zip(&radial.weights) {
                for i in 0..na {
                    let theta = 2.0 * PI * i as f64 / na as f64;
                    nodes.push(center + Complex64::from_polar(r, theta));
                    weights.push(wr * r * wtheta);
                }
            }
            Ok(PlaneScheme {
                label: format!("disk({}, {}, {radius})", center.re, center.im),
                nodes,
                weights,
            })
        }
        Region::AnnulusSector {
            r0,
            r1,
            theta0,
            theta1,
        } => {
            let span = theta1 - theta0;
            if r0 == r1 || span == 0.0 {
                return Ok(PlaneScheme {
                    label: "annulus_sector(empty)".into(),
                    nodes: vec![],
                    weights: vec![],
                });
            }
            // Angular rule: equispaced for the full circle (spectral for
            // periodic integrands, exact angular-mode projector), panels of
            // Gauss-Legendre otherwise.
            let full_circle = span >= 2.0 * PI - 1e-12;
            let angular: Rule1d = if full_circle {
                Rule1d {
                    nodes: (0..na)
                        .map(|i| 2.0 * PI * i as f64 / na as f64)
                        .collect(),
                    weights: vec![2.0 * PI / na as f64; na],
                }
            } else {
                let panels = ((span / (PI / 4.0)).ceil() as usize).clamp(1, 64);
                let per = (na / panels).clamp(12, 48);
                legendre_panels(theta0, theta1, panels, per)?
            };
            // Radial rule carrying the r dr Jacobian in the weights. An
            // infinite outer radius is truncated at the Gaussian decay
            // cutoff; Legendre panels stay spectral for either parity of
            // the radial power (a Laguerre rule in u = r^2 would lose half
            // its order on odd powers of r).
            let r1_eff = if r1.is_finite() {
                r1
            } else {
                gaussian_cutoff(nr).max(r0 + 1.0)
            };
            let rule = axis_panels(r0, r1_eff)?;
            let rweights: Vec<f64> = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&r, &wr)| wr * r)
                .collect();
            let rnodes = rule.nodes;
            let mut nodes = Vec::with_capacity(rnodes.len() * angular.len());
            let mut weights = Vec::with_capacity(rnodes.len() * angular.len());
            for (&r, &wr) in rnodes.iter().zip(&rweights) {
                for (&theta, &wt) in angular.nodes.iter().zip(&angular.weights) {
                    nodes.push(Complex64::from_polar(r, theta));
                    weights.push(wr * wt);
                }
            }
            Ok(PlaneScheme {
                label: format!("annulus_sector[{r0},{r1}]x[{theta0},{theta1}]"),
                nodes,
                weights,
            })
        }
        Region::HalfPlane { angle, offset } => {
            // Rotated frame w = x + iy, z = w e^{i angle}, x >= offset.
            // Gaussian-class integrands vanish past the cutoff.
            let x1 = (offset + 1.0).max(gaussian_cutoff(nr));
            let xr = axis_panels(offset, x1)?;
            let yr = gauss_hermite(nr.max(48))?;
            let rot = Complex64::from_polar(1.0, angle);
            let mut nodes = Vec::with_capacity(xr.len() * yr.len());
            let mut weights = Vec::with_capacity(xr.len() * yr.len());
            for (&x, &wx) in xr.nodes.iter().zip(&xr.weights) {
                for (&y, &wy) in yr.nodes.iter().zip(&yr.weights) {
                    nodes.push(Complex64::new(x, y) * rot);
                    weights.push(wx * wy);
                }
            }
            Ok(PlaneScheme {
                label: format!("half_plane({angle}, {offset})"),
                nodes,
                weights,
            })
        }
    }
}

/// Composite Legendre rule along one axis: panel width <= 1.5, 24 nodes per
/// panel, panel count capped.
fn axis_panels(a: f64, b: f64) -> Result<Rule1d> {
    let len = b - a;
    let panels = ((len / 1.5).ceil() as usize).clamp(1, 256);
    legendre_panels(a, b, panels, 24)
}

/// Integrates f over a region with a freshly built scheme.
pub fn integrate_region(
    f: impl FnMut(Complex64) -> Complex64,
    region: &Region,
    hint: &SchemeHint,
) -> Result<Complex64> {
    let scheme = region_scheme(region, hint)?;
    integrate_plane(f, &scheme)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn gamma(x: f64) -> f64 {
        libm::tgamma(x)
    }

    #[test]
    fn gauss_hermite_monomial_exactness() {
        for n in [1usize, 2, 5, 12, 40] {
            let rule = gauss_hermite(n).unwrap();
            for j in 0..(2 * n) {
                let approx_val = rule.integrate(|x| x.powi(j as i32) * (-x * x).exp());
                let exact = if j % 2 == 1 {
                    0.0
                } else {
                    gamma((j as f64 + 1.0) / 2.0)
                };
                // Odd cases are exactly zero; measure those relative to the
                // integrand's L1 mass Gamma((j+1)/2).
                let scale = gamma((j as f64 + 1.0) / 2.0).max(1.0);
                assert_abs_diff_eq!(approx_val, exact, epsilon = 1e-12 * scale);
            }
        }
    }

    #[test]
    fn gauss_hermite_first_inexact_degree() {
        // Degree 2n must show a visible error: the rule is not accidentally
        // exact past its class.
        let n = 4;
        let rule = gauss_hermite(n).unwrap();
        let j = 2 * n;
        let approx_val = rule.integrate(|x| x.powi(j as i32) * (-x * x).exp());
        let exact = gamma((j as f64 + 1.0) / 2.0);
        assert!((approx_val - exact).abs() > 1e-6 * exact);
    }

    #[test]
    fn gauss_laguerre_monomial_exactness() {
        for &alpha in &[0.0, 0.5, 2.5] {
            for n in [1usize, 3, 8, 30] {
                let rule = gauss_laguerre(n, alpha).unwrap();
                for j in 0..(2 * n) {
                    let approx_val =
                        rule.integrate(|x| x.powf(alpha + j as f64) * (-x).exp());
                    let exact = gamma(alpha + j as f64 + 1.0);
                    assert_relative_eq!(approx_val, exact, max_relative = 1e-11);
                }
            }
        }
    }

    #[test]
    fn gauss_laguerre_large_rule_weights_finite() {
        let rule = gauss_laguerre(200, 0.0).unwrap();
        assert!(rule.weights.iter().all(|w| w.is_finite() && *w > 0.0));
        let total = rule.integrate(|x| (-x).exp());
        assert_relative_eq!(total, 1.0, max_relative = 1e-11);
    }

    #[test]
    fn gauss_legendre_monomials() {
        for n in [1usize, 2, 6, 16] {
            let rule = gauss_legendre(n).unwrap();
            for j in 0..(2 * n) {
                let approx_val = rule.integrate(|x| x.powi(j as i32));
                let exact = if j % 2 == 1 { 0.0 } else { 2.0 / (j as f64 + 1.0) };
                assert_abs_diff_eq!(approx_val, exact, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn legendre_panels_additive() {
        let f = |x: f64| (x * 1.7).sin() * (-0.3 * x * x).exp();
        let whole = legendre_panels(-2.0, 3.0, 5, 20).unwrap().integrate(f);
        let left = legendre_panels(-2.0, 0.5, 3, 20).unwrap().integrate(f);
        let right = legendre_panels(0.5, 3.0, 3, 20).unwrap().integrate(f);
        assert_relative_eq!(whole, left + right, max_relative = 1e-12);
    }

    #[test]
    fn zero_node_counts_rejected() {
        assert!(matches!(gauss_hermite(0), Err(Error::Domain(_))));
        assert!(matches!(gauss_laguerre(0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(gauss_laguerre(4, -1.0), Err(Error::Domain(_))));
        assert!(matches!(gauss_legendre(0), Err(Error::Domain(_))));
    }

    #[test]
    fn radial_angular_gaussian_moments() {
        let scheme = radial_angular(24, 32).unwrap();
        // (1/pi) integral e^{-|z|^2} |z|^{2m} = m!
        for m in 0..8u32 {
            let v = integrate_plane(
                |z| {
                    Complex64::new(
                        (-z.norm_sqr()).exp() * z.norm_sqr().powi(m as i32) / PI,
                        0.0,
                    )
                },
                &scheme,
            )
            .unwrap();
            let exact = crate::specfun::factorial(m).unwrap();
            assert_relative_eq!(v.re, exact, max_relative = 1e-12);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-12);
        }
        // Mixed angular modes integrate to zero.
        let v = integrate_plane(
            |z| z.powu(3) * z.conj().powu(1) * (-z.norm_sqr()).exp(),
            &scheme,
        )
        .unwrap();
        assert_abs_diff_eq!(v.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_refinement_improves() {
        let f = |z: Complex64| Complex64::new((-z.norm_sqr()).exp() * (1.0 + z.re), 0.0);
        let reference = PI; // integral e^{-|z|^2} (1 + x) = pi
        let coarse = integrate_plane(f, &grid_2d(0.5, 7.0).unwrap()).unwrap();
        let fine = integrate_plane(f, &grid_2d(0.25, 7.0).unwrap()).unwrap();
        let e0 = (coarse.re - reference).abs();
        let e1 = (fine.re - reference).abs();
        assert!(e1 <= e0);
        assert!(e1 < 1e-6);
    }

    #[test]
    fn region_rectangle_area_exact() {
        let region = Region::rectangle(0.0, 2.0, 0.0, 3.0).unwrap();
        let v = integrate_region(|_| Complex64::new(1.0, 0.0), &region, &SchemeHint::default())
            .unwrap();
        assert_relative_eq!(v.re, 6.0, max_relative = 1e-12);
    }

    #[test]
    fn region_disk_gaussian_mass() {
        let region = Region::disk(0.0, 0.0, 1.0).unwrap();
        let v = integrate_region(
            |z| Complex64::new((-z.norm_sqr()).exp() / PI, 0.0),
            &region,
            &SchemeHint::default(),
        )
        .unwrap();
        assert_relative_eq!(v.re, 1.0 - (-1.0f64).exp(), max_relative = 1e-9);
    }

    #[test]
    fn region_half_plane_gaussian_mass() {
        let region = Region::half_plane(0.0, 0.0).unwrap();
        let v = integrate_region(
            |z| Complex64::new((-z.norm_sqr()).exp() / PI, 0.0),
            &region,
            &SchemeHint::default(),
        )
        .unwrap();
        assert_relative_eq!(v.re, 0.5, max_relative = 1e-9);
        // Shifted: mass of {x >= 1} under the rotation-invariant Gaussian is
        // erfc(1)/2.
        let region = Region::half_plane(1.1, 1.0).unwrap();
        let v = integrate_region(
            |z| Complex64::new((-z.norm_sqr()).exp() / PI, 0.0),
            &region,
            &SchemeHint::default(),
        )
        .unwrap();
        assert_relative_eq!(v.re, 0.5 * libm::erfc(1.0), max_relative = 1e-9);
    }

    #[test]
    fn region_annulus_partition_recombines() {
        let f = |z: Complex64| {
            Complex64::new((-z.norm_sqr()).exp() * (1.0 + z.re * z.re) / PI, 0.0)
        };
        let hint = SchemeHint::default();
        let full = integrate_region(f, &Region::FullPlane, &hint).unwrap();
        let mut acc = Complex64::new(0.0, 0.0);
        let radii = [0.0, 1.0, 2.5, f64::INFINITY];
        let angles = [0.0, 2.0 * PI / 3.0, PI, 2.0 * PI];
        for ri in 0..3 {
            for ai in 0..3 {
                let region =
                    Region::annulus_sector(radii[ri], radii[ri + 1], angles[ai], angles[ai + 1])
                        .unwrap();
                acc += integrate_region(f, &region, &hint).unwrap();
            }
        }
        assert_abs_diff_eq!((acc - full).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn region_empty_and_zero() {
        let hint = SchemeHint::default();
        let empty = Region::annulus_sector(1.0, 1.0, 0.0, PI).unwrap();
        let v = integrate_region(|_| Complex64::new(1.0, 0.0), &empty, &hint).unwrap();
        assert_eq!(v, Complex64::new(0.0, 0.0));
        let z = integrate_region(|_| Complex64::new(0.0, 0.0), &Region::FullPlane, &hint).unwrap();
        assert_eq!(z, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn region_validation_errors() {
        assert!(matches!(Region::disk(0.0, 0.0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(
            Region::rectangle(1.0, 0.0, 0.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            Region::annulus_sector(2.0, 1.0, 0.0, PI),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            Region::annulus_sector(0.0, 1.0, 1.0, 9.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn non_finite_integrand_names_node() {
        let scheme = grid_2d(1.0, 2.0).unwrap();
        let err = integrate_plane(
            |z| Complex64::new(if z.re < 0.0 { f64::NAN } else { 1.0 }, 0.0),
            &scheme,
        )
        .unwrap_err();
        match err {
            Error::NonFiniteNode { index, re, .. } => {
                assert!(re < 0.0);
                assert_eq!(index, 0);
            }
            other => panic!("expected NonFiniteNode, got {other:?}"),
        }
    }

    #[test]
    fn region_contains() {
        assert!(Region::FullPlane.contains(Complex64::new(1e6, -1e6)));
        let rect = Region::rectangle(0.0, 1.0, 0.0, 1.0).unwrap();
        assert!(rect.contains(Complex64::new(0.5, 1.0)));
        assert!(!rect.contains(Complex64::new(0.5, 1.1)));
        let disk = Region::disk(1.0, 0.0, 1.0).unwrap();
        assert!(disk.contains(Complex64::new(1.9, 0.0)));
        assert!(!disk.contains(Complex64::new(-0.1, 0.0)));
        let ann = Region::annulus_sector(1.0, 2.0, 0.0, PI).unwrap();
        assert!(ann.contains(Complex64::new(0.0, 1.5)));
        assert!(!ann.contains(Complex64::new(0.0, -1.5)));
        assert!(!ann.contains(Complex64::new(0.5, 0.5)));
        let full_ann = Region::annulus_sector(0.0, f64::INFINITY, 0.0, 2.0 * PI).unwrap();
        assert!(full_ann.contains(Complex64::new(-3.0, -4.0)));
        let hp = Region::half_plane(PI / 2.0, 0.0).unwrap();
        assert!(hp.contains(Complex64::new(-5.0, 0.1)));
        assert!(!hp.contains(Complex64::new(5.0, -0.1)));
    }

    #[test]
    fn region_parse_roundtrip() {
        for s in [
            "full",
            "rect:0,2,0,3",
            "disk:0.5,-1,2",
            "annulus:1,inf,0,3.141592653589793",
            "halfplane:0.7853981633974483,0.5",
        ] {
            let region: Region = s.parse().unwrap();
            let back: Region = region.to_string().parse().unwrap();
            assert_eq!(region, back);
        }
        assert!(matches!(
            "blob:1,2".parse::<Region>(),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            "disk:1,2".parse::<Region>(),
            Err(Error::InvalidConfig(_))
        ));
    }
}
