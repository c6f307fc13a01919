//! Self-check suites over the library invariants: each suite measures a
//! deviation per check and compares it against a tolerance, producing a
//! machine-readable report. The CLI `verify` subcommand is a thin wrapper.

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::str::FromStr;

use crate::margins;
use crate::povm::{self, FockVector, TruncatedOperator};
use crate::quadrature::{radial_angular, Region};
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, measured: f64, tolerance: f64) -> Check {
        Check {
            name: name.into(),
            measured,
            tolerance,
            pass: measured.is_finite() && measured <= tolerance,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl SuiteReport {
    fn from_checks(suite: &str, checks: Vec<Check>) -> SuiteReport {
        let passed = checks.iter().all(|c| c.pass);
        SuiteReport {
            suite: suite.into(),
            checks,
            passed,
        }
    }

    pub fn to_value(&self) -> Value {
        json!({
            "suite": self.suite,
            "passed": self.passed,
            "checks": self.checks.iter().map(|c| json!({
                "name": c.name,
                "measured": c.measured,
                "tolerance": c.tolerance,
                "pass": c.pass,
            })).collect::<Vec<_>>(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    NormalOrder,
    Selection,
    Quadrature,
    Margins,
    Sampler,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::NormalOrder,
        Suite::Selection,
        Suite::Quadrature,
        Suite::Margins,
        Suite::Sampler,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::NormalOrder => "normal_order",
            Suite::Selection => "selection",
            Suite::Quadrature => "quadrature",
            Suite::Margins => "margins",
            Suite::Sampler => "sampler",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Suite> {
        match s {
            "normal_order" => Ok(Suite::NormalOrder),
            "selection" => Ok(Suite::Selection),
            "quadrature" => Ok(Suite::Quadrature),
            "margins" => Ok(Suite::Margins),
            "sampler" => Ok(Suite::Sampler),
            other => Err(Error::InvalidConfig(format!(
                "unknown verify suite '{other}' (expected normal_order, selection, quadrature, margins or sampler)"
            ))),
        }
    }
}

/// Runs one suite. A tolerance override replaces the per-check defaults
/// (tightening it to 0 makes any floating-point check fail by design).
pub fn run_suite(suite: Suite, tol: Option<f64>) -> Result<SuiteReport> {
    let mut checks = match suite {
        Suite::NormalOrder => normal_order_checks()?,
        Suite::Selection => selection_checks()?,
        Suite::Quadrature => quadrature_checks()?,
        Suite::Margins => margins_checks()?,
        Suite::Sampler => sampler_checks()?,
    };
    if let Some(t) = tol {
        for c in &mut checks {
            c.tolerance = t;
            c.pass = c.measured.is_finite() && c.measured <= t;
        }
    }
    Ok(SuiteReport::from_checks(suite.name(), checks))
}

/// Vacuum moment operators against explicit ladder products on the
/// truncation-validity mask (relative deviation).
fn normal_order_checks() -> Result<Vec<Check>> {
    let d = 16;
    let mut checks = Vec::new();
    for m in 0..=3u32 {
        for n in 0..=3u32 {
            let closed = povm::moment_operator(0, m, n, d)?;
            let ordered = povm::normal_ordered_operator(m, n, d)?;
            let mut worst = 0.0f64;
            for k in 0..d {
                for l in 0..d {
                    if ordered.valid[(k, l)] {
                        let b = ordered.op.entry(k, l);
                        let dev = (closed.entry(k, l) - b).norm() / b.norm().max(1.0);
                        worst = worst.max(dev);
                    }
                }
            }
            checks.push(Check::new(format!("normal_order m={m} n={n}"), worst, 1e-9));
        }
    }
    Ok(checks)
}

/// Exact zeros whenever k+m != l+n.
fn selection_checks() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for s in 0..=4u32 {
        let mut worst = 0.0f64;
        let mut at = String::from("none");
        for m in 0..=4u32 {
            for n in 0..=4u32 {
                for k in 0..=8u32 {
                    for l in 0..=8u32 {
                        if k + m != l + n {
                            let v = povm::moment_matrix_element(s, m, n, k, l)?.abs();
                            if v > worst {
                                worst = v;
                                at = format!("(s={s},m={m},n={n},k={k},l={l})");
                            }
                        }
                    }
                }
            }
        }
        checks.push(Check::new(
            format!("selection_rule s={s} worst_at={at}"),
            worst,
            0.0,
        ));
    }
    Ok(checks)
}

/// Plane quadrature of z^m conj(z)^n pair_density against the closed-form
/// matrix elements (absolute deviation).
fn quadrature_checks() -> Result<Vec<Check>> {
    let scheme = radial_angular(64, 96)?;
    let dmax = 4usize;
    let mut checks = Vec::new();
    for s in 0..=3u32 {
        // Displacement columns once per node serve every (m,n,k,l) tuple.
        let cols: Vec<Vec<Complex64>> = scheme
            .nodes
            .iter()
            .map(|&z| {
                (0..dmax as u32)
                    .map(|k| crate::specfun::displacement_element(k, s, z))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut worst = 0.0f64;
        let mut at = String::from("none");
        for m in 0..=2u32 {
            for n in 0..=2u32 {
                for k in 0..dmax as u32 {
                    for l in 0..dmax as u32 {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (i, &z) in scheme.nodes.iter().enumerate() {
                            let kernel =
                                cols[i][k as usize] * cols[i][l as usize].conj() / PI;
                            acc += scheme.weights[i] * z.powu(m) * z.conj().powu(n) * kernel;
                        }
                        let closed = povm::moment_matrix_element(s, m, n, k, l)?;
                        let dev = (acc - Complex64::new(closed, 0.0)).norm();
                        if dev > worst {
                            worst = dev;
                            at = format!("(s={s},m={m},n={n},k={k},l={l})");
                        }
                    }
                }
            }
        }
        checks.push(Check::new(
            format!("moment_quadrature s={s} worst_at={at}"),
            worst,
            1e-7,
        ));
    }
    // Full-plane POVM element resolves the identity.
    for s in 0..=2u32 {
        let op = povm::povm_element(s, &Region::FullPlane, 8)?;
        let dev = op.max_abs_diff(&TruncatedOperator::identity(8)?);
        checks.push(Check::new(format!("povm_full_plane_identity s={s}"), dev, 1e-9));
    }
    Ok(checks)
}

/// Margin invariants: Gaussian position density, normalization, angular
/// uniformity, partition recombination, envelope domination.
fn margins_checks() -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let phi0 = margins::WavefunctionRep::fock(FockVector::number_state(0, 1)?)?;
    let mut worst = 0.0f64;
    for i in 0..=40 {
        let x = -4.0 + 0.2 * i as f64;
        let g = margins::unsharp_position_density(0, &phi0, x)?;
        let exact = (-x * x / 2.0).exp() / (2.0 * PI).sqrt();
        worst = worst.max((g - exact).abs());
    }
    checks.push(Check::new("position_density_gaussian s=0", worst, 1e-8));

    for s in 0..=2u32 {
        let total = margins::unsharp_position_prob(
            s,
            &phi0,
            &[(f64::NEG_INFINITY, f64::INFINITY)],
        )?;
        checks.push(Check::new(
            format!("position_density_mass s={s}"),
            (total - 1.0).abs(),
            1e-8,
        ));
    }

    let mut worst = 0.0f64;
    for (s, k, span) in [(0u32, 0u32, PI), (1, 1, PI / 2.0), (2, 0, 1.0)] {
        let v = margins::angular_margin_element(s, k, k, (0.0, span), (k + 1) as usize)?;
        worst = worst.max((v.re - span / (2.0 * PI)).abs().max(v.im.abs()));
    }
    checks.push(Check::new("angular_margin_uniform", worst, 1e-9));

    let pieces = [(0.0, 1.0), (1.0, 2.5), (2.5, f64::INFINITY)];
    let d = 5usize;
    let mut worst = 0.0f64;
    for k in 0..d as u32 {
        for l in 0..d as u32 {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(r0, r1) in &pieces {
                acc += margins::radial_margin_element(1, k, l, (r0, r1), d)?;
            }
            let expect = if k == l { 1.0 } else { 0.0 };
            worst = worst.max((acc - Complex64::new(expect, 0.0)).norm());
        }
    }
    checks.push(Check::new("radial_partition_identity s=1", worst, 1e-8));

    // Envelope domination: measured is the worst density excess over the
    // envelope (0 when dominated everywhere).
    let points = 129usize;
    let dx = 2.0 / (points - 1) as f64;
    let raw: Vec<Complex64> = (0..points)
        .map(|i| {
            let q = -1.0 + i as f64 * dx;
            Complex64::new((PI * q / 2.0).cos().powi(2), 0.0)
        })
        .collect();
    let norm2: f64 = raw.iter().map(Complex64::norm_sqr).sum::<f64>() * dx;
    let bump = margins::WavefunctionRep::grid(
        -1.0,
        dx,
        raw.iter().map(|v| v / norm2.sqrt()).collect(),
    )?;
    let mut worst = 0.0f64;
    for s in 0..=3u32 {
        for i in 0..=32 {
            let x = -4.0 + 0.25 * i as f64;
            let g = margins::unsharp_position_density(s, &bump, x)?;
            let env = margins::envelope_bound(s, &bump, x)?;
            worst = worst.max(g - env);
        }
    }
    checks.push(Check::new("envelope_dominates", worst.max(0.0), 0.0));

    Ok(checks)
}

/// Sampler calibration (standard-error units) and determinism.
fn sampler_checks() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let count = 20_000usize;
    for (s, expect) in [(0u32, 1.0f64), (1, 2.0)] {
        let phi = FockVector::number_state(0, 1)?;
        let samples = povm::sample_outcomes(s, &phi, count, 2024)?;
        let mean: f64 =
            samples.iter().map(Complex64::norm_sqr).sum::<f64>() / count as f64;
        let var: f64 = samples
            .iter()
            .map(|z| (z.norm_sqr() - mean).powi(2))
            .sum::<f64>()
            / (count as f64 - 1.0);
        let se = (var / count as f64).sqrt();
        checks.push(Check::new(
            format!("sampler_mean_norm_sqr s={s} phi=|0>"),
            (mean - expect).abs() / se,
            5.0,
        ));
    }
    let phi = FockVector::number_state(0, 1)?;
    let a = povm::sample_outcomes(0, &phi, 512, 7)?;
    let b = povm::sample_outcomes(0, &phi, 512, 7)?;
    let identical = a == b;
    checks.push(Check::new(
        "sampler_deterministic seed=7",
        if identical { 0.0 } else { 1.0 },
        0.0,
    ));
    Ok(checks)
}
