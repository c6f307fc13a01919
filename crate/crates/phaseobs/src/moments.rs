//! Moment sequences of positive measures on R or R^2: exact atomic sums,
//! grid quadrature, closed-form families, binomial translation identities,
//! marginal extraction, and exponential-boundedness determinacy diagnostics.
//!
//! Determinacy semantics: the verdict implements a sufficient condition
//! (existence of a > 0 with integral e^{a||x||} dmu < infinity, checked per
//! axis marginal). `false` means "not established", never "indeterminate".

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::specfun::binomial;
use crate::{Error, Result};

/// Default cap on |k|; beyond it floating factorial noise dominates atomic
/// sums with large coordinates.
pub const DEFAULT_MAX_ORDER: usize = 16;

/// Default floor of the witness search grid a = 1, 1/2, 1/4, ...
pub const DEFAULT_A_MIN: f64 = 9.5367431640625e-7; // 2^-20

/// Declared decay of a grid density beyond its window. Required for
/// exponential-bound questions: no finite grid can witness divergence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailEnvelope {
    /// Density vanishes outside the grid window.
    Compact,
    /// Density bounded by C e^{-beta x^2} beyond the window.
    Gaussian { beta: f64 },
    /// Density bounded below by c |x|^{-power} along the tail; dominates no
    /// exponential, so every e^{a|x|} integral diverges.
    Polynomial { power: f64 },
}

/// A density family with analytically known moments and exponential bounds
/// (implementations live next to the operator machinery).
pub trait ClosedFormDensity: Send + Sync {
    fn dim(&self) -> usize;
    /// Pointwise density value w.r.t. Lebesgue measure.
    fn eval(&self, x: &[f64]) -> f64;
    /// Moment integral x^k dmu, |k| arbitrary within f64 factorial range.
    fn moment(&self, k: &[usize]) -> Result<f64>;
    /// integral e^{a||x||} dmu; finite for every a for these families.
    fn exp_bound(&self, a: f64) -> Result<f64>;
    /// Serializable family descriptor, e.g. {"family": "...", "s": 1}.
    fn describe(&self) -> Value;
}

#[derive(Clone)]
pub enum MeasureBody {
    Atomic {
        /// (point, weight > 0) pairs.
        atoms: Vec<(Vec<f64>, f64)>,
    },
    Grid1 {
        x0: f64,
        dx: f64,
        values: Vec<f64>,
        tail: Option<TailEnvelope>,
    },
    Grid2 {
        x0: f64,
        y0: f64,
        dx: f64,
        dy: f64,
        rows: usize,
        cols: usize,
        /// Row-major: values[i * cols + j] is the density at
        /// (x0 + i dx, y0 + j dy).
        values: Vec<f64>,
        tails: [Option<TailEnvelope>; 2],
    },
    ClosedForm(Arc<dyn ClosedFormDensity>),
}

#[derive(Clone)]
pub struct MeasureRep {
    pub dim: usize,
    pub body: MeasureBody,
}

impl MeasureRep {
    pub fn atomic(dim: usize, atoms: Vec<(Vec<f64>, f64)>) -> Result<MeasureRep> {
        if dim == 0 || dim > 2 {
            return Err(Error::Domain(format!("measure dim must be 1 or 2, got {dim}")));
        }
        if atoms.is_empty() {
            return Err(Error::Domain("atomic measure needs at least one atom".into()));
        }
        for (p, w) in &atoms {
            if p.len() != dim {
                return Err(Error::Domain(format!(
                    "atom point has {} coordinates, measure dim is {dim}",
                    p.len()
                )));
            }
            if !(w.is_finite() && *w > 0.0) || p.iter().any(|c| !c.is_finite()) {
                return Err(Error::Domain("atoms need finite points and weights > 0".into()));
            }
        }
        Ok(MeasureRep {
            dim,
            body: MeasureBody::Atomic { atoms },
        })
    }

    pub fn grid_1d(
        x0: f64,
        dx: f64,
        values: Vec<f64>,
        tail: Option<TailEnvelope>,
    ) -> Result<MeasureRep> {
        if !(dx > 0.0) || !x0.is_finite() {
            return Err(Error::Domain("grid needs finite x0 and dx > 0".into()));
        }
        validate_grid_values(&values)?;
        Ok(MeasureRep {
            dim: 1,
            body: MeasureBody::Grid1 {
                x0,
                dx,
                values,
                tail,
            },
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn grid_2d(
        x0: f64,
        y0: f64,
        dx: f64,
        dy: f64,
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        tails: [Option<TailEnvelope>; 2],
    ) -> Result<MeasureRep> {
        if !(dx > 0.0 && dy > 0.0) || !x0.is_finite() || !y0.is_finite() {
            return Err(Error::Domain("grid needs finite origin and positive spacing".into()));
        }
        if rows * cols != values.len() {
            return Err(Error::Domain(format!(
                "grid shape {rows}x{cols} does not match {} values",
                values.len()
            )));
        }
        validate_grid_values(&values)?;
        Ok(MeasureRep {
            dim: 2,
            body: MeasureBody::Grid2 {
                x0,
                y0,
                dx,
                dy,
                rows,
                cols,
                values,
                tails,
            },
        })
    }

    pub fn closed_form(density: Arc<dyn ClosedFormDensity>) -> MeasureRep {
        MeasureRep {
            dim: density.dim(),
            body: MeasureBody::ClosedForm(density),
        }
    }
}

fn validate_grid_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Domain("grid needs at least one value".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Domain("grid density values must be finite and >= 0".into()));
    }
    if values.iter().all(|v| *v == 0.0) {
        return Err(Error::Domain("grid density has zero total mass".into()));
    }
    Ok(())
}

/// Moment c_k = integral x^k dmu with the default order cap.
pub fn moment(mu: &MeasureRep, k: &[usize]) -> Result<f64> {
    moment_with_limit(mu, k, DEFAULT_MAX_ORDER)
}

pub fn moment_with_limit(mu: &MeasureRep, k: &[usize], max_order: usize) -> Result<f64> {
    if k.len() != mu.dim {
        return Err(Error::Domain(format!(
            "multi-index has {} slots, measure dim is {}",
            k.len(),
            mu.dim
        )));
    }
    let total: usize = k.iter().sum();
    if total > max_order {
        return Err(Error::OrderLimit {
            requested: total,
            max: max_order,
        });
    }
    match &mu.body {
        MeasureBody::Atomic { atoms } => {
            let mut acc = crate::quadrature::Kahan::default();
            for (p, w) in atoms {
                let mut term = *w;
                for (x, &ki) in p.iter().zip(k) {
                    term *= x.powi(ki as i32);
                }
                acc.add(term);
            }
            Ok(acc.sum())
        }
        MeasureBody::Grid1 { x0, dx, values, .. } => {
            let mut acc = crate::quadrature::Kahan::default();
            for (i, v) in values.iter().enumerate() {
                let x = x0 + i as f64 * dx;
                acc.add(v * x.powi(k[0] as i32) * dx);
            }
            Ok(acc.sum())
        }
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
            let mut acc = crate::quadrature::Kahan::default();
            for i in 0..*rows {
                let x = x0 + i as f64 * dx;
                let xp = x.powi(k[0] as i32);
                for j in 0..*cols {
                    let y = y0 + j as f64 * dy;
                    acc.add(values[i * cols + j] * xp * y.powi(k[1] as i32) * cell);
                }
            }
            Ok(acc.sum())
        }
        MeasureBody::ClosedForm(cf) => cf.moment(k),
    }
}

pub fn total_mass(mu: &MeasureRep) -> Result<f64> {
    moment(mu, &vec![0; mu.dim])
}

/// Moment sequence up to a total order, entries on multi-indices.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSequence {
    dim: usize,
    max_order: usize,
    entries: BTreeMap<Vec<usize>, f64>,
}

impl MomentSequence {
    pub fn new(dim: usize, max_order: usize) -> MomentSequence {
        MomentSequence {
            dim,
            max_order,
            entries: BTreeMap::new(),
        }
    }

    pub fn from_measure(mu: &MeasureRep, max_order: usize) -> Result<MomentSequence> {
        let mut seq = MomentSequence::new(mu.dim, max_order);
        for k in multi_indices(mu.dim, max_order) {
            let v = moment_with_limit(mu, &k, max_order)?;
            seq.entries.insert(k, v);
        }
        Ok(seq)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn get(&self, k: &[usize]) -> Option<f64> {
        self.entries.get(k).copied()
    }

    pub fn set(&mut self, k: Vec<usize>, v: f64) -> Result<()> {
        if k.len() != self.dim {
            return Err(Error::Domain(format!(
                "multi-index has {} slots, sequence dim is {}",
                k.len(),
                self.dim
            )));
        }
        let total: usize = k.iter().sum();
        if total > self.max_order {
            return Err(Error::OrderLimit {
                requested: total,
                max: self.max_order,
            });
        }
        self.entries.insert(k, v);
        Ok(())
    }

    /// Deterministic (lexicographic) iteration.
    pub fn iter(&self) -> impl Iterator<Item = (&Vec<usize>, &f64)> {
        self.entries.iter()
    }

    pub fn total_mass(&self) -> Option<f64> {
        self.get(&vec![0; self.dim])
    }
}

/// All multi-indices of the given dimension with total order <= max_order,
/// lexicographically sorted.
pub fn multi_indices(dim: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; dim];
    fn rec(slot: usize, remaining: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slot == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=remaining {
            cur[slot] = v;
            rec(slot + 1, remaining - v, cur, out);
        }
        cur[slot] = 0;
    }
    rec(0, max_order, &mut cur, &mut out);
    out.sort();
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Binomial translation of a one-dimensional moment sequence: the moments of
/// the pushforward under x -> x + a are
/// c_k = sum_{i<=k} C(k,i) a^{k-i} c~_i (forward); the inverse direction is
/// the same relation with shift -a, i.e. signs (-1)^{k-i}.
pub fn translate_moments(
    c: &MomentSequence,
    a: f64,
    direction: Direction,
) -> Result<MomentSequence> {
    if c.dim != 1 {
        return Err(Error::Domain(format!(
            "translate_moments needs a one-dimensional sequence, got dim {}",
            c.dim
        )));
    }
    let shift = match direction {
        Direction::Forward => a,
        Direction::Inverse => -a,
    };
    let mut out = MomentSequence::new(1, c.max_order);
    for k in 0..=c.max_order {
        let mut acc = 0.0;
        for i in 0..=k {
            let ci = c.get(&[i]).ok_or_else(|| {
                Error::Domain(format!("sequence is missing entry {i} needed for order {k}"))
            })?;
            acc += binomial(k as u32, i as u32) * shift.powi((k - i) as i32) * ci;
        }
        out.entries.insert(vec![k], acc);
    }
    Ok(out)
}

/// Moments of the pushforward under x -> -x: c_k -> (-1)^k c_k. This is the
/// reflection reducing upper half-line supports to lower ones.
pub fn reflect_moments(c: &MomentSequence) -> Result<MomentSequence> {
    if c.dim != 1 {
        return Err(Error::Domain(
            "reflect_moments needs a one-dimensional sequence".into(),
        ));
    }
    let mut out = MomentSequence::new(1, c.max_order);
    for (k, &v) in c.iter() {
        let sign = if k[0] % 2 == 0 { 1.0 } else { -1.0 };
        out.entries.insert(k.clone(), sign * v);
    }
    Ok(out)
}

/// Moments of the axis marginal mu . pi_i^{-1}: slot i of the multi-index,
/// zeros elsewhere. No new integration.
pub fn marginal_moments(c: &MomentSequence, axis: usize) -> Result<MomentSequence> {
    if axis >= c.dim {
        return Err(Error::Domain(format!(
            "axis {axis} out of range for dim {}",
            c.dim
        )));
    }
    let mut out = MomentSequence::new(1, c.max_order);
    for k in 0..=c.max_order {
        let mut idx = vec![0usize; c.dim];
        idx[axis] = k;
        if let Some(v) = c.get(&idx) {
            out.entries.insert(vec![k], v);
        }
    }
    Ok(out)
}

/// Value of integral e^{a||x||} dmu, or a divergence verdict.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExpBound {
    Finite(f64),
    Divergent,
}

impl ExpBound {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExpBound::Finite(_))
    }
}

/// Exponential-moment integral. Grid reps contribute their window sum; the
/// declared tail envelope decides finite vs divergent (a polynomial tail is
/// dominated by no exponential). Undeclared tails are an error, never a
/// silent guess.
pub fn exp_bound_integral(mu: &MeasureRep, a: f64) -> Result<ExpBound> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("exp_bound_integral requires a > 0, got {a}")));
    }
    match &mu.body {
        MeasureBody::Atomic { atoms } => {
            let mut acc = crate::quadrature::Kahan::default();
            for (p, w) in atoms {
                let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                acc.add(w * (a * norm).exp());
            }
            Ok(ExpBound::Finite(acc.sum()))
        }
        MeasureBody::Grid1 { x0, dx, values, tail } => {
            check_tail(tail, 0)?;
            if let Some(TailEnvelope::Polynomial { .. }) = tail {
                return Ok(ExpBound::Divergent);
            }
            let mut acc = crate::quadrature::Kahan::default();
            for (i, v) in values.iter().enumerate() {
                let x = x0 + i as f64 * dx;
                acc.add(v * (a * x.abs()).exp() * dx);
            }
            Ok(ExpBound::Finite(acc.sum()))
        }
        MeasureBody::Grid2 {
            x0,
            y0,
            dx,
            dy,
            rows,
            cols,
            values,
            tails,
        } => {
            for (axis, t) in tails.iter().enumerate() {
                check_tail(t, axis)?;
            }
            if tails
                .iter()
                .any(|t| matches!(t, Some(TailEnvelope::Polynomial { .. })))
            {
                return Ok(ExpBound::Divergent);
            }
            let cell = dx * dy;
            let mut acc = crate::quadrature::Kahan::default();
            for i in 0..*rows {
                let x = x0 + i as f64 * dx;
                for j in 0..*cols {
                    let y = y0 + j as f64 * dy;
                    acc.add(values[i * cols + j] * (a * x.hypot(y)).exp() * cell);
                }
            }
            Ok(ExpBound::Finite(acc.sum()))
        }
        MeasureBody::ClosedForm(cf) => Ok(ExpBound::Finite(cf.exp_bound(a)?)),
    }
}

fn check_tail(tail: &Option<TailEnvelope>, axis: usize) -> Result<()> {
    match tail {
        None => Err(Error::UndecidableTail { axis }),
        Some(TailEnvelope::Gaussian { beta }) if !(*beta > 0.0) => Err(Error::Domain(
            format!("gaussian tail envelope needs beta > 0, got {beta}"),
        )),
        _ => Ok(()),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AxisReport {
    pub axis: usize,
    pub exp_bounded: bool,
    /// First a in the geometric search with a finite bound.
    pub witness: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeterminacyReport {
    pub per_axis: Vec<AxisReport>,
    /// True iff every axis marginal is exponentially bounded. Implements a
    /// sufficient condition: false means "not established".
    pub determinate: bool,
    pub a_min: f64,
}

pub fn determinacy_report(mu: &MeasureRep) -> Result<DeterminacyReport> {
    determinacy_report_with(mu, DEFAULT_A_MIN)
}

/// Searches a in {1, 1/2, 1/4, ...} down to a_min for each axis marginal.
pub fn determinacy_report_with(mu: &MeasureRep, a_min: f64) -> Result<DeterminacyReport> {
    if !(a_min > 0.0) {
        return Err(Error::Domain(format!("a_min must be > 0, got {a_min}")));
    }
    let mut per_axis = Vec::with_capacity(mu.dim);
    for axis in 0..mu.dim {
        let witness = axis_witness(mu, axis, a_min)?;
        per_axis.push(AxisReport {
            axis,
            exp_bounded: witness.is_some(),
            witness,
        });
    }
    let determinate = per_axis.iter().all(|r| r.exp_bounded);
    Ok(DeterminacyReport {
        per_axis,
        determinate,
        a_min,
    })
}

fn axis_witness(mu: &MeasureRep, axis: usize, a_min: f64) -> Result<Option<f64>> {
    let mut a = 1.0;
    while a >= a_min {
        let bound = match axis_marginal_measure(mu, axis)? {
            Some(marginal) => exp_bound_integral(&marginal, a)?,
            // Closed-form joint bound dominates each axis factor:
            // e^{a|x_i|} <= e^{a||x||}.
            None => exp_bound_integral(mu, a)?,
        };
        match bound {
            ExpBound::Finite(v) if v.is_finite() => return Ok(Some(a)),
            _ => a *= 0.5,
        }
    }
    Ok(None)
}

/// Explicit axis marginal where the rep supports it (atomic and grid bodies);
/// None for closed forms, whose joint bound is used instead.
pub fn axis_marginal_measure(mu: &MeasureRep, axis: usize) -> Result<Option<MeasureRep>> {
    if axis >= mu.dim {
        return Err(Error::Domain(format!(
            "axis {axis} out of range for dim {}",
            mu.dim
        )));
    }
    match &mu.body {
        MeasureBody::Atomic { atoms } => {
            let projected = atoms
                .iter()
                .map(|(p, w)| (vec![p[axis]], *w))
                .collect::<Vec<_>>();
            Ok(Some(MeasureRep::atomic(1, projected)?))
        }
        MeasureBody::Grid1 { .. } => Ok(Some(mu.clone())),
        MeasureBody::Grid2 {
            x0,
            y0,
            dx,
            dy,
            rows,
            cols,
            values,
            tails,
        } => {
            let (n, origin, step, other_step) = if axis == 0 {
                (*rows, *x0, *dx, *dy)
            } else {
                (*cols, *y0, *dy, *dx)
            };
            let mut marg = vec![0.0; n];
            for i in 0..*rows {
                for j in 0..*cols {
                    let slot = if axis == 0 { i } else { j };
                    marg[slot] += values[i * cols + j] * other_step;
                }
            }
            Ok(Some(MeasureRep::grid_1d(origin, step, marg, tails[axis])?))
        }
        MeasureBody::ClosedForm(_) => Ok(None),
    }
}

/// Truncated necessary test for equality of moment sequences: true iff all
/// moments with |k| <= max_order agree within tol * max(1, |c_k(mu)|).
pub fn moment_match(mu: &MeasureRep, nu: &MeasureRep, max_order: usize, tol: f64) -> Result<bool> {
    if mu.dim != nu.dim {
        return Err(Error::Domain(format!(
            "moment_match needs equal dims, got {} and {}",
            mu.dim, nu.dim
        )));
    }
    for k in multi_indices(mu.dim, max_order) {
        let a = moment_with_limit(mu, &k, max_order)?;
        let b = moment_with_limit(nu, &k, max_order)?;
        if (a - b).abs() > tol * a.abs().max(1.0) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// JSON form {dim, kind, payload}; closed forms serialize their family
/// descriptor.
pub fn measure_to_value(mu: &MeasureRep) -> Value {
    match &mu.body {
        MeasureBody::Atomic { atoms } => json!({
            "dim": mu.dim,
            "kind": "atomic",
            "payload": {
                "atoms": atoms.iter().map(|(p, w)| json!({"point": p, "weight": w})).collect::<Vec<_>>(),
            },
        }),
        MeasureBody::Grid1 { x0, dx, values, tail } => json!({
            "dim": 1,
            "kind": "grid_density",
            "payload": {"x0": x0, "dx": dx, "values": values, "tail": tail},
        }),
        MeasureBody::Grid2 {
            x0,
            y0,
            dx,
            dy,
            rows,
            cols,
            values,
            tails,
        } => json!({
            "dim": 2,
            "kind": "grid_density",
            "payload": {
                "x0": [x0, y0],
                "dx": [dx, dy],
                "shape": [rows, cols],
                "values": values,
                "tails": tails,
            },
        }),
        MeasureBody::ClosedForm(cf) => json!({
            "dim": mu.dim,
            "kind": "closed_form",
            "payload": cf.describe(),
        }),
    }
}

pub fn measure_to_json(mu: &MeasureRep) -> Result<String> {
    Ok(serde_json::to_string_pretty(&measure_to_value(mu))?)
}

/// Rebuilds a measure from its JSON form. Closed-form payloads are resolved
/// by the caller-supplied family resolver.
pub fn measure_from_value_with(
    value: &Value,
    resolve_closed_form: impl Fn(&Value) -> Result<Arc<dyn ClosedFormDensity>>,
) -> Result<MeasureRep> {
    let dim = value
        .get("dim")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::InvalidConfig("measure JSON missing integer 'dim'".into()))?
        as usize;
    let kind = value
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::InvalidConfig("measure JSON missing string 'kind'".into()))?;
    let payload = value
        .get("payload")
        .ok_or_else(|| Error::InvalidConfig("measure JSON missing 'payload'".into()))?;
    match kind {
        "atomic" => {
            let atoms = payload
                .get("atoms")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::InvalidConfig("atomic payload missing 'atoms'".into()))?
                .iter()
                .map(|a| {
                    let point = a
                        .get("point")
                        .and_then(Value::as_array)
                        .ok_or_else(|| Error::InvalidConfig("atom missing 'point'".into()))?
                        .iter()
                        .map(|c| {
                            c.as_f64().ok_or_else(|| {
                                Error::InvalidConfig("atom coordinate not a number".into())
                            })
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    let weight = a
                        .get("weight")
                        .and_then(Value::as_f64)
                        .ok_or_else(|| Error::InvalidConfig("atom missing 'weight'".into()))?;
                    Ok((point, weight))
                })
                .collect::<Result<Vec<_>>>()?;
            MeasureRep::atomic(dim, atoms)
        }
        "grid_density" => {
            let values = payload
                .get("values")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::InvalidConfig("grid payload missing 'values'".into()))?
                .iter()
                .map(|v| {
                    v.as_f64()
                        .ok_or_else(|| Error::InvalidConfig("grid value not a number".into()))
                })
                .collect::<Result<Vec<f64>>>()?;
            if dim == 1 {
                let x0 = f64_field(payload, "x0")?;
                let dx = f64_field(payload, "dx")?;
                let tail = tail_field(payload.get("tail"))?;
                MeasureRep::grid_1d(x0, dx, values, tail)
            } else {
                let origin = f64_pair(payload, "x0")?;
                let step = f64_pair(payload, "dx")?;
                let shape = payload
                    .get("shape")
                    .and_then(Value::as_array)
                    .filter(|a| a.len() == 2)
                    .ok_or_else(|| Error::InvalidConfig("2d grid payload missing 'shape'".into()))?;
                let rows = shape[0]
                    .as_u64()
                    .ok_or_else(|| Error::InvalidConfig("bad shape".into()))?
                    as usize;
                let cols = shape[1]
                    .as_u64()
                    .ok_or_else(|| Error::InvalidConfig("bad shape".into()))?
                    as usize;
                let tails_val = payload.get("tails").and_then(Value::as_array);
                let tails = match tails_val {
                    Some(a) if a.len() == 2 => {
                        [tail_field(Some(&a[0]))?, tail_field(Some(&a[1]))?]
                    }
                    None => [None, None],
                    _ => return Err(Error::InvalidConfig("'tails' must have 2 entries".into())),
                };
                MeasureRep::grid_2d(
                    origin.0, origin.1, step.0, step.1, rows, cols, values, tails,
                )
            }
        }
        "closed_form" => Ok(MeasureRep::closed_form(resolve_closed_form(payload)?)),
        other => Err(Error::InvalidConfig(format!("unknown measure kind '{other}'"))),
    }
}

fn f64_field(payload: &Value, name: &str) -> Result<f64> {
    payload
        .get(name)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::InvalidConfig(format!("grid payload missing number '{name}'")))
}

fn f64_pair(payload: &Value, name: &str) -> Result<(f64, f64)> {
    let arr = payload
        .get(name)
        .and_then(Value::as_array)
        .filter(|a| a.len() == 2)
        .ok_or_else(|| Error::InvalidConfig(format!("2d grid payload needs '{name}' = [a, b]")))?;
    let a = arr[0]
        .as_f64()
        .ok_or_else(|| Error::InvalidConfig(format!("bad '{name}'")))?;
    let b = arr[1]
        .as_f64()
        .ok_or_else(|| Error::InvalidConfig(format!("bad '{name}'")))?;
    Ok((a, b))
}

fn tail_field(v: Option<&Value>) -> Result<Option<TailEnvelope>> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(t) => Ok(Some(serde_json::from_value(t.clone())?)),
    }
}
