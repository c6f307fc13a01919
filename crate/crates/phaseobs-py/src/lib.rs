//! Python bindings: a thin veneer over the phaseobs crate. Regions are
//! passed as the same strings the CLI accepts; complex values cross the
//! boundary as Python complex numbers.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::str::FromStr;

use phaseobs::margins;
use phaseobs::moments;
use phaseobs::povm::{self, FockVector, TruncatedOperator};
use phaseobs::quadrature::Region;

fn to_py_err(e: phaseobs::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn number_state(level: u32) -> PyResult<FockVector> {
    FockVector::number_state(level, level as usize + 1).map_err(to_py_err)
}

/// Truncated operator on the number basis.
#[pyclass]
struct Operator {
    inner: TruncatedOperator,
}

#[pymethods]
impl Operator {
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn hermitian(&self) -> bool {
        self.inner.hermitian_flag()
    }

    fn entry(&self, k: usize, l: usize) -> PyResult<Complex64> {
        let d = self.inner.dim();
        if k >= d || l >= d {
            return Err(PyValueError::new_err(format!(
                "entry ({k},{l}) out of range for dim {d}"
            )));
        }
        Ok(self.inner.entry(k, l))
    }

    fn min_eigenvalue(&self) -> PyResult<f64> {
        self.inner.min_eigenvalue().map_err(to_py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Operator(dim={}, hermitian={})",
            self.inner.dim(),
            self.inner.hermitian_flag()
        )
    }
}

/// <k| A[m,n] |l> for the kernel generated by number state s.
#[pyfunction]
fn moment_matrix_element(s: u32, m: u32, n: u32, k: u32, l: u32) -> PyResult<f64> {
    povm::moment_matrix_element(s, m, n, k, l).map_err(to_py_err)
}

/// POVM element on a region (syntax: full | rect:x0,x1,y0,y1 | disk:cx,cy,r |
/// annulus:r0,r1,t0,t1 | halfplane:angle,offset), truncated to d levels.
#[pyfunction]
fn povm_element(s: u32, region: &str, d: usize) -> PyResult<Operator> {
    let region = Region::from_str(region).map_err(to_py_err)?;
    let inner = povm::povm_element(s, &region, d).map_err(to_py_err)?;
    Ok(Operator { inner })
}

/// Validates a region string and returns its canonical form.
#[pyfunction]
fn parse_region(region: &str) -> PyResult<String> {
    Ok(Region::from_str(region).map_err(to_py_err)?.to_string())
}

/// Outcome density of analyzed number state k under kernel level s at z.
#[pyfunction]
fn diagonal_density(s: u32, k: u32, z: Complex64) -> PyResult<f64> {
    povm::diagonal_density(s, k, z).map_err(to_py_err)
}

/// Position margin density of the analyzed number state `level`.
#[pyfunction]
fn unsharp_position_density(s: u32, level: u32, x: f64) -> PyResult<f64> {
    let phi = margins::WavefunctionRep::fock(number_state(level)?).map_err(to_py_err)?;
    margins::unsharp_position_density(s, &phi, x).map_err(to_py_err)
}

/// integral of e^{a|z|} against the (s, k) outcome density.
#[pyfunction]
fn exp_bound(s: u32, k: u32, a: f64) -> PyResult<f64> {
    povm::exp_bound_closed_form(s, k, a).map_err(to_py_err)
}

/// Whether the (s, k) outcome density is certified moment-determinate.
#[pyfunction]
fn determinacy_verdict(s: u32, k: u32) -> PyResult<bool> {
    let report =
        moments::determinacy_report(&povm::diagonal_measure(s, k)).map_err(to_py_err)?;
    Ok(report.determinate)
}

/// Deterministic outcome samples for the analyzed number state `level`.
#[pyfunction]
fn sample(s: u32, level: u32, count: usize, seed: u64) -> PyResult<Vec<Complex64>> {
    let phi = number_state(level)?;
    povm::sample_outcomes(s, &phi, count, seed).map_err(to_py_err)
}

#[pymodule]
fn phaseobs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Operator>()?;
    m.add_function(wrap_pyfunction!(moment_matrix_element, m)?)?;
    m.add_function(wrap_pyfunction!(povm_element, m)?)?;
    m.add_function(wrap_pyfunction!(parse_region, m)?)?;
    m.add_function(wrap_pyfunction!(diagonal_density, m)?)?;
    m.add_function(wrap_pyfunction!(unsharp_position_density, m)?)?;
    m.add_function(wrap_pyfunction!(exp_bound, m)?)?;
    m.add_function(wrap_pyfunction!(determinacy_verdict, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    Ok(())
}
