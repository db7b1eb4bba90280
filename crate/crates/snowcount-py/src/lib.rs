//! Python bindings for `snowcount`.
//!
//! Structured results are returned as plain Python dictionaries and lists.
//! The [`api`] module holds the conversions in plain Rust so they can be
//! tested without an interpreter.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(snowcount_py, SnowcountError, PyException, "Error raised by the snowcount core library.");

/// Plain-Rust layer behind the Python functions.
pub mod api {
    use serde_json::{json, Value};
    use snowcount::constants::domain_ledger;
    use snowcount::counting::{count_cube, BoundReport, Boundary, CountQuery, SliceConvention};
    use snowcount::eigensolver::{lambda2_extrapolated, GridMask, DEFAULT_TOL};
    use snowcount::foliation::build_cover;
    use snowcount::ifs_geometry::{build_snowflake, DomainKind};
    use snowcount::whitney::{build_whitney, required_level};
    use snowcount::{Error, Result};

    /// Parses a domain label `K` or `R`.
    pub fn kind(label: &str) -> Result<DomainKind> {
        match label {
            "K" | "k" => Ok(DomainKind::TriangleK),
            "R" | "r" => Ok(DomainKind::SquareR),
            other => Err(Error::Domain(format!("kind must be K or R, got `{other}`"))),
        }
    }

    /// Parses a boundary condition name.
    pub fn boundary(label: &str) -> Result<Boundary> {
        match label {
            "neumann" => Ok(Boundary::Neumann),
            "dirichlet" => Ok(Boundary::Dirichlet),
            other => Err(Error::Domain(format!("bc must be neumann or dirichlet, got `{other}`"))),
        }
    }

    /// Parses a slice convention name.
    pub fn convention(label: &str) -> Result<SliceConvention> {
        match label {
            "published" => Ok(SliceConvention::Published),
            "tight" => Ok(SliceConvention::Tight),
            other => Err(Error::Domain(format!("convention must be published or tight, got `{other}`"))),
        }
    }

    /// Closed polygon vertices of `K(p)` or `R(p)`.
    pub fn snowflake_polygon(kind_label: &str, p: f64, level: u32) -> Result<Vec<(f64, f64)>> {
        Ok(build_snowflake(kind(kind_label)?, p, level)?.polygon().into_iter().map(|v| (v.x, v.y)).collect())
    }

    /// The constants ledger as JSON.
    pub fn constants_ledger(kind_label: &str, p: f64) -> Result<Value> {
        Ok(serde_json::to_value(domain_ledger(kind(kind_label)?, p)?)?)
    }

    /// Exact eigenvalue count of the cube of side `side` in dimension `n`.
    pub fn cube_count(n: usize, side: f64, t: f64, bc: &str) -> Result<u64> {
        count_cube(&CountQuery::new(n, side, t, boundary(bc)?)?)
    }

    fn report(kind_label: &str, p: f64, conv: &str) -> Result<BoundReport> {
        let ledger = domain_ledger(kind(kind_label)?, p)?;
        BoundReport::from_ledger(&format!("{kind_label}({p})"), &ledger, convention(conv)?)
    }

    /// The two-sided bound report as JSON.
    pub fn bound_report(kind_label: &str, p: f64, conv: &str) -> Result<Value> {
        Ok(serde_json::to_value(report(kind_label, p, conv)?)?)
    }

    /// Rows `(t, upper, lower, weyl_term)` on a log-spaced sweep.
    pub fn bound_sample(kind_label: &str, p: f64, conv: &str, t_min: f64, t_max: f64, steps: usize) -> Result<Vec<(f64, f64, f64, f64)>> {
        Ok(report(kind_label, p, conv)?.sample(t_min, t_max, steps)?.into_iter().map(|r| (r[0], r[1], r[2], r[3])).collect())
    }

    /// Certificate summary of the cover of `Ω₋ε`.
    pub fn cover_summary(kind_label: &str, p: f64, epsilon: f64, level: u32) -> Result<Value> {
        Ok(build_cover(&build_snowflake(kind(kind_label)?, p, level)?, epsilon)?.summary_json())
    }

    /// Whitney cover statistics down to dyadic level `k_max`.
    pub fn whitney_summary(kind_label: &str, p: f64, k_max: i32) -> Result<Value> {
        let dom = build_snowflake(kind(kind_label)?, p, required_level(p, k_max))?;
        let cover = build_whitney(&dom, k_max)?;
        let slices: Vec<Value> = cover.slice_counts.iter().map(|(k, c)| json!([k, c])).collect();
        Ok(json!({
            "cubes": cover.cubes.len(),
            "slice_counts": slices,
            "k_range": [cover.k_range.0, cover.k_range.1],
            "volume": cover.volume(),
            "sandwich_pass_rate": cover.sandwich_pass_rate(),
        }))
    }

    /// Neumann `λ₂` of an `a × b` rectangle on grids `h`, `h/2` with Richardson extrapolation.
    pub fn rectangle_lambda2(a: f64, b: f64, h: f64) -> Result<Value> {
        Ok(serde_json::to_value(lambda2_extrapolated(|hh| GridMask::rectangle(a, b, hh), h, DEFAULT_TOL)?)?)
    }

    /// Neumann `λ₂` of the disk of radius `radius`, extrapolated as for rectangles.
    pub fn disk_lambda2(radius: f64, h: f64) -> Result<Value> {
        Ok(serde_json::to_value(lambda2_extrapolated(|hh| GridMask::disk(radius, hh), h, DEFAULT_TOL)?)?)
    }
}

fn err(e: snowcount::Error) -> PyErr {
    SnowcountError::new_err(format!("{}: {e}", e.kind()))
}

fn to_py(py: Python<'_>, v: serde_json::Value) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(&v).map_err(|e| SnowcountError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Upper inner Minkowski dimension `log 4 / log(1/p)` of the p-Koch curve.
#[pyfunction]
fn minkowski_dimension(p: f64) -> PyResult<f64> {
    snowcount::minkowski::minkowski_dimension(p).map_err(err)
}

/// Certified upper bound on the inner tube volume of the classic snowflake.
#[pyfunction]
fn lapidus_pearse_bound(epsilon: f64) -> PyResult<f64> {
    snowcount::minkowski::lapidus_pearse_bound(epsilon).map_err(err)
}

/// Closed polygon of `K(p)` (kind "K") or `R(p)` (kind "R") as `(x, y)` tuples.
#[pyfunction]
#[pyo3(signature = (kind, p, level))]
fn snowflake_polygon(kind: &str, p: f64, level: u32) -> PyResult<Vec<(f64, f64)>> {
    api::snowflake_polygon(kind, p, level).map_err(err)
}

/// Constants ledger of a supported domain as a dictionary.
#[pyfunction]
#[pyo3(signature = (kind = "K", p = 1.0 / 3.0))]
fn constants_ledger(py: Python<'_>, kind: &str, p: f64) -> PyResult<Py<PyAny>> {
    to_py(py, api::constants_ledger(kind, p).map_err(err)?)
}

/// Exact Neumann or Dirichlet eigenvalue count of the cube `side·[0,1]^n` up to `t`.
#[pyfunction]
#[pyo3(signature = (n, side, t, bc = "neumann"))]
fn count_cube(n: usize, side: f64, t: f64, bc: &str) -> PyResult<u64> {
    api::cube_count(n, side, t, bc).map_err(err)
}

/// Two-sided counting-function bound report as a dictionary.
#[pyfunction]
#[pyo3(signature = (kind = "K", p = 1.0 / 3.0, convention = "published"))]
fn bound_report(py: Python<'_>, kind: &str, p: f64, convention: &str) -> PyResult<Py<PyAny>> {
    to_py(py, api::bound_report(kind, p, convention).map_err(err)?)
}

/// Rows `(t, upper, lower, weyl_term)` on a log-spaced sweep of `[t_min, t_max]`.
#[pyfunction]
#[pyo3(signature = (t_min, t_max, steps, kind = "K", p = 1.0 / 3.0, convention = "published"))]
fn bound_sample(t_min: f64, t_max: f64, steps: usize, kind: &str, p: f64, convention: &str) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    api::bound_sample(kind, p, convention, t_min, t_max, steps).map_err(err)
}

/// Summary of the well-covered certificate of the inner tube of width `epsilon`.
#[pyfunction]
#[pyo3(signature = (epsilon, kind = "K", p = 1.0 / 3.0, level = 6))]
fn cover_summary(py: Python<'_>, epsilon: f64, kind: &str, p: f64, level: u32) -> PyResult<Py<PyAny>> {
    to_py(py, api::cover_summary(kind, p, epsilon, level).map_err(err)?)
}

/// Whitney cover statistics down to dyadic level `k_max`.
#[pyfunction]
#[pyo3(signature = (k_max, kind = "K", p = 1.0 / 3.0))]
fn whitney_summary(py: Python<'_>, k_max: i32, kind: &str, p: f64) -> PyResult<Py<PyAny>> {
    to_py(py, api::whitney_summary(kind, p, k_max).map_err(err)?)
}

/// Extrapolated Neumann `λ₂` of an `a × b` rectangle.
#[pyfunction]
fn rectangle_lambda2(py: Python<'_>, a: f64, b: f64, h: f64) -> PyResult<Py<PyAny>> {
    to_py(py, api::rectangle_lambda2(a, b, h).map_err(err)?)
}

/// Extrapolated Neumann `λ₂` of a disk.
#[pyfunction]
fn disk_lambda2(py: Python<'_>, radius: f64, h: f64) -> PyResult<Py<PyAny>> {
    to_py(py, api::disk_lambda2(radius, h).map_err(err)?)
}

/// The `snowcount_py` extension module.
#[pymodule]
pub fn snowcount_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SnowcountError", m.py().get_type::<SnowcountError>())?;
    m.add_function(wrap_pyfunction!(minkowski_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(lapidus_pearse_bound, m)?)?;
    m.add_function(wrap_pyfunction!(snowflake_polygon, m)?)?;
    m.add_function(wrap_pyfunction!(constants_ledger, m)?)?;
    m.add_function(wrap_pyfunction!(count_cube, m)?)?;
    m.add_function(wrap_pyfunction!(bound_report, m)?)?;
    m.add_function(wrap_pyfunction!(bound_sample, m)?)?;
    m.add_function(wrap_pyfunction!(cover_summary, m)?)?;
    m.add_function(wrap_pyfunction!(whitney_summary, m)?)?;
    m.add_function(wrap_pyfunction!(rectangle_lambda2, m)?)?;
    m.add_function(wrap_pyfunction!(disk_lambda2, m)?)?;
    Ok(())
}
