use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};
use snowcount_py::api;

fn module(py: Python<'_>) -> Bound<'_, PyModule> {
    let m = PyModule::new(py, "snowcount_py").unwrap();
    snowcount_py::snowcount_py(&m).unwrap();
    m
}

#[test]
fn api_parsers_reject_unknown_labels() {
    assert!(api::kind("K").is_ok() && api::kind("R").is_ok());
    assert!(api::kind("Q").is_err());
    assert!(api::boundary("robin").is_err());
    assert!(api::convention("loose").is_err());
}

#[test]
fn api_results_match_the_core_library() {
    let poly = api::snowflake_polygon("K", 1.0 / 3.0, 1).unwrap();
    assert_eq!(poly.len(), 12);
    let ledger = api::constants_ledger("K", 1.0 / 3.0).unwrap();
    let c3 = ledger["c3"].as_f64().unwrap();
    assert!((c3 / 1354.0 - 1.0).abs() < 0.01);
    assert_eq!(api::cube_count(2, 1.0, 100.0, "dirichlet").unwrap(), 6);
    assert_eq!(api::cube_count(1, 1.0, 10.0, "neumann").unwrap(), 2);
    let rows = api::bound_sample("K", 1.0 / 3.0, "published", 0.1, 1e4, 9).unwrap();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r.1 >= r.2));
    let report = api::bound_report("R", 0.3, "tight").unwrap();
    assert_eq!(report["absolute"]["convention"], "tight");
    let cover = api::cover_summary("K", 1.0 / 3.0, 0.05, 5).unwrap();
    assert_eq!(cover["cardinality"], 30);
    let w = api::whitney_summary("K", 1.0 / 3.0, 5).unwrap();
    assert_eq!(w["sandwich_pass_rate"], 1.0);
    let sq = api::rectangle_lambda2(1.0, 1.0, 1.0 / 16.0).unwrap();
    assert!((sq["extrapolated"].as_f64().unwrap() / std::f64::consts::PI.powi(2) - 1.0).abs() < 0.01);
    assert!(api::constants_ledger("K", 0.3).is_err());
}

#[test]
fn python_module_round_trip() {
    Python::initialize();
    Python::attach(|py| {
        let m = module(py);
        let d: f64 = m.getattr("minkowski_dimension").unwrap().call1((1.0 / 3.0,)).unwrap().extract().unwrap();
        assert!((d - 4f64.ln() / 3f64.ln()).abs() < 1e-15);
        let ledger = m.getattr("constants_ledger").unwrap().call0().unwrap();
        let ledger = ledger.cast::<PyDict>().unwrap();
        let m_omega: f64 = ledger.get_item("m_omega").unwrap().unwrap().extract().unwrap();
        assert!(m_omega <= 104_325.5);
        let n: u64 = m.getattr("count_cube").unwrap().call1((2, 1.0, 2.5 * std::f64::consts::PI.powi(2))).unwrap().extract().unwrap();
        assert_eq!(n, 4);
        let e = m.getattr("constants_ledger").unwrap().call1(("K", 0.3)).unwrap_err();
        assert!(e.is_instance_of::<snowcount_py::SnowcountError>(py));
        assert!(e.to_string().contains("unsupported"));
        let poly: Vec<(f64, f64)> = m.getattr("snowflake_polygon").unwrap().call1(("R", 0.3, 2)).unwrap().extract().unwrap();
        assert_eq!(poly.len(), 64);
    });
}
