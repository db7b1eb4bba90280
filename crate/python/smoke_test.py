"""Smoke test for the snowcount Python bindings.

Build and install the extension first, for example with
``pip install --no-build-isolation ./crates/snowcount-py`` (requires maturin),
then run ``python python/smoke_test.py``.
"""

import math
import sys

import snowcount_py as sc


def main() -> int:
    delta = sc.minkowski_dimension(1 / 3)
    assert abs(delta - math.log(4) / math.log(3)) < 1e-15

    ledger = sc.constants_ledger()
    assert abs(ledger["c3"] / 1354 - 1) < 0.01, ledger["c3"]
    assert ledger["m_omega"] <= 104325.5, ledger["m_omega"]
    assert 0.0030 <= ledger["c1"] <= 0.0031, ledger["c1"]

    rows = sc.bound_sample(0.1, 1e4, 21)
    assert len(rows) == 21
    assert all(upper >= lower for _, upper, lower, _ in rows)

    assert sc.count_cube(2, 1.0, 100.0, "dirichlet") == 6
    assert len(sc.snowflake_polygon("R", 0.3, 2)) == 64

    cover = sc.cover_summary(0.05)
    assert cover["cardinality"] == 30, cover["cardinality"]

    square = sc.rectangle_lambda2(1.0, 1.0, 1 / 16)
    assert abs(square["extrapolated"] / math.pi**2 - 1) < 0.01

    try:
        sc.constants_ledger("K", 0.3)
    except sc.SnowcountError as exc:
        assert "unsupported" in str(exc)
    else:
        raise AssertionError("expected SnowcountError for K(0.3)")

    print(f"ok: delta={delta:.7f} C3={ledger['c3']:.3f} M={ledger['m_omega']:.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
