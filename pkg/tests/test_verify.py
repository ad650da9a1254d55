import pytest

from transflow import verify


def test_convergence_check_bands():
    assert verify.convergence_check("s", "n", 4e-3, 1e-3, "fd2").passed
    assert not verify.convergence_check("s", "n", 4e-3, 2e-3, "fd2").passed
    assert verify.convergence_check("s", "n", 1.6e-3, 1e-4, "fd4").passed
    assert not verify.convergence_check("s", "n", 4e-3, 1e-3, "fd4").passed


def test_convergence_check_spectral_floor():
    # both residuals at roundoff: the ratio carries no information
    assert verify.convergence_check("s", "n", 2e-14, 3e-14, "spectral").passed
    assert verify.convergence_check("s", "n", 1e-3, 1e-6, "spectral").passed
    assert not verify.convergence_check("s", "n", 1e-3, 9e-4, "spectral").passed


def test_check_row_format():
    row = verify._le("flow", "x", 1e-9, 1e-8).row()
    assert row.startswith("flow") and row.endswith("PASS")


@pytest.mark.parametrize("suite", verify.SUITES)
def test_suites_pass(suite):
    checks = verify.run_suite(suite, dims=16 if suite != "variation" else 32)
    failed = [c.row() for c in checks if not c.passed]
    assert not failed


@pytest.mark.parametrize("scheme, lo, hi", [("fd2", 3.0, 5.0), ("fd4", 12.0, 20.0)])
def test_finite_difference_suite_judged_by_order(scheme, lo, hi):
    # no refine size given: finite-difference schemes refine automatically
    checks = verify.operators_suite(32, scheme=scheme, scenario="conformal-taut")
    assert all(c.passed for c in checks)
    ratios = {c.name: c.value for c in checks if " ratio " in c.name}
    assert len(ratios) == 5
    assert lo <= ratios["Scal vs 2K ratio 32->64"] <= hi
    assert lo <= ratios["integration by parts ratio conformal-taut 32->64"] <= hi


def test_flat_chart_integration_by_parts_is_exact_for_all_schemes():
    for scheme in ("spectral", "fd4", "fd2"):
        assert verify.ibp_fixed_residual(32, scheme) < 1e-14


def test_unknown_suite():
    with pytest.raises(ValueError):
        verify.run_suite("everything")


def test_report_dict():
    checks = [verify._le("s", "a", 0.0, 1.0), verify._ge("s", "b", 0.0, 1.0)]
    rep = verify.report_dict(checks, "s", [16], 0, "spectral")
    assert rep["passed"] is False
    assert [c["passed"] for c in rep["checks"]] == [True, False]
