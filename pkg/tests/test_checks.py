import math

from spdml import objective as obj
from spdml.checks import format_report, run_checks


def by_name(results):
    return {r.name: r for r in results}


def test_all_pass():
    results = run_checks()
    assert all(r.passed for r in results), format_report(results)
    names = set(by_name(results))
    assert {"affine-invariance", "rotation-invariance", "gradient", "orthonormality", "ratio-limit"} <= names


def test_stein_sign_flip_detected():
    flipped = {"stein": lambda W, a, b: -obj.stein_pair_jacobian(W, a, b)}
    res = by_name(run_checks(jacobians=flipped))
    assert not res["gradient"].passed
    assert res["affine-invariance"].passed


def test_airm_factor_error_detected():
    halved = {"airm": lambda W, a, b: 0.5 * obj.airm_pair_jacobian(W, a, b)}
    assert not by_name(run_checks(jacobians=halved))["gradient"].passed


def test_report_lists_scale():
    results = run_checks()
    scale = by_name(results)["ratio-scale"]
    assert abs(scale.measured - 2 * math.sqrt(2)) <= 1e-4
    report = format_report(results)
    assert "2.82842" in report
    assert report.count("PASS") == len(results)
