"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line (also collected into the
terminal summary) and asserts the criterion at its stated tolerance and
runtime budget.
"""

import math

import pytest

from thermogeo import selftest

LINES: dict[int, str] = {}


def _run(check, budget, **kwargs):
    res = check(**kwargs)
    ok = res.passed and res.seconds < budget
    line = res.line().replace("[PASS]" if res.passed else "[FAIL]", "[PASS]" if ok else "[FAIL]", 1)
    if res.seconds >= budget:
        line += f" (over the {budget:g}s budget)"
    LINES[res.number] = line
    print(line)
    return res


def test_criterion_01_local_bound():
    res = _run(selftest.check_local_bound, 5)
    assert res.details["closed_form_rel_dev"] < 1e-15
    assert res.details["shot_qubit_dev"] < 1e-4
    assert res.seconds < 5


def test_criterion_02_global_bound():
    res = _run(selftest.check_global_bound, 1)
    assert res.details["deviation_N40"] < 1e-4
    assert res.seconds < 1


def test_criterion_03_hellinger_equivalence():
    res = _run(selftest.check_hellinger_equivalence, 30)
    assert res.details["models"] == 20
    assert res.details["worst_rel_length_dev"] < 1e-6
    assert res.seconds < 30


@pytest.mark.slow
def test_criterion_04_all_to_all_scaling():
    res = _run(selftest.check_all_to_all_scaling, 600)
    d = res.details
    assert d["points"] == 19 and d["converged"] == 19
    assert 0.84 <= d["x"] <= 0.88
    assert abs(d["alpha"] - 2.20) <= 0.22
    assert d["relative_error"] <= 0.01
    assert res.seconds < 600


def test_criterion_05_chain_scaling():
    res = _run(selftest.check_chain_scaling, 120)
    d = res.details
    assert d["pointwise_dev"] < 1e-8
    assert d["per_N_spread"] < 1e-6
    assert abs(d["tbw_per_N"] - 1.69) / 1.69 <= 0.03
    assert res.seconds < 120


def test_criterion_06_star_construction():
    res = _run(selftest.check_star_plan, 10)
    d = res.details
    assert abs(d["measured_length"] - 1.5 * math.pi) < 1e-6
    assert d["tau_beta_w"] == pytest.approx(9 * math.pi**2 / 4, abs=1e-5)
    assert d["measured_length"] < 2 * math.pi
    assert res.seconds < 10


def test_criterion_07_pyramid_bounds():
    res = _run(selftest.check_pyramid, 5)
    assert res.details["table_max_dev"] == 0.0
    assert abs(res.details["fit_exponent"] - 2 / 3) <= 0.02
    assert res.seconds < 5


def test_criterion_08_fisher_markov():
    res = _run(selftest.check_fisher_markov, 10)
    assert res.details["chains"] == 200
    assert res.details["worst_rel_dev"] < 1e-10
    assert res.seconds < 10


def test_criterion_09_interaction_orders():
    res = _run(selftest.check_interaction_orders, 60)
    assert res.details["weakest_order_coupling"] > 1e-6
    assert res.details["alternating_pattern_rel_dev"] <= 4 * 2.220446049250313e-16
    assert res.seconds < 60


def test_criterion_10_oracles():
    res = _run(selftest.check_oracles, 120)
    d = res.details
    assert d["lnz_max_dev"] < 1e-10
    assert d["hessian_fd_rel_dev"] < 1e-6 and d["third_fd_rel_dev"] < 1e-6
    assert d["metric_min_eigenvalue"] > -1e-9
    assert d["christoffel_asymmetry"] == 0.0
    assert res.seconds < 120
