import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from thermogeo.analytic import (
    HellingerGeodesic,
    erasure_energy_table,
    erasure_length,
    full_control_geodesic,
    fundamental_wdiss,
    global_erasure_tbw,
    hellinger_angle,
    interaction_decompose,
    local_erasure_tbw,
    nbody_energies,
    nbody_gamma,
    popcount,
)
from thermogeo.geometry import integrate_geodesic
from thermogeo.models import FullControlModel

dists = st.integers(2, 6).flatmap(
    lambda n: st.lists(st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n).filter(lambda w: sum(w) > 1e-3), min_size=3, max_size=3)
)


def _norm(w):
    w = np.asarray(w, float)
    return w / w.sum()


def test_hellinger_values():
    assert hellinger_angle([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert hellinger_angle([0.5, 0.5], [1.0, 0.0]) == pytest.approx(math.pi / 2, rel=1e-15)
    for n in (1, 3, 8, 20):
        size = 2**n
        q = np.zeros(size)
        q[0] = 1
        assert hellinger_angle(np.full(size, 1 / size), q) == pytest.approx(2 * math.acos(2 ** (-n / 2)), rel=1e-13)
        assert erasure_length(n) == pytest.approx(2 * math.acos(2 ** (-n / 2)), rel=1e-15)
    with pytest.raises(ValueError, match="length mismatch"):
        hellinger_angle([0.5, 0.5], [1 / 3] * 3)


@settings(max_examples=60)
@given(dists)
def test_hellinger_is_a_metric(triple):
    p, q, r = (_norm(w) for w in triple)
    assert hellinger_angle(p, q) == pytest.approx(hellinger_angle(q, p), abs=1e-12)
    assert hellinger_angle(p, r) <= hellinger_angle(p, q) + hellinger_angle(q, r) + 1e-12
    assert 0.0 <= hellinger_angle(p, q) <= math.pi + 1e-12


def test_erasure_bounds():
    assert local_erasure_tbw(7) == 7 * math.pi**2 / 4
    # the approach to pi^2 is 4 pi 2^(-N/2) to leading order
    for n in (20, 30, 40):
        gap = math.pi**2 - global_erasure_tbw(n)
        assert gap == pytest.approx(4 * math.pi * 2 ** (-n / 2), rel=2e-3)
    assert abs(global_erasure_tbw(40) - math.pi**2) < 1e-4
    assert fundamental_wdiss([0.5, 0.5], [1, 0], tau=2.0, beta=0.5) == pytest.approx(math.pi**2 / 4)


@settings(max_examples=60)
@given(dists)
def test_fundamental_bound_never_exceeds_pi_squared(triple):
    p, q, _ = (_norm(w) for w in triple)
    assert fundamental_wdiss(p, q) <= math.pi**2 + 1e-12


@settings(max_examples=40)
@given(dists, st.floats(0.0, 1.0))
def test_u_symmetry(triple, s):
    p, q, _ = (_norm(w) for w in triple)
    assume(hellinger_angle(p, q) < math.pi - 1e-6)
    geo = HellingerGeodesic(p, q)
    assert geo.u(s) + geo.u(1 - s) == pytest.approx(1.0, abs=1e-9)


def test_geodesic_endpoints_and_midpoint():
    p, q = np.array([0.5, 0.5]), np.array([1.0, 0.0])
    geo = HellingerGeodesic(p, q)
    assert geo.u(0.5) == pytest.approx(0.5)
    assert np.allclose(geo.states([0.0, 1.0]), [p, q], atol=1e-15)
    # midpoint of a great circle bisects the angle between sqrt(p) and sqrt(q)
    mid = (np.sqrt(p) + np.sqrt(q)) ** 2
    assert np.allclose(geo.states(0.5)[0], mid / mid.sum(), atol=1e-14)


def test_qubit_midpoint_matches_integrated_geodesic():
    p, q = np.array([0.5, 0.5]), np.array([0.999, 0.001])
    geo = HellingerGeodesic(p, q)
    model = FullControlModel([1, 1], fix_gauge=True)
    sol = integrate_geodesic(model, model.point_from_probs(p), geo.energy_velocity(0.0)[0, 1:], steps=4000)
    mid = model.thermal_state(sol.trajectory.points[2000]).probs
    assert np.allclose(mid, geo.states(0.5)[0], atol=1e-6)


def test_qubit_energies_follow_log_tan():
    p, q = np.array([0.5, 0.5]), np.array([1.0, 0.0])
    t = np.linspace(0.0, 0.99, 50)
    _, _, energies = full_control_geodesic(p, q, 1.0, grid=t)
    assert np.allclose(energies[:, 1] - energies[:, 0], 2 * np.log(np.tan(np.pi * (t + 1) / 4)), atol=1e-10)


def test_orthogonal_pure_endpoints_rejected():
    with pytest.raises(ValueError, match="undefined geodesic interior"):
        full_control_geodesic([1.0, 0.0], [0.0, 1.0])


def test_nbody_gamma_values():
    assert nbody_gamma(0.0, 1.0, 4) == 0.0
    assert nbody_gamma(0.5, 1.0, 2) == pytest.approx(2 * math.log(3), rel=1e-15)
    with pytest.raises(ValueError, match="endpoint divergence"):
        nbody_gamma(1.0, 1.0, 3)


def test_exact_nbody_protocol_has_constant_speed():
    n = 5
    mult = np.array([1, 2**n - 1])
    t = np.linspace(0.0, 0.95, 400)
    gam = nbody_gamma(t, 1.0, n, exact=True)
    probs = np.column_stack([np.ones_like(gam), mult[1] * np.exp(-gam)])
    probs /= probs.sum(axis=1, keepdims=True)
    steps = [hellinger_angle(a, b) for a, b in zip(probs[:-1], probs[1:])]
    assert np.ptp(steps) / np.mean(steps) < 1e-6
    # and matches the full-control erasure geodesic
    table = erasure_energy_table(0.3, 1.0, n)
    assert table[1] == pytest.approx(nbody_gamma(0.3, 1.0, n, exact=True), rel=1e-12)


def test_two_spin_decomposition_by_hand():
    g = 1.3
    dec = interaction_decompose(nbody_energies(g, 2))
    assert dec.coefficient([0]) == pytest.approx(g)
    assert dec.coefficient([1]) == pytest.approx(g)
    assert dec.coefficient([0, 1]) == pytest.approx(-g)


@pytest.mark.parametrize("n", [3, 6, 10])
def test_alternating_pattern(n):
    g = nbody_gamma(0.4, 1.0, n)
    dec = interaction_decompose(nbody_energies(g, n))
    orders = popcount(np.arange(2**n))
    expected = np.where(orders == 0, 0.0, (-1.0) ** (orders + 1) * g)
    assert np.abs(dec.coefficients - expected).max() <= 4 * np.finfo(float).eps * g * n


def test_additive_energies_have_no_couplings(rng):
    n = 6
    e = rng.normal(size=n)
    masks = np.arange(2**n)
    energies = np.array([sum(e[i] for i in range(n) if m >> i & 1) for m in masks])
    dec = interaction_decompose(energies)
    assert np.abs(dec.coefficients[popcount(masks) >= 2]).max() < 1e-10


@pytest.mark.parametrize("n", range(3, 11))
def test_full_control_erasure_needs_every_order(n):
    for s in (1 / 6, 2 / 6, 3 / 6, 4 / 6, 5 / 6):
        dec = interaction_decompose(erasure_energy_table(s, 1.0, n))
        by_order = dec.max_by_order()
        assert all(by_order[k] > 1e-6 for k in range(2, n + 1))


@settings(max_examples=30)
@given(st.integers(1, 7), st.integers(0, 2**31 - 1))
def test_decompose_round_trip(n, seed):
    energies = np.random.default_rng(seed).normal(size=2**n)
    assert np.allclose(interaction_decompose(energies).reconstruct(), energies, atol=1e-12)


def test_decompose_input_checks():
    with pytest.raises(ValueError, match="missing energies"):
        interaction_decompose({0: 0.0, 1: 1.0, 3: 2.0})
    with pytest.raises(ValueError):
        interaction_decompose([0.0, 1.0, 2.0])
    dec = interaction_decompose({(): 0.0, (0,): 1.0, (1,): 1.0, (0, 1): 1.0})
    assert dec.coefficient([0, 1]) == pytest.approx(-1.0)
