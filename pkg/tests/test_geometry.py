import math

import numpy as np
import pytest

from thermogeo.analytic import hellinger_angle
from thermogeo.core import Trajectory, dissipation_along_curve
from thermogeo.geometry import (
    christoffel_at,
    geodesic_residual,
    integrate_geodesic,
    metric_at,
    shoot_geodesic,
)
from thermogeo.models import AllToAllModel, FullControlModel, IndependentSpinsModel, IsingChainModel


@pytest.fixture(scope="module")
def a2a_solution():
    return shoot_geodesic(AllToAllModel(10), eps_final=4.0)


def test_two_level_metric():
    for beta in (1.0, 2.5):
        g = metric_at(FullControlModel([1, 1]), [0.0, 0.0], beta)
        assert np.allclose(g, beta**2 * np.array([[0.25, -0.25], [-0.25, 0.25]]), atol=1e-15)


def test_frozen_metric_vanishes():
    g = metric_at(AllToAllModel(5), [40.0, 0.3])
    assert np.abs(g).max() < 1e-20


def test_qubit_christoffel_closed_form():
    model = IndependentSpinsModel(1)
    for beta in (1.0, 0.5):
        for eps in (-1.3, 0.0, 0.7, 2.0):
            gam = christoffel_at(model, [eps], beta)
            assert gam.ravel()[0] == pytest.approx(-beta * math.tanh(beta * eps), rel=1e-12, abs=1e-15)


def test_christoffel_lower_indices_symmetric(rng):
    model = AllToAllModel(5)
    for _ in range(10):
        gam = christoffel_at(model, rng.uniform(-1, 1, 2))
        assert np.array_equal(gam, gam.transpose(0, 2, 1))


def test_zero_velocity_is_constant():
    sol = integrate_geodesic(AllToAllModel(4), [0.2, 0.1], [0.0, 0.0], steps=100)
    assert sol.length == 0.0
    assert np.all(sol.trajectory.points == [0.2, 0.1])


def test_target_at_start_is_trivial():
    sol = shoot_geodesic(AllToAllModel(4), eps_final=0.0)
    assert sol.length == 0.0 and sol.converged


def test_qubit_large_field_matches_closed_form():
    sol = shoot_geodesic(IndependentSpinsModel(1), eps_final=1e6)
    t = sol.trajectory.times
    keep = t < 0.999
    expected = np.log(np.tan(np.pi * (t[keep] + 1) / 4))
    assert np.abs(sol.trajectory.points[keep, 0] - expected).max() < 1e-4
    assert sol.tau_beta_w == pytest.approx(math.pi**2 / 4, abs=1e-4)


def test_full_control_integrated_length_is_hellinger(rng):
    for _ in range(3):
        mult = rng.integers(1, 4, 3)
        p, q = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
        from thermogeo.analytic import HellingerGeodesic

        geo = HellingerGeodesic(p, q, multiplicities=mult)
        model = FullControlModel(mult, fix_gauge=True)
        sol = integrate_geodesic(model, model.point_from_probs(p), geo.energy_velocity(0.0)[0, 1:], steps=4000)
        assert sol.length == pytest.approx(hellinger_angle(p, q), rel=1e-6)
        assert np.allclose(model.thermal_state(sol.trajectory.points[-1]).probs, q, atol=1e-9)


def test_all_to_all_protocol_shape(a2a_solution):
    sol = a2a_solution
    pts = sol.trajectory.points
    assert sol.converged
    assert pts[-1, 0] == pytest.approx(4.0, abs=1e-6)
    assert abs(pts[-1, 1]) < 1e-6
    # the coupling leaves zero and comes back; ferromagnetic sign in this convention
    assert pts[len(pts) // 2, 1] < -0.1
    assert sol.speed_variation() < 1e-4


def test_geodesic_residual_is_small(a2a_solution):
    # the last few percent sweep the field through a near-frozen region faster
    # than the uniform output grid resolves; check where differences are meaningful
    traj = a2a_solution.trajectory
    keep = traj.times <= 0.95 * traj.tau
    sub = Trajectory(traj.times[keep], traj.points[keep])
    res, _ = geodesic_residual(AllToAllModel(10), sub)
    h = sub.times[1] - sub.times[0]
    acc = np.abs(np.diff(sub.points, 2, axis=0)).max() / h**2
    assert res < 1e-4 * acc


def test_step_halving(a2a_solution):
    coarse = shoot_geodesic(AllToAllModel(10), eps_final=4.0, steps=2000)
    assert coarse.length == pytest.approx(a2a_solution.length, rel=1e-7)


def test_perturbed_path_dissipates_more(a2a_solution):
    model = AllToAllModel(10)
    traj = a2a_solution.trajectory
    base = dissipation_along_curve(model, traj)
    s = traj.times / traj.tau
    for amp in (0.05, -0.05):
        bumped = traj.points.copy()
        bumped[:, 1] += amp * np.sin(np.pi * s)
        other = dissipation_along_curve(model, Trajectory(traj.times, bumped))
        assert other.w_diss > base.w_diss


def test_chain_geodesic_independent_of_n():
    a = shoot_geodesic(IsingChainModel(5), eps_final=5.0)
    b = shoot_geodesic(IsingChainModel(50), eps_final=5.0)
    assert np.abs(a.trajectory.points - b.trajectory.points).max() < 1e-8
    assert a.tau_beta_w / 5 == pytest.approx(b.tau_beta_w / 50, rel=1e-6)


def test_rejects_three_parameter_models():
    from thermogeo.models import StarModel

    with pytest.raises(ValueError):
        shoot_geodesic(StarModel(3))
