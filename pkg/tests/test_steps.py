import math

import numpy as np
import pytest

from thermogeo.models import PyramidSpec
from thermogeo.steps import (
    ChainDifferential,
    ConditionalChain,
    fisher_quadratic,
    fisher_terms,
    five_step_plan,
    pyramid_bound,
    simulate_step_plan,
    star_erasure_plan,
    star_thermal_chain,
)


def test_zero_differential():
    chain = ConditionalChain(np.array([0.3, 0.7]), (np.array([[0.2, 0.8], [0.5, 0.5]]),))
    zero = ChainDifferential(np.zeros(2), (np.zeros((2, 2)),))
    assert fisher_quadratic(chain, zero) == 0.0


def test_three_block_identity(rng):
    chain = ConditionalChain.random(rng, [2, 3, 2])
    diff = ChainDifferential.random(rng, chain)
    assert fisher_quadratic(chain, diff) == pytest.approx(fisher_terms(chain, diff).sum(), rel=1e-10)


def test_many_random_chains(rng):
    for k in range(100):
        depth = int(rng.integers(1, 5))
        sizes = [int(s) for s in rng.integers(2, 5, size=depth)]
        chain = ConditionalChain.random(rng, sizes, spectator_size=[None, 3][k % 2])
        diff = ChainDifferential.random(rng, chain)
        joint = fisher_quadratic(chain, diff)
        assert joint == pytest.approx(fisher_terms(chain, diff).sum(), rel=1e-10)


def test_unweighted_branch_is_free():
    chain = ConditionalChain(np.array([1.0, 0.0]), (np.array([[0.2, 0.8], [0.5, 0.5]]),))
    diff = ChainDifferential(np.zeros(2), (np.array([[0.0, 0.0], [0.3, -0.3]]),))
    assert fisher_quadratic(chain, diff) == 0.0


def test_non_tangent_rejected():
    chain = ConditionalChain(np.array([0.5, 0.5]))
    with pytest.raises(ValueError, match="non-tangent"):
        fisher_quadratic(chain, ChainDifferential(np.array([0.1, 0.1])))


@pytest.mark.parametrize("n", [2, 5, 9])
def test_star_plan_from_uniform(n):
    plan = star_erasure_plan(star_thermal_chain(n), n)
    assert plan.total_length == pytest.approx(1.5 * math.pi, rel=1e-14)
    assert plan.tau_beta_w == pytest.approx(9 * math.pi**2 / 4, rel=1e-14)
    assert plan.total_length <= plan.bound
    sim = simulate_step_plan(plan)
    assert sim.measured_length == pytest.approx(1.5 * math.pi, abs=1e-6)
    final = sim.joints[-1]
    assert final[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_free_segments_cost_nothing():
    plan = star_erasure_plan(star_thermal_chain(4), 4)
    sim = simulate_step_plan(plan)
    for seg, measured in zip(plan.segments, sim.segment_lengths):
        if seg.weight == 0:
            assert measured < 1e-9


def test_already_erased_input():
    n = 4
    erased = star_erasure_plan(star_thermal_chain(n), n).final()
    assert star_erasure_plan(erased, n).total_length == 0.0


def test_qubit_flip_segment():
    start = ConditionalChain(np.array([1.0, 0.0]), (np.array([[1.0, 0.0], [1.0, 0.0]]),))
    target = ConditionalChain(np.array([0.0, 1.0]), (np.array([[1.0, 0.0], [1.0, 0.0]]),))
    plan = five_step_plan(start, target)
    assert simulate_step_plan(plan).measured_length == pytest.approx(math.pi, abs=1e-6)


def test_generic_plan_within_bound(rng):
    for _ in range(30):
        a = ConditionalChain.random(rng, [3, 4])
        b = ConditionalChain.random(rng, [3, 4])
        plan = five_step_plan(a, b)
        assert plan.total_length <= 3 * math.pi + 1e-12
        final = plan.final()
        assert np.allclose(final.joint(), b.joint(), atol=1e-12)
        assert simulate_step_plan(plan, grid=400).measured_length == pytest.approx(plan.total_length, rel=1e-6)


def test_pyramid_bounds():
    two = pyramid_bound(PyramidSpec(2))
    assert two.length_bound == pytest.approx(2 * math.pi)
    assert two.w_diss_bound == pytest.approx(4 * math.pi**2)
    for m in range(2, 30):
        assert pyramid_bound(PyramidSpec(m, 8, 1, 3)).tau_beta_w_bound == 4 * (m - 1) ** 2 * math.pi**2
