import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermogeo import oracles
from thermogeo.core import PSD_TOLERANCE
from thermogeo.models import (
    AllToAllModel,
    FullControlModel,
    IndependentSpinsModel,
    IsingChainModel,
    PyramidSpec,
    StarModel,
    lnz_all_to_all,
    lnz_chain,
    lnz_chain_bulk,
    lnz_chain_exact,
    lnz_full_control,
    lnz_star,
    model_from_spec,
)

# configuration sums evaluated with mpmath over every spin configuration
A2A_N2 = 1.56194137949650920325538518455  # eps=1, J=0.5, pairs weighted J/2 with self-terms
CHAIN_N4 = 3.52370441478691193094152672816  # eps=0.7, J=0.3, bonds weighted J/2
STAR_N3 = 2.32939391571738137581496347976  # eps=0.5, eps1=0.2, J=0.4


def test_frozen_partition_functions():
    assert lnz_all_to_all(2, 1.0, 0.5) == pytest.approx(A2A_N2, rel=1e-14)
    assert lnz_chain_exact(4, 0.7, 0.3) == pytest.approx(CHAIN_N4, rel=1e-14)
    assert lnz_star(3, 0.5, 0.2, 0.4) == pytest.approx(STAR_N3, rel=1e-14)


def test_trivial_partition_functions():
    assert lnz_all_to_all(2, 0, 0) == pytest.approx(math.log(4))
    assert lnz_all_to_all(10, 0, 0) == pytest.approx(10 * math.log(2))
    assert lnz_chain_exact(4, 0, 0) == pytest.approx(math.log(16))
    assert lnz_star(2, 0, 0, 0) == pytest.approx(math.log(4))
    assert lnz_full_control([0, 0], [1, 1]) == pytest.approx(math.log(2))
    assert lnz_full_control([0, 1e6], [1, 1]) == pytest.approx(0.0, abs=1e-300)


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_brute_force_agreement(rng, n):
    spins = oracles.spin_configurations(n)
    for _ in range(20):
        e, j, e1 = rng.uniform(-2, 2, 3)
        assert lnz_all_to_all(n, e, j) == pytest.approx(oracles.brute_lnz(oracles.all_to_all_energies(spins, e, j)), rel=1e-10)
        assert lnz_star(n, e, e1, j) == pytest.approx(oracles.brute_lnz(oracles.star_energies(spins, e, e1, j)), rel=1e-10)
        if n >= 3:
            assert lnz_chain_exact(n, e, j) == pytest.approx(oracles.brute_lnz(oracles.chain_energies(spins, e, j)), rel=1e-10)


def test_chain_bulk_converges_to_exact():
    assert abs(lnz_chain_exact(200, 0.7, 0.3) - lnz_chain_bulk(200, 0.7, 0.3)) / 200 < 1e-10
    for n in (8, 16, 32):
        assert abs(lnz_chain_exact(n, 0.7, 0.3) - lnz_chain_bulk(n, 0.7, 0.3)) / n < math.exp(-n / 4)
    assert lnz_chain(50, 0.7, 0.3) == pytest.approx(lnz_chain_bulk(50, 0.7, 0.3))


def test_star_factorizes_without_coupling():
    e, e1 = 0.8, -0.3
    expected = math.log(2 * math.cosh(e)) + 4 * math.log(2 * math.cosh(e1))
    assert lnz_star(5, e, e1, 0.0) == pytest.approx(expected, rel=1e-14)


@given(st.floats(-3, 3), st.floats(-2, 2))
@settings(max_examples=40)
def test_field_flip_symmetry(e, j):
    for n in (3, 6):
        assert lnz_all_to_all(n, e, j) == pytest.approx(lnz_all_to_all(n, -e, j), rel=1e-12)
        assert lnz_chain_exact(n, e, j) == pytest.approx(lnz_chain_exact(n, -e, j), rel=1e-12)


def test_full_control_direct_sum():
    n = 6
    gamma = 1.7
    masks = np.arange(2**n)
    energies = np.where(masks == 0, 0.0, gamma)
    direct = math.log(np.exp(-energies).sum())
    assert lnz_full_control([0.0, gamma], [1, 2**n - 1]) == pytest.approx(direct, rel=1e-14)


MODELS = [
    (AllToAllModel(3), 2),
    (AllToAllModel(5), 2),
    (StarModel(4), 3),
    (IsingChainModel(5), 2),
    (IsingChainModel(6, form="exact"), 2),
    (IndependentSpinsModel(3), 1),
    (FullControlModel([1, 3, 3, 1]), 4),
]


@pytest.mark.parametrize("model,dim", MODELS, ids=lambda m: getattr(m, "name", str(m)))
def test_derivatives_match_finite_differences(rng, model, dim):
    for _ in range(20):
        x = rng.uniform(-1, 1, dim)
        f = lambda p: model.ln_z(p)
        grad = model.grad_ln_z(x)
        hess = np.atleast_2d(model.hess_ln_z(x))
        third = model.third_ln_z(x).reshape(dim, dim, dim)
        assert np.allclose(grad, oracles.fd_gradient(f, x), rtol=1e-5, atol=1e-8)
        assert np.allclose(hess, oracles.fd_hessian(f, x), rtol=1e-5, atol=1e-6)
        fd3 = oracles.fd_jacobian(lambda p: np.atleast_2d(model.hess_ln_z(p)).ravel(), x).reshape(dim, dim, dim)
        assert np.allclose(third, fd3, rtol=1e-5, atol=1e-6)
        assert np.allclose(hess, hess.T)
        assert np.allclose(third, third.transpose(1, 0, 2)) and np.allclose(third, third.transpose(0, 2, 1))
        assert np.linalg.eigvalsh(hess)[0] > -PSD_TOLERANCE


def test_all_to_all_hessian_example():
    model = AllToAllModel(3)
    x = np.array([0.4, 0.1])
    fd = oracles.fd_hessian(lambda p: lnz_all_to_all(3, *p), x, h=1e-4)
    assert np.allclose(model.hess_ln_z(x), fd, rtol=1e-6)


def test_mean_field_vanishes_at_zero():
    assert AllToAllModel(4).grad_ln_z([0.0, 0.0])[0] == pytest.approx(0.0, abs=1e-15)


def test_chain_bulk_metric_is_extensive():
    a, b = IsingChainModel(5), IsingChainModel(50)
    x = [0.3, -0.7]
    assert np.allclose(b.hess_ln_z(x), 10 * a.hess_ln_z(x), rtol=1e-13)


def test_thermal_states_match_brute_force():
    n = 4
    spins = oracles.spin_configurations(n)
    st_ = IsingChainModel(n, form="exact").thermal_state([0.7, 0.3])
    assert np.allclose(st_.probs, oracles.brute_probs(oracles.chain_energies(spins, 0.7, 0.3)))


def test_pyramid_spec():
    assert PyramidSpec(4, aperture=2, base=1, dimension=2).n_total == 16
    with pytest.raises(ValueError):
        PyramidSpec(1)


def test_model_from_spec():
    assert isinstance(model_from_spec({"model": "all_to_all", "N": 4}), AllToAllModel)
    fc = model_from_spec({"model": "full_control", "N": 3})
    assert list(fc.multiplicities) == [1, 3, 3, 1]
    with pytest.raises(ValueError):
        model_from_spec({"model": "all_to_all", "N": 4, "extra": 1})
    with pytest.raises(ValueError):
        model_from_spec({"model": "nope"})


def test_invalid_models():
    with pytest.raises(ValueError):
        AllToAllModel(1)
    with pytest.raises(ValueError):
        IsingChainModel(2)
    with pytest.raises(ValueError):
        FullControlModel([1, 0.5])
    with pytest.raises(ValueError):
        AllToAllModel(3).ln_z([0.0, math.nan])
