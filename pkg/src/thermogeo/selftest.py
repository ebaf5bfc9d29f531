"""Numbered end-to-end checks of the library against closed forms and oracles.

Each check returns a ``CheckResult``; ``run_all`` collects them. The slow
checks (system-size sweeps) run only with ``full=True``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import analytic, oracles
from .analysis import default_n_grid, fit_power_law, sweep_minimal_dissipation
from .geometry import christoffel_at, integrate_geodesic, metric_at, shoot_geodesic
from .models import (
    AllToAllModel,
    FullControlModel,
    IndependentSpinsModel,
    IsingChainModel,
    PyramidSpec,
    StarModel,
    lnz_all_to_all,
    lnz_chain,
    lnz_full_control,
    lnz_star,
)
from .steps import (
    ChainDifferential,
    ConditionalChain,
    fisher_quadratic,
    fisher_terms,
    pyramid_bound,
    simulate_step_plan,
    star_erasure_plan,
    star_thermal_chain,
)


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        info = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"[{status}] {self.number:>2} {self.name} ({self.seconds:.2f}s) {info}"

    def as_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed, "seconds": self.seconds, "details": self.details}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _timed(number, name, fn, *args, **kwargs) -> CheckResult:
    t0 = time.perf_counter()
    passed, details = fn(*args, **kwargs)
    return CheckResult(number, name, bool(passed), details, time.perf_counter() - t0)


# --- 1. independent spins ------------------------------------------------------------


def _local_bound():
    qubit = analytic.hellinger_angle([0.5, 0.5], [1.0, 0.0]) ** 2
    closed = max(abs(analytic.local_erasure_tbw(n) - n * qubit) / (n * qubit) for n in range(1, 151))
    shot = shoot_geodesic(IndependentSpinsModel(1), eps_final=20.0).tau_beta_w
    err = abs(shot - math.pi**2 / 4)
    return closed < 1e-15 and err < 1e-4, {"closed_form_rel_dev": closed, "shot_qubit_dev": err}


def check_local_bound() -> CheckResult:
    return _timed(1, "non-interacting erasure: N pi^2/4 and shot qubit", _local_bound)


# --- 2. full control -------------------------------------------------------------------


def _global_bound():
    dev = abs(analytic.global_erasure_tbw(40) - math.pi**2)
    return dev < 1e-4, {"deviation_N40": dev}


def check_global_bound() -> CheckResult:
    return _timed(2, "full-control erasure: (2 arccos 2^(-N/2))^2 -> pi^2", _global_bound)


# --- 3. integrated geodesics versus the Hellinger angle ---------------------------------------


def _hellinger_equivalence(n_models, seed, steps):
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_end = 0.0
    for _ in range(n_models):
        n = int(rng.integers(2, 9))
        mult = rng.integers(1, 4, size=n)
        p = rng.dirichlet(np.ones(n))
        q = rng.dirichlet(np.ones(n))
        geo = analytic.HellingerGeodesic(p, q, 1.0, mult)
        model = FullControlModel(mult, fix_gauge=True)
        start = model.point_from_probs(p)
        vel = geo.energy_velocity(0.0)[0, 1:]
        sol = integrate_geodesic(model, start, vel, steps=steps)
        rel = abs(sol.length - geo.length) / geo.length
        end = model.thermal_state(sol.trajectory.points[-1]).probs
        worst = max(worst, rel)
        worst_end = max(worst_end, float(np.abs(end - q).max()))
    return worst < 1e-6, {"worst_rel_length_dev": worst, "worst_endpoint_dev": worst_end, "models": n_models}


def check_hellinger_equivalence(n_models=20, seed=7, steps=4000) -> CheckResult:
    return _timed(3, "integrated full-control geodesic length = Hellinger angle", _hellinger_equivalence, n_models, seed, steps)


# --- 4. all-to-all sweep -----------------------------------------------------------------


def _all_to_all_scaling(n_list, eps_final):
    series = sweep_minimal_dissipation("all_to_all", n_list, eps_final)
    fit = fit_power_law(series)
    ok = (
        series.all_converged
        and 0.84 <= fit.exponent <= 0.88
        and abs(fit.alpha - 2.20) <= 0.22
        and fit.relative_error <= 0.01
    )
    return ok, {
        "x": fit.exponent,
        "alpha": fit.alpha,
        "relative_error": fit.relative_error,
        "converged": sum(p.converged for p in series.points),
        "points": len(series.points),
    }


def check_all_to_all_scaling(n_list=None, eps_final=5.0) -> CheckResult:
    n_list = default_n_grid() if n_list is None else n_list
    return _timed(4, "all-to-all power law over N", _all_to_all_scaling, n_list, eps_final)


# --- 5. chain --------------------------------------------------------------------------


def _chain_scaling(eps_final):
    a = shoot_geodesic(IsingChainModel(5), eps_final=eps_final)
    b = shoot_geodesic(IsingChainModel(50), eps_final=eps_final)
    pointwise = float(np.abs(a.trajectory.points - b.trajectory.points).max())
    per_n = (a.tau_beta_w / 5, b.tau_beta_w / 50)
    spread = abs(per_n[0] - per_n[1]) / per_n[0]
    slope_dev = abs(per_n[1] - 1.69) / 1.69
    ok = a.converged and b.converged and pointwise < 1e-8 and spread < 1e-6 and slope_dev <= 0.03
    return ok, {
        "pointwise_dev": pointwise,
        "per_N_spread": spread,
        "tbw_per_N": per_n[1],
        "slope_rel_dev_from_1.69": slope_dev,
    }


def check_chain_scaling(eps_final=5.0) -> CheckResult:
    return _timed(5, "chain geodesic independent of N, slope", _chain_scaling, eps_final)


# --- 6. star ---------------------------------------------------------------------------


def _star_plan(n_spins):
    plan = star_erasure_plan(star_thermal_chain(n_spins), n_spins)
    sim = simulate_step_plan(plan)
    dev = abs(sim.measured_length - 1.5 * math.pi)
    tbw = sim.measured_length**2
    ok = dev < 1e-6 and abs(tbw - 9 * math.pi**2 / 4) < 1e-5 and sim.measured_length < 2 * math.pi
    return ok, {"measured_length": sim.measured_length, "deviation": dev, "tau_beta_w": tbw}


def check_star_plan(n_spins=9) -> CheckResult:
    return _timed(6, "star step plan length 3 pi/2", _star_plan, n_spins)


# --- 7. pyramid --------------------------------------------------------------------------


def _pyramid(layers, dimension, aperture):
    table_dev = 0.0
    for d in (2, 3):
        for a in (1, 2, 8):
            for m in range(2, 41):
                b = pyramid_bound(PyramidSpec(m, a, 1, d))
                table_dev = max(table_dev, abs(b.tau_beta_w_bound - 4 * (m - 1) ** 2 * math.pi**2))
    n = [PyramidSpec(m, aperture, 1, dimension).n_total for m in layers]
    w = [pyramid_bound(PyramidSpec(m, aperture, 1, dimension)).tau_beta_w_bound for m in layers]
    fit = fit_power_law(n, w)
    ok = table_dev == 0.0 and abs(fit.exponent - 2 / 3) <= 0.02
    return ok, {"table_max_dev": table_dev, "fit_exponent": fit.exponent, "target": 2 / 3}


def check_pyramid(layers=range(4, 41), dimension=3, aperture=2) -> CheckResult:
    return _timed(7, "pyramid bound table and exponent", _pyramid, list(layers), dimension, aperture)


# --- 8. conditional Fisher decomposition ------------------------------------------------------


def _fisher_markov(n_chains, seed):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(n_chains):
        depth = int(rng.integers(1, 5))
        sizes = [int(s) for s in rng.integers(2, 6, size=depth)]
        spectator = [None, 2, 3][k % 3]
        chain = ConditionalChain.random(rng, sizes, spectator, zero_fraction=0.2 if k % 4 == 0 else 0.0)
        diff = ChainDifferential.random(rng, chain)
        # keep the differential finite where a weight vanishes
        diff = _mask_zero_weights(chain, diff)
        joint = fisher_quadratic(chain, diff)
        parts = fisher_terms(chain, diff).sum()
        worst = max(worst, abs(joint - parts) / max(1.0, abs(joint)))
    return worst < 1e-10, {"worst_rel_dev": worst, "chains": n_chains}


def _mask_zero_weights(chain, diff):
    def fix(p, d):
        d = np.where(p == 0, 0.0, d)
        live = p > 0
        # re-centre on the live entries so the block still sums to zero
        return np.where(live, d - (d.sum(axis=-1, keepdims=True) / np.maximum(live.sum(axis=-1, keepdims=True), 1)), 0.0)

    conds = tuple(fix(c, d) for c, d in zip(chain.conditionals, diff.conditionals))
    spec = None if chain.spectator is None else fix(chain.spectator, diff.spectator)
    return ChainDifferential(fix(chain.marginal, diff.marginal), conds, spec)


def check_fisher_markov(n_chains=200, seed=11) -> CheckResult:
    return _timed(8, "Fisher form of conditional chains splits per factor", _fisher_markov, n_chains, seed)


# --- 9. interaction orders ----------------------------------------------------------------


def _interaction_orders(n_values, n_times):
    times = [(k + 1) / (n_times + 1) for k in range(n_times)]
    weakest = math.inf
    worst_sign = 0.0
    for n in n_values:
        for t in times:
            dec = analytic.interaction_decompose(analytic.erasure_energy_table(t, 1.0, n))
            orders = dec.max_by_order()
            weakest = min(weakest, min(orders[k] for k in range(2, n + 1)))
            gamma = analytic.nbody_gamma(t, 1.0, n)
            proto = analytic.interaction_decompose(analytic.nbody_energies(gamma, n))
            sizes = proto.orders()
            expected = np.where(sizes > 0, (-1.0) ** (sizes + 1) * gamma, 0.0)
            worst_sign = max(worst_sign, float(np.abs(proto.coefficients - expected).max()) / gamma)
    return weakest > 1e-6 and worst_sign <= 4 * np.finfo(float).eps, {
        "weakest_order_coupling": weakest,
        "alternating_pattern_rel_dev": worst_sign,
    }


def check_interaction_orders(n_values=range(3, 11), n_times=5) -> CheckResult:
    return _timed(9, "all interaction orders present; alternating protocol", _interaction_orders, list(n_values), n_times)


# --- 10. oracles -------------------------------------------------------------------------------


def _oracles(n_points, seed):
    rng = np.random.default_rng(seed)
    lnz_dev = 0.0
    for n in range(2, 9):
        spins = oracles.spin_configurations(n)
        for _ in range(3):
            e, j, e1 = rng.normal(size=3)
            b = float(rng.uniform(0.3, 2.0))
            lnz_dev = max(lnz_dev, abs(lnz_all_to_all(n, e, j, b) - oracles.brute_lnz(oracles.all_to_all_energies(spins, e, j), b)))
            lnz_dev = max(lnz_dev, abs(lnz_star(n, e, e1, j, b) - oracles.brute_lnz(oracles.star_energies(spins, e, e1, j), b)))
            if n >= 3:
                lnz_dev = max(lnz_dev, abs(lnz_chain(n, e, j, b) - oracles.brute_lnz(oracles.chain_energies(spins, e, j), b)))
                chain = IsingChainModel(n, "exact")
                lnz_dev = max(lnz_dev, abs(chain.ln_z([e, j], b) - oracles.brute_lnz(oracles.chain_energies(spins, e, j), b)))
            energies = rng.normal(size=n)
            mult = rng.integers(1, 4, size=n)
            direct = oracles.brute_lnz(np.repeat(energies, mult), b)
            lnz_dev = max(lnz_dev, abs(lnz_full_control(energies, mult, b) - direct))

    models = [AllToAllModel(5), IsingChainModel(6), IsingChainModel(6, "exact"), StarModel(4), FullControlModel([1, 2, 1], fix_gauge=True)]
    hess_dev = third_dev = 0.0
    psd_min = math.inf
    sym_dev = 0.0
    for k in range(n_points):
        model = models[k % len(models)]
        x = rng.uniform(-1.0, 1.0, size=model.n_params)
        fd_h = oracles.fd_hessian(lambda y: model.ln_z(y), x)
        h = model.hess_ln_z(x)
        hess_dev = max(hess_dev, float(np.abs(h - fd_h).max()) / max(1.0, float(np.abs(h).max())))
        fd_t = oracles.fd_jacobian(lambda y: model.hess_ln_z(y), x)
        t3 = model.third_ln_z(x)
        third_dev = max(third_dev, float(np.abs(t3 - fd_t).max()) / max(1.0, float(np.abs(t3).max())))
        g = metric_at(model, x)
        psd_min = min(psd_min, float(np.linalg.eigvalsh(g)[0]))
        gam = christoffel_at(model, x)
        sym_dev = max(sym_dev, float(np.abs(gam - np.transpose(gam, (0, 2, 1))).max()))
    ok = lnz_dev < 1e-10 and hess_dev < 1e-6 and third_dev < 1e-6 and psd_min > -1e-9 and sym_dev == 0.0
    return ok, {
        "lnz_max_dev": lnz_dev,
        "hessian_fd_rel_dev": hess_dev,
        "third_fd_rel_dev": third_dev,
        "metric_min_eigenvalue": psd_min,
        "christoffel_asymmetry": sym_dev,
    }


def check_oracles(n_points=100, seed=3) -> CheckResult:
    return _timed(10, "partition functions, derivative tensors, metric and connection", _oracles, n_points, seed)


CHECKS = {
    1: check_local_bound,
    2: check_global_bound,
    3: check_hellinger_equivalence,
    4: check_all_to_all_scaling,
    5: check_chain_scaling,
    6: check_star_plan,
    7: check_pyramid,
    8: check_fisher_markov,
    9: check_interaction_orders,
    10: check_oracles,
}

SLOW = {4}


def run_all(full: bool = False, only=None) -> list[CheckResult]:
    """Run the numbered checks; the N sweep (check 4) only when ``full``."""
    numbers = sorted(CHECKS) if only is None else sorted(only)
    out = []
    for k in numbers:
        if k in SLOW and not full and only is None:
            continue
        out.append(CHECKS[k]())
    return out
