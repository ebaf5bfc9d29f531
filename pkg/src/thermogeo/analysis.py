"""Sweeps of minimal erasure dissipation over system size, and power-law fits."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import analytic
from .geometry import ShootingError, shoot_geodesic
from .models import AllToAllModel, IsingChainModel, PyramidSpec
from .steps import pyramid_bound, star_erasure_plan, star_thermal_chain

log = logging.getLogger(__name__)

FAMILIES = ("local", "full_control", "all_to_all", "chain", "star", "pyramid")


def default_n_grid(count: int = 19, low: int = 5, high: int = 150) -> list[int]:
    """Log-spaced distinct integers from ``low`` to ``high``."""
    grid = np.unique(np.round(np.geomspace(low, high, count)).astype(int))
    # rounding can merge neighbours at the low end; fill back up to ``count``
    k = count
    while grid.size < count:
        k += 1
        grid = np.unique(np.round(np.geomspace(low, high, k)).astype(int))
    if grid.size > count:
        keep = np.round(np.linspace(0, grid.size - 1, count)).astype(int)
        grid = grid[keep]
    return [int(n) for n in grid]


@dataclass
class SeriesPoint:
    n: int
    tau_beta_w: float
    method: str
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)


@dataclass
class ScalingSeries:
    family: str
    eps_final: float
    points: list[SeriesPoint]
    tau: float = 1.0
    beta: float = 1.0

    @property
    def n(self) -> np.ndarray:
        return np.array([p.n for p in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([p.tau_beta_w for p in self.points])

    def converged(self) -> "ScalingSeries":
        return ScalingSeries(self.family, self.eps_final, [p for p in self.points if p.converged], self.tau, self.beta)

    @property
    def all_converged(self) -> bool:
        return all(p.converged for p in self.points)


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    exponent: float
    relative_error: float
    n_points: int

    def predict(self, n):
        return self.alpha * np.asarray(n, dtype=float) ** self.exponent

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "x": self.exponent, "relative_error": self.relative_error, "n_points": self.n_points}


def fit_power_law(series_or_n, values=None) -> PowerLawFit:
    """Unweighted least squares of ln W on ln N; ``relative_error`` is the worst |fit - data| / data."""
    if values is None:
        series = series_or_n.converged()
        n, w = series.n, series.values
    else:
        n = np.asarray(series_or_n, dtype=float)
        w = np.asarray(values, dtype=float)
    if n.size != w.size:
        raise ValueError("N and values differ in length")
    if n.size < 5:
        raise ValueError(f"need at least 5 points to fit, got {n.size}")
    if np.any(w <= 0) or np.any(n <= 0):
        raise ValueError("power-law fit needs positive N and values")
    x, ln_alpha = np.polyfit(np.log(n), np.log(w), 1)
    alpha = math.exp(ln_alpha)
    pred = alpha * n**x
    rel = float(np.max(np.abs(pred - w) / w))
    return PowerLawFit(float(alpha), float(x), rel, int(n.size))


def minimal_dissipation(family: str, n: int, eps_final: float = 5.0, tau: float = 1.0, beta: float = 1.0, **opts) -> SeriesPoint:
    """tau*beta*W of erasing ``n`` spins in one model family."""
    if family == "local":
        return SeriesPoint(n, analytic.local_erasure_tbw(n), "closed-form")
    if family == "full_control":
        return SeriesPoint(n, analytic.global_erasure_tbw(n), "closed-form")
    if family == "star":
        plan = star_erasure_plan(star_thermal_chain(n), n)
        return SeriesPoint(n, plan.tau_beta_w, "step-plan", diagnostics={"length": plan.total_length})
    if family == "pyramid":
        raise ValueError("pyramid sweeps are indexed by layer count; use pyramid_series")
    if family in ("all_to_all", "chain"):
        model = AllToAllModel(n) if family == "all_to_all" else IsingChainModel(n)
        try:
            sol = shoot_geodesic(model, eps_final=eps_final, beta=beta, tau=tau, steps=opts.get("steps", 4000))
        except ShootingError as exc:
            return SeriesPoint(n, math.nan, "shooting", False, {"error": str(exc)})
        diag = {k: sol.diagnostics.get(k) for k in ("theta", "endpoint_miss", "speed_drift", "trials")}
        diag["length"] = sol.length
        return SeriesPoint(n, sol.tau_beta_w, "shooting", sol.converged, diag)
    raise ValueError(f"unknown model family {family!r}")


def sweep_minimal_dissipation(
    family: str,
    n_list=None,
    eps_final: float = 5.0,
    tau: float = 1.0,
    beta: float = 1.0,
    progress=None,
    **opts,
) -> ScalingSeries:
    """Minimal dissipation of erasure over a list of system sizes.

    Non-converged shots are kept in the series, flagged, and skipped by fits.
    """
    if eps_final <= 0:
        raise ValueError("eps_final must be positive")
    n_list = default_n_grid() if n_list is None else sorted(int(n) for n in n_list)
    if len(set(n_list)) != len(n_list):
        raise ValueError("N values must be distinct")
    points = []
    for n in n_list:
        pt = minimal_dissipation(family, n, eps_final, tau, beta, **opts)
        if not pt.converged:
            log.warning("%s N=%d did not converge: %s", family, n, pt.diagnostics)
        points.append(pt)
        if progress is not None:
            progress(pt)
    return ScalingSeries(family, eps_final, points, tau, beta)


def pyramid_series(layers, aperture: int = 2, base: int = 1, dimension: int = 3) -> ScalingSeries:
    """Step-protocol bound as a function of the total spin count."""
    points = []
    for m in layers:
        spec = PyramidSpec(int(m), aperture, base, dimension)
        b = pyramid_bound(spec)
        points.append(SeriesPoint(spec.n_total, b.tau_beta_w_bound, "step-bound", diagnostics={"layers": int(m), "asymptotic": b.asymptotic_tau_beta_w}))
    return ScalingSeries("pyramid", math.inf, points)


def exponent_vs_boundary(family: str = "all_to_all", eps_list=None, n_list=None, tau: float = 1.0, beta: float = 1.0, progress=None):
    """One power-law fit per final field value."""
    eps_list = list(np.arange(1.0, 5.51, 0.5)) if eps_list is None else list(eps_list)
    out = []
    for eps in eps_list:
        series = sweep_minimal_dissipation(family, n_list, float(eps), tau, beta, progress=progress)
        out.append((float(eps), fit_power_law(series), series))
    return out
