"""Value types, log-sum-exp, and dissipation functionals over discretized curves.

Conventions: k_B = 1 and the relaxation time tau_eq = 1, so every duration is
measured in units of tau_eq and energies in units of the bath temperature
unless ``beta`` is varied explicitly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .models import Model


class MetricError(ValueError):
    """Raised when a metric evaluation is not positive semidefinite."""


PSD_TOLERANCE = 1e-9


@dataclass(frozen=True)
class UnitsContext:
    beta: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be positive and finite, got {self.beta}")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")

    @property
    def tau_eq(self) -> float:
        return 1.0


def as_point(params: Sequence[float] | np.ndarray, n: int | None = None) -> np.ndarray:
    """Validate a control point and return it as a float vector."""
    point = np.atleast_1d(np.asarray(params, dtype=float))
    if point.ndim != 1:
        raise ValueError("a control point must be a flat vector")
    if not np.all(np.isfinite(point)):
        raise ValueError(f"control point has non-finite entries: {point}")
    if n is not None and point.size != n:
        raise ValueError(f"expected {n} control parameters, got {point.size}")
    return point


@dataclass(frozen=True)
class Trajectory:
    """A curve in control space sampled on a strictly increasing time grid."""

    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if times.ndim != 1 or times.size < 2:
            raise ValueError("a trajectory needs at least two time samples")
        if points.shape[0] != times.size:
            raise ValueError("times and points have different lengths")
        if times[0] != 0.0:
            raise ValueError("trajectory time grid must start at 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("trajectory time grid must be strictly increasing")
        if not np.all(np.isfinite(points)):
            raise ValueError("trajectory contains non-finite control values")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "points", points)

    @property
    def tau(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @classmethod
    def uniform(cls, func, tau: float = 1.0, n_points: int = 2001) -> "Trajectory":
        """Sample ``func(t)`` on a uniform grid over [0, tau]."""
        times = np.linspace(0.0, tau, n_points)
        return cls(times, np.array([np.atleast_1d(func(t)) for t in times]))


@dataclass(frozen=True)
class ThermalState:
    """Thermal probabilities over configuration labels.

    ``probs`` are aggregated over each label's ``multiplicities`` (for example
    the C(N, k) spin configurations of a magnetization sector).
    """

    probs: np.ndarray
    log_z: float
    multiplicities: np.ndarray | None = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if abs(probs.sum() - 1.0) > 1e-12 or probs.min() < 0 or probs.max() > 1:
            raise ValueError("thermal probabilities are not normalized")
        object.__setattr__(self, "probs", probs)

    @property
    def per_configuration(self) -> np.ndarray:
        """Probability of a single microscopic configuration in each sector."""
        if self.multiplicities is None:
            return self.probs
        return self.probs / self.multiplicities


@dataclass(frozen=True)
class DissipationReport:
    length: float
    w_diss: float
    delta_f: float
    beta: float = 1.0
    tau: float = 1.0
    landauer_reference: float | None = None
    work_total: float = field(init=False)
    work_variance: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "work_total", self.delta_f + self.w_diss)
        # linear-response fluctuation-dissipation relation
        object.__setattr__(self, "work_variance", 2.0 * self.w_diss / self.beta)

    @property
    def tau_beta_w(self) -> float:
        """Dimensionless dissipation tau * beta * W_diss."""
        return self.tau * self.beta * self.w_diss

    def as_dict(self) -> dict:
        return {
            "length": self.length,
            "w_diss": self.w_diss,
            "tau_beta_w_diss": self.tau_beta_w,
            "delta_f": self.delta_f,
            "work_total": self.work_total,
            "work_variance": self.work_variance,
            "landauer_reference": self.landauer_reference,
        }


def log_sum_exp(terms: Iterable[tuple[float, float]]) -> float:
    """Return ``ln sum_i exp(log_weight_i + exponent_i)`` without overflow."""
    arr = np.asarray(list(terms), dtype=float)
    if arr.size == 0:
        raise ValueError("empty sum")
    arr = arr.reshape(-1, 2)
    if not np.all(np.isfinite(arr)):
        raise ValueError("log_sum_exp terms must be finite")
    return lse(arr[:, 0] + arr[:, 1])


def lse(values: np.ndarray) -> float:
    """Vectorized log-sum-exp of a 1-D array; ``-inf`` entries are allowed."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty sum")
    top = np.max(values)
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.sum(np.exp(values - top))))


def hellinger_from_log_bc(log_bc: float) -> float:
    """Angle ``2 arccos(exp(log_bc))`` evaluated stably for log_bc near 0."""
    log_bc = min(float(log_bc), 0.0)
    return 2.0 * math.asin(math.sqrt(-math.expm1(2.0 * log_bc)))


def thermal_state(model: "Model", point, units: UnitsContext = UnitsContext()) -> ThermalState:
    return model.thermal_state(as_point(point, model.n_params), units.beta)


def _landauer_reference(model, beta: float) -> float | None:
    n = getattr(model, "n_spins", None)
    return None if n is None else n * math.log(2.0) / beta


def dissipation_along_curve(
    model: "Model",
    traj: Trajectory,
    units: UnitsContext | None = None,
    quadrature: str = "midpoint",
) -> DissipationReport:
    """Thermodynamic length and slow-driving dissipation of a sampled protocol.

    ``quadrature="midpoint"`` uses the metric at segment midpoints.
    ``quadrature="chord"`` replaces each segment by the Hellinger angle between
    the thermal states at its ends, which stays accurate where the coordinate
    speed blows up near frozen (nearly pure) states. Both converge to the same
    functional; the chord rule only needs ``ln Z``.
    """
    if units is None:
        units = UnitsContext(tau=traj.tau)
    if traj.dim != model.n_params:
        raise ValueError(f"trajectory dimension {traj.dim} != model parameters {model.n_params}")
    beta = units.beta
    # the functional is evaluated on the trajectory's own clock rescaled to units.tau
    scale = units.tau / traj.tau
    dt = np.diff(traj.times) * scale
    dlam = np.diff(traj.points, axis=0)

    if quadrature == "midpoint":
        mids = 0.5 * (traj.points[1:] + traj.points[:-1])
        sq = np.empty(len(dt))
        for k, (mid, d) in enumerate(zip(mids, dlam)):
            g = model.hess_ln_z(mid, beta)
            g = 0.5 * (g + g.T)
            if g.size > 1:
                low = np.linalg.eigvalsh(g)[0]
            else:
                low = float(g.ravel()[0])
            if low < -PSD_TOLERANCE * max(1.0, np.abs(g).max()):
                raise MetricError(f"metric not PSD at {mid} (eigenvalue {low:.3e})")
            sq[k] = max(float(d @ g @ d), 0.0)
        seg = np.sqrt(sq)
        if seg.max(initial=0.0) > 0.1:
            warnings.warn(
                f"coarse trajectory: largest segment length {seg.max():.3g} > 0.1",
                stacklevel=2,
            )
    elif quadrature == "chord":
        lnz = np.array([model.ln_z(p, beta) for p in traj.points])
        seg = np.empty(len(dt))
        for k in range(len(dt)):
            mid = 0.5 * (traj.points[k] + traj.points[k + 1])
            log_bc = model.ln_z(mid, beta) - 0.5 * (lnz[k] + lnz[k + 1])
            seg[k] = hellinger_from_log_bc(log_bc)
        sq = seg**2
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")

    length = float(seg.sum())
    w_diss = float(np.sum(sq / dt)) / beta
    delta_f = (model.ln_z(traj.points[0], beta) - model.ln_z(traj.points[-1], beta)) / beta
    return DissipationReport(
        length=length,
        w_diss=w_diss,
        delta_f=float(delta_f),
        beta=beta,
        tau=units.tau,
        landauer_reference=_landauer_reference(model, beta),
    )
