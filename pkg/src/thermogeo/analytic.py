"""Closed forms for full control over the spectrum.

With every eigen-energy free, the thermodynamic metric is the Fisher metric
of the level populations, and ``sqrt(p)`` lives on a sphere of radius 2. The
shortest protocol is a great circle and its length is the Hellinger angle.
This module collects that geodesic, the erasure bounds that follow, the
N-body collective protocol, and the decomposition of a spectrum into k-body
couplings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-30


def _as_distribution(p, name="p") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 1:
        raise ValueError(f"{name} must be a 1-D probability vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError(f"{name} has negative or non-finite entries")
    if abs(p.sum() - 1.0) > 1e-10:
        raise ValueError(f"{name} is not normalized (sum = {p.sum():.15g})")
    return p


def _sphere_angle(p, q) -> float:
    """Angle between the unit vectors sqrt(p) and sqrt(q), stable at both ends."""
    a, b = np.sqrt(p), np.sqrt(q)
    return 2.0 * math.atan2(float(np.linalg.norm(a - b)), float(np.linalg.norm(a + b)))


def hellinger_angle(p, q) -> float:
    """``2 arccos sum_i sqrt(p_i q_i)``, in [0, pi]."""
    p = _as_distribution(p, "p")
    q = _as_distribution(q, "q")
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.size} vs {q.size}")
    return 2.0 * _sphere_angle(p, q)


def fundamental_wdiss(p, q, tau: float = 1.0, beta: float = 1.0) -> float:
    """Least dissipation of any slow protocol between the two thermal states."""
    if tau <= 0 or beta <= 0:
        raise ValueError("tau and beta must be positive")
    return hellinger_angle(p, q) ** 2 / (beta * tau)


def erasure_length(n_spins: int) -> float:
    """Hellinger angle from the uniform state of N spins to a pure one."""
    return 2.0 * math.acos(2.0 ** (-n_spins / 2))


def local_erasure_tbw(n_spins: int) -> float:
    """tau*beta*W of erasing N independent spins with one field each (infinite final field)."""
    return n_spins * math.pi**2 / 4


def global_erasure_tbw(n_spins: int) -> float:
    """tau*beta*W of erasing N spins with full control over the spectrum."""
    return erasure_length(n_spins) ** 2


@dataclass(frozen=True)
class HellingerGeodesic:
    """Great-circle protocol between two level distributions.

    ``p`` and ``q`` are populations per level; ``multiplicities`` spread each
    level over that many degenerate configurations.
    """

    p: np.ndarray
    q: np.ndarray
    tau: float = 1.0
    multiplicities: np.ndarray | None = None

    def __post_init__(self):
        p = _as_distribution(self.p, "p")
        q = _as_distribution(self.q, "q")
        if p.shape != q.shape:
            raise ValueError(f"length mismatch: {p.size} vs {q.size}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        mult = np.ones_like(p) if self.multiplicities is None else np.asarray(self.multiplicities, float)
        if mult.shape != p.shape or np.any(mult < 1):
            raise ValueError("multiplicities must match the levels and be >= 1")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "multiplicities", mult)

    @property
    def length(self) -> float:
        return 2.0 * _sphere_angle(self.p, self.q)

    def _s(self, t):
        s = np.asarray(t, dtype=float) / self.tau
        if np.any(s < 0) or np.any(s > 1):
            raise ValueError("time outside [0, tau]")
        return s

    def u(self, t):
        """Weight of sqrt(q) when sqrt(state) is written as (1-u) sqrt(p) + u sqrt(q), rescaled."""
        s = self._s(t)
        phi = 0.5 * self.length
        if phi == 0:
            return s
        return 0.5 * (1.0 + np.tan(phi * (s - 0.5)) / math.tan(0.5 * phi))

    def amplitudes(self, t) -> np.ndarray:
        """Unit vectors sqrt(state) along the great circle; rows follow ``t``."""
        s = np.atleast_1d(self._s(t))
        a, b = np.sqrt(self.p), np.sqrt(self.q)
        phi = 0.5 * self.length
        if phi < 1e-12:
            return np.tile(a, (s.size, 1))
        wa = np.sin(phi * (1.0 - s)) / math.sin(phi)
        wb = np.sin(phi * s) / math.sin(phi)
        return wa[:, None] * a + wb[:, None] * b

    def states(self, t) -> np.ndarray:
        amp = self.amplitudes(t)
        probs = amp**2
        return probs / probs.sum(axis=1, keepdims=True)

    def energies(self, t, beta: float = 1.0) -> np.ndarray:
        """Level energies realizing the states; lowest level at zero for every t."""
        amp = self.amplitudes(t)
        per_config = np.maximum(amp**2 / self.multiplicities, PROB_FLOOR)
        e = -np.log(per_config) / beta
        return e - e.min(axis=1, keepdims=True)

    def energy_velocity(self, t, beta: float = 1.0) -> np.ndarray:
        """d(energies)/dt, gauge with level 0 held fixed."""
        s = np.atleast_1d(self._s(t))
        a, b = np.sqrt(self.p), np.sqrt(self.q)
        phi = 0.5 * self.length
        amp = np.sin(phi * (1.0 - s))[:, None] * a + np.sin(phi * s)[:, None] * b
        damp = phi * (-np.cos(phi * (1.0 - s))[:, None] * a + np.cos(phi * s)[:, None] * b)
        de = -2.0 * damp / amp / (beta * self.tau)
        return de - de[:, :1]


def full_control_geodesic(p, q, tau: float = 1.0, grid=201, beta: float = 1.0, multiplicities=None):
    """States and gauge-fixed energies of the optimal full-control protocol.

    ``grid`` is either a number of uniform samples on [0, tau] or an explicit
    array of times. Returns ``(times, states, energies)``.
    """
    geo = HellingerGeodesic(p, q, tau, multiplicities)
    if geo.length >= math.pi - 1e-15 and (np.count_nonzero(geo.p) == 1 and np.count_nonzero(geo.q) == 1):
        raise ValueError("undefined geodesic interior: orthogonal pure endpoints")
    times = np.linspace(0.0, tau, int(grid)) if np.isscalar(grid) else np.asarray(grid, dtype=float)
    return times, geo.states(times), geo.energies(times, beta)


def nbody_gamma(t, tau: float, n_spins: int, exact: bool = False):
    """Common k-body coupling of the collective erasure protocol at time ``t``.

    The non-erased configurations all share one energy ``gamma(t)`` above the
    erased one. ``exact=False`` uses the large-N great-circle angle pi/2;
    ``exact=True`` uses the angle ``arccos 2^(-N/2)`` of the actual N-spin
    distance, which makes the protocol an exact constant-speed geodesic.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    if np.any(t >= tau):
        raise ValueError("endpoint divergence: the erased state is pure only at t = tau")
    phi = math.acos(2.0 ** (-n_spins / 2)) if exact else 0.5 * math.pi
    s = t / tau
    ratio = np.sin(phi * s) / np.sin(phi * (1.0 - s))
    out = 2.0 * np.log1p(2.0 ** (n_spins / 2) * ratio)
    return float(out) if out.ndim == 0 else out


def nbody_energies(gamma: float, n_spins: int) -> np.ndarray:
    """Spectrum of the alternating-sign k-body Hamiltonian, indexed by excitation bitmask.

    ``sum_j (-1)^(j+1) sum_{|S|=j, S within T} gamma = gamma`` for any non-empty T.
    """
    e = np.full(2**n_spins, float(gamma))
    e[0] = 0.0
    return e


# --- interaction orders ----------------------------------------------------------------


def popcount(masks) -> np.ndarray:
    masks = np.asarray(masks, dtype=np.int64)
    out = np.zeros_like(masks)
    while np.any(masks):
        out += masks & 1
        masks = masks >> 1
    return out


def _subset_transform(values: np.ndarray, n: int, sign: float) -> np.ndarray:
    """Sum (sign=+1) or Moebius difference (sign=-1) over subsets, one bit at a time."""
    arr = np.array(values, dtype=float).reshape((2,) * n)
    for axis in range(n):
        idx_hi = [slice(None)] * n
        idx_lo = [slice(None)] * n
        idx_hi[axis] = 1
        idx_lo[axis] = 0
        arr[tuple(idx_hi)] += sign * arr[tuple(idx_lo)]
    return arr.reshape(-1)


@dataclass(frozen=True)
class InteractionDecomposition:
    """Couplings ``c_S`` of products of occupation operators over spin subsets S.

    ``coefficients[mask]`` holds ``c_S`` for the subset whose bits are set in
    ``mask``; entry 0 is the energy offset of the empty pattern.
    """

    n_spins: int
    coefficients: np.ndarray

    def coefficient(self, subset) -> float:
        mask = 0
        for i in subset:
            mask |= 1 << int(i)
        return float(self.coefficients[mask])

    def orders(self) -> np.ndarray:
        return popcount(np.arange(2**self.n_spins))

    def max_by_order(self) -> dict[int, float]:
        orders = self.orders()
        mag = np.abs(self.coefficients)
        return {k: float(mag[orders == k].max()) for k in range(1, self.n_spins + 1)}

    def reconstruct(self) -> np.ndarray:
        return _subset_transform(self.coefficients, self.n_spins, +1.0)


def _energy_array(energies) -> tuple[np.ndarray, int]:
    if isinstance(energies, dict):
        table = {}
        for key, val in energies.items():
            mask = key if isinstance(key, (int, np.integer)) else sum(1 << int(i) for i in key)
            table[int(mask)] = float(val)
        size = max(table) + 1 if table else 0
        n = max(1, (size - 1).bit_length())
        missing = [m for m in range(2**n) if m not in table]
        if missing:
            raise ValueError(f"missing energies for {len(missing)} subsets (first: {missing[0]:#b})")
        return np.array([table[m] for m in range(2**n)]), n
    arr = np.asarray(energies, dtype=float)
    n = int(round(math.log2(arr.size))) if arr.size > 0 else -1
    if arr.ndim != 1 or n < 1 or 2**n != arr.size:
        raise ValueError("energies must cover all 2^N excitation subsets")
    return arr, n


def interaction_decompose(energies) -> InteractionDecomposition:
    """Moebius inversion of an energy table over the subset lattice.

    ``energies`` is an array indexed by excitation bitmask, or a dict keyed by
    bitmask or by an iterable of excited spin indices.
    """
    arr, n = _energy_array(energies)
    if not np.all(np.isfinite(arr)):
        raise ValueError("energies must be finite")
    return InteractionDecomposition(n, _subset_transform(arr, n, -1.0))


def erasure_energy_table(t, tau: float, n_spins: int, beta: float = 1.0) -> np.ndarray:
    """Full-control erasure energies of the N-spin configurations at time ``t``.

    Start uniform, end in the configuration with no excitations; indexed by bitmask.
    """
    size = 2**n_spins
    p = np.full(size, 1.0 / size)
    q = np.zeros(size)
    q[0] = 1.0
    geo = HellingerGeodesic(p, q, tau)
    return geo.energies(np.atleast_1d(t), beta)[0]
