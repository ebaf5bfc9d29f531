"""Spin models exposing ln Z and its first three parameter derivatives.

Every model has a Hamiltonian linear in its control parameters,
``H = sum_i lambda^i X_i``, so that ``g = d^2 ln Z`` is a Hessian metric and
the Christoffel symbols follow from the third derivative tensor alone.
"""

from __future__ import annotations

import functools
import copy
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import ThermalState, as_point, lse


class Model:
    """Base class. Subclasses provide ``ln_z``; derivatives default to finite differences."""

    n_params: int = 0
    n_spins: int | None = None
    name: str = "model"
    param_names: tuple[str, ...] = ()

    def ln_z(self, point, beta: float = 1.0) -> float:
        raise NotImplementedError

    # five-point central stencils, used only where no analytic tensor exists
    def _fd_step(self, point):
        return 1e-4 * np.maximum(1.0, np.abs(point))

    def grad_ln_z(self, point, beta: float = 1.0) -> np.ndarray:
        point = as_point(point, self.n_params)
        h = self._fd_step(point)
        out = np.empty(self.n_params)
        for i in range(self.n_params):
            e = np.zeros(self.n_params)
            e[i] = h[i]
            f = [self.ln_z(point + c * e, beta) for c in (-2, -1, 1, 2)]
            out[i] = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h[i])
        return out

    def hess_ln_z(self, point, beta: float = 1.0) -> np.ndarray:
        point = as_point(point, self.n_params)
        h = self._fd_step(point)
        n = self.n_params
        out = np.empty((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h[i]
            gp = [self.grad_ln_z(point + c * e, beta) for c in (-2, -1, 1, 2)]
            out[i] = (gp[0] - 8 * gp[1] + 8 * gp[2] - gp[3]) / (12 * h[i])
        return 0.5 * (out + out.T)

    def third_ln_z(self, point, beta: float = 1.0) -> np.ndarray:
        point = as_point(point, self.n_params)
        h = self._fd_step(point)
        n = self.n_params
        out = np.empty((n, n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h[i]
            hp = [self.hess_ln_z(point + c * e, beta) for c in (-2, -1, 1, 2)]
            out[i] = (hp[0] - 8 * hp[1] + 8 * hp[2] - hp[3]) / (12 * h[i])
        return _symmetrize3(out)

    def metric_and_contraction(self, point, velocity, beta: float = 1.0):
        """Return ``(g, T(v, v))`` with ``T`` the third derivative of ln Z."""
        g = self.hess_ln_z(point, beta)
        t = self.third_ln_z(point, beta)
        return g, np.einsum("ijk,j,k->i", t, velocity, velocity)

    def thermal_state(self, point, beta: float = 1.0) -> ThermalState:
        raise NotImplementedError(f"{self.name} does not expose its configuration space")

    def config_space(self) -> dict:
        return {"kind": "opaque"}

    def describe(self) -> dict:
        return {"model": self.name}


def _symmetrize3(t: np.ndarray) -> np.ndarray:
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    return sum(np.transpose(t, p) for p in perms) / 6.0


def log_binomial(n: int, k) -> np.ndarray:
    k = np.asarray(k)
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


class SectorModel(Model):
    """A model whose configurations group into sectors of equal sufficient statistics.

    ``features[s]`` is the value of the observables ``X_i`` in sector ``s`` and
    ``log_mult[s]`` the log of the number of configurations in it. Everything is
    exact and costs O(number of sectors).
    """

    def __init__(self, features: np.ndarray, log_mult: np.ndarray):
        self.features = np.asarray(features, dtype=float)
        self.log_mult = np.asarray(log_mult, dtype=float)
        self.n_params = self.features.shape[1]

    def _weights(self, point, beta):
        point = as_point(point, self.n_params)
        lw = self.log_mult - beta * (self.features @ point)
        lnz = lse(lw)
        return lnz, np.exp(lw - lnz)

    def ln_z(self, point, beta: float = 1.0) -> float:
        return self._weights(point, beta)[0]

    def cumulants(self, point, beta: float = 1.0):
        """Mean, covariance and third central moment tensor of the observables."""
        _, w = self._weights(point, beta)
        mu = w @ self.features
        d = self.features - mu
        dw = d * w[:, None]
        cov = dw.T @ d
        k3 = np.einsum("si,sj,sk->ijk", dw, d, d)
        return mu, 0.5 * (cov + cov.T), k3

    def grad_ln_z(self, point, beta: float = 1.0) -> np.ndarray:
        _, w = self._weights(point, beta)
        return -beta * (w @ self.features)

    def hess_ln_z(self, point, beta: float = 1.0) -> np.ndarray:
        _, w = self._weights(point, beta)
        d = self.features - w @ self.features
        g = (d * w[:, None]).T @ d
        return beta**2 * 0.5 * (g + g.T)

    def third_ln_z(self, point, beta: float = 1.0) -> np.ndarray:
        return -(beta**3) * self.cumulants(point, beta)[2]

    def metric_and_contraction(self, point, velocity, beta: float = 1.0):
        # hot path of the geodesic integrator: no validation, minimal temporaries
        lw = self.log_mult - beta * (self.features @ point)
        w = np.exp(lw - lw.max())
        w /= w.sum()
        d = self.features - w @ self.features
        dw = d * w[:, None]
        dv = d @ velocity
        return beta**2 * (dw.T @ d), -(beta**3) * (dw.T @ (dv * dv))

    def thermal_state(self, point, beta: float = 1.0) -> ThermalState:
        lnz, w = self._weights(point, beta)
        return ThermalState(w, lnz, np.exp(self.log_mult))

    def config_space(self) -> dict:
        return {
            "kind": "sectors",
            "features": self.features.tolist(),
            "multiplicities": np.exp(self.log_mult).round().tolist(),
        }


class AllToAllModel(SectorModel):
    """Uniform field and uniform coupling: ``H = eps*M + J*M^2/2``.

    The double sum over i, j includes the i = j terms, which add the constant
    ``N*J/2``; magnetization sectors ``M = 2k - N`` carry C(N, k) states.
    """

    name = "all_to_all"
    param_names = ("eps", "J")

    def __init__(self, n_spins: int):
        if n_spins < 2:
            raise ValueError("all-to-all model needs N >= 2")
        self.n_spins = int(n_spins)
        k = np.arange(self.n_spins + 1)
        m = 2.0 * k - self.n_spins
        super().__init__(np.column_stack([m, 0.5 * m**2]), log_binomial(self.n_spins, k))

    def describe(self):
        return {"model": self.name, "N": self.n_spins}


class IndependentSpinsModel(SectorModel):
    """N non-interacting spins sharing one field: ``H = eps * sum sigma_z``."""

    name = "local"
    param_names = ("eps",)

    def __init__(self, n_spins: int = 1):
        if n_spins < 1:
            raise ValueError("need at least one spin")
        self.n_spins = int(n_spins)
        k = np.arange(self.n_spins + 1)
        super().__init__((2.0 * k - self.n_spins)[:, None], log_binomial(self.n_spins, k))

    def describe(self):
        return {"model": "qubit" if self.n_spins == 1 else self.name, "N": self.n_spins}


class StarModel(SectorModel):
    """Central spin coupled to N-1 outer spins; parameters ``(eps, eps1, J)``.

    ``H = eps*s0 + eps1*M_out + J*s0*M_out``. Sectors are (s0, number of outer
    spins up).
    """

    name = "star"
    param_names = ("eps", "eps1", "J")

    def __init__(self, n_spins: int):
        if n_spins < 2:
            raise ValueError("star model needs N >= 2")
        self.n_spins = int(n_spins)
        n_out = self.n_spins - 1
        k = np.arange(n_out + 1)
        m = 2.0 * k - n_out
        rows, logs = [], []
        for s0 in (1.0, -1.0):
            rows.append(np.column_stack([np.full_like(m, s0), m, s0 * m]))
            logs.append(log_binomial(n_out, k))
        super().__init__(np.vstack(rows), np.concatenate(logs))

    def describe(self):
        return {"model": self.name, "N": self.n_spins}


class FullControlModel(SectorModel):
    """Every distinct eigen-energy is an independent control.

    With ``fix_gauge=True`` the energy of level 0 is pinned to zero and the
    remaining ``n - 1`` energies are the parameters; this removes the null
    direction (a uniform energy shift) so that the metric is invertible.
    """

    name = "full_control"

    def __init__(self, multiplicities, fix_gauge: bool = False, n_spins: int | None = None):
        mult = np.asarray(multiplicities, dtype=float)
        if mult.ndim != 1 or mult.size < 2:
            raise ValueError("need at least two levels")
        if np.any(mult < 1) or np.any(mult != np.round(mult)):
            raise ValueError("multiplicities must be positive integers")
        self.multiplicities = mult
        self.fix_gauge = fix_gauge
        self.n_spins = n_spins
        eye = np.eye(mult.size)
        features = eye[:, 1:] if fix_gauge else eye
        super().__init__(features, np.log(mult))
        self.param_names = tuple(f"gamma{i}" for i in range(self.n_params))

    @property
    def n_levels(self) -> int:
        return self.multiplicities.size

    def energies(self, point) -> np.ndarray:
        point = as_point(point, self.n_params)
        return np.concatenate([[0.0], point]) if self.fix_gauge else point

    def point_from_energies(self, energies) -> np.ndarray:
        energies = np.asarray(energies, dtype=float)
        return energies[1:] - energies[0] if self.fix_gauge else energies.copy()

    def point_from_probs(self, probs, beta: float = 1.0) -> np.ndarray:
        """Energies (gauge: level 0 at zero) whose thermal state has level weights ``probs``."""
        probs = np.asarray(probs, dtype=float)
        logp = np.log(probs) - np.log(self.multiplicities)
        energies = -(logp - logp[0]) / beta
        return self.point_from_energies(energies)

    def describe(self):
        return {"model": self.name, "multiplicities": self.multiplicities.astype(int).tolist()}


# --- Ising chain -------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _chain_functions(form: str):
    """Lambdified ln Z of the periodic chain and its derivatives in (eps, J).

    The chain Hamiltonian is ``eps*sum s_i + (J/2)*sum s_i s_{i+1}``; the
    transfer-matrix eigenvalues are
    ``z_pm = exp(-b J/2) * (cosh(b eps) +- sqrt(sinh(b eps)^2 + exp(2 b J)))``.
    """
    import sympy as sp

    e, j, b, n = sp.symbols("e j b n", real=True)
    root = sp.sqrt(sp.sinh(b * e) ** 2 + sp.exp(2 * b * j))
    log_zp = -b * j / 2 + sp.log(sp.cosh(b * e) + root)
    if form == "bulk":
        expr = n * log_zp
    elif form == "exact":
        ratio = (sp.cosh(b * e) - root) / (sp.cosh(b * e) + root)
        expr = n * log_zp + sp.log(1 + ratio**n)
    else:
        raise ValueError(f"unknown chain form {form!r}")
    args = (e, j, b, n)
    xs = (e, j)
    grad = [sp.diff(expr, x) for x in xs]
    hess = [[sp.diff(gi, x) for x in xs] for gi in grad]
    third = [[[sp.diff(hess[a][c], x) for x in xs] for c in range(2)] for a in range(2)]
    f0 = sp.lambdify(args, expr, "numpy", cse=True)
    f1 = sp.lambdify(args, grad, "numpy", cse=True)
    f2 = sp.lambdify(args, hess, "numpy", cse=True)
    f3 = sp.lambdify(args, third, "numpy", cse=True)
    # scalar fast path for the integrator: metric and third tensor in one call
    flat = [hess[0][0], hess[0][1], hess[1][1], third[0][0][0], third[0][0][1], third[0][1][1], third[1][1][1]]
    fused = sp.lambdify(args, flat, "math", cse=True)
    return f0, f1, f2, f3, fused


def lnz_chain_exact(n_spins: int, eps: float, coupling: float, beta: float = 1.0) -> float:
    """``ln(z_+^N + z_-^N)`` for the periodic chain, stable for large N."""
    be, bj = beta * eps, beta * coupling
    root = math.sqrt(math.sinh(be) ** 2 + math.exp(2 * bj))
    ch = math.cosh(be)
    log_zp = -bj / 2 + math.log(ch + root)
    ratio = (ch - root) / (ch + root)
    return n_spins * log_zp + math.log1p(ratio**n_spins)


def lnz_chain_bulk(n_spins: int, eps: float, coupling: float, beta: float = 1.0) -> float:
    """Large-N form ``N * ln z_+`` (drops the exponentially small z_- term)."""
    be, bj = beta * eps, beta * coupling
    return n_spins * (-bj / 2 + math.log(math.cosh(be) + math.sqrt(math.sinh(be) ** 2 + math.exp(2 * bj))))


class IsingChainModel(Model):
    """Periodic nearest-neighbour chain with parameters ``(eps, J)``.

    ``form="bulk"`` uses ``N ln z_+`` only: its metric is exactly proportional
    to N, so geodesics do not depend on N. ``form="exact"`` adds the
    ``z_-^N`` term and equals the finite-N configuration sum.
    """

    name = "chain"
    param_names = ("eps", "J")
    n_params = 2

    def __init__(self, n_spins: int, form: str = "bulk"):
        if n_spins < 3:
            raise ValueError("periodic chain needs N >= 3")
        if form not in ("bulk", "exact"):
            raise ValueError(f"unknown chain form {form!r}")
        self.n_spins = int(n_spins)
        self.form = form
        self._f = _chain_functions(form)

    def ln_z(self, point, beta: float = 1.0) -> float:
        e, j = as_point(point, 2)
        if self.form == "bulk":
            return lnz_chain_bulk(self.n_spins, e, j, beta)
        return lnz_chain_exact(self.n_spins, e, j, beta)

    def grad_ln_z(self, point, beta: float = 1.0) -> np.ndarray:
        e, j = as_point(point, 2)
        return np.array(self._f[1](e, j, beta, self.n_spins), dtype=float)

    def hess_ln_z(self, point, beta: float = 1.0) -> np.ndarray:
        e, j = as_point(point, 2)
        h = np.array(self._f[2](e, j, beta, self.n_spins), dtype=float)
        return 0.5 * (h + h.T)

    def third_ln_z(self, point, beta: float = 1.0) -> np.ndarray:
        e, j = as_point(point, 2)
        return _symmetrize3(np.array(self._f[3](e, j, beta, self.n_spins), dtype=float))

    def metric_and_contraction(self, point, velocity, beta: float = 1.0):
        g00, g01, g11, t000, t001, t011, t111 = self._f[4](float(point[0]), float(point[1]), beta, self.n_spins)
        a, b = velocity
        g = np.array([[g00, g01], [g01, g11]])
        tvv = np.array(
            [t000 * a * a + 2 * t001 * a * b + t011 * b * b, t001 * a * a + 2 * t011 * a * b + t111 * b * b]
        )
        return g, tvv

    def thermal_state(self, point, beta: float = 1.0) -> ThermalState:
        if self.n_spins > 20:
            raise ValueError("chain thermal state is only enumerated for N <= 20")
        from .oracles import chain_energies, spin_configurations

        e, j = as_point(point, 2)
        energies = chain_energies(spin_configurations(self.n_spins), e, j)
        lw = -beta * energies
        lnz = lse(lw)
        return ThermalState(np.exp(lw - lnz), lnz)

    def config_space(self) -> dict:
        return {"kind": "spin_configurations", "N": self.n_spins}

    def describe(self):
        return {"model": self.name, "N": self.n_spins, "form": self.form}

    def intensive_form(self):
        """``(per_spin_model, N)`` when the metric is exactly N times a per-spin metric."""
        if self.form != "bulk":
            return None
        per_spin = copy.copy(self)
        per_spin.n_spins = 1
        return per_spin, float(self.n_spins)


# --- standalone partition functions --------------------------------------


def lnz_all_to_all(n_spins: int, eps: float, coupling: float, beta: float = 1.0) -> float:
    k = np.arange(n_spins + 1)
    m = 2.0 * k - n_spins
    energies = eps * m + 0.5 * coupling * m**2
    return lse(log_binomial(n_spins, k) - beta * energies)


def lnz_chain(n_spins: int, eps: float, coupling: float, beta: float = 1.0) -> float:
    if n_spins < 3:
        raise ValueError("periodic chain needs N >= 3")
    return lnz_chain_exact(n_spins, eps, coupling, beta)


def lnz_star(n_spins: int, eps: float, eps1: float, coupling: float, beta: float = 1.0) -> float:
    if n_spins < 2:
        raise ValueError("star model needs N >= 2")

    def log2cosh(x):
        x = abs(x)
        return x + math.log1p(math.exp(-2 * x))

    n_out = n_spins - 1
    up = -beta * eps + n_out * log2cosh(beta * (eps1 + coupling))
    down = beta * eps + n_out * log2cosh(beta * (eps1 - coupling))
    return lse(np.array([up, down]))


def lnz_full_control(energies, multiplicities, beta: float = 1.0) -> float:
    energies = np.asarray(energies, dtype=float)
    mult = np.asarray(multiplicities, dtype=float)
    if energies.shape != mult.shape:
        raise ValueError("energies and multiplicities differ in length")
    if np.any(mult < 1):
        raise ValueError("multiplicities must be >= 1")
    return lse(np.log(mult) - beta * energies)


def moments_all_to_all(n_spins: int, eps: float, coupling: float, beta: float = 1.0, order: int = 2):
    """Derivative tensors of ln Z_all up to ``order`` (1, 2 or 3), exact in O(N).

    Returns a list ``[grad, hess, third][:order]`` built from the mean,
    covariance and third central moment of ``X = (M, M^2/2)``.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    model = AllToAllModel(n_spins)
    mu, cov, k3 = model.cumulants([eps, coupling], beta)
    out = [-beta * mu, beta**2 * cov, -(beta**3) * k3]
    return out[:order]


# --- pyramid geometry ------------------------------------------------------------


@dataclass(frozen=True)
class PyramidSpec:
    """Layered star generalization; layer i (1-based) holds ``(c + a(i-1))^(D-1)`` spins."""

    layers: int
    aperture: int = 2
    base: int = 1
    dimension: int = 3

    def __post_init__(self):
        if self.layers < 2:
            raise ValueError("a pyramid needs m >= 2 layers")
        if self.aperture < 1 or self.base < 1:
            raise ValueError("aperture and base must be >= 1")
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")

    @property
    def layer_sizes(self) -> list[int]:
        return [(self.base + self.aperture * (i - 1)) ** (self.dimension - 1) for i in range(1, self.layers + 1)]

    @property
    def n_total(self) -> int:
        return sum(self.layer_sizes)


# --- parsing ---------------------------------------------------------------------

MODEL_KEYS = {
    "all_to_all": {"model", "N"},
    "chain": {"model", "N", "form"},
    "star": {"model", "N"},
    "local": {"model", "N"},
    "qubit": {"model"},
    "full_control": {"model", "N", "multiplicities", "fix_gauge"},
    "pyramid": {"model", "layers", "aperture", "base", "D"},
}


def model_from_spec(spec: dict):
    """Build a model (or a ``PyramidSpec``) from its JSON description."""
    kind = spec.get("model")
    if kind not in MODEL_KEYS:
        raise ValueError(f"unknown model {kind!r}")
    unknown = set(spec) - MODEL_KEYS[kind]
    if unknown:
        raise ValueError(f"unknown keys for {kind}: {sorted(unknown)}")
    if kind == "all_to_all":
        return AllToAllModel(int(spec["N"]))
    if kind == "chain":
        return IsingChainModel(int(spec["N"]), spec.get("form", "bulk"))
    if kind == "star":
        return StarModel(int(spec["N"]))
    if kind == "local":
        return IndependentSpinsModel(int(spec["N"]))
    if kind == "qubit":
        return IndependentSpinsModel(1)
    if kind == "full_control":
        if "multiplicities" in spec:
            mult = spec["multiplicities"]
            n = spec.get("N")
        else:
            n = int(spec["N"])
            mult = [math.comb(n, k) for k in range(n + 1)]
        return FullControlModel(mult, bool(spec.get("fix_gauge", False)), n)
    return PyramidSpec(
        layers=int(spec["layers"]),
        aperture=int(spec.get("aperture", 2)),
        base=int(spec.get("base", 1)),
        dimension=int(spec.get("D", 3)),
    )
