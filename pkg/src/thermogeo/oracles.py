"""Independent reference computations: brute-force configuration sums and finite differences.

Nothing here shares code with the model implementations; these are the
yardsticks the models are checked against.
"""

from __future__ import annotations

import numpy as np


def spin_configurations(n_spins: int) -> np.ndarray:
    """All 2^N configurations of N Ising spins as a (2^N, N) array of +-1."""
    if n_spins > 22:
        raise ValueError("refusing to enumerate more than 2^22 configurations")
    idx = np.arange(2**n_spins, dtype=np.int64)[:, None]
    bits = (idx >> np.arange(n_spins)) & 1
    return (2 * bits - 1).astype(np.float64)


def all_to_all_energies(spins, eps, coupling):
    # literal double sum over i, j, self-terms included
    pair = np.einsum("ci,cj->c", spins, spins)
    return eps * spins.sum(axis=1) + 0.5 * coupling * pair


def chain_energies(spins, eps, coupling):
    """Periodic chain, ``eps*sum s_i + (J/2)*sum_i s_i s_{i+1}``."""
    bonds = np.sum(spins * np.roll(spins, -1, axis=1), axis=1)
    return eps * spins.sum(axis=1) + 0.5 * coupling * bonds


def star_energies(spins, eps, eps1, coupling):
    center = spins[:, 0]
    outer = spins[:, 1:].sum(axis=1)
    return eps * center + eps1 * outer + coupling * center * outer


def independent_energies(spins, eps):
    return eps * spins.sum(axis=1)


def brute_lnz(energies, beta: float = 1.0) -> float:
    """ln of a plain configuration sum, shifted only by the largest term."""
    x = -beta * np.asarray(energies, dtype=float)
    top = x.max()
    return float(top + np.log(np.exp(x - top).sum()))


def brute_probs(energies, beta: float = 1.0) -> np.ndarray:
    x = -beta * np.asarray(energies, dtype=float)
    w = np.exp(x - x.max())
    return w / w.sum()


def fd_gradient(f, x, h: float = 1e-4) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        out[i] = (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)
    return out


def fd_hessian(f, x, h: float = 1e-3) -> np.ndarray:
    """Second derivatives of a scalar function with fourth-order stencils."""
    x = np.asarray(x, dtype=float)
    n = x.size
    out = np.empty((n, n))
    steps = (-2, -1, 1, 2)
    coef = np.array([1.0, -8.0, 8.0, -1.0])
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h
            ej[j] = h
            if i == j:
                f0 = f(x)
                val = (-f(x + 2 * ei) + 16 * f(x + ei) - 30 * f0 + 16 * f(x - ei) - f(x - 2 * ei)) / (12 * h * h)
            else:
                val = 0.0
                for a, ca in zip(steps, coef):
                    for b, cb in zip(steps, coef):
                        val += ca * cb * f(x + a * ei + b * ej)
                val /= 144 * h * h
            out[i, j] = out[j, i] = val
    return out


def fd_jacobian(f, x, h: float = 1e-4) -> np.ndarray:
    """Derivative of an array-valued function; axis 0 of the result is the direction."""
    x = np.asarray(x, dtype=float)
    rows = []
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        rows.append((-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h))
    return np.array(rows)
