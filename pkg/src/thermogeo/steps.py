"""Step protocols built from conditional distributions, and layered bounds.

A distribution written as a chain of conditionals has a Fisher form that
splits into one term per factor, each weighted by the probability of its
conditioning value. A conditional whose conditioning value has zero weight
can therefore be changed for free, which is what the step protocols here
exploit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analytic import _sphere_angle
from .models import PyramidSpec

ROW_TOL = 1e-12


def _check_rows(table, name):
    table = np.atleast_2d(np.asarray(table, dtype=float))
    if np.any(table < 0) or not np.all(np.isfinite(table)):
        raise ValueError(f"{name} has negative or non-finite entries")
    if np.any(np.abs(table.sum(axis=1) - 1.0) > ROW_TOL):
        raise ValueError(f"{name} rows are not normalized")
    return table


@dataclass(frozen=True)
class ConditionalChain:
    """``p(i1, ..., im, s) = p1(i1) p2(i2|i1) ... pm(im|i_{m-1}) q(s)``.

    ``conditionals[l]`` is a matrix whose row ``a`` is the distribution of the
    next variable given the previous one equals ``a``. ``spectator`` is an
    independent factor; use ``None`` for none.
    """

    marginal: np.ndarray
    conditionals: tuple = ()
    spectator: np.ndarray | None = None

    def __post_init__(self):
        marg = _check_rows(self.marginal, "marginal")[0]
        conds = tuple(_check_rows(c, f"conditional {k}") for k, c in enumerate(self.conditionals))
        prev = marg.size
        for k, c in enumerate(conds):
            if c.shape[0] != prev:
                raise ValueError(f"conditional {k} has {c.shape[0]} rows, expected {prev}")
            prev = c.shape[1]
        spec = None if self.spectator is None else _check_rows(self.spectator, "spectator")[0]
        object.__setattr__(self, "marginal", marg)
        object.__setattr__(self, "conditionals", conds)
        object.__setattr__(self, "spectator", spec)

    @property
    def shape(self) -> tuple[int, ...]:
        dims = [self.marginal.size] + [c.shape[1] for c in self.conditionals]
        if self.spectator is not None:
            dims.append(self.spectator.size)
        return tuple(dims)

    def level_marginals(self) -> list[np.ndarray]:
        """Marginal distribution of every chained variable."""
        out = [self.marginal]
        for c in self.conditionals:
            out.append(out[-1] @ c)
        return out

    def joint(self) -> np.ndarray:
        p = self.marginal
        for c in self.conditionals:
            p = p[..., None] * c.reshape((1,) * (p.ndim - 1) + c.shape)
        if self.spectator is not None:
            p = p[..., None] * self.spectator
        return p

    def replace(self, marginal=None, conditionals=None, spectator=None) -> "ConditionalChain":
        return ConditionalChain(
            self.marginal if marginal is None else marginal,
            self.conditionals if conditionals is None else conditionals,
            self.spectator if spectator is None else spectator,
        )

    @classmethod
    def random(cls, rng, sizes, spectator_size=None, zero_fraction=0.0) -> "ConditionalChain":
        """Random chain with the given variable sizes; some weights may be exactly zero."""

        def dist(n):
            w = rng.random(n)
            if zero_fraction and n > 1:
                w[rng.random(n) < zero_fraction] = 0.0
                if w.sum() == 0:
                    w[rng.integers(n)] = 1.0
            return w / w.sum()

        conds = tuple(np.array([dist(sizes[k + 1]) for _ in range(sizes[k])]) for k in range(len(sizes) - 1))
        spec = None if spectator_size is None else dist(spectator_size)
        return cls(dist(sizes[0]), conds, spec)


@dataclass(frozen=True)
class ChainDifferential:
    """Tangent vector of a ConditionalChain: same layout, every block summing to zero."""

    marginal: np.ndarray
    conditionals: tuple = ()
    spectator: np.ndarray | None = None

    @classmethod
    def random(cls, rng, chain: ConditionalChain, scale=1.0) -> "ChainDifferential":
        def tangent(shape):
            d = rng.normal(size=shape) * scale
            return d - d.mean(axis=-1, keepdims=True)

        conds = tuple(tangent(c.shape) for c in chain.conditionals)
        spec = None if chain.spectator is None else tangent(chain.spectator.shape)
        return cls(tangent(chain.marginal.shape), conds, spec)


def _check_tangent(chain: ConditionalChain, diff: ChainDifferential):
    blocks = [(chain.marginal, diff.marginal)] + list(zip(chain.conditionals, diff.conditionals))
    if len(diff.conditionals) != len(chain.conditionals):
        raise ValueError("differential and chain have different depth")
    if (chain.spectator is None) != (diff.spectator is None):
        raise ValueError("differential and chain disagree on the spectator factor")
    if chain.spectator is not None:
        blocks.append((chain.spectator, diff.spectator))
    for p, d in blocks:
        d = np.asarray(d, dtype=float)
        if d.shape != p.shape:
            raise ValueError("differential block shape does not match the chain")
        if np.any(np.abs(np.atleast_2d(d).sum(axis=1)) > 1e-10 * max(1.0, np.abs(d).max())):
            raise ValueError("non-tangent differential: a block does not sum to zero")


def _fisher_sum(dp, p):
    # 0^2/0 = 0: unreachable outcomes carry no cost when they do not move
    dp = np.asarray(dp, dtype=float)
    p = np.asarray(p, dtype=float)
    zero = p == 0
    if np.any(zero & (dp != 0)):
        return math.inf
    safe = np.where(zero, 1.0, p)
    return float(np.sum(np.where(zero, 0.0, dp**2 / safe)))


def joint_differential(chain: ConditionalChain, diff: ChainDifferential) -> np.ndarray:
    """First-order change of the joint distribution: one term per moving factor."""
    factors = [chain.marginal] + list(chain.conditionals)
    dfac = [np.asarray(diff.marginal, float)] + [np.asarray(c, float) for c in diff.conditionals]
    if chain.spectator is not None:
        factors.append(chain.spectator)
        dfac.append(np.asarray(diff.spectator, float))

    def assemble(items):
        p = items[0]
        for c in items[1 : 1 + len(chain.conditionals)]:
            p = p[..., None] * c.reshape((1,) * (p.ndim - 1) + c.shape)
        if chain.spectator is not None:
            p = p[..., None] * items[-1]
        return p

    total = np.zeros(chain.shape)
    for k in range(len(factors)):
        items = list(factors)
        items[k] = dfac[k]
        total = total + assemble(items)
    return total


def fisher_quadratic(chain: ConditionalChain, diff: ChainDifferential) -> float:
    """``sum dp^2 / p`` over the joint outcomes."""
    _check_tangent(chain, diff)
    return _fisher_sum(joint_differential(chain, diff), chain.joint())


def fisher_terms(chain: ConditionalChain, diff: ChainDifferential) -> np.ndarray:
    """Per-factor terms of the decomposed Fisher form; they sum to ``fisher_quadratic``.

    Term 0 is the marginal, then each conditional weighted row by row by the
    marginal of its conditioning variable, then the spectator.
    """
    _check_tangent(chain, diff)
    margs = chain.level_marginals()
    terms = [_fisher_sum(diff.marginal, chain.marginal)]
    for k, (c, dc) in enumerate(zip(chain.conditionals, diff.conditionals)):
        w = margs[k]
        rows = [w[a] * _fisher_sum(dc[a], c[a]) if w[a] > 0 else 0.0 for a in range(c.shape[0])]
        terms.append(float(np.sum(rows)))
    if chain.spectator is not None:
        terms.append(_fisher_sum(diff.spectator, chain.spectator))
    return np.array(terms)


# --- step plans -------------------------------------------------------------------------


def factor_distance(p, q) -> float:
    """Hellinger angle between two rows of a factor."""
    return 2.0 * _sphere_angle(np.asarray(p, float), np.asarray(q, float))


@dataclass(frozen=True)
class StepSegment:
    """One move: ``factor`` is ``"marginal"`` or ``("branch", a)`` for row a of the first conditional."""

    factor: object
    start: np.ndarray
    end: np.ndarray
    length: float
    weight: float = 1.0  # probability of the conditioning value while this segment runs

    @property
    def label(self) -> str:
        return "marginal" if self.factor == "marginal" else f"branch[{self.factor[1]}]"


@dataclass(frozen=True)
class StepPlan:
    initial: ConditionalChain
    segments: tuple = ()
    bound: float | None = None

    @property
    def total_length(self) -> float:
        return float(sum(seg.length for seg in self.segments))

    @property
    def tau_beta_w(self) -> float:
        """Dissipation of the plan when time is shared in proportion to segment length."""
        return self.total_length**2

    def final(self) -> ConditionalChain:
        chain = self.initial
        for seg in self.segments:
            chain = _apply(chain, seg.factor, seg.end)
        return chain

    def table(self) -> list[dict]:
        return [{"step": k + 1, "factor": s.label, "length": s.length, "weight": s.weight} for k, s in enumerate(self.segments)]


def _apply(chain: ConditionalChain, factor, row) -> ConditionalChain:
    if factor == "marginal":
        return chain.replace(marginal=row)
    _, a = factor
    cond = chain.conditionals[0].copy()
    cond[a] = row
    return chain.replace(conditionals=(cond,) + chain.conditionals[1:])


def _move(chain: ConditionalChain, factor, row, segments):
    if factor == "marginal":
        start = chain.marginal
        weight = 1.0
    else:
        start = chain.conditionals[0][factor[1]]
        weight = float(chain.marginal[factor[1]])
    row = np.asarray(row, dtype=float)
    length = factor_distance(start, row) if weight > 0 else 0.0
    segments.append(StepSegment(factor, start.copy(), row.copy(), length, weight))
    return _apply(chain, factor, row)


def _delta(n, i):
    e = np.zeros(n)
    e[i] = 1.0
    return e


def five_step_plan(initial: ConditionalChain, target: ConditionalChain) -> StepPlan:
    """Five-step route between two chains of the form ``p1(i1) p2(i2|i1)``.

    1. send the marginal to a deterministic value j;
    2. rewrite every other branch, which now has zero weight;
    3. move the marginal deterministically from j to a value t != j;
    4. rewrite branch j, now unweighted;
    5. send the marginal to its target (skipped when the target marginal is
       deterministic at t).
    Steps 2 and 4 are free; the others cost at most pi each.
    """
    if len(initial.conditionals) != 1 or len(target.conditionals) != 1:
        raise ValueError("step plans are built for a marginal plus one conditional block")
    if initial.shape != target.shape:
        raise ValueError("initial and target chains have different shapes")
    if not np.array_equal(
        initial.spectator if initial.spectator is not None else [], target.spectator if target.spectator is not None else []
    ):
        raise ValueError("the spectator factor cannot change along a step plan")
    k = initial.marginal.size
    if k < 2:
        raise ValueError("the first variable needs at least two values")
    cond_t = target.conditionals[0]
    same = np.allclose(initial.marginal, target.marginal, atol=1e-15, rtol=0) and np.allclose(
        initial.conditionals[0][target.marginal > 0], cond_t[target.marginal > 0], atol=1e-15, rtol=0
    )
    if same:
        return StepPlan(initial, (), bound=3 * math.pi)

    # final deterministic value t: the target's mode; parking value j: the most likely other value
    t = int(np.argmax(target.marginal))
    order = np.argsort(-initial.marginal, kind="stable")
    j = int(next(i for i in order if i != t))
    segments: list[StepSegment] = []
    chain = initial
    chain = _move(chain, "marginal", _delta(k, j), segments)
    for a in range(k):
        if a != j:
            chain = _move(chain, ("branch", a), cond_t[a], segments)
    chain = _move(chain, "marginal", _delta(k, t), segments)
    chain = _move(chain, ("branch", j), cond_t[j], segments)
    if not np.array_equal(target.marginal, _delta(k, t)):
        chain = _move(chain, "marginal", target.marginal, segments)
    return StepPlan(initial, tuple(segments), bound=3 * math.pi)


def star_thermal_chain(n_spins: int, eps: float = 0.0, eps1: float = 0.0, coupling: float = 0.0, beta: float = 1.0):
    """Thermal state of the star as ``p(center) p(outer block | center)``.

    Index 0 is spin up (sigma = +1). The outer block lists all 2^(N-1)
    configurations of the outer spins (bit b set means outer spin b is down).
    """
    n_out = n_spins - 1
    if n_out < 1:
        raise ValueError("star model needs N >= 2")
    if n_out > 20:
        raise ValueError("outer block is enumerated explicitly; N - 1 must be <= 20")
    masks = np.arange(2**n_out)
    downs = np.zeros(masks.size)
    for b in range(n_out):
        downs += (masks >> b) & 1
    m_out = n_out - 2 * downs
    rows, logw = [], []
    for s0 in (1.0, -1.0):
        field_ = eps1 + coupling * s0
        lw = -beta * field_ * m_out
        lnz_b = float(np.logaddexp.reduce(lw))
        rows.append(np.exp(lw - lnz_b))
        logw.append(-beta * eps * s0 + lnz_b)
    logw = np.array(logw)
    marg = np.exp(logw - np.logaddexp.reduce(logw))
    return ConditionalChain(marg, (np.array(rows),))


def star_erasure_plan(initial: ConditionalChain, n_spins: int) -> StepPlan:
    """Erase a star to the all-up configuration with the step route.

    The target is deterministic, so the final marginal move is dropped: the
    total is at most pi + pi, and 3 pi / 2 from the uniform state.
    """
    n_out = n_spins - 1
    if initial.shape != (2, 2**n_out):
        raise ValueError(f"initial chain must have shape (2, {2 ** n_out}) for N = {n_spins}")
    all_up = _delta(2**n_out, 0)
    target = ConditionalChain(_delta(2, 0), (np.array([all_up, all_up]),))
    plan = five_step_plan(initial, target)
    return StepPlan(plan.initial, plan.segments, bound=2 * math.pi)


@dataclass
class StepSimulation:
    """Joint distributions along a simulated plan.

    ``times`` may repeat: free segments take no time when time is shared in
    proportion to length.
    """

    times: np.ndarray
    joints: np.ndarray
    segment: np.ndarray
    measured_length: float
    segment_lengths: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _slerp_rows(p, q, s):
    a, b = np.sqrt(p), np.sqrt(q)
    phi = _sphere_angle(p, q)
    if phi < 1e-15:
        return np.tile(p, (len(s), 1))
    amp = (np.sin(phi * (1 - s))[:, None] * a + np.sin(phi * s)[:, None] * b) / math.sin(phi)
    rows = amp**2
    return rows / rows.sum(axis=1, keepdims=True)


def _joint_hellinger(p, q):
    return 2.0 * _sphere_angle(p.ravel(), q.ravel())


def simulate_step_plan(plan: StepPlan, grid: int = 200, tau: float = 1.0) -> StepSimulation:
    """Walk every segment along its great circle and measure the joint length.

    Each segment is sampled at ``grid`` intervals; the measured length is the
    sum of Hellinger angles between consecutive joint distributions.
    """
    if grid < 1:
        raise ValueError("grid must be >= 1")
    chain = plan.initial
    total = plan.total_length
    joints = [chain.joint()]
    times = [0.0]
    seg_idx = [-1]
    seg_len = []
    clock = 0.0
    for k, seg in enumerate(plan.segments):
        dur = tau * seg.length / total if total > 0 else 0.0
        s = np.linspace(0.0, 1.0, grid + 1)[1:]
        measured = 0.0
        for sk, row in zip(s, _slerp_rows(seg.start, seg.end, s)):
            chain = _apply(chain, seg.factor, row)
            joint = chain.joint()
            measured += _joint_hellinger(joints[-1], joint)
            joints.append(joint)
            times.append(clock + sk * dur)
            seg_idx.append(k)
        clock += dur
        seg_len.append(measured)
    seg_len = np.array(seg_len)
    return StepSimulation(np.array(times), np.array(joints), np.array(seg_idx), float(seg_len.sum()), seg_len)


# --- pyramids -------------------------------------------------------------------------


@dataclass(frozen=True)
class PyramidBound:
    layers: int
    n_total: int
    length_bound: float
    w_diss_bound: float
    tau_beta_w_bound: float
    asymptotic_tau_beta_w: float

    def as_dict(self) -> dict:
        return {
            "layers": self.layers,
            "N_total": self.n_total,
            "length_bound": self.length_bound,
            "w_diss_bound": self.w_diss_bound,
            "tau_beta_w_bound": self.tau_beta_w_bound,
            "asymptotic_tau_beta_w": self.asymptotic_tau_beta_w,
        }


def pyramid_bound(spec: PyramidSpec, tau: float = 1.0, beta: float = 1.0) -> PyramidBound:
    """Step-protocol bound for erasing a layered pyramid.

    Each of the ``m - 1`` layer-to-layer handovers costs at most 2 pi of
    length. The asymptotic form expresses ``m`` through the total spin count.
    """
    if tau <= 0 or beta <= 0:
        raise ValueError("tau and beta must be positive")
    m, a, d = spec.layers, spec.aperture, spec.dimension
    n = spec.n_total
    length = 2.0 * (m - 1) * math.pi
    tbw = 4.0 * (m - 1) ** 2 * math.pi**2
    asym = (4.0 * math.pi**2 / a**2) * (a * d * n) ** (2.0 / d)
    return PyramidBound(m, n, length, tbw / (beta * tau), tbw, asym)
