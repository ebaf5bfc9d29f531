"""Metric, Christoffel symbols, geodesic integration and a shooting solver.

For a Hessian metric ``g = d^2 ln Z`` the Christoffel symbols reduce to
``Gamma^i_jk = 1/2 g^{il} d_l d_j d_k ln Z``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .core import (
    PSD_TOLERANCE,
    DissipationReport,
    MetricError,
    Trajectory,
    as_point,
)

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
FREEZE_LIMIT = 200.0
SECTION_FREEZE_FACTOR = 4.0
MAX_COORD_STEP = 0.01
MAX_TURN = 0.01


class DegenerateMetricError(MetricError):
    pass


class ShootingError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def metric_at(model, point, beta: float = 1.0) -> np.ndarray:
    g = np.atleast_2d(model.hess_ln_z(as_point(point, model.n_params), beta))
    g = 0.5 * (g + g.T)
    low = np.linalg.eigvalsh(g)[0]
    if low < -PSD_TOLERANCE * max(1.0, np.abs(g).max()):
        raise MetricError(f"metric not PSD at {point} (eigenvalue {low:.3e})")
    return g


def christoffel_at(model, point, beta: float = 1.0) -> np.ndarray:
    """``Gamma[i, j, k]``, symmetric in the lower indices j, k."""
    point = as_point(point, model.n_params)
    g = metric_at(model, point, beta)
    if np.linalg.cond(g) > COND_LIMIT:
        raise DegenerateMetricError(f"degenerate metric at {point}")
    third = np.atleast_3d(model.third_ln_z(point, beta)).reshape((model.n_params,) * 3)
    gamma = 0.5 * np.einsum("il,ljk->ijk", np.linalg.inv(g), third)
    return 0.5 * (gamma + np.transpose(gamma, (0, 2, 1)))


def _acceleration(model, lam, vel, beta):
    g, tvv = model.metric_and_contraction(lam, vel, beta)
    g = np.atleast_2d(g)
    tvv = np.atleast_1d(tvv)
    if g.shape[0] == 1:
        if not g[0, 0] > 0:
            raise DegenerateMetricError("degenerate metric")
        return -0.5 * tvv / g[0, 0]
    if g.shape[0] == 2:
        # closed-form 2x2 solve; det/trace^2 ~ smallest/largest eigenvalue
        a, b, c = g[0, 0], g[0, 1], g[1, 1]
        det = a * c - b * b
        tr = a + c
        if not (tr > 0 and det > tr * tr / COND_LIMIT):
            raise DegenerateMetricError("degenerate metric")
        t0, t1 = tvv
        return np.array([c * t0 - b * t1, a * t1 - b * t0]) * (-0.5 / det)
    ev = np.linalg.eigvalsh(g)
    if ev[0] <= ev[-1] / COND_LIMIT:
        raise DegenerateMetricError("degenerate metric")
    return -0.5 * np.linalg.solve(g, tvv)


def _rk4_step(model, y, h, beta, n):
    x, v = y[:n], y[n:]
    a1 = _acceleration(model, x, v, beta)
    v2 = v + 0.5 * h * a1
    a2 = _acceleration(model, x + 0.5 * h * v, v2, beta)
    v3 = v + 0.5 * h * a2
    a3 = _acceleration(model, x + 0.5 * h * v2, v3, beta)
    v4 = v + h * a3
    a4 = _acceleration(model, x + h * v3, v4, beta)
    out = np.empty_like(y)
    out[:n] = x + (h / 6.0) * (v + 2 * v2 + 2 * v3 + v4)
    out[n:] = v + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
    return out


def _speed(model, lam, vel, beta):
    g = np.atleast_2d(model.hess_ln_z(lam, beta))
    return math.sqrt(max(float(vel @ g @ vel), 0.0))


@dataclass
class GeodesicSolution:
    trajectory: Trajectory
    report: DissipationReport
    speed_profile: np.ndarray
    converged: bool
    shooting_ratio: float | None = None
    velocity: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def length(self) -> float:
        return self.report.length

    @property
    def tau_beta_w(self) -> float:
        return self.report.tau_beta_w

    def speed_variation(self) -> float:
        s = self.speed_profile
        return float(np.std(s) / np.mean(s)) if np.mean(s) > 0 else 0.0


def _report(model, points, length, w_diss, tau, beta) -> DissipationReport:
    delta_f = (model.ln_z(points[0], beta) - model.ln_z(points[-1], beta)) / beta
    nspin = getattr(model, "n_spins", None)
    return DissipationReport(
        length=length,
        w_diss=w_diss,
        delta_f=float(delta_f),
        beta=beta,
        tau=tau,
        landauer_reference=None if nspin is None else nspin * math.log(2.0) / beta,
    )


def _solution_from_states(model, states, tau, beta, n, converged, **extra) -> GeodesicSolution:
    """Package RK4 states sampled on a uniform parameter grid over [0, 1]."""
    m = len(states)
    times = np.linspace(0.0, tau, m)
    points = states[:, :n]
    # velocities per unit parameter -> per unit time
    speed = np.array([_speed(model, s[:n], s[n:], beta) for s in states]) / tau
    length = float(np.trapezoid(speed, times))
    w_diss = float(np.trapezoid(speed**2, times)) / beta
    report = _report(model, points, length, w_diss, tau, beta)
    return GeodesicSolution(Trajectory(times, points), report, speed, converged, **extra)


def integrate_geodesic(model, start, velocity, steps: int = 4000, beta: float = 1.0, tau: float = 1.0) -> GeodesicSolution:
    """Fixed-step RK4 integration of the geodesic equation.

    ``velocity`` is the initial velocity per unit of a parameter running over
    [0, 1]; the resulting curve is then placed on the time grid [0, tau].
    Hitting a degenerate (frozen) region stops the integration early and the
    partial solution is returned with ``converged=False``.
    """
    n = model.n_params
    y = np.concatenate([as_point(start, n), as_point(velocity, n)])
    h = 1.0 / steps
    states = [y]
    converged = True
    for _ in range(steps):
        try:
            y = _rk4_step(model, y, h, beta, n)
        except (DegenerateMetricError, np.linalg.LinAlgError, FloatingPointError, OverflowError):
            converged = False
            break
        if not np.all(np.isfinite(y)) or np.abs(y[:n]).max() > FREEZE_LIMIT / beta:
            converged = False
            break
        states.append(y)
    states = np.array(states)
    if not converged:
        # keep the reached fraction of the parameter interval on its own clock
        frac = (len(states) - 1) / steps
        sol = _solution_from_states(model, states, tau * max(frac, h), beta, n, False)
        sol.diagnostics["fraction_completed"] = frac
        return sol
    sol = _solution_from_states(model, states, tau, beta, n, True, velocity=np.asarray(velocity, float))
    return sol


def geodesic_residual(model, traj: Trajectory, beta: float = 1.0) -> tuple[float, float]:
    """Max of ``|lam'' + Gamma(lam', lam')|`` at interior samples, and ``max|lam'|^2``.

    Derivatives come from central differences on the (uniform) time grid.
    """
    t = traj.times
    x = traj.points
    h = t[1] - t[0]
    vel = (x[2:] - x[:-2]) / (2 * h)
    acc = (x[2:] - 2 * x[1:-1] + x[:-2]) / h**2
    worst = 0.0
    for k in range(len(vel)):
        gam = christoffel_at(model, x[k + 1], beta)
        res = acc[k] + np.einsum("ijk,j,k->i", gam, vel[k], vel[k])
        worst = max(worst, float(np.abs(res).max()))
    return worst, float((np.abs(vel) ** 2).max())


# --- shooting ----------------------------------------------------------------------------


@dataclass
class _Trial:
    theta: float
    hit: float  # section coordinate where the curve lands; +inf when it never returns
    length: float
    velocity: np.ndarray
    states: np.ndarray | None = None  # (s, lam, lam') rows when recorded


class _Shooter:
    def __init__(self, model, start, eps_final, beta, s_max, h):
        self.model = model
        self.start = start
        self.eps_final = eps_final
        self.beta = beta
        self.n = model.n_params
        self.s_max = s_max
        self.h = h
        self.calls = 0
        # trials whose coordinates run this far out are treated as frozen
        self.limit = SECTION_FREEZE_FACTOR * max(1.0, abs(eps_final), float(np.abs(start).max())) / beta

    def unit_velocity(self, theta):
        v = np.zeros(self.n)
        v[0], v[1] = math.cos(theta), math.sin(theta)
        return v / _speed(self.model, self.start, v, self.beta)

    def event(self, y):
        return y[1] - self.start[1]

    def trial(self, theta, h=None, record=False) -> _Trial:
        """Integrate at unit metric speed until the curve returns to ``J = J(0)``."""
        self.calls += 1
        h = self.h if h is None else h
        # coarse scan trials relax the step limits in proportion
        relax = h / self.h
        max_reach, max_turn = MAX_COORD_STEP * relax, MAX_TURN * relax
        n, model, beta = self.n, self.model, self.beta
        v0 = self.unit_velocity(theta)
        y = np.concatenate([self.start, v0])
        s = 0.0
        rows = [np.concatenate([[0.0], y])] if record else None
        side = math.copysign(1.0, math.sin(theta))
        try:
            turn = 0.0  # relative velocity change per unit s over the last step
            while s < self.s_max:
                # near frozen corners the coordinates race and the velocity turns fast:
                # shrink the step so neither changes too much at once
                reach = h * np.abs(y[n:]).max()
                hk = h if reach <= max_reach else h * max_reach / reach
                if turn * hk > max_turn:
                    hk = max_turn / turn
                y_new = _rk4_step(model, y, hk, beta, n)
                vnorm = np.abs(y[n:]).max()
                turn = np.abs(y_new[n:] - y[n:]).max() / (vnorm * hk) if vnorm > 0 else 0.0
                if not np.all(np.isfinite(y_new)) or np.abs(y_new[:n]).max() > self.limit:
                    break
                if side * self.event(y_new) <= 0:
                    delta = self._locate(y, hk)
                    y_hit = _rk4_step(model, y, delta, beta, n)
                    if record:
                        rows.append(np.concatenate([[s + delta], y_hit]))
                    return _Trial(theta, float(y_hit[0]), s + delta, v0, np.array(rows) if record else None)
                y, s = y_new, s + hk
                if record:
                    rows.append(np.concatenate([[s], y]))
        except (DegenerateMetricError, np.linalg.LinAlgError, OverflowError):
            pass
        return _Trial(theta, math.inf, s, v0)

    def _locate(self, y, h):
        def f(delta):
            return self.event(_rk4_step(self.model, y, delta, self.beta, self.n))

        flo, fhi = f(0.0), f(h)
        if flo == 0:
            return 0.0
        if flo * fhi > 0:
            return h
        return brentq(f, 0.0, h, xtol=1e-14 * h, rtol=4 * np.finfo(float).eps)


def _reference_length(model, start, eps_final, beta, n) -> float:
    """Length of the coordinate-straight path to the target; sets the trial step.

    Midpoint quadrature keeps this exactly proportional to any overall scale of
    ln Z, so models that differ only by such a factor are integrated on
    identical coordinate grids.
    """
    end = start.copy()
    end[0] = eps_final
    ts = np.linspace(0.0, 1.0, 2001)
    mids = start + np.outer(0.5 * (ts[1:] + ts[:-1]), end - start)
    d = (end - start) * (ts[1] - ts[0])
    total = 0.0
    for mid in mids:
        g = np.atleast_2d(model.hess_ln_z(mid, beta))
        total += math.sqrt(max(float(d @ g @ d), 0.0))
    return total


def _resample(model, rows, n, steps, tau, beta, converged, target=None, factor=1.0, **extra) -> GeodesicSolution:
    """Cubic Hermite resampling of recorded unit-speed states onto a uniform grid.

    ``model`` is the one that was integrated; when it is the per-spin form of
    ``target`` the metric differs by ``factor`` and lengths scale by its root.
    """
    s = rows[:, 0]
    spline = CubicHermiteSpline(s, rows[:, 1 : 1 + n], rows[:, 1 + n :], axis=0)
    length = float(s[-1])
    grid = np.linspace(0.0, length, steps + 1)
    states = np.empty((steps + 1, 2 * n))
    states[:, :n] = spline(grid)
    # per unit of a parameter on [0, 1]
    states[:, n:] = spline(grid, 1) * length
    # keep the exact recorded endpoints
    states[0, :n] = rows[0, 1 : 1 + n]
    states[-1, :n] = rows[-1, 1 : 1 + n]
    # length and dissipation from the integrator's own nodes: near frozen corners
    # the coordinates move fast and spline derivatives lose accuracy
    unit = np.array([_speed(model, r[1 : 1 + n], r[1 + n :], beta) for r in rows])
    scale = length / tau
    root = math.sqrt(factor)
    arclength = root * float(np.trapezoid(unit, s))
    w_diss = factor * scale * float(np.trapezoid(unit**2, s)) / beta
    speed = np.interp(grid, s, unit) * scale * root
    report = _report(model if target is None else target, states[:, :n], arclength, w_diss, tau, beta)
    extra.setdefault("diagnostics", {})["speed_drift"] = float(np.abs(unit - 1.0).max())
    return GeodesicSolution(Trajectory(np.linspace(0.0, tau, steps + 1), states[:, :n]), report, speed, converged, **extra)


def _shoot_1d(model, start, eps_final, beta, tau, steps, diagnostics):
    """One control parameter: every curve is a geodesic, so only the clock matters.

    Integrate the arclength ``ds/d eps = sqrt(g)``, which stays bounded even
    for enormous final fields, then invert it on a uniform time grid so the
    metric speed is constant.
    """
    e0 = float(start[0])

    def rate(eps, _s):
        g = float(np.atleast_2d(model.hess_ln_z([eps], beta))[0, 0])
        return [math.sqrt(max(g, 0.0))]

    lo, hi = sorted((e0, float(eps_final)))
    res = solve_ivp(rate, (lo, hi), [0.0], method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
    if not res.success:
        raise ShootingError(f"arclength integration failed: {res.message}", diagnostics)
    nodes = res.t
    s_nodes = res.y[0]
    length = float(s_nodes[-1])
    if length <= 0:
        raise ShootingError("target unreachable: zero metric along the line", diagnostics)
    # arclength measured from the start, in the direction of travel
    forward = eps_final > e0

    def arc(eps):
        val = float(res.sol(eps)[0])
        return val if forward else length - val

    targets = np.linspace(0.0, length, steps + 1)
    pts = np.empty(steps + 1)
    pts[0], pts[-1] = e0, float(eps_final)
    arc_nodes = s_nodes if forward else length - s_nodes
    for k in range(1, steps):
        goal = targets[k]
        if forward:
            idx = int(np.clip(np.searchsorted(arc_nodes, goal), 1, nodes.size - 1))
            a, b = nodes[idx - 1], nodes[idx]
        else:
            idx = int(np.clip(np.searchsorted(-arc_nodes, -goal), 1, nodes.size - 1))
            a, b = nodes[idx], nodes[idx - 1]
        fa, fb = arc(a) - goal, arc(b) - goal
        if fa * fb > 0:
            # the remaining arclength is below rounding: the curve is already frozen here
            pts[k] = b if abs(fb) < abs(fa) else a
        else:
            pts[k] = brentq(lambda e: arc(e) - goal, a, b, xtol=1e-13, rtol=4 * np.finfo(float).eps)
    diagnostics["endpoint_miss"] = 0.0
    diagnostics["arclength"] = length
    speed = np.full(steps + 1, length / tau)
    report = _report(model, pts[:, None], length, length**2 / (beta * tau), tau, beta)
    g0 = float(np.atleast_2d(model.hess_ln_z(start, beta))[0, 0])
    vel0 = np.array([math.copysign(length / math.sqrt(g0), eps_final - e0)])
    return GeodesicSolution(
        Trajectory(np.linspace(0.0, tau, steps + 1), pts[:, None]), report, speed, True, velocity=vel0, diagnostics=diagnostics
    )


def shoot_geodesic(
    model,
    start=None,
    eps_final: float = 5.0,
    beta: float = 1.0,
    tau: float = 1.0,
    steps: int = 4000,
    n_scan: int = 64,
    tol: float = 1e-8,
) -> GeodesicSolution:
    """Geodesic from ``start`` to the section ``{eps = eps_final, J = J(0)}``.

    For two-parameter models the initial direction angle
    ``theta = atan2(J'(0), eps'(0))`` is scanned over (-pi/2, pi/2); each trial
    is integrated with fixed-step RK4 at unit metric speed until it returns to
    the ``J = J(0)`` line, and the landing value of ``eps`` is bracketed and
    root-solved in ``theta``. The converged trial is resampled onto ``steps``
    uniform intervals of [0, tau]. One-parameter models integrate the
    arclength equation directly.
    """
    n = model.n_params
    if n not in (1, 2):
        raise ValueError("shooting is implemented for one- and two-parameter models")
    start = as_point(np.zeros(n) if start is None else start, n)
    if eps_final == start[0]:
        states = np.tile(np.concatenate([start, np.zeros(n)]), (steps + 1, 1))
        return _solution_from_states(model, states, tau, beta, n, True, velocity=np.zeros(n))
    diagnostics: dict = {}
    if n == 1:
        return _shoot_1d(model, start, eps_final, beta, tau, steps, diagnostics)

    target, factor = model, 1.0
    intensive = getattr(model, "intensive_form", None)
    if intensive is not None and intensive() is not None:
        # integrate the per-spin metric so the curve is bitwise independent of N
        model, factor = intensive()
    l_ref = _reference_length(model, start, eps_final, beta, n)
    shooter = _Shooter(model, start, eps_final, beta, 1.5 * l_ref, l_ref / steps)
    diagnostics["reference_length"] = l_ref * math.sqrt(factor)
    best = _solve_direction(shooter, eps_final, n_scan, tol, diagnostics)
    rec = shooter.trial(best.theta, record=True)
    diagnostics["trials"] = shooter.calls
    miss = abs(rec.hit - eps_final)
    diagnostics["endpoint_miss"] = float(miss)
    diagnostics["theta"] = best.theta
    converged = bool(miss < max(1e-6, 10 * tol))
    ratio = math.inf if rec.velocity[1] == 0 else float(rec.velocity[0] / rec.velocity[1])
    return _resample(
        model,
        rec.states,
        n,
        steps,
        tau,
        beta,
        converged,
        target=target,
        factor=factor,
        shooting_ratio=ratio,
        velocity=rec.velocity * rec.length,
        diagnostics=diagnostics,
    )


def _solve_direction(shooter, eps_final, n_scan, tol, diagnostics):
    margin = 1e-3
    thetas = np.linspace(-math.pi / 2 + margin, math.pi / 2 - margin, n_scan)
    thetas = thetas[np.abs(thetas) > 1e-9]
    coarse_h = shooter.h * 8
    hits = np.array([shooter.trial(th, coarse_h).hit for th in thetas])
    diagnostics["scan_theta"] = thetas.tolist()
    diagnostics["scan_hit"] = [float(x) if math.isfinite(x) else None for x in hits]
    diagnostics["monotone"] = _monotone_runs(hits)
    if not diagnostics["monotone"]:
        warnings.warn("shooting map is not monotone between returning directions", stacklevel=3)

    brackets = []
    for i in range(len(thetas) - 1):
        if thetas[i] * thetas[i + 1] < 0:
            # straddles the direction tangent to the section: a jump, not a root
            continue
        a, b = hits[i] - eps_final, hits[i + 1] - eps_final
        if math.isfinite(a) and math.isfinite(b):
            if a * b <= 0:
                brackets.append((thetas[i], thetas[i + 1]))
        elif math.isfinite(a) != math.isfinite(b) and min(a, b) < 0:
            # a landing behind the start cannot diverge continuously toward the target
            finite_hit = min(hits[i], hits[i + 1])
            if (finite_hit - shooter.start[0]) * (eps_final - shooter.start[0]) > 0:
                brackets.append((thetas[i], thetas[i + 1]))

    cache: dict[float, _Trial] = {}

    def run(theta):
        if theta not in cache:
            cache[theta] = shooter.trial(theta)
        return cache[theta]

    def miss(theta):
        # atan compactifies the landing map: non-returning trials (+inf) join continuously
        return math.atan(run(theta).hit - eps_final)

    solutions = []
    for lo, hi in brackets:
        try:
            theta = brentq(miss, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        except ValueError:
            continue
        trial = run(theta)
        if math.isfinite(trial.hit) and abs(trial.hit - eps_final) < tol:
            solutions.append(trial)
    diagnostics["n_brackets"] = len(brackets)
    diagnostics["n_solutions"] = len(solutions)
    if not solutions:
        raise ShootingError("target unreachable in scan range", diagnostics)
    if len(solutions) > 1:
        warnings.warn(f"{len(solutions)} shooting solutions found; keeping the shortest", stacklevel=3)
    return min(solutions, key=lambda t: t.length)


def _monotone_runs(hits) -> bool:
    """True when every run of consecutive finite landing values is monotone."""
    run = []
    for x in list(hits) + [math.inf]:
        if math.isfinite(x):
            run.append(x)
            continue
        if len(run) > 2:
            d = np.diff(run)
            if not (np.all(d >= 0) or np.all(d <= 0)):
                return False
        run = []
    return True
