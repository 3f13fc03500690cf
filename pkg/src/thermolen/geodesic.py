"""Geodesics of thermodynamic metrics and the dissipation functionals.

Time is normalised to [0, 1]. For a protocol ``lam(t)`` the action

    A = beta * int_0^1 lam'(t)^T m(lam(t)) lam'(t) dt

is the coefficient of the leading slow-driving dissipation: a run of
duration ``T`` dissipates ``A / T + O(1/T^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .errors import ConvergenceError, DomainError, ValidationError
from .metric import ChristoffelField, MetricField

DEFAULT_KNOTS = 201


@dataclass(frozen=True, eq=False)
class Protocol:
    """Curve on [0, 1] given by sampled values and velocities.

    Evaluation uses the piecewise-cubic Hermite interpolant of the samples
    unless an ``evaluator`` is attached: a callable ``t -> (values,
    velocities)`` on arrays of times, such as the dense output of the ODE
    solver that produced a geodesic. The samples are then a tabulation only.
    """

    knots: np.ndarray
    values: np.ndarray
    velocities: np.ndarray
    kind: str = "user"
    evaluator: object = field(default=None, repr=False)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        values = np.asarray(self.values, dtype=float).reshape(len(knots), -1)
        velocities = np.asarray(self.velocities, dtype=float).reshape(values.shape)
        if knots[0] != 0.0 or knots[-1] != 1.0 or np.any(np.diff(knots) <= 0):
            raise ValidationError("geodesic.Protocol: knots must increase from 0 to 1")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "velocities", velocities)
        object.__setattr__(self, "_spline", CubicHermiteSpline(knots, values, velocities, axis=0))

    @property
    def n_params(self) -> int:
        return self.values.shape[1]

    @property
    def start(self) -> np.ndarray:
        return self.values[0]

    @property
    def end(self) -> np.ndarray:
        return self.values[-1]

    def _evaluate(self, t, which: int):
        arr = np.asarray(t, dtype=float)
        out = self.evaluator(np.clip(np.atleast_1d(arr), 0.0, 1.0))[which]
        return out[0] if arr.ndim == 0 else out

    def __call__(self, t):
        return self._spline(t) if self.evaluator is None else self._evaluate(t, 0)

    def velocity(self, t):
        return self._spline(t, 1) if self.evaluator is None else self._evaluate(t, 1)

    def acceleration(self, t):
        return self._spline(t, 2)

    @classmethod
    def from_function(cls, fn, dfn, n_knots: int = DEFAULT_KNOTS, kind: str = "user") -> "Protocol":
        t = np.linspace(0.0, 1.0, n_knots)
        vals = np.array([np.atleast_1d(fn(s)) for s in t], dtype=float)
        vels = np.array([np.atleast_1d(dfn(s)) for s in t], dtype=float)
        return cls(t, vals, vels, kind)

    @classmethod
    def linear(cls, start, end, n_knots: int = 2) -> "Protocol":
        start = np.atleast_1d(np.asarray(start, dtype=float))
        end = np.atleast_1d(np.asarray(end, dtype=float))
        t = np.linspace(0.0, 1.0, n_knots)
        return cls(t, start + np.outer(t, end - start), np.tile(end - start, (n_knots, 1)), "linear")

    @classmethod
    def constant(cls, point) -> "Protocol":
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return cls(np.array([0.0, 1.0]), np.vstack([point, point]), np.zeros((2, point.size)), "user")


@dataclass(frozen=True, eq=False)
class GeodesicSolution:
    protocol: Protocol
    action: float
    length: float
    chart: str = ""
    diagnostics: dict = field(default_factory=dict)

    def tabulated(self) -> "GeodesicSolution":
        """Copy whose protocol interpolates the knot samples only (picklable, no solver state)."""
        p = self.protocol
        return GeodesicSolution(Protocol(p.knots, p.values, p.velocities, p.kind), self.action, self.length,
                                self.chart, self.diagnostics)

    def summary(self) -> dict:
        return {
            "action": self.action,
            "length": self.length,
            "chart": self.chart,
            "start": self.protocol.start.tolist(),
            "end": self.protocol.end.tolist(),
            "start_velocity": self.protocol.velocities[0].tolist(),
            "end_velocity": self.protocol.velocities[-1].tolist(),
            "diagnostics": self.diagnostics,
        }


# ------------------------------------------------------------------ functionals

QUAD_RTOL = 1e-10
QUAD_MAX_REFINE = 6


def _gauss_nodes(protocol: Protocol, order: int, split: int = 1):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = protocol.knots
    if split > 1:
        edges = np.concatenate([np.linspace(a, b, split + 1)[:-1] for a, b in zip(edges[:-1], edges[1:])]
                               + [edges[-1:]])
    a, b = edges[:-1], edges[1:]
    t = (0.5 * (b - a)[:, None] * (x + 1.0) + a[:, None]).ravel()
    wt = (0.5 * (b - a)[:, None] * w).ravel()
    return t, wt


def _integrate_protocol(integrand, protocol: Protocol, order: int, rtol: float) -> float:
    """Composite Gauss-Legendre over the knots, halving panels until two passes agree."""
    t, w = _gauss_nodes(protocol, order)
    prev = float(w @ integrand(t))
    for level in range(1, QUAD_MAX_REFINE + 1):
        t, w = _gauss_nodes(protocol, order, 2**level)
        cur = float(w @ integrand(t))
        if abs(cur - prev) <= rtol * abs(cur) + 1e-300:
            return cur
        prev = cur
    return prev


def speed_squared(field: MetricField, protocol: Protocol, t) -> np.ndarray:
    """Integrand lam'^T m(lam) lam' at the given times."""
    t = np.atleast_1d(t)
    lam, vel = protocol(t), protocol.velocity(t)
    return np.array([v @ field(l) @ v for l, v in zip(lam, vel)])


def action(field: MetricField, protocol: Protocol, beta: float = 1.0, order: int = 8,
           rtol: float = QUAD_RTOL) -> float:
    """Slow-driving dissipation coefficient ``beta int lam' m lam' dt``."""
    return beta * _integrate_protocol(lambda t: speed_squared(field, protocol, t), protocol, order, rtol)


def length(field: MetricField, protocol: Protocol, order: int = 8, rtol: float = QUAD_RTOL) -> float:
    """Thermodynamic length int sqrt(lam'^T m lam') dt."""
    return _integrate_protocol(lambda t: np.sqrt(np.maximum(speed_squared(field, protocol, t), 0.0)),
                               protocol, order, rtol)


# ------------------------------------------------------------- initial values

def _as_christoffel(christoffel) -> ChristoffelField:
    if isinstance(christoffel, ChristoffelField):
        return christoffel
    if isinstance(christoffel, MetricField):
        return ChristoffelField(christoffel)
    raise ValidationError("geodesic: expected a ChristoffelField or MetricField")


def _integrate(gamma: ChristoffelField, lambda0, v0, rtol, atol, method, dense=False, radius=None):
    """Integrate the geodesic equation; returns the solve_ivp result.

    Stage points outside the domain (or on a singular connection) yield a
    NaN derivative, which makes the solver reject and shrink the step; the
    result then records ``domain_time``, the last time reached.
    """
    field = gamma.metric
    n = gamma.n_params
    blocked = [None]

    def rhs(t, y):
        lam, v = y[:n], y[n:]
        try:
            accel = -np.einsum("ijk,j,k->i", gamma(lam), v, v)
        except DomainError:
            blocked[0] = t
            return np.full(2 * n, np.nan)
        return np.concatenate([v, accel])

    def exit_event(t, y):
        return field.margin(y[:n])

    exit_event.terminal = True
    exit_event.direction = -1
    events = [exit_event]
    if radius is not None:
        # trial curves that run far away cannot hit the target; stop them early
        def runaway(t, y):
            return radius - np.linalg.norm(y[:n] - lambda0)

        runaway.terminal = True
        events.append(runaway)
    y0 = np.concatenate([lambda0, v0])
    sol = solve_ivp(rhs, (0.0, 1.0), y0, method=method, rtol=rtol, atol=atol,
                    events=events, dense_output=dense)
    sol.domain_time = float(sol.t[-1]) if blocked[0] is not None and sol.status == -1 else None
    return sol


def geodesic_ivp(christoffel, lambda0, v0, n_knots: int = DEFAULT_KNOTS, rtol: float = 1e-10,
                 atol: float = 1e-12, method: str = "RK45") -> Protocol:
    """Integrate the geodesic equation on [0, 1] from ``lambda0`` with velocity ``v0``.

    Raises ``DomainError`` (with ``exit_time``) if the curve leaves the
    metric's admissible domain or runs into a singular connection.
    """
    gamma = _as_christoffel(christoffel)
    n = gamma.n_params
    lambda0 = gamma.metric.check_domain(lambda0)
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    if v0.shape != (n,) or not np.all(np.isfinite(v0)):
        raise ValidationError("geodesic.geodesic_ivp: v0 must be a finite vector matching the parameters")
    sol = _integrate(gamma, lambda0, v0, rtol, atol, method, dense=True)
    if sol.status == 1:
        t_exit = float(sol.t_events[0][0])
        raise DomainError(f"geodesic.geodesic_ivp: trajectory leaves the domain at t={t_exit:.6g}", exit_time=t_exit)
    if sol.domain_time is not None:
        raise DomainError(f"geodesic.geodesic_ivp: trajectory reaches the domain boundary or a singular "
                          f"connection at t={sol.domain_time:.6g}", exit_time=sol.domain_time)
    if sol.status != 0:
        raise ConvergenceError(f"geodesic.geodesic_ivp: integrator failed ({sol.message})")
    t = np.linspace(0.0, 1.0, n_knots)
    y = sol.sol(t)
    proto = Protocol(t, y[:n].T, y[n:].T, "geodesic", evaluator=DenseEvaluator(sol.sol, n))
    object.__setattr__(proto, "ivp_info", {"nfev": int(sol.nfev), "n_steps": int(len(sol.t) - 1)})
    return proto


class DenseEvaluator:
    """Values and velocities from an ODE dense output of the state (lam, lam').

    ``shift`` adds ``t * shift`` to the curve, used to pin the endpoint of
    a shooting solution to the exact target.
    """

    def __init__(self, dense, n: int, shift=None):
        self.dense = dense
        self.n = n
        self.shift = np.zeros(n) if shift is None else np.asarray(shift, dtype=float)

    def __call__(self, t):
        y = self.dense(t)
        return y[: self.n].T + np.outer(t, self.shift), y[self.n:].T + self.shift


def energy_drift(field: MetricField, protocol: Protocol) -> float:
    """Max relative deviation of lam'^T m lam' from its initial value along the knots."""
    e = speed_squared(field, protocol, protocol.knots)
    return float(np.max(np.abs(e - e[0])) / max(abs(e[0]), np.finfo(float).tiny))


# ------------------------------------------------------------ boundary values

def _newton(shoot, v, tol, max_iter):
    """Damped Newton on ``shoot(v) = 0`` with a finite-difference Jacobian.

    Returns ``(v, residual_vector, iterations)``; the residual is ``None``
    when the first shot already fails.
    """
    res = shoot(v)
    if res is None:
        return v, None, 0
    n = v.size
    it = 0
    while np.linalg.norm(res) > tol and it < max_iter:
        it += 1
        J = np.empty((n, n))
        for k in range(n):
            hk = 1e-6 * max(1.0, abs(v[k]))
            e = np.zeros(n)
            e[k] = hk
            rp, rm = shoot(v + e), shoot(v - e)
            if rp is not None and rm is not None:
                J[:, k] = (rp - rm) / (2 * hk)
            elif rp is not None:
                J[:, k] = (rp - res) / hk
            elif rm is not None:
                J[:, k] = (res - rm) / hk
            else:
                J[:, k] = np.nan
        if not np.all(np.isfinite(J)):
            break
        try:
            step = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -res, rcond=None)[0]
        damping = 1.0
        while damping > 1e-3:
            trial = v + damping * step
            r_trial = shoot(trial)
            if r_trial is not None and np.linalg.norm(r_trial) < np.linalg.norm(res):
                v, res = trial, r_trial
                break
            damping *= 0.5
        else:
            break
    return v, res, it


def geodesic_bvp(christoffel, lambda_A, lambda_B, *, n_knots: int = DEFAULT_KNOTS, tol: float = 1e-7,
                 max_iter: int = 25, scales=(1.0, 0.5, 2.0, 0.25, 4.0), continuation_steps: int = 8,
                 max_shots: int = 1500, beta: float = 1.0, rtol: float = 1e-10, atol: float = 1e-12,
                 method: str = "RK45") -> GeodesicSolution:
    """Shooting with damped Newton on the initial velocity.

    Starts from scaled chord velocities. If none converges, the target is
    moved from ``lambda_A`` to ``lambda_B`` in steps (natural continuation),
    each solve seeded by extrapolating the previous ones. At most
    ``max_shots`` trajectories are integrated; on failure the best residual
    is reported.
    """
    gamma = _as_christoffel(christoffel)
    field = gamma.metric
    n = gamma.n_params
    lambda_A = field.check_domain(lambda_A)
    lambda_B = field.check_domain(lambda_B)
    chord = lambda_B - lambda_A
    radius = 3.0 * max(float(np.linalg.norm(chord)), 1.0)

    shots = [0]

    def shooter(target):
        def shoot(v):
            shots[0] += 1
            if shots[0] > max_shots:
                raise _ShotBudget
            sol = _integrate(gamma, lambda_A, v, rtol, atol, method, radius=radius)
            if sol.status != 0:
                return None
            return sol.y[:n, -1] - target
        return shoot

    shoot_B = shooter(lambda_B)
    best = (np.inf, None)
    attempts = []
    try:
        best = _shooting_search(shooter, shoot_B, chord, lambda_A, n, tol, max_iter, scales,
                                continuation_steps, attempts)
    except _ShotBudget:
        attempts.append({"status": f"shot budget {max_shots} exhausted"})
        best = min(((a["residual"], None) for a in attempts if "residual" in a), default=(np.inf, None))
    residual, v0 = best
    if v0 is None or residual > tol:
        raise ConvergenceError(
            f"geodesic.geodesic_bvp: shooting did not converge (best residual {residual:.3e})",
            best_residual=residual,
        )
    proto = geodesic_ivp(gamma, lambda_A, v0, n_knots=n_knots, rtol=rtol, atol=atol, method=method)
    # pin the endpoint exactly with a linear shift of size below tol
    shift = lambda_B - proto.values[-1]
    evaluator = DenseEvaluator(proto.evaluator.dense, n, shift)
    values, velocities = evaluator(proto.knots)
    proto = Protocol(proto.knots, values, velocities, "geodesic", evaluator=evaluator)
    diagnostics = {
        "shooting_residual": residual,
        "initial_velocity": v0.tolist(),
        "attempts": attempts,
        "shots": shots[0],
        "energy_drift": energy_drift(field, proto),
    }
    return GeodesicSolution(proto, action(field, proto, beta), length(field, proto), field.chart, diagnostics)


class _ShotBudget(Exception):
    pass


def _shooting_search(shooter, shoot_B, chord, lambda_A, n, tol, max_iter, scales, continuation_steps, attempts):
    best = (np.inf, None)
    for scale in scales:
        v, res, it = _newton(shoot_B, scale * chord, tol, max_iter)
        if res is None:
            attempts.append({"scale": scale, "status": "left domain"})
            continue
        norm = float(np.linalg.norm(res))
        attempts.append({"scale": scale, "iterations": it, "residual": norm})
        if norm < best[0]:
            best = (norm, v.copy())
        if norm <= tol:
            break

    if best[0] > tol and continuation_steps > 0:
        s_prev, v_prev, v_cur, s_cur = 0.0, np.zeros(n), None, 0.0
        step = 1.0 / continuation_steps
        total_iter = 0
        while s_cur < 1.0 and step > 1e-3:
            s_next = min(1.0, s_cur + step)
            if v_cur is None:
                guess = s_next * chord
            else:
                guess = v_cur + (v_cur - v_prev) * (s_next - s_cur) / max(s_cur - s_prev, 1e-12)
            v, res, it = _newton(shooter(lambda_A + s_next * chord), guess, tol, max_iter)
            total_iter += it
            if res is not None and np.linalg.norm(res) <= tol:
                if v_cur is not None:
                    s_prev, v_prev = s_cur, v_cur
                s_cur, v_cur = s_next, v
                step = min(2 * step, 1.0 - s_cur) if s_cur < 1.0 else step
            else:
                step *= 0.5
        if s_cur >= 1.0 and v_cur is not None:
            best = (float(np.linalg.norm(shoot_B(v_cur))), v_cur)
        attempts.append({"continuation": True, "reached": s_cur, "iterations": total_iter})
    return best


def geodesic_1d(field: MetricField, a: float, b: float, *, n_knots: int = DEFAULT_KNOTS, beta: float = 1.0,
                rtol: float = 1e-10, atol: float = 1e-12) -> GeodesicSolution:
    """Geodesic of a one-parameter metric by inverting its arc length.

    In one dimension ``sqrt(m) lam'`` is conserved, so ``lam`` solves
    ``d lam / d sigma = 1 / sqrt(m(lam))`` in the arc length ``sigma``;
    integration stops when ``lam`` reaches ``b``.
    """
    if field.n_params != 1:
        raise ValidationError("geodesic.geodesic_1d: metric must have a single parameter")
    a = float(field.check_domain([a])[0])
    b = float(field.check_domain([b])[0])
    if a == b:
        return GeodesicSolution(Protocol.constant([a]), 0.0, 0.0, field.chart, {"length_integrator": "trivial"})
    sign = 1.0 if b > a else -1.0

    def speed(lam):
        m = float(field([lam])[0, 0])
        if not m > 0:
            raise DomainError(f"geodesic.geodesic_1d: metric not positive at {lam:.6g}")
        return np.sqrt(m)

    def rhs(sigma, y):
        return [sign / speed(y[0])]

    def arrive(sigma, y):
        return sign * (b - y[0])

    arrive.terminal = True
    grid = np.linspace(a, b, 65)
    bound = 2.0 * abs(b - a) * max(speed(x) for x in grid) + 1.0
    sol = solve_ivp(rhs, (0.0, bound), [a], rtol=rtol, atol=atol, events=arrive, dense_output=True)
    if sol.status != 1:
        raise ConvergenceError(f"geodesic.geodesic_1d: arc-length integration did not reach the endpoint ({sol.message})")
    total = float(sol.t_events[0][0])
    end_error = b - float(sol.y_events[0][0][0])

    def evaluator(t):
        vals = sol.sol(t * total)[0] + t * end_error
        vels = sign * total / np.array([speed(x) for x in vals])
        return vals[:, None], vels[:, None]

    t = np.linspace(0.0, 1.0, n_knots)
    values, velocities = evaluator(t)
    proto = Protocol(t, values, velocities, "geodesic", evaluator=evaluator)
    diagnostics = {"length_integrator": "arclength", "nfev": int(sol.nfev), "energy_drift": energy_drift(field, proto)}
    return GeodesicSolution(proto, beta * total ** 2, total, field.chart, diagnostics)
