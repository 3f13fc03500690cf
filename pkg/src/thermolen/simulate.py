"""Finite-time propagation of driven Lindblad dynamics and its thermodynamic bookkeeping.

Runs are integrated in the normalised time ``s = t / T`` so that the same
protocol object drives every duration. Besides the state the integrator
carries two running integrals: the work done on the system
``int Tr[rho dH]`` and the entropy production ``int sigma dt``.
Sign conventions: ``W`` is the work *extracted* from the system, heat
``Q = dU + W`` flows into it, and ``W_diss = -(W + dF_neq) >= 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import lindblad, opcore
from .errors import DomainError, IntegratorError, SingularityError, ValidationError
from .geodesic import Protocol, action
from .metric import MetricField, ModelMetricField, ParamModel

log = logging.getLogger(__name__)

POSITIVITY_WARN = 1e-8
POSITIVITY_FAIL = 1e-6
LOG_FLOOR = 1e-300


@dataclass(frozen=True, eq=False)
class SimulationRun:
    """Immutable record of one propagation.

    Arrays are indexed by record time. ``work_on`` is the cumulative work
    done on the system, ``entropy_production`` the cumulative
    ``int sigma dt``.
    """

    model: ParamModel
    protocol: Protocol
    T: float
    rtol: float
    atol: float
    method: str
    times: np.ndarray
    states: np.ndarray
    power: np.ndarray
    sigma: np.ndarray
    work_on: np.ndarray
    entropy_production: np.ndarray
    free_energy: np.ndarray
    distance: np.ndarray
    energy: np.ndarray
    entropy: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def work(self) -> np.ndarray:
        """Cumulative extracted work."""
        return -self.work_on

    @property
    def heat(self) -> np.ndarray:
        return self.energy - self.energy[0] + self.work

    def rows(self) -> list[dict]:
        return [
            {"t[tau]": t, "W[1/beta]": w, "Q[1/beta]": q, "sigma_dot[1/tau]": sd, "trace_dist[-]": d}
            for t, w, q, sd, d in zip(self.times, self.work, self.heat, self.sigma, self.distance)
        ]


@dataclass(frozen=True)
class DissipationRecord:
    W: float
    dF_neq: float
    W_diss: float
    prediction: float
    relative_error: float
    Q: float
    dS: float
    entropy_production: float
    identity_residual: float

    def summary(self) -> dict:
        return dict(self.__dict__)


# ----------------------------------------------------------------- internals

def _hamiltonian_rate(model: ParamModel, protocol: Protocol, s: float, lam=None):
    """dH/ds from the spline's analytic velocity."""
    lam = protocol(s) if lam is None else lam
    vel = protocol.velocity(s)
    return sum(v * x for v, x in zip(vel, model.tangent_ops(lam)))


def _log_floor(rho: np.ndarray) -> tuple[np.ndarray, float]:
    p, U = np.linalg.eigh(rho)
    return (U * np.log(np.maximum(p, LOG_FLOOR))) @ U.conj().T, float(p[0])


def _sigma(gen: lindblad.LindbladGenerator, rho: np.ndarray, drho: np.ndarray) -> float:
    log_rho, _ = _log_floor(rho)
    return float(-np.real(np.trace(drho @ (log_rho - gen.stationary.log_matrix()))))


def _check_protocol(model: ParamModel, protocol: Protocol):
    if protocol.n_params != model.n_params:
        raise ValidationError(
            f"simulate.propagate: protocol has {protocol.n_params} parameters, model {model.n_params}"
        )
    for s in np.linspace(0.0, 1.0, 33):
        model.check_domain(protocol(s))


# ------------------------------------------------------------------ propagate

def propagate(model: ParamModel, protocol: Protocol, T: float, rho0=None, *, n_records: int = 201,
              method: str = "LSODA", rtol: float = 1e-10, atol: float = 1e-10) -> SimulationRun:
    """Integrate ``drho/dt = L_t[rho]`` along ``lam(t / T)``.

    ``rho0`` defaults to the Gibbs state at the protocol's start.
    """
    if not np.isfinite(T) or T <= 0:
        raise DomainError(f"simulate.propagate: duration must be positive, got {T!r}")
    _check_protocol(model, protocol)
    omega0 = model.gibbs(protocol(0.0))
    d = omega0.dim
    rho0 = omega0.matrix if rho0 is None else opcore.as_density_matrix(rho0)
    if rho0.shape != (d, d):
        raise ValidationError("simulate.propagate: rho0 has the wrong dimension")
    n = d * d
    basis = opcore.hermitian_basis(d)
    min_eig, min_sigma = [np.inf], [np.inf]

    def rhs(s, y):
        lam = protocol(s)
        gen = model.generator(lam)
        rho = np.einsum("k,kij->ij", y[:n], basis)
        drho = gen.apply(rho)
        dH = _hamiltonian_rate(model, protocol, s, lam)
        log_rho, pmin = _log_floor(rho)
        min_eig[0] = min(min_eig[0], pmin)
        sigma = -np.real(np.trace(drho @ (log_rho - gen.stationary.log_matrix())))
        if pmin > 0:
            min_sigma[0] = min(min_sigma[0], sigma)
        out = np.empty(n + 2)
        out[:n] = T * opcore.real_coordinates(drho)
        out[n] = np.real(np.trace(rho @ dH))
        out[n + 1] = T * sigma
        return out

    y0 = np.concatenate([opcore.real_coordinates(rho0), [0.0, 0.0]])
    s_eval = np.linspace(0.0, 1.0, n_records)
    sol = solve_ivp(rhs, (0.0, 1.0), y0, method=method, t_eval=s_eval, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise IntegratorError(f"simulate.propagate: integrator failed ({sol.message})")

    states, power, sigma, free, dist, energy, entropy = [], [], [], [], [], [], []
    worst = np.inf
    trace_drift = herm_drift = 0.0
    for s, y in zip(sol.t, sol.y.T):
        lam = protocol(s)
        gen = model.generator(lam)
        rho = np.einsum("k,kij->ij", y[:n], basis)
        H = model.hamiltonian(lam)
        p = np.linalg.eigvalsh(rho)
        worst = min(worst, p[0])
        trace_drift = max(trace_drift, abs(np.trace(rho).real - 1.0))
        herm_drift = max(herm_drift, np.max(np.abs(rho - rho.conj().T)))
        if p[0] < -POSITIVITY_FAIL:
            raise IntegratorError(
                f"simulate.propagate: positivity violated (eigenvalue {p[0]:.2e} at t={s * T:.4g})",
                best_residual=float(-p[0]),
            )
        drho = gen.apply(rho)
        omega = gen.stationary
        states.append(rho)
        power.append(np.real(np.trace(rho @ _hamiltonian_rate(model, protocol, s, lam))) / T)
        sigma.append(_sigma(gen, rho, drho))
        free.append(opcore.free_energy(rho, H, model.beta))
        dist.append(np.sum(np.abs(np.linalg.eigvalsh(rho - omega.matrix))))
        energy.append(opcore.expect(rho, H))
        entropy.append(opcore.von_neumann_entropy(rho))
    if worst < -POSITIVITY_WARN:
        log.warning("simulate.propagate: smallest eigenvalue %.2e below -1e-8", worst)
    diagnostics = {"nfev": int(sol.nfev), "min_eigenvalue": float(worst), "trace_drift": float(trace_drift),
                   "hermiticity_drift": float(herm_drift), "min_eigenvalue_steps": float(min_eig[0]),
                   "min_sigma_steps": float(min_sigma[0])}
    return SimulationRun(model, protocol, float(T), rtol, atol, method, sol.t * T, np.array(states),
                         np.array(power), np.array(sigma), sol.y[n], sol.y[n + 1], np.array(free),
                         np.array(dist), np.array(energy), np.array(entropy), diagnostics)


def work_accounting(run: SimulationRun, metric: MetricField | None = None) -> DissipationRecord:
    """Work, free-energy change, dissipation and the heat/entropy identity of a run.

    The slow-driving prediction ``action / T`` uses ``metric`` (default:
    the full metric of the run's model).
    """
    W = float(run.work[-1])
    dF = float(run.free_energy[-1] - run.free_energy[0])
    W_diss = -(W + dF)
    field = metric if metric is not None else ModelMetricField(run.model)
    prediction = action(field, run.protocol, run.model.beta) / run.T
    Q = float(run.heat[-1])
    dS = float(run.entropy[-1] - run.entropy[0])
    ep = float(run.entropy_production[-1])
    rel = abs(W_diss - prediction) / abs(prediction) if prediction != 0 else abs(W_diss)
    return DissipationRecord(W, dF, W_diss, prediction, rel, Q, dS, ep, run.model.beta * Q - dS + ep)


def entropy_rate_trace(run: SimulationRun) -> tuple[np.ndarray, np.ndarray]:
    """Record times and the instantaneous entropy production rate."""
    return run.times.copy(), run.sigma.copy()


# ----------------------------------------------------------- slow driving

def _first_correction(model: ParamModel, protocol: Protocol, s: float) -> np.ndarray:
    """L+[d omega / ds] at normalised time s."""
    lam = protocol(s)
    gen = model.generator(lam)
    omega = gen.stationary
    d_omega = opcore.gibbs_derivative(omega, _hamiltonian_rate(model, protocol, s, lam))
    return lindblad.drazin_traceless(gen).apply(d_omega)


def slow_driving_state(model: ParamModel, protocol: Protocol, s: float, T: float, order: int = 1,
                       h: float = 1e-4) -> np.ndarray:
    """Truncated adiabatic expansion of the state at normalised time ``s``.

    Order 2 differentiates the first correction by centred differences
    (one-sided at the ends of [0, 1]).
    """
    if order not in (0, 1, 2):
        raise ValidationError("simulate.slow_driving_state: order must be 0, 1 or 2")
    lam = model.check_domain(protocol(s))
    rho = model.gibbs(lam).matrix
    if order == 0:
        return rho
    first = _first_correction(model, protocol, s)
    rho = rho + first / T
    if order == 2:
        lo, hi = max(0.0, s - h), min(1.0, s + h)
        deriv = (_first_correction(model, protocol, hi) - _first_correction(model, protocol, lo)) / (hi - lo)
        gen = model.generator(lam)
        rho = rho + lindblad.drazin_traceless(gen).apply(opcore.symmetrize(deriv)) / T**2
    return opcore.symmetrize(rho, "in slow_driving_state")


# -------------------------------------------------------- discrete protocols

def discrete_protocol_dissipation(model: ParamModel, lambda_steps, beta: float | None = None) -> float:
    """Dissipation of a sequence of quenches each followed by full thermalisation.

    Each step contributes ``S(omega_i || omega_{i+1}) / beta``.
    """
    beta = model.beta if beta is None else float(beta)
    steps = np.atleast_2d(np.asarray(lambda_steps, dtype=float))
    if steps.shape[0] == 1 and model.n_params != 1 and steps.shape[1] == 1:
        steps = steps.T
    if steps.shape[1] != model.n_params:
        steps = steps.reshape(-1, model.n_params)
    states = [opcore.gibbs_state(model.hamiltonian(model.check_domain(l)), beta) for l in steps]
    total = 0.0
    for a, b in zip(states[:-1], states[1:]):
        total += opcore.relative_entropy(a.matrix, b)
    return total / beta


def uniform_steps(start, end, n_steps: int) -> np.ndarray:
    start, end = np.atleast_1d(start).astype(float), np.atleast_1d(end).astype(float)
    return start + np.outer(np.linspace(0.0, 1.0, n_steps + 1), end - start)


def relative_entropy_quadratic(rho, direction) -> float:
    """Second-order coefficient of S(rho || rho + eps * direction) in eps."""
    rho = opcore.as_density_matrix(rho)
    p, U = np.linalg.eigh(rho)
    if p[0] <= 0:
        raise SingularityError("simulate.relative_entropy_quadratic: rho must be full rank")
    state = opcore.gibbs_state(-(U * np.log(p)) @ U.conj().T, 1.0)
    direction = opcore.as_hermitian(direction, "direction")
    return 0.5 * float(np.real(np.trace(direction @ opcore.j_inverse_apply(state, direction))))


# ------------------------------------------------------------- convergence

def convergence_fit(x, err) -> tuple[float, float]:
    """Least-squares slope and intercept of log|err| against log x."""
    x = np.asarray(x, dtype=float)
    err = np.abs(np.asarray(err, dtype=float))
    slope, intercept = np.polyfit(np.log(x), np.log(err), 1)
    return float(slope), float(intercept)
