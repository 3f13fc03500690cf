"""Concrete systems: transverse-field Ising chain and a qubit in a bosonic bath.

Ising chain (thermodynamic limit, energies in units of J, times in units
of tau, Gibbs-mixing relaxation). Per-site log partition function

    f(g) = (1/2pi) int_0^{2pi} log(2 cosh(beta eps_k / 2)) dk,
    eps_k = 2 sqrt(1 + g^2 - 2 g cos k),

and metric ``m(g) = tau f''(g) / beta^2``. ``eps_k`` is evaluated as
``2 sqrt((1 - g)^2 + 4 g sin^2(k/2))`` to stay accurate at the critical
point.

Qubit: ``H = r (sin t cos p, sin t sin p, cos t) . sigma`` (gap 2r) with
the bosonic-bath generator of :mod:`thermolen.lindblad`. Closed form

    m = r^-alpha diag(l_d, l_q r^2, l_q r^2 sin^2 t),
    l_d = tanh(x) / cosh^2(x),  l_q = 2 tanh^2(x) / x,  x = beta r.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import lindblad, opcore
from .errors import DomainError
from .geodesic import Protocol, action, geodesic_1d, geodesic_bvp
from .metric import ChristoffelField, FunctionMetricField, MetricField, ParamModel

log = logging.getLogger(__name__)

# ============================================================== Ising chain

ISING_NODES = 2048
ISING_MAX_NODES = 2 ** 16
ISING_RTOL = 1e-10


def ising_dispersion(k, g, J: float = 1.0):
    """Quasiparticle energies eps_k >= 0."""
    k = np.asarray(k, dtype=float)
    return 2.0 * J * np.sqrt((1.0 - g) ** 2 + 4.0 * g * np.sin(0.5 * k) ** 2)


def _dispersion_derivatives(k, g):
    """eps and its first three g-derivatives (J = 1)."""
    q = (1.0 - g) ** 2 + 4.0 * g * np.sin(0.5 * k) ** 2
    sq = np.sqrt(q)
    dq = 2.0 * (g - np.cos(k))
    s2 = np.sin(k) ** 2
    return 2.0 * sq, dq / sq, 2.0 * s2 / (q * sq), -3.0 * s2 * dq / (q * q * sq)


def _momentum_average(integrand, n_nodes: int, rtol: float, max_nodes: int) -> float:
    """Midpoint rule over [0, 2pi) with node doubling until successive values agree."""
    n = n_nodes
    k = 2.0 * np.pi * (np.arange(n) + 0.5) / n
    prev = float(np.mean(integrand(k)))
    while n < max_nodes:
        n *= 2
        k = 2.0 * np.pi * (np.arange(n) + 0.5) / n
        vals = integrand(k)
        cur = float(np.mean(vals))
        # scale by the mean magnitude so integrals that vanish by symmetry still terminate
        if abs(cur - prev) <= rtol * max(abs(cur), float(np.mean(np.abs(vals))), 1e-300):
            return cur
        prev = cur
    log.warning("ising quadrature reached %d nodes without meeting rtol=%.0e", max_nodes, rtol)
    return prev


def _check_g(g):
    if not np.isfinite(g) or g < 0:
        raise DomainError(f"models.ising: g must be non-negative, got {g!r}")


def ising_log_z_density(g: float, beta: float, n_nodes: int = ISING_NODES) -> float:
    """Per-site log partition function in the thermodynamic limit."""
    _check_g(g)

    def integrand(k):
        x = 0.5 * beta * ising_dispersion(k, g)
        return np.logaddexp(x, -x)  # log(2 cosh x)

    return _momentum_average(integrand, n_nodes, ISING_RTOL, ISING_MAX_NODES)


def ising_log_z_derivative(g: float, beta: float, order: int, n_nodes: int = ISING_NODES) -> float:
    """Analytic g-derivative (order 1, 2 or 3) of the per-site log partition function."""
    _check_g(g)
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")

    def integrand(k):
        e, e1, e2, e3 = _dispersion_derivatives(k, g)
        u, u1, u2, u3 = 0.5 * beta * e, 0.5 * beta * e1, 0.5 * beta * e2, 0.5 * beta * e3
        th = np.tanh(u)
        e = np.exp(-2.0 * u)  # u >= 0
        sech2 = 4.0 * e / (1.0 + e) ** 2
        if order == 1:
            return u1 * th
        if order == 2:
            return u2 * th + u1 ** 2 * sech2
        return u3 * th + 3.0 * u1 * u2 * sech2 - 2.0 * u1 ** 3 * sech2 * th

    return _momentum_average(integrand, n_nodes, ISING_RTOL, ISING_MAX_NODES)


def ising_metric(g: float, beta: float, tau: float = 1.0, n_nodes: int = ISING_NODES) -> float:
    """tau * f''(g) / beta^2: KMB metric per site under Gibbs-mixing relaxation."""
    return tau * ising_log_z_derivative(g, beta, 2, n_nodes) / beta ** 2


def ising_metric_derivative(g: float, beta: float, tau: float = 1.0, n_nodes: int = ISING_NODES) -> float:
    return tau * ising_log_z_derivative(g, beta, 3, n_nodes) / beta ** 2


def ising_christoffel(g: float, beta: float, n_nodes: int = ISING_NODES) -> float:
    """Gamma = f'''(g) / (2 f''(g)), independent of the metric's constant prefactor."""
    return 0.5 * ising_log_z_derivative(g, beta, 3, n_nodes) / ising_log_z_derivative(g, beta, 2, n_nodes)


class IsingMetric(MetricField):
    """One-parameter metric field of the Ising chain on g >= 0."""

    n_params = 1
    chart = "g"

    def __init__(self, beta: float, tau: float = 1.0, n_nodes: int = ISING_NODES, cache: bool = True):
        self.beta = float(beta)
        self.tau = float(tau)
        self.n_nodes = n_nodes
        super().__init__(cache=cache)

    def margin(self, lam):
        return float(np.asarray(lam, dtype=float).ravel()[0])

    def _evaluate(self, lam):
        return np.array([[ising_metric(lam[0], self.beta, self.tau, self.n_nodes)]])

    def analytic_derivatives(self, lam):
        return np.array([[[ising_metric_derivative(lam[0], self.beta, self.tau, self.n_nodes)]]])

    def christoffel_field(self) -> ChristoffelField:
        return ChristoffelField(self, override=lambda lam: ising_christoffel(lam[0], self.beta, self.n_nodes))


def ising_geodesic(beta: float, g_start: float = 0.0, g_end: float = 5.0, method: str = "arclength", **kwargs):
    """Geodesic between two couplings, by arc-length inversion or by shooting."""
    field = IsingMetric(beta)
    if method == "arclength":
        return geodesic_1d(field, g_start, g_end, beta=beta, **kwargs)
    return geodesic_bvp(field.christoffel_field(), [g_start], [g_end], beta=beta, **kwargs)


# ==================================================================== qubit

R_MIN = 1e-3


def bloch_vector(r, theta, phi) -> np.ndarray:
    return r * np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def pauli_dot(v) -> np.ndarray:
    return v[0] * opcore.SIGMA_X + v[1] * opcore.SIGMA_Y + v[2] * opcore.SIGMA_Z


def qubit_hamiltonian(r, theta, phi=0.0) -> np.ndarray:
    return pauli_dot(bloch_vector(r, theta, phi))


def qubit_tangent_ops(r, theta, phi=0.0) -> list[np.ndarray]:
    """dH/dr, dH/dtheta, dH/dphi of the spherical parametrisation."""
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    return [
        pauli_dot([cp * st, sp * st, ct]),
        pauli_dot([r * cp * ct, r * sp * ct, -r * st]),
        pauli_dot([-r * sp * st, r * cp * st, 0.0]),
    ]


def lambda_d(x):
    """Radial (population) eigenvalue tanh(x)/cosh^2(x)."""
    return np.tanh(x) / np.cosh(x) ** 2


def lambda_q(x):
    """Angular (coherence) eigenvalue 2 tanh^2(x)/x."""
    return 2.0 * np.tanh(x) ** 2 / x


def qubit_closed_form_metric(r, theta, alpha, beta: float = 1.0) -> np.ndarray:
    x = beta * r
    pref = r ** (-alpha)
    return pref * np.diag([lambda_d(x), lambda_q(x) * r ** 2, lambda_q(x) * r ** 2 * np.sin(theta) ** 2])


def _spherical_margin(r_min, r_max):
    def margin(lam):
        r, theta = lam[0], lam[1]
        return min(r - r_min, r_max - r, theta, np.pi - theta)
    return margin


def _plane_margin(r_min, r_max):
    def margin(lam):
        return min(lam[0] - r_min, r_max - lam[0])
    return margin


def qubit_model(alpha: float, beta: float = 1.0, chart: str = "spherical", r_min: float = R_MIN,
                r_max: float = np.inf) -> ParamModel:
    """Qubit in a bosonic bath of ohmicity ``alpha``.

    Charts: ``spherical`` (r, theta, phi), ``xz`` (r, theta) in the
    phi = 0 half-plane with theta unrestricted, ``radial`` (r) on the z axis.
    """
    if chart == "spherical":
        names, margin = ("r", "theta", "phi"), _spherical_margin(r_min, r_max)
        unpack = lambda lam: (lam[0], lam[1], lam[2])  # noqa: E731
        pick = slice(0, 3)
    elif chart == "xz":
        names, margin = ("r", "theta"), _plane_margin(r_min, r_max)
        unpack = lambda lam: (lam[0], lam[1], 0.0)  # noqa: E731
        pick = slice(0, 2)
    elif chart == "radial":
        names, margin = ("r",), _plane_margin(r_min, r_max)
        unpack = lambda lam: (lam[0], 0.0, 0.0)  # noqa: E731
        pick = slice(0, 1)
    else:
        raise ValueError(f"unknown chart {chart!r}")

    def hamiltonian(lam):
        return qubit_hamiltonian(*unpack(lam))

    def tangent(lam):
        return qubit_tangent_ops(*unpack(lam))[pick]

    def generator(lam):
        r, theta, phi = unpack(lam)
        return lindblad.bosonic_qubit_generator(r, alpha, beta, axis=bloch_vector(1.0, theta, phi))

    return ParamModel(names, float(beta), hamiltonian, tangent, generator, margin, name="bosonic_qubit",
                      info={"alpha": float(alpha), "chart": chart})


class QubitClosedForm(MetricField):
    """Closed-form qubit metric in one of the charts of :func:`qubit_model`."""

    def __init__(self, alpha: float, beta: float = 1.0, chart: str = "spherical", r_min: float = R_MIN,
                 r_max: float = np.inf, cache: bool = True):
        self.alpha, self.beta, self.chart = float(alpha), float(beta), chart
        self.n_params = {"spherical": 3, "xz": 2, "radial": 1}[chart]
        self._margin = _spherical_margin(r_min, r_max) if chart == "spherical" else _plane_margin(r_min, r_max)
        super().__init__(cache=cache)

    def margin(self, lam):
        return self._margin(np.asarray(lam, dtype=float))

    def _evaluate(self, lam):
        theta = lam[1] if self.chart == "spherical" else np.pi / 2
        m = qubit_closed_form_metric(lam[0], theta, self.alpha, self.beta)
        return m[: self.n_params, : self.n_params]


# ------------------------------------------------------ energy-gap qubit

def gap_qubit_model(beta: float = 1.0, tau: float = 1.0, dynamics: str = "gibbs_mixing",
                    alpha: float = 1.0) -> ParamModel:
    """One parameter ``E`` with ``H = E sigma_z``."""
    if dynamics == "gibbs_mixing":
        def generator(lam):
            return lindblad.gibbs_mixing(lam[0] * opcore.SIGMA_Z, beta, tau)
        margin = None
    elif dynamics == "bosonic_qubit":
        def generator(lam):
            return lindblad.bosonic_qubit_generator(lam[0], alpha, beta)
        margin = lambda lam: lam[0] - R_MIN  # noqa: E731
    else:
        raise ValueError(f"unknown dynamics {dynamics!r}")
    return ParamModel(("E",), float(beta), lambda lam: lam[0] * opcore.SIGMA_Z, lambda lam: [opcore.SIGMA_Z],
                      generator, margin, name=f"{dynamics}_qubit", info={"tau": tau, "alpha": alpha})


def gap_qubit_kmb_field(beta: float = 1.0, tau: float = 1.0) -> FunctionMetricField:
    """Closed form tau sech^2(beta E) of the Gibbs-mixing gap qubit."""
    return FunctionMetricField(
        lambda lam: [[tau / np.cosh(beta * lam[0]) ** 2]], 1,
        derivative=lambda lam: [-2 * tau * beta * np.tanh(beta * lam[0]) / np.cosh(beta * lam[0]) ** 2],
        chart="E",
    )


def w_linear_closed_form(E_f):
    return E_f * np.tanh(E_f)


def w_geodesic_closed_form(E_f):
    return 0.25 * (np.pi - 2.0 * np.arctan(1.0 / np.sinh(E_f))) ** 2


@dataclass(frozen=True)
class LinearVsGeodesic:
    E_f: float
    w_linear: float
    w_geodesic: float
    ratio: float
    w_linear_closed: float
    w_geodesic_closed: float
    geodesic: object = None


def linear_vs_geodesic_report(E_f: float, beta: float = 1.0, field: MetricField | None = None) -> LinearVsGeodesic:
    """Dissipation coefficients of the linear ramp 0 -> E_f and the geodesic between the same endpoints.

    Defaults to the closed-form metric ``sech^2(beta E)``; pass
    ``ModelMetricField(gap_qubit_model(beta))`` for the numerically assembled one.
    """
    if field is None:
        field = gap_qubit_kmb_field(beta)
    w_lin = action(field, Protocol.linear([0.0], [E_f]), beta)
    geo = geodesic_bvp(field, [0.0], [E_f], beta=beta)
    # closed forms are stated for beta = 1 with E_f measured in units of 1/beta
    x = beta * E_f
    return LinearVsGeodesic(E_f, w_lin, geo.action, w_lin / geo.action, float(w_linear_closed_form(x)) / beta,
                            float(w_geodesic_closed_form(x)) / beta, geo)
