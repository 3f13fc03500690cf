"""Thermodynamic metric of a parametrised Lindblad model and its connection.

For a Hamiltonian family ``H(lam)`` with tangent operators ``X_i = dH/dlam_i``
the metric entries are

    m_ij = -1/2 Tr[X_i L+ J[X_j] + X_j L+ J[X_i]]

evaluated at the Gibbs state of ``H(lam)``. The dissipated work of a slow
protocol is ``beta * int lam'^T m lam' dt``; the ``beta`` prefactor lives
in the action functional (:mod:`thermolen.geodesic`), not in ``m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from . import lindblad, opcore
from .errors import ConditioningError, DomainError, SingularityError, ValidationError
from .lindblad import DrazinInverse, LindbladGenerator
from .opcore import SpectralGibbs

KINDS = ("full-lindblad", "kmb", "relaxation-times")


@dataclass(frozen=True, eq=False)
class ParamModel:
    """Map from control parameters to Hamiltonian, tangent operators and generator.

    ``domain`` returns a signed margin: non-negative inside the admissible
    region, negative outside. It doubles as an event function for the
    geodesic integrator.
    """

    param_names: tuple[str, ...]
    beta: float
    hamiltonian: Callable[[np.ndarray], np.ndarray]
    tangent_ops: Callable[[np.ndarray], Sequence[np.ndarray]]
    generator: Callable[[np.ndarray], LindbladGenerator]
    domain: Callable[[np.ndarray], float] | None = None
    name: str = "model"
    info: dict = field(default_factory=dict)

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def margin(self, lam) -> float:
        return np.inf if self.domain is None else float(self.domain(np.asarray(lam, dtype=float)))

    def check_domain(self, lam) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if lam.shape != (self.n_params,):
            raise ValidationError(f"metric: expected {self.n_params} parameters, got shape {lam.shape}")
        if not np.all(np.isfinite(lam)) or self.margin(lam) < 0:
            raise DomainError(f"metric: parameters {lam.tolist()} outside the domain of {self.name}")
        return lam

    def gibbs(self, lam) -> SpectralGibbs:
        return opcore.gibbs_state(self.hamiltonian(self.check_domain(lam)), self.beta)


def linear_model(observables, beta: float, generator: str | Callable = "gibbs_mixing", *,
                 offset=None, names=None, domain=None, **generator_params) -> ParamModel:
    """Model ``H = offset + sum_i lam_i X_i`` with a registered or custom generator factory.

    A custom factory is called as ``factory(H, beta)``; a registry key ``k``
    as ``GENERATORS[k](H, beta, **generator_params)``.
    """
    X = [opcore.as_hermitian(x, "observable") for x in observables]
    d = X[0].shape[0]
    H0 = np.zeros((d, d), dtype=complex) if offset is None else opcore.as_hermitian(offset, "offset")
    factory = lindblad.GENERATORS[generator] if isinstance(generator, str) else generator

    def hamiltonian(lam):
        return H0 + sum(l * x for l, x in zip(lam, X))

    def gen(lam):
        return factory(hamiltonian(lam), beta, **generator_params)

    names = tuple(names) if names is not None else tuple(f"lambda{i + 1}" for i in range(len(X)))
    return ParamModel(names, float(beta), hamiltonian, lambda lam: X, gen, domain,
                      name=generator if isinstance(generator, str) else "linear")


# ---------------------------------------------------------------- bilinear form

def metric_bilinear(omega: SpectralGibbs, drazin: DrazinInverse, A, B) -> float:
    """-1/2 Tr[A L+ J[B] + B L+ J[A]]."""
    A = opcore.as_hermitian(A, "A")
    B = opcore.as_hermitian(B, "B")
    if A.shape != B.shape or A.shape[0] != omega.dim:
        raise ValidationError("metric.metric_bilinear: dimension mismatch")
    LJB = drazin.apply(opcore.j_apply(omega, B))
    LJA = drazin.apply(opcore.j_apply(omega, A))
    return float(-0.5 * np.real(np.trace(A @ LJB) + np.trace(B @ LJA)))


def _lindblad_matrix(omega: SpectralGibbs, drazin: DrazinInverse, X: Sequence[np.ndarray]) -> np.ndarray:
    LJ = [drazin.apply(opcore.j_apply(omega, x)) for x in X]
    T = np.array([[np.real(np.trace(xi @ lj)) for lj in LJ] for xi in X])
    return -0.5 * (T + T.T)


def metric_matrix(model: ParamModel, lam, drazin: str = "traceless") -> np.ndarray:
    """Thermodynamic metric of ``model`` at ``lam``."""
    lam = model.check_domain(lam)
    omega = opcore.gibbs_state(model.hamiltonian(lam), model.beta)
    gen = model.generator(lam)
    inverse = lindblad.drazin_traceless(gen) if drazin == "traceless" else lindblad.drazin_spectral(gen)
    return _lindblad_matrix(omega, inverse, model.tangent_ops(lam))


def kmb_matrix(omega: SpectralGibbs, X: Sequence[np.ndarray]) -> np.ndarray:
    JX = [opcore.j_apply(omega, x) for x in X]
    G = np.array([[np.real(np.trace(xi @ jx)) for jx in JX] for xi in X])
    return 0.5 * (G + G.T)


def log_partition(model: ParamModel, lam) -> float:
    return opcore.gibbs_state(model.hamiltonian(np.asarray(lam, dtype=float)), model.beta).log_z


def log_partition_hessian(model: ParamModel, lam, h: float | None = None) -> np.ndarray:
    """Central-difference Hessian of log Z with one Richardson extrapolation step."""
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    if h is None:
        scale = max(1.0, model.beta * max(np.linalg.norm(x, 2) for x in model.tangent_ops(lam)))
        h = 2e-3 / scale
    if h < 1e-8:
        raise SingularityError(f"metric.kmb_metric: finite-difference step {h:.1e} underflows")

    def hessian(step):
        f0 = log_partition(model, lam)
        Hs = np.empty((n, n))
        E = np.eye(n) * step
        for i in range(n):
            Hs[i, i] = (log_partition(model, lam + E[i]) - 2 * f0 + log_partition(model, lam - E[i])) / step**2
            for j in range(i):
                val = (log_partition(model, lam + E[i] + E[j]) - log_partition(model, lam + E[i] - E[j])
                       - log_partition(model, lam - E[i] + E[j]) + log_partition(model, lam - E[i] - E[j]))
                Hs[i, j] = Hs[j, i] = val / (4 * step**2)
        return Hs

    coarse, fine = hessian(h), hessian(h / 2)
    return fine + (fine - coarse) / 3.0


def kmb_metric(model: ParamModel, lam, cross_check: bool = False, rtol: float = 1e-6) -> np.ndarray:
    """Kubo-Mori metric (generalised covariance of the tangent operators).

    With ``cross_check`` the second derivatives of ``log Z / beta^2`` are
    computed as well and a disagreement beyond ``rtol`` raises.
    """
    lam = model.check_domain(lam)
    omega = opcore.gibbs_state(model.hamiltonian(lam), model.beta)
    G = kmb_matrix(omega, model.tangent_ops(lam))
    if cross_check:
        fd = log_partition_hessian(model, lam) / model.beta**2
        err = np.linalg.norm(G - fd) / max(np.linalg.norm(G), np.finfo(float).tiny)
        if err > rtol:
            raise ConditioningError(f"metric.kmb_metric: covariance and log Z routes differ by {err:.2e}")
    return G


def relaxation_metric(model: ParamModel, lam, taus) -> np.ndarray:
    """KMB metric weighted entrywise by the mean relaxation times (tau_i + tau_j)/2."""
    taus = np.asarray(taus, dtype=float)
    if taus.shape != (model.n_params,):
        raise ValidationError(f"metric.relaxation_metric: need {model.n_params} time constants, got {taus.size}")
    if np.any(taus <= 0):
        raise DomainError("metric.relaxation_metric: time constants must be positive")
    return 0.5 * (taus[:, None] + taus[None, :]) * kmb_metric(model, lam)


# ---------------------------------------------------------------- metric fields

class MetricField:
    """Callable ``lam -> m(lam)`` plus parameter derivatives.

    Subclasses implement ``_evaluate`` and may override
    ``analytic_derivatives`` (returning ``dm[l, i, j] = d m_ij / d lam_l``).
    Results are memoised in an ``lru_cache``, which is thread safe.
    """

    n_params: int = 1
    chart: str = ""

    def __init__(self, cache: bool = True, cache_size: int = 4096):
        self._cached = lru_cache(maxsize=cache_size)(self._evaluate_tuple) if cache else self._evaluate_tuple

    def _evaluate(self, lam: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _evaluate_tuple(self, key: tuple) -> np.ndarray:
        m = np.atleast_2d(self._evaluate(np.array(key, dtype=float)))
        m.setflags(write=False)
        return m

    def margin(self, lam) -> float:
        return np.inf

    def check_domain(self, lam) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if lam.shape != (self.n_params,):
            raise ValidationError(f"metric: expected {self.n_params} parameters, got shape {lam.shape}")
        if not np.all(np.isfinite(lam)) or self.margin(lam) < 0:
            raise DomainError(f"metric: parameters {lam.tolist()} outside the admissible domain")
        return lam

    def __call__(self, lam) -> np.ndarray:
        lam = self.check_domain(lam)
        return self._cached(tuple(lam.tolist()))

    def analytic_derivatives(self, lam: np.ndarray) -> np.ndarray | None:
        return None

    def fd_step(self, lam: np.ndarray) -> np.ndarray:
        return np.maximum(1e-5, 1e-5 * np.abs(lam))

    def derivatives(self, lam, scheme: str = "auto") -> np.ndarray:
        """``dm[l, i, j]``: analytic when available (``auto``), else central differences."""
        lam = self.check_domain(lam)
        if scheme in ("auto", "analytic"):
            dm = self.analytic_derivatives(lam)
            if dm is not None:
                return dm
            if scheme == "analytic":
                raise ValidationError("metric: no analytic derivatives registered for this field")
        n = self.n_params
        steps = self.fd_step(lam)
        dm = np.empty((n, n, n))
        for l in range(n):
            e = np.zeros(n)
            e[l] = steps[l]
            dm[l] = (self(lam + e) - self(lam - e)) / (2 * steps[l])
        return dm


class ModelMetricField(MetricField):
    """Metric assembled numerically from a :class:`ParamModel`."""

    def __init__(self, model: ParamModel, kind: str = "full-lindblad", taus=None, cache: bool = True):
        if kind not in KINDS:
            raise ValidationError(f"metric: unknown metric kind {kind!r}")
        if kind == "relaxation-times" and taus is None:
            raise ValidationError("metric: relaxation-times metric needs taus")
        self.model = model
        self.kind = kind
        self.taus = taus
        self.n_params = model.n_params
        self.chart = ",".join(model.param_names)
        super().__init__(cache=cache)

    def margin(self, lam) -> float:
        return self.model.margin(lam)

    def _evaluate(self, lam):
        if self.kind == "full-lindblad":
            return metric_matrix(self.model, lam)
        if self.kind == "kmb":
            return kmb_metric(self.model, lam)
        return relaxation_metric(self.model, lam, self.taus)


class FunctionMetricField(MetricField):
    """Metric from plain callables; used for closed forms and tests."""

    def __init__(self, fn, n_params: int, derivative=None, margin=None, chart: str = "", cache: bool = True):
        self._fn = fn
        self._derivative = derivative
        self._margin = margin
        self.n_params = n_params
        self.chart = chart
        super().__init__(cache=cache)

    def _evaluate(self, lam):
        return np.asarray(self._fn(lam), dtype=float)

    def margin(self, lam):
        return np.inf if self._margin is None else float(self._margin(np.asarray(lam, dtype=float)))

    def analytic_derivatives(self, lam):
        if self._derivative is None:
            return None
        return np.asarray(self._derivative(lam), dtype=float).reshape(self.n_params, self.n_params, self.n_params)


def euclidean_field(n: int) -> FunctionMetricField:
    return FunctionMetricField(lambda lam: np.eye(n), n, derivative=lambda lam: np.zeros((n, n, n)),
                               chart="cartesian")


# ----------------------------------------------------------------- connection

def christoffel_from(m: np.ndarray, dm: np.ndarray, cond_max: float = 1e12) -> np.ndarray:
    """Gamma[i, j, k] = 1/2 m^{il} (d_j m_lk + d_k m_jl - d_l m_jk)."""
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > cond_max:
        raise ConditioningError(f"metric.christoffel: metric condition number {cond:.2e} exceeds {cond_max:.0e}")
    lowered = 0.5 * (np.einsum("jlk->ljk", dm) + np.einsum("kjl->ljk", dm) - dm)
    return np.einsum("il,ljk->ijk", np.linalg.inv(m), lowered)


def christoffel(field: MetricField, lam, scheme: str = "auto") -> np.ndarray:
    """Christoffel symbols of the second kind, shape (n, n, n)."""
    lam = field.check_domain(lam)
    return christoffel_from(field(lam), field.derivatives(lam, scheme=scheme))


class ChristoffelField:
    """Christoffel symbols of a metric field with a fixed differentiation scheme.

    ``override`` replaces the generic formula, e.g. by the log Z route of
    the Ising chain.
    """

    def __init__(self, metric: MetricField, scheme: str = "auto", override=None):
        self.metric = metric
        self.scheme = scheme
        self._override = override

    @property
    def n_params(self) -> int:
        return self.metric.n_params

    def __call__(self, lam) -> np.ndarray:
        if self._override is not None:
            lam = self.metric.check_domain(lam)
            return np.asarray(self._override(lam), dtype=float).reshape((self.n_params,) * 3)
        return christoffel(self.metric, lam, self.scheme)


# ---------------------------------------------------------------- diagnostics

@dataclass(frozen=True)
class MetricSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    ratio: float


def metric_eigenanalysis(field: MetricField, lam) -> MetricSpectrum:
    """Eigenvalues in descending order and the largest/smallest ratio."""
    w, V = np.linalg.eigh(field(lam))
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    ratio = float(w[0] / w[-1]) if w[-1] != 0 else np.inf
    return MetricSpectrum(w, V, ratio)


def metric_sweep(field: MetricField, points) -> list[dict]:
    """Rows of parameters, upper-triangle metric entries and eigenvalues."""
    rows = []
    for lam in np.atleast_2d(np.asarray(points, dtype=float)):
        m = field(lam)
        row = {f"lambda{i + 1}": float(v) for i, v in enumerate(lam)}
        n = m.shape[0]
        for i in range(n):
            for j in range(i, n):
                row[f"m{i + 1}{j + 1}"] = float(m[i, j])
        for i, ev in enumerate(np.sort(np.linalg.eigvalsh(m))[::-1]):
            row[f"eig{i + 1}"] = float(ev)
        rows.append(row)
    return rows
