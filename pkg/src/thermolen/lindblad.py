"""Lindblad generators with a Gibbs fixed point and their Drazin inverses.

The Drazin inverse of a generator ``L`` with unique stationary state
``omega`` is the map ``L+`` fixed by

    L L+ [A] = L+ L [A] = A - omega Tr[A],   L+[omega] = 0,   Tr[L+[A]] = 0.

Three constructions are provided and expected to agree:

``drazin_traceless``
    exact inverse of ``L`` restricted to the traceless subspace (default),
``drazin_spectral``
    eigen-decomposition of the non-normal superoperator,
``drazin_integral_oracle``
    quadrature of ``-int_0^inf exp(nu L) (A - omega Tr A) dnu``; for tests.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm, null_space

from . import opcore
from .errors import (
    AccuracyError,
    DomainError,
    ModelConsistencyError,
    SingularityError,
    ValidationError,
)
from .opcore import SpectralGibbs, gibbs_state, left_right, vectorize, devectorize

log = logging.getLogger(__name__)

STATIONARITY_TOL = 1e-10
TRACE_TOL = 1e-12
GAP_TOL = 1e-10
SPECTRAL_COND_MAX = 1e8


@dataclass(frozen=True)
class Jump:
    operator: np.ndarray
    rate: float

    def __post_init__(self):
        if not np.isfinite(self.rate) or self.rate < 0:
            raise ValidationError(f"lindblad: jump rate must be non-negative, got {self.rate!r}")


@dataclass(frozen=True, eq=False)
class LindbladGenerator:
    """Superoperator of a Lindblad generator together with its Gibbs fixed point.

    ``jumps`` is ``None`` for generators assembled directly as superoperators
    (these cannot be serialized to the jump-list JSON form).
    """

    superop: np.ndarray
    beta: float
    stationary: SpectralGibbs
    hamiltonian_part: np.ndarray | None = None
    jumps: tuple[Jump, ...] | None = None
    system_hamiltonian: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.stationary.dim

    def apply(self, rho) -> np.ndarray:
        return devectorize(self.superop @ vectorize(rho))

    def stationarity_residual(self) -> float:
        return float(np.linalg.norm(self.superop @ vectorize(self.stationary.matrix)))

    def trace_residual(self) -> float:
        ident = vectorize(np.eye(self.dim))
        return float(np.max(np.abs(ident.conj() @ self.superop))) if self.superop.size else 0.0

    def propagator(self, t: float) -> np.ndarray:
        return expm(t * self.superop)


def _verify(superop: np.ndarray, stationary: SpectralGibbs, context: str):
    scale = np.linalg.norm(superop, 2) if superop.size else 0.0
    resid = np.linalg.norm(superop @ vectorize(stationary.matrix))
    if resid > STATIONARITY_TOL * max(scale, 1.0):
        raise ModelConsistencyError(
            f"lindblad.{context}: declared Gibbs state is not stationary (|L[omega]| = {resid:.3e})"
        )
    d = stationary.dim
    trace_row = vectorize(np.eye(d)).conj() @ superop
    if np.max(np.abs(trace_row), initial=0.0) > TRACE_TOL * max(scale, 1.0):
        raise ModelConsistencyError(f"lindblad.{context}: generator is not trace preserving")


def lindblad_superop(hamiltonian_part, jumps: Sequence[Jump]) -> np.ndarray:
    H = opcore.as_hermitian(hamiltonian_part, "hamiltonian_part")
    d = H.shape[0]
    I = np.eye(d)
    S = -1j * (left_right(H, I) - left_right(I, H))
    for jump in jumps:
        L = opcore.as_operator(jump.operator, "jump operator")
        if L.shape != (d, d):
            raise ValidationError("lindblad: jump operator dimension mismatch")
        LdL = L.conj().T @ L
        S = S + jump.rate * (left_right(L, L.conj().T) - 0.5 * left_right(LdL, I) - 0.5 * left_right(I, LdL))
    return S


def build_generator(hamiltonian_part, jumps, beta: float, *, system_hamiltonian=None,
                    info: dict | None = None) -> LindbladGenerator:
    """GKLS generator ``-i[H, .] + sum_k rate_k D[L_k]`` with a verified Gibbs fixed point.

    The fixed point is the Gibbs state of ``system_hamiltonian``, which
    defaults to ``hamiltonian_part``; pass it explicitly for generators
    written in the interaction picture (zero coherent part).
    """
    jumps = tuple(j if isinstance(j, Jump) else Jump(np.asarray(j[0], dtype=complex), float(j[1])) for j in jumps)
    H = opcore.as_hermitian(hamiltonian_part, "hamiltonian_part")
    H_sys = H if system_hamiltonian is None else opcore.as_hermitian(system_hamiltonian, "system_hamiltonian")
    stationary = gibbs_state(H_sys, beta)
    S = lindblad_superop(H, jumps)
    _verify(S, stationary, "build_generator")
    return LindbladGenerator(S, float(beta), stationary, H, jumps, H_sys, dict(info or {}))


def generator_from_superop(superop, stationary: SpectralGibbs, *, info: dict | None = None,
                           verify: bool = True) -> LindbladGenerator:
    superop = np.asarray(superop, dtype=complex)
    d = stationary.dim
    if superop.shape != (d * d, d * d):
        raise ValidationError("lindblad.generator_from_superop: superoperator dimension mismatch")
    if verify:
        _verify(superop, stationary, "generator_from_superop")
    return LindbladGenerator(superop, stationary.beta, stationary, info=dict(info or {}))


# ------------------------------------------------------------ concrete models

GENERATORS: dict[str, Callable[..., LindbladGenerator]] = {}


def register_generator(key: str):
    def deco(fn):
        GENERATORS[key] = fn
        return fn
    return deco


def _eigen_jumps(omega: SpectralGibbs, pairs):
    V = omega.vectors
    return [Jump(np.outer(V[:, i], V[:, j].conj()), rate) for i, j, rate in pairs]


@register_generator("gibbs_mixing")
def gibbs_mixing(H, beta: float, tau: float = 1.0) -> LindbladGenerator:
    """Relaxation ``rho' = (omega - rho) / tau``: jumps sqrt(p_i)|i><j| at rate 1/tau."""
    if not tau > 0:
        raise DomainError(f"lindblad.gibbs_mixing: tau must be positive, got {tau!r}")
    H = opcore.as_hermitian(H, "H")
    omega = gibbs_state(H, beta)
    d = omega.dim
    V, p = omega.vectors, omega.populations
    jumps = [Jump(np.sqrt(p[i]) * np.outer(V[:, i], V[:, j].conj()), 1.0 / tau) for i in range(d) for j in range(d)]
    return build_generator(np.zeros_like(H), jumps, beta, system_hamiltonian=H,
                           info={"model": "gibbs_mixing", "tau": float(tau)})


def bosonic_rates(r: float, alpha: float, beta: float) -> dict:
    """Decay/excitation rates of a qubit with gap 2r in a bath with J(w) ~ w^alpha."""
    if not r > 0:
        raise DomainError(f"lindblad.bosonic_qubit_generator: r must be positive, got {r!r}")
    if alpha < 0:
        raise DomainError("lindblad.bosonic_qubit_generator: alpha must be non-negative")
    gamma = r ** alpha
    occupation = 1.0 / np.expm1(2.0 * beta * r)
    return {
        "gamma": gamma,
        "occupation": occupation,
        "decay": gamma * (occupation + 1.0),
        "excitation": gamma * occupation,
        "Gamma": gamma / np.tanh(beta * r),  # gamma (2P + 1)
    }


@register_generator("bosonic_qubit")
def bosonic_qubit_generator(r: float, alpha: float, beta: float, axis=(0.0, 0.0, 1.0)) -> LindbladGenerator:
    """Interaction-picture generator of a qubit ``H = r axis.sigma`` in a bosonic bath.

    The coherent part is omitted; the fixed point is the Gibbs state of H.
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    rates = bosonic_rates(r, alpha, beta)
    H = r * (axis[0] * opcore.SIGMA_X + axis[1] * opcore.SIGMA_Y + axis[2] * opcore.SIGMA_Z)
    omega = gibbs_state(H, beta)
    ground, excited = 0, 1  # eigh sorts ascending
    jumps = _eigen_jumps(omega, [(ground, excited, rates["decay"]), (excited, ground, rates["excitation"])])
    info = {"model": "bosonic_qubit", "r": float(r), "alpha": float(alpha), **rates}
    return build_generator(np.zeros((2, 2), dtype=complex), jumps, beta, system_hamiltonian=H, info=info)


def bosonic_qubit_from_hamiltonian(H, alpha: float, beta: float) -> LindbladGenerator:
    H = opcore.as_hermitian(H, "H")
    if H.shape != (2, 2):
        raise ValidationError("lindblad: bosonic qubit generator needs a 2x2 Hamiltonian")
    bloch = np.array([np.real(np.trace(H @ s)) / 2 for s in (opcore.SIGMA_X, opcore.SIGMA_Y, opcore.SIGMA_Z)])
    r = float(np.linalg.norm(bloch))
    if r == 0:
        raise DomainError("lindblad.bosonic_qubit_generator: r must be positive, got 0")
    gen = bosonic_qubit_generator(r, alpha, beta, axis=bloch / r)
    return gen


@register_generator("davies")
def davies_generator(H, beta: float, couplings, dephasing=None, coherent: bool = True) -> LindbladGenerator:
    """Detailed-balance generator in the eigenbasis of ``H``.

    Transition j -> i has rate ``couplings[i, j] * 2 / (1 + exp(beta (e_i - e_j)))``
    with symmetric ``couplings``; ``dephasing`` adds one diagonal jump per row.
    """
    H = opcore.as_hermitian(H, "H")
    omega = gibbs_state(H, beta)
    d = omega.dim
    c = np.asarray(couplings, dtype=float)
    if c.shape != (d, d) or np.any(c < 0):
        raise ValidationError("lindblad.davies_generator: couplings must be a non-negative d x d array")
    c = 0.5 * (c + c.T)
    e = omega.energies
    pairs = []
    for i in range(d):
        for j in range(d):
            if i != j and c[i, j] > 0:
                pairs.append((i, j, c[i, j] * 2.0 / (1.0 + np.exp(beta * (e[i] - e[j])))))
    jumps = _eigen_jumps(omega, pairs)
    V = omega.vectors
    for row in np.atleast_2d(dephasing) if dephasing is not None else []:
        jumps.append(Jump((V * np.asarray(row, dtype=float)) @ V.conj().T, 1.0))
    Hc = H if coherent else np.zeros_like(H)
    return build_generator(Hc, jumps, beta, system_hamiltonian=H, info={"model": "davies"})


@register_generator("relaxation")
def relaxation_generator(H, beta: float, observables, taus, tau_rest: float = 1.0) -> LindbladGenerator:
    """Generator under which each <X_i> relaxes to equilibrium with its own time ``tau_i``.

    Built in the Heisenberg picture: the centred observables are
    eigenvectors of the adjoint generator with eigenvalues ``-1/tau_i``,
    every other centred observable relaxes with ``tau_rest``. Trace
    preserving and Gibbs-stationary; complete positivity is not enforced.
    """
    H = opcore.as_hermitian(H, "H")
    omega = gibbs_state(H, beta)
    d = omega.dim
    taus = np.asarray(taus, dtype=float)
    X = [opcore.as_hermitian(x, "observable") for x in observables]
    if len(X) != len(taus):
        raise ValidationError("lindblad.relaxation_generator: one tau per observable required")
    if np.any(taus <= 0) or tau_rest <= 0:
        raise DomainError("lindblad.relaxation_generator: time constants must be positive")
    Xc = np.stack([vectorize(x - omega.expect(x) * np.eye(d)) for x in X], axis=1)  # d^2 x n
    JX = np.stack([vectorize(opcore.j_apply(omega, x)) for x in X], axis=1)
    gram = np.real(Xc.conj().T @ JX)
    duals = JX @ np.linalg.inv(gram).T  # <D_i|Xc_j> = delta_ij
    ident = vectorize(np.eye(d))
    w = vectorize(omega.matrix)
    # adjoint generator acting on observables, as a matrix on vectorized operators
    n2 = d * d
    P_rest = np.eye(n2) - np.outer(ident, w.conj()) - Xc @ duals.conj().T
    adjoint = -(Xc / taus) @ duals.conj().T - P_rest / tau_rest
    superop = adjoint.conj().T
    return generator_from_superop(superop, omega, info={"model": "relaxation", "taus": taus.tolist()})


# ------------------------------------------------------------- Drazin inverse

@dataclass(frozen=True, eq=False)
class DrazinInverse:
    superop: np.ndarray
    stationary: SpectralGibbs
    method: str
    diagnostics: dict = field(default_factory=dict)

    def apply(self, A) -> np.ndarray:
        return devectorize(self.superop @ vectorize(A))

    def axiom_residuals(self, generator: LindbladGenerator) -> dict:
        """Operator-norm residuals of the three defining conditions."""
        d = self.stationary.dim
        L, Lp = generator.superop, self.superop
        P = np.eye(d * d) - np.outer(vectorize(self.stationary.matrix), vectorize(np.eye(d)).conj())
        return {
            "B1_left": float(np.linalg.norm(L @ Lp - P, 2)),
            "B1_right": float(np.linalg.norm(Lp @ L - P, 2)),
            "B2": float(np.linalg.norm(Lp @ vectorize(self.stationary.matrix))),
            "B3": float(np.linalg.norm(vectorize(np.eye(d)).conj() @ Lp)),
        }


def _fixed_point_projector(gen: LindbladGenerator) -> np.ndarray:
    d = gen.dim
    return np.eye(d * d) - np.outer(vectorize(gen.stationary.matrix), vectorize(np.eye(d)).conj())


def _traceless_basis(d: int) -> np.ndarray:
    return null_space(vectorize(np.eye(d)).conj()[None, :])


def restricted_generator(gen: LindbladGenerator) -> tuple[np.ndarray, np.ndarray]:
    """Return (Q, Lambda): orthonormal traceless basis and L restricted to it."""
    Q = _traceless_basis(gen.dim)
    return Q, Q.conj().T @ gen.superop @ Q


def spectral_gap(gen: LindbladGenerator) -> float:
    """Smallest |Re| among the eigenvalues of L on the traceless subspace."""
    _, Lam = restricted_generator(gen)
    if Lam.size == 0:
        return np.inf
    return float(np.min(np.abs(np.linalg.eigvals(Lam).real)))


def drazin_traceless(gen: LindbladGenerator) -> DrazinInverse:
    """Drazin inverse as the inverse of L restricted to traceless operators."""
    Q, Lam = restricted_generator(gen)
    P = _fixed_point_projector(gen)
    if Lam.size == 0:
        return DrazinInverse(np.zeros_like(gen.superop), gen.stationary, "traceless-projection", {})
    sv = np.linalg.svd(Lam, compute_uv=False)
    scale = max(np.linalg.norm(gen.superop, 2), np.finfo(float).tiny)
    if sv[-1] <= GAP_TOL * scale:
        raise SingularityError(
            "lindblad.drazin_traceless: generator restricted to traceless operators is singular "
            "(stationary state not unique)"
        )
    Lp = Q @ np.linalg.solve(Lam, Q.conj().T @ P)
    return DrazinInverse(Lp, gen.stationary, "traceless-projection", {"cond": float(sv[0] / sv[-1])})


def drazin_spectral(gen: LindbladGenerator) -> DrazinInverse:
    """Drazin inverse from the eigen-decomposition of the superoperator.

    Falls back to :func:`drazin_traceless` (flagged in ``diagnostics``) when
    the eigenvector matrix is too ill-conditioned or the zero mode is not
    isolated.
    """
    w, V = np.linalg.eig(gen.superop)
    order = np.argsort(np.abs(w))
    scale = max(np.max(np.abs(w)), np.finfo(float).tiny)
    cond = np.linalg.cond(V)
    isolated = len(w) == 1 or np.abs(w[order[1]]) > GAP_TOL * scale
    if not isolated or not np.isfinite(cond) or cond > SPECTRAL_COND_MAX:
        log.info("drazin_spectral: falling back to traceless projection (cond=%.3g)", cond)
        fallback = drazin_traceless(gen)
        return DrazinInverse(fallback.superop, gen.stationary, "traceless-projection",
                             {**fallback.diagnostics, "fallback": True, "eigvec_cond": float(cond)})
    inv_w = np.zeros_like(w)
    keep = np.ones(len(w), dtype=bool)
    keep[order[0]] = False
    inv_w[keep] = 1.0 / w[keep]
    Lp = (V * inv_w) @ np.linalg.inv(V)
    return DrazinInverse(Lp, gen.stationary, "spectral", {"eigvec_cond": float(cond), "fallback": False})


def drazin_integral_oracle(gen: LindbladGenerator, T_max: float, n_steps: int = 200,
                           tol: float = 1e-8, order: int = 16) -> DrazinInverse:
    """Quadrature of the propagator integral on [0, T_max].

    Composite Gauss-Legendre with ``n_steps`` panels of ``order`` nodes.
    The truncated tail is bounded by exp(-gap T_max) / gap; an
    ``AccuracyError`` is raised when that bound exceeds ``tol``.
    """
    gap = spectral_gap(gen)
    tail = np.exp(-gap * T_max) / gap if gap > 0 else np.inf
    if tail > tol:
        raise AccuracyError(
            f"lindblad.drazin_integral_oracle: T_max={T_max} leaves tail bound {tail:.2e} > {tol:.0e} "
            f"(spectral gap {gap:.4g})",
            best_residual=tail,
        )
    h = T_max / n_steps
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = 0.5 * h * (x + 1.0), 0.5 * h * w
    L = gen.superop
    inner = sum(wt * expm(nu * L) for nu, wt in zip(nodes, weights))  # integral over one panel
    step = expm(h * L)
    total = np.zeros_like(L)
    prop = np.eye(L.shape[0], dtype=complex)
    for _ in range(n_steps):
        total += prop @ inner
        prop = prop @ step
    Lp = -total @ _fixed_point_projector(gen)
    return DrazinInverse(Lp, gen.stationary, "integral-oracle", {"gap": gap, "tail_bound": float(tail)})


# ---------------------------------------------------------- entropy production

def entropy_production_rate(gen: LindbladGenerator, rho) -> float:
    """-Tr[L[rho] (log rho - log omega)]; non-negative for Markovian generators."""
    rho = opcore.as_hermitian(rho, "rho")
    p, U = np.linalg.eigh(rho)
    if p[0] <= 0:
        raise SingularityError("lindblad.entropy_production_rate: rho is rank deficient (boundary of state space)")
    log_rho = (U * np.log(p)) @ U.conj().T
    diff = log_rho - gen.stationary.log_matrix()
    return float(-np.real(np.trace(gen.apply(rho) @ diff)))


# ------------------------------------------------------------------ JSON forms

def generator_to_json(gen: LindbladGenerator) -> dict:
    if gen.jumps is None:
        raise ValidationError("lindblad.generator_to_json: generator has no jump representation")
    out = {
        "H": opcore.operator_to_json(gen.hamiltonian_part),
        "jumps": [{"op": opcore.operator_to_json(j.operator), "rate": j.rate} for j in gen.jumps],
        "beta": gen.beta,
    }
    if gen.system_hamiltonian is not None and not np.allclose(gen.system_hamiltonian, gen.hamiltonian_part):
        out["H_system"] = opcore.operator_to_json(gen.system_hamiltonian)
    return out


def generator_from_json(obj: dict) -> LindbladGenerator:
    try:
        H = opcore.operator_from_json(obj["H"])
        jumps = [Jump(opcore.operator_from_json(j["op"]), float(j["rate"])) for j in obj["jumps"]]
        beta = float(obj["beta"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"lindblad.generator_from_json: malformed generator ({exc})") from exc
    H_sys = opcore.operator_from_json(obj["H_system"]) if "H_system" in obj else None
    return build_generator(H, jumps, beta, system_hamiltonian=H_sys)
