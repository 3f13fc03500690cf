"""Operator algebra on finite-dimensional Hilbert spaces.

Gibbs states are kept in spectral form (``SpectralGibbs``) because almost
everything downstream is a divided-difference formula in the eigenbasis
of the state: the derivative of the exponential map (``j_apply``), the
derivative of the logarithm (``j_inverse_apply``) and the Kubo-Mori
covariance built from them.

Operators are plain ``numpy`` arrays. Vectorization is row-major, so the
coordinates of an operator are its entries in the matrix-unit basis
``|l><m|``, which is orthonormal for the Hilbert-Schmidt product.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, SingularityError, ValidationError

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

HERMITICITY_TOL = 1e-12
DRIFT_WARN_TOL = 1e-8
MIN_POPULATION = 1e-300


class HermiticityDriftWarning(RuntimeWarning):
    pass


class SupportWarning(RuntimeWarning):
    pass


# ---------------------------------------------------------------- validation

def as_operator(A, name="operator") -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ValidationError(f"opcore: {name} must be a non-empty square matrix, got shape {A.shape}")
    return A


def as_hermitian(A, name="operator") -> np.ndarray:
    """Validate Hermiticity to 1e-12 per entry (relative for entries above unit size)."""
    A = as_operator(A, name)
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A - A.conj().T)) > HERMITICITY_TOL * scale:
        raise ValidationError(f"opcore: {name} is not Hermitian")
    return 0.5 * (A + A.conj().T)


def as_density_matrix(rho, name="rho", tol=1e-12) -> np.ndarray:
    rho = as_hermitian(rho, name)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol:
        raise ValidationError(f"opcore: {name} has trace {tr!r}, expected 1")
    if np.linalg.eigvalsh(rho)[0] < -tol:
        raise ValidationError(f"opcore: {name} is not positive semidefinite")
    return rho


def _check_dims(*ops):
    dims = {op.shape[0] for op in ops}
    if len(dims) != 1:
        raise ValidationError(f"opcore: dimension mismatch {sorted(dims)}")


def symmetrize(A: np.ndarray, context: str = "") -> np.ndarray:
    """Project onto the Hermitian part, warning when the discarded part is large."""
    drift = float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0
    if drift > DRIFT_WARN_TOL * max(1.0, float(np.max(np.abs(A)))):
        warnings.warn(f"Hermiticity drift {drift:.2e} {context}".strip(), HermiticityDriftWarning, stacklevel=3)
    return 0.5 * (A + A.conj().T)


def expect(rho: np.ndarray, A: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ A)))


# ------------------------------------------------------------- Gibbs states

@dataclass(frozen=True, eq=False)
class SpectralGibbs:
    """Gibbs state of ``H`` at inverse temperature ``beta`` in spectral form.

    ``log_populations`` are kept alongside ``populations`` so that divided
    differences of the logarithm never see underflowed zeros.
    """

    energies: np.ndarray
    vectors: np.ndarray
    beta: float
    populations: np.ndarray
    log_populations: np.ndarray
    log_z: float

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def matrix(self) -> np.ndarray:
        V = self.vectors
        return (V * self.populations) @ V.conj().T

    def log_matrix(self) -> np.ndarray:
        V = self.vectors
        return (V * self.log_populations) @ V.conj().T

    def to_eigenbasis(self, A: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ A @ self.vectors

    def from_eigenbasis(self, A: np.ndarray) -> np.ndarray:
        return self.vectors @ A @ self.vectors.conj().T

    def expect(self, A: np.ndarray) -> float:
        Ae = self.to_eigenbasis(A)
        return float(np.real(np.diagonal(Ae) @ self.populations))

    @property
    def free_energy(self) -> float:
        return -self.log_z / self.beta


def gibbs_state(H, beta: float) -> SpectralGibbs:
    """Spectral Gibbs state ``exp(-beta H) / Z`` with a log-sum-exp partition function."""
    H = as_hermitian(H, "H")
    beta = float(beta)
    if not np.isfinite(beta) or beta <= 0:
        raise DomainError(f"opcore.gibbs_state: beta must be positive and finite, got {beta!r}")
    energies, vectors = np.linalg.eigh(H)
    exponents = -beta * energies
    log_z = float(logsumexp(exponents))
    log_p = exponents - log_z
    return SpectralGibbs(
        energies=energies,
        vectors=vectors,
        beta=beta,
        populations=np.exp(log_p),
        log_populations=log_p,
        log_z=log_z,
    )


def _log_mean_kernel(omega: SpectralGibbs) -> np.ndarray:
    """Matrix of logarithmic means (p_i - p_j) / (log p_i - log p_j); p_i on the diagonal."""
    if np.min(omega.populations) < MIN_POPULATION:
        raise SingularityError("opcore: Gibbs populations underflow (p < 1e-300)")
    lp = omega.log_populations
    hi = np.maximum.outer(lp, lp)
    gap = np.abs(np.subtract.outer(lp, lp))
    safe = np.where(gap == 0.0, 1.0, gap)
    # p_hi * (1 - p_lo/p_hi) / log(p_hi/p_lo), stable for any separation
    factor = np.where(gap == 0.0, 1.0, -np.expm1(-safe) / safe)
    return np.exp(hi) * factor


def j_apply(omega: SpectralGibbs, A) -> np.ndarray:
    """Kubo-Mori map: integral over s of omega^(1-s) (A - <A>) omega^s."""
    A = as_hermitian(A, "A")
    _check_dims(A, omega.vectors)
    Ae = omega.to_eigenbasis(A)
    Ae = Ae - omega.expect(A) * np.eye(omega.dim)
    out = omega.from_eigenbasis(_log_mean_kernel(omega) * Ae)
    return symmetrize(out, "in j_apply")


def j_inverse_apply(omega: SpectralGibbs, B) -> np.ndarray:
    """Derivative of the matrix logarithm at omega in direction B."""
    B = as_hermitian(B, "B")
    _check_dims(B, omega.vectors)
    Be = omega.to_eigenbasis(B)
    out = omega.from_eigenbasis(Be / _log_mean_kernel(omega))
    return symmetrize(out, "in j_inverse_apply")


def j_apply_quadrature(omega: SpectralGibbs, A, n_nodes: int = 21) -> np.ndarray:
    """Gauss-Legendre evaluation of the s-integral defining ``j_apply``.

    Independent of the divided-difference kernel; used to cross-check it.
    """
    A = as_operator(A, "A")
    rho = omega.matrix
    centred = A - np.real(np.trace(rho @ A)) * np.eye(omega.dim)
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    s_nodes, weights = 0.5 * (x + 1.0), 0.5 * w
    V, lp = omega.vectors, omega.log_populations
    out = np.zeros_like(centred)
    for s, wt in zip(s_nodes, weights):
        left = (V * np.exp((1.0 - s) * lp)) @ V.conj().T
        right = (V * np.exp(s * lp)) @ V.conj().T
        out += wt * left @ centred @ right
    return out


def gibbs_derivative(omega: SpectralGibbs, Hdot) -> np.ndarray:
    """Directional derivative of the Gibbs state along ``Hdot``."""
    return -omega.beta * j_apply(omega, Hdot)


def kmb_inner(omega: SpectralGibbs, A, B) -> float:
    """Kubo-Mori-Bogoliubov inner product (generalised covariance) Tr[A J[B]]."""
    A = as_hermitian(A, "A")
    return float(np.real(np.trace(A @ j_apply(omega, B))))


# -------------------------------------------------------- entropic functionals

def von_neumann_entropy(rho) -> float:
    p = np.linalg.eigvalsh(as_hermitian(rho, "rho"))
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def _logm_hermitian(sigma: np.ndarray, support_tol: float):
    w, V = np.linalg.eigh(sigma)
    support = w > support_tol
    logw = np.where(support, np.log(np.where(support, w, 1.0)), 0.0)
    return (V * logw) @ V.conj().T, V[:, ~support]


def relative_entropy(rho, sigma, return_flag: bool = False, support_tol: float = 1e-14):
    """Quantum relative entropy S(rho || sigma).

    A support violation gives ``inf``; with ``return_flag`` the pair
    ``(value, support_ok)`` is returned instead of warning.
    """
    rho = as_hermitian(rho, "rho")
    if isinstance(sigma, SpectralGibbs):
        _check_dims(rho, sigma.vectors)
        log_sigma, kernel = sigma.log_matrix(), np.zeros((rho.shape[0], 0))
    else:
        sigma = as_hermitian(sigma, "sigma")
        _check_dims(rho, sigma)
        log_sigma, kernel = _logm_hermitian(sigma, support_tol)
    leak = float(np.real(np.trace(kernel.conj().T @ rho @ kernel))) if kernel.size else 0.0
    if leak > support_tol:
        if return_flag:
            return np.inf, False
        warnings.warn("supp(rho) is not contained in supp(sigma)", SupportWarning, stacklevel=2)
        return np.inf
    value = -von_neumann_entropy(rho) - float(np.real(np.trace(rho @ log_sigma)))
    return (value, True) if return_flag else value


def free_energy(rho, H, beta: float) -> float:
    """Non-equilibrium free energy <H>_rho - S(rho)/beta."""
    rho = as_hermitian(rho, "rho")
    H = as_hermitian(H, "H")
    _check_dims(rho, H)
    return expect(rho, H) - von_neumann_entropy(rho) / beta


def noneq_split(rho, H, beta: float) -> tuple[float, float]:
    """Return (equilibrium free energy, availability S(rho||omega)/beta)."""
    omega = gibbs_state(H, beta)
    return omega.free_energy, relative_entropy(rho, omega) / beta


# ------------------------------------------------------------- vectorization

def vectorize(A) -> np.ndarray:
    return as_operator(A).reshape(-1).copy()


def devectorize(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    d = int(round(np.sqrt(v.size)))
    if v.ndim != 1 or d * d != v.size:
        raise ValidationError(f"opcore.devectorize: length {v.size} is not a perfect square")
    return v.reshape(d, d)


def hs_inner(A, B) -> complex:
    """Hilbert-Schmidt product Tr[A^dagger B] through the vectorized form."""
    return complex(np.vdot(vectorize(A), vectorize(B)))


def superop_matrix(linear_map: Callable[[np.ndarray], np.ndarray], dim: int) -> np.ndarray:
    """d^2 x d^2 matrix of a linear map on d x d operators."""
    cols = []
    for k in range(dim * dim):
        unit = np.zeros(dim * dim, dtype=complex)
        unit[k] = 1.0
        out = np.asarray(linear_map(unit.reshape(dim, dim)), dtype=complex)
        if out.shape != (dim, dim):
            raise ValidationError(f"opcore.superop_matrix: map returned shape {out.shape}")
        cols.append(out.reshape(-1))
    return np.stack(cols, axis=1)


def left_right(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Superoperator of X -> A X B for row-major vectorization."""
    return np.kron(A, B.T)


@lru_cache(maxsize=16)
def _hermitian_basis(dim: int) -> np.ndarray:
    ops = []
    for l in range(dim):
        D = np.zeros((dim, dim), dtype=complex)
        D[l, l] = 1.0
        ops.append(D)
    for l in range(dim):
        for m in range(l + 1, dim):
            X = np.zeros((dim, dim), dtype=complex)
            X[l, m] = X[m, l] = 1 / np.sqrt(2)
            Y = np.zeros((dim, dim), dtype=complex)
            Y[l, m], Y[m, l] = 1j / np.sqrt(2), -1j / np.sqrt(2)
            ops.extend([X, Y])
    basis = np.stack(ops)
    basis.setflags(write=False)
    return basis


def hermitian_basis(dim: int) -> np.ndarray:
    """Orthonormal Hermitian operator basis: projectors then symmetric/antisymmetric pairs.

    Returned as an array of shape (d^2, d, d).
    """
    return _hermitian_basis(int(dim))


def real_coordinates(A) -> np.ndarray:
    """Real coordinates of a Hermitian operator in ``hermitian_basis``."""
    A = as_operator(A)
    B = hermitian_basis(A.shape[0])
    return np.real(np.einsum("kij,ji->k", B, A))


def from_real_coordinates(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    d = int(round(np.sqrt(c.size)))
    return np.einsum("k,kij->ij", c, hermitian_basis(d))


def real_superop(S: np.ndarray) -> np.ndarray:
    """Matrix of a Hermiticity-preserving superoperator in ``hermitian_basis`` coordinates."""
    d = int(round(np.sqrt(S.shape[0])))
    B = hermitian_basis(d).reshape(d * d, d * d)  # rows: vec(B_k)
    return np.real(B.conj() @ S @ B.T)


# --------------------------------------------------------------- JSON forms

def operator_to_json(A) -> dict:
    A = as_operator(A)
    return {"dim": A.shape[0], "re": A.real.tolist(), "im": A.imag.tolist()}


def operator_from_json(obj: dict) -> np.ndarray:
    try:
        A = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
        dim = int(obj["dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"opcore.operator_from_json: malformed operator ({exc})") from exc
    if A.shape != (dim, dim):
        raise ValidationError(f"opcore.operator_from_json: shape {A.shape} does not match dim {dim}")
    return A
