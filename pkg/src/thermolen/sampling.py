"""Random operators, generators and models for property tests and sweeps.

All samplers take a ``numpy.random.Generator`` so results are reproducible
from a seed.
"""

from __future__ import annotations

import numpy as np

from . import lindblad
from .metric import ParamModel, linear_model


def random_hermitian(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * 0.5 * (A + A.conj().T) / np.sqrt(d)


def random_density_matrix(rng: np.random.Generator, d: int, rank: int | None = None) -> np.ndarray:
    """Ginibre-distributed state of the given rank (full rank by default)."""
    k = d if rank is None else rank
    G = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def random_couplings(rng: np.random.Generator, d: int, low: float = 0.2, high: float = 2.0) -> np.ndarray:
    c = rng.uniform(low, high, size=(d, d))
    return 0.5 * (c + c.T)


def random_davies(rng: np.random.Generator, d: int, beta: float | None = None, H=None,
                  dephasing: bool = True, coherent: bool = True) -> lindblad.LindbladGenerator:
    """Detailed-balance generator with random spectrum, couplings and dephasing."""
    beta = float(rng.uniform(0.2, 3.0)) if beta is None else beta
    H = random_hermitian(rng, d) if H is None else H
    deph = rng.uniform(0.0, 1.0, size=(1, d)) if dephasing else None
    return lindblad.davies_generator(H, beta, random_couplings(rng, d), dephasing=deph, coherent=coherent)


def random_linear_model(rng: np.random.Generator, d: int, n_params: int, beta: float | None = None,
                        generator: str = "davies") -> tuple[ParamModel, np.ndarray]:
    """Linear model ``H0 + sum lam_i X_i`` with a fixed random environment, and a sample point."""
    beta = float(rng.uniform(0.3, 2.0)) if beta is None else beta
    H0 = random_hermitian(rng, d)
    X = [random_hermitian(rng, d) for _ in range(n_params)]
    lam = rng.uniform(-1.0, 1.0, size=n_params)
    if generator == "davies":
        c = random_couplings(rng, d)
        deph = rng.uniform(0.0, 1.0, size=(1, d))
        model = linear_model(X, beta, lambda H, b: lindblad.davies_generator(H, b, c, dephasing=deph),
                             offset=H0)
    else:
        model = linear_model(X, beta, generator, offset=H0)
    return model, lam
