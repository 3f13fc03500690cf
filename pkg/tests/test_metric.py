import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thermolen import lindblad, metric, opcore
from thermolen.errors import ConditioningError, DomainError, ValidationError
from thermolen.models import QubitClosedForm, qubit_closed_form_metric, qubit_model
from thermolen.sampling import random_hermitian, random_linear_model

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(2, 4)
n_params = st.integers(1, 3)


@given(seeds, dims, n_params)
def test_kmb_equals_log_partition_hessian(seed, d, n):
    model, lam = random_linear_model(np.random.default_rng(seed), d, n)
    G = metric.kmb_metric(model, lam)
    oracle = metric.log_partition_hessian(model, lam) / model.beta**2
    assert np.linalg.norm(G - oracle) <= 1e-6 * np.linalg.norm(G)


@given(seeds, dims, n_params)
def test_lindblad_metric_symmetric_positive(seed, d, n):
    model, lam = random_linear_model(np.random.default_rng(seed), d, n)
    m = metric.metric_matrix(model, lam)
    assert np.max(np.abs(m - m.T)) <= 1e-10
    assert np.linalg.eigvalsh(m).min() > 0
    np.testing.assert_allclose(metric.metric_matrix(model, lam, drazin="spectral"), m, atol=1e-9)


@given(seeds, dims, n_params, st.floats(0.1, 10.0))
def test_gibbs_mixing_metric_is_scaled_kmb(seed, d, n, tau):
    rng = np.random.default_rng(seed)
    X = [random_hermitian(rng, d) for _ in range(n)]
    model = metric.linear_model(X, 1.1, "gibbs_mixing", offset=random_hermitian(rng, d), tau=tau)
    lam = rng.uniform(-1, 1, n)
    np.testing.assert_allclose(metric.metric_matrix(model, lam), tau * metric.kmb_metric(model, lam),
                               rtol=1e-9, atol=1e-12)


def test_relaxation_metric_matches_relaxation_generator(rng):
    d = 3
    X = [random_hermitian(rng, d) for _ in range(2)]
    taus = np.array([0.4, 2.5])
    H0 = random_hermitian(rng, d)
    model = metric.linear_model(X, 0.9, lambda H, b: lindblad.relaxation_generator(H, b, X, taus), offset=H0)
    lam = np.array([0.3, -0.2])
    np.testing.assert_allclose(metric.metric_matrix(model, lam), metric.relaxation_metric(model, lam, taus),
                               rtol=1e-9)
    field = metric.ModelMetricField(model, kind="relaxation-times", taus=taus)
    np.testing.assert_allclose(field(lam), metric.relaxation_metric(model, lam, taus))
    with pytest.raises(DomainError):
        metric.relaxation_metric(model, lam, [1.0, -1.0])


def test_kmb_cross_check_flag(rng):
    model, lam = random_linear_model(rng, 3, 2)
    metric.kmb_metric(model, lam, cross_check=True)
    with pytest.raises(ConditioningError):
        metric.kmb_metric(model, lam, cross_check=True, rtol=1e-30)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("beta", [0.5, 1.0, 3.0])
def test_qubit_metric_matches_closed_form(alpha, beta):
    model = qubit_model(alpha, beta)
    for r, theta, phi in [(0.05, 0.3, 0.0), (0.7, 1.2, 2.0), (2.5, 2.8, -1.0)]:
        np.testing.assert_allclose(metric.metric_matrix(model, [r, theta, phi]),
                                   qubit_closed_form_metric(r, theta, alpha, beta), atol=1e-10, rtol=1e-8)


@pytest.mark.parametrize("chart,lam", [("xz", [0.8, 2.0]), ("radial", [1.3])])
def test_qubit_charts_match_closed_form(chart, lam):
    numeric = metric.ModelMetricField(qubit_model(1.5, 1.0, chart=chart))
    closed = QubitClosedForm(1.5, 1.0, chart=chart)
    np.testing.assert_allclose(numeric(lam), closed(lam), rtol=1e-8, atol=1e-13)


def test_qubit_domain():
    field = QubitClosedForm(1.0)
    with pytest.raises(DomainError):
        field([1e-4, 1.0, 0.0])
    with pytest.raises(ValidationError):
        field([1.0, 1.0])


def test_euclidean_christoffel_vanishes():
    field = metric.euclidean_field(3)
    assert np.all(metric.christoffel(field, [0.1, 2.0, -3.0]) == 0)


def _polar():
    return metric.FunctionMetricField(lambda lam: np.diag([1.0, lam[0] ** 2]), 2,
                                      margin=lambda lam: lam[0])


def test_polar_christoffel_finite_difference():
    r = 1.7
    gamma = metric.christoffel(_polar(), [r, 0.4])
    expected = np.zeros((2, 2, 2))
    expected[0, 1, 1] = -r
    expected[1, 0, 1] = expected[1, 1, 0] = 1.0 / r
    np.testing.assert_allclose(gamma, expected, atol=1e-8)


@given(seeds)
def test_christoffel_symmetric_lower_indices(seed):
    model, lam = random_linear_model(np.random.default_rng(seed), 3, 2, generator="gibbs_mixing")
    gamma = metric.christoffel(metric.ModelMetricField(model), lam)
    np.testing.assert_allclose(gamma, np.swapaxes(gamma, 1, 2), atol=1e-12)


def test_christoffel_rejects_degenerate_metric():
    with pytest.raises(ConditioningError):
        metric.christoffel_from(np.diag([1.0, 1e-14]), np.zeros((2, 2, 2)))


def test_analytic_scheme_requires_derivative():
    with pytest.raises(ValidationError):
        _polar().derivatives([1.0, 0.0], scheme="analytic")


def test_eigenanalysis_and_sweep():
    field = QubitClosedForm(1.0)
    eig = metric.metric_eigenanalysis(field, [1.0, np.pi / 2, 0.0])
    assert np.all(np.diff(eig.eigenvalues) <= 0)
    assert eig.ratio == pytest.approx(eig.eigenvalues[0] / eig.eigenvalues[-1])
    rows = metric.metric_sweep(field, [[1.0, 1.0, 0.0], [2.0, 1.0, 0.0]])
    assert len(rows) == 2 and set(rows[0]) >= {"lambda1", "m11", "m23", "eig3"}


def test_kmb_matrix_is_generalised_covariance(rng):
    omega = opcore.gibbs_state(random_hermitian(rng, 3), 1.0)
    X = [random_hermitian(rng, 3) for _ in range(2)]
    G = metric.kmb_matrix(omega, X)
    assert G[0, 1] == pytest.approx(opcore.kmb_inner(omega, X[0], X[1]))
