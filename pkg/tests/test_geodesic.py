import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thermolen import geodesic, metric
from thermolen.errors import ConvergenceError, DomainError, ValidationError
from thermolen.geodesic import Protocol
from thermolen.models import QubitClosedForm, gap_qubit_kmb_field, w_geodesic_closed_form


def _polar():
    return metric.FunctionMetricField(
        lambda lam: np.diag([1.0, lam[0] ** 2]), 2,
        derivative=lambda lam: np.array([[[0.0, 0.0], [0.0, 2 * lam[0]]], [[0.0, 0.0], [0.0, 0.0]]]),
        margin=lambda lam: lam[0],
    )


def test_euclidean_geodesic_is_chord():
    field = metric.euclidean_field(2)
    sol = geodesic.geodesic_bvp(field, [0.0, 1.0], [2.0, -1.0], beta=2.0)
    t = np.linspace(0, 1, 11)
    np.testing.assert_allclose(sol.protocol(t), np.outer(1 - t, [0, 1]) + np.outer(t, [2, -1]), atol=1e-9)
    assert sol.action == pytest.approx(2.0 * 8.0, rel=1e-10)
    assert sol.length == pytest.approx(np.sqrt(8.0), rel=1e-10)


def test_polar_geodesic_is_cartesian_straight_line():
    sol = geodesic.geodesic_bvp(_polar(), [1.0, 0.0], [1.0, np.pi / 2])
    assert sol.length == pytest.approx(np.sqrt(2.0), rel=1e-8)
    r, phi = sol.protocol(np.linspace(0, 1, 21)).T
    x, y = r * np.cos(phi), r * np.sin(phi)
    np.testing.assert_allclose(x + y, 1.0, atol=1e-7)
    assert sol.diagnostics["energy_drift"] < 1e-7


def test_geodesic_ivp_conserves_speed():
    field = QubitClosedForm(1.0, chart="xz")
    proto = geodesic.geodesic_ivp(field, [0.8, 0.5], [0.3, 0.8])
    assert geodesic.energy_drift(field, proto) < 1e-8


def test_geodesic_ivp_domain_exit():
    field = _polar()
    fenced = metric.FunctionMetricField(field._fn, 2, derivative=field._derivative, margin=lambda lam: lam[0] - 0.1)
    with pytest.raises(DomainError) as info:
        geodesic.geodesic_ivp(fenced, [1.0, 0.0], [-2.0, 0.0])
    assert info.value.exit_time == pytest.approx(0.45, rel=1e-6)
    # running into the singular origin is reported near the crossing time
    with pytest.raises(DomainError) as info:
        geodesic.geodesic_ivp(field, [1.0, 0.0], [-2.0, 0.0])
    assert info.value.exit_time == pytest.approx(0.5, rel=1e-4)


@pytest.mark.parametrize("E_f", [0.5, 2.0, 5.0])
def test_one_dimensional_geodesic_closed_form(E_f):
    field = gap_qubit_kmb_field()
    # length of sech(E) from 0 is the Gudermannian function
    arc = geodesic.geodesic_1d(field, 0.0, E_f)
    assert arc.length == pytest.approx(2 * np.arctan(np.tanh(E_f / 2)), rel=1e-9)
    assert arc.action == pytest.approx(w_geodesic_closed_form(E_f), rel=1e-9)
    shot = geodesic.geodesic_bvp(field, [0.0], [E_f])
    assert shot.action == pytest.approx(arc.action, rel=1e-7)
    t = np.linspace(0, 1, 9)
    np.testing.assert_allclose(shot.protocol(t), arc.protocol(t), atol=1e-6)


def test_one_dimensional_reverse_and_trivial():
    field = gap_qubit_kmb_field()
    fwd = geodesic.geodesic_1d(field, 0.0, 2.0)
    back = geodesic.geodesic_1d(field, 2.0, 0.0)
    assert back.action == pytest.approx(fwd.action, rel=1e-8)
    assert geodesic.geodesic_1d(field, 1.0, 1.0).action == 0.0
    with pytest.raises(ValidationError):
        geodesic.geodesic_1d(_polar(), 1.0, 2.0)


@given(st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3), st.floats(0.1, 3.0))
def test_action_bounds_squared_length(coeffs, beta):
    field = QubitClosedForm(1.0, chart="xz")
    a, b, c = coeffs

    def fn(t):
        return [1.0 + 0.5 * a * np.sin(np.pi * t) + t, b * t + c * t * (1 - t)]

    def dfn(t):
        return [0.5 * a * np.pi * np.cos(np.pi * t) + 1.0, b + c * (1 - 2 * t)]

    proto = Protocol.from_function(fn, dfn, n_knots=41)
    A = geodesic.action(field, proto, beta)
    L = geodesic.length(field, proto)
    assert A >= beta * L**2 * (1 - 1e-10)


def test_geodesic_minimises_action():
    field = QubitClosedForm(1.0, chart="xz")
    sol = geodesic.geodesic_bvp(field, [0.5, 0.2], [1.0, 1.4])
    base = sol.protocol
    for eps in (1e-2, -1e-2, 5e-2):
        bump = Protocol.from_function(
            lambda t: base(t) + eps * np.sin(np.pi * t) * np.array([1.0, 1.0]),
            lambda t: base.velocity(t) + eps * np.pi * np.cos(np.pi * t) * np.array([1.0, 1.0]),
            n_knots=201,
        )
        assert geodesic.action(field, bump) > sol.action
    assert geodesic.action(field, Protocol.linear([0.5, 0.2], [1.0, 1.4])) > sol.action
    # a geodesic has constant speed, so action equals squared length
    assert sol.action == pytest.approx(sol.length**2, rel=1e-8)


def test_knot_refinement_converges():
    field = gap_qubit_kmb_field()

    def fn(t):
        return [2.0 * np.sin(2 * t)]

    def dfn(t):
        return [4.0 * np.cos(2 * t)]

    coarse = geodesic.action(field, Protocol.from_function(fn, dfn, n_knots=11))
    fine = geodesic.action(field, Protocol.from_function(fn, dfn, n_knots=401))
    exact = geodesic.action(field, Protocol.from_function(fn, dfn, n_knots=1601))
    assert abs(fine - exact) < abs(coarse - exact)
    assert abs(fine - exact) < 1e-8


def test_linear_action_closed_form():
    field = gap_qubit_kmb_field()
    for E_f in (0.5, 5.0):
        assert geodesic.action(field, Protocol.linear([0.0], [E_f])) == pytest.approx(E_f * np.tanh(E_f), rel=1e-10)


def test_shooting_budget_reports_failure():
    field = QubitClosedForm(1.0, chart="xz")
    with pytest.raises(ConvergenceError) as info:
        geodesic.geodesic_bvp(field, [0.5, 0.2], [1.0, 1.4], max_shots=2)
    assert info.value.best_residual is not None


def test_protocol_validation_and_evaluation():
    with pytest.raises(ValidationError):
        Protocol(np.array([0.1, 1.0]), np.zeros((2, 1)), np.zeros((2, 1)))
    lin = Protocol.linear([0.0, 1.0], [1.0, 3.0])
    np.testing.assert_allclose(lin(0.25), [0.25, 1.5])
    np.testing.assert_allclose(lin.velocity(np.array([0.0, 1.0])), [[1.0, 2.0], [1.0, 2.0]])
    np.testing.assert_allclose(lin.acceleration(0.5), [0.0, 0.0], atol=1e-14)
    const = Protocol.constant([2.0])
    assert geodesic.action(gap_qubit_kmb_field(), const) == 0.0


def test_geodesic_summary_is_json_ready():
    import json

    sol = geodesic.geodesic_1d(gap_qubit_kmb_field(), 0.0, 1.0)
    json.dumps(sol.summary())
