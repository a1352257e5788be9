import numpy as np
import pytest

from lqric.errors import DimensionMismatch, FeedbackIllPosed, NonFiniteEntry, ResolventSingular
from lqric.system import (
    CostWeight,
    StateSpaceSystem,
    close_state_feedback,
    cost_matrix,
    dual,
    feedback_loop_matrix,
    output_feedback,
    resolvent,
    series,
    spectral_abscissa,
    transfer_eval,
)

from conftest import scalar


def test_dimensions_and_immutability():
    s = StateSpaceSystem(np.eye(2), np.ones((2, 1)), np.ones((3, 2)), np.zeros((3, 1)))
    assert (s.n, s.m, s.p) == (2, 1, 3)
    with pytest.raises(ValueError):
        s.A[0, 0] = 5.0


def test_validation_errors():
    with pytest.raises(DimensionMismatch):
        StateSpaceSystem(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), np.zeros((1, 1)))
    with pytest.raises(DimensionMismatch):
        StateSpaceSystem(np.ones((2, 3)), np.ones((2, 1)), np.ones((1, 2)), np.zeros((1, 1)))
    with pytest.raises(NonFiniteEntry):
        StateSpaceSystem([[np.nan]], [[1]], [[1]], [[0]])


def test_cost_weight_symmetry():
    assert np.array_equal(cost_matrix(None, 2), np.eye(2))
    assert np.array_equal(cost_matrix(3.0, 2), 3 * np.eye(2))
    with pytest.raises(ValueError):
        CostWeight(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_transfer_and_resolvent():
    s = scalar(-1, 1, 1, 1)
    assert transfer_eval(s, 1.0)[0, 0] == pytest.approx(1.5)
    with pytest.raises(ResolventSingular):
        resolvent(np.array([[1.0]]), 1.0)


def test_resolvent_identity():
    # R(s) - R(z) = (z - s) R(s) R(z)
    rng = np.random.default_rng(5)
    A = rng.standard_normal((3, 3))
    s, z = 2.0 + 1j, -0.5 + 3j
    lhs = resolvent(A, s) - resolvent(A, z)
    rhs = (z - s) * resolvent(A, s) @ resolvent(A, z)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_dual_transposes_transfer():
    rng = np.random.default_rng(1)
    s = StateSpaceSystem(rng.standard_normal((3, 3)), rng.standard_normal((3, 2)),
                         rng.standard_normal((1, 3)), rng.standard_normal((1, 2)))
    z = 0.3 + 2j
    assert np.allclose(transfer_eval(dual(s), z), transfer_eval(s, z).T)


def test_output_feedback_transfer():
    # closing u = L y + v around G gives (I - G L)^{-1} G
    rng = np.random.default_rng(2)
    G = StateSpaceSystem(rng.standard_normal((2, 2)), rng.standard_normal((2, 1)),
                         rng.standard_normal((1, 2)), [[0.5]])
    L = np.array([[0.7]])
    cl = output_feedback(G, L)
    z = 1.0 + 1j
    g = transfer_eval(G, z)
    assert np.allclose(transfer_eval(cl, z), np.linalg.solve(np.eye(1) - g @ L, g))
    with pytest.raises(FeedbackIllPosed):
        output_feedback(G, [[2.0]])


def test_state_feedback_closed_loop():
    s = scalar(1, 1, 0, 1)
    cl = close_state_feedback(s, [[-2.0]])
    assert cl.A[0, 0] == -1.0
    m = cl.input_channel()
    assert transfer_eval(m, 0.0)[0, 0] == pytest.approx(1 - 2 / 1.0)


def test_series_and_abscissa():
    a, b = scalar(-1, 1, 1, 0), scalar(-2, 1, 1, 1)
    s = series(a, b)
    z = 0.7j
    assert np.allclose(transfer_eval(s, z), transfer_eval(b, z) @ transfer_eval(a, z))
    assert spectral_abscissa(s.A) == pytest.approx(-1.0)


def test_feedback_loop_matrix_scalar():
    # x' = x + u, y = x, u = -3 y -> pole -2
    plant = scalar(1, 1, 1, 0)
    ctrl = StateSpaceSystem(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[-3.0]])
    A = feedback_loop_matrix(plant, ctrl)
    assert np.allclose(np.linalg.eigvals(A), [-2.0])
