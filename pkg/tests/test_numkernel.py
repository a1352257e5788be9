import numpy as np
import pytest
import scipy.linalg as sla
from scipy.integrate import quad_vec

from lqric.errors import BoundaryEigenvalue, DimensionMismatch, SingularPencil, SingularSylvester
from lqric.numkernel import (
    as_matrix,
    cross_quadratic_integral,
    expm,
    gramian_integrals,
    integral_expm,
    loewner_geq,
    lyapunov_solve,
    min_singular_value,
    orth_complement,
    orth_krylov,
    pencil_eigenvalues,
    psd_inv_sqrt,
    psd_sqrt,
    stable_invariant_subspace,
)


def quad_oracle(A1, Q, A2, t):
    f = lambda s: sla.expm(A1.T * s) @ Q @ sla.expm(A2 * s)
    return quad_vec(f, 0.0, t, epsabs=1e-13, epsrel=1e-12)[0]


def test_as_matrix_shapes():
    assert as_matrix(3.0).shape == (1, 1)
    assert as_matrix([1, 2]).shape == (1, 2)
    with pytest.raises(DimensionMismatch):
        as_matrix(np.zeros((2, 2, 2)))


def test_expm_scalar():
    assert expm([[1.0]], 2.0)[0, 0] == pytest.approx(np.exp(2.0), rel=1e-14)
    assert expm(np.zeros((0, 0))).shape == (0, 0)


@pytest.mark.parametrize("t", [0.1, 1.0, 7.5])
def test_cross_quadratic_integral_matches_quadrature(t):
    rng = np.random.default_rng(3)
    A1 = rng.standard_normal((3, 3)) - np.eye(3)
    A2 = rng.standard_normal((2, 2))
    Q = rng.standard_normal((3, 2))
    got = cross_quadratic_integral(A1, Q, A2, t)
    ref = quad_oracle(A1, Q, A2, t)
    assert np.allclose(got, ref, rtol=1e-9, atol=1e-11 * np.abs(ref).max())


def test_cross_quadratic_integral_scalar_closed_form():
    # int_0^t e^{-2s} ds
    t = 3.0
    got = cross_quadratic_integral([[-1.0]], [[1.0]], [[-1.0]], t)[0, 0]
    assert got == pytest.approx((1 - np.exp(-2 * t)) / 2, rel=1e-13)


def test_cross_quadratic_integral_zero_time():
    assert np.all(cross_quadratic_integral(np.eye(2), np.eye(2), np.eye(2), 0.0) == 0)


def test_integral_expm_matches_quadrature():
    A = np.array([[0.0, 1.0], [-2.0, -0.3]])
    ref = quad_vec(lambda s: sla.expm(A * s), 0.0, 4.0, epsabs=1e-13)[0]
    assert np.allclose(integral_expm(A, 4.0), ref, atol=1e-11)
    # singular A: int_0^t e^{0 s} ds = t
    assert integral_expm(np.zeros((1, 1)), 2.5)[0, 0] == pytest.approx(2.5)


def test_gramian_integrals_components():
    A = np.array([[-1.0, 2.0], [0.0, -3.0]])
    B = np.array([[0.0], [1.0]])
    Q = np.eye(2)
    g = gramian_integrals(A, B, Q, 2.0)
    assert np.allclose(g.expAt, sla.expm(2 * A))
    ref_b = quad_vec(lambda s: sla.expm(A * (2.0 - s)) @ B, 0.0, 2.0, epsabs=1e-13)[0]
    assert np.allclose(g.intExpB, ref_b, atol=1e-11)
    ref_w = quad_vec(lambda s: sla.expm(A * s) @ B @ B.T @ sla.expm(A.T * s), 0.0, 2.0, epsabs=1e-13)[0]
    assert np.allclose(g.ctrlGramian, ref_w, atol=1e-11)
    assert np.allclose(g.intQuadQ, quad_oracle(A, Q, A, 2.0), atol=1e-11)


def test_stable_subspace_is_invariant():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((6, 6))
    sub = stable_invariant_subspace(M)
    V = sub.basis
    assert sub.dim == int(np.sum(np.linalg.eigvals(M).real < 0))
    # M V = V T for some T: the residual of the projection vanishes
    assert np.linalg.norm(M @ V - V @ (V.T @ M @ V)) < 1e-10
    assert np.all(sub.eigenvalues.real < 0)


def test_stable_subspace_boundary():
    M = np.diag([1.0, -1.0, 0.0, 2.0])
    with pytest.raises(BoundaryEigenvalue):
        stable_invariant_subspace(M)


def test_stable_subspace_rhp_and_custom():
    M = np.diag([1.0, -1.0, 3.0, -2.0])
    assert stable_invariant_subspace(M, "rhp").dim == 2
    sub = stable_invariant_subspace(M, lambda z: abs(z - 3.0) < 0.5)
    assert sub.dim == 1 and sub.eigenvalues[0] == pytest.approx(3.0)


def test_lyapunov_solve_residual():
    A = np.array([[-1.0, 3.0], [0.0, -2.0]])
    Q = np.array([[2.0, 1.0], [1.0, 3.0]])
    X = lyapunov_solve(A, Q)
    assert np.allclose(A.T @ X + X @ A + Q, 0, atol=1e-12)
    assert np.allclose(X, X.T)


def test_lyapunov_singular():
    with pytest.raises(SingularSylvester):
        lyapunov_solve(np.diag([1.0, -1.0]), np.eye(2))


def test_min_singular_value():
    assert min_singular_value(np.diag([3.0, 0.5])) == pytest.approx(0.5)


def test_pencil_eigenvalues_finite_and_infinite():
    E = np.diag([1.0, 0.0])
    A = np.array([[2.0, 1.0], [0.0, 1.0]])
    lam = pencil_eigenvalues(E, A)
    finite = lam[np.isfinite(lam)]
    assert len(finite) == 1 and finite[0] == pytest.approx(2.0)
    assert np.sum(~np.isfinite(lam)) == 1


def test_pencil_singular():
    E = np.diag([1.0, 0.0])
    A = np.array([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(SingularPencil):
        pencil_eigenvalues(E, A)


def test_orth_krylov_controllable_subspace():
    A = np.diag([1.0, 2.0, 3.0])
    B = np.array([[1.0], [1.0], [0.0]])
    V = orth_krylov(A, B)
    assert V.shape == (3, 2)
    assert np.allclose(V.T @ V, np.eye(2))
    assert np.allclose(V[2], 0.0)


def test_orth_complement():
    V = np.array([[1.0], [0.0], [0.0]])
    W = orth_complement(V)
    assert W.shape == (3, 2) and np.allclose(V.T @ W, 0)


def test_psd_sqrt_and_inverse():
    S = np.array([[4.0, 1.0], [1.0, 3.0]])
    R = psd_sqrt(S)
    assert np.allclose(R @ R, S)
    Ri = psd_inv_sqrt(S)
    assert np.allclose(Ri @ S @ Ri, np.eye(2))
    with pytest.raises(np.linalg.LinAlgError):
        psd_inv_sqrt(np.diag([1.0, 0.0]))


def test_loewner_order():
    assert loewner_geq(np.diag([2.0, 1.0]), np.diag([1.0, 1.0]))
    assert not loewner_geq(np.diag([2.0, 0.0]), np.diag([1.0, 1.0]))
