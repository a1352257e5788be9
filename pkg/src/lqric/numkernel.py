"""Dense linear-algebra primitives used throughout the package.

Everything here is a thin, checked layer over LAPACK (through scipy):
matrix exponentials, exact quadratic integrals of exponentials via
augmented block exponentials, ordered invariant subspaces, Lyapunov
solves, singular values and generalized eigenvalues of pencils.
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple, Union

import numpy as np
import scipy.linalg as sla

from .errors import (
    BoundaryEigenvalue,
    DimensionMismatch,
    SingularPencil,
    SingularSylvester,
)

BOUNDARY_TOL = 1e-9


def as_matrix(M, dtype=float) -> np.ndarray:
    """Coerce scalars, vectors and nested lists to a 2-D array."""
    arr = np.asarray(M, dtype=dtype)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got array of shape {arr.shape}")
    return arr


def _require_square(M: np.ndarray, name: str = "M") -> None:
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {M.shape}")


def expm(M, t: float = 1.0) -> np.ndarray:
    """Return ``exp(M t)`` (Pade scaling-and-squaring)."""
    M = as_matrix(M)
    _require_square(M)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    if M.shape[0] == 0:
        return np.zeros((0, 0))
    return sla.expm(M * t)


def _vanloan_step(A1, Q, A2, h):
    # exp([[-A1^T, Q], [0, A2]] h) = [[e^{-A1^T h}, F12], [0, e^{A2 h}]]
    # and e^{A1^T h} F12 = int_0^h e^{A1^T s} Q e^{A2 s} ds.
    n1, n2 = A1.shape[0], A2.shape[0]
    H = np.zeros((n1 + n2, n1 + n2))
    H[:n1, :n1] = -A1.T
    H[:n1, n1:] = Q
    H[n1:, n1:] = A2
    F = sla.expm(H * h)
    E1 = sla.expm(A1.T * h)
    return E1 @ F[:n1, n1:]


def _doubling_steps(norm: float, t: float) -> int:
    # Keep the base step inside the well-conditioned range of the block exponential.
    if norm * t <= 0.5:
        return 0
    return int(np.ceil(np.log2(norm * t / 0.5)))


def cross_quadratic_integral(A1, Q, A2, t: float) -> np.ndarray:
    """``int_0^t exp(A1^T s) Q exp(A2 s) ds`` computed exactly.

    A Van Loan block exponential gives the integral over a short base
    step; the identity ``I(2h) = I(h) + exp(A1^T h) I(h) exp(A2 h)``
    then doubles up to ``t`` without ever exponentiating a matrix with
    widely separated growth rates.
    """
    A1, Q, A2 = as_matrix(A1), as_matrix(Q), as_matrix(A2)
    _require_square(A1, "A1")
    _require_square(A2, "A2")
    if Q.shape != (A1.shape[0], A2.shape[0]):
        raise DimensionMismatch(f"Q has shape {Q.shape}, expected {(A1.shape[0], A2.shape[0])}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0 or Q.size == 0:
        return np.zeros(Q.shape)
    norm = max(np.linalg.norm(A1, 1), np.linalg.norm(A2, 1), 1e-300)
    k = _doubling_steps(norm, t)
    h = t / 2**k
    I = _vanloan_step(A1, Q, A2, h)
    E1 = sla.expm(A1.T * h)
    E2 = sla.expm(A2 * h)
    for _ in range(k):
        I = I + E1 @ I @ E2
        E1 = E1 @ E1
        E2 = E2 @ E2
    return I


def integral_expm(A, t: float) -> np.ndarray:
    """``int_0^t exp(A s) ds`` via the exponential of ``[[A, I], [0, 0]]``."""
    A = as_matrix(A)
    _require_square(A, "A")
    n = A.shape[0]
    if t < 0:
        raise ValueError("t must be nonnegative")
    if n == 0 or t == 0:
        return np.zeros((n, n))
    norm = max(np.linalg.norm(A, 1), 1e-300)
    k = _doubling_steps(norm, t)
    h = t / 2**k
    H = np.zeros((2 * n, 2 * n))
    H[:n, :n] = A
    H[:n, n:] = np.eye(n)
    F = sla.expm(H * h)
    E, G = F[:n, :n], F[:n, n:]
    for _ in range(k):
        # int_0^{2h} = int_0^h + e^{Ah} int_0^h
        G = G + E @ G
        E = E @ E
    return G


class GramianIntegrals(NamedTuple):
    expAt: np.ndarray
    intExpB: np.ndarray
    intQuadQ: np.ndarray
    ctrlGramian: np.ndarray


def gramian_integrals(A, B, Q, t: float) -> GramianIntegrals:
    """Exact exponential integrals over ``[0, t]``.

    Returns
    -------
    GramianIntegrals
        ``expAt = e^{At}``, ``intExpB = int_0^t e^{A(t-s)} B ds``,
        ``intQuadQ = int_0^t e^{A^T s} Q e^{A s} ds`` and the
        controllability Gramian ``int_0^t e^{A s} B B^T e^{A^T s} ds``.
    """
    A, B, Q = as_matrix(A), as_matrix(B), as_matrix(Q)
    _require_square(A, "A")
    n = A.shape[0]
    if B.shape[0] != n:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, A is {n}x{n}")
    if Q.shape != (n, n):
        raise DimensionMismatch(f"Q has shape {Q.shape}, expected {(n, n)}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    expAt = expm(A, t)
    intExpB = integral_expm(A, t) @ B
    intQuadQ = cross_quadratic_integral(A, Q, A, t)
    W = cross_quadratic_integral(A.T, B @ B.T, A.T, t)
    return GramianIntegrals(
        expAt,
        intExpB,
        0.5 * (intQuadQ + intQuadQ.T),
        0.5 * (W + W.T),
    )


Region = Union[str, Callable[[complex], bool]]


@dataclass(frozen=True)
class InvariantSubspace:
    basis: np.ndarray
    eigenvalues: np.ndarray
    region: Region

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def _region_selector(region: Region):
    if region in ("lhp", "OpenLeftHalfPlane"):
        return "lhp", lambda lam: lam.real < 0
    if region in ("rhp", "OpenRightHalfPlane"):
        return "rhp", lambda lam: lam.real > 0
    if callable(region):
        return (lambda re, im: bool(region(complex(re, im)))), region
    raise ValueError(f"unknown region {region!r}")


def stable_invariant_subspace(M, region: Region = "lhp", tol: float = BOUNDARY_TOL) -> InvariantSubspace:
    """Orthonormal basis of the maximal M-invariant subspace for ``region``.

    Uses an ordered real Schur form. For the half-plane regions an
    eigenvalue with ``|Re| <= tol * max(1, |lambda|)`` raises
    :class:`BoundaryEigenvalue`; custom selectors get no boundary check.
    """
    M = as_matrix(M)
    _require_square(M)
    if M.shape[0] % 2:
        raise DimensionMismatch("M must have even dimension")
    sort, select = _region_selector(region)
    lam = np.linalg.eigvals(M)
    if isinstance(sort, str):
        close = np.abs(lam.real) <= tol * np.maximum(1.0, np.abs(lam))
        if np.any(close):
            raise BoundaryEigenvalue(f"eigenvalues on the imaginary axis: {lam[close]}")
    T, Z, sdim = sla.schur(M, output="real", sort=sort)
    basis = Z[:, :sdim]
    eigs = np.linalg.eigvals(T[:sdim, :sdim]) if sdim else np.zeros(0, dtype=complex)
    if not all(select(e) for e in eigs):
        raise BoundaryEigenvalue("Schur reordering left eigenvalues outside the region")
    return InvariantSubspace(basis, eigs, region)


def lyapunov_solve(A, Q) -> np.ndarray:
    """Solve ``A^T X + X A + Q = 0``."""
    A, Q = as_matrix(A), as_matrix(Q)
    _require_square(A, "A")
    n = A.shape[0]
    if Q.shape != (n, n):
        raise DimensionMismatch(f"Q has shape {Q.shape}, expected {(n, n)}")
    if n == 0:
        return np.zeros((0, 0))
    lam = np.linalg.eigvals(A)
    sep = np.min(np.abs(lam[:, None] + lam.conj()[None, :]))
    if sep <= 1e-12 * max(1.0, np.linalg.norm(A, 2)):
        raise SingularSylvester(f"spectra of A and -A^T are not disjoint (separation {sep:.3g})")
    X = sla.solve_continuous_lyapunov(A.T, -Q)
    if np.allclose(Q, Q.T, rtol=0, atol=1e-14 * max(1.0, np.abs(Q).max())):
        X = 0.5 * (X + X.T)
    return X


def min_singular_value(M) -> float:
    M = np.asarray(M)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False).min())


def pencil_eigenvalues(E, A, tol: float = 1e-10) -> np.ndarray:
    """Generalized eigenvalues ``lambda`` with ``det(A - lambda E) = 0``.

    Infinite eigenvalues come back as ``complex(inf, 0)``. A pencil whose
    determinant vanishes identically raises :class:`SingularPencil`.
    """
    E, A = as_matrix(E), as_matrix(A)
    if E.shape != A.shape or E.shape[0] != E.shape[1]:
        raise DimensionMismatch(f"pencil needs equal square matrices, got {E.shape} and {A.shape}")
    n = A.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    scale = max(np.linalg.norm(A, 2), np.linalg.norm(E, 2), 1e-300)
    # Regularity: a regular pencil is nonsingular at all but finitely many points.
    probes = (0.6180339887 + 0.3819660113j, -1.4142135624 + 0.7320508076j)
    if all(
        min_singular_value(A - z * scale * E) <= tol * scale * (1 + abs(z))
        for z in probes
    ):
        raise SingularPencil("matrix pencil is singular (det(A - lambda E) == 0 identically)")
    ab = sla.eig(A, E, right=False, homogeneous_eigvals=True)
    alpha, beta = ab[0], ab[1]
    out = np.empty(n, dtype=complex)
    inf_mask = np.abs(beta) <= tol * np.abs(alpha)
    out[inf_mask] = complex(np.inf, 0.0)
    out[~inf_mask] = alpha[~inf_mask] / beta[~inf_mask]
    return out


def orth_krylov(A, B, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of ``span{B, AB, A^2 B, ...}`` by block Arnoldi.

    Rank decisions use ``tol`` relative to ``max(1, ||A||, ||B||)``.
    """
    A, B = as_matrix(A), as_matrix(B)
    n = A.shape[0]
    if n == 0 or B.size == 0:
        return np.zeros((n, 0))
    scale = max(1.0, np.linalg.norm(A, 2), np.linalg.norm(B, 2))

    def _extend(V, W):
        if V.shape[1]:
            W = W - V @ (V.T @ W)
            W = W - V @ (V.T @ W)
        if W.size == 0:
            return np.zeros((n, 0))
        U, s, _ = np.linalg.svd(W, full_matrices=False)
        return U[:, s > tol * scale]

    V = _extend(np.zeros((n, 0)), B)
    new = V
    while new.shape[1] and V.shape[1] < n:
        new = _extend(V, A @ new)
        V = np.hstack([V, new])
    return V[:, :n]


def orth_complement(V: np.ndarray) -> np.ndarray:
    n, k = V.shape
    if k == 0:
        return np.eye(n)
    Q, _ = np.linalg.qr(V, mode="complete")
    return Q[:, k:]


def psd_sqrt(S, floor: float = 1e-12) -> np.ndarray:
    """Symmetric square root through an eigendecomposition."""
    S = as_matrix(S)
    w, U = np.linalg.eigh(0.5 * (S + S.T))
    if w.min(initial=np.inf) < -floor * max(1.0, np.abs(w).max(initial=0.0)):
        raise np.linalg.LinAlgError("matrix is not positive semidefinite")
    w = np.maximum(w, 0.0)
    return (U * np.sqrt(w)) @ U.T


def psd_inv_sqrt(S, floor: float = 1e-12) -> np.ndarray:
    S = as_matrix(S)
    w, U = np.linalg.eigh(0.5 * (S + S.T))
    if w.min(initial=np.inf) <= floor * max(1.0, np.abs(w).max(initial=0.0)):
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return (U / np.sqrt(w)) @ U.T


def loewner_geq(X, Y, tol: float = 1e-9) -> bool:
    """``X >= Y`` in the Loewner order, up to a norm-scaled tolerance."""
    X, Y = as_matrix(X), as_matrix(Y)
    D = X - Y
    lam = np.linalg.eigvalsh(0.5 * (D + D.T))
    if lam.size == 0:
        return True
    scale = 1.0 + np.linalg.norm(X, 2) + np.linalg.norm(Y, 2)
    return bool(lam.min() >= -tol * scale)
