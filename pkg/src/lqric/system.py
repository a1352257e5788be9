"""State-space data model and interconnections.

Systems are stored with real matrices; complex arithmetic only enters
when a transfer function is evaluated at a point ``s``.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionMismatch, FeedbackIllPosed, NonFiniteEntry, ResolventSingular
from .numkernel import as_matrix

RESOLVENT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class StateSpaceSystem:
    """Generators ``(A, B, C, D)`` of ``x' = Ax + Bu, y = Cx + Du``.

    Dimension and finiteness checks run on construction, see :func:`validate`.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _matrix(self.A, "A")
        n = A.shape[0]
        B = _matrix(self.B, "B", rows=n)
        C = _matrix(self.C, "C", cols=n)
        D = _matrix(self.D, "D", rows=C.shape[0], cols=B.shape[1])
        for name, M in zip("ABCD", (A, B, C, D)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)
        validate(self)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def __iter__(self):
        return iter((self.A, self.B, self.C, self.D))

    def __eq__(self, other):
        if not isinstance(other, StateSpaceSystem):
            return NotImplemented
        return all(np.array_equal(x, y) for x, y in zip(self, other))

    def __repr__(self):
        return f"StateSpaceSystem(n={self.n}, m={self.m}, p={self.p})"


def _matrix(M, name, rows=None, cols=None):
    arr = np.array(M, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim == 1:
        # a flat list is ambiguous; resolve it against the known dimension
        if rows is not None and rows != 1 and arr.size == rows:
            arr = arr.reshape(rows, 1)
        elif arr.size == 0 and rows is not None:
            arr = arr.reshape(rows, 0)
        elif arr.size == 0 and cols is not None:
            arr = arr.reshape(0, cols)
        else:
            arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got shape {arr.shape}")
    if name == "A" and arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"A must be square, got {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise DimensionMismatch(f"{name} has {arr.shape[0]} rows, expected {rows}")
    if cols is not None and arr.shape[1] != cols:
        raise DimensionMismatch(f"{name} has {arr.shape[1]} columns, expected {cols}")
    return arr


def validate(sys: StateSpaceSystem) -> None:
    """Raise :class:`DimensionMismatch` or :class:`NonFiniteEntry` if ``sys`` is malformed."""
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
    if C.shape[1] != n:
        raise DimensionMismatch(f"C has {C.shape[1]} columns, expected {n}")
    if D.shape != (C.shape[0], B.shape[1]):
        raise DimensionMismatch(f"D has shape {D.shape}, expected {(C.shape[0], B.shape[1])}")
    for name, M in zip("ABCD", (A, B, C, D)):
        if not np.all(np.isfinite(M)):
            raise NonFiniteEntry(f"{name} contains non-finite entries")


class Domain(str, Enum):
    """Admissible controls: exponentially stabilizing or output-stabilizing."""

    EXP = "exp"
    OUT = "out"


@dataclass(frozen=True)
class CostWeight:
    J: np.ndarray

    def __post_init__(self):
        J = as_matrix(self.J)
        if J.shape[0] != J.shape[1]:
            raise DimensionMismatch(f"J must be square, got {J.shape}")
        if not np.all(np.isfinite(J)):
            raise NonFiniteEntry("J contains non-finite entries")
        if np.abs(J - J.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(J).max(initial=0.0)):
            raise ValueError("J must be symmetric")
        object.__setattr__(self, "J", 0.5 * (J + J.T))


def cost_matrix(J, p: int) -> np.ndarray:
    """Normalize a cost weight argument (None, scalar, matrix, CostWeight) to ``p x p``."""
    if J is None:
        return np.eye(p)
    if isinstance(J, CostWeight):
        J = J.J
    J = np.asarray(J, dtype=float)
    if J.ndim == 0:
        J = J * np.eye(p)
    J = CostWeight(J).J
    if J.shape != (p, p):
        raise DimensionMismatch(f"J has shape {J.shape}, expected {(p, p)}")
    return J


@dataclass(frozen=True)
class FeedbackPair:
    """State feedback ``u = K x`` with the feedthrough normalized to zero."""

    K: np.ndarray
    F: np.ndarray = field(default=None)

    def __post_init__(self):
        K = as_matrix(self.K)
        object.__setattr__(self, "K", K)
        F = np.zeros((K.shape[0], K.shape[0])) if self.F is None else as_matrix(self.F)
        if np.any(F != 0):
            raise ValueError("only F = 0 is supported")
        object.__setattr__(self, "F", F)


@dataclass(frozen=True)
class ClosedLoopSystem:
    """``sys_loop`` maps the external input to ``y``; ``K_loop`` reads out ``u``."""

    sys_loop: StateSpaceSystem
    K_loop: np.ndarray

    @property
    def A(self):
        return self.sys_loop.A

    def input_channel(self) -> StateSpaceSystem:
        """Realization of ``M(s) = I + K (s - A - BK)^{-1} B``."""
        s = self.sys_loop
        return StateSpaceSystem(s.A, s.B, self.K_loop, np.eye(s.m))


def spectral_abscissa(A) -> float:
    A = as_matrix(A)
    if A.size == 0:
        return -np.inf
    return float(np.max(np.linalg.eigvals(A).real))


def _check_resolvent(A, s):
    lam = np.linalg.eigvals(A) if A.size else np.zeros(0)
    if lam.size and np.any(np.abs(s - lam) < RESOLVENT_TOL * (1 + np.abs(lam))):
        raise ResolventSingular(f"s = {s} lies on the spectrum of A")


def resolvent(A, s: complex, X=None) -> np.ndarray:
    """``(sI - A)^{-1} X`` (``X`` defaults to the identity)."""
    A = as_matrix(A)
    _check_resolvent(A, s)
    n = A.shape[0]
    X = np.eye(n) if X is None else X
    return np.linalg.solve(s * np.eye(n) - A, X)


def transfer_eval(sys: StateSpaceSystem, s: complex) -> np.ndarray:
    """``D + C (sI - A)^{-1} B`` as a complex ``p x m`` matrix."""
    if sys.n == 0:
        return sys.D.astype(complex)
    return sys.D + sys.C @ resolvent(sys.A, s, sys.B)


def dual(sys: StateSpaceSystem) -> StateSpaceSystem:
    return StateSpaceSystem(sys.A.T, sys.C.T, sys.B.T, sys.D.T)


def output_feedback(sys: StateSpaceSystem, L) -> StateSpaceSystem:
    """Close ``u = L y + u_L`` around ``sys``."""
    A, B, C, D = sys
    L = as_matrix(L)
    if L.shape != (sys.m, sys.p):
        raise DimensionMismatch(f"L has shape {L.shape}, expected {(sys.m, sys.p)}")
    I_m, I_p = np.eye(sys.m), np.eye(sys.p)
    ILD = I_m - L @ D
    if sys.m and np.linalg.cond(ILD) >= 1e12:
        raise FeedbackIllPosed("I - L D is singular")
    ILD_inv = np.linalg.inv(ILD)
    IDL_inv = np.linalg.inv(I_p - D @ L)
    return StateSpaceSystem(
        A + B @ L @ IDL_inv @ C,
        B @ ILD_inv,
        IDL_inv @ C,
        D @ ILD_inv,
    )


def close_state_feedback(sys: StateSpaceSystem, pair) -> ClosedLoopSystem:
    """Close ``u = K x + u_ext``; ``pair`` is a :class:`FeedbackPair` or a gain matrix."""
    if not isinstance(pair, FeedbackPair):
        pair = FeedbackPair(pair)
    K = pair.K
    if K.shape != (sys.m, sys.n):
        raise DimensionMismatch(f"K has shape {K.shape}, expected {(sys.m, sys.n)}")
    A, B, C, D = sys
    loop = StateSpaceSystem(A + B @ K, B, C + D @ K, D)
    return ClosedLoopSystem(loop, K.copy())


def series(first: StateSpaceSystem, second: StateSpaceSystem) -> StateSpaceSystem:
    """Realization of ``second(s) @ first(s)`` (``first`` acts on the input)."""
    if first.p != second.m:
        raise DimensionMismatch("series connection needs first.p == second.m")
    A = np.block([
        [first.A, np.zeros((first.n, second.n))],
        [second.B @ first.C, second.A],
    ])
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    return StateSpaceSystem(A, B, C, second.D @ first.D)


def feedback_loop_matrix(plant: StateSpaceSystem, controller: StateSpaceSystem) -> np.ndarray:
    """State matrix of the positive-feedback loop ``u = Q y``, ``y = G u``.

    Raises :class:`FeedbackIllPosed` if ``I - D_G D_Q`` is singular.
    """
    G, Q = plant, controller
    if Q.m != G.p or Q.p != G.m:
        raise DimensionMismatch("controller must map plant outputs to plant inputs")
    A = np.block([[G.A, np.zeros((G.n, Q.n))], [np.zeros((Q.n, G.n)), Q.A]])
    B = np.block([[G.B, np.zeros((G.n, Q.m))], [np.zeros((Q.n, G.m)), Q.B]])
    C = np.block([[G.C, np.zeros((G.p, Q.n))], [np.zeros((Q.p, G.n)), Q.C]])
    D = np.block([[G.D, np.zeros((G.p, Q.m))], [np.zeros((Q.p, G.m)), Q.D]])
    L = np.block([[np.zeros((G.m, G.p)), np.eye(G.m)], [np.eye(G.p), np.zeros((G.p, G.m))]])
    return output_feedback(StateSpaceSystem(A, B, C, D), L).A
