"""Sampled input/output operators on a uniform grid and exact simulation.

Inputs are piecewise constant on ``[kh, (k+1)h)`` and outputs are
sampled at the left endpoints ``ih``. Grid functions carry the
L^2 inner product ``<u, v> = h * sum_k u_k . v_k``; the ``adjoint_*``
methods are adjoints with respect to that weight.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .numkernel import cross_quadratic_integral, expm, integral_expm
from .system import StateSpaceSystem, cost_matrix


@dataclass(frozen=True, eq=False)
class SampledOperators:
    t_final: float
    N: int
    h: float
    A_t: np.ndarray
    B_t: np.ndarray
    C_t: np.ndarray
    D_t: np.ndarray
    n: int
    m: int
    p: int

    @property
    def ip_weight(self) -> float:
        return self.h

    def inner(self, u, v) -> float:
        return float(self.h * np.vdot(u, v).real)

    def adjoint_B(self):
        """``B_t^dagger : H -> grid``."""
        return self.B_t.T / self.h

    def adjoint_C(self):
        """``C_t^dagger : grid -> H``."""
        return self.h * self.C_t.T

    def adjoint_D(self):
        return self.D_t.T


def _step_data(A, B, h):
    E = expm(A, h)
    Phi = integral_expm(A, h) @ B
    return E, Phi


def sampled_blocks(A, B, C, D, t_final: float, N: int):
    """The four sampled operators for arbitrary ``(A, B, C, D)``.

    Returned as ``(A_t, B_t, C_t, D_t)``; ``C``/``D`` may be any
    read-out (e.g. a feedback gain ``K`` with ``D = 0``).
    """
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    if N < 1:
        raise ValueError("N must be at least 1")
    n, m, p = A.shape[0], B.shape[1], C.shape[0]
    h = t_final / N
    E, Phi = _step_data(A, B, h)

    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(powers[-1] @ E)

    A_t = powers[N]
    B_t = np.empty((n, N * m))
    for k in range(N):
        B_t[:, k * m:(k + 1) * m] = powers[N - k - 1] @ Phi
    C_t = np.empty((N * p, n))
    for i in range(N):
        C_t[i * p:(i + 1) * p] = C @ powers[i]

    # Toeplitz: block (i, j) depends only on i - j.
    markov = np.empty((N, p, m))
    markov[0] = D
    for d in range(1, N):
        markov[d] = C @ powers[d - 1] @ Phi
    lag = np.subtract.outer(np.arange(N), np.arange(N))
    blocks = markov[np.clip(lag, 0, None)] * (lag >= 0)[:, :, None, None]
    D_t = blocks.transpose(0, 2, 1, 3).reshape(N * p, N * m)
    return A_t, B_t, C_t, D_t


def discretize(sys: StateSpaceSystem, t_final: float, N: int) -> SampledOperators:
    A_t, B_t, C_t, D_t = sampled_blocks(sys.A, sys.B, sys.C, sys.D, t_final, N)
    return SampledOperators(
        float(t_final), int(N), t_final / N, A_t, B_t, C_t, D_t, sys.n, sys.m, sys.p
    )


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    cost: float


def _grid_input(u, N, m):
    if u is None:
        return np.zeros((N, m))
    u = np.asarray(u, dtype=float)
    if u.ndim == 1 and m == 1:
        u = u.reshape(-1, 1)
    if u.ndim == 1 and u.size == N * m:
        u = u.reshape(N, m)
    if u.shape != (N, m):
        raise DimensionMismatch(f"input must have shape {(N, m)}, got {u.shape}")
    return u


def step_cost_matrix(sys: StateSpaceSystem, J, h: float) -> np.ndarray:
    """Quadratic form ``W`` with ``int_0^h <y, J y> = [x; u]^T W [x; u]``.

    Exact for a constant input over the step: the state/input pair
    evolves under ``[[A, B], [0, 0]]`` and ``y = [C D] [x; u]``.
    """
    n, m = sys.n, sys.m
    Ahat = np.zeros((n + m, n + m))
    Ahat[:n, :n] = sys.A
    Ahat[:n, n:] = sys.B
    CD = np.hstack([sys.C, sys.D])
    W = cross_quadratic_integral(Ahat, CD.T @ J @ CD, Ahat, h)
    return 0.5 * (W + W.T)


def simulate(sys: StateSpaceSystem, J, x0, u, t_final: float, N: int) -> Trajectory:
    """Propagate ``x0`` under a piecewise-constant input; exact cost ``int <y, J y>``."""
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    if N < 1:
        raise ValueError("N must be at least 1")
    J = cost_matrix(J, sys.p)
    n, m = sys.n, sys.m
    x0 = np.asarray(x0, dtype=float).reshape(n)
    u = _grid_input(u, N, m)
    h = t_final / N
    E, Phi = _step_data(sys.A, sys.B, h)
    W = step_cost_matrix(sys, J, h)

    states = np.empty((N + 1, n))
    outputs = np.empty((N, sys.p))
    states[0] = x0
    cost = 0.0
    for k in range(N):
        x, uk = states[k], u[k]
        z = np.concatenate([x, uk])
        cost += z @ W @ z
        outputs[k] = sys.C @ x + sys.D @ uk
        states[k + 1] = E @ x + Phi @ uk
    return Trajectory(np.linspace(0.0, t_final, N + 1), states, outputs, float(cost))
