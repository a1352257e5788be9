"""Numerical verification of integral, frequency-domain and discrete Riccati identities.

Grid-based checks use :mod:`lqric.discretize`; any equation that can be
written with exact matrix-exponential integrals is checked that way so
its residual carries no discretization error.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import DegeneratePencil, DimensionMismatch, NotStabilizing
from .discretize import sampled_blocks, simulate
from .numkernel import as_matrix, cross_quadratic_integral, expm, orth_krylov, psd_sqrt
from .system import StateSpaceSystem, cost_matrix, resolvent, spectral_abscissa

EXACT_TOL = 1e-8
REFINE_RATIO = 0.6
GRID_FLOOR = 1e-11


class CheckMode(str, Enum):
    IRE = "ire"
    ST_IRE = "st-ire"
    SIGMA_OPT = "sigma-opt"
    FREQ_IRE = "freq-ire"
    SPECTRAL_FACTOR = "spectral-factor"
    LYAPUNOV = "lyapunov"
    DARE = "dare"
    COST_IDENTITY = "cost-identity"
    RCC = "rcc"


@dataclass
class ResidualReport:
    mode: CheckMode
    per_equation: dict
    grid: dict
    verdict: bool
    tolerances: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "per_equation": {k: float(v) for k, v in self.per_equation.items()},
            "tolerances": {k: float(v) for k, v in self.tolerances.items()},
            "grid": self.grid,
            "verdict": "pass" if self.verdict else "fail",
            "details": self.details,
        }


@dataclass(frozen=True)
class FrequencySample:
    s: complex
    z: complex


def _unpack(sol, n, m):
    """Accept a RiccatiSolution-like object or a ``(P, S, K)`` triple."""
    if isinstance(sol, tuple):
        P, S, K = sol
    else:
        P, S, K = sol.P, sol.S, sol.K
    P, S, K = as_matrix(P), as_matrix(S), as_matrix(K)
    if P.shape != (n, n) or S.shape != (m, m) or K.shape != (m, n):
        raise DimensionMismatch("solution shapes do not match the system")
    return P, S, K


def _opnorm(M, scale=1.0):
    return float(scale * np.linalg.norm(M, 2)) if M.size else 0.0


def _blockdiag_repeat(M, N):
    return np.kron(np.eye(N), M)


def _grid_operators(sys, J, P, S, K, mode, t_final, N):
    """Residuals of the grid-dependent equations at one grid size."""
    A, B, C, D = sys
    m = sys.m
    h = t_final / N
    sqh = np.sqrt(h)
    A_t, B_t, C_t, D_t = sampled_blocks(A, B, C, D, t_final, N)
    Jb = _blockdiag_repeat(J, N)
    Sb = _blockdiag_repeat(S, N)
    DJD = D_t.T @ Jb @ D_t
    BPB = B_t.T @ P @ B_t / h
    DJC = D_t.T @ Jb @ C_t
    BPA = B_t.T @ P @ A_t / h

    if mode is CheckMode.IRE:
        # feedback map x0 -> K e^{A.} x0 and u -> K x of the open loop
        _, _, K_t, F_t = sampled_blocks(A, B, K, np.zeros((m, m)), t_final, N)
        X_t = np.eye(N * m) - F_t
        return {
            "46b": _opnorm(X_t.T @ Sb @ X_t - DJD - BPB),
            "46c": _opnorm(X_t.T @ Sb @ K_t + DJC + BPA, sqh),
        }
    Ao = A + B @ K
    if mode is CheckMode.ST_IRE:
        _, _, Kopt_t, _ = sampled_blocks(Ao, B, K, np.zeros((m, m)), t_final, N)
        S_t = DJD + BPB
        lhs = h * Kopt_t.T @ S_t @ Kopt_t
        rhs = A_t.T @ P @ A_t - P + h * C_t.T @ Jb @ C_t
        F_t = sampled_blocks(A, B, K, np.zeros((m, m)), t_final, N)[3]
        X_t = np.eye(N * m) - F_t
        return {
            "43a": _opnorm(lhs - rhs),
            "43b": _opnorm(S_t - X_t.T @ Sb @ X_t),
            "43c": _opnorm(S_t @ Kopt_t + DJC + BPA, sqh),
        }
    # SigmaOpt: closed-loop state and output maps
    Ao_t, _, Co_t, _ = sampled_blocks(Ao, B, C + D @ K, D, t_final, N)
    return {"52": _opnorm(D_t.T @ Jb @ Co_t + B_t.T @ P @ Ao_t / h, sqh)}


def _exact_residuals(sys, J, P, S, K, mode, t_final):
    A, B, C, D = sys
    if mode is CheckMode.IRE:
        E = expm(A, t_final)
        lhs = E.T @ P @ E - P
        rhs = cross_quadratic_integral(A, K.T @ S @ K - C.T @ J @ C, A, t_final)
        return {"46a": _opnorm(lhs - rhs)}, 1.0 + _opnorm(P) + _opnorm(E.T @ P @ E)
    if mode is CheckMode.SIGMA_OPT:
        Ao, Co = A + B @ K, C + D @ K
        E, Eo = expm(A, t_final), expm(Ao, t_final)
        tail = E.T @ P @ Eo
        integral = cross_quadratic_integral(A, C.T @ J @ Co, Ao, t_final)
        return {"53": _opnorm(tail + integral - P)}, 1.0 + _opnorm(P) + _opnorm(tail)
    return {}, 1.0


def ire_residuals(sys: StateSpaceSystem, J, sol, mode="ire", t_final: float = 1.0,
                  N: int = 100, exact_tol: float = EXACT_TOL) -> ResidualReport:
    """Integral Riccati equation residuals on ``[0, t_final]``.

    ``mode`` selects the equation family: ``ire`` (open-loop form with
    ``X = I - F``), ``st-ire`` (closed-loop feedback map with ``S^t``)
    or ``sigma-opt`` (closed-loop form). Grid residuals are evaluated
    at ``N`` and ``2N``; each must either shrink by the refinement
    ratio or already sit at round-off level. Exact-integral residuals
    must be below ``exact_tol`` relative to the size of the terms.
    """
    mode = CheckMode(mode)
    if mode not in (CheckMode.IRE, CheckMode.ST_IRE, CheckMode.SIGMA_OPT):
        raise ValueError(f"mode {mode.value} is not an integral equation family")
    if not t_final > 0 or N < 1:
        raise ValueError("t_final must be positive and N at least 1")
    J = cost_matrix(J, sys.p)
    P, S, K = _unpack(sol, sys.n, sys.m)

    exact, scale = _exact_residuals(sys, J, P, S, K, mode, t_final)
    coarse = _grid_operators(sys, J, P, S, K, mode, t_final, N)
    fine = _grid_operators(sys, J, P, S, K, mode, t_final, 2 * N)

    per_eq, tols = {}, {}
    verdict = True
    for key, val in exact.items():
        per_eq[key] = val
        tols[key] = exact_tol * scale
        verdict &= val <= tols[key]
    floor = GRID_FLOOR * (1.0 + _opnorm(P) + _opnorm(S))
    ratios = {}
    for key in coarse:
        per_eq[key] = coarse[key]
        per_eq[f"{key}@2N"] = fine[key]
        if fine[key] <= floor:
            ratio = 0.0
        else:
            ratio = fine[key] / max(coarse[key], 1e-300)
        ratios[key] = ratio
        per_eq[f"{key}/ratio"] = ratio
        tols[f"{key}/ratio"] = REFINE_RATIO
        verdict &= ratio <= REFINE_RATIO
    return ResidualReport(mode, per_eq, {"t_final": float(t_final), "N": int(N)}, bool(verdict), tols)


def _decaying_block(Ao, B, P, tol=1e-9):
    """Restrict the RCC data to the decaying Schur block of ``Ao`` when possible.

    If ``P`` vanishes on the non-decaying invariant subspace ``U_u`` of
    ``Ao``, then ``P = U_s P_s U_s^T`` with ``U_s`` the remaining Schur
    vectors, and both terms of ``r(t)`` equal those of the block
    ``(T_ss, U_s^T B, P_s)``. Evaluating there avoids multiplying growing
    exponentials by round-off in ``P``.
    """
    n = Ao.shape[0]
    if n == 0:
        return Ao, B, P, False
    T, U, k = sla.schur(Ao, output="real", sort=lambda re, im: re >= -tol)
    if k == 0:
        return Ao, B, P, False
    Uu, Us = U[:, :k], U[:, k:]
    if _opnorm(P @ Uu) > tol * (1.0 + _opnorm(P)):
        return Ao, B, P, False
    return T[k:, k:], Us.T @ B, Us.T @ P @ Us, True


def rcc_check(sys: StateSpaceSystem, J, P, K, T_max: Optional[float] = None,
              tol: float = 1e-6, n_grid: int = 60) -> ResidualReport:
    """Residual cost condition proxy.

    ``r(t) = |A_o(t)^T P A_o(t)| + |W(t)^{1/2} P A_o(t)|`` with
    ``A_o(t) = exp((A + BK) t)`` and ``W`` the controllability Gramian of
    ``(A + BK, B)``. By Cauchy-Schwarz, ``r -> 0`` bounds the cross term
    for every input of unit norm. Pass iff ``r(T_max) <= tol`` and, with
    ``r`` clipped at ``tol``, its maximum over the last quarter of the grid
    does not exceed its maximum over the quarter before.
    """
    P, K = as_matrix(P), as_matrix(K)
    P = 0.5 * (P + P.T)
    A, B = sys.A, sys.B
    Ao = A + B @ K
    Ao, B, P, reduced = _decaying_block(Ao, B, P)
    a = spectral_abscissa(Ao)
    if T_max is None:
        T_max = max(50.0, 60.0 / abs(a)) if a < 0 else 50.0
    times = np.geomspace(T_max * 1e-3, T_max, n_grid)
    r = np.empty(n_grid)
    for i, t in enumerate(times):
        with np.errstate(all="ignore"):
            E = expm(Ao, t)
            W = cross_quadratic_integral(Ao.T, B @ B.T, Ao.T, t)
            if not (np.all(np.isfinite(E)) and np.all(np.isfinite(W))):
                r[i] = np.inf
                continue
            PE = P @ E
            r[i] = _opnorm(E.T @ PE) + _opnorm(psd_sqrt(W) @ PE)
    finite = bool(np.all(np.isfinite(r)))
    # values under tol count as converged; below it the Gramian square root is round-off.
    # Oscillating decay may bump locally, so compare maxima of the two last quarters.
    half = np.maximum(r[n_grid // 2:], tol)
    q = len(half) // 2
    no_growth = finite and bool(half[q:].max() <= half[:q].max() * (1.0 + 1e-12))
    final = float(r[-1])
    verdict = no_growth and final <= tol
    return ResidualReport(
        CheckMode.RCC,
        {"r(T_max)": final if np.isfinite(final) else float("inf")},
        {"T_max": float(T_max), "n_grid": int(n_grid)},
        bool(verdict),
        {"r(T_max)": tol},
        {"no_late_growth": no_growth, "reduced_to_decaying_block": reduced, "times": times.tolist(),
         "r": [float(x) if np.isfinite(x) else None for x in r]},
    )


def default_frequency_points(A) -> list:
    a = max(0.0, spectral_abscissa(A))
    return [complex(a + sig, om) for sig in (0.5, 1.0, 2.0) for om in (0.0, 1.0, -1.0, 10.0, -10.0)]


def default_samples(A) -> list:
    pts = default_frequency_points(A)
    return [FrequencySample(s, z) for s in pts for z in pts]


def _factor_terms(sys, K, s):
    """``R = (s - A)^{-1}``, ``X(s) = I - K R B`` and ``D(s)`` at one point."""
    A, B, C, D = sys
    R = resolvent(A, s)
    X = np.eye(sys.m) - K @ R @ B
    Dh = D + C @ R @ B
    return R, X, Dh


def freq_ire_residuals(sys: StateSpaceSystem, J, sol, samples=None,
                       tol: float = EXACT_TOL) -> ResidualReport:
    """Frequency-domain Riccati identities at pairs ``(s, z)``.

    ``are``   : ``K^T S K - A^T P - P A - C^T J C``
    ``x-x``   : ``X(s)^* S X(z) - D(s)^* J D(z) - (z + conj s) B^T R(s)^* P R(z) B``
    ``x-k``   : ``X(s)^* S K R(z) + D(s)^* J C R(z) + B^T R(s)^* P (conj s + A) R(z)``
    with ``R(s) = (s - A)^{-1}``, ``X(s) = I - K R(s) B``. The maximum over
    samples is reported for the last two.
    """
    J = cost_matrix(J, sys.p)
    A, B, C, D = sys
    P, S, K = _unpack(sol, sys.n, sys.m)
    samples = default_samples(A) if samples is None else [
        smp if isinstance(smp, FrequencySample) else FrequencySample(*smp) for smp in samples
    ]
    are = _opnorm(K.T @ S @ K - A.T @ P - P @ A - C.T @ J @ C)
    n = sys.n
    cache = {}

    def terms(pt):
        if pt not in cache:
            cache[pt] = _factor_terms(sys, K, pt)
        return cache[pt]

    xx = xk = 0.0
    for smp in samples:
        Rs, Xs, Ds = terms(complex(smp.s))
        Rz, Xz, Dz = terms(complex(smp.z))
        sb = np.conj(smp.s)
        r1 = (Xs.conj().T @ S @ Xz - Ds.conj().T @ J @ Dz
              - (smp.z + sb) * B.T @ Rs.conj().T @ P @ Rz @ B)
        r2 = (Xs.conj().T @ S @ K @ Rz + Ds.conj().T @ J @ C @ Rz
              + B.T @ Rs.conj().T @ P @ (sb * np.eye(n) + A) @ Rz)
        xx = max(xx, _opnorm(r1))
        xk = max(xk, _opnorm(r2))
    per_eq = {"are": are, "x-x": xx, "x-k": xk}
    verdict = all(v <= tol for v in per_eq.values())
    return ResidualReport(
        CheckMode.FREQ_IRE, per_eq, {"samples": [[str(s.s), str(s.z)] for s in samples]},
        bool(verdict), {k: tol for k in per_eq},
    )


def spectral_factor_residual(sys: StateSpaceSystem, J, sol, s_grid=None,
                             tol: float = EXACT_TOL) -> ResidualReport:
    """``max |X(s)^* S X(s) - D(s)^* J D(s) - 2 Re s B^T R(s)^* P R(s) B|`` over ``s_grid``."""
    J = cost_matrix(J, sys.p)
    P, S, K = _unpack(sol, sys.n, sys.m)
    B = sys.B
    s_grid = default_frequency_points(sys.A) if s_grid is None else [complex(s) for s in s_grid]
    worst = 0.0
    for s in s_grid:
        R, X, Dh = _factor_terms(sys, K, s)
        res = X.conj().T @ S @ X - Dh.conj().T @ J @ Dh - 2 * s.real * B.T @ R.conj().T @ P @ R @ B
        worst = max(worst, _opnorm(res))
    return ResidualReport(
        CheckMode.SPECTRAL_FACTOR, {"factor": worst}, {"points": [str(s) for s in s_grid]},
        bool(worst <= tol), {"factor": tol},
    )


def solve_dare_pencil(A, B, Q, R, Nc) -> np.ndarray:
    """Stabilizing solution of the discrete ARE with cross term ``Nc``.

    Stable deflating subspace of the extended symplectic pencil
    ``M - z L`` in the variables ``(x, costate, u)``.
    """
    n, m = B.shape
    Z = np.zeros
    M = np.block([
        [A, Z((n, n)), B],
        [-Q, np.eye(n), -Nc],
        [Nc.T, Z((m, n)), R],
    ])
    L = np.block([
        [np.eye(n), Z((n, n)), Z((n, m))],
        [Z((n, n)), A.T, Z((n, m))],
        [Z((m, n)), -B.T, Z((m, m))],
    ])
    with np.errstate(all="ignore"):
        _, _, alpha, beta, _, Zq = sla.ordqz(M, L, sort="iuc", output="real")
    mag = np.abs(alpha) / np.maximum(np.abs(beta), 1e-300)
    sdim = int(np.sum(mag < 1.0))
    if sdim != n or np.any(np.abs(mag[:n] - 1.0) <= 1e-10):
        raise DegeneratePencil(f"stable deflating subspace has dimension {sdim}, expected {n}")
    U1, U2 = Zq[:n, :n], Zq[n:2 * n, :n]
    if np.linalg.cond(U1) > 1e12:
        raise DegeneratePencil("deflating subspace is not a graph over the state")
    Pd = np.linalg.solve(U1.T, U2.T).T
    return 0.5 * (Pd + Pd.T)


def discrete_are_solution(sys: StateSpaceSystem, J, t_final: float, N: int) -> np.ndarray:
    """DARE of the sampled system over one horizon ``t_final`` split into ``N`` steps."""
    J = cost_matrix(J, sys.p)
    A_t, B_t, C_t, D_t = sampled_blocks(sys.A, sys.B, sys.C, sys.D, t_final, N)
    h = t_final / N
    Jb = _blockdiag_repeat(J, N)
    Q = h * C_t.T @ Jb @ C_t
    Nc = h * C_t.T @ Jb @ D_t
    R = h * D_t.T @ Jb @ D_t
    Q, R = 0.5 * (Q + Q.T), 0.5 * (R + R.T)
    try:
        return solve_dare_pencil(A_t, B_t, Q, R, Nc)
    except DegeneratePencil:
        return _cost_observable_dare(A_t, B_t, Q, R, Nc)


def _cost_observable_dare(A, B, Q, R, Nc) -> np.ndarray:
    """Fallback when the full pencil has unit-circle eigenvalues.

    Removes the cross term, then solves on the observable subspace of
    ``(A~, Q~)`` and sets the solution to zero on the rest, where the
    cost can be made zero.
    """
    n = A.shape[0]
    Rinv_NT = np.linalg.solve(R, Nc.T)
    At = A - B @ Rinv_NT
    Qt = Q - Nc @ Rinv_NT
    Vo = orth_krylov(At.T, 0.5 * (Qt + Qt.T))
    k = Vo.shape[1]
    if k == 0:
        return np.zeros((n, n))
    if k == n:
        raise DegeneratePencil("pencil is degenerate on the cost-observable part")
    P11 = solve_dare_pencil(Vo.T @ At @ Vo, Vo.T @ B, Vo.T @ Qt @ Vo, R, np.zeros((k, B.shape[1])))
    return Vo @ P11 @ Vo.T


def dare_cross_check(sys: StateSpaceSystem, J, sol, t_final: float = 1.0, N: int = 50) -> ResidualReport:
    """Compare ``sol.P`` with the sampled-system DARE at ``N`` and ``2N``.

    Pass iff the error shrinks under the refinement (or is already at
    round-off level).
    """
    P, S, K = _unpack(sol, sys.n, sys.m)
    e1 = _opnorm(discrete_are_solution(sys, J, t_final, N) - P)
    e2 = _opnorm(discrete_are_solution(sys, J, t_final, 2 * N) - P)
    floor = 1e-9 * (1.0 + _opnorm(P))
    verdict = e2 <= floor or e2 < e1
    return ResidualReport(
        CheckMode.DARE, {"P_d - P": e1, "P_d - P@2N": e2},
        {"t_final": float(t_final), "N": int(N)}, bool(verdict), {},
    )


def lyapunov_equivalence_check(A1, C1, A2, C2, P, Jt, t_list=(0.5, 1.0, 2.0),
                               tol: float = 1e-9) -> ResidualReport:
    """Algebraic ``A1^T P + P A2 + C1^T Jt C2`` against its integrated form.

    The integral form at each ``t`` is
    ``exp(A1^T t) P exp(A2 t) + int_0^t exp(A1^T s) C1^T Jt C2 exp(A2 s) ds - P``.
    Pass iff both forms vanish, or neither does.
    """
    A1, C1, A2, C2 = map(as_matrix, (A1, C1, A2, C2))
    P, Jt = as_matrix(P), as_matrix(Jt)
    if P.shape != (A1.shape[0], A2.shape[0]) or C1.shape[0] != Jt.shape[0] or C2.shape[0] != Jt.shape[1]:
        raise DimensionMismatch("inconsistent shapes")
    Q = C1.T @ Jt @ C2
    scale = 1.0 + _opnorm(P) + _opnorm(Q)
    per_eq = {"algebraic": _opnorm(A1.T @ P + P @ A2 + Q)}
    for t in t_list:
        E1, E2 = expm(A1, t), expm(A2, t)
        per_eq[f"integral@{t:g}"] = _opnorm(E1.T @ P @ E2 + cross_quadratic_integral(A1, Q, A2, t) - P)
    zero = [v <= tol * scale for v in per_eq.values()]
    verdict = all(zero) or not any(zero)
    return ResidualReport(
        CheckMode.LYAPUNOV, per_eq, {"t_list": [float(t) for t in t_list]}, bool(verdict),
        {k: tol * scale for k in per_eq}, {"holds": all(zero)},
    )


def cost_identity_check(sys: StateSpaceSystem, J, sol, x0, u_ext, T: float, N: int,
                        tol: float = 1e-6) -> ResidualReport:
    """Closed-loop cost against ``x0^T P x0 + <u_ext, S u_ext>``.

    The loop ``u = K x + u_ext`` is simulated exactly on ``[0, T]`` and
    the cost after ``T`` (where ``u_ext = 0``) is closed by
    ``x(T)^T P x(T)``.
    """
    J = cost_matrix(J, sys.p)
    P, S, K = _unpack(sol, sys.n, sys.m)
    A, B, C, D = sys
    if spectral_abscissa(A + B @ K) >= -1e-9:
        raise NotStabilizing("A + BK is not exponentially stable")
    loop = StateSpaceSystem(A + B @ K, B, C + D @ K, D)
    traj = simulate(loop, J, x0, u_ext, T, N)
    u = np.zeros((N, sys.m)) if u_ext is None else np.asarray(u_ext, dtype=float).reshape(N, sys.m)
    xT = traj.states[-1]
    total = traj.cost + xT @ P @ xT
    x0 = np.asarray(x0, dtype=float).reshape(sys.n)
    h = T / N
    expected = x0 @ P @ x0 + h * float(np.einsum("ki,ij,kj->", u, S, u))
    err = abs(total - expected)
    rel = err / max(1.0, abs(expected), abs(total))
    return ResidualReport(
        CheckMode.COST_IDENTITY, {"absolute": err, "relative": rel},
        {"T": float(T), "N": int(N)}, bool(rel <= tol), {"relative": tol},
        {"total": float(total), "expected": float(expected)},
    )
