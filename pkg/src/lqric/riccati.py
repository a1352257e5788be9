"""Algebraic Riccati equations with a (possibly indefinite) output weight.

Every problem is reduced to the single form

    K^T S K = A^T P + P A + C^T J C,
    S       = D^T J D,
    S K     = -(B^T P + D^T J C),

acting on an augmented output ``(C, D, J)``: the state-FCC, output-FCC,
filter and LQR variants only differ in how the output is augmented.
"""

import itertools
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import (
    AmbiguousMinimum,
    BoundaryEigenvalue,
    DegenerateHamiltonian,
    DimensionMismatch,
    MinimumMismatch,
    NoSolution,
    NoStabilizingSolution,
    SignatureSingular,
)
from .numkernel import (
    as_matrix,
    loewner_geq,
    lyapunov_solve,
    orth_krylov,
    stable_invariant_subspace,
)
from .system import Domain, StateSpaceSystem, cost_matrix, dual, spectral_abscissa

STABILITY_MARGIN = 1e-9
NONNEG_TOL = 1e-10


class ProblemKind(str, Enum):
    GENERAL = "general"
    STATE_FCC = "state-fcc"
    OUTPUT_FCC = "output-fcc"
    FILTER = "filter"
    LQR = "lqr"


@dataclass(frozen=True, eq=False)
class RiccatiProblem:
    """ARE data.

    ``sys`` is the system supplied by the caller; ``plant`` and ``J`` are
    the augmented generators the equation is actually written for (for
    the filter problem ``plant`` is built from ``dual(sys)``).
    """

    sys: StateSpaceSystem
    plant: StateSpaceSystem
    J: np.ndarray
    domain: Domain = Domain.EXP
    kind: ProblemKind = ProblemKind.GENERAL

    @property
    def S(self) -> np.ndarray:
        D = self.plant.D
        S = D.T @ self.J @ D
        return 0.5 * (S + S.T)

    @property
    def n(self) -> int:
        return self.plant.n


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    P: np.ndarray
    S: np.ndarray
    K: np.ndarray
    residual: float
    stabilizing: bool = False
    nonnegative: bool = False
    output_stable: bool = False
    rcc_ok: Optional[bool] = None
    closed_loop_poles: Optional[np.ndarray] = None

    @property
    def flags(self) -> dict:
        return {
            "stabilizing": self.stabilizing,
            "nonnegative": self.nonnegative,
            "output_stable": self.output_stable,
            "rcc_ok": self.rcc_ok,
        }

    @property
    def H(self) -> np.ndarray:
        """Output injection ``H = K^T`` (meaningful for filter problems)."""
        return self.K.T


def signature(sys: StateSpaceSystem, J=None) -> np.ndarray:
    """``S = D^T J D``."""
    J = cost_matrix(J, sys.p)
    S = sys.D.T @ J @ sys.D
    return 0.5 * (S + S.T)


def _sym(M, name):
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square")
    if np.abs(M - M.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(M).max(initial=0.0)):
        raise ValueError(f"{name} must be symmetric")
    return 0.5 * (M + M.T)


def _state_fcc_plant(A, B):
    n, m = A.shape[0], B.shape[1]
    C = np.vstack([np.eye(n), np.zeros((m, n))])
    D = np.vstack([np.zeros((n, m)), np.eye(m)])
    return StateSpaceSystem(A, B, C, D), np.eye(n + m)


def build_problem(kind, sys: StateSpaceSystem, J=None, Q=None, T=None, R=None,
                  domain=Domain.EXP) -> RiccatiProblem:
    """Assemble the augmented ARE data for ``kind``.

    ``general``    -- cost ``<y, J y>`` on the system output.
    ``state-fcc``  -- cost ``|x|^2 + |u|^2`` (output ``[x; u]``).
    ``output-fcc`` -- cost ``|y|^2 + |u|^2`` (output ``[y; u]``).
    ``filter``     -- the state-FCC problem of the dual system.
    ``lqr``        -- cost ``<y, Q y> + <x, T x> + <u, R u>``.
    """
    kind = ProblemKind(kind)
    domain = Domain(domain)
    A, B, C, D = sys
    n, m, p = sys.n, sys.m, sys.p
    if kind is ProblemKind.GENERAL:
        plant, Jm = sys, cost_matrix(J, p)
    elif kind is ProblemKind.STATE_FCC:
        plant, Jm = _state_fcc_plant(A, B)
    elif kind is ProblemKind.OUTPUT_FCC:
        plant = StateSpaceSystem(A, B, np.vstack([C, np.zeros((m, n))]), np.vstack([D, np.eye(m)]))
        Jm = np.eye(p + m)
    elif kind is ProblemKind.FILTER:
        d = dual(sys)
        plant, Jm = _state_fcc_plant(d.A, d.B)
    else:
        Qm = np.eye(p) if Q is None else _sym(np.atleast_2d(Q) if np.ndim(Q) else Q * np.eye(p), "Q")
        Tm = np.eye(n) if T is None else _sym(np.atleast_2d(T) if np.ndim(T) else T * np.eye(n), "T")
        Rm = np.eye(m) if R is None else _sym(np.atleast_2d(R) if np.ndim(R) else R * np.eye(m), "R")
        if Qm.shape != (p, p) or Tm.shape != (n, n) or Rm.shape != (m, m):
            raise DimensionMismatch("LQR weights have inconsistent shapes")
        if m and np.linalg.eigvalsh(Rm).min() <= 0:
            raise ValueError("R must be positive definite")
        if n and np.linalg.eigvalsh(Tm).min() < -1e-12:
            raise ValueError("T must be positive semidefinite")
        plant = StateSpaceSystem(
            A, B,
            np.vstack([C, np.eye(n), np.zeros((m, n))]),
            np.vstack([D, np.zeros((n, m)), np.eye(m)]),
        )
        Jm = sla.block_diag(Qm, Tm, Rm)
    return RiccatiProblem(sys, plant, Jm, domain, kind)


def _signature_inverse(problem):
    S = problem.S
    if S.size and np.linalg.cond(S) >= 1e10:
        raise SignatureSingular("S = D^T J D is singular")
    return S, np.linalg.inv(S) if S.size else S


def gain(problem: RiccatiProblem, P) -> np.ndarray:
    """``K = -S^{-1} (B^T P + D^T J C)``."""
    A, B, C, D = problem.plant
    S, Sinv = _signature_inverse(problem)
    return -Sinv @ (B.T @ P + D.T @ problem.J @ C)


def are_residual(problem: RiccatiProblem, P, K, S=None) -> float:
    """Norm of the quadratic equation plus norm of the gain equation."""
    A, B, C, D = problem.plant
    J = problem.J
    S = problem.S if S is None else S
    r1 = K.T @ S @ K - A.T @ P - P @ A - C.T @ J @ C
    r2 = S @ K + B.T @ P + D.T @ J @ C
    return float(np.linalg.norm(r1, 2) + (np.linalg.norm(r2, 2) if r2.size else 0.0))


def hamiltonian(problem: RiccatiProblem) -> np.ndarray:
    A, B, C, D = problem.plant
    J = problem.J
    S, Sinv = _signature_inverse(problem)
    At = A - B @ Sinv @ D.T @ J @ C
    G = B @ Sinv @ B.T
    Qt = C.T @ J @ C - C.T @ J @ D @ Sinv @ D.T @ J @ C
    return np.block([[At, -G], [-0.5 * (Qt + Qt.T), -At.T]])


def _solution_from_subspace(problem, X):
    n = problem.n
    X1, X2 = X[:n], X[n:]
    if np.linalg.cond(X1) > 1e12:
        return None
    P = np.linalg.solve(X1.T, X2.T).T
    if np.iscomplexobj(P):
        if np.abs(P.imag).max(initial=0.0) > 1e-8 * max(1.0, np.abs(P).max(initial=0.0)):
            return None
        P = P.real
    if np.abs(P - P.T).max(initial=0.0) > 1e-6 * max(1.0, np.abs(P).max(initial=0.0)):
        return None
    return 0.5 * (P + P.T)


def _newton_polish(problem, P):
    """One Newton-Kleinman step; returns the better of the two iterates."""
    A, B, C, D = problem.plant
    J = problem.J
    K = gain(problem, P)
    res0 = are_residual(problem, P, K)
    Ak = A + B @ K
    Ck = C + D @ K
    try:
        P1 = lyapunov_solve(Ak, Ck.T @ J @ Ck)
    except np.linalg.LinAlgError:
        return P
    K1 = gain(problem, P1)
    if are_residual(problem, P1, K1) < res0:
        return P1
    return P


def _finish(problem, P, classify_rcc=True, **rcc_kwargs):
    S = problem.S
    K = gain(problem, P)
    sol = RiccatiSolution(P, S, K, are_residual(problem, P, K, S))
    return classify(sol, problem, check_rcc=classify_rcc, **rcc_kwargs)


def solve_stabilizing(problem: RiccatiProblem, polish: bool = True) -> RiccatiSolution:
    """Exponentially stabilizing solution from the stable Hamiltonian subspace."""
    n = problem.n
    if n == 0:
        return _finish(problem, np.zeros((0, 0)))
    H = hamiltonian(problem)
    sub = stable_invariant_subspace(H, "lhp")
    if sub.dim != n:
        raise NoStabilizingSolution(f"stable subspace has dimension {sub.dim}, expected {n}")
    P = _solution_from_subspace(problem, sub.basis)
    if P is None:
        raise NoStabilizingSolution("stable subspace is not complementary to [0; I]")
    if polish:
        P = _newton_polish(problem, P)
    sol = _finish(problem, P)
    if not sol.stabilizing:
        raise NoStabilizingSolution("closed loop A + BK is not exponentially stable")
    return sol


def _closed_loop(problem, K):
    A, B, C, D = problem.plant
    return A + B @ K, np.vstack([C + D @ K, K])


def _unobservable_unstable(Ak, Ck, tol=1e-8):
    """Eigenvalues of ``Ak`` with Re >= -margin that are observable through ``Ck``."""
    n = Ak.shape[0]
    bad = []
    scale = max(1.0, np.linalg.norm(Ak, 2), np.linalg.norm(Ck, 2) if Ck.size else 0.0)
    for lam in np.linalg.eigvals(Ak):
        if lam.real < -STABILITY_MARGIN:
            continue
        pbh = np.vstack([lam * np.eye(n) - Ak, Ck])
        smin = np.linalg.svd(pbh, compute_uv=False)[-1]
        if smin > tol * scale:
            bad.append(lam)
    return bad


def classify(solution: RiccatiSolution, problem: RiccatiProblem, check_rcc: bool = True,
             **rcc_kwargs) -> RiccatiSolution:
    """Fill the stabilizing / nonnegative / output-stable / RCC flags."""
    P, K = as_matrix(solution.P), as_matrix(solution.K)
    n = problem.n
    if n == 0:
        return replace(solution, stabilizing=True, nonnegative=True, output_stable=True,
                       rcc_ok=True if problem.domain is Domain.OUT else None,
                       closed_loop_poles=np.zeros(0, dtype=complex))
    Ak, Ck = _closed_loop(problem, K)
    poles = np.linalg.eigvals(Ak)
    stabilizing = bool(spectral_abscissa(Ak) < -STABILITY_MARGIN)
    nonnegative = bool(np.linalg.eigvalsh(0.5 * (P + P.T)).min() >= -NONNEG_TOL)
    output_stable = stabilizing or not _unobservable_unstable(Ak, Ck)
    rcc_ok = None
    if problem.domain is Domain.OUT and check_rcc:
        from .ire import rcc_check

        plant = problem.plant
        rcc_ok = rcc_check(plant, problem.J, P, K, **rcc_kwargs).verdict
    return replace(solution, stabilizing=stabilizing, nonnegative=nonnegative,
                   output_stable=bool(output_stable), rcc_ok=rcc_ok,
                   closed_loop_poles=np.sort_complex(poles))


def _conjugate_orbits(stable):
    """Group stable eigenvalue indices into real singletons and conjugate pairs."""
    orbits, used = [], set()
    for i, lam in enumerate(stable):
        if i in used:
            continue
        if abs(lam.imag) <= 1e-9 * max(1.0, abs(lam)):
            orbits.append((i,))
            used.add(i)
            continue
        j = min((k for k in range(len(stable)) if k not in used and k != i),
                key=lambda k: abs(stable[k] - lam.conjugate()))
        orbits.append((i, j))
        used.update((i, j))
    return orbits


def enumerate_solutions(problem: RiccatiProblem, max_n: int = 6) -> list:
    """All real symmetric ARE solutions, sorted by ``trace(P)``.

    Each solution comes from an n-dimensional Lagrangian invariant
    subspace of the Hamiltonian: one eigenvalue from every pair
    ``{lambda, -conj(lambda)}``, chosen closed under conjugation.
    """
    n = problem.n
    if n > max_n:
        raise DegenerateHamiltonian(f"enumeration is limited to n <= {max_n}, got {n}")
    if n == 0:
        return [_finish(problem, np.zeros((0, 0)))]
    H = hamiltonian(problem)
    lam = np.linalg.eigvals(H)
    mag = np.maximum(1.0, np.abs(lam))
    if np.any(np.abs(lam.real) <= 1e-9 * mag):
        raise DegenerateHamiltonian("Hamiltonian has eigenvalues on the imaginary axis")
    gaps = np.abs(lam[:, None] - lam[None, :])
    np.fill_diagonal(gaps, np.inf)
    if gaps.min() <= 1e-8 * mag.max():
        raise DegenerateHamiltonian("Hamiltonian has repeated eigenvalues")
    sep = gaps.min()

    stable = lam[lam.real < 0]
    partners = np.array([lam[np.argmin(np.abs(lam + s.conjugate()))] for s in stable])
    orbits = _conjugate_orbits(stable)

    solutions = []
    for flips in itertools.product((False, True), repeat=len(orbits)):
        chosen = stable.copy()
        for flip, orbit in zip(flips, orbits):
            if flip:
                for k in orbit:
                    chosen[k] = partners[k]

        def select(z, chosen=chosen):
            return bool(np.min(np.abs(chosen - z)) < 0.5 * sep)

        try:
            sub = stable_invariant_subspace(H, select)
        except np.linalg.LinAlgError:
            continue
        if sub.dim != n:
            continue
        P = _solution_from_subspace(problem, sub.basis)
        if P is None:
            continue
        # the Newton step is local, so it refines non-stabilizing solutions too
        solutions.append(_finish(problem, _newton_polish(problem, P)))
    solutions.sort(key=lambda s: float(np.trace(s.P)))
    return solutions


def kalman_minimal_solution(problem: RiccatiProblem) -> RiccatiSolution:
    """Smallest nonnegative solution via the cost-observable part.

    After the change of input that removes the cross term, the solution
    is zero on the unobservable subspace of ``(A~, Q~)`` and equals the
    stabilizing solution of the reduced equation on its complement.
    """
    A, B, C, D = problem.plant
    J = problem.J
    S, Sinv = _signature_inverse(problem)
    At = A - B @ Sinv @ D.T @ J @ C
    Qt = C.T @ J @ C - C.T @ J @ D @ Sinv @ D.T @ J @ C
    Qt = 0.5 * (Qt + Qt.T)
    n = problem.n
    Vo = orth_krylov(At.T, Qt)
    P = np.zeros((n, n))
    if Vo.shape[1]:
        A11 = Vo.T @ At @ Vo
        B1 = Vo.T @ B
        Q11 = Vo.T @ Qt @ Vo
        k = Vo.shape[1]
        H = np.block([[A11, -B1 @ Sinv @ B1.T], [-Q11, -A11.T]])
        try:
            sub = stable_invariant_subspace(H, "lhp")
        except BoundaryEigenvalue as exc:
            raise NoSolution(f"output-FCC fails: {exc}") from exc
        if sub.dim != k or np.linalg.cond(sub.basis[:k]) > 1e12:
            raise NoSolution("output-FCC fails: observable part is not stabilizable")
        X1, X2 = sub.basis[:k], sub.basis[k:]
        P11 = np.linalg.solve(X1.T, X2.T).T
        P = Vo @ (0.5 * (P11 + P11.T)) @ Vo.T
    return _finish(problem, P)


def solve_minimal_nonnegative(problem: RiccatiProblem, max_n: int = 6,
                              tol: float = 1e-6) -> RiccatiSolution:
    """Loewner-least nonnegative, output-stable solution passing the RCC.

    For ``n <= max_n`` the candidates are enumerated and filtered; the
    Kalman-decomposition construction is always run and the two are
    cross-checked when both apply.
    """
    J = problem.J
    if J.size and np.linalg.eigvalsh(J).min() < -1e-12 * max(1.0, np.abs(J).max()):
        raise ValueError("minimal nonnegative solutions need J >= 0")
    if problem.domain is Domain.EXP:
        return solve_stabilizing(problem)

    enum_min = None
    if problem.n <= max_n:
        try:
            cands = [s for s in enumerate_solutions(problem, max_n)
                     if s.nonnegative and s.output_stable and s.rcc_ok]
        except DegenerateHamiltonian:
            cands = None
        if cands is not None:
            least = [c for c in cands if all(loewner_geq(d.P, c.P) for d in cands)]
            if cands and not least:
                raise AmbiguousMinimum("no Loewner-least element among the admissible solutions")
            enum_min = least[0] if least else None

    try:
        kal = kalman_minimal_solution(problem)
    except NoSolution:
        if enum_min is not None:
            raise MinimumMismatch("enumeration found a solution the Kalman route rejects")
        raise
    if not (kal.nonnegative and kal.output_stable and kal.rcc_ok is not False):
        raise NoSolution("Kalman construction produced an inadmissible solution")
    if enum_min is not None:
        scale = 1.0 + np.linalg.norm(kal.P, 2)
        if np.linalg.norm(enum_min.P - kal.P, 2) > tol * scale:
            raise MinimumMismatch("enumeration and Kalman-decomposition minima differ")
    return kal
