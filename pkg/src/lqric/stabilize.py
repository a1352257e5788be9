"""Stabilizability decisions, coprime factorizations and controller parameterization."""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    EUnstable,
    FccFails,
    ImproperController,
    NoSolution,
    NoStabilizingSolution,
    NotJointlyStabilizing,
    NotStable,
    PopovNotCoercive,
    RoutesDisagree,
    SingularPencil,
)
from .numkernel import (
    as_matrix,
    min_singular_value,
    orth_krylov,
    pencil_eigenvalues,
    psd_inv_sqrt,
    psd_sqrt,
)
from .riccati import build_problem, solve_minimal_nonnegative, solve_stabilizing
from .system import (
    Domain,
    StateSpaceSystem,
    cost_matrix,
    feedback_loop_matrix,
    output_feedback,
    series,
    spectral_abscissa,
    transfer_eval,
)

STABILITY_MARGIN = 1e-9
RANK_TOL = 1e-9


# -- Hautus / FCC ---------------------------------------------------------------

class HautusResult(NamedTuple):
    stabilizable: bool
    detectable: bool
    witnesses: dict


def _uncontrollable_unstable(A, B, tol=RANK_TOL):
    n = A.shape[0]
    if n == 0:
        return []
    scale = max(1.0, np.linalg.norm(A, 2), np.linalg.norm(B, 2) if B.size else 0.0)
    bad = []
    for lam in np.linalg.eigvals(A):
        if lam.real < -STABILITY_MARGIN:
            continue
        M = np.hstack([lam * np.eye(n) - A, B])
        # rank[lam I - A, B] < n  <=>  n-th singular value vanishes
        if np.linalg.svd(M, compute_uv=False)[n - 1] <= tol * scale:
            bad.append(complex(lam))
    return bad


def hautus_tests(sys: StateSpaceSystem) -> HautusResult:
    """PBH rank tests at every eigenvalue with ``Re >= -1e-9``."""
    ws = _uncontrollable_unstable(sys.A, sys.B)
    wd = _uncontrollable_unstable(sys.A.T, sys.C.T)
    return HautusResult(not ws, not wd, {"stabilizable": ws, "detectable": wd})


class FccDecision(NamedTuple):
    fcc: bool
    via_are: bool
    via_structure: bool


def _observable_quotient(sys):
    """``(A, B)`` compressed onto the orthogonal complement of the unobservable subspace."""
    Vo = orth_krylov(sys.A.T, sys.C.T)
    return Vo.T @ sys.A @ Vo, Vo.T @ sys.B


def fcc_decide(sys: StateSpaceSystem, domain=Domain.EXP) -> FccDecision:
    """Decide the finite cost condition by a structural test and by an ARE.

    Exp: Hautus stabilizability against the nonnegative stabilizing
    state-FCC solution. Out: stabilizability of the quotient modulo the
    unobservable subspace against the minimal nonnegative output-FCC
    solution. Disagreement raises :class:`RoutesDisagree`.
    """
    domain = Domain(domain)
    if domain is Domain.EXP:
        via_structure = hautus_tests(sys).stabilizable
        try:
            sol = solve_stabilizing(build_problem("state-fcc", sys))
            via_are = sol.nonnegative
        except (NoStabilizingSolution, np.linalg.LinAlgError):
            via_are = False
    else:
        A11, B1 = _observable_quotient(sys)
        via_structure = not _uncontrollable_unstable(A11, B1)
        try:
            sol = solve_minimal_nonnegative(build_problem("output-fcc", sys, domain=Domain.OUT))
            via_are = bool(sol.nonnegative and sol.rcc_ok)
        except (NoSolution, np.linalg.LinAlgError):
            via_are = False
    if via_are != via_structure:
        raise RoutesDisagree(f"ARE route says {via_are}, structural route says {via_structure}")
    return FccDecision(via_are, via_are, via_structure)


# -- realizations -----------------------------------------------------------------

def is_stable(sys: StateSpaceSystem, margin: float = STABILITY_MARGIN) -> bool:
    return spectral_abscissa(sys.A) < -margin


def minimal_realization(sys: StateSpaceSystem, tol: float = 1e-10) -> StateSpaceSystem:
    """Controllable part, then its observable quotient."""
    A, B, C, D = sys
    Vc = orth_krylov(A, B, tol)
    A1, B1, C1 = Vc.T @ A @ Vc, Vc.T @ B, C @ Vc
    Vo = orth_krylov(A1.T, C1.T, tol)
    return StateSpaceSystem(Vo.T @ A1 @ Vo, Vo.T @ B1, C1 @ Vo, D)


def _system_matrix(sys, s):
    A, B, C, D = sys
    return np.block([[A - s * np.eye(sys.n), B], [C, D]])


def invariant_zeros(sys: StateSpaceSystem, tol: float = 1e-8) -> list:
    """Finite ``s`` where ``[A - sI, B; C, D]`` drops below its normal rank.

    Square systems use the pencil directly. Otherwise the pencil is
    squared up by a fixed random projection of the longer side, and the
    resulting candidates are kept only if the full matrix loses rank.
    """
    A, B, C, D = sys
    n, m, p = sys.n, sys.m, sys.p
    E = np.zeros((n + p, n + m))
    E[:n, :n] = np.eye(n)
    M = np.block([[A, B], [C, D]])
    if p == m:
        lam = pencil_eigenvalues(E, M)
        return sorted((complex(z) for z in lam if np.isfinite(z)), key=lambda z: (z.real, z.imag))

    rng = np.random.default_rng(0)
    if p > m:
        W = np.eye(n + p)[:, :n]
        W = np.hstack([W, np.vstack([np.zeros((n, m)), rng.standard_normal((p, m))])])
        Msq, Esq = W.T @ M, W.T @ E
    else:
        V = np.eye(n + m)[:, :n]
        V = np.hstack([V, np.vstack([np.zeros((n, p)), rng.standard_normal((m, p))])])
        Msq, Esq = M @ V, E @ V
    lam = pencil_eigenvalues(Esq, Msq)
    scale = max(1.0, np.linalg.norm(M, 2))
    probe = 0.37 + 1.91j
    sv = np.linalg.svd(_system_matrix(sys, probe), compute_uv=False)
    normal_rank = int(np.sum(sv > tol * scale * (1 + abs(probe))))
    if normal_rank == 0:
        raise SingularPencil("system matrix vanishes identically")
    zeros = []
    for z in lam:
        if not np.isfinite(z):
            continue
        sv = np.linalg.svd(_system_matrix(sys, z), compute_uv=False)
        if sv[normal_rank - 1] <= tol * scale * (1 + abs(z)):
            zeros.append(complex(z))
    return sorted(zeros, key=lambda z: (z.real, z.imag))


def transmission_zeros(sys: StateSpaceSystem, tol: float = 1e-8) -> list:
    """Invariant zeros of a minimal realization (zeros of the transfer function)."""
    return invariant_zeros(minimal_realization(sys), tol)


# -- coprime factorizations -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FactorPair:
    M_real: StateSpaceSystem
    N_real: StateSpaceSystem
    normalized: bool = False

    def stacked(self) -> StateSpaceSystem:
        """``[N; M]`` on the state space of ``M_real`` when the two share it."""
        M, N = self.M_real, self.N_real
        if M.n == N.n and np.array_equal(M.A, N.A) and np.array_equal(M.B, N.B):
            return StateSpaceSystem(M.A, M.B, np.vstack([N.C, M.C]), np.vstack([N.D, M.D]))
        A = np.block([[N.A, np.zeros((N.n, M.n))], [np.zeros((M.n, N.n)), M.A]])
        B = np.vstack([N.B, M.B])
        C = np.block([[N.C, np.zeros((N.p, M.n))], [np.zeros((M.p, N.n)), M.C]])
        return StateSpaceSystem(A, B, C, np.vstack([N.D, M.D]))

    def normalization_residual(self, omegas) -> float:
        worst = 0.0
        for w in omegas:
            Mh = transfer_eval(self.M_real, 1j * w)
            Nh = transfer_eval(self.N_real, 1j * w)
            G = Nh.conj().T @ Nh + Mh.conj().T @ Mh - np.eye(Mh.shape[1])
            worst = max(worst, float(np.linalg.norm(G, 2)))
        return worst


def qrcf_normalized(sys: StateSpaceSystem) -> FactorPair:
    """Normalized right factorization from the minimal output-FCC solution.

    ``M = (I + K (s - A - BK)^{-1} B) S^{-1/2}`` and
    ``N = (D + (C + DK)(s - A - BK)^{-1} B) S^{-1/2}``.
    """
    try:
        sol = solve_minimal_nonnegative(build_problem("output-fcc", sys, domain=Domain.OUT))
    except (NoSolution, np.linalg.LinAlgError) as exc:
        raise FccFails(f"output-FCC fails: {exc}") from exc
    A, B, C, D = sys
    K = sol.K
    Si = psd_inv_sqrt(sol.S)
    Ao = A + B @ K
    Bn = B @ Si
    M = StateSpaceSystem(Ao, Bn, K, Si)
    N = StateSpaceSystem(Ao, Bn, C + D @ K, D @ Si)
    return FactorPair(M, N, True)


@dataclass(frozen=True)
class JointPair:
    K: np.ndarray
    H: np.ndarray


def joint_pair_from_ares(sys: StateSpaceSystem) -> JointPair:
    """``K`` from the state-FCC ARE and ``H`` from the filter ARE."""
    K = solve_stabilizing(build_problem("state-fcc", sys)).K
    H = solve_stabilizing(build_problem("filter", sys)).H
    return JointPair(K, H)


BLOCK_NAMES = ("M", "Y", "N", "X", "Xt", "Yt", "Nt", "Mt")


@dataclass(frozen=True, eq=False)
class DoublyCoprime:
    """Right blocks ``[M Y; N X]`` and left blocks ``[Xt -Yt; -Nt Mt]``."""

    M: StateSpaceSystem
    N: StateSpaceSystem
    X: StateSpaceSystem
    Y: StateSpaceSystem
    Mt: StateSpaceSystem
    Nt: StateSpaceSystem
    Xt: StateSpaceSystem
    Yt: StateSpaceSystem
    pair: Optional[JointPair] = None

    def blocks(self) -> dict:
        return {name: getattr(self, name) for name in BLOCK_NAMES}

    def right(self, s) -> np.ndarray:
        ev = lambda g: transfer_eval(g, s)
        return np.block([[ev(self.M), ev(self.Y)], [ev(self.N), ev(self.X)]])

    def left(self, s) -> np.ndarray:
        ev = lambda g: transfer_eval(g, s)
        return np.block([[ev(self.Xt), -ev(self.Yt)], [-ev(self.Nt), ev(self.Mt)]])

    def identity_residual(self, samples) -> float:
        worst = 0.0
        for s in samples:
            R, L = self.right(s), self.left(s)
            I = np.eye(R.shape[0])
            worst = max(worst, float(np.linalg.norm(R @ L - I, 2)), float(np.linalg.norm(L @ R - I, 2)))
        return worst

    def all_stable(self) -> bool:
        return all(is_stable(g) for g in self.blocks().values())


def default_dcf_samples(A=None, count: int = 10) -> list:
    """Deterministic points: half on the imaginary axis, half in the right half-plane."""
    k = count // 2
    pts = [1j * w for w in np.linspace(-5.0, 5.0, k)]
    pts += [complex(0.5 + 2.0 * j, 3.0 - 1.5 * j) for j in range(count - k)]
    if A is not None:
        lam = np.linalg.eigvals(as_matrix(A))
        pts = [s + 0.1234 if lam.size and np.min(np.abs(lam - s)) < 1e-6 else s for s in pts]
    return pts


def _subsystem(sys, inputs, outputs):
    return StateSpaceSystem(sys.A, sys.B[:, inputs], sys.C[outputs], sys.D[np.ix_(outputs, inputs)])


def _identity_plus(g, sign=1.0):
    return StateSpaceSystem(g.A, g.B, sign * g.C, np.eye(g.p) + sign * g.D)


def _negated(g):
    return StateSpaceSystem(g.A, g.B, -g.C, -g.D)


def dcf_construct(sys: StateSpaceSystem, jp: JointPair, samples=None, tol: float = 1e-8) -> DoublyCoprime:
    """Eight blocks of a doubly coprime factorization from a joint pair ``(K, H)``.

    The joint system has inputs ``[w; u]``, outputs ``[y; k]`` and
    generators ``[A, H, B; C, 0, D; K, 0, 0]``. Closing ``u = k + u'``
    gives the right blocks and closing ``w = y + w'`` gives the left
    blocks; with ``F`` (k from u), ``E`` (k from w), ``D`` (y from u) and
    ``G`` (y from w) of each closed loop,
    ``[M Y; N X] = [I + F, -E; D, I - G]`` and
    ``[Xt, -Yt; -Nt, Mt] = [I - F, E; -D, I + G]``.
    """
    A, B, C, D = sys
    n, m, p = sys.n, sys.m, sys.p
    K, H = as_matrix(jp.K), as_matrix(jp.H)
    if K.shape != (m, n) or H.shape != (n, p):
        raise DimensionMismatch("K must be m x n and H must be n x p")
    if spectral_abscissa(A + B @ K) >= -STABILITY_MARGIN:
        raise NotJointlyStabilizing("A + BK is not exponentially stable")
    if spectral_abscissa(A + H @ C) >= -STABILITY_MARGIN:
        raise NotJointlyStabilizing("A + HC is not exponentially stable")

    joint = StateSpaceSystem(
        A, np.hstack([H, B]), np.vstack([C, K]),
        np.block([[np.zeros((p, p)), D], [np.zeros((m, p)), np.zeros((m, m))]]),
    )
    w_in, u_in = np.arange(p), np.arange(p, p + m)
    y_out, k_out = np.arange(p), np.arange(p, p + m)

    L = np.zeros((p + m, p + m))
    L[p:, p:] = np.eye(m)
    right = output_feedback(joint, L)
    F, E = _subsystem(right, u_in, k_out), _subsystem(right, w_in, k_out)
    Dr, G = _subsystem(right, u_in, y_out), _subsystem(right, w_in, y_out)
    M, Y, N, X = _identity_plus(F), _negated(E), Dr, _identity_plus(G, -1.0)

    Lt = np.zeros((p + m, p + m))
    Lt[:p, :p] = np.eye(p)
    left = output_feedback(joint, Lt)
    Ft, Et = _subsystem(left, u_in, k_out), _subsystem(left, w_in, k_out)
    Dl, Gl = _subsystem(left, u_in, y_out), _subsystem(left, w_in, y_out)
    Xt, Yt, Nt, Mt = _identity_plus(Ft, -1.0), _negated(Et), Dl, _identity_plus(Gl)

    dcf = DoublyCoprime(M, N, X, Y, Mt, Nt, Xt, Yt, JointPair(K, H))
    samples = default_dcf_samples(A) if samples is None else samples
    res = dcf.identity_residual(samples)
    if res > tol * max(1.0, np.linalg.norm(K, 2) * np.linalg.norm(H, 2)):
        raise NotJointlyStabilizing(f"block identity fails with residual {res:.3g}")
    return dcf


def youla_controller(dcf: DoublyCoprime, E: StateSpaceSystem) -> StateSpaceSystem:
    """Realization of ``(Y + M E)(X + N E)^{-1}`` for a stable parameter ``E``.

    The controller acts by positive feedback ``u = Q y``. ``[Y M; X N]``
    is realized on the single state of ``A + BK``, which keeps the
    controller order at ``n + order(E)``.
    """
    M, N, X, Y = dcf.M, dcf.N, dcf.X, dcf.Y
    m, p = M.p, N.p
    if (E.m, E.p) != (p, m):
        raise DimensionMismatch(f"E must map {p} outputs to {m} inputs")
    if E.n and spectral_abscissa(E.A) >= -STABILITY_MARGIN:
        raise EUnstable("parameter E is not exponentially stable")
    # Y and X are driven by w through the same (A + BK, H); M and N by u through B.
    # Their difference state z = x_u - x_w carries the whole combination.
    stack = StateSpaceSystem(
        M.A, np.hstack([-Y.B, M.B]), np.vstack([M.C, N.C]),
        np.block([[Y.D, M.D], [X.D, N.D]]),
    )
    lift = StateSpaceSystem(E.A, E.B, np.vstack([np.zeros((p, E.n)), E.C]), np.vstack([np.eye(p), E.D]))
    T = series(lift, stack)
    C1, C2 = T.C[:m], T.C[m:]
    D1, D2 = T.D[:m], T.D[m:]
    if np.linalg.cond(D2) >= 1e12:
        raise ImproperController("X + N E has a singular feedthrough")
    D2i = np.linalg.inv(D2)
    return StateSpaceSystem(T.A - T.B @ D2i @ C2, T.B @ D2i, C1 - D1 @ D2i @ C2, D1 @ D2i)


def closed_loop_abscissa(plant: StateSpaceSystem, controller: StateSpaceSystem) -> float:
    return spectral_abscissa(feedback_loop_matrix(plant, controller))


class CoprimenessResult(NamedTuple):
    epsilon_estimate: float
    zeros: list
    coprime: bool


def default_coprimeness_grid() -> list:
    omegas = np.concatenate([[0.0], np.logspace(-3, 3, 61)])
    pts = [1j * w for w in omegas] + [-1j * w for w in omegas[1:]]
    pts += [1e4 * np.exp(1j * th) for th in np.linspace(-np.pi / 2, np.pi / 2, 9)]
    pts += [complex(x, y) for x in (0.5, 1.0, 2.0, 5.0) for y in (-2.0, 0.0, 2.0)]
    return pts


def coprimeness_test(fp: FactorPair, grid=None, threshold: float = 1e-8) -> CoprimenessResult:
    """Grid lower bound of ``N^* N + M^* M`` plus closed right half-plane zeros of ``[N; M]``.

    Zeros are taken from a minimal realization: a hidden mode of the
    shared state space is not a common zero of the two transfer functions.
    """
    st = fp.stacked()
    grid = default_coprimeness_grid() if grid is None else grid
    eps = np.inf
    for s in grid:
        try:
            G = transfer_eval(st, s)
        except np.linalg.LinAlgError:
            continue
        eps = min(eps, min_singular_value(G) ** 2)
    zeros = [z for z in transmission_zeros(st) if z.real >= -STABILITY_MARGIN]
    return CoprimenessResult(float(eps), zeros, bool(eps > threshold and not zeros))


# -- coercivity and spectral factorization ---------------------------------------

class CoercivityResult(NamedTuple):
    coercive: bool
    epsilon: float
    axis_zeros: list


def default_coercivity_grid() -> np.ndarray:
    return np.concatenate([[0.0], np.logspace(-3, 3, 400)])


def j_coercivity_check(sys: StateSpaceSystem, J=None, omega_grid=None,
                       threshold: float = 1e-6) -> CoercivityResult:
    """``min_r sigma_min([A - irI, B; J^{1/2} C, J^{1/2} D])`` and imaginary-axis zeros."""
    J = cost_matrix(J, sys.p)
    if sys.p and np.linalg.eigvalsh(J).min() <= 0:
        raise ValueError("J must be positive definite")
    Jh = psd_sqrt(J)
    weighted = StateSpaceSystem(sys.A, sys.B, Jh @ sys.C, Jh @ sys.D)
    grid = default_coercivity_grid() if omega_grid is None else np.asarray(omega_grid, dtype=float)
    grid = np.concatenate([grid, [1e6]])
    eps = min(min_singular_value(_system_matrix(weighted, 1j * r)) for r in grid)
    try:
        zeros = invariant_zeros(weighted)
    except SingularPencil:
        zeros = []
        eps = 0.0
    axis = [z for z in zeros if abs(z.real) <= STABILITY_MARGIN * max(1.0, abs(z))]
    return CoercivityResult(bool(eps > threshold and not axis), float(eps), axis)


@dataclass(frozen=True, eq=False)
class PopovFactor:
    """``X(s) = I - K (s - A)^{-1} B`` with ``X^* S X`` equal to the Popov function.

    ``X_normalized = S^{1/2} X`` satisfies ``X_normalized^* X_normalized`` = Popov.
    """

    X_real: StateSpaceSystem
    S: np.ndarray
    X_normalized: StateSpaceSystem
    P: np.ndarray
    K: np.ndarray
    residual: float = 0.0
    extra: dict = field(default_factory=dict)


def popov_min_eigenvalue(sys: StateSpaceSystem, J, omegas) -> float:
    J = cost_matrix(J, sys.p)
    worst = np.inf
    for w in omegas:
        Dh = transfer_eval(sys, 1j * w)
        worst = min(worst, float(np.linalg.eigvalsh(Dh.conj().T @ J @ Dh).min()))
    S = sys.D.T @ J @ sys.D
    return min(worst, float(np.linalg.eigvalsh(0.5 * (S + S.T)).min()))


def spectral_factorize_popov(sys: StateSpaceSystem, J=None, omega_grid=None,
                             threshold: float = 1e-9) -> PopovFactor:
    """Factor ``D(iw)^* J D(iw) = X(iw)^* S X(iw)`` with ``X``, ``X^{-1}`` stable."""
    J = cost_matrix(J, sys.p)
    if not is_stable(sys):
        raise NotStable("A must be Hurwitz")
    omegas = np.concatenate([[0.0], np.logspace(-3, 3, 200)]) if omega_grid is None else omega_grid
    if popov_min_eigenvalue(sys, J, omegas) <= threshold:
        raise PopovNotCoercive("Popov function is not uniformly positive on the grid")
    sol = solve_stabilizing(build_problem("general", sys, J=J))
    A, B = sys.A, sys.B
    K, S = sol.K, sol.S
    X = StateSpaceSystem(A, B, -K, np.eye(sys.m))
    Sh = psd_sqrt(S)
    Xn = StateSpaceSystem(A, B, -Sh @ K, Sh)
    res = 0.0
    for w in omegas:
        Xh, Dh = transfer_eval(X, 1j * w), transfer_eval(sys, 1j * w)
        res = max(res, float(np.linalg.norm(Xh.conj().T @ S @ Xh - Dh.conj().T @ J @ Dh, 2)))
    return PopovFactor(X, S, Xn, sol.P, K, res, {"inverse_abscissa": spectral_abscissa(A + B @ K)})
