import numpy as np
import pytest
import scipy.linalg as sla

from lqric import fixtures
from lqric.discretize import simulate
from lqric.errors import DegenerateHamiltonian, NoSolution, NoStabilizingSolution, SignatureSingular
from lqric.numkernel import loewner_geq
from lqric.riccati import (
    are_residual,
    build_problem,
    classify,
    enumerate_solutions,
    gain,
    hamiltonian,
    kalman_minimal_solution,
    signature,
    solve_minimal_nonnegative,
    solve_stabilizing,
)
from lqric.stabilize import fcc_decide
from lqric.system import Domain, StateSpaceSystem, dual

from conftest import SQRT2, scalar


def scipy_are(problem):
    # independent oracle: scipy's generalized-eigenvalue ARE with cross term
    A, B, C, D = problem.plant
    J = problem.J
    return sla.solve_continuous_are(A, B, C.T @ J @ C, problem.S, s=C.T @ J @ D)


def test_signature_examples(hidden_pole):
    assert np.array_equal(signature(hidden_pole, 1.0), [[1.0]])
    assert np.array_equal(signature(scalar(1, 1, 1, 0), 1.0), [[0.0]])
    s = StateSpaceSystem([[1.0]], [[1.0]], [[1.0], [0.0]], [[0.0], [1.0]])
    assert np.array_equal(signature(s, np.eye(2)), [[1.0]])


def test_build_problem_scalar_equations(scalar_plant):
    # state-FCC and output-FCC on (1, 1) both read P^2 = 2P + 1
    for kind in ("state-fcc", "output-fcc"):
        pr = build_problem(kind, scalar_plant)
        for P in (1 + SQRT2, 1 - SQRT2):
            K = gain(pr, np.array([[P]]))
            assert are_residual(pr, np.array([[P]]), K) < 1e-12
        assert pr.S[0, 0] == 1.0
    lqr = build_problem("lqr", scalar_plant, Q=1.0, T=1.0, R=1.0)
    assert lqr.S[0, 0] == pytest.approx(1.0)


def test_lqr_weight_errors(scalar_plant):
    with pytest.raises(ValueError):
        build_problem("lqr", scalar_plant, R=0.0)
    with pytest.raises(ValueError):
        build_problem("lqr", scalar_plant, T=-1.0)
    with pytest.raises(ValueError):
        build_problem("lqr", scalar_plant, R=np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_state_fcc_scalar():
    sol = solve_stabilizing(build_problem("state-fcc", scalar(1, 1, 0, 0)))
    assert sol.P[0, 0] == pytest.approx(1 + SQRT2, abs=1e-12)
    assert sol.K[0, 0] == pytest.approx(-(1 + SQRT2), abs=1e-12)
    assert sol.closed_loop_poles[0].real == pytest.approx(-SQRT2, abs=1e-12)
    assert sol.stabilizing and sol.nonnegative


def test_hidden_pole_exp(hidden_pole):
    sol = solve_stabilizing(build_problem("general", hidden_pole, J=1.0))
    assert sol.P[0, 0] == pytest.approx(2.0, abs=1e-12)
    assert sol.K[0, 0] == pytest.approx(-2.0, abs=1e-12)
    assert (hidden_pole.A + hidden_pole.B @ sol.K)[0, 0] == pytest.approx(-1.0)


def test_stable_zero_output():
    s = StateSpaceSystem([[-1.0, 0.0], [1.0, -2.0]], [[1.0], [0.0]], np.zeros((1, 2)), [[1.0]])
    sol = solve_stabilizing(build_problem("general", s, J=1.0))
    assert np.allclose(sol.P, 0, atol=1e-12) and np.allclose(sol.K, 0, atol=1e-12)


def test_signature_singular(scalar_plant):
    with pytest.raises(SignatureSingular):
        solve_stabilizing(build_problem("general", scalar_plant, J=1.0))


def test_no_stabilizing_solution():
    # unstable mode with no input
    s = StateSpaceSystem([[1.0, 0.0], [0.0, -1.0]], [[0.0], [1.0]], np.eye(2), np.zeros((2, 1)))
    with pytest.raises((NoStabilizingSolution, np.linalg.LinAlgError)):
        solve_stabilizing(build_problem("state-fcc", s))


def test_matches_scipy_oracle():
    gen = np.random.default_rng(11)
    for kind in ("state-fcc", "output-fcc", "lqr"):
        for _ in range(5):
            s = fixtures.random_system(gen, 4, 2, 2, margin=0.05)
            pr = build_problem(kind, s)
            sol = solve_stabilizing(pr)
            ref = scipy_are(pr)
            assert np.allclose(sol.P, ref, atol=1e-8 * (1 + np.abs(ref).max()))
            assert sol.residual <= 1e-8 * (1 + np.linalg.norm(sol.P)) * (1 + np.linalg.norm(pr.plant.A))


def test_enumerate_hidden_pole(hidden_pole):
    sols = enumerate_solutions(build_problem("general", hidden_pole, J=1.0, domain="out"))
    assert [round(float(s.P[0, 0]), 10) for s in sols] == [0.0, 2.0]
    p0, p2 = sols
    assert p0.K[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert not p0.stabilizing and p0.output_stable and p0.rcc_ok
    assert p2.stabilizing and p2.nonnegative


def test_enumerate_scalar_quadratic():
    sols = enumerate_solutions(build_problem("state-fcc", scalar(1, 1, 0, 0)))
    vals = [s.P[0, 0] for s in sols]
    assert np.allclose(vals, [1 - SQRT2, 1 + SQRT2], atol=1e-12)
    assert [s.nonnegative for s in sols] == [False, True]


def test_enumerate_decoupled_pair():
    # two independent scalar state-FCC problems: solutions are the products
    s = StateSpaceSystem(np.diag([1.0, -2.0]), np.eye(2), np.zeros((0, 2)), np.zeros((0, 2)))
    sols = enumerate_solutions(build_problem("state-fcc", s))
    assert len(sols) == 4
    r1 = sorted([1 - SQRT2, 1 + SQRT2])
    r2 = sorted([-2 - np.sqrt(5), -2 + np.sqrt(5)])
    expected = sorted((a, b) for a in r1 for b in r2)
    got = sorted((s.P[0, 0], s.P[1, 1]) for s in sols)
    assert np.allclose(got, expected, atol=1e-10)
    for s_ in sols:
        assert abs(s_.P[0, 1]) < 1e-10


def test_enumerate_refuses_degenerate():
    # two identical decoupled problems -> repeated Hamiltonian eigenvalues
    s = StateSpaceSystem(np.eye(2), np.eye(2), np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(DegenerateHamiltonian):
        enumerate_solutions(build_problem("state-fcc", s))
    # Hamiltonian eigenvalues on the imaginary axis: A = 0, no cost on x
    s = StateSpaceSystem([[0.0]], [[1.0]], [[0.0]], [[1.0]])
    with pytest.raises(DegenerateHamiltonian):
        enumerate_solutions(build_problem("general", s, J=1.0))


def test_classify_examples(hidden_pole):
    pr = build_problem("general", hidden_pole, J=1.0, domain="out")
    from lqric.riccati import RiccatiSolution

    def make(P, K):
        P, K = np.array([[P]]), np.array([[K]])
        return classify(RiccatiSolution(P, pr.S, K, are_residual(pr, P, K)), pr)

    a = make(2.0, -2.0)
    assert a.stabilizing and a.nonnegative
    b = make(0.0, 0.0)
    assert not b.stabilizing and b.output_stable and b.rcc_ok
    c = make(2.0, 0.0)
    assert c.rcc_ok is False


def test_minimal_nonnegative_examples(hidden_pole, scalar_plant):
    sol = solve_minimal_nonnegative(build_problem("general", hidden_pole, J=1.0, domain="out"))
    assert sol.P[0, 0] == pytest.approx(0.0, abs=1e-12) and sol.K[0, 0] == pytest.approx(0.0, abs=1e-12)
    sol = solve_minimal_nonnegative(build_problem("output-fcc", scalar_plant, domain="out"))
    assert sol.P[0, 0] == pytest.approx(1 + SQRT2, abs=1e-10)
    stable = StateSpaceSystem([[-1.0]], [[1.0]], [[0.0]], [[1.0]])
    sol = solve_minimal_nonnegative(build_problem("general", stable, J=1.0, domain="out"))
    assert sol.P[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_minimal_nonnegative_fails_without_fcc():
    s = StateSpaceSystem([[1.0]], [[0.0]], [[1.0]], [[0.0]])
    with pytest.raises((NoSolution, np.linalg.LinAlgError)):
        solve_minimal_nonnegative(build_problem("output-fcc", s, domain="out"))


def test_kalman_route_matches_enumeration():
    gen = np.random.default_rng(4)
    for _ in range(5):
        s = fixtures.random_system(gen, 3, 1, 1)
        # hide one unstable mode from the output
        A = sla.block_diag(s.A, [[0.7]])
        B = np.vstack([s.B, [[1.0]]])
        C = np.hstack([s.C, [[0.0]]])
        plant = StateSpaceSystem(A, B, C, s.D)
        pr = build_problem("output-fcc", plant, domain="out")
        k = kalman_minimal_solution(pr)
        e = solve_minimal_nonnegative(pr)
        assert np.allclose(k.P, e.P, atol=1e-7)
        assert np.allclose(k.P[-1], 0, atol=1e-10)


def test_maximality_against_enumeration():
    gen = np.random.default_rng(8)
    for _ in range(10):
        s = fixtures.random_system(gen, 3, 2, 2)
        pr = build_problem("lqr", s)
        best = solve_stabilizing(pr)
        for other in enumerate_solutions(pr):
            assert loewner_geq(best.P, other.P)


def test_filter_is_dual_state_fcc():
    gen = np.random.default_rng(9)
    s = fixtures.random_system(gen, 3, 2, 2, margin=0.05)
    f = solve_stabilizing(build_problem("filter", s))
    d = solve_stabilizing(build_problem("state-fcc", dual(s)))
    assert np.allclose(f.P, d.P, atol=1e-10)
    assert np.allclose(f.H, d.K.T, atol=1e-10)
    # H = -P C^T stabilizes A + H C
    assert np.allclose(f.H, -f.P @ s.C.T, atol=1e-10)
    assert np.linalg.eigvals(s.A + f.H @ s.C).real.max() < 0


def test_minimal_cost_identity():
    gen = np.random.default_rng(12)
    for _ in range(3):
        s = fixtures.random_system(gen, 3, 1, 2, margin=0.05)
        pr = build_problem("output-fcc", s)
        sol = solve_stabilizing(pr)
        x0 = gen.standard_normal(3)
        loop = StateSpaceSystem(s.A + s.B @ sol.K, s.B, pr.plant.C + pr.plant.D @ sol.K, pr.plant.D)
        T = 40.0 / -np.linalg.eigvals(loop.A).real.max()
        traj = simulate(loop, pr.J, x0, None, T, 50)
        expected = x0 @ sol.P @ x0
        assert traj.cost == pytest.approx(expected, rel=1e-6)


def test_eliminated_gain_form_coincides():
    # eliminating K gives A~^T P + P A~ - P B S^-1 B^T P + Q~ = 0
    gen = np.random.default_rng(13)
    s = fixtures.random_system(gen, 3, 2, 2)
    J = np.diag([1.0, 2.0])
    pr = build_problem("lqr", s, Q=J)
    sol = solve_stabilizing(pr)
    A, B, C, D = pr.plant
    Jm = pr.J
    Si = np.linalg.inv(pr.S)
    At = A - B @ Si @ D.T @ Jm @ C
    Qt = C.T @ Jm @ C - C.T @ Jm @ D @ Si @ D.T @ Jm @ C
    R = At.T @ sol.P + sol.P @ At - sol.P @ B @ Si @ B.T @ sol.P + Qt
    assert np.linalg.norm(R) < 1e-9 * (1 + np.linalg.norm(sol.P))


def test_lqr_exists_iff_state_fcc():
    gen = np.random.default_rng(14)
    for i in range(10):
        s = fixtures.random_system(gen, 3, 1, 1)
        if i % 2:
            # make an unstable mode uncontrollable
            A = sla.block_diag(s.A[:2, :2], [[0.5]])
            s = StateSpaceSystem(A, np.vstack([s.B[:2], [[0.0]]]), s.C, s.D)
        decision = fcc_decide(s, Domain.EXP)
        try:
            solve_stabilizing(build_problem("lqr", s))
            ok = True
        except (NoStabilizingSolution, np.linalg.LinAlgError):
            ok = False
        assert ok == decision.fcc


def test_hamiltonian_structure(hidden_pole):
    H = hamiltonian(build_problem("general", hidden_pole, J=1.0))
    n = 1
    Jn = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    assert np.allclose(Jn @ H, (Jn @ H).T)
