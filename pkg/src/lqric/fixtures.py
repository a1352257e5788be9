"""Reference systems and seeded random system generators.

Random fixtures draw from ``numpy.random.default_rng``; the seed comes
from the ``TOOL_SEED`` environment variable when set.
"""

import os

import numpy as np

from .system import StateSpaceSystem

DEFAULT_SEED = 20240611


def tool_seed(default: int = DEFAULT_SEED) -> int:
    value = os.environ.get("TOOL_SEED")
    return int(value) if value not in (None, "") else default


def rng(offset: int = 0) -> np.random.Generator:
    return np.random.default_rng(tool_seed() + offset)


def hidden_pole_system() -> StateSpaceSystem:
    """``x' = x + u, y = u``: unstable pole that the output never sees."""
    return StateSpaceSystem([[1.0]], [[1.0]], [[0.0]], [[1.0]])


def scalar_unstable() -> StateSpaceSystem:
    """``x' = x + u, y = x``."""
    return StateSpaceSystem([[1.0]], [[1.0]], [[1.0]], [[0.0]])


def scalar_state_only() -> StateSpaceSystem:
    """``x' = x + u`` with no output; input to the state-FCC problem."""
    return StateSpaceSystem([[1.0]], [[1.0]], np.zeros((0, 1)), np.zeros((0, 1)))


def pbh_margin(A, B) -> float:
    """Smallest ``sigma_n([lam I - A, B])`` over the eigenvalues of ``A``."""
    n = A.shape[0]
    if n == 0:
        return np.inf
    return min(
        float(np.linalg.svd(np.hstack([lam * np.eye(n) - A, B]), compute_uv=False)[n - 1])
        for lam in np.linalg.eigvals(A)
    )


def random_system(gen: np.random.Generator, n: int, m: int, p: int,
                  margin: float = 0.0, max_tries: int = 1000) -> StateSpaceSystem:
    """Gaussian ``(A, B, C, D)``.

    With ``margin > 0`` draws are rejected until both PBH margins (for
    ``(A, B)`` and ``(A^T, C^T)``) exceed it, which keeps factorization
    gains moderate.
    """
    for _ in range(max_tries):
        A = gen.standard_normal((n, n))
        B = gen.standard_normal((n, m))
        C = gen.standard_normal((p, n))
        D = gen.standard_normal((p, m))
        if margin <= 0 or (pbh_margin(A, B) >= margin and pbh_margin(A.T, C.T) >= margin):
            return StateSpaceSystem(A, B, C, D)
    raise RuntimeError("no system met the requested margin")


def random_stable_system(gen: np.random.Generator, n: int, m: int, p: int,
                         decay: float = 0.5) -> StateSpaceSystem:
    A = gen.standard_normal((n, n))
    shift = max(0.0, np.linalg.eigvals(A).real.max() + decay) if n else 0.0
    return StateSpaceSystem(
        A - shift * np.eye(n), gen.standard_normal((n, m)),
        gen.standard_normal((p, n)), gen.standard_normal((p, m)),
    )


def random_dimensions(gen: np.random.Generator, n_max: int, m_max: int, p_max: int):
    return (int(gen.integers(1, n_max + 1)), int(gen.integers(1, m_max + 1)),
            int(gen.integers(1, p_max + 1)))
