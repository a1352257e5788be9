"""Exception hierarchy shared by all lqric modules."""

import numpy as np


class LqricError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(LqricError, ValueError):
    pass


class NonFiniteEntry(LqricError, ValueError):
    pass


class BoundaryEigenvalue(LqricError, np.linalg.LinAlgError):
    """An eigenvalue sits on the boundary of the requested region."""


class SingularSylvester(LqricError, np.linalg.LinAlgError):
    pass


class SingularPencil(LqricError, np.linalg.LinAlgError):
    pass


class ResolventSingular(LqricError, np.linalg.LinAlgError):
    """The evaluation point is (numerically) an eigenvalue of A."""


class FeedbackIllPosed(LqricError, np.linalg.LinAlgError):
    pass


class SignatureSingular(LqricError, np.linalg.LinAlgError):
    pass


class NoStabilizingSolution(LqricError):
    pass


class NoSolution(LqricError):
    pass


class AmbiguousMinimum(LqricError):
    pass


class MinimumMismatch(LqricError):
    """The enumeration and Kalman-decomposition routes found different minima."""


class DegenerateHamiltonian(LqricError):
    pass


class DegeneratePencil(LqricError, np.linalg.LinAlgError):
    pass


class NotStabilizing(LqricError):
    pass


class RoutesDisagree(LqricError):
    """Two independent decision procedures returned different answers."""


class FccFails(LqricError):
    pass


class NotJointlyStabilizing(LqricError):
    pass


class ImproperController(LqricError):
    pass


class EUnstable(LqricError):
    pass


class NotStable(LqricError):
    pass


class PopovNotCoercive(LqricError):
    pass
