"""Exception types raised by the library."""


class PTQuantumError(Exception):
    """Base class for all library errors."""


class DegenerateInput(PTQuantumError, ValueError):
    """Eigenvectors coalesce (at or too close to an exceptional point)."""


class NotAtEP(PTQuantumError, ValueError):
    """Exceptional-point limit formulas requested away from an EP."""


class SingularKMatrix(PTQuantumError, ValueError):
    pass


class NonPhysicalState(PTQuantumError, ValueError):
    pass


class PrecisionLoss(NonPhysicalState):
    """Double precision cannot resolve the requested quantity for this state.

    Happens for strongly amplified states, whose coherence-matrix entries are
    so large that one rounding unit shifts the determinant by more than its
    value.
    """


class DegenerateCovariance(PTQuantumError, ValueError):
    pass


class StepTooLarge(PTQuantumError, ValueError):
    pass


class GridMismatch(PTQuantumError, ValueError):
    pass
