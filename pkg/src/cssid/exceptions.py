"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Raised when an array argument has a shape incompatible with its role.

    The message names the offending dimension so callers can report it.
    """


class RankDeficiencyError(ValueError):
    """Raised when a matrix that must have full (row or column) rank does not.

    Attributes
    ----------
    rank : int
        The numerical rank that was actually found.
    """

    def __init__(self, message, rank):
        super().__init__(message)
        self.rank = int(rank)


class ConstraintSingularError(ValueError):
    """Raised when a constraint system is numerically singular.

    Typically indicates redundant constraint rows, e.g. a singular
    D (Psi^T Psi)^{-1} D^T or D P D^T block.
    """
