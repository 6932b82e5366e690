"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can report it
without parsing messages.
"""


class SemiflowError(ValueError):
    code = "error"

    def __init__(self, message: str = ""):
        super().__init__(f"{self.code}: {message}" if message else self.code)


class ParameterError(SemiflowError):
    code = "parameter"


class OutsideDomainError(SemiflowError):
    code = "outside-domain"


class OutsideImageError(SemiflowError):
    code = "outside-image"


class NonExpandingBranchError(SemiflowError):
    code = "non-expanding-branch"


class ResolutionError(SemiflowError):
    code = "resolution"


class NoConvergenceError(SemiflowError):
    code = "no-convergence"


class OrbitSingularError(SemiflowError):
    code = "orbit-singular"


class BudgetError(SemiflowError):
    code = "budget"


class DivergentTailsError(SemiflowError):
    code = "divergent-tails"


class InsidePoleRegionError(SemiflowError):
    code = "inside-pole-region"


class NonUniqueAcimWarning(UserWarning):
    """Eigenvalue 1 of the unit-weight matrix looks degenerate."""
