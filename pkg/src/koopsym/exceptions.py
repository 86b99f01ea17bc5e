"""Exception hierarchy shared across the package."""


class KoopsymError(Exception):
    """Base class for all errors raised by koopsym."""


class UnknownSystemError(KoopsymError, KeyError):
    pass


class ExpressionError(KoopsymError, ValueError):
    """Raised for malformed right-hand side expressions or system configs."""


class EquilibriumError(KoopsymError, ValueError):
    pass


class NotHurwitzError(KoopsymError, ValueError):
    def __init__(self, eigenvalues):
        self.eigenvalues = eigenvalues
        worst = max(eigenvalues, key=lambda z: z.real)
        super().__init__(
            f"Jacobian at the equilibrium is not Hurwitz: eigenvalue {worst:.6g} "
            "has non-negative real part"
        )


class NotDiagonalizableError(KoopsymError, ValueError):
    def __init__(self, condition_number, threshold):
        self.condition_number = condition_number
        super().__init__(
            f"eigenvector matrix condition number {condition_number:.3e} exceeds "
            f"{threshold:.1e}; Jacobian treated as non-diagonalizable"
        )


class ResonanceError(KoopsymError, ValueError):
    def __init__(self, report):
        self.report = report
        alpha, k, gap = report.violations[0]
        super().__init__(
            f"spectrum is resonant: multi-index {alpha} hits eigenvalue index {k + 1} "
            f"(gap {gap:.3e})"
        )


class SingularFrameError(KoopsymError, ValueError):
    def __init__(self, condition_number, threshold=None):
        self.condition_number = condition_number
        msg = f"frame matrix is near-singular (condition number {condition_number:.3e})"
        if threshold is not None:
            msg += f", threshold {threshold:.1e}"
        super().__init__(msg)


class EvaluationError(KoopsymError, ArithmeticError):
    """A field could not be evaluated to a finite value near the requested point."""


class DivergedTrajectoryError(KoopsymError, ArithmeticError):
    pass



class BelowFloorError(KoopsymError, ValueError):
    """An eigenfunction magnitude is too small to divide by."""
