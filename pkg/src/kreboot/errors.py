"""Exception hierarchy. The CLI maps these onto exit codes."""


class KrebootError(Exception):
    pass


class InputDomainError(KrebootError, ValueError):
    """Argument outside the domain of the operation (negative radius, NaN points, shape mismatch)."""


class DegenerateAtomError(KrebootError, ArithmeticError):
    """Dictionary atom with zero empirical norm."""


class SingularSystemError(KrebootError, ArithmeticError):
    """Cholesky factorization failed even at the largest permitted jitter."""
