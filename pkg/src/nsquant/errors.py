"""Exception types raised by nsquant."""


class NsquantError(Exception):
    """Base class for all package errors."""


class EmptyWindowError(NsquantError, ValueError):
    """No observation receives positive kernel weight."""

    def __init__(self, message: str, point: float | None = None):
        super().__init__(message)
        self.point = point


class WindowTooSmallError(NsquantError, ValueError):
    """Local window holds fewer observations than the block length."""


class DegenerateBasisError(NsquantError, ValueError):
    """Parametric basis has no nonsingular k-subset of design rows."""


class QuadratureError(NsquantError, ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (error estimate {residual:.3e})")
        self.residual = residual
