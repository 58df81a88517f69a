class DegenerateTensorError(ValueError):
    """Diffusion tensor is not symmetric positive definite along a face normal."""


class CoercivityError(RuntimeError):
    """A local interior block A_EE is singular; the penalty is too small."""

    def __init__(self, element: int, alpha0: float):
        self.element = element
        self.alpha0 = alpha0
        super().__init__(
            f"singular local block on element {element} (alpha0={alpha0:g}); "
            "increase alpha0 so the scheme is coercive"
        )


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float = float("nan")):
        self.residual = residual
        super().__init__(f"{message} (best relative residual {residual:.3e})")


class NumericalFailure(RuntimeError):
    """An iterative eigenvalue estimate did not converge."""
