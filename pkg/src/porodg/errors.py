"""Exception types shared across the package."""


class PoroDGError(Exception):
    """Base class for all package-specific errors."""


class MeshTopologyError(PoroDGError):
    """Raised when face connectivity is inconsistent (non-manifold meshes)."""


class ConfigurationError(PoroDGError):
    """Raised for invalid case set-ups: untagged boundary faces, missing data."""


class AssemblyError(PoroDGError):
    """Raised when a form cannot be assembled (degenerate element, bad coefficient)."""


class FactorizationError(PoroDGError):
    """Raised when a sparse factorization is structurally or numerically singular."""


class ConvergenceError(PoroDGError):
    """Raised when the iterative solver fails to reach its tolerance.

    Carries the final residual norm and the iteration count at failure.
    """

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SamplingError(PoroDGError):
    """Raised when a sample point cannot be located inside the mesh."""


class CaseParseError(ConfigurationError):
    """Raised when a case file violates the documented schema."""
