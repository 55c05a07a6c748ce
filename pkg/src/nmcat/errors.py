"""Shared exception and warning types."""


class TruncationWarning(UserWarning):
    """State or operator support is pushed into the Fock cutoff."""


class SolverFailure(RuntimeError):
    """An eigen/ODE solver did not converge; carries residual diagnostics."""


class NoMetastableManifold(RuntimeError):
    """Spectral separation is insufficient to define a metastable manifold."""


class WindowError(RuntimeError):
    """A requested time window is empty or starts too late."""
