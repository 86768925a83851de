"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: usage problems exit 1,
DataError exits 2, NumericError exits 3.
"""


class PortallocError(Exception):
    """Base class for all package-specific errors."""


class DataError(PortallocError):
    """Invalid or inconsistent input data (files, frames, configs)."""


class InfeasibleError(DataError):
    """A constraint target that no feasible portfolio can attain."""


class NumericError(PortallocError):
    """Numeric failure: non-finite values, exploding updates, degenerate risk."""
