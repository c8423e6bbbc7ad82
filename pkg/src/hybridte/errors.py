"""Exception hierarchy shared by all modules."""


class HybridTEError(Exception):
    """Base class for every error raised by this package."""


class TopologyError(HybridTEError, ValueError):
    """Malformed or invalid topology / demand input."""


class PartitionError(HybridTEError, ValueError):
    """Invalid SDN node set or no admissible separator."""


class CatalogCapExceeded(HybridTEError):
    """A sub-domain has more exit mappings than the configured cap."""


class ModelError(HybridTEError, ValueError):
    """Inconsistent inputs while building an ILP."""


class SolverError(HybridTEError):
    """The external solver failed or produced unusable output."""


class InfeasibleError(SolverError):
    """The solver proved the model infeasible."""


class SizeGateError(HybridTEError):
    """Instance too large for the exhaustive oracle."""


class DecodeError(HybridTEError):
    """Selected entities do not form a valid route."""
