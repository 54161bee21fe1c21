"""Exception hierarchy shared by all modules."""


class EtaFormError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(EtaFormError, ValueError):
    """An input violates a documented precondition."""


class BranchCut(EtaFormError):
    """A unitary has an eigenphase too close to pi for the principal logarithm."""


class Degenerate(EtaFormError):
    """A configuration is (numerically) non-transverse or rank deficient."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class Ambiguous(EtaFormError):
    """A discrete loop has steps too large to unwrap unambiguously."""


class OutOfDomain(EtaFormError):
    """A finite-difference stencil leaves the sampled lattice."""


class PoorFit(EtaFormError):
    """The small-s asymptotic fit used for finite-part extraction failed."""


class LargeResidual(EtaFormError):
    """A lattice computation is under-resolved (plaquette phase too large)."""
