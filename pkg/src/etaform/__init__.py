"""Eta forms of families of interval Dirac operators with Lagrangian boundary conditions."""

from .config import DEFAULTS, KAPPA, TOLERANCES
from .errors import (
    Ambiguous,
    BranchCut,
    ContractViolation,
    Degenerate,
    EtaFormError,
    LargeResidual,
    OutOfDomain,
    PoorFit,
)
from .maslov import maslov_index, model_triple, normalize_triple, split_l0, triple_form
from .spectral_eta import (
    eta_closed_form,
    eta_cocycle_sum,
    eta_galerkin,
    eta_heat_oracle,
    eta_zeta_oracle,
)
from .symplectic import (
    SymplecticSpace,
    graph_unitary,
    random_transverse_triple,
    space_from_complex_structure,
    standard_space,
)

__version__ = "0.1.0"
