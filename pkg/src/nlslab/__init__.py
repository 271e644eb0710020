"""Pseudospectral laboratory for modified energies of the 1D cubic NLS."""

from .spectral import (
    ConfigurationError,
    Field,
    GridSpec,
    MultiplierSpec,
    NumericalError,
    apply_multiplier,
    derivative,
    forward_transform,
    hs_inner,
    hs_norm,
    inverse_transform,
    lp_norm,
)
from .dynamics import (
    EnergyLedger,
    SolverConfig,
    evolve,
    exact_solution,
    hamiltonian,
    lyapunov,
    mass,
    modified_energy_D,
    modified_energy_I,
    modified_energy_refined,
    rough_data,
    step,
)
from .ground_state import (
    GroundStateParams,
    RejectedInput,
    coercivity_probe,
    dist_hs,
    eval_Q,
    project_admissible,
)
from .modulation import (
    DecompositionError,
    ModulationFrame,
    SingularSystemError,
    decompose,
    modulation_rates,
    track_modulation,
)
from .multilinear import (
    CostGuardError,
    HyperplaneError,
    SymbolM,
    energy_derivative_check,
    eval_lambda_n,
    eval_symbol,
    factorization_check,
    filter_bound_scan,
    leibniz_scan,
    omega_functional,
)

__version__ = "0.1.0"
