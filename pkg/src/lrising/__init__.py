"""Two-dimensional long-range Ising models: couplings, certified lattice sums,
exact enumeration, Monte Carlo sampling and interface observables."""

from .enumeration import ExactGibbs, build_exact, exact_expectation, spin_product
from .exactsum import (
    CertifiedValue,
    DivergenceError,
    boundary_field,
    relative_entropy_bound,
    shift_energy_bound,
    step_energy,
    tail_bound,
    zeta_oracle,
)
from .kernel import (
    AnisoLRNN,
    BiAxialLR,
    BoxGeometry,
    Dobrushin,
    IsotropicLR,
    Minus,
    Plus,
    RowChain,
    Site,
    SpinConfiguration,
    bc_value,
    coupling,
    ground_state_pair,
    total_energy,
)
from .mc import ChainState, RunPlan, cluster_update, metropolis_sweep, run_chain, sample_configurations
from .observables import (
    MagnetizationProfile,
    antisymmetry_residual,
    interface_fluctuations,
    interface_height,
    magnetization_profile,
    relative_entropy_estimator,
    van_beijeren_check,
)

__version__ = "0.1.0"
