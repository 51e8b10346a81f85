"""Glimpses of objectivity in pure-dephasing quantum models.

The package evolves a central system coupled to one or more environments
through a pure-dephasing Hamiltonian, decomposes the joint state into
separable branches and locates the instants where it takes the spectrum
broadcast structure (SBS) form.
"""

from .analysis import (
    BranchDecomposition,
    GlimpseReport,
    NotSeparableError,
    branch_decomposition,
    check_separability,
    detect_sbs,
    discord_residual,
    mub_check,
    negativity,
    product_decomposition,
    sbs_distance,
)
from .evolution import JointState, conditional_env, joint_state_direct, joint_state_factorized
from .glimpse import (
    Certificates,
    ScanResult,
    TrivialModelError,
    WrongShapeError,
    analytic_glimpse_times,
    multi_env_check,
    scan_glimpses,
)
from .model import (
    DephasingModel,
    EnvironmentSpec,
    InvalidModelError,
    ModelFileError,
    ScanSettings,
    load_model,
    random_model,
    reference_model,
    save_model,
    validate,
)

__version__ = "0.1.0"
