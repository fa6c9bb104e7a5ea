"""avoidkit: coupled non-colliding random walks on complete graphs.

Build base couplings, extend them vertex by vertex (optionally adding
walkers under a partial move order), verify the results exactly with a
rational-arithmetic oracle or statistically at larger sizes, and drive
an anti-jamming frequency-hopping simulation from the sampled schedules.
"""

from .backend import active_backend, set_backend
from .base import (
    CouplingProcess,
    KernelChainError,
    KernelInvalid,
    KernelProcess,
    KernelTable,
    kernel_from_dict,
    kernel_from_json,
    kernel_process,
    kernel_to_json,
    search_equivariant_kernel,
    stationary_distribution,
    symmetric_pair_kernel,
    trivial_kernel,
    trivial_sac,
    validate_kernel,
)
from .core import (
    BudgetExceeded,
    Configuration,
    MoveOrder,
    ParameterError,
    PartialOrder,
    Rational,
    Trajectory,
    TrajectoryFrame,
    UnsupportedCheck,
    linear_extension,
    order_respects,
    validate_configuration,
)
from .descriptor import (
    builtin_process,
    load_descriptor,
    process_from_descriptor,
    process_to_descriptor,
    save_descriptor,
)
from .extend import (
    ExtensionProcess,
    extend_posac,
    extend_sac,
    iterate_extension,
    sample_trajectory,
)
from .hopsim import (
    BUILTIN_STRATEGIES,
    AdversaryStrategy,
    HitReport,
    HopSchedule,
    export_schedule,
    round_robin_schedule,
    run_adversary,
)
from .permchain import (
    PermState,
    enumerate_perm_steps,
    init_perm_chain,
    step_perm_chain,
)
from .verify import (
    JointDistribution,
    VerificationReport,
    check_avoidance,
    check_posac_orders,
    chi_square_uniformity,
    enumerate_joint,
    exact_conditional_laws,
    stationarity_check,
)

__version__ = "0.1.0"
