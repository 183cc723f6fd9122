"""Measurement-conditioned distillation of a Slave system, steered by Zeno couplings."""

__version__ = "0.1.0"

from .distillation import (
    AsymptoticProjector,
    ChannelReport,
    ConditionalPropagator,
    DistillationExtinguished,
    DistillationRun,
    SpectralDecomposition,
    apply_conditional,
    asymptotic_projector,
    branch_operators,
    channel_report,
    closed_form_v,
    conditional_propagator,
    spectral_decompose,
    zeno_lower_bound,
)
from .hilbert import (
    BipartiteSpace,
    DefectiveMatrixError,
    NotHermitianError,
    NumericalError,
    StateVector,
    eig_general,
    expm_unitary,
    tensor_index,
)
from .models import (
    ChainParams,
    HamiltonianModel,
    TrappedIonParams,
    block_decompose,
    build_chain,
    build_trapped_ion,
    lamb_dicke_f,
)
from .steering import (
    SteeringError,
    SteeringPlan,
    design_qnd_tau,
    find_eta_zero,
    fine_tuning_check,
    hierarchy_sweep,
    predict_target_projector,
    zeno_sweep,
)
from .trajectory import estimate_success_rate, run_trajectory
