"""Multi-block convex composite quadratic programming via symmetric
Gauss-Seidel style block sweeps.

One sweep cycle over the blocks — backward, a first-block proximal
solve, forward — is an exact proximal-point step in a computable
operator norm.  On top of that single primitive the package provides an
accelerated (and restartable) outer loop with inexact inner solves and
complexity certificates, a Schur-complement factorization view with
verifiable identities, an over-relaxed sweep family, a proximal
augmented Lagrangian driver for linearly constrained problems including
quadratic SDP, dense brute-force oracles, and a CLI with a reproducible
instance format.
"""

from .blockla import (
    BlockPartition,
    BlockSymOperator,
    BlockVector,
    Majorizer,
    assemble,
    conservative_shifts,
    from_dense,
    quad_norm,
    sgs_operator,
    shifted_sgs_operator,
    ssor_operator,
)
from .errors import (
    DiagonalNotPD,
    DimensionMismatch,
    FirstBlockMismatch,
    IdentityViolation,
    InnerSolverStall,
    InvalidParams,
    NeedsShift,
    NotConverged,
    NotPD,
    NotPSD,
    NotSymmetric,
    OmegaOutOfRange,
    RangeDeficiency,
    SgsQpError,
    ShapeMismatch,
    ShiftNotPSD,
    TauOutOfRange,
    UnboundedObjective,
)
from .proxmap import (
    ProxSpec,
    prox,
    prox_value,
    smat,
    solve_block1,
    subgrad_residual,
    svec,
    svec_dim,
)
from .sgs import (
    CompositeQP,
    CycleResult,
    ExactMode,
    IterativeMode,
    NoisyMode,
    SsorTuning,
    classical_sgs_step,
    error_bound,
    exact_xi,
    forward_reuse_check,
    forward_reuse_delta,
    perturbation,
    sgs_cycle,
    ssor_cycle,
    ssor_tuning,
    subproblem_kkt,
)
from .scb import ScbFactors, ScbResult, build_factors, scb_eliminate, verify_identities
from .apg import (
    CertificateReport,
    SolveTrace,
    StepSchedule,
    StopRule,
    ToleranceSchedule,
    complexity_certificates,
    contraction_factor,
    kkt_residual,
    objective,
    solve,
)
from .palm import (
    LinConQP,
    PalmStop,
    PalmTrace,
    QsdpData,
    assemble_penalized,
    lagrangian,
    palm_solve,
    qsdp_assemble,
    qsdp_sgs_step,
    qsdp_to_lincon,
)
from .instances import (
    Instance,
    gen,
    gen_lincon,
    gen_qsdp,
    read_instance,
    write_instance,
)

__version__ = "0.1.0"

__all__ = [
    "BlockPartition", "BlockSymOperator", "BlockVector", "Majorizer",
    "assemble", "conservative_shifts", "from_dense", "quad_norm",
    "sgs_operator", "shifted_sgs_operator", "ssor_operator",
    "SgsQpError", "DimensionMismatch", "ShapeMismatch", "NotSymmetric",
    "NotPSD", "NotPD", "DiagonalNotPD", "ShiftNotPSD", "OmegaOutOfRange",
    "TauOutOfRange", "FirstBlockMismatch", "NeedsShift", "InnerSolverStall",
    "IdentityViolation", "RangeDeficiency", "InvalidParams",
    "UnboundedObjective", "NotConverged",
    "ProxSpec", "prox", "prox_value", "subgrad_residual", "solve_block1",
    "svec", "smat", "svec_dim",
    "CompositeQP", "CycleResult", "ExactMode", "IterativeMode", "NoisyMode",
    "sgs_cycle", "ssor_cycle", "classical_sgs_step", "perturbation",
    "exact_xi", "error_bound", "forward_reuse_check", "forward_reuse_delta",
    "subproblem_kkt", "SsorTuning", "ssor_tuning",
    "ScbFactors", "ScbResult", "build_factors", "scb_eliminate",
    "verify_identities",
    "SolveTrace", "StepSchedule", "StopRule", "ToleranceSchedule",
    "solve", "objective", "kkt_residual", "contraction_factor",
    "complexity_certificates", "CertificateReport",
    "LinConQP", "PalmStop", "PalmTrace", "QsdpData", "assemble_penalized",
    "palm_solve", "lagrangian", "qsdp_assemble", "qsdp_sgs_step",
    "qsdp_to_lincon",
    "Instance", "gen", "gen_lincon", "gen_qsdp", "read_instance",
    "write_instance",
]
