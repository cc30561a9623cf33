"""Inexact proximal gradient with a restarted dual APG, plus a zero-chain worst-case instance."""

from .audit import (
    StationarityReport,
    audit_AP,
    audit_P_relaxed,
    audit_SP,
    block_average_lower_bound,
    small_coordinate_certificate,
)
from .bench import run_sweep
from .counters import OracleCounter
from .dual import DualProblem, InnerCertificate, apg_cycle, reference_solve, restarted_apg
from .instance import (
    CompositeProblem,
    InstanceParams,
    build_instance,
    f0_grad,
    f0_value,
    grad_f,
    grad_h,
    instance_summary,
    suboptimality_bound,
)
from .ipg import IpgConfig, SolveResult, compute_constants, near_stationary_recovery, solve
from .prox import PairGeometry, ProxSpec, prox_conjugate, prox_pairwise_l1, prox_weighted_l1
from .span import (
    GreedySchedule,
    SpanMachine,
    SpanStep,
    SupportTrace,
    lower_bound_episode,
    replay_ipg,
    run_tracked_A2,
    run_tracked_A3,
)
from .structured import BlockVector, ChainOperator, full_chain_gram_eigs, stacked_condition_number

__all__ = [
    "BlockVector",
    "ChainOperator",
    "CompositeProblem",
    "DualProblem",
    "GreedySchedule",
    "InnerCertificate",
    "InstanceParams",
    "IpgConfig",
    "OracleCounter",
    "PairGeometry",
    "ProxSpec",
    "SolveResult",
    "SpanMachine",
    "SpanStep",
    "StationarityReport",
    "SupportTrace",
    "apg_cycle",
    "audit_AP",
    "audit_P_relaxed",
    "audit_SP",
    "block_average_lower_bound",
    "build_instance",
    "compute_constants",
    "f0_grad",
    "f0_value",
    "full_chain_gram_eigs",
    "grad_f",
    "grad_h",
    "instance_summary",
    "lower_bound_episode",
    "near_stationary_recovery",
    "prox_conjugate",
    "prox_pairwise_l1",
    "prox_weighted_l1",
    "reference_solve",
    "replay_ipg",
    "restarted_apg",
    "run_sweep",
    "run_tracked_A2",
    "run_tracked_A3",
    "small_coordinate_certificate",
    "solve",
    "stacked_condition_number",
    "suboptimality_bound",
]
