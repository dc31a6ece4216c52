"""Stochastic-mesh Monte Carlo estimation of credit valuation adjustments.

The package simulates Gaussian factor models along a payoff-date grid, builds
a stochastic mesh whose transition-density weights turn one path family into
conditional-value estimates at every node, and combines two CVA estimators:
a mesh-valued exposure estimator and a realized-payoff estimator gated by the
mesh sign.  Analytic and nested Monte Carlo references plus a replication
harness reproduce the unit-horizon Brownian benchmark end to end.
"""

from .models import (
    GaussianModel,
    ModelConfigError,
    ProjectedState,
    brownian_motion_1d,
    load_model_config,
    project,
    read_flat_config,
)
from .paths import (
    Partition,
    PathFamily,
    build_partition,
    dump_paths,
    family_seed_sequence,
    load_paths,
    simulate_family,
    simulate_family_pooled,
)
from .mesh import (
    MeshContext,
    mesh_apply,
    mesh_apply_batch,
    mesh_denominator,
)
from .estimators import (
    C_LIMIT_BROWNIAN,
    Contract,
    EpsilonSchedule,
    EstimateResult,
    HazardLossSpec,
    Portfolio,
    call_payoff,
    constant_hazard,
    default_schedule,
    epsilon_for,
    estimate_c1,
    estimate_c2,
    indicator_gap_bound_check,
    linear_payoff,
    nested_mc_oracle,
    netted_mesh_value,
    netted_mesh_values,
    put_payoff,
    reference_c_delta_brownian,
    unit_hazard,
)
from .harness import (
    ConvergenceReport,
    ConvergenceRow,
    ReplicationReport,
    ReplicationRow,
    RunConfig,
    Scenario,
    brownian_example,
    builtin_scenario,
    emit_convergence_csv,
    emit_csv,
    format_convergence_csv,
    format_csv,
    load_portfolio_config,
    parse_csv,
    replication_seed,
    resolve_scenario,
    run_convergence_study,
    run_replication_study,
)

__version__ = "0.1.0"

__all__ = [
    "C_LIMIT_BROWNIAN",
    "Contract",
    "ConvergenceReport",
    "ConvergenceRow",
    "EpsilonSchedule",
    "EstimateResult",
    "GaussianModel",
    "HazardLossSpec",
    "MeshContext",
    "ModelConfigError",
    "Partition",
    "PathFamily",
    "Portfolio",
    "ProjectedState",
    "ReplicationReport",
    "ReplicationRow",
    "RunConfig",
    "Scenario",
    "brownian_example",
    "brownian_motion_1d",
    "build_partition",
    "builtin_scenario",
    "call_payoff",
    "constant_hazard",
    "default_schedule",
    "dump_paths",
    "emit_convergence_csv",
    "emit_csv",
    "epsilon_for",
    "estimate_c1",
    "estimate_c2",
    "family_seed_sequence",
    "format_convergence_csv",
    "format_csv",
    "indicator_gap_bound_check",
    "linear_payoff",
    "load_model_config",
    "load_paths",
    "load_portfolio_config",
    "mesh_apply",
    "mesh_apply_batch",
    "mesh_denominator",
    "nested_mc_oracle",
    "netted_mesh_value",
    "netted_mesh_values",
    "parse_csv",
    "project",
    "put_payoff",
    "read_flat_config",
    "reference_c_delta_brownian",
    "replication_seed",
    "resolve_scenario",
    "run_convergence_study",
    "run_replication_study",
    "simulate_family",
    "simulate_family_pooled",
    "unit_hazard",
]
