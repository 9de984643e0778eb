"""Sensitivity bounds for parametrized programs and tracking certification
of continuous-time running algorithms."""

from .linalg import (
    RankDeficient,
    SingularA,
    SingularSchurComplement,
    SpectralExtremes,
    block_inverse,
    oblique_projectors,
    right_pseudoinverse,
    spectral_extremes,
)
from .nlp import (
    ActiveSetClassification,
    AssumptionAudit,
    DimensionMismatch,
    Infeasible,
    InfeasibleProblem,
    KKTTriple,
    MaxIterations,
    MissingCertificates,
    ParametrizedNLP,
    RegularityReport,
    audit_assumptions,
    check_regularity,
    classify_active_set,
    kkt_residual,
    solve_instance,
)
from .sensitivity import (
    AssumptionViolated,
    LipschitzBoundReport,
    MissingConstant,
    SensitivityBlocks,
    SolutionJacobians,
    UnknownCase,
    assemble_blocks,
    degenerate_lipschitz_bounds,
    enumerate_degenerate_bounds,
    fd_jacobian_oracle,
    global_lipschitz_bounds,
    lipschitz_sweep,
    local_lipschitz_bounds,
    solution_jacobian,
    special_case_bound,
)
from .flows import (
    EmptyPolyhedron,
    TimeVaryingScenario,
    TrackingCertificate,
    TrajectoryRecord,
    gradient_flow_step,
    instantaneous_optimizer,
    project_polyhedron,
    run_and_certify,
    set_variation_estimate,
    sweeping_flow_step,
)
from .scenarios import (
    ConfigError,
    ScenarioConfig,
    build_scenario,
    builtin_scenario,
    enumerated_omega,
    load_config,
    scenario_bound_report,
    scenario_to_nlp,
)

__version__ = "0.1.0"
