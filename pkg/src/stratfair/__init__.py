"""Fairness-constrained Stackelberg equilibria for strategic learning.

A principal deploys a linear scoring rule; agents in two heterogeneous
groups learn the rule from peers, then exert effort that spills across
features along a causal graph.  This package computes the agents'
closed-form responses, the principal's optimal rule under a budget on the
groups' desirable-effort discrepancy, every applicable optimality-loss
bound, and budget-sweep experiments on synthetic or ingested tabular data.
"""

from .agents import (
    BestResponse,
    PeerDataset,
    agent_utility,
    altered_features,
    best_response,
    best_response_effort,
    peer_estimate_closed_form,
    peer_estimate_erm,
)
from .bounds import (
    BoundsReport,
    HoffmanResult,
    TightnessVerdict,
    bounds_report,
    ellipsoid_sw_bound,
    generic_loss_bounds,
    hoffman_constant,
    internal_ellipsoid_bounds,
    nonconvex_se_bounds,
    polyhedral_acc_bound,
    restriction_loss_bounds,
    restriction_tightness_check,
)
from .config import RunConfig, load_config, write_config
from .errors import (
    CapacityError,
    ConfigError,
    ContractError,
    FitError,
    IngestionError,
    InputError,
    NumericError,
    SplitError,
    StratfairError,
    StructuralError,
)
from .experiments import (
    ColumnSpec,
    DatasetSchema,
    SplitRule,
    SweepResult,
    SynthBundle,
    SynthKnobs,
    TabularDataset,
    beta_sweep,
    default_beta_grid,
    emit_csv,
    emit_plot,
    fit_ground_truth,
    ingest_dataset,
    split_groups,
    synth_generate,
)
from .fairness import (
    DiscrepancyMatrix,
    ExpressionPenalty,
    FairnessKind,
    FairnessSpec,
    PropertyCheck,
    PropertyReport,
    TabulatedPenalty,
    assess_geometry,
    asym_spec,
    check_fair_set_ellipsoid,
    check_feasible_ellipsoid,
    check_polyhedral_region,
    check_quadratic_core,
    custom_spec,
    delta_asym,
    delta_l1,
    delta_l2,
    discrepancy_matrix,
    is_beta_fair,
    l1_spec,
    l2_spec,
    polyhedron_rows,
    spec_for_scenario,
)
from .model import (
    CausalGraph,
    ContributionMatrix,
    GroupParams,
    GroupSampler,
    Policy,
    ProjectorResult,
    Scenario,
    ValidationReport,
    build_contribution_matrix,
    projector_from_samples,
    validate_scenario,
)
from .objectives import (
    MonteCarloEstimate,
    Objective,
    accuracy_value,
    monte_carlo_acc_diagnostic,
    monte_carlo_sw,
    sw_coefficient,
    sw_value,
)
from .solvers import (
    Ball,
    Ellipsoid,
    EquilibriumResult,
    Geometry,
    Halfspace,
    ProjectionResult,
    project_intersection_dykstra,
    project_onto_ball,
    project_onto_ellipsoid,
    project_onto_halfspace,
    solve_constrained,
    solve_ellipsoid_sw,
    solve_nonconvex_envelope,
    solve_nonconvex_multistart,
    solve_nonconvex_restricted,
    solve_sw_over_ball_and_ellipsoid,
    solve_unconstrained,
)

__version__ = "0.1.0"
