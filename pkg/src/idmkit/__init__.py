"""idmkit: illness-death multistate modeling for interval-censored cohorts.

The package fits a three-state (healthy, ill, dead) model to longitudinal
assessment data by penalized maximum likelihood with spline or Weibull
transition intensities, handles onset windows left open by death, and
reports prevalence, cumulative risk, and age-conditional probabilities
with resampling confidence bands. A simulation oracle and a naive
death-censoring comparator support estimator validation.
"""

__version__ = "0.1.0"

from .basis import KnotGrid, eval_ispline_basis, eval_mspline_basis, penalty_matrix
from .estimation import (
    FitConfig,
    FittedModel,
    PenaltyWeights,
    fit,
    hazard_ratios,
    penalized_loglik,
    select_smoothing,
)
from .hazards import HazardSpec, cumulative_intensity, default_knot_grid, intensity
from .likelihood import log_likelihood_contribution, total_log_likelihood
from .model import IllnessDeathModel, constant_hazard_model
from .pipeline import (
    CohortCensus,
    FlowchartReport,
    RulesConfig,
    apply_flowchart,
    assign_birth_cohort,
    build_records,
    derive_subject_record,
    status_census,
)
from .probabilities import (
    CurveTable,
    conditional_probability,
    conditional_table,
    confidence_bands,
    prevalence_curve,
    risk_curve,
    transition_probabilities,
)
from .records import ObservationPattern, SubjectRecord, classify_pattern
from .simulate import (
    SimulationConfig,
    default_scenario,
    evaluate_recovery,
    naive_risk_estimate,
    simulate_cohort,
)

__all__ = [
    "KnotGrid", "eval_mspline_basis", "eval_ispline_basis", "penalty_matrix",
    "HazardSpec", "intensity", "cumulative_intensity", "default_knot_grid",
    "IllnessDeathModel", "constant_hazard_model",
    "SubjectRecord", "ObservationPattern", "classify_pattern",
    "log_likelihood_contribution", "total_log_likelihood",
    "PenaltyWeights", "FitConfig", "FittedModel", "fit", "penalized_loglik",
    "select_smoothing", "hazard_ratios",
    "CurveTable", "transition_probabilities", "prevalence_curve", "risk_curve",
    "conditional_probability", "conditional_table", "confidence_bands",
    "RulesConfig", "FlowchartReport", "CohortCensus", "assign_birth_cohort",
    "apply_flowchart", "derive_subject_record", "build_records", "status_census",
    "SimulationConfig", "default_scenario", "simulate_cohort",
    "naive_risk_estimate", "evaluate_recovery",
]
