"""stlcert: certified two-norm disturbance bounds for closed-loop systems
under windowed temporal-logic tasks, with randomized and adversarial
validation."""

from .certifier import (
    CertConfig,
    CertificateReport,
    CertifierError,
    ClassKappaInf,
    EmptyRegionError,
    GridSampler,
    MissingAlphaError,
    certify,
    compute_capital_delta,
    compute_delta0,
    compute_delta1,
    gradient,
    margin_e,
    membership_C_psi,
)
from .dynamics import (
    Box,
    ClosedLoopSystem,
    DisturbanceSignal,
    IntegrationError,
    Trajectory,
    estimate_lipschitz,
    integrate,
    sample_disturbance,
    signal_seminorm,
)
from .models import (
    ModelBundle,
    get_model,
    linear_model,
    make_affine_predicate,
    make_ball_predicate,
    make_quadratic_predicate,
    segway_model,
    single_integrator_example,
)
from .spec_lang import (
    Always,
    And,
    ConjunctiveClause,
    Eventually,
    PredicateDef,
    SpecNode,
    SpecParseError,
    Until,
    decompose,
    format_spec,
    horizon,
    parse_spec,
    predicates_of,
    robustness,
    satisfies,
)
from .validation import TrialStats, adversarial_check, gronwall_check, run_trials

__version__ = "0.1.0"

__all__ = [
    "Always",
    "And",
    "Box",
    "CertConfig",
    "CertificateReport",
    "CertifierError",
    "ClassKappaInf",
    "ClosedLoopSystem",
    "ConjunctiveClause",
    "DisturbanceSignal",
    "EmptyRegionError",
    "Eventually",
    "GridSampler",
    "IntegrationError",
    "MissingAlphaError",
    "ModelBundle",
    "PredicateDef",
    "SpecNode",
    "SpecParseError",
    "Trajectory",
    "TrialStats",
    "Until",
    "adversarial_check",
    "certify",
    "compute_capital_delta",
    "compute_delta0",
    "compute_delta1",
    "decompose",
    "estimate_lipschitz",
    "format_spec",
    "get_model",
    "gradient",
    "gronwall_check",
    "horizon",
    "integrate",
    "linear_model",
    "make_affine_predicate",
    "make_ball_predicate",
    "make_quadratic_predicate",
    "margin_e",
    "membership_C_psi",
    "parse_spec",
    "predicates_of",
    "robustness",
    "run_trials",
    "sample_disturbance",
    "satisfies",
    "segway_model",
    "signal_seminorm",
    "single_integrator_example",
]
