"""Dynamic convex risk measures on finite scenario trees."""

from .consistency import (
    ConsistencyReport,
    Property,
    Witness,
    check_acceptance,
    check_pasting_stability,
    check_penalty_recursion,
    check_recursive,
    check_rejection,
    check_riesz,
    check_smallest_sustainable,
    check_supermartingale_V,
    check_sustainable,
    check_weak,
    check_worst_case_martingale,
    entropic_gamma_criterion,
    riesz_decompose,
)
from .duality import (
    NOT_ATTAINED,
    DualReport,
    avar_penalty,
    composed_penalty,
    entropic_penalty,
    generic_penalty_oracle,
    minimal_penalty,
    one_step_penalty,
    robust_eval,
    worst_case_measure,
)
from .exceptions import RiskTreeError
from .filtration import ScenarioTree, build_tree, random_tree, uniform_tree
from .measure import (
    Measure,
    cond_expectation,
    density_process,
    equals_on,
    paste,
    relative_entropy,
    sample_measure,
)
from .risk import (
    AVaR,
    Composed,
    Entropic,
    RiskFamily,
    accepts,
    avar_eval,
    compose_recursive,
    entropic_eval,
    evaluate,
    risk_process,
)

__all__ = [
    "accepts",
    "AVaR",
    "avar_eval",
    "avar_penalty",
    "build_tree",
    "check_acceptance",
    "check_pasting_stability",
    "check_penalty_recursion",
    "check_recursive",
    "check_rejection",
    "check_riesz",
    "check_smallest_sustainable",
    "check_supermartingale_V",
    "check_sustainable",
    "check_weak",
    "check_worst_case_martingale",
    "compose_recursive",
    "Composed",
    "composed_penalty",
    "cond_expectation",
    "ConsistencyReport",
    "density_process",
    "DualReport",
    "Entropic",
    "entropic_eval",
    "entropic_gamma_criterion",
    "entropic_penalty",
    "equals_on",
    "evaluate",
    "generic_penalty_oracle",
    "Measure",
    "minimal_penalty",
    "NOT_ATTAINED",
    "one_step_penalty",
    "paste",
    "Property",
    "random_tree",
    "relative_entropy",
    "riesz_decompose",
    "risk_process",
    "RiskFamily",
    "RiskTreeError",
    "robust_eval",
    "sample_measure",
    "ScenarioTree",
    "uniform_tree",
    "Witness",
    "worst_case_measure",
]

__version__ = "0.1.0"
