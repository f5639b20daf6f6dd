"""Detection and removal of trailing zero-valued balances (TZB) in loan
performance panels.

A loan's recorded history sometimes runs on past its real closure with
zero or near-zero month-end balances. For a threshold ``b`` the *true end*
of a history is the start of its longest trailing run of balances ``<= b``;
everything after it is a TZB-period. The threshold is chosen per portfolio by
maximising a scaled objective that trades the balance left in discarded
tails against the balance just before the true end.
"""

__version__ = "0.1.0"

from .data_model import (  # noqa: E402
    IngestReport,
    LoanHistory,
    LoanRecord,
    Portfolio,
    TerminalStatus,
    ingest_csv,
    subsample_clustered,
    write_csv,
)
from .errors import *  # noqa: E402,F401,F403
from .impact import (  # noqa: E402
    DefaultSpell,
    Histogram,
    SpellOutcome,
    SurvivalCurve,
    align_curves,
    curve_mae,
    discrete_hazard,
    distribution_summary,
    extract_default_spells,
    km_estimator,
    workout_loss_rate,
)
from .optimiser import (  # noqa: E402
    DEFAULT_THRESHOLDS,
    OptimisationOutcome,
    SearchSpace,
    ThresholdEvaluation,
    assess_portfolio,
    calibrate_w,
    evaluate_threshold,
    optimal_region,
    optimise,
    portfolio_contamination,
    portfolio_means,
)
from .synthgen import GroundTruth, SynthParams, evaluate_recovery, generate  # noqa: E402
from .treatment import AgeImpact, Scope, TreatmentReport, age_impact, apply_policy  # noqa: E402
from .tzb_core import (  # noqa: E402
    TzbAssessment,
    TzbParams,
    assess,
    contamination_degree,
    find_tzb_start,
    loan_objective,
    mean_pre_tzb_balance,
    mean_tzb_balance,
    tzb_membership,
)
