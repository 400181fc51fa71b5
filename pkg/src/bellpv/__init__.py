"""Monte Carlo engine and analytic toolkit for the probability of Bell
inequality violation under Haar-random measurement settings and imperfect
detection efficiency."""

from .bounds import (
    BoundMethod,
    BoundResult,
    pv_bound_asym,
    pv_bound_geometric_mc,
    pv_bound_quadrature,
    pv_bound_sym,
    triangle_area,
)
from .inequalities import (
    CgThreePartyExpression,
    ChshEtaTerms,
    cg3_eta_critical,
    chsh_eta_value,
    chsh_symmetric_critical,
    eval_cg3,
    eval_ic,
    iabc1,
    iabc2,
    ic_critical_search,
    rotated_ghz_quantum_terms,
)
from .localpolytope import (
    BellFunctional,
    FeasibilityResult,
    LPProblem,
    Verdict,
    brute_force_local,
    build_lp,
    check_local_model,
    extract_inequality,
)
from .montecarlo import (
    EstimateRecord,
    RunConfig,
    compare_models,
    critical_eta_estimate,
    estimate_pv,
    nested_sweep_m,
    relative_growth,
    sweep_eta,
    wilson_interval,
)
from .quantum import (
    Behavior,
    BlochVector,
    DetectionKind,
    DetectionModel,
    MeasurementFrame,
    PureState,
    Scenario,
    apply_three_outcome,
    behavior_for_model,
    binned_behavior,
    ghz3,
    ghz_rotated,
    ideal_behavior,
    parse_state,
    sample_direction,
    singlet,
    w3,
)

__version__ = "0.1.0"
