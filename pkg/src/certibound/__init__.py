"""Certified bounds and splitting estimates for P(g(X) > T).

The pipeline: refine a dyadic tree over [0,1]^d with Lipschitz-certified
labels (refine), turn the tree into deterministic probability bounds under
a measure model (distributions), then estimate those bounds with asymptotic
confidence intervals by multilevel splitting (splitting), sampling each
cube-conditioned law exactly or by independent Metropolis chains (mcmc).
Built-in benchmark problems and brute-force oracles live in problems.
"""

__version__ = "0.1.0"

from .errors import (
    CapabilityError,
    CertiboundError,
    ConfigError,
    DegenerateConditioningError,
    DegenerateDensityError,
    EvaluationError,
    IncompleteStatsError,
    InvalidAddressError,
    InvalidChainStateError,
    OracleConvergenceError,
    TreeStructureError,
)
from .tree import (
    MAX_DEPTH,
    DyadicCube,
    Label,
    LabeledTree,
    ancestors,
    ancestors_and_meet,
    classify,
    decode_cube,
    format_path,
    locate_child,
    meet,
    validate_path,
)
from .rng import TAG_ACCEPT, TAG_INIT, TAG_PROPOSAL, TAG_SAMPLE, derive_rng
from .distributions import (
    ConditionalLaw,
    DensityMeasure,
    MeasureModel,
    NumericMarginal,
    ProductMeasure,
    TruncatedNormalMarginal,
    UniformMarginal,
    UniformMeasure,
    density_view,
    measure_from_config,
    truncated_normal_product,
    uniform_on_cube,
)
from .refine import (
    BoundPair,
    RefinementResult,
    TraceRow,
    deterministic_bounds,
    refine_budgeted,
    refine_full,
    refine_with_trace,
    replay_eval_log,
    theoretical_eval_bound,
)
from .splitting import (
    EstimateReport,
    ExactConditionalSampler,
    SplittingEstimate,
    VertexSampleStats,
    asymptotic_variance,
    collect_vertex_stats,
    confidence_interval,
    estimate_tree,
    estimate_tree_exact,
    leaf_set_estimate,
    multinomial_covariance,
    plug_in_variance,
)
from .mcmc import (
    ChainBatch,
    MCMCConfig,
    MetropolisConditionalSampler,
    mcmc_tree_estimate,
    mh_step,
    run_chain_batch,
)
from .problems import (
    AdversarialInstance,
    GFunction,
    NaiveMCResult,
    ProblemSpec,
    adversarial_1d,
    adversarial_from_id,
    adversarial_high_d,
    boundary_halfspace,
    get_problem,
    halfspace_2d,
    list_problems,
    naive_mc,
    oracle_integrate,
    parse_problem_id,
    toy_1d,
)

__all__ = [name for name in dir() if not name.startswith("_")]
