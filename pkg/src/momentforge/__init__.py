"""momentforge: moment-matched ReLU pushforwards of the standard Gaussian.

Build the discrete moment-matching rule, lay it out as a sum of bumps, evolve
the heights along the moment-preserving flow, compile to a one-hidden-layer
ReLU network, lift to the hidden-direction generator, and verify the
statistical separation/indistinguishability properties at desk scale.
"""

from .bumps import (
    Bump,
    BumpInstance,
    bump_eval,
    bump_moment,
    bump_moment_closed,
    bump_moment_deps,
    bump_moment_dh,
    instance_eval,
    instance_pushforward_moment,
    layout,
)
from .distributions import (
    HiddenDirectionDist,
    PushforwardDist,
    generate_directions,
    sample_hidden,
    sample_marginal,
    sample_null,
)
from .errors import (
    ConditioningBreakdown,
    MomentForgeError,
    NumericGuardError,
    QuadratureError,
    SupportCollisionError,
    ValidationError,
)
from .flow import (
    EvolutionTrace,
    FlowSystem,
    SlopeTarget,
    build_system,
    evolve,
    flow_direction,
    moment_vector,
    vandermonde_sigma_check,
)
from .gaussian import (
    QuadratureRule,
    ReducedRule,
    double_fact_falling,
    gaussian_cdf,
    gaussian_density,
    gaussian_quantile,
    hermite_rule,
    p_poly,
    reduce_rule,
    shifted_truncated_moment,
    truncated_moment,
)
from .network import (
    LiftedNetwork,
    ReluNetwork1D,
    ReluUnit,
    SmoothedNetwork,
    compile_instance,
    evaluate,
    lift,
    smooth_inner,
)
from .sq import (
    MonomialQuery,
    NullTarget,
    PlantedTarget,
    ProjectionQuery,
    SqOracle,
    run_distinguisher,
    stat_query,
    vstat_query,
)
from .verify import (
    VerificationReport,
    VerifyConfig,
    chi_squared_vs_gaussian,
    distance_to_support,
    pairwise_correlation,
    tv_hidden_pair,
    verify_instance,
    w1_empirical,
)

__version__ = "0.1.0"
