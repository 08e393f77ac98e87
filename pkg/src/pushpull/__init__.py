"""Push-pull gradient methods over directed graphs.

A library plus CLI for distributed optimization where decision variables are
pulled through a row-stochastic graph and gradient trackers are pushed
through a column-stochastic one.  Includes the synchronous iteration with
its combine-order variants, the random-gossip counterpart, validators for
the structural assumptions, and numerically constructed convergence
certificates with stepsize bounds.
"""

from .digraph import (
    Digraph,
    GraphSequence,
    is_strongly_connected,
    leader_follower_split,
    random_strongly_connected,
    realize,
    root_set,
)
from .mixing import (
    MixingPair,
    NormKit,
    ValidationReport,
    build_column_stochastic,
    build_norm_kit,
    build_row_stochastic,
    perron_vectors,
    validate_assumptions,
    validate_matrices,
)
from .objectives import (
    ObjectiveSet,
    centralized_solve,
    huber_set,
    quadratic_set,
    random_quadratic_set,
)
from .synchronous import (
    DivergenceError,
    NetworkState,
    StepsizeProfile,
    TimeVaryingMixing,
    Variant,
    init,
    run,
    step,
    tracking_defect,
)
from .gossip import (
    GossipEvent,
    GossipMatrices,
    event_matrices,
    expected_matrices,
    gossip_all_step,
    gossip_step,
    run_gossip,
    run_gossip_ensemble,
    sample_event,
)
from .certify import (
    Certificate,
    CertificationError,
    GossipBounds,
    RateFit,
    build_gossip_kit,
    certified_gossip_bounds,
    certified_stepsize,
    fit_rate,
    gossip_certificate,
    synchronous_certificate,
)
from .trace import RunTrace

__version__ = "0.1.0"

__all__ = [
    "Certificate",
    "CertificationError",
    "Digraph",
    "DivergenceError",
    "GossipBounds",
    "GossipEvent",
    "GossipMatrices",
    "GraphSequence",
    "MixingPair",
    "NetworkState",
    "NormKit",
    "ObjectiveSet",
    "RateFit",
    "RunTrace",
    "StepsizeProfile",
    "TimeVaryingMixing",
    "ValidationReport",
    "Variant",
    "build_column_stochastic",
    "build_gossip_kit",
    "build_norm_kit",
    "build_row_stochastic",
    "centralized_solve",
    "certified_gossip_bounds",
    "certified_stepsize",
    "event_matrices",
    "expected_matrices",
    "fit_rate",
    "gossip_all_step",
    "gossip_certificate",
    "gossip_step",
    "huber_set",
    "init",
    "is_strongly_connected",
    "leader_follower_split",
    "perron_vectors",
    "quadratic_set",
    "random_quadratic_set",
    "random_strongly_connected",
    "realize",
    "root_set",
    "run",
    "run_gossip",
    "run_gossip_ensemble",
    "sample_event",
    "step",
    "synchronous_certificate",
    "tracking_defect",
    "validate_assumptions",
    "validate_matrices",
]
