"""POMDP planning toolkit: randomized point-based value iteration with an
exact oracle, a QMDP baseline, and a continuous-action extension."""

from .continuous import (
    ActionBounds,
    ActionCache,
    ContinuousDomain,
    ContinuousPerseusSolver,
    SamplingScheme,
    backup_prime,
    evaluate_policy_continuous,
    perseus_solve_continuous,
    sample_action_set,
    sample_bound,
)
from .domains import build_continuous_nav, build_tag, build_tiny, random_pomdp
from .exact import (
    ExactValueIteration,
    cross_sum,
    exact_value_iteration,
    monahan_backup,
    prune,
)
from .fileio import (
    ParseError,
    load_model,
    load_policy,
    parse_pomdp,
    read_policy,
    save_model,
    save_policy,
    serialize_pomdp,
    write_policy,
)
from .model import (
    ImpossibleObservationError,
    InvalidModelError,
    Pomdp,
    belief_reward,
    belief_update,
    check_belief,
    check_beliefs,
    observation_prob,
    validate,
)
from .perseus import (
    BeliefSet,
    PerseusSolver,
    SolverConfig,
    StageStats,
    backup_stage,
    collect_beliefs,
    deduplicate_vectors,
    solve,
)
from .qmdp import QmdpSolver, qmdp_value_function, solve_mdp
from .simulate import (
    EvalConfig,
    EvalReport,
    evaluate_policy,
    policy_changes,
    simulate_trajectory,
)
from .valuefn import (
    AlphaVector,
    ValueFunction,
    backup,
    best_vector,
    evaluate,
    evaluate_many,
    initial_value_function,
    policy_action,
    value_sum,
)

__version__ = "0.1.0"
