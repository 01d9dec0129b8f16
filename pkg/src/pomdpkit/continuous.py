"""Planning with very large or continuous action spaces.

The full maximization over actions inside the point backup is replaced by a
sampled max over a small candidate set drawn per backup: uniform draws
(exploration), Gaussian draws around the belief's best known action, and the
best known action itself. Models for sampled actions are generated on the
fly by a parameterized model family and cached for reuse.

An action is a 1-D float parameter vector ("action params"); a model
generator is a callable params -> (transition (S, S), observation (S, O),
reward (S,)) whose tables satisfy the usual stochasticity invariants and
are a deterministic function of the params.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .perseus import BeliefSet, SolverConfig, _solve_loop
from .simulate import EvalConfig, EvalReport, sample_index
from .valuefn import AlphaVector, ValueFunction, best_vector, gamma_ao_vector

CACHE_QUANTUM_DIGITS = 12


@dataclass(frozen=True)
class ActionBounds:
    """Per-parameter box; wrapping parameters (angles) are sampled modulo
    their range, the rest are clipped."""

    lower: np.ndarray
    upper: np.ndarray
    wrap: np.ndarray

    def __post_init__(self):
        for name in ("lower", "upper", "wrap"):
            arr = np.asarray(getattr(self, name))
            object.__setattr__(self, name, arr)

    @property
    def n_params(self) -> int:
        return self.lower.shape[0]


@dataclass(frozen=True)
class ContinuousDomain:
    """Fixed discrete states and observations, continuous parameterized actions."""

    generator: object
    bounds: ActionBounds
    num_states: int
    num_observations: int
    discount: float
    initial_belief: np.ndarray
    reward_floor: float
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        b0 = np.asarray(self.initial_belief, dtype=np.float64)
        object.__setattr__(self, "initial_belief", b0)


@dataclass
class SamplingScheme:
    """Candidate-set makeup: counts from the uniform and Gaussian proposals
    plus whether the belief's best known action is included."""

    n_uniform: int = 1
    n_gauss: int = 0
    include_old: bool = True
    gauss_std: np.ndarray = None

    def __post_init__(self):
        if self.n_uniform + self.n_gauss + int(self.include_old) < 1:
            raise ValueError("at least one candidate action is required")


class ActionCache:
    """LRU map from quantized action params to generated model tables.

    Quantization to 12 decimal digits makes the repeatedly re-tried "old"
    actions hit the cache across stages while tolerating text round trips.
    Hits return tables bitwise equal to regeneration, so the cache never
    changes results.
    """

    def __init__(self, generator, max_entries: int = 512):
        self.generator = generator
        self.max_entries = max_entries
        self._store = OrderedDict()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(params) -> tuple:
        return tuple(np.round(np.asarray(params, dtype=np.float64), CACHE_QUANTUM_DIGITS))

    def get(self, params):
        k = self.key(params)
        if k in self._store:
            self.hits += 1
            self._store.move_to_end(k)
            return self._store[k]
        self.misses += 1
        tables = self.generator(np.asarray(params, dtype=np.float64))
        self._store[k] = tables
        if len(self._store) > self.max_entries:
            self._store.popitem(last=False)
        return tables

    def __len__(self):
        return len(self._store)


def sample_bound(epsilon: float, delta: float) -> int:
    """Samples needed so the best uniform draw is in the top epsilon fraction
    of all actions with probability at least 1 - delta."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1)")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    return math.ceil(math.log(delta) / math.log(1.0 - epsilon))


def _fold_into_bounds(params, bounds: ActionBounds):
    span = bounds.upper - bounds.lower
    wrapped = np.mod(params - bounds.lower, span) + bounds.lower
    clipped = np.clip(params, bounds.lower, bounds.upper)
    return np.where(bounds.wrap, wrapped, clipped)


def sample_action_set(scheme: SamplingScheme, b, vf: ValueFunction, bounds: ActionBounds, rng):
    """Draw the candidate actions for one backup, in the fixed order
    uniform draws, Gaussian draws, old action."""
    old = None
    if scheme.n_gauss > 0 or scheme.include_old:
        old = np.asarray(best_vector(vf, b)[1].action, dtype=np.float64)
    actions = []
    for _ in range(scheme.n_uniform):
        actions.append(rng.uniform(bounds.lower, bounds.upper))
    if scheme.n_gauss > 0:
        std = np.asarray(
            scheme.gauss_std if scheme.gauss_std is not None else [np.pi / 5, 0.1]
        )
        for _ in range(scheme.n_gauss):
            draw = old + rng.normal(0.0, 1.0, size=bounds.n_params) * std
            actions.append(_fold_into_bounds(draw, bounds))
    if scheme.include_old:
        actions.append(old)
    return actions


def backup_prime(cache: ActionCache, discount: float, vf: ValueFunction, b, actions):
    """Sampled-max point backup: best one-step vector over the candidate
    actions, tagged with its params. Returns (vector, winning position);
    position ties go to the earlier candidate."""
    if not actions:
        raise ValueError("empty candidate action set")
    coeff = vf.coefficient_matrix
    b = np.asarray(b, dtype=np.float64)
    best_val = -np.inf
    best_g = None
    best_pos = 0
    for pos, params in enumerate(actions):
        t, z, r = cache.get(params)
        g = gamma_ao_vector(t, z, r, discount, coeff, b)
        val = float(b @ g)
        if val > best_val:
            best_val, best_g, best_pos = val, g, pos
    winner = np.asarray(actions[best_pos], dtype=np.float64)
    return AlphaVector(best_g, winner), best_pos


def collect_beliefs_continuous(domain: ContinuousDomain, config: SolverConfig, rng) -> BeliefSet:
    """Reachable-belief collection with uniformly random continuous actions.

    Models for the throwaway exploration actions are generated without
    caching (they essentially never repeat).
    """
    b0 = domain.initial_belief
    rows = [b0]
    state = sample_index(rng, b0)
    belief = b0
    steps = 0
    while len(rows) < config.belief_count:
        params = rng.uniform(domain.bounds.lower, domain.bounds.upper)
        t, z, _ = domain.generator(params)
        state = sample_index(rng, t[state])
        obs = sample_index(rng, z[state])
        post = (t.T @ belief) * z[:, obs]
        belief = post / post.sum()
        rows.append(belief)
        steps += 1
        if steps >= config.trajectory_horizon:
            state = sample_index(rng, b0)
            belief = b0
            steps = 0
    return BeliefSet(np.array(rows))


def _initial_value_function_continuous(domain: ContinuousDomain) -> ValueFunction:
    low = domain.reward_floor / (1.0 - domain.discount)
    tag = np.asarray(domain.bounds.lower, dtype=np.float64).copy()
    return ValueFunction([AlphaVector(np.full(domain.num_states, low), tag)])


def _provenance_tag(pos, scheme: SamplingScheme, n_actions):
    if pos < scheme.n_uniform:
        return "improved_uniform"
    if pos < scheme.n_uniform + scheme.n_gauss:
        return "improved_gauss"
    return "improved_old"


def perseus_solve_continuous(
    domain: ContinuousDomain,
    scheme: SamplingScheme,
    config: SolverConfig,
    rng=None,
    beliefs: BeliefSet = None,
    cache: ActionCache = None,
    action_provider=None,
):
    """Randomized backup stages with the sampled-max backup substituted.

    The no-decrease guarantee over the belief set still holds: when no
    sampled action improves a belief, its previous maximizing vector is
    copied. Stage stats carry the per-stage relative frequency of which
    proposal the improving action came from ("improved_uniform" /
    "improved_gauss" / "improved_old" / "not_improved").

    ``action_provider(index, belief, vf, rng) -> list of params`` overrides
    the sampling scheme (used to embed finite action sets).
    """
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    if beliefs is None:
        beliefs = collect_beliefs_continuous(domain, config, rng)
    if cache is None:
        cache = ActionCache(domain.generator)

    def make_backup(vf_n):
        def do_backup(i, b, step_rng):
            if action_provider is not None:
                actions = action_provider(i, b, vf_n, step_rng)
                alpha, _pos = backup_prime(cache, domain.discount, vf_n, b, actions)
                return alpha, "improved_uniform"
            actions = sample_action_set(scheme, b, vf_n, domain.bounds, step_rng)
            alpha, pos = backup_prime(cache, domain.discount, vf_n, b, actions)
            return alpha, _provenance_tag(pos, scheme, len(actions))

        return do_backup

    vf = _initial_value_function_continuous(domain)
    return _solve_loop(vf, make_backup, beliefs, config, rng)


def _continuous_policy_fn(vf: ValueFunction):
    coeff = vf.coefficient_matrix
    actions = [np.asarray(v.action, dtype=np.float64) for v in vf.vectors]
    return lambda b, rng: actions[int(np.argmax(coeff @ b))]


def _random_params_policy(bounds: ActionBounds):
    return lambda b, rng: rng.uniform(bounds.lower, bounds.upper)


def evaluate_policy_continuous(
    domain: ContinuousDomain, policy, config: EvalConfig, cache: ActionCache = None
) -> EvalReport:
    """Monte-Carlo evaluation in the generated-model dynamics.

    ``policy`` is a ValueFunction with params-tagged vectors, the string
    "random" for the uniform baseline, or a callable (belief, rng) -> params.
    """
    if isinstance(policy, ValueFunction):
        fn = _continuous_policy_fn(policy)
    elif policy == "random":
        fn = _random_params_policy(domain.bounds)
    elif callable(policy):
        fn = policy
    else:
        raise TypeError(f"unsupported policy type {type(policy)!r}")
    if cache is None:
        cache = ActionCache(domain.generator)
    returns = []
    steps_taken = []
    for i in range(config.n_starts):
        start_rng = np.random.default_rng([config.rng_seed, i])
        start_state = sample_index(start_rng, domain.initial_belief)
        for j in range(config.n_trajectories_per_start):
            rng = np.random.default_rng([config.rng_seed, i, j])
            ret, steps = _rollout_continuous(
                domain, cache, fn, start_state, rng, config.max_steps
            )
            returns.append(ret)
            steps_taken.append(steps)
    returns = np.asarray(returns)
    return EvalReport(
        mean_return=float(returns.mean()),
        std_return=float(returns.std()),
        n_trajectories=len(returns),
        mean_steps=float(np.mean(steps_taken)),
    )


def _rollout_continuous(domain, cache, fn, start_state, rng, max_steps):
    belief = domain.initial_belief
    state = int(start_state)
    total = 0.0
    disc = 1.0
    steps = 0
    for _ in range(max_steps):
        params = fn(belief, rng)
        t, z, r = cache.get(params)
        total += disc * r[state]
        state = sample_index(rng, t[state])
        obs = sample_index(rng, z[state])
        post = (t.T @ belief) * z[:, obs]
        belief = post / post.sum()
        disc *= domain.discount
        steps += 1
    return total, steps


class ContinuousPerseusSolver(BaseEstimator):
    """Sampled-max randomized planner for continuous action spaces.

    fit(domain) collects beliefs and runs backup stages; predict(beliefs)
    returns the greedy action params per belief.
    """

    def __init__(
        self,
        n_uniform=1,
        n_gauss=0,
        include_old=True,
        gauss_std=None,
        belief_count=1000,
        trajectory_horizon=50,
        max_stages=200,
        epsilon=1e-4,
        stable_stages=5,
        criterion="any",
        seed=0,
    ):
        self.n_uniform = n_uniform
        self.n_gauss = n_gauss
        self.include_old = include_old
        self.gauss_std = gauss_std
        self.belief_count = belief_count
        self.trajectory_horizon = trajectory_horizon
        self.max_stages = max_stages
        self.epsilon = epsilon
        self.stable_stages = stable_stages
        self.criterion = criterion
        self.seed = seed

    def fit(self, domain: ContinuousDomain, beliefs: BeliefSet = None):
        scheme = SamplingScheme(
            n_uniform=self.n_uniform,
            n_gauss=self.n_gauss,
            include_old=self.include_old,
            gauss_std=self.gauss_std,
        )
        config = SolverConfig(
            belief_count=self.belief_count,
            trajectory_horizon=self.trajectory_horizon,
            max_stages=self.max_stages,
            epsilon=self.epsilon,
            stable_stages=self.stable_stages,
            criterion=self.criterion,
            rng_seed=self.seed,
        )
        rng = np.random.default_rng(self.seed)
        if beliefs is None:
            beliefs = collect_beliefs_continuous(domain, config, rng)
        self.value_function_, self.stage_stats_ = perseus_solve_continuous(
            domain, scheme, config, rng, beliefs=beliefs
        )
        self.belief_set_ = beliefs
        self.n_states_ = domain.num_states
        return self

    def predict(self, beliefs):
        if not hasattr(self, "value_function_"):
            raise NotFittedError("call fit(domain) before predict")
        from .model import check_beliefs

        arr = check_beliefs(beliefs, self.n_states_)
        idx = np.argmax(arr @ self.value_function_.coefficient_matrix.T, axis=1)
        return np.stack([np.asarray(self.value_function_.vectors[i].action) for i in idx])
