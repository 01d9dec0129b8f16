"""Randomized point-based value iteration over a fixed reachable-belief set.

The solver first collects beliefs by letting the agent act uniformly at
random in the model, then runs backup stages. Each stage improves (or at
least preserves) the value of every collected belief while backing up only a
randomly sampled subset of them, which keeps the vector count far below the
belief count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .model import Pomdp, _ActionTables, check_beliefs, require_valid
from .simulate import sample_index
from .valuefn import (
    AlphaVector,
    ValueFunction,
    evaluate_many,
    gamma_ao_vector,
    initial_value_function,
)

# A backup of the sampled belief's own maximizing vector reproduces its value
# only up to roundoff; a strict >= comparison could then livelock the
# improvement bookkeeping.
IMPROVE_SLACK = 1e-12


class BeliefSet:
    """Ordered multiset of beliefs with per-belief value bookkeeping.

    ``values`` and ``best_index`` cache the current stage's value and
    maximizing-vector index for every belief; the solver refreshes them after
    each stage. Element 0 is the model's initial belief for collected sets.
    """

    def __init__(self, beliefs):
        matrix = np.asarray(beliefs, dtype=np.float64)
        if matrix.ndim == 1:
            matrix = matrix[None, :]
        self.matrix = matrix
        self.values = None
        self.best_index = None

    def __len__(self):
        return self.matrix.shape[0]

    def __getitem__(self, i):
        return self.matrix[i]


@dataclass
class SolverConfig:
    """Run parameters for the randomized solver.

    criterion selects when to stop: "value_diff" (max per-belief improvement
    <= epsilon), "policy_change" (no belief changed its greedy action for
    stable_stages consecutive stages), "max_stages" (run all stages), or
    "any" (first of the three).
    """

    belief_count: int = 1000
    trajectory_horizon: int = 50
    max_stages: int = 200
    epsilon: float = 1e-4
    stable_stages: int = 5
    criterion: str = "any"
    wallclock_limit: float = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.belief_count < 1:
            raise ValueError("belief_count must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.criterion not in ("any", "value_diff", "policy_change", "max_stages"):
            raise ValueError(f"unknown convergence criterion {self.criterion!r}")


@dataclass
class StageStats:
    """Per-stage progress record."""

    stage: int
    n_vectors: int
    value_sum: float
    policy_changes: int
    backups_attempted: int
    backups_improved: int
    elapsed_s: float
    provenance: dict = field(default=None)


def _backup_tables(tables: _ActionTables, coeff: np.ndarray, b: np.ndarray):
    """Point backup against cached tables; returns (coefficients, action)."""
    best_val = -np.inf
    best_g = None
    best_a = 0
    for a in range(tables.num_actions):
        g = gamma_ao_vector(
            tables.transition[a],
            tables.observation[a],
            tables.reward[:, a],
            tables.discount,
            coeff,
            b,
        )
        val = float(b @ g)
        if val > best_val:
            best_val, best_g, best_a = val, g, a
    return best_g, best_a


def collect_beliefs(model: Pomdp, config: SolverConfig, rng) -> BeliefSet:
    """Gather reachable beliefs by uniformly random interaction.

    Simulates trajectories from states drawn from the initial belief, taking
    uniformly random actions and filtering the belief with each sampled
    observation; restarts every trajectory_horizon steps. The initial belief
    is always element 0 and duplicates are kept.
    """
    require_valid(model)
    tables = _ActionTables(model)
    b0 = model.initial_belief
    rows = [b0]
    state = sample_index(rng, b0)
    belief = b0
    steps = 0
    while len(rows) < config.belief_count:
        a = int(rng.integers(model.num_actions))
        state = sample_index(rng, model.transition[a, state])
        obs = sample_index(rng, model.observation[a, state])
        u = tables.transition[a].T @ belief
        post = u * model.observation[a, :, obs]
        norm = post.sum()
        if norm <= 0.0:
            raise AssertionError("sampled observation has zero likelihood")
        belief = post / norm
        rows.append(belief)
        steps += 1
        if steps >= config.trajectory_horizon:
            state = sample_index(rng, b0)
            belief = b0
            steps = 0
    return BeliefSet(np.array(rows))


def _run_stage(b_matrix, val_n, bestidx_n, vf_n, rng, do_backup):
    """One improve-all backup stage over the belief matrix.

    do_backup(index, belief, rng) -> (AlphaVector, provenance-key). The stage
    samples a not-yet-improved belief uniformly, backs it up, keeps the new
    vector if it does not lower that belief's value and otherwise copies the
    belief's previous maximizing vector, until every belief is improved. The
    sampled belief is always marked improved (the copy guarantees this up to
    roundoff), which bounds the stage at len(B) backups.

    Each added vector is scored only against still-unimproved beliefs; an
    improved belief stays improved because the new function only grows, so
    this matches recomputing the unimproved set from scratch.
    """
    n = b_matrix.shape[0]
    new_vectors = []
    remaining = np.arange(n)
    attempted = 0
    n_improved = 0
    provenance = {}
    while remaining.size:
        pick = int(remaining[rng.integers(remaining.size)])
        b = b_matrix[pick]
        alpha, tag = do_backup(pick, b, rng)
        attempted += 1
        if float(b @ alpha.coefficients) >= val_n[pick] - IMPROVE_SLACK:
            n_improved += 1
            provenance[tag] = provenance.get(tag, 0) + 1
        else:
            alpha = vf_n.vectors[bestidx_n[pick]]
            provenance["not_improved"] = provenance.get("not_improved", 0) + 1
        new_vectors.append(alpha)
        scores = b_matrix[remaining] @ alpha.coefficients
        still = scores < val_n[remaining]
        still[remaining == pick] = False
        remaining = remaining[still]
    return new_vectors, attempted, n_improved, provenance


def backup_stage(model: Pomdp, vf: ValueFunction, beliefs: BeliefSet, rng):
    """Single backup stage: returns (new ValueFunction, StageStats).

    The returned function upper-bounds vf over the belief set and has at most
    len(beliefs) vectors. Belief-value caches on the set are refreshed.
    """
    tables = _ActionTables(model)
    b_matrix = beliefs.matrix
    val_n = beliefs.values
    bestidx_n = beliefs.best_index
    if val_n is None:
        val_n = evaluate_many(vf, b_matrix)
    if bestidx_n is None:
        bestidx_n = np.argmax(b_matrix @ vf.coefficient_matrix.T, axis=1)
    coeff = vf.coefficient_matrix

    def do_backup(_i, b, _rng):
        g, a = _backup_tables(tables, coeff, b)
        return AlphaVector(g, a), "improved"

    t0 = time.perf_counter()
    vectors, attempted, n_improved, _ = _run_stage(
        b_matrix, val_n, bestidx_n, vf, rng, do_backup
    )
    vf_next, val_new, bestidx_new = _finalize_stage(b_matrix, vectors)
    changes = _count_policy_changes(vf, bestidx_n, vf_next, bestidx_new)
    beliefs.values = val_new
    beliefs.best_index = bestidx_new
    stats = StageStats(
        stage=0,
        n_vectors=len(vf_next),
        value_sum=float(val_new.sum()),
        policy_changes=changes,
        backups_attempted=attempted,
        backups_improved=n_improved,
        elapsed_s=time.perf_counter() - t0,
    )
    return vf_next, stats


def _finalize_stage(b_matrix, vectors):
    """Deduplicate the stage output and refresh per-belief caches in one
    matrix product."""
    unique, _ = _dedup_with_map(vectors)
    vf_next = ValueFunction(unique)
    scores = b_matrix @ vf_next.coefficient_matrix.T
    bestidx = np.argmax(scores, axis=1)
    values = scores[np.arange(scores.shape[0]), bestidx]
    return vf_next, values, bestidx


def _action_key(action):
    if isinstance(action, np.ndarray):
        return action.tobytes()
    return action


def _dedup_with_map(vectors):
    """Drop exact duplicate (coefficients, action) pairs, keeping first seen.

    Returns the unique list and an index map from old positions to new ones.
    """
    seen = {}
    unique = []
    index_map = np.empty(len(vectors), dtype=np.intp)
    for i, v in enumerate(vectors):
        key = (_action_key(v.action), v.coefficients.tobytes())
        if key in seen:
            index_map[i] = seen[key]
        else:
            seen[key] = len(unique)
            index_map[i] = len(unique)
            unique.append(v)
    return unique, index_map


def deduplicate_vectors(vf: ValueFunction) -> ValueFunction:
    """Remove exact-duplicate vectors; evaluation is unchanged everywhere."""
    unique, _ = _dedup_with_map(list(vf.vectors))
    return ValueFunction(unique)


def _count_policy_changes(prev_vf, prev_idx, next_vf, next_idx):
    codes = {}

    def encode(vf, idx):
        action_code = [codes.setdefault(_action_key(v.action), len(codes)) for v in vf.vectors]
        return np.asarray(action_code, dtype=np.intp)[idx]

    return int(np.count_nonzero(encode(prev_vf, prev_idx) != encode(next_vf, next_idx)))


def solve(model: Pomdp, config: SolverConfig, rng=None, beliefs: BeliefSet = None):
    """Run randomized backup stages until the configured criterion fires.

    Returns (ValueFunction, list of StageStats). When ``beliefs`` is given it
    is used as-is; otherwise a fresh set is collected with the same rng.
    """
    require_valid(model)
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    if beliefs is None:
        beliefs = collect_beliefs(model, config, rng)
    tables = _ActionTables(model)

    def make_backup(vf_n):
        coeff = vf_n.coefficient_matrix

        def do_backup(_i, b, _rng):
            g, a = _backup_tables(tables, coeff, b)
            return AlphaVector(g, a), "improved"

        return do_backup

    vf = initial_value_function(model)
    return _solve_loop(vf, make_backup, beliefs, config, rng)


def _solve_loop(vf, make_backup, beliefs, config, rng):
    """Stage loop shared by the discrete and continuous solvers."""
    b_matrix = beliefs.matrix
    val = evaluate_many(vf, b_matrix)
    bestidx = np.zeros(len(beliefs), dtype=np.intp)
    beliefs.values = val
    beliefs.best_index = bestidx
    stats_list = []
    stable_run = 0
    t_start = time.perf_counter()
    for stage in range(1, config.max_stages + 1):
        t0 = time.perf_counter()
        do_backup = make_backup(vf)
        vectors, attempted, n_improved, prov = _run_stage(
            b_matrix, val, bestidx, vf, rng, do_backup
        )
        vf_next, val_new, bestidx_new = _finalize_stage(b_matrix, vectors)
        changes = _count_policy_changes(vf, bestidx, vf_next, bestidx_new)
        value_diff = float(np.max(val_new - val))
        provenance = _normalize_provenance(prov, attempted)
        stats_list.append(
            StageStats(
                stage=stage,
                n_vectors=len(vf_next),
                value_sum=float(val_new.sum()),
                policy_changes=changes,
                backups_attempted=attempted,
                backups_improved=n_improved,
                elapsed_s=time.perf_counter() - t0,
                provenance=provenance,
            )
        )
        vf, val, bestidx = vf_next, val_new, bestidx_new
        beliefs.values = val
        beliefs.best_index = bestidx
        stable_run = stable_run + 1 if changes == 0 else 0
        if _converged(config, value_diff, stable_run):
            break
        if config.wallclock_limit and time.perf_counter() - t_start > config.wallclock_limit:
            break
    return vf, stats_list


def _normalize_provenance(prov, attempted):
    if attempted == 0 or not any(k.startswith("improved_") for k in prov):
        return None
    keys = ("improved_uniform", "improved_gauss", "improved_old", "not_improved")
    return {k: prov.get(k, 0) / attempted for k in keys}


def _converged(config, value_diff, stable_run):
    by_value = value_diff <= config.epsilon
    by_policy = stable_run >= config.stable_stages
    if config.criterion == "any":
        return by_value or by_policy
    if config.criterion == "value_diff":
        return by_value
    if config.criterion == "policy_change":
        return by_policy
    return False


class PerseusSolver(BaseEstimator):
    """Randomized point-based value-iteration planner with an estimator API.

    fit(model) collects a reachable-belief set and runs backup stages;
    predict(beliefs) returns the greedy action per belief under the learned
    value function.

    Parameters mirror SolverConfig; ``seed`` drives all randomness.
    """

    def __init__(
        self,
        belief_count=1000,
        trajectory_horizon=50,
        max_stages=200,
        epsilon=1e-4,
        stable_stages=5,
        criterion="any",
        wallclock_limit=None,
        seed=0,
    ):
        self.belief_count = belief_count
        self.trajectory_horizon = trajectory_horizon
        self.max_stages = max_stages
        self.epsilon = epsilon
        self.stable_stages = stable_stages
        self.criterion = criterion
        self.wallclock_limit = wallclock_limit
        self.seed = seed

    def _config(self):
        return SolverConfig(
            belief_count=self.belief_count,
            trajectory_horizon=self.trajectory_horizon,
            max_stages=self.max_stages,
            epsilon=self.epsilon,
            stable_stages=self.stable_stages,
            criterion=self.criterion,
            wallclock_limit=self.wallclock_limit,
            rng_seed=self.seed,
        )

    def fit(self, model: Pomdp, beliefs: BeliefSet = None):
        config = self._config()
        rng = np.random.default_rng(self.seed)
        if beliefs is None:
            beliefs = collect_beliefs(model, config, rng)
        self.value_function_, self.stage_stats_ = solve(model, config, rng, beliefs=beliefs)
        self.belief_set_ = beliefs
        self.n_states_ = model.num_states
        return self

    def _check_fitted(self):
        if not hasattr(self, "value_function_"):
            raise NotFittedError("call fit(model) before predict/value")

    def predict(self, beliefs):
        """Greedy action index for each belief row."""
        self._check_fitted()
        arr = check_beliefs(beliefs, self.n_states_)
        idx = np.argmax(arr @ self.value_function_.coefficient_matrix.T, axis=1)
        return np.array([self.value_function_.vectors[i].action for i in idx])

    def value(self, beliefs):
        """Learned value at each belief row."""
        self._check_fitted()
        arr = check_beliefs(beliefs, self.n_states_)
        return evaluate_many(self.value_function_, arr)
