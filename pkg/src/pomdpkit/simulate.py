"""Monte-Carlo policy evaluation: rollouts of discounted return.

Trajectories keep the true hidden state and the agent's belief side by side:
the policy only ever sees the belief. Each trajectory owns an rng derived
deterministically from (run seed, start index, trajectory index), so reports
are reproducible and trajectories could run concurrently.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .model import Pomdp, _ActionTables, require_valid
from .valuefn import ValueFunction


def sample_index(rng, probs) -> int:
    """Draw an index from a discrete distribution using one uniform variate."""
    c = np.cumsum(probs)
    u = rng.random() * c[-1]
    return min(int(np.searchsorted(c, u, side="right")), len(c) - 1)


@dataclass
class EvalConfig:
    """Evaluation protocol: start positions x rollouts per start."""

    n_starts: int = 100
    n_trajectories_per_start: int = 10
    max_steps: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.n_starts, self.n_trajectories_per_start, self.max_steps) < 1:
            raise ValueError("all evaluation counts must be positive")


@dataclass
class EvalReport:
    """Aggregate over all simulated trajectories."""

    mean_return: float
    std_return: float
    n_trajectories: int
    mean_steps: float

    def to_dict(self):
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def csv_header() -> str:
        return "mean_return,std_return,n_trajectories,mean_steps"

    def to_csv_row(self) -> str:
        return (
            f"{self.mean_return:.17g},{self.std_return:.17g},"
            f"{self.n_trajectories},{self.mean_steps:.17g}"
        )


def _policy_fn(policy, num_states, num_actions):
    """Normalize the accepted policy forms to a callable (belief, rng) -> action."""
    if isinstance(policy, ValueFunction):
        coeff = policy.coefficient_matrix
        actions = [v.action for v in policy.vectors]
        if coeff.shape[1] != num_states:
            raise ValueError(
                f"policy has {coeff.shape[1]} states, model has {num_states}"
            )
        return lambda b, rng: actions[int(np.argmax(coeff @ b))]
    if isinstance(policy, np.ndarray):
        if policy.shape != (num_states, num_actions):
            raise ValueError(
                f"Q-table must have shape {(num_states, num_actions)}, got {policy.shape}"
            )
        q = policy
        return lambda b, rng: int(np.argmax(b @ q))
    if policy == "random":
        return lambda b, rng: int(rng.integers(num_actions))
    if callable(policy):
        return policy
    raise TypeError(f"unsupported policy type {type(policy)!r}")


def simulate_trajectory(
    model: Pomdp,
    policy,
    start_state: int,
    rng,
    max_steps: int = 100,
    absorbing=None,
    start_belief=None,
):
    """Roll out one trajectory; returns (discounted return, steps taken).

    The belief starts at the model's initial belief (the agent does not know
    the sampled start state). The rollout stops after max_steps or as soon as
    the hidden state enters the optional absorbing set.
    """
    tables = _ActionTables(model)
    fn = _policy_fn(policy, model.num_states, model.num_actions)
    return _rollout(model, tables, fn, start_state, rng, max_steps, absorbing, start_belief)


def _rollout(model, tables, fn, start_state, rng, max_steps, absorbing, start_belief):
    belief = model.initial_belief if start_belief is None else np.asarray(start_belief)
    state = int(start_state)
    total = 0.0
    disc = 1.0
    steps = 0
    for _ in range(max_steps):
        if absorbing is not None and state in absorbing:
            break
        a = fn(belief, rng)
        total += disc * model.reward[state, a]
        state = sample_index(rng, model.transition[a, state])
        obs = sample_index(rng, model.observation[a, state])
        post = (tables.transition[a].T @ belief) * model.observation[a, :, obs]
        belief = post / post.sum()
        disc *= model.discount
        steps += 1
    return total, steps


def evaluate_policy(model: Pomdp, policy, config: EvalConfig, absorbing=None) -> EvalReport:
    """Estimate expected discounted return from the initial belief.

    Start states are sampled from the initial belief (one per start index);
    each start is rolled out n_trajectories_per_start times.
    """
    require_valid(model)
    tables = _ActionTables(model)
    fn = _policy_fn(policy, model.num_states, model.num_actions)
    returns = []
    steps_taken = []
    for i in range(config.n_starts):
        start_rng = np.random.default_rng([config.rng_seed, i])
        start_state = sample_index(start_rng, model.initial_belief)
        for j in range(config.n_trajectories_per_start):
            rng = np.random.default_rng([config.rng_seed, i, j])
            ret, steps = _rollout(
                model, tables, fn, start_state, rng, config.max_steps, absorbing, None
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


def policy_changes(prev: ValueFunction, next_vf: ValueFunction, beliefs) -> int:
    """Count beliefs whose greedy action differs between two value functions."""
    matrix = getattr(beliefs, "matrix", None)
    arr = matrix if matrix is not None else np.asarray(beliefs, dtype=np.float64)
    if arr.size == 0:
        return 0
    idx_prev = np.argmax(arr @ prev.coefficient_matrix.T, axis=1)
    idx_next = np.argmax(arr @ next_vf.coefficient_matrix.T, axis=1)
    from .perseus import _count_policy_changes

    return _count_policy_changes(prev, idx_prev, next_vf, idx_next)
