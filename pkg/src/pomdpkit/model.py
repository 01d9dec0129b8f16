"""Finite discrete POMDP model and belief-state machinery.

Beliefs are plain 1-D numpy arrays over states (dense, nonnegative,
summing to one). All operations here are pure functions over immutable
inputs and are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROW_SUM_TOL = 1e-9


class ImpossibleObservationError(ValueError):
    """Raised when conditioning a belief on a zero-probability observation."""


class InvalidModelError(ValueError):
    """Raised when an operation requires a valid model but validation fails."""


@dataclass(frozen=True, eq=False)
class Pomdp:
    """Finite POMDP: transition/observation/reward tables plus discount and start belief.

    Parameters
    ----------
    transition : ndarray, shape (A, S, S)
        transition[a, s, s2] = p(s2 | s, a). Rows (a, s, :) sum to one.
    observation : ndarray, shape (A, S, O)
        observation[a, s2, o] = p(o | s2, a). Rows (a, s2, :) sum to one.
        Action-independent sensors are stored by repeating the table per action.
    reward : ndarray, shape (S, A)
        reward[s, a] = immediate reward r(s, a).
    discount : float
        Discount factor in [0, 1).
    initial_belief : ndarray, shape (S,)
        Start distribution over states.
    state_names, action_names, obs_names : tuple of str, optional
        Labels preserved for file round trips.

    Rows whose sums are within ``ROW_SUM_TOL`` of one are renormalized exactly
    once at construction; anything further off is left for ``validate`` to
    report.
    """

    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    discount: float
    initial_belief: np.ndarray
    state_names: tuple = None
    action_names: tuple = None
    obs_names: tuple = None
    from_cost: bool = False

    def __post_init__(self):
        t = np.ascontiguousarray(np.asarray(self.transition, dtype=np.float64))
        z = np.ascontiguousarray(np.asarray(self.observation, dtype=np.float64))
        r = np.ascontiguousarray(np.asarray(self.reward, dtype=np.float64))
        b0 = np.ascontiguousarray(np.asarray(self.initial_belief, dtype=np.float64))
        if t.ndim != 3 or t.shape[1] != t.shape[2]:
            raise ValueError(f"transition must have shape (A, S, S), got {t.shape}")
        a, s, _ = t.shape
        if z.ndim != 3 or z.shape[0] != a or z.shape[1] != s:
            raise ValueError(f"observation must have shape (A, S, O), got {z.shape}")
        if r.shape != (s, a):
            raise ValueError(f"reward must have shape (S, A) = {(s, a)}, got {r.shape}")
        if b0.shape != (s,):
            raise ValueError(f"initial_belief must have shape ({s},), got {b0.shape}")
        t = _renormalize_rows(t)
        z = _renormalize_rows(z)
        bsum = b0.sum()
        if abs(bsum - 1.0) <= ROW_SUM_TOL and bsum > 0:
            b0 = b0 / bsum
        for name in ("transition", "observation", "reward", "initial_belief"):
            arr = {"transition": t, "observation": z, "reward": r, "initial_belief": b0}[name]
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def num_states(self) -> int:
        return self.transition.shape[1]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[0]

    @property
    def num_observations(self) -> int:
        return self.observation.shape[2]


def _renormalize_rows(table):
    sums = table.sum(axis=-1, keepdims=True)
    near = np.abs(sums - 1.0) <= ROW_SUM_TOL
    scale = np.where(near & (sums > 0), sums, 1.0)
    return table / scale


@dataclass
class ValidationReport:
    """Outcome of validate(): ok flag plus human-readable violations."""

    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "model ok"
        return "\n".join(self.violations)


def validate(model: Pomdp) -> ValidationReport:
    """Check stochasticity, sign, and range invariants; never raises.

    Reports transition/observation rows not summing to one, negative entries,
    discount outside [0, 1), and start-belief violations, each with indices.
    """
    v = []
    t, z = model.transition, model.observation
    tsums = t.sum(axis=2)
    for a, s in zip(*np.where(np.abs(tsums - 1.0) > ROW_SUM_TOL)):
        v.append(f"transition row (s={s}, a={a}) sums to {tsums[a, s]!r}, expected 1")
    zsums = z.sum(axis=2)
    for a, s2 in zip(*np.where(np.abs(zsums - 1.0) > ROW_SUM_TOL)):
        v.append(f"observation row (a={a}, s'={s2}) sums to {zsums[a, s2]!r}, expected 1")
    if np.any(t < 0):
        a, s, s2 = [x[0] for x in np.where(t < 0)]
        v.append(f"negative transition probability at (a={a}, s={s}, s'={s2})")
    if np.any(t > 1 + ROW_SUM_TOL):
        a, s, s2 = [x[0] for x in np.where(t > 1 + ROW_SUM_TOL)]
        v.append(f"transition probability > 1 at (a={a}, s={s}, s'={s2})")
    if np.any(z < 0):
        a, s2, o = [x[0] for x in np.where(z < 0)]
        v.append(f"negative observation probability at (a={a}, s'={s2}, o={o})")
    if np.any(z > 1 + ROW_SUM_TOL):
        a, s2, o = [x[0] for x in np.where(z > 1 + ROW_SUM_TOL)]
        v.append(f"observation probability > 1 at (a={a}, s'={s2}, o={o})")
    if not (0.0 <= model.discount < 1.0):
        v.append(f"discount {model.discount!r} outside [0, 1)")
    b0 = model.initial_belief
    if np.any(b0 < 0):
        v.append(f"initial belief has negative entry at state {int(np.where(b0 < 0)[0][0])}")
    if abs(b0.sum() - 1.0) > ROW_SUM_TOL:
        v.append(f"initial belief sums to {b0.sum()!r}, expected 1")
    return ValidationReport(v)


def require_valid(model: Pomdp):
    """Raise InvalidModelError if the model fails validation."""
    report = validate(model)
    if not report.ok:
        raise InvalidModelError(str(report))


def check_belief(b, num_states: int) -> np.ndarray:
    """Validate a single belief vector and return it as a float64 array."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (num_states,):
        raise ValueError(f"belief must have shape ({num_states},), got {b.shape}")
    if np.any(b < 0):
        raise ValueError("belief has negative entries")
    if abs(b.sum() - 1.0) > ROW_SUM_TOL:
        raise ValueError(f"belief sums to {b.sum()!r}, expected 1")
    return b


def check_beliefs(beliefs, num_states: int) -> np.ndarray:
    """Validate an (n, S) array of beliefs (a single belief is promoted)."""
    arr = np.asarray(beliefs, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != num_states:
        raise ValueError(f"beliefs must have shape (n, {num_states}), got {arr.shape}")
    if np.any(arr < 0):
        raise ValueError("beliefs have negative entries")
    sums = arr.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise ValueError(f"belief {bad} sums to {sums[bad]!r}, expected 1")
    return arr


def observation_prob(model: Pomdp, b, a: int, o: int) -> float:
    """Probability of observing o after acting a from belief b.

    Marginalizes the one-step transition: sum over s' of
    p(o|s',a) * sum over s of p(s'|s,a) b(s).
    """
    _check_action(model, a)
    _check_obs(model, o)
    u = model.transition[a].T @ np.asarray(b, dtype=np.float64)
    return float(u @ model.observation[a, :, o])


def belief_update(model: Pomdp, b, a: int, o: int) -> np.ndarray:
    """Bayes update of belief b after taking action a and observing o.

    The result is renormalized to defend against floating-point drift over
    long trajectories. A zero-probability observation is a hard error rather
    than a uniform fallback; anything else would mask model bugs.
    """
    _check_action(model, a)
    _check_obs(model, o)
    u = model.transition[a].T @ np.asarray(b, dtype=np.float64)
    post = u * model.observation[a, :, o]
    norm = post.sum()
    if norm <= 0.0:
        raise ImpossibleObservationError(
            f"observation {o} has probability 0 after action {a} from this belief"
        )
    return post / norm


def belief_reward(model: Pomdp, b, a: int) -> float:
    """Expected immediate reward of action a under belief b."""
    _check_action(model, a)
    return float(np.asarray(b, dtype=np.float64) @ model.reward[:, a])


class _ActionTables:
    """Per-action views of the model tables for simulation/backup hot loops.

    Transition matrices switch to CSR when large and sparse; this only
    reorders floating-point sums and never changes any decision the solver
    or simulator makes.
    """

    def __init__(self, model: "Pomdp", sparse_threshold=0.25, min_sparse_states=64):
        from scipy import sparse

        self.discount = model.discount
        self.observation = model.observation
        self.reward = model.reward
        self.num_actions = model.num_actions
        self.transition = []
        for a in range(model.num_actions):
            t = model.transition[a]
            density = np.count_nonzero(t) / t.size
            if t.shape[0] >= min_sparse_states and density < sparse_threshold:
                self.transition.append(sparse.csr_matrix(t))
            else:
                self.transition.append(t)


def _check_action(model, a):
    if not 0 <= a < model.num_actions:
        raise IndexError(f"action {a} out of range [0, {model.num_actions})")


def _check_obs(model, o):
    if not 0 <= o < model.num_observations:
        raise IndexError(f"observation {o} out of range [0, {model.num_observations})")
