"""Piecewise-linear convex value functions over the belief simplex.

A value function is a finite set of alpha vectors, each an |S|-dimensional
hyperplane tagged with the action that is optimal in its maximizing region.
Evaluation takes the max of inner products; the point-based backup operator
computes the optimal next-stage vector for one belief.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Pomdp


@dataclass(frozen=True, eq=False)
class AlphaVector:
    """Hyperplane over the simplex plus its associated action.

    ``action`` is an int for finite action sets; continuous-action planners
    tag vectors with a 1-D parameter array instead.
    """

    coefficients: np.ndarray
    action: object

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64)
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    def same_action(self, other: "AlphaVector") -> bool:
        if isinstance(self.action, np.ndarray) or isinstance(other.action, np.ndarray):
            return np.array_equal(np.asarray(self.action), np.asarray(other.action))
        return self.action == other.action


class ValueFunction:
    """Ordered set of alpha vectors; evaluation is max of inner products."""

    def __init__(self, vectors):
        self.vectors = tuple(vectors)
        self._matrix = None

    def __len__(self):
        return len(self.vectors)

    def __iter__(self):
        return iter(self.vectors)

    def __getitem__(self, i):
        return self.vectors[i]

    @property
    def coefficient_matrix(self) -> np.ndarray:
        """All coefficient rows stacked as an (n_vectors, S) array (cached)."""
        if self._matrix is None:
            if not self.vectors:
                raise ValueError("value function is empty")
            self._matrix = np.array([v.coefficients for v in self.vectors])
        return self._matrix

    def actions(self):
        return [v.action for v in self.vectors]


def evaluate(vf: ValueFunction, b) -> float:
    """Value of belief b: max over vectors of their inner product with b."""
    _check_dims(vf, b)
    return float(np.max(vf.coefficient_matrix @ np.asarray(b, dtype=np.float64)))


def evaluate_many(vf: ValueFunction, beliefs) -> np.ndarray:
    """Values at an (n, S) stack of beliefs in one matrix product."""
    arr = np.asarray(beliefs, dtype=np.float64)
    if arr.size == 0:
        return np.zeros(0)
    return np.max(arr @ vf.coefficient_matrix.T, axis=1)


def best_vector(vf: ValueFunction, b):
    """Maximizing (index, vector) at b; ties go to the lowest list index."""
    _check_dims(vf, b)
    scores = vf.coefficient_matrix @ np.asarray(b, dtype=np.float64)
    i = int(np.argmax(scores))
    return i, vf.vectors[i]


def policy_action(vf: ValueFunction, b):
    """Action attached to the maximizing vector at b."""
    return best_vector(vf, b)[1].action


def initial_value_function(model: Pomdp) -> ValueFunction:
    """Single-vector lower bound: every component at (min reward) / (1 - discount).

    That constant is the worst possible discounted return, so the start
    estimate sits below the optimum everywhere. The attached action is
    arbitrary (0).
    """
    if not model.discount < 1.0:
        raise ValueError("discount must be < 1")
    low = float(model.reward.min()) / (1.0 - model.discount)
    return ValueFunction([AlphaVector(np.full(model.num_states, low), 0)])


def gamma_ao_vector(t_a, z_a, r_a, discount, coeff_matrix, b):
    """Best one-step vector for one action given the current vector set.

    For each observation, picks the current vector maximizing the
    back-projected score at b, then assembles
    r_a + discount * sum_o T_a (Z_a[:, o] * alpha_best(o)).
    ``t_a`` may be a scipy.sparse matrix; everything else is dense.
    """
    u = t_a.T @ b                                  # (S,)  predicted state weight
    weighted = u[:, None] * z_a                    # (S, O)
    scores = coeff_matrix @ weighted               # (n_vectors, O)
    best = np.argmax(scores, axis=0)               # lowest index wins ties
    chosen = coeff_matrix[best]                    # (O, S)
    folded = (z_a * chosen.T).sum(axis=1)          # (S,)
    return r_a + discount * (t_a @ folded)


def backup(model: Pomdp, vf: ValueFunction, b) -> AlphaVector:
    """One-step lookahead improvement of vf at belief b.

    Returns the vector maximizing b . g_a over actions, tagged with the
    maximizing action. Action ties break toward the lowest action index and
    inner ties toward the lowest vector index, so repeated runs are
    reproducible.
    """
    _check_dims(vf, b)
    b = np.asarray(b, dtype=np.float64)
    coeff = vf.coefficient_matrix
    best_val = -np.inf
    best_g = None
    best_a = 0
    for a in range(model.num_actions):
        g = gamma_ao_vector(
            model.transition[a],
            model.observation[a],
            model.reward[:, a],
            model.discount,
            coeff,
            b,
        )
        val = float(b @ g)
        if val > best_val:
            best_val, best_g, best_a = val, g, a
    return AlphaVector(best_g, best_a)


def value_sum(vf: ValueFunction, beliefs) -> float:
    """Sum of values over a belief set; 0 for an empty set."""
    matrix = getattr(beliefs, "matrix", None)
    arr = matrix if matrix is not None else np.asarray(beliefs, dtype=np.float64)
    if arr.size == 0:
        return 0.0
    return float(evaluate_many(vf, arr).sum())


def _check_dims(vf: ValueFunction, b):
    if len(vf) == 0:
        raise ValueError("value function is empty")
    n = np.asarray(b).shape[-1]
    if vf.vectors[0].coefficients.shape[0] != n:
        raise ValueError(
            f"dimension mismatch: vectors have {vf.vectors[0].coefficients.shape[0]} "
            f"states, belief has {n}"
        )
