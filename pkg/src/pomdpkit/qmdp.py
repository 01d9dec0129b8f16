"""QMDP heuristic: solve the fully observable MDP, act greedily on the belief.

The heuristic assumes all state uncertainty vanishes after one step, so it
never takes information-gathering actions, but it is a cheap and often
strong baseline. Its value function (one vector of Q values per action)
upper-bounds the true POMDP optimum.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .model import Pomdp, check_beliefs, require_valid
from .valuefn import AlphaVector, ValueFunction


def solve_mdp(model: Pomdp, residual_tol: float = 1e-9, max_iters: int = 100000):
    """Value-iterate Q(s,a) = r(s,a) + discount * E[max_a' Q(s',a')].

    Returns (q_table, residuals) where residuals is the per-iteration Bellman
    residual sequence; the final residual bounds the true error by
    residual * discount / (1 - discount).
    """
    require_valid(model)
    if not model.discount < 1.0:
        raise ValueError("discount must be < 1")
    s, a = model.reward.shape
    q = np.zeros((s, a))
    residuals = []
    for _ in range(max_iters):
        v = q.max(axis=1)
        q_next = model.reward + model.discount * np.einsum("ast,t->sa", model.transition, v)
        residual = float(np.max(np.abs(q_next - q)))
        residuals.append(residual)
        q = q_next
        if residual <= residual_tol:
            break
    return q, residuals


def qmdp_value_function(q_table: np.ndarray) -> ValueFunction:
    """One alpha vector per action with that action's Q column.

    Greedy action selection on this value function realizes the
    argmax_a sum_s b(s) Q(s,a) rule.
    """
    q = np.asarray(q_table, dtype=np.float64)
    return ValueFunction([AlphaVector(q[:, a], a) for a in range(q.shape[1])])


class QmdpSolver(BaseEstimator):
    """MDP-based heuristic planner with the estimator API."""

    def __init__(self, residual_tol=1e-9, max_iters=100000):
        self.residual_tol = residual_tol
        self.max_iters = max_iters

    def fit(self, model: Pomdp):
        self.q_table_, self.residuals_ = solve_mdp(model, self.residual_tol, self.max_iters)
        self.value_function_ = qmdp_value_function(self.q_table_)
        self.error_bound_ = self.residuals_[-1] * model.discount / (1.0 - model.discount)
        self.n_states_ = model.num_states
        return self

    def predict(self, beliefs):
        if not hasattr(self, "q_table_"):
            raise NotFittedError("call fit(model) before predict")
        arr = check_beliefs(beliefs, self.n_states_)
        return np.argmax(arr @ self.q_table_, axis=1)
