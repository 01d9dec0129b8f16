"""Exact value iteration by enumerating all next-stage vectors, then pruning.

Enumeration generates |A| * |V|^|O| candidates per step, so this serves as a
ground-truth oracle for tiny models only; the enumeration cap makes the
limitation explicit. Pruning comes in two flavors: cheap componentwise
dominance, and a linear program that removes every vector that is nowhere
the strict maximum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .model import Pomdp, check_beliefs, require_valid
from .valuefn import AlphaVector, ValueFunction, evaluate_many, initial_value_function

DOMINANCE = "dominance"
EXACT_LP = "lp"
LP_SLACK = 1e-9


class EnumerationCapError(RuntimeError):
    """Raised when an enumeration step would exceed the configured cap."""


class PruneError(RuntimeError):
    """Raised when the LP solver fails on a pruning feasibility program."""


def cross_sum(left, right):
    """All pairwise sums {p + q}; actions are carried from the left operand."""
    left = list(left)
    right = list(right)
    if left and right:
        ls = left[0].coefficients.shape
        rs = right[0].coefficients.shape
        if ls != rs:
            raise ValueError(f"dimension mismatch in cross sum: {ls} vs {rs}")
    return [
        AlphaVector(p.coefficients + q.coefficients, p.action) for p in left for q in right
    ]


def _dominated_mask(matrix, block=512):
    """dominated[j] iff some other row is componentwise >= row j.

    Exact duplicates keep only their first occurrence.
    """
    n = matrix.shape[0]
    dominated = np.zeros(n, dtype=bool)
    idx = np.arange(n)
    for start in range(0, n, block):
        stop = min(start + block, n)
        chunk = matrix[start:stop]                      # (m, S)
        ge = (matrix[:, None, :] >= chunk[None, :, :]).all(axis=2)   # (n, m)
        eq = (matrix[:, None, :] == chunk[None, :, :]).all(axis=2)
        lower = idx[:, None] < idx[None, start:stop]
        dominated[start:stop] = np.any(ge & (~eq | lower), axis=0)
    return dominated


def _lp_margin(candidate, others):
    """Best achievable margin of candidate over a set, maximized over beliefs.

    Solves max delta s.t. b . candidate >= b . u + delta for all u, b in the
    simplex. A nonpositive margin means the candidate is nowhere the strict
    maximum. Returns (margin, witness belief).
    """
    n = candidate.shape[0]
    m = len(others)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    a_ub = np.empty((m, n + 1))
    a_ub[:, :n] = np.asarray(others) - candidate[None, :]
    a_ub[:, -1] = 1.0
    a_eq = np.ones((1, n + 1))
    a_eq[0, -1] = 0.0
    bounds = [(0.0, 1.0)] * n + [(None, None)]
    res = linprog(
        c, A_ub=a_ub, b_ub=np.zeros(m), A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs"
    )
    if not res.success:
        raise PruneError(f"LP failed while testing candidate {candidate!r}: {res.message}")
    return -res.fun, res.x[:n]


_PROBE_CACHE = {}


def _probe_beliefs(n_states):
    """Deterministic probe set used to short-circuit LP calls: simplex
    corners, the uniform belief, and a few fixed random interior points."""
    if n_states not in _PROBE_CACHE:
        rng = np.random.default_rng(97 + n_states)
        _PROBE_CACHE[n_states] = np.vstack(
            [
                np.eye(n_states),
                np.full((1, n_states), 1.0 / n_states),
                rng.dirichlet(np.ones(n_states), size=32 * n_states),
            ]
        )
    return _PROBE_CACHE[n_states]


def prune(vectors, mode):
    """Remove vectors that never win; the represented function is unchanged.

    mode None returns the input unchanged; "dominance" removes componentwise-
    dominated vectors (exact duplicates keep the lowest index); "lp"
    additionally removes every vector whose best margin over the surviving
    set is within LP_SLACK of zero.
    """
    vectors = list(vectors)
    if mode is None or len(vectors) <= 1:
        return vectors
    if mode not in (DOMINANCE, EXACT_LP):
        raise ValueError(f"unknown prune mode {mode!r}")
    if mode == DOMINANCE:
        matrix = np.array([v.coefficients for v in vectors])
        kept_idx = np.flatnonzero(~_dominated_mask(matrix))
        return [vectors[i] for i in kept_idx]
    keep = _lp_keep_mask(np.array([v.coefficients for v in vectors]))
    return [v for v, k in zip(vectors, keep) if k]


def _screen_pool(rows, pool, kept_rows):
    """Drop pool members componentwise-dominated by some kept vector."""
    if not pool or not kept_rows.size:
        return pool
    cand = rows[pool]                                   # (m, S)
    ge = (kept_rows[:, None, :] >= cand[None, :, :]).all(axis=2)   # (k, m)
    return [p for p, dead in zip(pool, ge.any(axis=0)) if not dead]


def _envelope_vertices(kept_rows):
    """Vertices of the kept envelope's cell complex on the simplex (S <= 3).

    Any candidate's best margin over the envelope (a concave piecewise-linear
    function) is attained at one of these points, so evaluating candidates
    there solves the per-candidate feasibility program exactly without a
    numerical LP solver.
    """
    k, n = kept_rows.shape
    if n == 1:
        return np.array([[1.0]])
    if n == 2:
        # beliefs (x, 1-x); creases solve b.(u_j - u_k) = 0
        d = kept_rows[:, None, :] - kept_rows[None, :, :]
        iu = np.triu_indices(k, 1)
        d1, d2 = d[iu][:, 0], d[iu][:, 1]
        denom = d1 - d2
        ok = np.abs(denom) > 0
        x = -d2[ok] / denom[ok]
        x = x[(x > 0.0) & (x < 1.0)]
        xs = np.concatenate([[0.0, 1.0], x])
        return np.column_stack([xs, 1.0 - xs])
    # n == 3: beliefs (x, y, 1-x-y); lines a x + b y + c = 0 come from the
    # kept-pair creases plus the three simplex edges
    d = kept_rows[:, None, :] - kept_rows[None, :, :]
    iu = np.triu_indices(k, 1)
    dd = d[iu]
    lines = np.column_stack([dd[:, 0] - dd[:, 2], dd[:, 1] - dd[:, 2], dd[:, 2]])
    edges = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, -1.0]])
    lines = np.vstack([lines, edges])
    m = lines.shape[0]
    ii, jj = np.triu_indices(m, 1)
    a1, b1, c1 = lines[ii, 0], lines[ii, 1], lines[ii, 2]
    a2, b2, c2 = lines[jj, 0], lines[jj, 1], lines[jj, 2]
    det = a1 * b2 - a2 * b1
    ok = np.abs(det) > 1e-14 * np.maximum(1.0, np.abs(a1 * b2) + np.abs(a2 * b1))
    x = (b1 * c2 - b2 * c1)[ok] / det[ok]
    y = (c1 * a2 - c2 * a1)[ok] / det[ok]
    inside = (x > -1e-9) & (y > -1e-9) & (x + y < 1.0 + 1e-9)
    x = np.clip(x[inside], 0.0, 1.0)
    y = np.clip(y[inside], 0.0, 1.0)
    s = x + y
    over = s > 1.0
    x[over] /= s[over]
    y[over] /= s[over]
    x = np.concatenate([[0.0, 1.0, 0.0], x])
    y = np.concatenate([[0.0, 0.0, 1.0], y])
    return np.column_stack([x, y, 1.0 - x - y])


def _keep_small_state(rows, kept, pool):
    """Exact keep/discard loop for S <= 3 via envelope-vertex evaluation.

    Margins only shrink as the kept set grows, so candidates at or below the
    slack are discarded in batches; the best remaining candidate's witness
    vertex promotes the overall winner there (lowest index on ties).
    """
    while pool:
        if not kept.any():
            kept[pool[0]] = True
            pool = _screen_pool(rows, pool[1:], rows[kept])
            continue
        kept_rows = rows[kept]
        verts = _envelope_vertices(kept_rows)
        env = np.max(verts @ kept_rows.T, axis=1)
        diffs = rows[pool] @ verts.T - env[None, :]
        margins = diffs.max(axis=1)
        alive = margins > LP_SLACK
        if not alive.any():
            break
        local = int(np.argmax(margins))
        witness = verts[int(np.argmax(diffs[local]))]
        pool = [p for p, a in zip(pool, alive) if a]
        vals = rows[pool] @ witness
        kept[pool[int(np.argmax(vals))]] = True
        pool = _screen_pool(rows, pool, rows[kept])
    return kept


def _keep_general(rows, kept, pool):
    """LP-based keep/discard loop for larger state spaces."""
    while pool:
        i = pool[0]
        kept_rows = rows[kept]
        if not kept_rows.size:
            kept[i] = True
            pool = _screen_pool(rows, pool[1:], rows[kept])
            continue
        margin, witness = _lp_margin(rows[i], kept_rows)
        if margin <= LP_SLACK:
            pool.pop(0)
            continue
        # somebody wins at the witness; promote the overall winner there
        vals = rows[pool] @ witness
        kept_val = float(np.max(kept_rows @ witness))
        if float(np.max(vals)) < kept_val:
            # numerical wobble: the LP surplus did not survive re-evaluation
            pool.pop(0)
            continue
        kept[pool[int(np.argmax(vals))]] = True
        pool = _screen_pool(rows, pool, rows[kept])
    return kept


def _lp_keep_mask(rows):
    """Keep exactly the vectors that are strictly maximal somewhere on the
    simplex (up to LP_SLACK).

    Vectors that win strictly at a probe belief are promoted free; pool
    members componentwise-dominated by a kept vector are dropped free. The
    rest go through the per-candidate feasibility program: solved exactly by
    envelope-vertex enumeration when S <= 3, by scipy's LP otherwise.
    """
    n = rows.shape[0]
    scores = _probe_beliefs(rows.shape[1]) @ rows.T     # (n_probes, n)
    kept = np.zeros(n, dtype=bool)
    top = np.sort(scores, axis=1)[:, -2:]
    strict = top[:, 1] - top[:, 0] > LP_SLACK
    # argmax with lowest-index tie-break
    best = np.argmax(scores, axis=1)
    kept[np.unique(best[strict])] = True
    pool = _screen_pool(rows, [i for i in range(n) if not kept[i]], rows[kept])
    if rows.shape[1] <= 3:
        kept = _keep_small_state(rows, kept, pool)
    else:
        kept = _keep_general(rows, kept, pool)
    # scrub slack-boundary stragglers so the result is always a subset of
    # what componentwise dominance alone would keep
    kept_idx = np.flatnonzero(kept)
    if kept_idx.size > 1:
        sub = _dominated_mask(rows[kept_idx])
        kept[kept_idx[sub]] = False
    return kept


def monahan_backup(
    model: Pomdp, vf: ValueFunction, prune_mode=None, cap: int = 1_000_000
) -> ValueFunction:
    """Full enumeration of the next-stage value function, optionally pruned.

    Without pruning the result has exactly |A| * |vf|^|O| vectors. With a
    prune mode, pruning is applied incrementally after each cross sum to
    contain the blow-up; the represented function is identical either way.
    """
    if len(vf) == 0:
        raise ValueError("value function is empty")
    n_a, n_s, n_o = model.num_actions, model.num_states, model.num_observations
    raw = n_a * len(vf) ** n_o
    if raw > cap:
        raise EnumerationCapError(
            f"enumeration would produce {raw} vectors (cap {cap}); "
            "this oracle is intended for tiny models"
        )
    coeff = vf.coefficient_matrix
    out = []
    for a in range(n_a):
        t_a = model.transition[a]
        z_a = model.observation[a]
        base = model.reward[:, a] / n_o
        per_obs = []
        for o in range(n_o):
            stack = coeff @ (t_a * z_a[:, o][None, :]).T       # (n, S): back-projections
            per_obs.append(
                [AlphaVector(base + model.discount * stack[i], a) for i in range(len(vf))]
            )
        g_a = per_obs[0]
        for part in per_obs[1:]:
            if len(g_a) * len(part) > cap:
                raise EnumerationCapError(
                    f"intermediate cross sum would exceed cap {cap}"
                )
            g_a = cross_sum(g_a, part)
            if prune_mode is not None:
                g_a = prune(g_a, prune_mode)
        out.extend(g_a)
    if prune_mode is not None:
        out = prune(out, prune_mode)
    return ValueFunction(out)


@dataclass
class ExactVIResult:
    """Converged (or best-effort) exact value function with its residual."""

    value_function: ValueFunction
    residual: float
    error_bound: float
    iterations: int
    converged: bool


def exact_value_iteration(
    model: Pomdp,
    residual_tol: float = 1e-6,
    max_iters: int = 1000,
    cap: int = 1_000_000,
    probe_seed: int = 0,
    n_probes: int = 10000,
) -> ExactVIResult:
    """Iterate the enumeration backup from the lower-bound start until stable.

    The residual is the max value change over a dense probe set (simplex
    corners plus random beliefs); by contraction the true error is at most
    residual * discount / (1 - discount).
    """
    require_valid(model)
    rng = np.random.default_rng(probe_seed)
    probes = np.vstack(
        [np.eye(model.num_states), rng.dirichlet(np.ones(model.num_states), size=n_probes)]
    )
    vf = initial_value_function(model)
    vals = evaluate_many(vf, probes)
    residual = np.inf
    iterations = 0
    for iterations in range(1, max_iters + 1):
        vf = monahan_backup(model, vf, prune_mode=EXACT_LP, cap=cap)
        vals_next = evaluate_many(vf, probes)
        residual = float(np.max(np.abs(vals_next - vals)))
        vals = vals_next
        if residual <= residual_tol:
            break
    gamma = model.discount
    return ExactVIResult(
        value_function=vf,
        residual=residual,
        error_bound=residual * gamma / (1.0 - gamma),
        iterations=iterations,
        converged=residual <= residual_tol,
    )


class ExactValueIteration(BaseEstimator):
    """Enumeration-with-pruning planner (tiny models) with the estimator API."""

    def __init__(self, residual_tol=1e-6, max_iters=1000, cap=1_000_000, probe_seed=0,
                 n_probes=10000):
        self.residual_tol = residual_tol
        self.max_iters = max_iters
        self.cap = cap
        self.probe_seed = probe_seed
        self.n_probes = n_probes

    def fit(self, model: Pomdp):
        result = exact_value_iteration(
            model, self.residual_tol, self.max_iters, self.cap, self.probe_seed, self.n_probes
        )
        self.value_function_ = result.value_function
        self.residual_ = result.residual
        self.error_bound_ = result.error_bound
        self.n_iterations_ = result.iterations
        self.converged_ = result.converged
        self.n_states_ = model.num_states
        return self

    def predict(self, beliefs):
        if not hasattr(self, "value_function_"):
            raise NotFittedError("call fit(model) before predict")
        arr = check_beliefs(beliefs, self.n_states_)
        idx = np.argmax(arr @ self.value_function_.coefficient_matrix.T, axis=1)
        return np.array([self.value_function_.vectors[i].action for i in idx])
