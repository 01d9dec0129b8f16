"""Continuous-heading navigation in a 20 x 10 m hallway.

The agent moves by choosing a heading and a distance up to 2 m; motion noise
is Gaussian with standard deviation 0.25 * distance per axis. Four proximity
sensors (one per compass direction, 2 m range) give 16 wall patterns, read
correctly with probability 0.9. Position is discretized to 200 cells by
seeded k-means over uniformly sampled free-space points. Only the outer
walls exist, so most of the interior shares the all-clear pattern and the
hallway is heavily perceptually aliased. The goal sits in that open area.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from ..continuous import ActionBounds, ContinuousDomain

WIDTH = 20.0
HEIGHT = 10.0
SENSOR_RANGE = 2.0
SENSOR_ACCURACY = 0.9
N_CELLS = 200
N_PATTERNS = 16
STEP_REWARD = -0.1
GOAL_REWARD = 10.0
MAX_DISTANCE = 2.0
NOISE_PER_METER = 0.25
KMEANS_SAMPLES = 10000
KMEANS_ITERS = 50
KMEANS_TOL = 1e-6


def _kmeans(points, k, rng, iters=KMEANS_ITERS, tol=KMEANS_TOL):
    """Plain Lloyd iterations with seeded sample init; empty clusters keep
    their previous center."""
    centers = points[rng.choice(len(points), size=k, replace=False)]
    for _ in range(iters):
        d2 = (
            (points**2).sum(axis=1)[:, None]
            - 2.0 * points @ centers.T
            + (centers**2).sum(axis=1)[None, :]
        )
        assign = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = points[assign == j]
            if len(members):
                new_centers[j] = members.mean(axis=0)
        move = float(np.max(np.abs(new_centers - centers)))
        centers = new_centers
        if move < tol:
            break
    return centers


def wall_pattern(x: float, y: float) -> int:
    """Bit pattern of walls within sensor range: 8*N + 4*E + 2*S + 1*W."""
    north = HEIGHT - y <= SENSOR_RANGE
    east = WIDTH - x <= SENSOR_RANGE
    south = y <= SENSOR_RANGE
    west = x <= SENSOR_RANGE
    return 8 * north + 4 * east + 2 * south + 1 * west


def _transition_for(centers, theta: float, distance: float) -> np.ndarray:
    """Gaussian motion discretized over cell centers.

    Probability mass falling outside the hallway goes back to the start
    cell; the in-bounds mass is split proportionally to the Gaussian density
    at the cell centers (log-shifted so tiny sigmas stay well defined).
    """
    n = centers.shape[0]
    if distance <= 0.0:
        return np.eye(n)
    sigma = NOISE_PER_METER * distance
    mu = centers + distance * np.array([np.cos(theta), np.sin(theta)])
    p_in_x = ndtr((WIDTH - mu[:, 0]) / sigma) - ndtr((0.0 - mu[:, 0]) / sigma)
    p_in_y = ndtr((HEIGHT - mu[:, 1]) / sigma) - ndtr((0.0 - mu[:, 1]) / sigma)
    p_in = p_in_x * p_in_y
    d2 = ((mu[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    logw = -d2 / (2.0 * sigma * sigma)
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=1, keepdims=True)
    t = p_in[:, None] * w
    t[np.arange(n), np.arange(n)] += 1.0 - p_in
    t /= t.sum(axis=1, keepdims=True)
    return t


def build_continuous_nav(seed: int = 0) -> ContinuousDomain:
    """Build the domain: cell centers, sensor model, rewards, and the
    per-action model generator. Deterministic per seed."""
    rng = np.random.default_rng(seed)
    points = rng.uniform([0.0, 0.0], [WIDTH, HEIGHT], size=(KMEANS_SAMPLES, 2))
    centers = _kmeans(points, N_CELLS, rng)

    patterns = np.array([wall_pattern(x, y) for x, y in centers])
    observation = np.full((N_CELLS, N_PATTERNS), (1.0 - SENSOR_ACCURACY) / (N_PATTERNS - 1))
    observation[np.arange(N_CELLS), patterns] = SENSOR_ACCURACY

    open_cells = np.flatnonzero(patterns == 0)
    if open_cells.size == 0:
        raise AssertionError("no cell is clear of all walls; hallway too small")
    middle = np.array([WIDTH / 2.0, HEIGHT / 2.0])
    goal = int(open_cells[np.argmin(((centers[open_cells] - middle) ** 2).sum(axis=1))])

    reward = np.full(N_CELLS, STEP_REWARD)
    reward[goal] = GOAL_REWARD

    def generator(params):
        theta, distance = float(params[0]), float(params[1])
        return _transition_for(centers, theta, distance), observation, reward

    bounds = ActionBounds(
        lower=np.array([0.0, 0.0]),
        upper=np.array([2.0 * np.pi, MAX_DISTANCE]),
        wrap=np.array([True, False]),
    )
    return ContinuousDomain(
        generator=generator,
        bounds=bounds,
        num_states=N_CELLS,
        num_observations=N_PATTERNS,
        discount=0.95,
        initial_belief=np.full(N_CELLS, 1.0 / N_CELLS),
        reward_floor=STEP_REWARD,
        info={"centers": centers, "goal": goal, "patterns": patterns},
    )


def save_cell_centers(path, domain: ContinuousDomain):
    """Persist the cell centers as an x,y CSV sidecar for reproducibility."""
    centers = domain.info["centers"]
    with open(path, "w", encoding="utf-8") as fh:
        for x, y in centers:
            fh.write(f"{x:.17g},{y:.17g}\n")
