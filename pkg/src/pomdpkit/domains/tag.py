"""Tag: a chaser pursues a fleeing opponent on a 29-cell grid.

State is (chaser cell, opponent cell-or-caught): 29 * 30 = 870 states. The
chaser moves deterministically, observes its own cell noiselessly, and only
sees the opponent when both occupy the same cell (a dedicated 30th
observation). Catching pays +10, a failed catch -10, and every motion step
-1; the caught state is absorbing with zero further reward.

The grid is a 10x2 corridor with a 3x3 arm on top (columns 5-7). The arm
placement and the opponent's flee rule are layout constants kept in this
module so they can be swapped out without touching the solver.
"""

from __future__ import annotations

import numpy as np

from ..model import Pomdp

GRID_COLUMNS = 10
ARM_COLUMNS = (5, 6, 7)
ARM_ROWS = (2, 3, 4)

# cell ids: corridor rows y=0 and y=1 left to right, then the arm row by row
TAG_CELLS = tuple(
    [(x, 0) for x in range(GRID_COLUMNS)]
    + [(x, 1) for x in range(GRID_COLUMNS)]
    + [(x, y) for y in ARM_ROWS for x in ARM_COLUMNS]
)
N_CELLS = len(TAG_CELLS)
_CELL_INDEX = {xy: i for i, xy in enumerate(TAG_CELLS)}

NORTH, EAST, SOUTH, WEST, TAG_ACTION = range(5)
_DELTAS = {NORTH: (0, 1), EAST: (1, 0), SOUTH: (0, -1), WEST: (-1, 0)}

CAUGHT = N_CELLS  # opponent-status index for the absorbing caught state
N_STATUS = N_CELLS + 1
SEEN_OPPONENT_OBS = N_CELLS  # emitted when chaser and opponent are co-located

MOVE_REWARD = -1.0
TAG_HIT_REWARD = 10.0
TAG_MISS_REWARD = -10.0


def state_index(chaser_cell: int, opponent_status: int) -> int:
    return chaser_cell * N_STATUS + opponent_status


def tagged_states() -> frozenset:
    """States where the opponent has been caught (used to stop rollouts)."""
    return frozenset(state_index(c, CAUGHT) for c in range(N_CELLS))


def _move(cell: int, action: int) -> int:
    x, y = TAG_CELLS[cell]
    dx, dy = _DELTAS[action]
    return _CELL_INDEX.get((x + dx, y + dy), cell)


def _manhattan(a: int, b: int) -> int:
    (ax, ay), (bx, by) = TAG_CELLS[a], TAG_CELLS[b]
    return abs(ax - bx) + abs(ay - by)


def opponent_move_distribution(opponent: int, chaser: int) -> dict:
    """Flee rule: 0.8 split over moves that strictly increase the Manhattan
    distance to the chaser, 0.2 stay; all mass stays if no move helps."""
    base = _manhattan(opponent, chaser)
    away = []
    for action in _DELTAS:
        target = _move(opponent, action)
        if target != opponent and _manhattan(target, chaser) > base:
            away.append(target)
    if not away:
        return {opponent: 1.0}
    dist = {opponent: 0.2}
    for target in away:
        dist[target] = dist.get(target, 0.0) + 0.8 / len(away)
    return dist


def build_tag() -> Pomdp:
    """Assemble the full 870-state model (5 actions, 30 observations)."""
    n_states = N_CELLS * N_STATUS
    n_actions = 5
    n_obs = N_CELLS + 1
    t = np.zeros((n_actions, n_states, n_states))
    r = np.zeros((n_states, n_actions))
    for chaser in range(N_CELLS):
        for opp in range(N_CELLS):
            s = state_index(chaser, opp)
            flee = opponent_move_distribution(opp, chaser)
            for action in _DELTAS:
                c2 = _move(chaser, action)
                for o2, p in flee.items():
                    t[action, s, state_index(c2, o2)] = p
                r[s, action] = MOVE_REWARD
            if opp == chaser:
                t[TAG_ACTION, s, state_index(chaser, CAUGHT)] = 1.0
                r[s, TAG_ACTION] = TAG_HIT_REWARD
            else:
                for o2, p in flee.items():
                    t[TAG_ACTION, s, state_index(chaser, o2)] = p
                r[s, TAG_ACTION] = TAG_MISS_REWARD
        caught = state_index(chaser, CAUGHT)
        t[:, caught, caught] = 1.0

    z_single = np.zeros((n_states, n_obs))
    for chaser in range(N_CELLS):
        for opp in range(N_STATUS):
            s = state_index(chaser, opp)
            obs = SEEN_OPPONENT_OBS if opp == chaser else chaser
            z_single[s, obs] = 1.0
    z = np.repeat(z_single[None, :, :], n_actions, axis=0)

    b0 = np.zeros(n_states)
    for chaser in range(N_CELLS):
        for opp in range(N_CELLS):
            b0[state_index(chaser, opp)] = 1.0 / (N_CELLS * N_CELLS)

    return Pomdp(
        transition=t,
        observation=z,
        reward=r,
        discount=0.95,
        initial_belief=b0,
    )
