"""Hand-specified tiny models for oracle-scale tests, plus a random-model
generator. Every fixture is small enough for the exact enumeration solver."""

from __future__ import annotations

import numpy as np

from ..model import Pomdp


def random_pomdp(rng, n_states=3, n_actions=3, n_obs=2, discount=0.95) -> Pomdp:
    """Dense random model: Dirichlet rows, rewards uniform in [-1, 1]."""
    return Pomdp(
        transition=rng.dirichlet(np.ones(n_states), size=(n_actions, n_states)),
        observation=rng.dirichlet(np.ones(n_obs), size=(n_actions, n_states)),
        reward=rng.uniform(-1.0, 1.0, size=(n_states, n_actions)),
        discount=discount,
        initial_belief=rng.dirichlet(np.ones(n_states)),
    )


def _minimal():
    return Pomdp(
        transition=[[[1.0]]],
        observation=[[[1.0]]],
        reward=[[1.0]],
        discount=0.95,
        initial_belief=[1.0],
    )


def _two_state_symmetric():
    # invariant under swapping the two states together with the two actions
    # and the two observations
    t = [
        [[0.8, 0.2], [0.2, 0.8]],
        [[0.2, 0.8], [0.8, 0.2]],
    ]
    z_row = [[0.85, 0.15], [0.15, 0.85]]
    return Pomdp(
        transition=t,
        observation=[z_row, z_row],
        reward=[[1.0, 0.0], [0.0, 1.0]],
        discount=0.9,
        initial_belief=[0.5, 0.5],
    )


def _two_state_noisy_sensor():
    # listen (cheap, informative) vs. two commit actions that reset the world
    listen_t = np.eye(2)
    reset_t = np.full((2, 2), 0.5)
    t = [listen_t, reset_t, reset_t]
    listen_z = [[0.85, 0.15], [0.15, 0.85]]
    flat_z = [[0.5, 0.5], [0.5, 0.5]]
    r = [
        [-0.5, 5.0, -10.0],
        [-0.5, -10.0, 5.0],
    ]
    return Pomdp(
        transition=t,
        observation=[listen_z, flat_z, flat_z],
        reward=r,
        discount=0.85,
        initial_belief=[0.5, 0.5],
    )


def _three_state_chain():
    left = np.zeros((3, 3))
    right = np.zeros((3, 3))
    for s in range(3):
        left[s, max(s - 1, 0)] = 1.0
        right[s, min(s + 1, 2)] = 1.0
    z_row = [[0.9, 0.1], [0.5, 0.5], [0.1, 0.9]]
    return Pomdp(
        transition=[left, right],
        observation=[z_row, z_row],
        reward=[[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]],
        discount=0.85,
        initial_belief=[1 / 3, 1 / 3, 1 / 3],
    )


def _rand(seed, n_states, n_actions, n_obs):
    def build():
        return random_pomdp(
            np.random.default_rng(seed), n_states, n_actions, n_obs, discount=0.85
        )

    return build


TINY_REGISTRY = {
    "1s1a1o": _minimal,
    "2s-symmetric": _two_state_symmetric,
    "2s-noisy-sensor": _two_state_noisy_sensor,
    "3s-chain": _three_state_chain,
    "rand3-0": _rand(1000, 3, 3, 2),
    "rand3-1": _rand(1006, 3, 2, 2),
    "rand3-2": _rand(1002, 2, 3, 2),
    "rand3-3": _rand(1017, 2, 2, 2),
    "rand3-4": _rand(1022, 3, 2, 2),
    "rand3-5": _rand(1005, 3, 2, 2),
}


def build_tiny(name: str) -> Pomdp:
    """Look up a fixture by name; unknown names list the registry."""
    try:
        builder = TINY_REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(TINY_REGISTRY))
        raise ValueError(f"unknown tiny model {name!r}; known: {known}") from None
    return builder()
