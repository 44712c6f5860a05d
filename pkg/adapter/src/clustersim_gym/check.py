"""Environment-API conformance checker.

Mirrors the assertions the mainstream environment checkers make: space
descriptors are present and usable, reset/step return the standard tuples
with the right types and shapes, seeded resets are reproducible, episodes
end, and stepping a finished episode fails loudly.
"""
from __future__ import annotations

import math

import numpy as np

from .client import SessionStateError
from .spaces import Box, Discrete


class ConformanceError(AssertionError):
    pass


def _ensure(condition: bool, message: str) -> None:
    if not condition:
        raise ConformanceError(message)


def check_env(env, episodes: int = 2, max_steps_per_episode: int = 5000,
              seed: int = 0) -> None:
    """Raises ConformanceError on the first violation; returns None when clean."""
    _ensure(isinstance(getattr(env, "observation_space", None), Box),
            "env.observation_space must be a Box")
    _ensure(isinstance(getattr(env, "action_space", None), Discrete),
            "env.action_space must be a Discrete")
    _ensure(env.action_space.n >= 1, "action space must be non-empty")

    first = env.reset(seed=seed)
    _ensure(isinstance(first, tuple) and len(first) == 2,
            "reset must return (observation, info)")
    obs, info = first
    _ensure(isinstance(obs, np.ndarray), "reset observation must be an ndarray")
    _ensure(isinstance(info, dict), "reset info must be a dict")
    _ensure(env.observation_space.contains(obs),
            f"reset observation outside observation_space: {obs!r}")

    again, _ = env.reset(seed=seed)
    _ensure(np.array_equal(obs, again), "reset(seed) must be reproducible")

    rng = np.random.default_rng(seed)
    for episode in range(episodes):
        env.reset(seed=seed + episode)
        for _ in range(max_steps_per_episode):
            result = env.step(env.action_space.sample(rng))
            _ensure(isinstance(result, tuple) and len(result) == 5,
                    "step must return (obs, reward, terminated, truncated, info)")
            obs, reward, terminated, truncated, info = result
            _ensure(isinstance(obs, np.ndarray) and env.observation_space.contains(obs),
                    "step observation outside observation_space")
            _ensure(isinstance(reward, (int, float)) and math.isfinite(float(reward)),
                    f"reward must be a finite number, got {reward!r}")
            _ensure(isinstance(terminated, bool) and isinstance(truncated, bool),
                    "terminated/truncated must be bools")
            _ensure(not (terminated and truncated),
                    "terminated and truncated must not both be set")
            _ensure(isinstance(info, dict), "step info must be a dict")
            if terminated or truncated:
                break
        else:
            raise ConformanceError(
                f"episode {episode} did not end within {max_steps_per_episode} steps")

    try:
        env.step(env.action_space.sample(rng))
    except SessionStateError:
        pass
    else:
        raise ConformanceError("stepping a finished episode must raise")
