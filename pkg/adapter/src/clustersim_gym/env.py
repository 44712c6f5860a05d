"""Five-tuple RL environment over one protocol session.

The adapter forwards values untouched: observations are the server's floats
wrapped in an ndarray, the reward is the server's number, and the done flag
splits into (terminated, truncated) using the server's truncation marker.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .client import EnvClientConfig, ProtocolClient
from .spaces import Box, Discrete


class ClusterSchedulingEnv:
    """Dispatch-or-noop scheduling environment served by the simulator."""

    metadata = {"render_modes": []}

    def __init__(self, config: EnvClientConfig):
        self.config = config
        self.client = ProtocolClient(config)
        spec = self.client.spec()
        self.queue_slots = int(spec["queue_slots"])
        self.observation_space = Box(low=0.0, high=1.0,
                                     shape=(int(spec["observation_length"]),))
        self.action_space = Discrete(int(spec["action_count"]))
        self.spec_payload = spec
        self._closed = False

    def reset(self, *, seed: Optional[int] = None,
              options: Optional[dict] = None) -> tuple[np.ndarray, dict]:
        if seed is None:
            seed = self.config.seed
        reply = self.client.reset(seed=seed)
        return np.asarray(reply["obs"], dtype=np.float64), dict(reply.get("info", {}))

    def step(self, action) -> tuple[np.ndarray, float, bool, bool, dict]:
        reply = self.client.step(int(action))
        obs = np.asarray(reply["obs"], dtype=np.float64)
        reward = reply["reward"]
        done = bool(reply["done"])
        info = dict(reply.get("info", {}))
        truncated = done and bool(info.get("truncated", False))
        terminated = done and not truncated
        return obs, reward, terminated, truncated, info

    def close(self) -> None:
        if not self._closed:
            self.client.close()
            self._closed = True

    def __enter__(self) -> "ClusterSchedulingEnv":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
