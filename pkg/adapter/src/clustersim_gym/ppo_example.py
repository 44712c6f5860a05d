"""Example PPO training script against the adapter.

Self-contained clipped-surrogate PPO on a small MLP; kept here as a worked
example of driving the environment, not as part of the adapter API.

    python -m clustersim_gym.ppo_example --scenario scenario.json --steps 20000
"""
from __future__ import annotations

import argparse
import json
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .client import EnvClientConfig
from .env import ClusterSchedulingEnv


@dataclass
class PPOConfig:
    total_steps: int = 20_000
    rollout_steps: int = 512
    minibatch_size: int = 128
    epochs: int = 4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    learning_rate: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5


class PolicyValueNet(nn.Module):
    def __init__(self, obs_dim: int, action_count: int):
        super().__init__()
        self.trunk = nn.Sequential(
            nn.Linear(obs_dim, 64), nn.Tanh(),
            nn.Linear(64, 64), nn.Tanh())
        self.policy_head = nn.Linear(64, action_count)
        self.value_head = nn.Linear(64, 1)

    def forward(self, obs: torch.Tensor):
        hidden = self.trunk(obs)
        return self.policy_head(hidden), self.value_head(hidden).squeeze(-1)


def _gae(rewards, values, dones, last_value, gamma, lam):
    advantages = np.zeros_like(rewards)
    gae = 0.0
    for t in reversed(range(len(rewards))):
        next_value = last_value if t == len(rewards) - 1 else values[t + 1]
        next_nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * next_nonterminal - values[t]
        gae = delta + gamma * lam * next_nonterminal * gae
        advantages[t] = gae
    return advantages


def train(scenario: str, seed: int = 0, config: PPOConfig | None = None,
          verbose: bool = False) -> list[float]:
    """Train PPO for config.total_steps env steps; returns episodic returns."""
    config = config or PPOConfig()
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)

    env = ClusterSchedulingEnv(EnvClientConfig(scenario=scenario, seed=seed))
    net = PolicyValueNet(env.observation_space.shape[0], env.action_space.n)
    optimizer = torch.optim.Adam(net.parameters(), lr=config.learning_rate)

    episodic_returns: list[float] = []
    episode_return = 0.0
    obs, _ = env.reset(seed=seed)
    steps_done = 0

    try:
        while steps_done < config.total_steps:
            horizon = min(config.rollout_steps, config.total_steps - steps_done)
            obs_buf = np.zeros((horizon, env.observation_space.shape[0]), dtype=np.float32)
            act_buf = np.zeros(horizon, dtype=np.int64)
            logp_buf = np.zeros(horizon, dtype=np.float32)
            rew_buf = np.zeros(horizon, dtype=np.float32)
            val_buf = np.zeros(horizon, dtype=np.float32)
            done_buf = np.zeros(horizon, dtype=np.float32)

            for t in range(horizon):
                obs_t = torch.as_tensor(obs, dtype=torch.float32)
                with torch.no_grad():
                    logits, value = net(obs_t)
                    dist = torch.distributions.Categorical(logits=logits)
                    action = dist.sample()
                    logp = dist.log_prob(action)
                next_obs, reward, terminated, truncated, _ = env.step(int(action))
                done = terminated or truncated

                obs_buf[t] = obs
                act_buf[t] = int(action)
                logp_buf[t] = float(logp)
                rew_buf[t] = reward
                val_buf[t] = float(value)
                done_buf[t] = float(done)

                episode_return += reward
                obs = next_obs
                if done:
                    episodic_returns.append(episode_return)
                    episode_return = 0.0
                    obs, _ = env.reset(seed=seed)
            steps_done += horizon

            with torch.no_grad():
                _, last_value = net(torch.as_tensor(obs, dtype=torch.float32))
            bootstrap = 0.0 if done_buf[-1] else float(last_value)
            advantages = _gae(rew_buf, val_buf, done_buf, bootstrap,
                              config.gamma, config.gae_lambda)
            returns = advantages + val_buf
            advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

            obs_t = torch.as_tensor(obs_buf)
            act_t = torch.as_tensor(act_buf)
            logp_old = torch.as_tensor(logp_buf)
            adv_t = torch.as_tensor(advantages, dtype=torch.float32)
            ret_t = torch.as_tensor(returns, dtype=torch.float32)

            indices = np.arange(horizon)
            for _ in range(config.epochs):
                rng.shuffle(indices)
                for start in range(0, horizon, config.minibatch_size):
                    batch = torch.as_tensor(indices[start:start + config.minibatch_size])
                    logits, values = net(obs_t[batch])
                    dist = torch.distributions.Categorical(logits=logits)
                    logp = dist.log_prob(act_t[batch])
                    ratio = torch.exp(logp - logp_old[batch])
                    clipped = torch.clamp(ratio, 1 - config.clip_ratio, 1 + config.clip_ratio)
                    policy_loss = -torch.min(ratio * adv_t[batch], clipped * adv_t[batch]).mean()
                    value_loss = ((values - ret_t[batch]) ** 2).mean()
                    entropy = dist.entropy().mean()
                    loss = (policy_loss + config.value_coef * value_loss
                            - config.entropy_coef * entropy)
                    optimizer.zero_grad()
                    loss.backward()
                    nn.utils.clip_grad_norm_(net.parameters(), config.max_grad_norm)
                    optimizer.step()

            if verbose and episodic_returns:
                recent = episodic_returns[-5:]
                print(f"steps {steps_done}: {len(episodic_returns)} episodes, "
                      f"recent returns {[round(r, 2) for r in recent]}")
    finally:
        env.close()
    return episodic_returns


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="PPO example against clustersim serve-env")
    parser.add_argument("--scenario", required=True)
    parser.add_argument("--steps", type=int, default=20_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="write episodic returns to this JSON file")
    args = parser.parse_args(argv)
    returns = train(args.scenario, seed=args.seed,
                    config=PPOConfig(total_steps=args.steps), verbose=True)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(returns, fh)
    if returns:
        tenth = max(1, len(returns) // 10)
        print(f"episodes: {len(returns)}; first-10% mean {np.mean(returns[:tenth]):.2f}; "
              f"last-10% mean {np.mean(returns[-tenth:]):.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
