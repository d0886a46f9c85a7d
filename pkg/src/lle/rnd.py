"""Random network distillation novelty bonus."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .qlearn import conv_padding, conv_trunk, flat_size


@dataclass
class RNDConfig:
    mask_prob: float = 0.25
    ir_factor_start: float = 2.0
    ir_factor_end: float = 0.0
    ir_anneal_steps: int = 1_000_000
    ir_clip: float = 5.0
    warmup_updates: int = 64
    embedding: int = 64
    lr: float = 5e-4
    normalize_obs: bool = False

    def __post_init__(self):
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ValueError("mask_prob must lie in [0, 1]")
        if self.ir_clip <= 0:
            raise ValueError("ir_clip must be > 0")

    def factor(self, step: int) -> float:
        frac = min(1.0, step / self.ir_anneal_steps) if self.ir_anneal_steps > 0 else 1.0
        return self.ir_factor_start + (self.ir_factor_end - self.ir_factor_start) * frac


def _embedder(shape, embedding: int) -> nn.Sequential:
    channels, height, width = shape
    padding = conv_padding(height, width)
    return nn.Sequential(conv_trunk(channels, padding), nn.Linear(flat_size(height, width, padding), embedding))


class RND:
    """A frozen random target embedding and a predictor trained to match it.

    The intrinsic reward is ``min(error, ir_clip) * factor(step)`` where
    ``error`` is the mean squared embedding difference; it stays 0 until the
    predictor has been updated ``warmup_updates`` times.
    """

    def __init__(self, shape, config: RNDConfig | None = None):
        self.config = config or RNDConfig()
        self.target = _embedder(shape, self.config.embedding)
        self.predictor = _embedder(shape, self.config.embedding)
        for p in self.target.parameters():
            p.requires_grad_(False)
        self.optimizer = torch.optim.Adam(self.predictor.parameters(), lr=self.config.lr)
        self.updates = 0
        self._obs_mean = None
        self._obs_var = None
        self._obs_count = 0

    def _prepare(self, states) -> torch.Tensor:
        x = torch.as_tensor(np.asarray(states), dtype=torch.float32)
        if self.config.normalize_obs and self._obs_count > 0:
            x = ((x - self._obs_mean) / (self._obs_var.sqrt() + 1e-8)).clamp(-5, 5)
        return x

    def _observe(self, x: torch.Tensor) -> None:
        if not self.config.normalize_obs:
            return
        # parallel-variance running statistics
        m, v, k = x.mean(0), x.var(0, unbiased=False), x.shape[0]
        if self._obs_count == 0:
            self._obs_mean, self._obs_var, self._obs_count = m, v, k
            return
        n = self._obs_count
        delta = m - self._obs_mean
        total = n + k
        self._obs_mean = self._obs_mean + delta * k / total
        self._obs_var = (self._obs_var * n + v * k + delta.pow(2) * n * k / total) / total
        self._obs_count = total

    def raw_error(self, states) -> torch.Tensor:
        x = self._prepare(states)
        with torch.no_grad():
            return (self.target(x) - self.predictor(x)).pow(2).mean(dim=-1)

    def intrinsic_reward(self, states, step: int) -> torch.Tensor:
        """Bonus for a batch of encodings ``(B, C, H, W)``; returns shape ``(B,)``."""
        n = len(states)
        if self.updates < self.config.warmup_updates:
            return torch.zeros(n)
        factor = self.config.factor(step)
        if factor == 0.0:
            return torch.zeros(n)
        return self.raw_error(states).clamp(max=self.config.ir_clip) * factor

    def update(self, states, rng: np.random.Generator) -> float:
        """One predictor step; each item's error is dropped with probability ``mask_prob``."""
        x = torch.as_tensor(np.asarray(states), dtype=torch.float32)
        self._observe(x)
        x = self._prepare(states)
        keep = torch.as_tensor(rng.random(len(x)) >= self.config.mask_prob, dtype=torch.float32)
        self.updates += 1
        if keep.sum() == 0:
            return 0.0
        err = (self.target(x) - self.predictor(x)).pow(2).mean(dim=-1)
        loss = (err * keep).sum() / keep.sum()
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        return loss.item()

    def state_dict(self) -> dict:
        return {
            "target": self.target.state_dict(),
            "predictor": self.predictor.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "updates": self.updates,
        }


def shaped_reward(extrinsic, intrinsic):
    """Training-time reward. Reported scores only ever use the extrinsic part."""
    return extrinsic + intrinsic
