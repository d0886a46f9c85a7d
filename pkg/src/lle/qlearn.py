"""Parameter-shared Q-networks, mixers and the Double-Q learner."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .replay import Batch
from .tiles import N_ACTIONS

CONV_CHANNELS = (32, 64, 32)
HIDDEN = (64, 64)
KERNEL = 3


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    gamma: float = 0.95
    lr: float = 5e-4
    grad_clip: float = 10.0
    tau: float = 0.01
    eps_start: float = 1.0
    eps_min: float = 0.05
    eps_anneal: int = 500_000
    train_interval: int = 5
    batch_size: int = 64
    memory: int = 50_000
    double_q: bool = True
    qmix_embed: int = 32

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")

    def epsilon(self, step: int) -> float:
        frac = min(1.0, step / self.eps_anneal) if self.eps_anneal > 0 else 1.0
        return self.eps_start + (self.eps_min - self.eps_start) * frac


def conv_padding(height: int, width: int) -> int:
    """Unpadded convolutions need at least 7x7 inputs; smaller maps are zero-padded."""
    return 0 if min(height, width) >= 2 * len(CONV_CHANNELS) + 1 else 1


def conv_trunk(in_channels: int, padding: int) -> nn.Sequential:
    layers: list[nn.Module] = []
    c = in_channels
    for out in CONV_CHANNELS:
        layers += [nn.Conv2d(c, out, KERNEL, stride=1, padding=padding), nn.ReLU()]
        c = out
    layers.append(nn.Flatten())
    return nn.Sequential(*layers)


def flat_size(height: int, width: int, padding: int) -> int:
    shrink = len(CONV_CHANNELS) * (KERNEL - 1 - 2 * padding)
    return CONV_CHANNELS[-1] * (height - shrink) * (width - shrink)


class QNetwork(nn.Module):
    """CNN over the full state, concatenated with a one-hot agent id, then an MLP to 5 utilities."""

    def __init__(self, shape: tuple[int, int, int], n_agents: int, padding: int | None = None):
        super().__init__()
        channels, height, width = shape
        self.shape = tuple(shape)
        self.n_agents = n_agents
        self.padding = conv_padding(height, width) if padding is None else padding
        self.cnn = conv_trunk(channels, self.padding)
        self.flat = flat_size(height, width, self.padding)
        self.head = nn.Sequential(
            nn.Linear(self.flat + n_agents, HIDDEN[0]),
            nn.ReLU(),
            nn.Linear(HIDDEN[0], HIDDEN[1]),
            nn.ReLU(),
            nn.Linear(HIDDEN[1], N_ACTIONS),
        )
        self.register_buffer("agent_ids", torch.eye(n_agents))

    def forward(self, states: torch.Tensor) -> torch.Tensor:
        """``(B, C, H, W)`` states to ``(B, n_agents, 5)`` utilities."""
        if states.shape[1:] != self.shape:
            raise ValueError(f"expected states of shape (B, {self.shape}), got {tuple(states.shape)}")
        features = self.cnn(states)
        b = features.shape[0]
        features = features.unsqueeze(1).expand(b, self.n_agents, self.flat)
        ids = self.agent_ids.unsqueeze(0).expand(b, -1, -1)
        return self.head(torch.cat([features, ids], dim=-1))

    def utilities(self, state: np.ndarray, agent_id: int) -> torch.Tensor:
        x = torch.as_tensor(state, dtype=torch.float32).unsqueeze(0)
        return self(x)[0, agent_id]


class AdditiveMixer(nn.Module):
    def forward(self, qs: torch.Tensor, states: torch.Tensor | None = None) -> torch.Tensor:
        return qs.sum(dim=-1)


class MonotonicMixer(nn.Module):
    """Two-layer mixing network whose weights come from state-conditioned
    hypernetworks; absolute values keep the output monotone in every utility."""

    def __init__(self, state_dim: int, n_agents: int, embed: int = 32):
        super().__init__()
        self.n_agents = n_agents
        self.embed = embed
        self.state_dim = state_dim
        self.hyper_w1 = nn.Linear(state_dim, embed * n_agents)
        self.hyper_b1 = nn.Linear(state_dim, embed)
        self.hyper_w2 = nn.Linear(state_dim, embed)
        self.hyper_b2 = nn.Sequential(nn.Linear(state_dim, embed), nn.ReLU(), nn.Linear(embed, 1))

    def forward(self, qs: torch.Tensor, states: torch.Tensor) -> torch.Tensor:
        s = states.reshape(states.shape[0], -1)
        if s.shape[1] != self.state_dim or qs.shape[-1] != self.n_agents:
            raise ValueError("state or utility size does not match the mixer")
        w1 = self.hyper_w1(s).abs().view(-1, self.n_agents, self.embed)
        b1 = self.hyper_b1(s).view(-1, 1, self.embed)
        hidden = nn.functional.elu(torch.bmm(qs.unsqueeze(1), w1) + b1)
        w2 = self.hyper_w2(s).abs().view(-1, self.embed, 1)
        b2 = self.hyper_b2(s).view(-1, 1, 1)
        return (torch.bmm(hidden, w2) + b2).view(-1)


MIXERS = ("iql", "vdn", "qmix")


def make_mixer(kind: str, shape: tuple[int, int, int], n_agents: int, embed: int = 32) -> nn.Module | None:
    if kind == "iql":
        return None
    if kind == "vdn":
        return AdditiveMixer()
    if kind == "qmix":
        return MonotonicMixer(math.prod(shape), n_agents, embed)
    raise ValueError(f"unknown mixer {kind!r}, expected one of {MIXERS}")


def mix(mixer: nn.Module | None, qs: torch.Tensor, states: torch.Tensor) -> torch.Tensor:
    """Joint value from per-agent chosen utilities; independent learners keep one value per agent."""
    if mixer is None:
        return qs
    return mixer(qs, states)


def select_actions(
    utilities: np.ndarray, avail: np.ndarray, epsilon: float, rng: np.random.Generator
) -> np.ndarray:
    """Epsilon-greedy over available actions only, independently per agent."""
    avail = np.asarray(avail, dtype=bool)
    if not avail.any(axis=-1).all():
        raise ValueError("every agent needs at least one available action")
    masked = np.where(avail, utilities, -np.inf)
    actions = masked.argmax(axis=-1)
    explore = rng.random(len(actions)) < epsilon
    for i in np.flatnonzero(explore):
        actions[i] = rng.choice(np.flatnonzero(avail[i]))
    return actions


def soft_update(target: nn.Module, online: nn.Module, tau: float) -> None:
    with torch.no_grad():
        for t, o in zip(target.parameters(), online.parameters()):
            if t.shape != o.shape:
                raise ValueError(f"parameter shape mismatch {tuple(t.shape)} vs {tuple(o.shape)}")
            t.mul_(1.0 - tau).add_(o, alpha=tau)


def _tensor(x, dtype=torch.float32) -> torch.Tensor:
    return torch.as_tensor(np.asarray(x), dtype=dtype)


class Learner:
    """Online/target networks and mixers with one Adam optimizer over both."""

    def __init__(self, shape, n_agents: int, mixer: str = "vdn", config: TrainConfig | None = None):
        self.config = config or TrainConfig()
        self.mixer_kind = mixer
        self.shape = tuple(shape)
        self.n_agents = n_agents
        self.qnet = QNetwork(self.shape, n_agents)
        self.target_qnet = QNetwork(self.shape, n_agents)
        self.target_qnet.load_state_dict(self.qnet.state_dict())
        self.mixer = make_mixer(mixer, self.shape, n_agents, self.config.qmix_embed)
        self.target_mixer = make_mixer(mixer, self.shape, n_agents, self.config.qmix_embed)
        if self.mixer is not None:
            self.target_mixer.load_state_dict(self.mixer.state_dict())
        self.optimizer = torch.optim.Adam(self.parameters(), lr=self.config.lr)
        self.updates = 0

    def parameters(self) -> list[nn.Parameter]:
        params = list(self.qnet.parameters())
        if self.mixer is not None:
            params += list(self.mixer.parameters())
        return params

    @torch.no_grad()
    def act_utilities(self, state: np.ndarray) -> np.ndarray:
        return self.qnet(_tensor(state).unsqueeze(0))[0].numpy()

    @torch.no_grad()
    def td_targets(self, batch: Batch, extra_rewards: torch.Tensor | None = None) -> torch.Tensor:
        """Double-Q targets: next actions from the online net, values from the target net."""
        cfg = self.config
        next_states = _tensor(batch.next_states)
        next_avail = _tensor(batch.next_avail, torch.bool)
        target_q = self.target_qnet(next_states)
        chooser = self.qnet(next_states) if cfg.double_q else target_q
        next_actions = chooser.masked_fill(~next_avail, -math.inf).argmax(dim=-1, keepdim=True)
        next_q = target_q.gather(-1, next_actions).squeeze(-1)
        next_value = mix(self.target_mixer, next_q, next_states)
        rewards = _tensor(batch.rewards)
        if extra_rewards is not None:
            rewards = rewards + extra_rewards
        discount = _tensor(cfg.gamma ** batch.n_steps.astype(np.float64)) * (1.0 - _tensor(batch.dones))
        if self.mixer is None:
            rewards = rewards.unsqueeze(-1)
            discount = discount.unsqueeze(-1)
        return rewards + discount * next_value

    def train_step(
        self, batch: Batch, is_weights: np.ndarray | None = None, extra_rewards: torch.Tensor | None = None
    ) -> tuple[float, np.ndarray]:
        """One gradient step; returns the loss and per-item absolute TD errors."""
        targets = self.td_targets(batch, extra_rewards)
        states = _tensor(batch.states)
        qs = self.qnet(states).gather(-1, _tensor(batch.actions, torch.int64).unsqueeze(-1)).squeeze(-1)
        values = mix(self.mixer, qs, states)
        td = values - targets
        sq = td.pow(2)
        if self.mixer is None:
            sq = sq.mean(dim=-1)
        if is_weights is not None:
            sq = sq * _tensor(is_weights)
        loss = sq.mean()
        if not torch.isfinite(loss):
            raise NonFiniteLoss(f"non-finite loss {loss.item()} at update {self.updates}")
        self.optimizer.zero_grad()
        loss.backward()
        nn.utils.clip_grad_norm_(self.parameters(), self.config.grad_clip)
        self.optimizer.step()
        self.updates += 1
        abs_td = td.detach().abs()
        if self.mixer is None:
            abs_td = abs_td.mean(dim=-1)
        return loss.item(), abs_td.numpy()

    def soft_update(self) -> None:
        soft_update(self.target_qnet, self.qnet, self.config.tau)
        if self.mixer is not None:
            soft_update(self.target_mixer, self.mixer, self.config.tau)

    def state_dict(self) -> dict:
        return {
            "mixer_kind": self.mixer_kind,
            "shape": self.shape,
            "n_agents": self.n_agents,
            "config": asdict(self.config),
            "qnet": self.qnet.state_dict(),
            "target_qnet": self.target_qnet.state_dict(),
            "mixer": None if self.mixer is None else self.mixer.state_dict(),
            "target_mixer": None if self.mixer is None else self.target_mixer.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "updates": self.updates,
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> Learner:
        learner = cls(state["shape"], state["n_agents"], state["mixer_kind"], TrainConfig(**state["config"]))
        learner.qnet.load_state_dict(state["qnet"])
        learner.target_qnet.load_state_dict(state["target_qnet"])
        if learner.mixer is not None:
            learner.mixer.load_state_dict(state["mixer"])
            learner.target_mixer.load_state_dict(state["target_mixer"])
        learner.optimizer.load_state_dict(state["optimizer"])
        learner.updates = state["updates"]
        return learner


CHECKPOINT_FORMAT = "lle-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, learner: Learner, step: int, extra: dict | None = None) -> None:
    """Write a versioned checkpoint: learner state, optimizer state and the env step counter."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "step": step,
        "learner": learner.state_dict(),
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[Learner, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not an LLE checkpoint")
    if payload["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload['version']}")
    return Learner.from_state_dict(payload["learner"]), payload
