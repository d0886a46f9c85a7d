"""Replay memories: uniform, proportional prioritized (sum-tree) and n-step folding."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class InsufficientData(ValueError):
    pass


@dataclass
class Transition:
    state: np.ndarray
    avail: np.ndarray
    actions: np.ndarray
    reward: float
    next_state: np.ndarray
    next_avail: np.ndarray
    done: bool
    n_steps: int = 1


@dataclass
class Batch:
    states: np.ndarray
    avail: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    next_avail: np.ndarray
    dones: np.ndarray
    n_steps: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)


@dataclass(frozen=True)
class PERConfig:
    alpha: float = 0.6
    beta0: float = 0.5
    beta_anneal_steps: int = 1_000_000
    epsilon_priority: float = 1e-6

    def __post_init__(self):
        if not (0 < self.alpha <= 1 and 0 < self.beta0 <= 1):
            raise ValueError("alpha and beta0 must lie in (0, 1]")
        if self.epsilon_priority <= 0:
            raise ValueError("epsilon_priority must be > 0")

    def beta(self, step: int) -> float:
        frac = min(1.0, step / self.beta_anneal_steps) if self.beta_anneal_steps > 0 else 1.0
        return self.beta0 + (1.0 - self.beta0) * frac


def nstep_fold(episode: list[Transition], n: int, gamma: float) -> list[Transition]:
    """Fold one contiguous episode into n-step transitions.

    Item ``t`` accumulates ``sum_j gamma**j * r[t + j]`` over the ``m = min(n, T - t)``
    following steps and bootstraps from the state ``m`` steps ahead, so the
    learner must discount that bootstrap by ``gamma**m`` (stored in ``n_steps``).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n == 1:
        return list(episode)
    rewards = [t.reward for t in episode]
    T = len(episode)
    out = []
    for t in range(T):
        m = min(n, T - t)
        ret = 0.0
        for j in reversed(range(m)):
            ret = rewards[t + j] + gamma * ret
        last = episode[t + m - 1]
        out.append(
            replace(
                episode[t],
                reward=ret,
                next_state=last.next_state,
                next_avail=last.next_avail,
                done=last.done,
                n_steps=m,
            )
        )
    return out


class ReplayBuffer:
    """FIFO memory with uniform sampling (with replacement)."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.n_pushed = 0
        self._storage: dict[str, np.ndarray] | None = None

    def __len__(self) -> int:
        return min(self.n_pushed, self.capacity)

    def _allocate(self, t: Transition) -> None:
        def arr(x, dtype=None):
            x = np.asarray(x, dtype=dtype)
            return np.zeros((self.capacity, *x.shape), dtype=x.dtype)

        self._storage = {
            "states": arr(t.state),
            "avail": arr(t.avail, bool),
            "actions": arr(t.actions, np.int64),
            "rewards": np.zeros(self.capacity, dtype=np.float64),
            "next_states": arr(t.next_state),
            "next_avail": arr(t.next_avail, bool),
            "dones": np.zeros(self.capacity, dtype=bool),
            "n_steps": np.zeros(self.capacity, dtype=np.int64),
        }

    def push(self, t: Transition) -> int:
        """Store ``t``, evicting the oldest item when full. Returns the slot used."""
        if self._storage is None:
            self._allocate(t)
        slot = self.n_pushed % self.capacity
        s = self._storage
        s["states"][slot] = t.state
        s["avail"][slot] = t.avail
        s["actions"][slot] = t.actions
        s["rewards"][slot] = t.reward
        s["next_states"][slot] = t.next_state
        s["next_avail"][slot] = t.next_avail
        s["dones"][slot] = t.done
        s["n_steps"][slot] = t.n_steps
        self.n_pushed += 1
        return slot

    def get(self, slots: np.ndarray) -> Batch:
        s = self._storage
        return Batch(**{k: v[slots] for k, v in s.items()})

    def sample(self, k: int, rng: np.random.Generator) -> Batch:
        if len(self) < k or k < 1:
            raise InsufficientData(f"cannot sample {k} from {len(self)} transitions")
        return self.get(rng.integers(len(self), size=k))


class SumTree:
    """Binary tree whose internal nodes hold the sum of their children.

    Leaves live at ``[size, 2 * size)`` with ``size`` the capacity rounded up
    to a power of two; node 1 is the root.
    """

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.size = 1 << max(0, (capacity - 1).bit_length())
        self.tree = np.zeros(2 * self.size, dtype=np.float64)

    @property
    def total(self) -> float:
        return float(self.tree[1])

    def leaves(self) -> np.ndarray:
        return self.tree[self.size : self.size + self.capacity]

    def __getitem__(self, idx):
        return self.tree[self.size + np.asarray(idx)]

    def update(self, idx, values) -> None:
        nodes = self.size + np.atleast_1d(np.asarray(idx, dtype=np.int64))
        self.tree[nodes] = values
        nodes = np.unique(nodes // 2)
        while nodes[0] >= 1:
            self.tree[nodes] = self.tree[2 * nodes] + self.tree[2 * nodes + 1]
            if nodes[0] == 1:
                break
            nodes = np.unique(nodes // 2)

    def find(self, mass: np.ndarray) -> np.ndarray:
        """Leaf index holding each cumulative ``mass`` in ``[0, total)``."""
        mass = np.array(mass, dtype=np.float64)
        nodes = np.ones(len(mass), dtype=np.int64)
        while nodes[0] < self.size:
            left = 2 * nodes
            left_mass = self.tree[left]
            go_right = (mass >= left_mass) & (self.tree[left + 1] > 0)
            mass = np.where(go_right, mass - left_mass, mass)
            nodes = np.where(go_right, left + 1, left)
        return nodes - self.size


class PrioritizedReplayBuffer(ReplayBuffer):
    """Proportional prioritized replay.

    Sampling probability is ``p_i / sum_j p_j`` with ``p_i = (|td_i| + eps)**alpha``.
    Sample ids are insertion counters, so updates aimed at an item evicted
    since it was sampled are detected and skipped.
    """

    def __init__(self, capacity: int, config: PERConfig | None = None):
        super().__init__(capacity)
        self.config = config or PERConfig()
        self.tree = SumTree(capacity)
        self.max_priority = 1.0
        self.stale_updates = 0

    def push(self, t: Transition) -> int:
        slot = super().push(t)
        self.tree.update(slot, self.max_priority)
        return slot

    def priority(self, td_errors) -> np.ndarray:
        c = self.config
        return (np.abs(np.asarray(td_errors, dtype=np.float64)) + c.epsilon_priority) ** c.alpha

    def sample(self, k: int, rng: np.random.Generator, step: int = 0) -> tuple[Batch, np.ndarray, np.ndarray]:
        if len(self) < k or k < 1:
            raise InsufficientData(f"cannot sample {k} from {len(self)} transitions")
        total = self.tree.total
        slots = self.tree.find(rng.random(k) * total)
        probs = self.tree[slots] / total
        weights = (len(self) * probs) ** (-self.config.beta(step))
        weights /= weights.max()
        # convert slots to insertion ids
        newest = self.n_pushed - 1
        ids = newest - ((newest - slots) % self.capacity)
        return self.get(slots), weights, ids

    def update_priorities(self, ids, td_errors) -> None:
        ids = np.asarray(ids, dtype=np.int64)
        live = ids >= self.n_pushed - self.capacity
        self.stale_updates += int((~live).sum())
        if not live.any():
            return
        p = self.priority(np.asarray(td_errors)[live])
        self.tree.update(ids[live] % self.capacity, p)
        self.max_priority = max(self.max_priority, float(p.max()))
