import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from lle.replay import (
    InsufficientData,
    PERConfig,
    PrioritizedReplayBuffer,
    ReplayBuffer,
    SumTree,
    Transition,
    nstep_fold,
)


def _t(i, reward=0.0, done=False):
    s = np.full((1, 2, 2), i, dtype=np.int8)
    avail = np.ones((2, 5), dtype=bool)
    return Transition(s, avail, np.array([4, 4]), reward, s + 1, avail, done)


def _filled(buffer, n):
    for i in range(n):
        buffer.push(_t(i % 100, reward=float(i)))
    return buffer


def test_fifo_eviction():
    buf = _filled(ReplayBuffer(50_000), 50_001)
    assert len(buf) == 50_000
    rewards = buf._storage["rewards"]
    assert rewards.min() == 1.0 and rewards.max() == 50_000.0


def test_uniform_needs_enough_items():
    buf = _filled(ReplayBuffer(10), 3)
    with pytest.raises(InsufficientData):
        buf.sample(4, np.random.default_rng(0))


def test_single_item():
    buf = _filled(ReplayBuffer(4), 1)
    assert buf.sample(1, np.random.default_rng(0)).rewards.tolist() == [0.0]


def _draws(buf, total, rng, **kw):
    out = []
    for _ in range(total // len(buf)):
        result = buf.sample(len(buf), rng, **kw)
        out.append(result[2] if isinstance(result, tuple) else result.rewards.astype(int))
    return np.concatenate(out)


def test_uniform_frequencies():
    buf = _filled(ReplayBuffer(10), 10)
    freq = np.bincount(_draws(buf, 100_000, np.random.default_rng(0)), minlength=10) / 100_000
    assert np.abs(freq - 0.1).max() < 0.01


def test_equal_priorities_are_uniform_with_unit_weights():
    buf = _filled(PrioritizedReplayBuffer(10), 10)
    _, weights, _ = buf.sample(10, np.random.default_rng(0))
    np.testing.assert_array_equal(weights, np.ones(10))
    freq = np.bincount(_draws(buf, 100_000, np.random.default_rng(1)), minlength=10) / 100_000
    assert np.abs(freq - 0.1).max() < 0.01


def test_new_items_get_priority_one():
    buf = _filled(PrioritizedReplayBuffer(16), 5)
    np.testing.assert_array_equal(buf.tree.leaves()[:5], np.ones(5))
    assert buf.tree.total == 5.0


def test_new_items_get_the_running_max():
    buf = _filled(PrioritizedReplayBuffer(16), 4)
    buf.update_priorities([0], [10.0])
    buf.push(_t(0))
    assert buf.tree[4] == pytest.approx(buf.priority([10.0])[0])


def test_sum_tree_internal_nodes():
    rng = np.random.default_rng(1)
    tree = SumTree(13)
    for _ in range(200):
        idx = rng.integers(13, size=3)
        tree.update(idx, rng.random(3))
    for node in range(1, tree.size):
        assert tree.tree[node] == pytest.approx(tree.tree[2 * node] + tree.tree[2 * node + 1])
    assert tree.total == pytest.approx(tree.leaves().sum())


def test_sum_tree_find_boundaries():
    tree = SumTree(4)
    tree.update([0, 1, 2, 3], [1.0, 0.0, 2.0, 1.0])
    np.testing.assert_array_equal(tree.find([0.0, 0.999, 1.0, 2.999, 3.0, 3.999]), [0, 0, 2, 2, 3, 3])


def test_priorities_one_and_three():
    cfg = PERConfig(alpha=1.0, epsilon_priority=1e-12)
    buf = _filled(PrioritizedReplayBuffer(2, cfg), 2)
    buf.update_priorities([0, 1], [1.0, 3.0])
    ids = _draws(buf, 100_000, np.random.default_rng(0))
    assert np.mean(ids == 1) == pytest.approx(0.75, abs=0.02)


def test_is_weights_max_is_one_and_favor_rare_items():
    buf = _filled(PrioritizedReplayBuffer(8), 8)
    buf.update_priorities(np.arange(8), np.arange(8) + 1.0)
    batch, weights, ids = buf.sample(8, np.random.default_rng(0))
    assert weights.max() == 1.0
    order = np.argsort(ids)
    assert np.all(np.diff(weights[order]) <= 1e-12)


def test_beta_endpoints():
    cfg = PERConfig()
    assert cfg.beta(0) == 0.5
    assert cfg.beta(500_000) == 0.75
    assert cfg.beta(1_000_000) == 1.0
    assert cfg.beta(5_000_000) == 1.0


def test_zero_td_keeps_epsilon_priority():
    cfg = PERConfig()
    buf = _filled(PrioritizedReplayBuffer(4, cfg), 4)
    buf.update_priorities([2], [0.0])
    assert buf.tree[2] == pytest.approx(cfg.epsilon_priority**cfg.alpha)
    assert buf.tree[2] > 0


def test_priority_is_monotone_in_td():
    buf = PrioritizedReplayBuffer(4)
    p = buf.priority(np.linspace(0, 10, 50))
    assert np.all(np.diff(p) > 0)


def test_stale_updates_are_skipped():
    buf = _filled(PrioritizedReplayBuffer(4), 4)
    _, _, ids = buf.sample(4, np.random.default_rng(0))
    _filled(buf, 4)  # every sampled item has been evicted
    before = buf.tree.leaves().copy()
    buf.update_priorities(ids, np.full(4, 100.0))
    np.testing.assert_array_equal(buf.tree.leaves(), before)
    assert buf.stale_updates == 4


def test_sample_ids_point_at_stored_items():
    buf = PrioritizedReplayBuffer(5)
    for i in range(12):
        buf.push(_t(0, reward=float(i)))
    batch, _, ids = buf.sample(5, np.random.default_rng(3))
    np.testing.assert_array_equal(batch.rewards, ids.astype(float))


def test_nstep_worked_example():
    episode = [_t(0, 0.0), _t(1, 0.0), _t(2, 1.0, done=True)]
    folded = nstep_fold(episode, 3, 0.95)
    assert folded[0].reward == pytest.approx(0.9025, abs=1e-12)
    assert folded[0].n_steps == 3 and folded[0].done
    np.testing.assert_array_equal(folded[0].next_state, episode[2].next_state)
    assert folded[1].reward == pytest.approx(0.95) and folded[1].n_steps == 2
    assert folded[2].reward == 1.0 and folded[2].n_steps == 1


def test_nstep_of_one_is_identity():
    episode = [_t(i, float(i)) for i in range(4)]
    assert nstep_fold(episode, 1, 0.9) == episode


def test_nstep_truncated_episode_keeps_bootstrap():
    episode = [_t(i, 1.0) for i in range(3)]
    folded = nstep_fold(episode, 5, 0.5)
    assert not folded[0].done and folded[0].n_steps == 3
    assert folded[0].reward == pytest.approx(1.75)


def test_nstep_rejects_zero():
    with pytest.raises(ValueError):
        nstep_fold([_t(0)], 0, 0.9)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-2, 2, allow_nan=False), min_size=1, max_size=40),
    st.sampled_from([1, 3, 5, 7, 9]),
    st.booleans(),
)
def test_nstep_matches_oracle(rewards, n, terminal):
    dones = [False] * len(rewards)
    dones[-1] = terminal
    episode = [_t(i % 100, r, d) for i, (r, d) in enumerate(zip(rewards, dones))]
    folded = nstep_fold(episode, n, 0.95)
    for item, (ret, k, done) in zip(folded, oracles.nstep_returns(rewards, dones, n, 0.95)):
        assert item.reward == pytest.approx(ret, abs=1e-12)
        assert item.n_steps == k and item.done == done


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=64))
def test_tree_total_matches_priorities(td):
    buf = _filled(PrioritizedReplayBuffer(64), len(td))
    buf.update_priorities(np.arange(len(td)), td)
    expected = buf.priority(td).sum()
    assert buf.tree.total == pytest.approx(expected, rel=1e-9)


def test_doubling_td_raises_sampling_probability():
    buf = _filled(PrioritizedReplayBuffer(6), 6)
    buf.update_priorities(np.arange(6), [0.5, 1.0, 2.0, 0.1, 3.0, 1.5])
    before = buf.tree[2] / buf.tree.total
    buf.update_priorities([2], [4.0])
    assert buf.tree[2] / buf.tree.total > before


def test_eviction_replaces_tree_mass():
    buf = _filled(PrioritizedReplayBuffer(3), 3)
    buf.update_priorities([0], [50.0])
    big = buf.tree.total
    buf.max_priority = 1.0  # push at unit priority to isolate the evicted mass
    buf.push(_t(0))
    assert buf.tree.total == pytest.approx(3.0)
    assert big > 3.0
