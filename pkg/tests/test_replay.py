import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from ocpg.envs import Transition
from ocpg.errors import ConfigurationError, UsageError
from ocpg.replay import DEFAULT_BATCH_SIZE, DEFAULT_CAPACITY, ReplayBuffer


def numbered(i, q=2, p=1):
    return (np.full(q, float(i)), np.full(p, -float(i)), float(i), np.full(q, i + 0.5),
            i % 7 == 0)


def test_defaults():
    assert DEFAULT_CAPACITY == 10 ** 6
    assert DEFAULT_BATCH_SIZE == 256


def test_push_to_empty():
    buf = ReplayBuffer(2, 1, capacity=10)
    buf.push(*numbered(0))
    assert len(buf) == 1


def test_ring_keeps_newest():
    buf = ReplayBuffer(2, 1, capacity=2)
    for i in (1, 2, 3):
        buf.push(*numbered(i))
    np.testing.assert_array_equal(buf.contents().rewards, [2.0, 3.0])


@given(st.integers(1, 20), st.integers(0, 60))
def test_fifo_order(capacity, n):
    buf = ReplayBuffer(2, 1, capacity=capacity, rng=np.random.default_rng(0))
    for i in range(n):
        buf.push(*numbered(i))
    assert len(buf) == min(n, capacity)
    expected = list(range(max(0, n - capacity), n))
    c = buf.contents()
    assert list(c.rewards) == expected
    assert list(c.states[:, 0]) == expected
    assert list(c.terminals) == [i % 7 == 0 for i in expected]


def test_saturation():
    buf = ReplayBuffer(1, 1)
    ones = np.ones(1)
    for _ in range(DEFAULT_CAPACITY):
        buf.push(ones, ones, 0.0, ones, False)
    assert len(buf) == DEFAULT_CAPACITY
    buf.push(ones, ones, 1.0, ones, False)
    assert len(buf) == DEFAULT_CAPACITY and buf.cursor == 1


def test_shape_mismatch():
    buf = ReplayBuffer(2, 1, capacity=4)
    with pytest.raises(ConfigurationError):
        buf.push(np.zeros(3), np.zeros(1), 0.0, np.zeros(2), False)
    with pytest.raises(ConfigurationError):
        ReplayBuffer(2, 1, capacity=0)


def test_push_transition():
    buf = ReplayBuffer(2, 1, capacity=4)
    buf.push_transition(Transition(*numbered(3)))
    assert buf.contents().rewards[0] == 3.0


def test_empty_sample():
    with pytest.raises(UsageError):
        ReplayBuffer(1, 1).sample(4)
    buf = ReplayBuffer(2, 1, capacity=4)
    buf.push(*numbered(1))
    with pytest.raises(UsageError):
        buf.sample(0)


def test_single_element():
    buf = ReplayBuffer(2, 1, capacity=4, rng=np.random.default_rng(0))
    buf.push(*numbered(5))
    batch = buf.sample(32)
    assert np.all(batch.rewards == 5.0) and np.all(batch.states == 5.0)


def test_chi_square_uniform():
    buf = ReplayBuffer(2, 1, capacity=100, rng=np.random.default_rng(2024))
    for i in range(100):
        buf.push(*numbered(i))
    counts = np.bincount(buf.sample(100_000).rewards.astype(int), minlength=100)
    assert stats.chisquare(counts).pvalue > 0.01


def test_samples_are_copies():
    buf = ReplayBuffer(2, 1, capacity=3, rng=np.random.default_rng(0))
    for i in range(3):
        buf.push(*numbered(i))
    batch = buf.sample(20)
    before = [a.copy() for a in batch]
    for i in range(3, 10):
        buf.push(*numbered(i))
    for a, b in zip(batch, before):
        np.testing.assert_array_equal(a, b)


def test_seeded_sampling():
    def draw():
        buf = ReplayBuffer(2, 1, capacity=50, rng=np.random.default_rng(8))
        for i in range(50):
            buf.push(*numbered(i))
        return buf.sample(64).rewards
    np.testing.assert_array_equal(draw(), draw())


def test_dump_restore(tmp_path):
    buf = ReplayBuffer(2, 1, capacity=5)
    for i in range(8):
        buf.push(*numbered(i))
    buf.dump(tmp_path / "buf.npz")
    back = ReplayBuffer.restore(tmp_path / "buf.npz")
    assert back.capacity == 5 and len(back) == 5
    for a, b in zip(buf.contents(), back.contents()):
        np.testing.assert_array_equal(a, b)
    # the restored ring continues overwriting the oldest entry
    back.push(*numbered(8))
    assert list(back.contents().rewards) == [4, 5, 6, 7, 8]
