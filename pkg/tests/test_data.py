import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motvla.data import (
    Episode,
    EpisodeFormatError,
    NormStats,
    StaticEpisodeError,
    collate,
    compute_norm_stats,
    decode_episode,
    denormalize,
    encode_episode,
    load_dataset,
    load_episode,
    make_training_sample,
    normalize,
    save_episode,
    shuffled_batches,
    subsample_episodes,
    trim_static_frames,
)
from motvla.data.episodes import encode_meta, parse_meta


def make_episode(states, seed=0, name="ep") -> Episode:
    states = np.asarray(states, dtype=float)
    n = len(states)
    rng = np.random.default_rng(seed)
    return Episode(rng.integers(0, 256, (n, 3, 4, 4), dtype=np.uint8), np.array([1, 2, 3]), states,
                   rng.standard_normal((n, 2)), "reach", 1, seed, name)


def moving_states(n, start=0.0):
    return np.stack([np.arange(n) + start, np.zeros(n)], axis=1)


class TestTrim:
    def test_no_static_runs(self):
        ep = make_episode(moving_states(5))
        assert trim_static_frames(ep, 1e-3).equals(ep)

    def test_three_leading_copies_removed(self):
        states = np.concatenate([np.zeros((3, 2)), moving_states(5)])
        ep = make_episode(states)
        out = trim_static_frames(ep, 1e-3)
        assert len(out) == len(ep) - 3
        np.testing.assert_array_equal(out.states, moving_states(5))

    def test_trailing_run_removed(self):
        states = np.concatenate([moving_states(4), np.repeat(moving_states(1, 3.0), 3, axis=0)])
        assert len(trim_static_frames(make_episode(states), 1e-3)) == 4

    def test_interior_static_frames_kept(self):
        states = np.concatenate([moving_states(2), np.ones((3, 2)), moving_states(2, 5.0)])
        ep = make_episode(states)
        assert len(trim_static_frames(ep, 1e-3)) == len(ep)

    def test_zero_eps_is_identity(self):
        ep = make_episode(np.zeros((4, 2)))
        assert trim_static_frames(ep, 0.0) is ep

    def test_static_episode_named(self):
        with pytest.raises(StaticEpisodeError, match="still"):
            trim_static_frames(make_episode(np.zeros((4, 2)), name="still"), 1e-3)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 4), st.integers(1, 6), st.integers(0, 4), st.integers(0, 2**31 - 1))
    def test_idempotent(self, lead, body, trail, seed):
        rng = np.random.default_rng(seed)
        moves = np.cumsum(rng.uniform(0.5, 1.0, (body + 1, 2)), axis=0)
        states = np.concatenate([np.repeat(moves[:1], lead, 0), moves, np.repeat(moves[-1:], trail, 0)])
        once = trim_static_frames(make_episode(states, seed), 1e-3)
        assert trim_static_frames(once, 1e-3).equals(once)
        assert len(once) == body + 1


class TestNorm:
    def test_constant_dimension_hits_floor(self):
        ep = make_episode(np.full((4, 2), 3.0))
        stats = compute_norm_stats([ep])
        assert np.all(stats.state_std == 1e-6)
        np.testing.assert_array_equal(normalize(ep.states, stats.state_mean, stats.state_std), 0.0)

    def test_hand_arithmetic(self):
        stats = compute_norm_stats([make_episode([[1.0, 0.0], [3.0, 0.0]])])
        assert stats.state_mean[0] == 2.0 and stats.state_std[0] == 1.0

    def test_empty(self):
        with pytest.raises(ValueError):
            compute_norm_stats([])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((7, 3)) * rng.uniform(0.01, 100)
        mean, std = rng.standard_normal(3), rng.uniform(1e-6, 10, 3)
        assert np.abs(denormalize(normalize(x, mean, std), mean, std) - x).max() < 1e-10

    def test_arrays_round_trip(self):
        stats = compute_norm_stats([make_episode(moving_states(4))])
        again = NormStats.from_arrays(stats.as_arrays())
        np.testing.assert_array_equal(again.action_std, stats.action_std)


class TestSamples:
    def setup_method(self):
        self.ep = make_episode(moving_states(5))
        self.stats = NormStats(np.zeros(2), np.ones(2), np.zeros(2), np.ones(2))

    def test_last_step_pads_with_final_action(self):
        s = make_training_sample(self.ep, 4, 3, self.stats)
        np.testing.assert_array_equal(s.actions, np.repeat(self.ep.actions[-1:], 3, 0))

    def test_chunk_of_one(self):
        np.testing.assert_array_equal(make_training_sample(self.ep, 2, 1, self.stats).actions, self.ep.actions[2:3])

    def test_mid_episode_slice(self):
        stats = compute_norm_stats([self.ep])
        s = make_training_sample(self.ep, 1, 3, stats)
        np.testing.assert_allclose(s.actions, (self.ep.actions[1:4] - stats.action_mean) / stats.action_std)
        assert s.images.max() <= 1.0

    def test_every_index_valid(self):
        for t in range(len(self.ep)):
            assert make_training_sample(self.ep, t, 8, self.stats).actions.shape == (8, 2)
        with pytest.raises(IndexError):
            make_training_sample(self.ep, 5, 2, self.stats)

    def test_collate_pads_instructions(self):
        a = make_training_sample(self.ep, 0, 2, self.stats)
        other = make_episode(moving_states(3))
        other.instruction = np.array([4])
        b = make_training_sample(other, 0, 2, self.stats)
        batch = collate([a, b])
        assert batch.instruction.tolist() == [[1, 2, 3], [4, 0, 0]]
        assert batch.actions.shape == (2, 2, 2)


class TestBatches:
    def dataset(self):
        return [make_episode(moving_states(2)), make_episode(moving_states(3), 1)]

    def test_same_seed_same_order(self):
        assert list(shuffled_batches(self.dataset(), 2, 5)) == list(shuffled_batches(self.dataset(), 2, 5))

    def test_covers_every_index_once(self):
        seen = [i for b in shuffled_batches(self.dataset(), 2, 0) for i in b]
        assert sorted(seen) == [(0, 0), (0, 1), (1, 0), (1, 1), (1, 2)]

    def test_sizes(self):
        assert [len(b) for b in shuffled_batches(self.dataset(), 2, 0)] == [2, 2, 1]

    def test_subsample(self):
        data = [make_episode(moving_states(2), i, f"e{i}") for i in range(10)]
        half = subsample_episodes(data, 0.5, 0)
        assert len(half) == 5 and half == subsample_episodes(data, 0.5, 0)
        assert subsample_episodes(data, 1.0, 0) == data
        with pytest.raises(ValueError):
            subsample_episodes(data, 0.0, 0)


class TestEpisodeFiles:
    def test_round_trip(self, tmp_path):
        ep = make_episode(moving_states(4), 3, "episode_00000")
        path = save_episode(ep, tmp_path / "reach" / ep.name)
        assert path.suffix == ".mote"
        back = load_episode(path)
        assert back.equals(ep)
        assert encode_episode(back) == encode_episode(ep)
        assert [e.name for e in load_dataset(tmp_path)] == ["episode_00000"]

    def test_header_magic(self):
        ep = make_episode(moving_states(2))
        blob = encode_episode(ep)
        assert blob[:4] == b"MOTE"
        with pytest.raises(EpisodeFormatError):
            decode_episode(b"NOPE" + blob[4:], parse_meta(encode_meta(ep)))

    def test_truncated(self):
        ep = make_episode(moving_states(2))
        with pytest.raises(EpisodeFormatError):
            decode_episode(encode_episode(ep)[:-5], parse_meta(encode_meta(ep)))

    def test_meta_is_key_value(self):
        text = encode_meta(make_episode(moving_states(2), 9))
        assert parse_meta(text) == {"task_id": "reach", "checkpoints": "1", "seed": "9"}
