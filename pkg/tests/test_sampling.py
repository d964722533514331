"""
Tests for index sampling and stream derivation
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from composition.exceptions import SamplingError
from composition.sampling import (
    ROLE_A, ROLE_D1, ROLE_D2, ReservoirSampler, SamplingMode, StreamManager, cover_batch,
    draw_batch, sample,
)


class TestStreamManager:
    def test_fresh_streams_replay(self):
        streams = StreamManager(42)
        first = streams.fresh(ROLE_A, 3).integers(100, 20)
        second = streams.fresh(ROLE_A, 3).integers(100, 20)
        np.testing.assert_array_equal(first, second)

    def test_roles_and_keys_are_independent(self):
        streams = StreamManager(42)
        d1 = streams.fresh(ROLE_D1, 0).integers(10 ** 9, 8)
        d2 = streams.fresh(ROLE_D2, 0).integers(10 ** 9, 8)
        next_epoch = streams.fresh(ROLE_D1, 1).integers(10 ** 9, 8)
        assert not np.array_equal(d1, d2)
        assert not np.array_equal(d1, next_epoch)

    def test_same_seed_across_managers(self):
        left = StreamManager(7).fresh(ROLE_A, 0).integers(50, 10)
        right = StreamManager(7).fresh(ROLE_A, 0).integers(50, 10)
        np.testing.assert_array_equal(left, right)

    def test_persistent_stream_advances(self):
        streams = StreamManager(1)
        stream = streams.stream(ROLE_A, 0)
        assert streams.stream(ROLE_A, 0) is stream
        stream.integers(10, 3)
        assert stream.position == 3

    @pytest.mark.parametrize("seed", [-1, 2 ** 64])
    def test_seed_out_of_range(self, seed):
        with pytest.raises(SamplingError):
            StreamManager(seed)

    def test_largest_seed_accepted(self):
        StreamManager(2 ** 64 - 1).fresh(ROLE_A).integers(5, 1)


class TestSample:
    def test_without_replacement_is_distinct(self):
        batch = sample(10, 10, SamplingMode.WITHOUT_REPLACEMENT, StreamManager(0).fresh(ROLE_A))
        assert batch.covers(10)

    def test_too_many_distinct_indices(self):
        with pytest.raises(SamplingError):
            sample(3, 4, SamplingMode.WITHOUT_REPLACEMENT, StreamManager(0).fresh(ROLE_A))

    def test_cover_requires_full_size(self):
        with pytest.raises(SamplingError):
            sample(5, 4, SamplingMode.COVER, StreamManager(0).fresh(ROLE_A))

    @pytest.mark.parametrize("n,size", [(0, 1), (5, 0)])
    def test_nonpositive_sizes(self, n, size):
        with pytest.raises(SamplingError):
            sample(n, size, SamplingMode.WITH_REPLACEMENT, StreamManager(0).fresh(ROLE_A))

    def test_mode_accepts_string(self):
        batch = sample(4, 6, "with_replacement", StreamManager(0).fresh(ROLE_A))
        assert batch.mode is SamplingMode.WITH_REPLACEMENT
        assert len(batch) == 6

    def test_draw_batch_promotes_to_cover(self):
        stream = StreamManager(0).fresh(ROLE_A)
        batch = draw_batch(5, 8, SamplingMode.WITH_REPLACEMENT, stream)
        assert batch.mode is SamplingMode.COVER
        assert batch.covers(5)
        assert stream.position == 0

    def test_draw_batch_without_cover(self):
        batch = draw_batch(5, 5, SamplingMode.WITH_REPLACEMENT,
                           StreamManager(3).fresh(ROLE_A), full_cover=False)
        assert batch.mode is SamplingMode.WITH_REPLACEMENT

    def test_cover_batch(self):
        assert cover_batch(4).covers(4)
        assert not cover_batch(4).covers(5)

    def test_single_draw_frequencies(self):
        draws, n = 10 ** 5, 4
        stream = StreamManager(0).fresh(ROLE_A)
        counts = np.zeros(n, dtype=int)
        for _ in range(draws):
            counts[sample(n, 1, SamplingMode.WITH_REPLACEMENT, stream).indices[0]] += 1
        sigma = np.sqrt(draws * (1 / n) * (1 - 1 / n))
        assert counts.sum() == draws
        assert np.all(np.abs(counts - draws / n) <= 3 * sigma)

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(1, 40), size=st.integers(1, 40), seed=st.integers(0, 2 ** 32))
    def test_indices_in_range(self, n, size, seed):
        stream = StreamManager(seed).fresh(ROLE_A)
        batch = sample(n, size, SamplingMode.WITH_REPLACEMENT, stream)
        assert len(batch) == size
        assert batch.indices.min() >= 0 and batch.indices.max() < n

    @settings(max_examples=50, deadline=None)
    @given(data=st.data(), n=st.integers(1, 40), seed=st.integers(0, 2 ** 32))
    def test_without_replacement_distinct(self, data, n, seed):
        size = data.draw(st.integers(1, n))
        batch = sample(n, size, SamplingMode.WITHOUT_REPLACEMENT, StreamManager(seed).fresh(ROLE_A))
        assert len(set(batch.indices.tolist())) == size


class TestReservoirSampler:
    def test_single_offer_is_kept(self):
        reservoir = ReservoirSampler(StreamManager(0).fresh(ROLE_A))
        reservoir.offer("x", tag=(0, 0))
        assert reservoir.item == "x"
        assert reservoir.tag == (0, 0)

    def test_uniform_over_offers(self):
        counts = np.zeros(5, dtype=int)
        streams = StreamManager(11)
        for trial in range(5000):
            reservoir = ReservoirSampler(streams.fresh(ROLE_A, trial))
            for item in range(5):
                reservoir.offer(item)
            counts[reservoir.item] += 1
        assert np.all(np.abs(counts - 1000) < 150)

    def test_tag_follows_kept_item(self):
        streams = StreamManager(5)
        for trial in range(50):
            reservoir = ReservoirSampler(streams.fresh(ROLE_A, trial))
            for k in range(6):
                reservoir.offer(k, tag=(trial, k))
            assert reservoir.tag == (trial, reservoir.item)
            assert reservoir.count == 6
