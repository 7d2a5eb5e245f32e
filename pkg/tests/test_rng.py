import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddsde.rng import RngStream, as_stream

keys = st.lists(st.integers(0, 2**31), max_size=4)


class TestRngStream:
    @given(st.integers(0, 2**63), keys)
    def test_reproducible(self, seed, key):
        a = RngStream(seed, tuple(key)).normal(5)
        assert np.array_equal(a, RngStream(seed).spawn(*key).normal(5))

    def test_order_independent(self):
        root = RngStream(3)
        first = root.spawn(2).normal(4)
        root.spawn(1).normal(100)
        assert np.array_equal(first, root.spawn(2).normal(4))

    def test_distinct_keys_differ(self):
        root = RngStream(3)
        assert not np.array_equal(root.spawn(0).normal(4), root.spawn(1).normal(4))
        assert not np.array_equal(root.spawn(0, 1).normal(4), root.spawn(1, 0).normal(4))
        assert not np.array_equal(RngStream(4).normal(4), RngStream(3).normal(4))

    def test_philox(self):
        assert isinstance(RngStream(0).generator().bit_generator, np.random.Philox)

    def test_rejects_negative_seed(self):
        with pytest.raises(ValueError):
            RngStream(-1)

    def test_as_stream(self):
        s = RngStream(5, (1,))
        assert as_stream(s) is s and as_stream(np.int64(5)) == RngStream(5)
        with pytest.raises(TypeError):
            as_stream(1.5)

    def test_weak_correlation(self):
        a, b = RngStream(0).spawn(0).normal(20000), RngStream(0).spawn(1).normal(20000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(20000)
