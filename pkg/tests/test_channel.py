import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsecode import channel, gf2
from sparsecode.channel import ChannelSpec
from sparsecode.errors import DimensionError, SizeGuardError
from sparsecode.gf2 import BitMatrix, BitVector


def test_capacity():
    assert ChannelSpec.bsc(0.11).capacity() == pytest.approx(0.50008, abs=1e-4)
    assert ChannelSpec.bsc(0.0).capacity() == 1.0
    assert ChannelSpec.bec(0.3).capacity() == pytest.approx(0.7)


def test_domain():
    ChannelSpec.bsc(0.999)
    with pytest.raises(ValueError):
        ChannelSpec.bsc(1.0)
    with pytest.raises(ValueError):
        ChannelSpec.bec(-0.1)
    with pytest.raises(ValueError):
        ChannelSpec("awgn", 0.1)
    z = BitVector.ones(8)
    channel.bsc_apply(z, 0.999, 1)
    with pytest.raises(ValueError):
        channel.bsc_apply(z, 1.0, 1)
    with pytest.raises(ValueError):
        channel.bec_apply(z, 1.0, 1)


def test_bsc_eps_zero_identity():
    z = BitVector.from_string("1101001")
    assert channel.bsc_apply(z, 0.0, 9) == z


def test_bsc_flip_rate():
    z = BitVector.zeros(100)
    flips = sum(gf2.weight(channel.bsc_apply(z, 0.11, s)) for s in range(100000)) / (100 * 100000)
    se = math.sqrt(0.11 * 0.89 / (100 * 100000))
    assert abs(flips - 0.11) < 4 * se


def test_bsc_deterministic():
    z = BitVector.ones(50)
    assert channel.bsc_apply(z, 0.3, 5) == channel.bsc_apply(z, 0.3, 5)


def test_bec_examples():
    z = BitVector.from_string("110")
    out = channel.bec_apply(z, 0.0, 1)
    assert gf2.weight(out.erased) == 0 and out.survivors == z
    out = channel.bec_from_mask(z, BitVector.from_string("101"))
    assert str(out.survivors) == "1"


def test_bec_erasure_count():
    n, eps, trials = 50, 0.3, 20000
    counts = np.array([gf2.weight(channel.bec_apply(BitVector.zeros(n), eps, s).erased) for s in range(trials)])
    se = math.sqrt(n * eps * (1 - eps) / trials)
    assert abs(counts.mean() - n * eps) < 4 * se


def test_bec_survivor_length():
    out = channel.bec_apply(BitVector.ones(77), 0.4, 3)
    assert out.survivors.length == 77 - gf2.weight(out.erased)


class TestPosterior:
    def test_repetition(self):
        post = channel.bsc_posterior(BitMatrix.from_rows(["1", "1", "1"]), BitVector.zeros(3), 0.1)
        assert post[0] == pytest.approx(0.729 / 0.730, abs=1e-12)
        assert post[0] == pytest.approx(0.998630, abs=1e-6)

    def test_useless_channel(self):
        rng = np.random.default_rng(0)
        a = BitMatrix.from_dense(rng.integers(0, 2, (6, 4)))
        post = channel.bsc_posterior(a, BitVector.from_bits(rng.integers(0, 2, 6)), 0.5)
        assert np.allclose(post, 1 / 16, atol=1e-15)

    def test_zero_matrix(self):
        post = channel.bsc_posterior(BitMatrix.zeros(5, 3), BitVector.from_string("10110"), 0.2)
        assert np.allclose(post, 1 / 8, atol=1e-15)

    def test_noiseless(self):
        a = BitMatrix.from_rows(["10", "01", "11"])
        post = channel.bsc_posterior(a, BitVector.from_string("101"), 0.0)
        assert post.tolist() == [0.0, 1.0, 0.0, 0.0]
        a0 = BitMatrix.from_rows(["10", "10"])
        assert np.allclose(channel.bsc_posterior(a0, BitVector.from_string("11"), 0.0), [0, 0.5, 0, 0.5])
        with pytest.raises(ValueError):
            channel.bsc_posterior(a, BitVector.from_string("111"), 0.0)

    def test_guards(self):
        with pytest.raises(SizeGuardError) as exc:
            channel.bsc_posterior(BitMatrix.zeros(3, 25), BitVector.zeros(3), 0.1)
        assert exc.value.guard == "posterior.k<=24"
        with pytest.raises(DimensionError):
            channel.bsc_posterior(BitMatrix.zeros(3, 2), BitVector.zeros(4), 0.1)

    def test_long_block_no_underflow(self):
        rng = np.random.default_rng(1)
        a = BitMatrix.from_dense(rng.integers(0, 2, (600, 6)))
        post = channel.bsc_posterior(a, BitVector.from_bits(rng.integers(0, 2, 600)), 0.3)
        assert np.all(np.isfinite(post)) and abs(post.sum() - 1.0) < 1e-12

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 10), st.integers(1, 6), st.floats(0.01, 0.49), st.integers(0, 2**32 - 1))
    def test_shift_invariance_and_normalization(self, n, k, eps, seed):
        rng = np.random.default_rng(seed)
        a = BitMatrix.from_dense(rng.integers(0, 2, (n, k)))
        y = BitVector.from_bits(rng.integers(0, 2, n))
        x0 = int(rng.integers(0, 1 << k))
        x0_vec = BitVector.from_bits([(x0 >> b) & 1 for b in range(k)])
        post = channel.bsc_posterior(a, y, eps)
        shifted = channel.bsc_posterior(a, y ^ gf2.mat_vec_mul(a, x0_vec), eps)
        idx = np.arange(1 << k) ^ x0
        assert np.allclose(shifted, post[idx], rtol=1e-12, atol=1e-300)
        assert abs(post.sum() - 1.0) < 1e-12

    def test_codeword_indexing(self):
        rng = np.random.default_rng(2)
        a = BitMatrix.from_dense(rng.integers(0, 2, (9, 5)))
        cw = channel.all_codewords(a)
        for x in range(32):
            xv = BitVector.from_bits([(x >> b) & 1 for b in range(5)])
            assert np.array_equal(cw[x], gf2.mat_vec_mul(a, xv).words)
