"""Binary symmetric and binary erasure channels, and exact posteriors for the
posterior-sampling decoder."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, xlog1py, xlogy

from . import gf2
from .errors import DimensionError, SizeGuardError
from .gf2 import BitMatrix, BitVector
from .rng import generator

BSC = "bsc"
BEC = "bec"

MAX_POSTERIOR_K = 24


def binary_entropy(p: float) -> float:
    """h(p) in bits."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -(p * math.log2(p) + (1.0 - p) * math.log2(1.0 - p))


def _check_eps(eps: float) -> None:
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"channel parameter must lie in [0, 1), got {eps}")


@dataclass(frozen=True)
class ChannelSpec:
    kind: str
    epsilon: float

    def __post_init__(self):
        kind = self.kind.strip().lower()
        if kind not in (BSC, BEC):
            raise ValueError(f"unknown channel {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        _check_eps(self.epsilon)

    @classmethod
    def bsc(cls, eps: float) -> "ChannelSpec":
        return cls(BSC, eps)

    @classmethod
    def bec(cls, eps: float) -> "ChannelSpec":
        return cls(BEC, eps)

    def capacity(self) -> float:
        if self.kind == BSC:
            return 1.0 - binary_entropy(self.epsilon)
        return 1.0 - self.epsilon


@dataclass(frozen=True)
class BecOutput:
    erased: BitVector
    survivors: BitVector


def bsc_apply(z: BitVector, eps: float, seed: int) -> BitVector:
    _check_eps(eps)
    noise = generator(seed).random(z.length) < eps
    return z ^ BitVector.from_bits(noise.astype(np.uint8))


def bec_apply(z: BitVector, eps: float, seed: int) -> BecOutput:
    _check_eps(eps)
    erased = (generator(seed).random(z.length) < eps).astype(np.uint8)
    return bec_from_mask(z, BitVector.from_bits(erased))


def bec_from_mask(z: BitVector, erased: BitVector) -> BecOutput:
    if erased.length != z.length:
        raise DimensionError("erasure mask length differs from codeword length")
    keep = erased.to_bits() == 0
    return BecOutput(erased, BitVector.from_bits(z.to_bits()[keep]))


def all_codewords(a: BitMatrix) -> np.ndarray:
    """Packed codewords A x for every message x, indexed by the integer x
    whose bit b is message bit b. Shape (2^k, words(n))."""
    if a.cols > MAX_POSTERIOR_K:
        raise SizeGuardError("posterior.k<=24", f"k={a.cols} exceeds the enumeration guard")
    columns = a.transpose().data  # column b packed as an n-bit word array
    cw = np.zeros((1 << a.cols, gf2.n_words(a.rows)), dtype=np.uint64)
    for b in range(a.cols):
        half = 1 << b
        cw[half:2 * half] = cw[:half] ^ columns[b]
    return cw


def log_likelihoods(codewords: np.ndarray, y_words: np.ndarray, n: int, eps: float) -> np.ndarray:
    """log P(y | x) for every codeword row; y_words may carry leading batch
    axes, giving shape y_batch + (2^k,)."""
    y = np.asarray(y_words, dtype=np.uint64)
    d = np.bitwise_count(codewords ^ y[..., None, :]).sum(axis=-1, dtype=np.int64)
    return xlogy(d, eps) + xlog1py(n - d, -eps)


def bsc_posterior(a: BitMatrix, y: BitVector, eps: float) -> np.ndarray:
    """P(X = x | Y = y) under a uniform prior, for all 2^k messages x."""
    if y.length != a.rows:
        raise DimensionError(f"received word length {y.length} != n={a.rows}")
    _check_eps(eps)
    logl = log_likelihoods(all_codewords(a), y.words, a.rows, eps)
    norm = logsumexp(logl)
    if not np.isfinite(norm):
        raise ValueError("received word is impossible under a noiseless channel")
    return np.exp(logl - norm)
