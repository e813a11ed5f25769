"""Exhaustive oracles for tiny codes and seeded Monte Carlo estimators.

Correct-detection probabilities of the posterior-sampling decoder are
computed as posterior mass of the transmitted message (its expectation is
exactly the decoder's success probability), never by simulating the
decoder's random draw.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp, xlog1py, xlogy

from . import _kernels, gf2
from .channel import BEC, BSC, ChannelSpec, all_codewords, log_likelihoods
from .ensemble import BERNOULLI, EnsembleSpec, TypicalityParams, sample_dense
from .errors import SizeGuardError
from .gf2 import BitMatrix
from .rng import DEFAULT_SEED, substream, substream_seed

EXACT_BSC_MAX_N = 16
EXACT_BSC_MAX_K = 12
EXACT_BEC_MAX_N = 20
EXACT_BERNOULLI_MAX_NK = 16
EXACT_ROW_REGULAR_MAX = 10**6
MAX_REJECTION_RATE = 0.99


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    trials: int
    master_seed: int
    rejections: int = 0


@dataclass(frozen=True)
class ConvergenceRecord:
    n: int
    k: int
    matrices_tested: int
    pe_values: tuple[float, ...] = field(repr=False)
    fraction_above_delta: float = 0.0


@dataclass(frozen=True)
class ConvergenceReport:
    records: tuple[ConvergenceRecord, ...]
    delta: float

    @property
    def fractions(self) -> list[float]:
        return [r.fraction_above_delta for r in self.records]


def _estimate(samples: np.ndarray, master_seed: int, rejections: int = 0) -> McEstimate:
    samples = np.asarray(samples, dtype=float)
    t = samples.size
    se = float(samples.std(ddof=1) / math.sqrt(t)) if t > 1 else 0.0
    return McEstimate(float(samples.mean()), se, t, int(master_seed), rejections)


def _check_bsc_size(n: int, k: int) -> None:
    if n > EXACT_BSC_MAX_N:
        raise SizeGuardError("exact_pc_bsc.n<=16", f"n={n} exceeds the exhaustive guard")
    if k > EXACT_BSC_MAX_K:
        raise SizeGuardError("exact_pc_bsc.k<=12", f"k={k} exceeds the exhaustive guard")


def _pc_bsc_from_codewords(cw: np.ndarray, n: int, k: int, eps: float) -> np.ndarray:
    """Exact p_c for a batch of codes given as (batch, 2^k) integer codewords.

    p_c = sum_y P(y) sum_x P(x|y)^2 = 2^-k sum_y sum_x L(y|x)^2 / sum_x L(y|x).
    Likelihoods are looked up by Hamming distance and scaled by (1-eps)^-n.
    """
    cw = np.asarray(cw, dtype=np.uint64)
    batch, size = cw.shape
    d_all = np.arange(n + 1)
    if eps == 0.0:
        table = (d_all == 0).astype(float)
    else:
        table = np.exp(d_all * (math.log(eps) - math.log1p(-eps)))
    if eps > 0.0 and table[-1] ** 2 < 1e-290:
        return _pc_bsc_log_domain(cw, n, k, eps)
    n_y = 1 << n
    acc = np.zeros(batch)
    per_y = max(1, 4_000_000 // max(1, batch * size))
    for start in range(0, n_y, per_y):
        y = np.arange(start, min(n_y, start + per_y), dtype=np.uint64)
        lik = table[np.bitwise_count(cw[:, None, :] ^ y[None, :, None])]
        s1 = lik.sum(axis=2)
        s2 = (lik * lik).sum(axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            acc += np.where(s1 > 0, s2 / s1, 0.0).sum(axis=1)
    return acc * (1.0 - eps) ** n / size


def _pc_bsc_log_domain(cw: np.ndarray, n: int, k: int, eps: float) -> np.ndarray:
    parts = []
    per_y = max(1, 4_000_000 // max(1, cw.shape[0] * cw.shape[1]))
    for start in range(0, 1 << n, per_y):
        y = np.arange(start, min(1 << n, start + per_y), dtype=np.uint64)
        d = np.bitwise_count(cw[:, None, :] ^ y[None, :, None]).astype(np.int64)
        logl = xlogy(d, eps) + xlog1py(n - d, -eps)
        parts.append(logsumexp(2.0 * logl, axis=2) - logsumexp(logl, axis=2))
    return np.exp(logsumexp(np.concatenate(parts, axis=1), axis=1) - k * math.log(2.0))


def _int_codewords(dense_batch: np.ndarray) -> np.ndarray:
    """(batch, n, k) 0/1 matrices -> (batch, 2^k) codewords as n-bit integers."""
    batch, n, k = dense_batch.shape
    col_ints = (dense_batch.astype(np.uint64) << np.arange(n, dtype=np.uint64)[None, :, None]).sum(axis=1)
    cw = np.zeros((batch, 1 << k), dtype=np.uint64)
    for b in range(k):
        h = 1 << b
        cw[:, h:2 * h] = cw[:, :h] ^ col_ints[:, b:b + 1]
    return cw


def exact_pc_bsc(a: BitMatrix, eps: float) -> float:
    """Exact correct-detection probability by enumerating every output y."""
    _check_bsc_size(a.rows, a.cols)
    cw = _int_codewords(a.to_dense()[None].astype(np.uint8))
    return float(min(1.0, _pc_bsc_from_codewords(cw, a.rows, a.cols, eps)[0]))


def exact_pc_bsc_by_noise(a: BitMatrix, eps: float) -> float:
    """Same quantity via E_N[P(X = 0 | Y = N)]: enumerate noise, send x = 0.

    Linearity makes the posterior mass of the sent message independent of
    which message was sent.
    """
    _check_bsc_size(a.rows, a.cols)
    n = a.rows
    cw = all_codewords(a)
    noise = np.arange(1 << n, dtype=np.uint64)[:, None]
    logl = log_likelihoods(cw, noise, n, eps)
    w = np.bitwise_count(noise[:, 0]).astype(np.int64)
    log_pn = xlogy(w, eps) + xlog1py(n - w, -eps)
    with np.errstate(invalid="ignore"):
        log_post0 = np.where(np.isfinite(log_pn), logl[:, 0] - logsumexp(logl, axis=1), -np.inf)
    return float(np.exp(logsumexp(log_pn + log_post0)))


def _int_rows(a: BitMatrix) -> list[int]:
    rows = []
    for r in a.data:
        v = 0
        for w_idx, word in enumerate(r):
            v |= int(word) << (64 * w_idx)
        rows.append(v)
    return rows


def _rank_ints(rows: Sequence[int]) -> int:
    basis: dict[int, int] = {}
    for r in rows:
        while r:
            top = r.bit_length() - 1
            if top in basis:
                r ^= basis[top]
            else:
                basis[top] = r
                break
    return len(basis)


def exact_pc_bec(a: BitMatrix, eps: float) -> float:
    """sum over erasure sets F of P(F) 2^(rank(A_F) - k), enumerated exactly."""
    n, k = a.rows, a.cols
    if n > EXACT_BEC_MAX_N:
        raise SizeGuardError("exact_pc_bec.n<=20", f"n={n} exceeds the exhaustive guard")
    rows = _int_rows(a)
    terms = []
    for keep in range(1 << n):
        kept = [rows[l] for l in range(n) if keep >> l & 1]
        m = len(kept)
        p = (1.0 - eps) ** m * eps ** (n - m)
        if p:
            terms.append(p * 2.0 ** (_rank_ints(kept) - k))
    return math.fsum(terms)


def _bernoulli_matrices(n: int, k: int) -> np.ndarray:
    idx = np.arange(1 << (n * k), dtype=np.uint64)
    bits = (idx[:, None] >> np.arange(n * k, dtype=np.uint64)) & np.uint64(1)
    return bits.astype(np.uint8).reshape(-1, n, k)


def _row_regular_matrices(n: int, k: int, w: int) -> np.ndarray:
    patterns = []
    for cols in itertools.combinations(range(k), w):
        row = np.zeros(k, dtype=np.uint8)
        row[list(cols)] = 1
        patterns.append(row)
    patterns = np.array(patterns, dtype=np.uint8).reshape(-1, k)
    choice = np.array(list(itertools.product(range(len(patterns)), repeat=n)), dtype=np.int64).reshape(-1, n)
    return patterns[choice]


@lru_cache(maxsize=64)
def _bsc_pc_table(n: int, k: int, eps: float) -> tuple[np.ndarray, np.ndarray]:
    mats = _bernoulli_matrices(n, k)
    pcs = []
    chunk = max(1, 1_000_000 // (1 << (n + k)))
    for s in range(0, len(mats), chunk):
        pcs.append(_pc_bsc_from_codewords(_int_codewords(mats[s:s + chunk]), n, k, eps))
    return np.concatenate(pcs), mats.reshape(len(mats), -1).sum(axis=1)


def _enumerate_ensemble(spec: EnsembleSpec):
    """(matrices, probabilities) over the whole ensemble."""
    n, k = spec.n, spec.k
    if spec.kind == BERNOULLI:
        if n * k > EXACT_BERNOULLI_MAX_NK:
            raise SizeGuardError("exact_ensemble_avg.nk<=16", f"n*k={n * k} exceeds the exhaustive guard")
        mats = _bernoulli_matrices(n, k)
        wt = mats.reshape(len(mats), -1).sum(axis=1)
        probs = xlogy(wt, spec.rho) + xlog1py(n * k - wt, -spec.rho)
        return mats, np.exp(probs)
    count = math.comb(k, spec.row_weight) ** n
    if count > EXACT_ROW_REGULAR_MAX:
        raise SizeGuardError("exact_ensemble_avg.rows<=1e6", f"{count} row-regular matrices exceed the guard")
    mats = _row_regular_matrices(n, k, spec.row_weight)
    return mats, np.full(len(mats), 1.0 / len(mats))


def exact_ensemble_avg(spec: EnsembleSpec, channel: ChannelSpec) -> float:
    """E_A[p_c(A)] by full enumeration of the ensemble."""
    n, k, eps = spec.n, spec.k, channel.epsilon
    if channel.kind == BSC:
        _check_bsc_size(n, k)
        if spec.kind == BERNOULLI:
            if n * k > EXACT_BERNOULLI_MAX_NK:
                raise SizeGuardError("exact_ensemble_avg.nk<=16", f"n*k={n * k} exceeds the exhaustive guard")
            pcs, wt = _bsc_pc_table(n, k, float(eps))
            logp = xlogy(wt, spec.rho) + xlog1py(n * k - wt, -spec.rho)
            return math.fsum(np.exp(logp) * pcs)
        mats, probs = _enumerate_ensemble(spec)
        pcs = []
        chunk = max(1, 1_000_000 // (1 << (n + k)))
        for s in range(0, len(mats), chunk):
            pcs.append(_pc_bsc_from_codewords(_int_codewords(mats[s:s + chunk]), n, k, eps))
        return math.fsum(probs * np.concatenate(pcs))
    mats, probs = _enumerate_ensemble(spec)
    total = []
    for mat, p in zip(mats, probs):
        if p:
            total.append(p * exact_pc_bec(BitMatrix.from_dense(mat), eps))
    return math.fsum(total)


def _sample_typical(spec, trial_seed, typicality):
    """Rejection-sample one matrix; returns (dense, rejections)."""
    rejections = 0
    attempt = 0
    while True:
        dense = sample_dense(spec, substream(trial_seed, attempt))
        attempt += 1
        if typicality is None or spec.n * spec.k == 0:
            return dense, rejections
        if abs(dense.mean() - typicality.rho_target) < typicality.eta:
            return dense, rejections
        rejections += 1
        if attempt >= 1000:
            raise RuntimeError("typicality filter rejected 1000 consecutive samples")


def _posterior_mass_of_sent(a: BitMatrix, eps: float, gen: np.random.Generator, pairs: int) -> float:
    """Average of P(x | A x + noise) over sampled (message, noise) pairs."""
    cw = all_codewords(a)
    n = a.rows
    msgs = gen.integers(0, 1 << a.cols, size=pairs)
    noise = gf2.pack_bits(gen.random((pairs, n)) < eps)
    log_table = xlogy(np.arange(n + 1), eps) + xlog1py(n - np.arange(n + 1), -eps)
    out = np.empty(pairs)
    for p in range(pairs):
        y = cw[msgs[p]] ^ noise[p]
        d = np.bitwise_count(cw ^ y).sum(axis=1, dtype=np.int64)
        counts = np.bincount(d, minlength=n + 1)
        with np.errstate(divide="ignore"):
            log_norm = logsumexp(np.log(counts) + log_table)
        out[p] = math.exp(log_table[d[msgs[p]]] - log_norm)
    return float(out.mean())


def mc_ensemble_pc(
    spec: EnsembleSpec,
    channel: ChannelSpec,
    trials: int,
    seed: int = DEFAULT_SEED,
    typicality: Optional[TypicalityParams] = None,
    pairs_per_matrix: int = 4,
    erasures_per_matrix: int = 1,
) -> McEstimate:
    """Monte Carlo estimate of E_A[p_c(A)], optionally restricted to typical
    matrices by rejection sampling."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n, k, eps = spec.n, spec.k, channel.epsilon
    if channel.kind == BSC and k > 24:
        raise SizeGuardError("posterior.k<=24", f"k={k} exceeds the enumeration guard")
    samples = np.empty(trials)
    rejections = 0
    for t in range(trials):
        trial_seed = substream_seed(seed, t)
        dense, rej = _sample_typical(spec, substream_seed(trial_seed, 0), typicality)
        rejections += rej
        a = BitMatrix.from_dense(dense)
        chan_gen = substream(trial_seed, 1)
        if channel.kind == BSC:
            if n <= EXACT_BSC_MAX_N and k <= EXACT_BSC_MAX_K:
                samples[t] = exact_pc_bsc(a, eps)
            else:
                samples[t] = _posterior_mass_of_sent(a, eps, chan_gen, pairs_per_matrix)
        else:
            keep = chan_gen.random((erasures_per_matrix, n)) >= eps
            ranks = _kernels.masked_ranks(a.data, k, keep) if k else np.zeros(erasures_per_matrix)
            samples[t] = float(np.exp2(ranks - k).mean())
    if typicality is not None and rejections / (rejections + trials) > MAX_REJECTION_RATE:
        raise ValueError(f"typicality filter infeasible: {rejections} rejections for {trials} accepted samples")
    return _estimate(samples, seed, rejections)


def mc_pc_bec_fixed(a: BitMatrix, eps: float, trials: int, seed: int = DEFAULT_SEED, block: int = 4096) -> McEstimate:
    """Monte Carlo p_c of one fixed matrix on the BEC; trials are drawn in
    blocks, one substream per block."""
    samples = np.empty(trials)
    for b, start in enumerate(range(0, trials, block)):
        size = min(block, trials - start)
        keep = substream(seed, b).random((size, a.rows)) >= eps
        ranks = _kernels.masked_ranks(a.data, a.cols, keep) if a.cols else np.zeros(size)
        samples[start:start + size] = np.exp2(ranks - a.cols)
    return _estimate(samples, seed)


def mc_expected_rank(spec: EnsembleSpec, trials: int, seed: int = DEFAULT_SEED) -> McEstimate:
    """Mean GF(2) rank of spec.n x spec.k ensemble matrices."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    ranks = np.empty(trials)
    for t in range(trials):
        dense = sample_dense(spec, substream(seed, t))
        ranks[t] = gf2.rank(BitMatrix.from_dense(dense))
    return _estimate(ranks, seed)


def convergence_experiment(
    n_grid: Sequence[int],
    rate: float,
    channel: ChannelSpec,
    kind: str = BERNOULLI,
    rho: float = 0.3,
    matrices_per_n: int = 50,
    delta: float = 0.1,
    seed: int = DEFAULT_SEED,
    erasure_trials: int = 2000,
) -> ConvergenceReport:
    """Fraction of independently drawn matrices whose error probability
    exceeds delta, for each blocklength.

    BSC error probabilities are exact (so n <= 16, k <= 12); BEC ones are
    estimated from ``erasure_trials`` erasure patterns per matrix.
    """
    from .bounds import rate_to_k

    records = []
    for g, n in enumerate(n_grid):
        k = rate_to_k(n, rate)
        spec = EnsembleSpec.with_density(kind, n, k, rho)
        if channel.kind == BSC:
            _check_bsc_size(n, k)
        grid_seed = substream_seed(seed, g)
        pes = []
        for m in range(matrices_per_n):
            mat_seed = substream_seed(grid_seed, m)
            a = BitMatrix.from_dense(sample_dense(spec, substream(mat_seed, 0)))
            if channel.kind == BSC:
                pc = exact_pc_bsc(a, channel.epsilon)
            else:
                pc = mc_pc_bec_fixed(a, channel.epsilon, erasure_trials, substream_seed(mat_seed, 1)).mean
            pes.append(max(0.0, 1.0 - pc))
        frac = sum(p > delta for p in pes) / len(pes) if pes else 0.0
        records.append(ConvergenceRecord(n, k, len(pes), tuple(pes), frac))
    return ConvergenceReport(tuple(records), delta)
