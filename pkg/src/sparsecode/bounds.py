"""Achievability lower bounds on the ensemble-average probability of correct
detection, plus the analyses built on top of them.

Every bound has the form

    value = sum_i  C(n,i) eps^i (1-eps)^(n-i) * r_i,     0 <= r_i <= 1,

where ``i`` is the number of channel errors (BSC) or erasures (BEC). The BSC
ratio is

    r_i = eps^i (1-eps)^(n-i) / sum_j C(k,j) g_j^i (1-g_j)^(n-i),
    g_j = eps + (1 - 2 eps) * P(odd overlap of one row with a weight-j message),

which covers both the Bernoulli and the row-regular ensembles; the j = 0 term
of the denominator equals the numerator. Inner sums are evaluated in the log
domain. The error side ``pe_upper`` is accumulated directly from
``1 - r_i = (sum_{j>=1}) / (sum_{j>=0})`` rather than as ``1 - value`` so that
very small error probabilities keep their relative precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp, xlog1py, xlogy
from scipy.stats import norm

from . import gf2
from .channel import BEC, BSC, ChannelSpec, binary_entropy
from .ensemble import BERNOULLI, EnsembleSpec, parity_split, sample_dense
from .rng import DEFAULT_SEED, substream

LN2 = math.log(2.0)

CORRECTED = "corrected"
PRINTED = "printed"


@dataclass(frozen=True)
class BoundResult:
    value: float
    pe_upper: float
    log2_pe_upper: float
    method: str
    i_values: np.ndarray = field(repr=False)
    log_weights: np.ndarray = field(repr=False)
    log_ratios: np.ndarray = field(repr=False)
    window: Optional[tuple[int, int]] = None
    window_mass: float = 1.0
    std_error: Optional[float] = None
    term_std_errors: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def terms(self) -> list[tuple[int, float, float]]:
        """(i, log binomial weight, log ratio) for every evaluated i."""
        return [(int(i), float(w), float(r)) for i, w, r in zip(self.i_values, self.log_weights, self.log_ratios)]


@dataclass(frozen=True)
class RatePoint:
    n: int
    k_star: int
    rate: float
    target_pe: float
    achieved_pe_bound: float
    scanned: int = 0
    non_monotone_at: tuple[int, ...] = ()


@dataclass(frozen=True)
class ExponentFit:
    points: tuple[tuple[int, float], ...]
    slope_bits_per_symbol: float
    intercept: float
    r_squared: float


@dataclass(frozen=True)
class BoundDiagnostics:
    max_a_ji: float
    b_values: np.ndarray = field(repr=False)
    i_window: tuple[float, float] = (0.0, 0.0)
    max_a_at_center: float = float("nan")
    limit_a: float = float("nan")
    premise_holds: bool = False


def log_comb(n, r):
    n = np.asarray(n, dtype=float)
    r = np.asarray(r, dtype=float)
    return gammaln(n + 1.0) - gammaln(r + 1.0) - gammaln(n - r + 1.0)


def binomial_log_weights(n: int, eps: float, i: np.ndarray) -> np.ndarray:
    """log C(n,i) eps^i (1-eps)^(n-i)."""
    return log_comb(n, i) + xlogy(i, eps) + xlog1py(n - i, -eps)


def noise_window(n: int, eps: float, delta: float) -> tuple[int, int]:
    """Integer noise weights inside [n(eps - delta), n(eps + delta)]."""
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"window delta must lie in (0, 1], got {delta}")
    lo = max(0, math.ceil(n * (eps - delta) - 1e-9))
    hi = min(n, math.floor(n * (eps + delta) + 1e-9))
    if lo > hi:
        raise ValueError(f"empty window for n={n}, eps={eps}, delta={delta}")
    return lo, hi


def disagreement_bases(spec: EnsembleSpec, eps: float, convention: str = CORRECTED):
    """Per-j log bases (for the i noisy rows, for the n-i clean rows).

    ``corrected`` puts eps*P(even) + (1-eps)*P(odd) on the noisy rows, which
    makes the j = 0 term reproduce the numerator. ``printed`` swaps the two
    bases and exists only so that the swap can be shown to fail.
    """
    odd, even = parity_split(spec)
    g = eps + (1.0 - 2.0 * eps) * odd
    one_minus_g = eps + (1.0 - 2.0 * eps) * even
    with np.errstate(divide="ignore"):
        log_g = np.log(g)
        log_1mg = np.log(one_minus_g)
    # j = 0 overlaps are always even; pin these to the numerator's exact ops
    log_g[0] = math.log(eps) if eps > 0 else -math.inf
    log_1mg[0] = math.log1p(-eps)
    if convention == CORRECTED:
        return log_g, log_1mg
    if convention == PRINTED:
        return log_1mg, log_g
    raise ValueError(f"unknown convention {convention!r}")


def _log_numerator(n: int, eps: float, i: np.ndarray) -> np.ndarray:
    return xlogy(i, eps) + xlog1py(n - i, -eps)


def _denominator_terms(n, k, i, log_b_noisy, log_b_clean):
    j = np.arange(k + 1, dtype=float)
    ii = np.asarray(i, dtype=float)[:, None]
    # xlogy-style guards: a zero exponent contributes 0 even when the base is 0
    with np.errstate(invalid="ignore"):
        noisy = np.where(ii > 0, ii * log_b_noisy[None, :], 0.0)
        clean = np.where(n - ii > 0, (n - ii) * log_b_clean[None, :], 0.0)
    return log_comb(k, j)[None, :] + noisy + clean


def j0_log_gap(spec: EnsembleSpec, eps: float, i: int, convention: str = CORRECTED) -> float:
    """|log(j = 0 denominator term) - log(numerator)| at noise weight i."""
    log_noisy, log_clean = disagreement_bases(spec, eps, convention)
    term0 = _denominator_terms(spec.n, spec.k, np.array([i]), log_noisy, log_clean)[0, 0]
    return abs(float(term0 - _log_numerator(spec.n, eps, np.array([i]))[0]))


def _check_bsc_eps(eps: float) -> None:
    if not 0.0 <= eps < 0.5:
        raise ValueError(f"BSC bound requires 0 <= eps < 1/2, got {eps}")


def _assemble(n, eps, i_eval, log_ratio, log_one_minus, method, window, std_error=None, term_se=None):
    all_i = np.arange(n + 1, dtype=float)
    log_w_all = binomial_log_weights(n, eps, all_i)
    inside = np.zeros(n + 1, dtype=bool)
    inside[i_eval.astype(int)] = True
    log_w = log_w_all[inside]
    weight_ok = np.isfinite(log_w)
    contrib = np.where(weight_ok, log_w + log_ratio, -np.inf)
    value = math.fsum(np.exp(contrib))
    err_terms = np.concatenate([np.where(weight_ok, log_w + log_one_minus, -np.inf), log_w_all[~inside]])
    log_pe = float(logsumexp(err_terms)) if err_terms.size else -math.inf
    window_mass = math.fsum(np.exp(log_w)) if window is not None else 1.0
    value = min(1.0, max(0.0, value))
    return BoundResult(
        value=value,
        pe_upper=min(1.0, math.exp(log_pe)),
        log2_pe_upper=min(0.0, log_pe / LN2),
        method=method,
        i_values=i_eval.astype(int),
        log_weights=log_w,
        log_ratios=log_ratio,
        window=window,
        window_mass=window_mass,
        std_error=std_error,
        term_std_errors=term_se,
    )


def bsc_ensemble_bound(spec: EnsembleSpec, eps: float, window: Optional[float] = None) -> BoundResult:
    """Lower bound on E_A[p_c(A)] over a BSC with crossover probability eps.

    ``window`` restricts the noise-weight sum to [n(eps-delta), n(eps+delta)];
    weights outside the window count fully as errors in ``pe_upper`` and are
    dropped from ``value``, so truncation can only lower the bound.
    """
    _check_bsc_eps(eps)
    n, k = spec.n, spec.k
    win = noise_window(n, eps, window) if window is not None else None
    lo, hi = win if win else (0, n)
    i_eval = np.arange(lo, hi + 1, dtype=float)

    log_noisy, log_clean = disagreement_bases(spec, eps)
    log_num = _log_numerator(n, eps, i_eval)
    log_ratio = np.empty_like(i_eval)
    log_one_minus = np.empty_like(i_eval)
    chunk = max(1, 4_000_000 // (k + 1))
    for s in range(0, i_eval.size, chunk):
        sl = slice(s, s + chunk)
        terms = _denominator_terms(n, k, i_eval[sl], log_noisy, log_clean)
        log_den = logsumexp(terms, axis=1)
        rest = logsumexp(terms[:, 1:], axis=1) if k > 0 else np.full(terms.shape[0], -np.inf)
        possible = np.isfinite(log_num[sl])
        with np.errstate(invalid="ignore"):
            # impossible noise weights carry zero binomial weight; give them
            # ratio 0 so every reported term stays a number
            log_ratio[sl] = np.where(possible, np.minimum(0.0, log_num[sl] - log_den), -np.inf)
            log_one_minus[sl] = np.where(possible, np.minimum(0.0, rest - log_den), 0.0)
    method = "bernoulli" if spec.kind == BERNOULLI else "row_regular"
    return _assemble(n, eps, i_eval, log_ratio, log_one_minus, method, win)


def _trial_prefix_ranks(spec: EnsembleSpec, trials: int, seed: int) -> np.ndarray:
    out = np.empty((trials, spec.n + 1), dtype=np.int64)
    for t in range(trials):
        dense = sample_dense(spec, substream(seed, t))
        if spec.k == 0:
            out[t] = 0
        else:
            out[t] = gf2._kernels.prefix_ranks(gf2.pack_bits(dense), spec.k)
    return out


def bec_bound(
    spec: EnsembleSpec,
    eps: float,
    estimator: str = "jensen",
    trials: int = 200,
    seed: int = DEFAULT_SEED,
    window: Optional[float] = None,
) -> BoundResult:
    """Monte Carlo evaluation of the BEC bound.

    With i erasures the decoder sees an (n-i) x k ensemble matrix and succeeds
    with probability 2^(rank - k). Rows are i.i.d., so the first n-i rows of
    one n x k sample have the right law for every i at once; each trial draws
    one matrix and reads off all prefix ranks.

    ``jensen`` gives sum_i w_i 2^(E[rank] - k); ``direct`` gives
    sum_i w_i E[2^(rank - k)], an unbiased estimate of E_A[p_c].
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"erasure probability must lie in [0, 1), got {eps}")
    if estimator not in ("jensen", "direct"):
        raise ValueError(f"unknown estimator {estimator!r}")
    n, k = spec.n, spec.k
    win = noise_window(n, eps, window) if window is not None else None
    lo, hi = win if win else (0, n)
    i_eval = np.arange(lo, hi + 1)
    ranks = _trial_prefix_ranks(spec, trials, seed)[:, n - i_eval].astype(float)
    ddof = 1 if trials > 1 else 0
    deficit = ranks - k  # <= 0

    if estimator == "jensen":
        mean_def = deficit.mean(axis=0)
        log_ratio = mean_def * LN2
        with np.errstate(divide="ignore"):
            log_one_minus = np.log(-np.expm1(log_ratio))
        est = np.exp(log_ratio)
        term_se = LN2 * est * deficit.std(axis=0, ddof=ddof) / math.sqrt(trials)
        per_trial = (deficit - mean_def) * (LN2 * est)
    else:
        succ = np.exp2(deficit)
        est = succ.mean(axis=0)
        with np.errstate(divide="ignore"):
            log_ratio = np.log(est)
            log_one_minus = np.log((-np.expm1(deficit * LN2)).mean(axis=0))
        term_se = succ.std(axis=0, ddof=ddof) / math.sqrt(trials)
        per_trial = succ
    weights = np.exp(binomial_log_weights(n, eps, i_eval.astype(float)))
    combined = per_trial @ weights
    std_error = float(combined.std(ddof=ddof) / math.sqrt(trials)) if trials > 1 else float("nan")
    return _assemble(
        n, eps, i_eval.astype(float), log_ratio, log_one_minus, f"bec_{estimator}", win,
        std_error=std_error, term_se=term_se,
    )


def channel_bound(
    spec: EnsembleSpec,
    channel: ChannelSpec,
    window: Optional[float] = None,
    estimator: str = "jensen",
    trials: int = 200,
    seed: int = DEFAULT_SEED,
) -> BoundResult:
    if channel.kind == BSC:
        return bsc_ensemble_bound(spec, channel.epsilon, window)
    return bec_bound(spec, channel.epsilon, estimator, trials, seed, window)


def max_rate(
    n: int,
    channel: ChannelSpec,
    kind: str,
    rho: float,
    target_pe: float,
    window: Optional[float] = None,
    estimator: str = "jensen",
    trials: int = 200,
    seed: int = DEFAULT_SEED,
) -> RatePoint:
    """Largest k whose bound guarantees pe_upper <= target_pe.

    Monotonicity of the bound in k is not established, so every k is checked
    while descending from ceil(n C); points where the error bound got worse as
    k decreased are recorded in ``non_monotone_at``.
    """
    if not 0.0 < target_pe < 1.0:
        raise ValueError("target_pe must lie in (0, 1)")
    start = min(n, math.ceil(n * channel.capacity() - 1e-12))
    prev_pe = None
    non_monotone = []
    scanned = 0
    for k in range(start, -1, -1):
        spec = EnsembleSpec.with_density(kind, n, k, rho)
        pe = channel_bound(spec, channel, window, estimator, trials, seed).pe_upper
        scanned += 1
        if prev_pe is not None and pe > prev_pe:
            non_monotone.append(k)
        if pe <= target_pe:
            return RatePoint(n, k, k / n if n else 0.0, target_pe, pe, scanned, tuple(non_monotone))
        prev_pe = pe
    raise AssertionError("unreachable: k = 0 always meets any positive target")


def exponent_fit(points: Sequence[tuple[int, float]], log2_domain: bool = False) -> ExponentFit:
    """Least-squares slope of -log2(pe_upper) against n, in bits per symbol.

    With ``log2_domain`` the second coordinate is already log2(pe_upper), which
    lets callers pass error bounds that underflow a double.
    """
    pts = [(int(n), float(p)) for n, p in points]
    if len(pts) < 3:
        raise ValueError("an exponent fit needs at least 3 points")
    ns = np.array([p[0] for p in pts], dtype=float)
    vals = np.array([p[1] for p in pts])
    if log2_domain:
        if np.any(~np.isfinite(vals)) or np.any(vals >= 0.0):
            raise ValueError("log2(pe_upper) must be finite and negative")
        y = -vals
    else:
        if np.any((vals <= 0.0) | (vals >= 1.0)):
            raise ValueError("pe_upper must lie strictly inside (0, 1)")
        y = -np.log2(vals)
    slope, intercept = np.polyfit(ns, y, 1)
    resid = y - (slope * ns + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    r2 = 1.0 if ss_tot == 0.0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return ExponentFit(tuple(pts), float(slope), float(intercept), r2)


def lemma2_margin(
    spec: EnsembleSpec,
    eps: float,
    i_values: Optional[Sequence[float]] = None,
) -> BoundDiagnostics:
    """Per-row disagreement b(j) and the normalized term a(j, i).

    a(j,i) = ((b/eps)^(i/n) ((1-b)/(1-eps))^((n-i)/n))^(n/k), so the j-th
    denominator term relative to the numerator is C(k,j) a(j,i)^k. The
    default i range is n*eps +/- 3 binomial standard deviations. The premise
    needs a(j,i) < 1 for j >= 1 and a limiting value 2^(-C/R) below 1/2.
    """
    _check_bsc_eps(eps)
    if eps == 0.0:
        raise ValueError("margins are undefined at eps = 0")
    n, k = spec.n, spec.k
    if k == 0:
        raise ValueError("margins need k >= 1")
    rate = k / n
    odd, even = parity_split(spec)
    b = eps + (1.0 - 2.0 * eps) * odd
    one_minus_b = eps + (1.0 - 2.0 * eps) * even
    center = n * eps
    if i_values is None:
        half = 3.0 * math.sqrt(n * eps * (1.0 - eps))
        i_arr = np.arange(math.ceil(center - half), math.floor(center + half) + 1, dtype=float)
        i_arr = np.unique(np.clip(np.append(i_arr, center), 0, n))
    else:
        i_arr = np.asarray(i_values, dtype=float)
    frac = i_arr[:, None] / n
    log_a = (frac * np.log(b[None, 1:] / eps) + (1.0 - frac) * np.log(one_minus_b[None, 1:] / (1.0 - eps))) / rate
    log_a_center = (eps * np.log(b[1:] / eps) + (1.0 - eps) * np.log(one_minus_b[1:] / (1.0 - eps))) / rate
    capacity = 1.0 - binary_entropy(eps)
    limit_a = 2.0 ** (-capacity / rate)
    max_a = float(np.exp(log_a.max()))
    return BoundDiagnostics(
        max_a_ji=max_a,
        b_values=b,
        i_window=(float(i_arr.min()), float(i_arr.max())),
        max_a_at_center=float(np.exp(log_a_center.max())),
        limit_a=limit_a,
        premise_holds=bool(max_a < 1.0 and limit_a < 0.5),
    )


@dataclass(frozen=True)
class SweepPoint:
    n: int
    k: int
    rho: float
    result: BoundResult


def rate_to_k(n: int, rate: float) -> int:
    return int(math.floor(n * rate + 0.5))


def density_schedule(n: int, gamma: Optional[float] = None, c: Optional[float] = None) -> float:
    """n^-gamma or c ln(n)/n, clipped to (0, 1/2]."""
    if (gamma is None) == (c is None):
        raise ValueError("give exactly one of gamma or c")
    if gamma is not None:
        if not 0.0 < gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        rho = n ** (-gamma)
    else:
        if c <= 0:
            raise ValueError("c must be positive")
        rho = c * math.log(n) / n
    return min(0.5, rho)


def vanishing_density_sweep(
    channel: ChannelSpec,
    n_grid: Sequence[int],
    r_over_c: float,
    gamma: Optional[float] = None,
    c: Optional[float] = None,
    estimator: str = "jensen",
    trials: int = 200,
    seed: int = DEFAULT_SEED,
) -> list[SweepPoint]:
    """Bound values along a vanishing-density schedule. Observational only."""
    if channel.kind == BSC and gamma is None:
        raise ValueError("the BSC sweep uses rho(n) = n^-gamma")
    if channel.kind == BEC and c is None:
        raise ValueError("the BEC sweep uses rho(n) = c ln(n)/n")
    out = []
    for n in n_grid:
        rho = density_schedule(n, gamma=gamma, c=c)
        k = rate_to_k(n, r_over_c * channel.capacity())
        spec = EnsembleSpec.bernoulli(n, k, rho)
        out.append(SweepPoint(n, k, rho, channel_bound(spec, channel, None, estimator, trials, seed)))
    return out


def normal_approx_rate(n: int, eps: float, target_pe: float) -> float:
    """C - sqrt(V/n) Q^-1(pe) + log2(n)/(2n) for the BSC."""
    if not 0.0 < eps < 0.5:
        raise ValueError("normal approximation needs 0 < eps < 1/2")
    if not 0.0 < target_pe < 1.0:
        raise ValueError("target_pe must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be positive")
    capacity = 1.0 - binary_entropy(eps)
    dispersion = eps * (1.0 - eps) * math.log2((1.0 - eps) / eps) ** 2
    return capacity - math.sqrt(dispersion / n) * float(norm.isf(target_pe)) + math.log2(n) / (2.0 * n)
