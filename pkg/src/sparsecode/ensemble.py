"""Random generating-matrix ensembles and the single-row parity statistics
that drive the achievability bounds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from . import gf2
from .gf2 import BitMatrix
from .rng import generator

BERNOULLI = "bernoulli"
ROW_REGULAR = "row_regular"

_KIND_ALIASES = {
    "bernoulli": BERNOULLI,
    "row_regular": ROW_REGULAR,
    "rowregular": ROW_REGULAR,
    "row-regular": ROW_REGULAR,
}


def parse_kind(kind: str) -> str:
    try:
        return _KIND_ALIASES[kind.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown ensemble kind {kind!r}") from None


@dataclass(frozen=True)
class EnsembleSpec:
    """Bernoulli(n, k, rho) or uniform row-regular matrices with row weight w."""

    kind: str
    n: int
    k: int
    rho: Optional[float] = None
    row_weight: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", parse_kind(self.kind))
        if self.n < 0 or self.k < 0:
            raise ValueError("n and k must be non-negative")
        if self.kind == BERNOULLI:
            if self.rho is None or self.row_weight is not None:
                raise ValueError("a Bernoulli ensemble takes rho and no row_weight")
            if not 0.0 <= self.rho <= 1.0:
                raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        else:
            if self.row_weight is None or self.rho is not None:
                raise ValueError("a row-regular ensemble takes row_weight and no rho")
            if not 0 <= self.row_weight <= self.k:
                raise ValueError(f"row_weight must lie in [0, k], got {self.row_weight}")

    @classmethod
    def bernoulli(cls, n: int, k: int, rho: float) -> "EnsembleSpec":
        return cls(BERNOULLI, n, k, rho=float(rho))

    @classmethod
    def row_regular(cls, n: int, k: int, row_weight: int) -> "EnsembleSpec":
        return cls(ROW_REGULAR, n, k, row_weight=int(row_weight))

    @classmethod
    def row_regular_from_density(cls, n: int, k: int, rho: float) -> "EnsembleSpec":
        """Row weight round(k * rho); callers that care should log the rounding."""
        return cls.row_regular(n, k, round_row_weight(k, rho))

    @classmethod
    def with_density(cls, kind: str, n: int, k: int, rho: float) -> "EnsembleSpec":
        if parse_kind(kind) == BERNOULLI:
            return cls.bernoulli(n, k, rho)
        return cls.row_regular_from_density(n, k, rho)

    @property
    def rho_or_w(self) -> float | int:
        return self.rho if self.kind == BERNOULLI else self.row_weight

    @property
    def nominal_density(self) -> float:
        if self.kind == BERNOULLI:
            return self.rho
        return self.row_weight / self.k if self.k else 0.0

    def resized(self, n: int | None = None, k: int | None = None) -> "EnsembleSpec":
        n = self.n if n is None else n
        k = self.k if k is None else k
        if self.kind == BERNOULLI:
            return EnsembleSpec.bernoulli(n, k, self.rho)
        return EnsembleSpec.row_regular(n, k, self.row_weight)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "n": self.n, "k": self.k}
        if self.kind == BERNOULLI:
            out["rho"] = self.rho
        else:
            out["row_weight"] = self.row_weight
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSpec":
        extra = set(d) - {"kind", "n", "k", "rho", "row_weight"}
        if extra:
            raise ValueError(f"unknown ensemble keys: {sorted(extra)}")
        return cls(d["kind"], int(d["n"]), int(d["k"]), rho=d.get("rho"), row_weight=d.get("row_weight"))


def round_row_weight(k: int, rho: float) -> int:
    # half-up rounding, not Python's banker's rounding
    return min(k, int(np.floor(k * rho + 0.5)))


@dataclass(frozen=True)
class TypicalityParams:
    rho_target: float
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")


def sample_dense(spec: EnsembleSpec, rng: np.random.Generator) -> np.ndarray:
    n, k = spec.n, spec.k
    if spec.kind == BERNOULLI:
        return (rng.random((n, k)) < spec.rho).astype(np.uint8)
    w = spec.row_weight
    # partial Fisher-Yates, all rows in lockstep
    perm = np.tile(np.arange(k), (n, 1))
    rows = np.arange(n)
    for t in range(w):
        j = t + rng.integers(0, k - t, size=n)
        chosen = perm[rows, j]
        perm[rows, j] = perm[rows, t]
        perm[rows, t] = chosen
    dense = np.zeros((n, k), dtype=np.uint8)
    if w:
        dense[rows[:, None], perm[:, :w]] = 1
    return dense


def sample(spec: EnsembleSpec, seed: int) -> BitMatrix:
    """Draw one matrix; deterministic in (spec, seed)."""
    return BitMatrix.from_dense(sample_dense(spec, generator(seed)))


def density(a: BitMatrix) -> float:
    if a.rows * a.cols == 0:
        raise ValueError("density of an empty matrix is undefined")
    return gf2.matrix_weight(a) / (a.rows * a.cols)


def is_typical(a: BitMatrix, p: TypicalityParams) -> bool:
    return abs(density(a) - p.rho_target) < p.eta


def _log_comb(n, r):
    return gammaln(np.asarray(n) + 1.0) - gammaln(np.asarray(r) + 1.0) - gammaln(np.asarray(n) - r + 1.0)


def _row_regular_log_overlap(k: int, w: int, parity: int) -> np.ndarray:
    """log sum_{q = parity mod 2} C(j,q) C(k-j,w-q) / C(k,w), for j = 0..k."""
    out = np.full(k + 1, -np.inf)
    q = np.arange(parity, w + 1, 2, dtype=float)
    if q.size == 0:
        return out
    log_total = float(_log_comb(k, w))
    chunk = max(1, 2_000_000 // q.size)
    for start in range(0, k + 1, chunk):
        j = np.arange(start, min(k + 1, start + chunk), dtype=float)[:, None]
        valid = (q <= j) & (w - q <= k - j)
        with np.errstate(invalid="ignore"):
            terms = np.where(valid, _log_comb(j, q) + _log_comb(k - j, w - q), -np.inf)
        out[start:start + j.shape[0]] = logsumexp(terms, axis=1) - log_total
    return out


def parity_split(spec: EnsembleSpec) -> tuple[np.ndarray, np.ndarray]:
    """(P(odd overlap), P(even overlap)) of one ensemble row with a weight-j
    message, for j = 0..k.

    Bernoulli rows use (1-2rho)^j held as sign and log-magnitude so large j
    neither underflows nor cancels. Row-regular rows use a log-domain
    hypergeometric parity sum for the odd part; the even part is its
    complement.
    """
    k = spec.k
    j = np.arange(k + 1, dtype=float)
    if spec.kind == BERNOULLI:
        rho = spec.rho
        if rho == 0.5:
            odd = np.where(j > 0, 0.5, 0.0)
            return odd, 1.0 - odd
        if rho < 0.5:
            log_mag = j * np.log1p(-2.0 * rho)
            sign = np.ones_like(j)
        else:
            log_mag = j * np.log1p(-2.0 * (1.0 - rho))
            sign = np.where(j % 2 == 0, 1.0, -1.0)
        # 1 - |t| without cancellation, and 1 + |t|
        one_minus = -np.expm1(log_mag)
        one_plus = 1.0 + np.exp(log_mag)
        odd = np.where(sign > 0, one_minus, one_plus) / 2.0
        even = np.where(sign > 0, one_plus, one_minus) / 2.0
        return odd, even
    odd = np.exp(_row_regular_log_overlap(k, spec.row_weight, 1))
    return odd, 1.0 - odd


def parity_odds(spec: EnsembleSpec, j: int) -> float:
    """Probability that one ensemble row has odd overlap with a fixed
    weight-j message."""
    if not 0 <= j <= spec.k:
        raise ValueError(f"j must lie in [0, {spec.k}], got {j}")
    if j == 0:
        return 0.0
    return float(parity_split(spec)[0][j])


def row_regular_even_split(k: int, w: int) -> np.ndarray:
    """Even-overlap probabilities summed independently of the odd ones."""
    return np.exp(_row_regular_log_overlap(k, w, 0))
