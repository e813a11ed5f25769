"""Slow, independent reference implementations used as test oracles."""

from fractions import Fraction
from itertools import product
from math import comb


def naive_rank(rows):
    """GF(2) rank of a list of 0/1 lists by row reduction on Python lists."""
    m = [list(r) for r in rows]
    if not m:
        return 0
    n_cols = len(m[0])
    rank = 0
    for c in range(n_cols):
        pivot = next((r for r in range(rank, len(m)) if m[r][c]), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        for r in range(len(m)):
            if r != rank and m[r][c]:
                m[r] = [a ^ b for a, b in zip(m[r], m[rank])]
        rank += 1
    return rank


def naive_mat_vec(rows, x):
    return [sum(a & b for a, b in zip(r, x)) % 2 for r in rows]


def closed_form_rho_half(n, k, eps):
    """Dense-ensemble bound sum_i C(n,i) 2^n e^{2i}(1-e)^{2(n-i)} /
    (2^n e^i (1-e)^{n-i} + 2^k - 1), exactly in rationals."""
    eps = Fraction(eps)
    total = Fraction(0)
    for i in range(n + 1):
        p = eps ** i * (1 - eps) ** (n - i)
        total += comb(n, i) * 2 ** n * p * p / (2 ** n * p + 2 ** k - 1)
    return total


def closed_form_rho_half_mp(n, k, eps, dps=50):
    """The same closed form in 50-digit floating point, for sizes where
    exact rationals get slow."""
    import mpmath

    with mpmath.workdps(dps):
        e = mpmath.mpf(eps)
        total = mpmath.mpf(0)
        for i in range(n + 1):
            p = e ** i * (1 - e) ** (n - i)
            total += mpmath.binomial(n, i) * 2 ** n * p * p / (2 ** n * p + 2 ** k - 1)
        return float(total)


def bernoulli_parity_odd(k, j, rho):
    """P(odd overlap) by summing over the j relevant entries, in rationals."""
    rho = Fraction(rho)
    return sum(comb(j, q) * rho ** q * (1 - rho) ** (j - q) for q in range(1, j + 1, 2))


def row_regular_parity_odd(k, w, j):
    """Enumerate all weight-w rows and count odd overlaps with 1^j 0^(k-j)."""
    odd = total = 0
    for bits in product((0, 1), repeat=k):
        if sum(bits) != w:
            continue
        total += 1
        odd += sum(bits[:j]) % 2
    return Fraction(odd, total)


def uniform_rank_counts(n, k):
    """Number of n x k GF(2) matrices of each rank r (classical product formula)."""
    counts = []
    for r in range(min(n, k) + 1):
        c = 1
        for i in range(r):
            c *= (2 ** n - 2 ** i) * (2 ** k - 2 ** i)
        d = 1
        for i in range(r):
            d *= 2 ** r - 2 ** i
        counts.append(c // d)
    return counts


def uniform_success_bec(n, k, eps):
    """E[p_c] on the BEC for uniformly random n x k matrices, exactly:
    sum_i C(n,i) eps^i (1-eps)^(n-i) E[2^(rank((n-i) x k) - k)]."""
    eps = Fraction(eps)
    total = Fraction(0)
    for i in range(n + 1):
        m = n - i
        counts = uniform_rank_counts(m, k)
        mean = sum(Fraction(c, 2 ** (m * k)) * Fraction(2 ** r, 2 ** k) for r, c in enumerate(counts))
        total += comb(n, i) * eps ** i * (1 - eps) ** m * mean
    return total
