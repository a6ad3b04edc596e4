"""Closed-form statistics behind the certification protocol.

Covers the sampling-without-replacement tail bound (Serfling's inequality),
the per-round confidence factors and certified-count pigeonhole bound that
follow from it, the overall confidence level, the copy-count comparison
against fixed-confidence protocols, and the acceptance probability of an
i.i.d. noisy source.

``nu`` is pinned to sqrt(c)/n**2 throughout the protocol path; the free-nu
form is exposed only through :func:`serfling_tail` and the exact enumeration
oracle used to validate it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import mpmath
from scipy.special import gammaln, logsumexp


@dataclass(frozen=True)
class SerflingQuery:
    """Parameters of one tail query: complement size N, sample size K, slack nu."""

    N: int
    K: int
    nu: float

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if not (0.0 < float(self.nu) < 1.0):
            raise ValueError(f"nu must lie in (0, 1), got {self.nu}")


def serfling_tail(q: SerflingQuery) -> float:
    """Upper bound on Pr[sum over complement >= (N/K) sum over sample + N nu].

    The bound is exp(-2 nu^2 N K^2 / ((N + K) (K + 1))) for binary populations
    sampled uniformly without replacement.
    """
    N, K, nu = q.N, q.K, float(q.nu)
    return math.exp(-2.0 * nu * nu * N * K * K / ((N + K) * (K + 1)))


def exact_sampling_tail(population, K: int, nu) -> Fraction:
    """Exact Pr[sum over complement >= (N/K) sum over sample + N nu].

    Brute-force enumeration over all C(T, K) equally likely samples of a
    binary population (independent ground truth for :func:`serfling_tail`).
    ``nu`` may be a Fraction for an exact event definition.
    """
    pop = tuple(int(y) for y in population)
    if any(y not in (0, 1) for y in pop):
        raise ValueError("population must be binary")
    T = len(pop)
    if not (1 <= K <= T - 1):
        raise ValueError(f"need 1 <= K <= T-1, got K={K}, T={T}")
    N = T - K
    nu = Fraction(nu)
    total = Fraction(sum(pop))
    hits = 0
    count = 0
    for sample in combinations(range(T), K):
        count += 1
        s = sum(pop[j] for j in sample)
        if total - s >= Fraction(N, K) * s + N * nu:
            hits += 1
    return Fraction(hits, count)


def group_confidence(n: int, n_test: int, i: int, nu: float) -> float:
    """Confidence q_i that round i's extrapolation holds, at N_total = 2 n N_test.

    Equals 1 - serfling_tail with N = (2n - i) N_test and K = N_test after
    algebraic rewriting.
    """
    if not (1 <= i <= n):
        raise ValueError(f"round index i must lie in [1, {n}], got {i}")
    if n_test < 1:
        raise ValueError("n_test must be >= 1")
    if nu == 0.0:
        return 0.0
    expo = (
        -2.0
        * nu
        * nu
        * n_test
        * (1.0 / (1.0 + 1.0 / (2 * n - i)))
        * (1.0 / (1.0 + 1.0 / n_test))
    )
    return 1.0 - math.exp(expo)


def certified_count(n: int, n_test: int, n_pass, c: float) -> int:
    """Pigeonhole lower bound on registers (of the n N_test unmeasured ones)
    that would pass every stabilizer test, at nu = sqrt(c)/n**2.

    Clamped below at zero.
    """
    if n_test == 0:
        raise ValueError("n_test must be nonzero")
    raw = (n - 2.0 * math.sqrt(c) - 2.0 * n * n + 2.0 * n * n_pass / n_test) * n_test
    return max(math.ceil(raw), 0)


@dataclass(frozen=True)
class ConfidenceChain:
    """Intermediate quantities of the confidence derivation, for audit."""

    q_n_power_n: float
    middle: float  # (1 - n^{-5c/64})^n
    final: float  # 1 - n^{1-5c/64}


def total_confidence(n: int, c: float, with_chain: bool = False):
    """Overall confidence 1 - n^(1 - 5c/64) that the certified count holds.

    With ``with_chain=True`` returns a :class:`ConfidenceChain` exposing the
    intermediate inequality chain q_n^n >= (1 - n^(-5c/64))^n > 1 - n^(1-5c/64)
    evaluated at N_test = ceil(5 n^4 ln n / 32).
    """
    final = 1.0 - float(n) ** (1.0 - 5.0 * c / 64.0)
    if not with_chain:
        return final
    n_test = compute_n_test(n)
    nu = math.sqrt(c) / n**2
    qn = group_confidence(n, max(n_test, 1), n, nu)
    middle = (1.0 - float(n) ** (-5.0 * c / 64.0)) ** n
    return ConfidenceChain(q_n_power_n=qn**n, middle=middle, final=final)


def compute_n_test(n: int) -> int:
    """Tests per stabilizer round: ceil(5 n^4 ln(n) / 32), natural logarithm.

    Evaluated at 50 decimal digits so the ceiling is exact even when the
    argument sits near an integer.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    with mpmath.workdps(50):
        val = 5 * mpmath.mpf(n) ** 4 * mpmath.log(n) / 32
        return int(mpmath.ceil(val))


def comparison_copies(n: int, c: float) -> tuple[float, float]:
    """Copy count M = n^(5c/64) / (2 sqrt(c) + 1) a fixed-confidence protocol
    needs to match this one's fidelity and confidence, plus the exponent
    t = 5c/64 of its scaling O(n^t).
    """
    if c <= 64.0 / 5.0:
        raise ValueError(f"c must exceed 64/5, got {c}")
    t = 5.0 * c / 64.0
    m = float(n) ** t / (2.0 * math.sqrt(c) + 1.0)
    return m, t


def p_acc(n: int, n_test: int, epsilon: float) -> float:
    """Acceptance probability against an i.i.d. source that emits a state
    failing its test with probability epsilon per register.

    Binomial tail sum_{k=0}^{floor(N_test/(2n))} C(nN_test, k)
    (1-eps)^(nN_test-k) eps^k, accumulated in log space.
    """
    if not (0.0 <= epsilon <= 1.0):
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    m = n * n_test  # tested registers
    kmax = n_test // (2 * n)
    if epsilon == 0.0:
        return 1.0
    if epsilon == 1.0:
        return 1.0 if kmax >= m else 0.0
    kmax = min(kmax, m)
    ks = range(kmax + 1)
    log_terms = [
        gammaln(m + 1)
        - gammaln(k + 1)
        - gammaln(m - k + 1)
        + (m - k) * math.log1p(-epsilon)
        + k * math.log(epsilon)
        for k in ks
    ]
    return float(min(1.0, math.exp(logsumexp(log_terms))))


def p_acc_prior(m: float, epsilon: float) -> float:
    """Acceptance probability (1 - eps)^(M - 1) of the fixed-confidence
    comparison protocol against the same i.i.d. source."""
    if m < 1:
        raise ValueError(f"M must be >= 1, got {m}")
    if not (0.0 <= epsilon <= 1.0):
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    return (1.0 - epsilon) ** (m - 1.0)
