"""
Indian Buffet Process mathematics: the mask density, the exchangeable
conditional used by the existing-feature step, the Poisson prior on new
features, the conjugate update of the strength α and a prior-only buffet
simulation used to check the other pieces statistically.
"""

import math
from collections import Counter
from typing import Dict, List

import numpy
from pydantic import BaseModel  # pylint: disable=no-name-in-module
from scipy import stats
from scipy.special import gammaln

from factor_regression.errors import ContractViolation


def harmonic_number(n: int) -> float:
    """H_n = Σ_{j=1..n} 1/j."""
    if n < 1:
        raise ContractViolation("Harmonic numbers are defined for n >= 1")
    return float(numpy.sum(1.0 / numpy.arange(1, n + 1)))


def row_pattern(row: numpy.ndarray) -> str:
    """Key identifying a mask row by its binary pattern over the customers."""
    return "".join("1" if value else "0" for value in row)


class IbpSufficientStats(BaseModel):  # pylint: disable=too-few-public-methods
    """Everything the IBP density needs from a mask."""

    m: List[int]
    K_active: int
    H_N: float
    Kh_counts: Dict[str, int]

    @classmethod
    def from_mask(cls, mask: numpy.ndarray) -> "IbpSufficientStats":
        """Collect the statistics of a K×N mask."""
        mask = numpy.asarray(mask, dtype=bool)
        return cls(
            m=mask.sum(axis=1).astype(int).tolist(),
            K_active=int(mask.shape[0]),
            H_N=harmonic_number(mask.shape[1]),
            Kh_counts=dict(Counter(row_pattern(row) for row in mask)),
        )


def mask_log_density(S: numpy.ndarray, alpha: float) -> float:
    """
    log P(S) = K log α - Σ_h log K_h! - α H_N
               + Σ_k [log (N - m_k)! + log (m_k - 1)! - log N!]

    S must not contain rows that are active nowhere.
    """
    S = numpy.asarray(S, dtype=bool)
    stats_ = IbpSufficientStats.from_mask(S)
    counts = numpy.asarray(stats_.m, dtype=float)
    if numpy.any(counts < 1):
        raise ContractViolation("The IBP density is undefined for all-zero rows")
    n_total = S.shape[1]
    multiplicities = numpy.asarray(list(stats_.Kh_counts.values()), dtype=float)
    return float(
        stats_.K_active * math.log(alpha)
        - numpy.sum(gammaln(multiplicities + 1.0))
        - alpha * stats_.H_N
        + numpy.sum(
            gammaln(n_total - counts + 1.0) + gammaln(counts) - gammaln(n_total + 1.0)
        )
    )


def prior_ratio_existing(m_k_minus_i: int, n_total: int) -> float:
    """
    r_p = m_{k,-i} / (N - 1 - m_{k,-i}). Returns +inf when the feature is
    active at every other observation and 0 when it is active nowhere else.
    """
    if m_k_minus_i < 0 or m_k_minus_i > n_total - 1:
        raise ContractViolation(
            f"m_(k,-i)={m_k_minus_i} must lie in [0, {n_total - 1}]"
        )
    if m_k_minus_i == 0:
        return 0.0
    remaining = n_total - 1 - m_k_minus_i
    if remaining == 0:
        return math.inf
    return m_k_minus_i / remaining


def new_feature_count_prior(alpha: float, n_total: int):
    """Poisson(α / N), the prior on the number of new features per observation."""
    if not alpha > 0:
        raise ContractViolation("alpha must be strictly positive")
    if n_total < 1:
        raise ContractViolation("n_total must be at least 1")
    return stats.poisson(alpha / n_total)


def sample_alpha(
    k_active: int, h_n: float, g: float, h: float, rng: numpy.random.Generator
) -> float:
    """Draw α ~ Gamma(K + g, rate h + H_N)."""
    return float(rng.gamma(k_active + g, 1.0 / (h + h_n)))


def simulate_prior_masks(
    alpha: float, n_total: int, rng: numpy.random.Generator
) -> numpy.ndarray:
    """
    Sequential buffet: customer i takes an existing dish k with probability
    m_k / i and then Poisson(α / i) new dishes. Returns a K×N mask.
    """
    if n_total < 1:
        raise ContractViolation("The buffet needs at least one customer")
    counts = numpy.zeros(0, dtype=int)
    columns = []
    for customer in range(1, n_total + 1):
        taken = rng.random(counts.size) < counts / customer
        fresh = int(rng.poisson(alpha / customer))
        counts = numpy.concatenate([counts + taken, numpy.ones(fresh, dtype=int)])
        columns.append(numpy.concatenate([taken, numpy.ones(fresh, dtype=bool)]))
    mask = numpy.zeros((counts.size, n_total), dtype=bool)
    for customer, column in enumerate(columns):
        mask[: column.size, customer] = column
    return mask
