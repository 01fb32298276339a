from collections import Counter
from typing import Dict, Hashable, Iterable, Mapping, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy import stats as scipy_stats

from app.config.settings import SIGMA_THRESHOLD
from app.core.exceptions import DegenerateDistributionError, EmptyDistributionError
from app.models.records import StatReport

logger = logging.getLogger(__name__)

_MIN_EXPECTED = 5.0


class EmpiricalDistribution:
    """Counts of observed outcomes keyed by a hashable canonical key."""

    def __init__(self, counts: Optional[Mapping[Hashable, int]] = None):
        self.counts: Dict[Hashable, int] = {}
        self.total = 0
        for key, count in (counts or {}).items():
            self.add(key, count)

    @classmethod
    def from_samples(cls, keys: Iterable[Hashable]) -> "EmpiricalDistribution":
        return cls(Counter(keys))

    def add(self, key: Hashable, count: int = 1):
        if count <= 0:
            raise ValueError(f"Counts must be positive, got {count}")
        self.counts[key] = self.counts.get(key, 0) + count
        self.total += count

    def frequency(self, key: Hashable) -> float:
        if self.total == 0:
            raise EmptyDistributionError("No samples recorded")
        return self.counts.get(key, 0) / self.total

    def probabilities(self) -> Dict[Hashable, float]:
        if self.total == 0:
            raise EmptyDistributionError("No samples recorded")
        return {key: count / self.total for key, count in self.counts.items()}

    def __len__(self) -> int:
        return len(self.counts)

    def __repr__(self) -> str:
        return f"EmpiricalDistribution(outcomes={len(self.counts)}, total={self.total})"


def tv_distance(emp: EmpiricalDistribution, exact: Mapping[Hashable, float]) -> float:
    """Total variation distance: half the L1 distance over the union of supports."""
    observed = emp.probabilities()
    keys = set(observed) | set(exact)
    return 0.5 * math.fsum(abs(observed.get(k, 0.0) - exact.get(k, 0.0)) for k in keys)


def _pooled_cells(observed: np.ndarray, expected: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Merge every cell with expected count below the minimum into one pooled cell."""
    small = expected < _MIN_EXPECTED
    if not small.any():
        return observed, expected
    obs = list(observed[~small])
    exp = list(expected[~small])
    pooled_obs = observed[small].sum()
    pooled_exp = expected[small].sum()
    if pooled_exp < _MIN_EXPECTED and exp:
        # still too small: fold into the smallest regular cell
        i = int(np.argmin(exp))
        obs[i] += pooled_obs
        exp[i] += pooled_exp
    else:
        obs.append(pooled_obs)
        exp.append(pooled_exp)
    return np.asarray(obs, dtype=float), np.asarray(exp, dtype=float)


def chi_squared_test(emp: EmpiricalDistribution, exact: Mapping[Hashable, float]) -> Tuple[float, float]:
    """
    Pearson goodness-of-fit of the observed counts against `exact`.

    Cells with expected count below five are pooled; degrees of freedom are
    the number of cells left minus one. An observation outside the exact
    support gives an infinite statistic and p-value 0.

    Returns:
        (statistic, p_value)

    Raises:
        EmptyDistributionError: if nothing was observed
        DegenerateDistributionError: if `exact` has no mass or fewer than two
            cells survive pooling
    """
    if emp.total == 0:
        raise EmptyDistributionError("No samples recorded")
    mass = math.fsum(exact.values())
    if mass <= 0 or any(p < 0 for p in exact.values()):
        raise DegenerateDistributionError("Exact law must be nonnegative with positive mass")
    if any(key not in exact or exact[key] == 0 for key in emp.counts):
        return float("inf"), 0.0

    keys = sorted(exact, key=repr)
    observed = np.array([emp.counts.get(k, 0) for k in keys], dtype=float)
    expected = np.array([exact[k] / mass for k in keys]) * emp.total
    observed, expected = _pooled_cells(observed, expected)
    if len(observed) < 2:
        raise DegenerateDistributionError("Fewer than two cells after pooling")
    expected *= observed.sum() / expected.sum()
    result = scipy_stats.chisquare(observed, expected)
    return float(result.statistic), float(result.pvalue)


def mc_mean_ci(samples: Sequence[float], confidence: float = 0.95) -> Tuple[float, float]:
    """
    Sample mean and normal-approximation confidence half-width.

    Raises:
        ValueError: with fewer than two samples
    """
    values = np.asarray(samples, dtype=float)
    if len(values) < 2:
        raise ValueError("A confidence interval needs at least two samples")
    if not 0 < confidence < 1:
        raise ValueError(f"Confidence must lie in (0, 1), got {confidence}")
    quantile = scipy_stats.norm.ppf(0.5 + confidence / 2)
    half_width = quantile * values.std(ddof=1) / math.sqrt(len(values))
    return float(values.mean()), float(half_width)


def ks_exponential_test(gaps: Sequence[float], rate: float) -> Tuple[float, float]:
    """Kolmogorov-Smirnov test of `gaps` against the exponential law with `rate`."""
    if len(gaps) == 0:
        raise EmptyDistributionError("No inter-arrival gaps to test")
    if rate <= 0:
        raise DegenerateDistributionError(f"Exponential rate must be positive, got {rate}")
    result = scipy_stats.kstest(np.asarray(gaps, dtype=float), "expon", args=(0.0, 1.0 / rate))
    return float(result.statistic), float(result.pvalue)


def bernoulli_sigma(p: float, n: int) -> float:
    """Standard error of a frequency estimate of probability `p` from `n` trials."""
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def z_score(observed: float, expected: float, sigma: float) -> float:
    if sigma <= 0:
        return 0.0 if math.isclose(observed, expected, rel_tol=1e-12, abs_tol=1e-12) else math.inf
    return (observed - expected) / sigma


def within_sigma(observed: float, expected: float, sigma: float,
                 threshold: float = SIGMA_THRESHOLD) -> bool:
    return abs(z_score(observed, expected, sigma)) <= threshold


def tv_tolerance_for(exact: Mapping[Hashable, float], samples: int, floor: float = 0.01) -> float:
    """
    TV acceptance threshold for `samples` draws from `exact`: `floor`, or
    twice the sampling noise scale 0.5 * sum sqrt(p (1 - p) / n) when that is
    larger.
    """
    if samples < 1:
        raise ValueError("Need at least one sample")
    mass = math.fsum(exact.values())
    noise = 0.5 * math.fsum(math.sqrt(max(p / mass * (1 - p / mass), 0.0) / samples) for p in exact.values())
    return max(floor, 2.0 * noise)


def distribution_report(name: str, emp: EmpiricalDistribution, exact: Mapping[Hashable, float],
                        tv_tolerance: float = 0.01, min_p_value: float = 0.001) -> StatReport:
    """TV distance plus chi-squared p-value, bundled into one pass/fail report."""
    tv = tv_distance(emp, exact)
    statistic, p_value = chi_squared_test(emp, exact)
    passed = tv < tv_tolerance and p_value > min_p_value
    logger.info(f"{name}: TV={tv:.4g}, chi2={statistic:.4g}, p={p_value:.4g}, samples={emp.total}")
    return StatReport(
        test=name,
        statistic=statistic,
        p_value=p_value,
        passed=passed,
        details={"tv_distance": tv, "samples": emp.total, "outcomes": len(emp)},
    )
