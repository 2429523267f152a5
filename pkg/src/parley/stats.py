"""Resampling statistics over run-level values.

Every procedure is seeded: identical inputs and seed give identical output.
"""
from __future__ import annotations

import itertools
import logging
import typing as t

import numpy as np
import numpy.typing as npt
from attrs import frozen
from statsmodels.stats.multitest import multipletests

from .constants import (
    DEFAULT_CI_LEVEL,
    DEFAULT_N_SHUFFLES,
    DEFAULT_RESAMPLES,
    MIN_RESAMPLES,
)

logger = logging.getLogger(__name__)

# tolerance used to compare permuted statistics with the observed one
ATOL = 1e-12

# number of resampled rows held in memory at once
BATCH_SIZE = 2_000


def _as_array(values: t.Iterable[float], name: str) -> npt.NDArray[np.float64]:
    array = np.asarray(list(values), dtype=np.float64)
    if array.size == 0:
        msg = f"{name} must not be empty"
        logger.critical(msg)
        raise ValueError(msg)
    return array


def _batches(total: int) -> t.Iterator[int]:
    while total > 0:
        size = min(total, BATCH_SIZE)
        yield size
        total -= size


def bootstrap_ci(
    values: t.Iterable[float],
    level: float = DEFAULT_CI_LEVEL,
    resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> t.Tuple[float, float]:
    """Percentile bootstrap confidence interval of the mean.

    Args:
        values: Run-level values.
        level: Confidence level.
        resamples: Number of bootstrap resamples (at least 1000).
        seed: Random generator seed.

    Raises:
        ValueError: If `values` is empty, `resamples` is below 1000 or
            `level` is not in (0, 1).

    Returns:
        Lower and upper interval bounds.
    """
    array = _as_array(values, "values")
    if resamples < MIN_RESAMPLES:
        msg = f"resamples must be at least {MIN_RESAMPLES}, got {resamples}"
        logger.critical(msg)
        raise ValueError(msg)
    if not 0.0 < level < 1.0:
        msg = f"level must be in (0, 1), got {level}"
        logger.critical(msg)
        raise ValueError(msg)

    rng = np.random.default_rng(seed)
    means = np.concatenate(
        [
            array[rng.integers(0, array.size, size=(size, array.size))].mean(axis=1)
            for size in _batches(resamples)
        ]
    )
    alpha = (1.0 - level) / 2.0
    # bounds stay within the range of the data
    lo, hi = np.clip(
        np.quantile(means, [alpha, 1.0 - alpha]), array.min(), array.max()
    )
    logger.debug("bootstrap CI over %d resamples: [%g, %g]", resamples, lo, hi)
    return float(lo), float(hi)


def _pooled(
    a: t.Iterable[float], b: t.Iterable[float]
) -> t.Tuple[npt.NDArray[np.float64], int, float]:
    # the pooled sample is sorted and split at the smaller group size so that
    # swapping the groups leaves the resampling untouched
    x = _as_array(a, "a")
    y = _as_array(b, "b")
    pooled = np.sort(np.concatenate([x, y]))
    k = min(x.size, y.size)
    observed = abs(x.mean() - y.mean())
    return pooled, k, observed


def _abs_mean_diff(rows: npt.NDArray[np.float64], k: int) -> npt.NDArray[np.float64]:
    return np.abs(rows[..., :k].mean(axis=-1) - rows[..., k:].mean(axis=-1))


def permutation_test(
    a: t.Iterable[float],
    b: t.Iterable[float],
    n_shuffles: int = DEFAULT_N_SHUFFLES,
    seed: int = 0,
) -> float:
    """Two-sided permutation test on the difference of group means.

    Args:
        a: First group.
        b: Second group.
        n_shuffles: Number of random label shuffles.
        seed: Random generator seed.

    Raises:
        ValueError: If a group is empty or `n_shuffles` is not positive.

    Returns:
        p-value ``(1 + #{|d| >= |observed|}) / (1 + n_shuffles)``.
    """
    pooled, k, observed = _pooled(a, b)
    if n_shuffles < 1:
        msg = f"n_shuffles must be positive, got {n_shuffles}"
        logger.critical(msg)
        raise ValueError(msg)

    rng = np.random.default_rng(seed)
    extreme = 0
    for size in _batches(n_shuffles):
        rows = rng.permuted(np.tile(pooled, (size, 1)), axis=1)
        extreme += int(np.count_nonzero(_abs_mean_diff(rows, k) >= observed - ATOL))
    p = (1 + extreme) / (1 + n_shuffles)
    logger.debug("permutation test: %d/%d extreme shuffles", extreme, n_shuffles)
    return p


def permutation_test_exact(a: t.Iterable[float], b: t.Iterable[float]) -> float:
    """Exact two-sided permutation p-value by enumerating every relabelling.

    Only practical for small groups.
    """
    pooled, k, observed = _pooled(a, b)
    splits = np.array(
        [
            np.concatenate([pooled[list(idx)], np.delete(pooled, list(idx))])
            for idx in itertools.combinations(range(pooled.size), k)
        ]
    )
    diffs = _abs_mean_diff(splits, k)
    return float(np.count_nonzero(diffs >= observed - ATOL) / diffs.size)


def cliffs_delta(a: t.Iterable[float], b: t.Iterable[float]) -> float:
    """Cliff's delta over all cross pairs; ties count as neither."""
    x = _as_array(a, "a")
    y = _as_array(b, "b")
    signs = np.sign(np.subtract.outer(x, y)).astype(np.int64)
    return int(signs.sum()) / (x.size * y.size)


def holm_adjust(p_values: t.Sequence[float]) -> t.List[float]:
    """Holm step-down adjustment.

    Args:
        p_values: Raw p-values in (0, 1].

    Raises:
        ValueError: If a p-value is outside (0, 1].

    Returns:
        Adjusted p-values, in input order.
    """
    p = np.asarray(p_values, dtype=np.float64)
    if p.size == 0:
        return []
    if np.any(np.isnan(p) | (p <= 0.0) | (p > 1.0)):
        msg = f"p-values must be in (0, 1], got {p.tolist()}"
        logger.critical(msg)
        raise ValueError(msg)
    _, adjusted, _, _ = multipletests(p, method="holm")
    return [float(x) for x in np.minimum(adjusted, 1.0)]


@frozen(kw_only=True)
class ContrastResult:
    """Comparison of one metric between two cells."""

    experiment_id: str
    model_family: str
    metric_name: str
    group_a: str
    group_b: str
    group_a_mean: float
    group_b_mean: float
    mean_diff: float
    p_value: float
    cliffs_delta: float
    n_shuffles: int
    seed: int
    family: str = "primary"
    p_holm: t.Optional[float] = None
    error_excluded: bool = False


def contrast(
    a: t.Sequence[float],
    b: t.Sequence[float],
    *,
    metric_name: str,
    experiment_id: str,
    model_family: str,
    group_a: str,
    group_b: str,
    n_shuffles: int = DEFAULT_N_SHUFFLES,
    seed: int = 0,
    family: str = "primary",
    error_excluded: bool = False,
) -> ContrastResult:
    """Compare run-level values of two cells.

    Returns:
        Contrast with group means, permutation p-value and Cliff's delta;
        `p_holm` is left unset.
    """
    x = _as_array(a, "a")
    y = _as_array(b, "b")
    return ContrastResult(
        experiment_id=experiment_id,
        model_family=model_family,
        metric_name=metric_name,
        group_a=group_a,
        group_b=group_b,
        group_a_mean=float(x.mean()),
        group_b_mean=float(y.mean()),
        mean_diff=float(x.mean() - y.mean()),
        p_value=permutation_test(x, y, n_shuffles=n_shuffles, seed=seed),
        cliffs_delta=cliffs_delta(x, y),
        n_shuffles=n_shuffles,
        seed=seed,
        family=family,
        error_excluded=error_excluded,
    )
