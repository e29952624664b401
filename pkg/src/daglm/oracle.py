"""Exact reference computations on small DAGs by full path enumeration.

Everything here is brute force on purpose: these functions are the ground
truth that the estimator and asymptotics modules are tested against, so they
favor directness over speed and refuse models beyond the enumeration cap.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ModelError, StatisticalError
from .model import (
    ENUMERATION_CAP,
    SUPPORT_ZERO,
    DagSpec,
    PathLike,
    QualityModel,
    TransitionKernel,
    conditional_path_probability,
    enumerate_support_paths,
    kernels_equivalent,
    node_marginal,
)

#: moments of the response are supported up to this order
MAX_MOMENT_ORDER = 4


def path_raw_moments(quality: QualityModel, path: PathLike, order: int) -> np.ndarray:
    """Raw moments (m_0..m_order) of the response b = sum of the path's
    independent node contributions.

    Composed by binomial convolution of per-node raw moment sequences, which
    is the moment-of-sums expansion grouped one node at a time.
    """
    if order > MAX_MOMENT_ORDER:
        raise ModelError(
            f"moment order {order} not supported (max {MAX_MOMENT_ORDER})"
        )
    m = np.zeros(order + 1)
    m[0] = 1.0
    for j, lvl in enumerate(path, start=1):
        node_m = quality.node(lvl, j).raw_moments(order)
        combined = np.zeros(order + 1)
        for k in range(order + 1):
            combined[k] = sum(
                math.comb(k, t) * m[t] * node_m[k - t] for t in range(k + 1)
            )
        m = combined
    return m


def exact_conditional_moments(
    kernel: TransitionKernel,
    quality: QualityModel,
    j: int,
    i: int,
    order: int = 2,
    cap: int = ENUMERATION_CAP,
) -> list[float]:
    """E[b^k | path passes through node (i, j)] for k = 1..order, exactly.

    Enumerates the support paths through the node, composes each path's
    moments from node moments, and mixes them with conditional path
    probabilities.
    """
    if order < 1 or order > MAX_MOMENT_ORDER:
        raise ModelError(f"moment order {order} outside 1..{MAX_MOMENT_ORDER}")
    support = enumerate_support_paths(kernel, j=j, i=i, cap=cap)
    if not support:
        raise StatisticalError(
            f"conditioning on null event: node ({i}, {j}) is unreachable"
        )
    moments = np.zeros(order + 1)
    for path in support:
        cond = conditional_path_probability(kernel, path, j, i)
        moments += cond * path_raw_moments(quality, path, order)
    return [float(moments[k]) for k in range(1, order + 1)]


def verify_measure_change(
    kernel: TransitionKernel,
    target: TransitionKernel,
    quality: QualityModel,
    j: int,
    i: int,
    f: str = "b",
) -> float:
    """Residual of the change-of-measure identity at node (i, j).

    Compares E[f(b)·C | node] under ``kernel`` against E[f(b) | node] under
    ``target``, where C is the ratio of conditional path probabilities. The
    two sides are computed through different code paths (ratio-weighted mix
    vs direct mix), so a small residual genuinely certifies the identity.
    """
    if f not in ("b", "b2"):
        raise ModelError(f"f must be 'b' or 'b2', got {f!r}")
    if not kernels_equivalent(kernel, target):
        raise ModelError("measures not equivalent")
    order = 1 if f == "b" else 2

    lhs = 0.0
    for path in enumerate_support_paths(kernel, j=j, i=i):
        cond_q = conditional_path_probability(kernel, path, j, i)
        cond_t = conditional_path_probability(target, path, j, i)
        ratio = cond_t / cond_q
        lhs += path_raw_moments(quality, path, order)[order] * ratio * cond_q

    rhs = 0.0
    for path in enumerate_support_paths(target, j=j, i=i):
        cond_t = conditional_path_probability(target, path, j, i)
        rhs += path_raw_moments(quality, path, order)[order] * cond_t

    return abs(lhs - rhs)


def exact_estimator_targets(
    kernel: TransitionKernel,
    target: TransitionKernel,
    quality: QualityModel,
    cap: int = ENUMERATION_CAP,
) -> tuple[np.ndarray, np.ndarray]:
    """Limits of the reweighted estimators: conditional means and variances
    of b under ``target`` for every node, as (r_max, c) matrices.

    Nodes unreachable under ``kernel`` (no data would ever arrive there) and
    level slots beyond a column's range hold NaN.
    """
    spec: DagSpec = kernel.spec()
    means = np.full((spec.r_max, spec.c), np.nan)
    variances = np.full((spec.r_max, spec.c), np.nan)
    for j, r in enumerate(spec.levels, start=1):
        for i in range(1, r + 1):
            if node_marginal(kernel, j, i) <= SUPPORT_ZERO:
                continue
            m1, m2 = exact_conditional_moments(target, quality, j, i, order=2, cap=cap)
            means[i - 1, j - 1] = m1
            variances[i - 1, j - 1] = m2 - m1 * m1
    return means, variances
