"""Closed-form asymptotic variances for the cell estimators, their plug-in
versions computed from data, and normal-approximation confidence intervals.

Every estimator error, scaled by the square root of the cell's visit count,
is asymptotically normal; the limiting variance depends on the estimator
family (regime "knownQ" for exact-ratio weighting, "unknownQ" for empirical
ratios) and on the statistic (cell mean or cell variance). The variance
target uses a delta-method quadratic form: a small covariance matrix
contracted with a weight vector. For the unknown-source regime the matrix is
indexed by the distinct support paths through the node.

In the unknown-source variance formula the weight -2*mu*C(q) multiplies the
per-path b block and C(q) the b^2 block. The pairing is pinned by the
single-path case, where the value must collapse to the centered fourth
moment minus the squared variance (the classical asymptotic variance of a
population-variance estimate), and is confirmed by Monte-Carlo variance
matching in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import ModelError, NoDataError, StatisticalError
from .estimators import (
    CellEstimate,
    _cell_responses,
    _distinct_cell_paths,
    _exact_weights,
)
from .model import (
    SUPPORT_ZERO,
    PathDataset,
    QualityModel,
    TransitionKernel,
    conditional_path_probability,
    enumerate_support_paths,
    kernels_equivalent,
)
from .oracle import path_raw_moments

#: tolerance (relative to the largest matrix entry) for symmetry/PSD checks
PSD_ATOL = 1e-9

REGIME_KNOWN = "knownQ"
REGIME_UNKNOWN = "unknownQ"


@dataclass(frozen=True)
class AsymptoticVariance:
    """Limiting variance of sqrt(count) * (estimator - target) for one cell.

    ``value`` equals ``contraction @ matrix @ contraction``; the matrix is
    the (empirical or exact) covariance structure and, for the unknown-source
    regime, ``support_paths`` gives the path indexing of its blocks.
    """

    node: tuple[int, int]
    target: str  # "mean" | "variance"
    regime: str  # "knownQ" | "unknownQ"
    value: float
    matrix: np.ndarray
    contraction: np.ndarray
    support_paths: tuple[tuple[int, ...], ...] | None = None
    clipped: bool = False


def _finalize(
    node: tuple[int, int],
    target: str,
    regime: str,
    matrix: np.ndarray,
    contraction: np.ndarray,
    support_paths=None,
) -> AsymptoticVariance:
    matrix = np.asarray(matrix, dtype=float)
    contraction = np.asarray(contraction, dtype=float)
    scale = max(1.0, float(np.abs(matrix).max()))
    if float(np.abs(matrix - matrix.T).max()) > PSD_ATOL * scale:
        raise StatisticalError(f"asymptotic covariance at node {node} not symmetric")
    min_eig = float(np.linalg.eigvalsh((matrix + matrix.T) / 2.0).min())
    if min_eig < -PSD_ATOL * scale:
        raise StatisticalError(
            f"asymptotic covariance at node {node} not positive semidefinite "
            f"(min eigenvalue {min_eig:.3g})"
        )
    value = float(contraction @ matrix @ contraction)
    clipped = False
    if value < 0.0:
        if value < -PSD_ATOL * scale:
            raise StatisticalError(f"negative asymptotic variance {value:.3g}")
        value, clipped = 0.0, True
    matrix.setflags(write=False)
    contraction.setflags(write=False)
    return AsymptoticVariance(
        node=node,
        target=target,
        regime=regime,
        value=value,
        matrix=matrix,
        contraction=contraction,
        support_paths=support_paths,
        clipped=clipped,
    )


def _cell_support(
    kernel: TransitionKernel,
    target: TransitionKernel,
    quality: QualityModel,
    j: int,
    i: int,
    order: int,
):
    """Support paths through (i, j) with conditional probabilities under both
    kernels, their ratio, and per-path response moments."""
    if not kernels_equivalent(kernel, target):
        raise ModelError("measures not equivalent")
    support = enumerate_support_paths(kernel, j=j, i=i)
    if not support:
        raise StatisticalError(
            f"conditioning on null event: node ({i}, {j}) is unreachable"
        )
    paths = tuple(support)
    p = np.array([conditional_path_probability(kernel, q, j, i) for q in paths])
    pt = np.array([conditional_path_probability(target, q, j, i) for q in paths])
    ratio = pt / p
    moments = np.vstack([path_raw_moments(quality, q, order) for q in paths])
    return paths, p, pt, ratio, moments


def asym_var_mean_known(
    kernel: TransitionKernel,
    target: TransitionKernel,
    quality: QualityModel,
    i: int,
    j: int,
) -> AsymptoticVariance:
    """Limiting variance of the exact-ratio weighted cell mean: the source
    kernel's conditional variance of the weighted response b*C."""
    paths, p, pt, ratio, m = _cell_support(kernel, target, quality, j, i, order=2)
    mu = float(np.sum(p * ratio * m[:, 1]))
    second = float(np.sum(p * ratio * ratio * m[:, 2]))
    return _finalize(
        (i, j), "mean", REGIME_KNOWN, [[second - mu * mu]], [1.0]
    )


def asym_var_variance_known(
    kernel: TransitionKernel,
    target: TransitionKernel,
    quality: QualityModel,
    i: int,
    j: int,
) -> AsymptoticVariance:
    """Limiting variance of the exact-ratio weighted cell variance.

    Delta method on the pair (b^2*C, b*C): covariance matrix with the mean
    weight folded in, contracted with (1, -1).
    """
    paths, p, pt, ratio, m = _cell_support(kernel, target, quality, j, i, order=4)
    ex = float(np.sum(p * ratio * m[:, 2]))  # E[b^2 C]
    ey = float(np.sum(p * ratio * m[:, 1]))  # E[b C] = target mean
    ex2 = float(np.sum(p * ratio * ratio * m[:, 4]))
    ey2 = float(np.sum(p * ratio * ratio * m[:, 2]))
    exy = float(np.sum(p * ratio * ratio * m[:, 3]))
    var_x = ex2 - ex * ex
    var_y = ey2 - ey * ey
    cov = exy - ex * ey
    mu = ey
    matrix = [
        [var_x, 2.0 * mu * cov],
        [2.0 * mu * cov, 4.0 * mu * mu * var_y],
    ]
    return _finalize((i, j), "variance", REGIME_KNOWN, matrix, [1.0, -1.0])


def asym_var_mean_unknown(
    kernel: TransitionKernel,
    target: TransitionKernel,
    quality: QualityModel,
    i: int,
    j: int,
) -> AsymptoticVariance:
    """Limiting variance of the plugin cell mean: per-path response variances
    scaled by conditional path probabilities, contracted with the ratio
    vector. Always a diagonal matrix."""
    paths, p, pt, ratio, m = _cell_support(kernel, target, quality, j, i, order=2)
    var_b = m[:, 2] - m[:, 1] ** 2
    return _finalize(
        (i, j), "mean", REGIME_UNKNOWN, np.diag(p * var_b), ratio, support_paths=paths
    )


def asym_var_variance_unknown(
    kernel: TransitionKernel,
    target: TransitionKernel,
    quality: QualityModel,
    i: int,
    j: int,
) -> AsymptoticVariance:
    """Limiting variance of the plugin cell variance.

    2m x 2m block structure over the m support paths: per-path variances of
    b and b^2 on the diagonal, their covariance linking the blocks, each
    scaled by the path's conditional probability; contracted with
    (-2*mu*C, C).
    """
    paths, p, pt, ratio, m = _cell_support(kernel, target, quality, j, i, order=4)
    n_paths = len(paths)
    var_b = m[:, 2] - m[:, 1] ** 2
    var_b2 = m[:, 4] - m[:, 2] ** 2
    cov_b2_b = m[:, 3] - m[:, 2] * m[:, 1]
    mu = float(np.sum(pt * m[:, 1]))
    matrix = np.zeros((2 * n_paths, 2 * n_paths))
    for idx in range(n_paths):
        matrix[idx, idx] = p[idx] * var_b[idx]
        matrix[n_paths + idx, n_paths + idx] = p[idx] * var_b2[idx]
        matrix[idx, n_paths + idx] = p[idx] * cov_b2_b[idx]
        matrix[n_paths + idx, idx] = p[idx] * cov_b2_b[idx]
    contraction = np.concatenate([-2.0 * mu * ratio, ratio])
    return _finalize(
        (i, j), "variance", REGIME_UNKNOWN, matrix, contraction, support_paths=paths
    )


def _empirical_moments(values: np.ndarray, order: int) -> np.ndarray:
    out = np.empty(order + 1)
    for k in range(order + 1):
        out[k] = float(np.mean(values**k))
    return out


def plugin_asym_var(
    data: PathDataset,
    target: TransitionKernel,
    i: int,
    j: int,
    which: str = "mean",
    regime: str = REGIME_UNKNOWN,
    kernel: TransitionKernel | None = None,
) -> AsymptoticVariance:
    """Asymptotic variance with all population quantities replaced by
    empirical counterparts from the dataset.

    The unknown-source regime estimates per-path pieces and needs every
    distinct observed path through the cell at least twice. The known-source
    regime needs the source ``kernel`` and uses exact ratio weights with
    empirical moments of (b*C, b^2*C).
    """
    if which not in ("mean", "variance"):
        raise ModelError(f"which must be 'mean' or 'variance', got {which!r}")
    if regime not in (REGIME_KNOWN, REGIME_UNKNOWN):
        raise ModelError(f"unknown regime {regime!r}")

    if regime == REGIME_KNOWN:
        if kernel is None:
            raise ModelError("knownQ regime needs the source kernel")
        b, w = _exact_weights(data, kernel, target, i, j)
        y = b * w
        x = b * b * w
        mu = float(np.mean(y))
        if which == "mean":
            value = float(np.mean(y * y)) - mu * mu
            return _finalize((i, j), "mean", REGIME_KNOWN, [[value]], [1.0])
        ex = float(np.mean(x))
        var_x = float(np.mean(x * x)) - ex * ex
        var_y = float(np.mean(y * y)) - mu * mu
        cov = float(np.mean(x * y)) - ex * mu
        matrix = [
            [var_x, 2.0 * mu * cov],
            [2.0 * mu * cov, 4.0 * mu * mu * var_y],
        ]
        return _finalize((i, j), "variance", REGIME_KNOWN, matrix, [1.0, -1.0])

    b, distinct, inverse, counts = _distinct_cell_paths(data, j, i)
    n_cell = b.size
    once = [tuple(int(x) for x in row) for row, c in zip(distinct, counts) if c < 2]
    if once:
        raise StatisticalError(
            "insufficient per-path replication for plug-in asymptotics; "
            f"paths seen once: {once}"
        )
    cond = np.empty(distinct.shape[0])
    for idx, row in enumerate(distinct):
        cond[idx] = conditional_path_probability(target, row, j, i)
        if cond[idx] <= SUPPORT_ZERO:
            raise StatisticalError(
                f"target measure excludes observed path {tuple(int(x) for x in row)}"
            )
    total = float(cond.sum())
    if abs(total - 1.0) > 1e-9:
        raise StatisticalError(
            f"observed paths through node ({i}, {j}) carry target conditional "
            f"mass {total:.6g}, not 1; support paths are missing from the data"
        )
    p_hat = counts / n_cell
    ratio = cond / p_hat
    order = 2 if which == "mean" else 4
    moments = np.vstack(
        [_empirical_moments(b[inverse == idx], order) for idx in range(len(distinct))]
    )
    paths = tuple(tuple(int(x) for x in row) for row in distinct)
    var_b = moments[:, 2] - moments[:, 1] ** 2
    if which == "mean":
        return _finalize(
            (i, j), "mean", REGIME_UNKNOWN, np.diag(p_hat * var_b), ratio,
            support_paths=paths,
        )
    var_b2 = moments[:, 4] - moments[:, 2] ** 2
    cov_b2_b = moments[:, 3] - moments[:, 2] * moments[:, 1]
    mu = float(np.sum(cond * moments[:, 1]))
    n_paths = len(paths)
    matrix = np.zeros((2 * n_paths, 2 * n_paths))
    for idx in range(n_paths):
        matrix[idx, idx] = p_hat[idx] * var_b[idx]
        matrix[n_paths + idx, n_paths + idx] = p_hat[idx] * var_b2[idx]
        matrix[idx, n_paths + idx] = p_hat[idx] * cov_b2_b[idx]
        matrix[n_paths + idx, idx] = p_hat[idx] * cov_b2_b[idx]
    contraction = np.concatenate([-2.0 * mu * ratio, ratio])
    return _finalize(
        (i, j), "variance", REGIME_UNKNOWN, matrix, contraction, support_paths=paths
    )


def naive_asym_var(
    data: PathDataset, i: int, j: int, which: str = "mean"
) -> AsymptoticVariance:
    """Asymptotic variance of the naive cell estimators (the unit-ratio
    special case of the known-source regime, so no kernel is needed)."""
    if which not in ("mean", "variance"):
        raise ModelError(f"which must be 'mean' or 'variance', got {which!r}")
    b = _cell_responses(data, j, i)
    mu = float(np.mean(b))
    if which == "mean":
        value = float(np.mean(b * b)) - mu * mu
        return _finalize((i, j), "mean", REGIME_KNOWN, [[value]], [1.0])
    x = b * b
    ex = float(np.mean(x))
    var_x = float(np.mean(x * x)) - ex * ex
    var_y = float(np.mean(b * b)) - mu * mu
    cov = float(np.mean(x * b)) - ex * mu
    matrix = [
        [var_x, 2.0 * mu * cov],
        [2.0 * mu * cov, 4.0 * mu * mu * var_y],
    ]
    return _finalize((i, j), "variance", REGIME_KNOWN, matrix, [1.0, -1.0])


@dataclass(frozen=True)
class ConfidenceInterval:
    point: float
    lower: float
    upper: float
    level: float
    count: int


def normal_quantile(p: float) -> float:
    """Standard normal quantile (inverse CDF)."""
    if not 0.0 < p < 1.0:
        raise ModelError(f"quantile probability {p} outside (0, 1)")
    return float(ndtri(p))


def confidence_interval(
    estimate: CellEstimate, av: AsymptoticVariance, level: float = 0.95
) -> ConfidenceInterval:
    """Normal-approximation interval: point +/- z * sqrt(av / count)."""
    if not 0.0 < level < 1.0:
        raise ModelError(f"confidence level {level} outside (0, 1)")
    if estimate.count <= 0:
        raise NoDataError(f"no data at node {estimate.node}")
    if estimate.node != av.node:
        raise ModelError(
            f"estimate node {estimate.node} does not match variance node {av.node}"
        )
    if not math.isfinite(av.value):
        raise StatisticalError(f"non-finite asymptotic variance at {av.node}")
    point = estimate.mean if av.target == "mean" else estimate.variance
    half = normal_quantile((1.0 + level) / 2.0) * math.sqrt(av.value / estimate.count)
    return ConfidenceInterval(
        point=point, lower=point - half, upper=point + half, level=level,
        count=estimate.count,
    )
