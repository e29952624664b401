"""Point estimators of per-node response means and variances.

Three families, all averaging over the records whose path passes through a
fixed node (i, j):

* naive: plain cell mean / population variance of the responses;
* weighted: responses reweighted by the exact measure-change ratio between
  a known source kernel and a target kernel;
* plugin: responses reweighted by the empirical ratio built from observed
  path frequencies (source kernel unknown).

Weighted/plugin estimators share the naive reduction: the weight vector is
applied per record and summed with the same floating-point sequence, so a
ratio that is identically 1 reproduces the naive value bit for bit.

All functions are pure; datasets are immutable. Cell aggregation may be
sharded by records and merged, with results equal up to floating-point
reassociation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError, NoDataError, StatisticalError
from .model import (
    SUPPORT_ZERO,
    PathDataset,
    PathLike,
    TransitionKernel,
    conditional_path_probability,
    kernels_equivalent,
    node_marginal,
    validate_path,
)

#: variances this far below zero are attributed to rounding and clipped
VARIANCE_CLIP = -1e-9

#: canonical estimator-kind names used in reports
KIND_NAIVE = "naive"
KIND_WEIGHTED = "weighted-knownQ"
KIND_PLUGIN = "plugin-unknownQ"


@dataclass(frozen=True)
class CellEstimate:
    """Mean/variance estimate for one node, with its provenance."""

    node: tuple[int, int]  # (level i, column j)
    count: int
    mean: float
    variance: float
    kind: str
    target: str = ""
    clipped: bool = False


def accumulate_counts(data: PathDataset) -> tuple[np.ndarray, np.ndarray]:
    """One-pass response sums B and visit counts V, shape (r_max, c)."""
    spec = data.spec
    B = np.zeros((spec.r_max, spec.c))
    V = np.zeros((spec.r_max, spec.c))
    cols = np.broadcast_to(np.arange(spec.c), data.paths.shape)
    rows = data.paths - 1
    np.add.at(V, (rows, cols), 1.0)
    np.add.at(B, (rows, cols), data.responses[:, None])
    return B, V


def _cell_responses(data: PathDataset, j: int, i: int) -> np.ndarray:
    sel = data.responses[data.node_mask(j, i)]
    if sel.size == 0:
        raise NoDataError(f"no data at node ({i}, {j})")
    return sel


def _clip_variance(value: float, strict: bool) -> tuple[float, bool]:
    """Clip a negative variance estimate to 0, flagging the clip.

    Unweighted cell variances are nonnegative by construction, so a strict
    floor of VARIANCE_CLIP guards against real bugs there. Reweighted
    variances can come out genuinely negative in small samples (the weights
    need not average to exactly 1 over the cell), so any negative value is
    clipped and flagged.
    """
    if value >= 0.0:
        return value, False
    if not strict or value >= VARIANCE_CLIP:
        return 0.0, True
    raise StatisticalError(f"variance {value} below the rounding-noise floor")


def _mean_and_variance(b: np.ndarray, w: np.ndarray | None) -> tuple[float, float, bool]:
    """Shared reduction for all estimator families; ``w`` of None means
    unweighted."""
    n = b.size
    if w is None:
        mean = float(np.sum(b) / n)
        second = float(np.sum(b * b) / n)
    else:
        mean = float(np.sum(b * w) / n)
        second = float(np.sum(b * b * w) / n)
    variance, clipped = _clip_variance(second - mean * mean, strict=w is None)
    return mean, variance, clipped


def naive_mean(data: PathDataset, i: int, j: int) -> float:
    """Cell average of responses through node (i, j)."""
    b = _cell_responses(data, j, i)
    return _mean_and_variance(b, None)[0]


def naive_variance(data: PathDataset, i: int, j: int, bessel: bool = False) -> float:
    """Cell population variance; ``bessel`` opts into the n-1 correction."""
    b = _cell_responses(data, j, i)
    value = _mean_and_variance(b, None)[1]
    if bessel:
        if b.size < 2:
            raise StatisticalError(
                f"Bessel correction needs at least 2 records at node ({i}, {j})"
            )
        value *= b.size / (b.size - 1)
    return value


def measure_change_ratio(
    kernel: TransitionKernel,
    target: TransitionKernel,
    path: PathLike,
    j: int,
    i: int,
) -> float:
    """Ratio of conditional path probabilities (target over source) given
    passage through node (i, j); the importance weight of the path."""
    if not kernels_equivalent(kernel, target):
        raise ModelError("measures not equivalent")
    nodes = validate_path(path, kernel.spec())
    if nodes[j - 1] != i:
        raise ModelError(f"path does not pass through node ({i}, {j})")
    cond_q = conditional_path_probability(kernel, nodes, j, i)
    if cond_q <= SUPPORT_ZERO:
        raise StatisticalError(f"path {nodes} outside the source kernel's support")
    return conditional_path_probability(target, nodes, j, i) / cond_q


def _distinct_cell_paths(data: PathDataset, j: int, i: int):
    """Distinct observed paths through (i, j) with per-record inverse index
    and counts; also returns the cell's responses."""
    mask = data.node_mask(j, i)
    b = data.responses[mask]
    if b.size == 0:
        raise NoDataError(f"no data at node ({i}, {j})")
    paths = data.paths[mask]
    distinct, inverse, counts = np.unique(
        paths, axis=0, return_inverse=True, return_counts=True
    )
    return b, distinct, inverse.ravel(), counts


def _exact_weights(
    data: PathDataset,
    kernel: TransitionKernel,
    target: TransitionKernel,
    i: int,
    j: int,
) -> tuple[np.ndarray, np.ndarray]:
    if not kernels_equivalent(kernel, target):
        raise ModelError("measures not equivalent")
    b, distinct, inverse, _ = _distinct_cell_paths(data, j, i)
    marg_q = node_marginal(kernel, j, i)
    marg_t = node_marginal(target, j, i)
    if marg_q <= SUPPORT_ZERO:
        raise StatisticalError(
            f"conditioning on null event: node ({i}, {j}) is unreachable"
        )
    ratios = np.empty(distinct.shape[0])
    for idx, row in enumerate(distinct):
        p_q = _raw_path_probability(kernel, row)
        if p_q <= 0.0:
            raise StatisticalError(
                f"path {tuple(int(x) for x in row)} outside the source kernel's support"
            )
        ratios[idx] = (_raw_path_probability(target, row) / marg_t) / (p_q / marg_q)
    return b, ratios[inverse]


def _raw_path_probability(kernel: TransitionKernel, row: np.ndarray) -> float:
    p = float(kernel.initial[row[0] - 1])
    for k in range(kernel.c - 1):
        p *= float(kernel.steps[k][row[k] - 1, row[k + 1] - 1])
    return p


def weighted_mean(
    data: PathDataset, kernel: TransitionKernel, target: TransitionKernel, i: int, j: int
) -> float:
    """Cell average of b times the exact measure-change ratio; estimates the
    target kernel's conditional mean at node (i, j)."""
    b, w = _exact_weights(data, kernel, target, i, j)
    return _mean_and_variance(b, w)[0]


def weighted_variance(
    data: PathDataset, kernel: TransitionKernel, target: TransitionKernel, i: int, j: int
) -> float:
    """Ratio-weighted second moment minus squared weighted mean; estimates
    the target kernel's conditional variance at node (i, j)."""
    b, w = _exact_weights(data, kernel, target, i, j)
    return _mean_and_variance(b, w)[1]


def empirical_ratio(
    data: PathDataset, target: TransitionKernel, path: PathLike, j: int, i: int
) -> float:
    """Plugin importance weight: target conditional path probability divided
    by the observed relative frequency of the path within the cell."""
    nodes = validate_path(path, data.spec)
    if nodes[j - 1] != i:
        raise ModelError(f"path does not pass through node ({i}, {j})")
    mask = data.node_mask(j, i)
    n_cell = int(mask.sum())
    if n_cell == 0:
        raise NoDataError(f"no data at node ({i}, {j})")
    n_path = int((data.paths[mask] == np.asarray(nodes)).all(axis=1).sum())
    if n_path == 0:
        raise StatisticalError(f"zero empirical frequency: path {nodes} never observed")
    return conditional_path_probability(target, nodes, j, i) * n_cell / n_path


def _path_in_support(kernel: TransitionKernel, row) -> bool:
    if kernel.initial[row[0] - 1] <= SUPPORT_ZERO:
        return False
    for k in range(kernel.c - 1):
        if kernel.steps[k][row[k] - 1, row[k + 1] - 1] <= SUPPORT_ZERO:
            return False
    return True


def _plugin_weights(
    data: PathDataset, target: TransitionKernel, i: int, j: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-record empirical-ratio weights for the cell at (i, j).

    Requires the observed paths to exhaust the target kernel's conditional
    support: every observed path must have positive target probability, and
    the target conditional probabilities of the observed paths must total 1.
    Anything else means the plugin estimator's normalization is undefined
    for this dataset, which is surfaced as an error rather than silently
    renormalized.
    """
    b, distinct, inverse, counts = _distinct_cell_paths(data, j, i)
    n_cell = b.size
    cond = np.empty(distinct.shape[0])
    for idx, row in enumerate(distinct):
        if not _path_in_support(target, row):
            raise StatisticalError(
                "target measure excludes observed path "
                f"{tuple(int(x) for x in row)}"
            )
        cond[idx] = conditional_path_probability(target, row, j, i)
    total = float(cond.sum())
    if abs(total - 1.0) > 1e-9:
        raise StatisticalError(
            f"observed paths through node ({i}, {j}) carry target conditional "
            f"mass {total:.6g}, not 1; support paths are missing from the data"
        )
    ratios = cond * n_cell / counts
    return b, ratios[inverse]


def plugin_mean(data: PathDataset, target: TransitionKernel, i: int, j: int) -> float:
    """Cell average of b times the empirical ratio; the unknown-source
    counterpart of :func:`weighted_mean`."""
    b, w = _plugin_weights(data, target, i, j)
    return _mean_and_variance(b, w)[0]


def plugin_variance(data: PathDataset, target: TransitionKernel, i: int, j: int) -> float:
    """Empirical-ratio-weighted second moment minus squared plugin mean."""
    b, w = _plugin_weights(data, target, i, j)
    return _mean_and_variance(b, w)[1]


_KIND_ALIASES = {
    "naive": KIND_NAIVE,
    KIND_NAIVE: KIND_NAIVE,
    "weighted": KIND_WEIGHTED,
    KIND_WEIGHTED: KIND_WEIGHTED,
    "plugin": KIND_PLUGIN,
    KIND_PLUGIN: KIND_PLUGIN,
}


def _cell_values(
    data: PathDataset,
    i: int,
    j: int,
    kind: str,
    kernel: TransitionKernel | None,
    target: TransitionKernel | None,
) -> tuple[np.ndarray, np.ndarray | None]:
    canonical = _KIND_ALIASES.get(kind)
    if canonical is None:
        raise ModelError(f"unknown estimator kind {kind!r}")
    if canonical == KIND_NAIVE:
        return _cell_responses(data, j, i), None
    if canonical == KIND_WEIGHTED:
        if kernel is None or target is None:
            raise ModelError("weighted estimator needs both source and target kernels")
        return _exact_weights(data, kernel, target, i, j)
    if target is None:
        raise ModelError("plugin estimator needs a target kernel")
    return _plugin_weights(data, target, i, j)


def cell_estimate(
    data: PathDataset,
    i: int,
    j: int,
    kind: str,
    kernel: TransitionKernel | None = None,
    target: TransitionKernel | None = None,
    target_id: str = "",
) -> CellEstimate:
    """Full (mean, variance) estimate for one node under one estimator."""
    b, w = _cell_values(data, i, j, kind, kernel, target)
    mean, variance, clipped = _mean_and_variance(b, w)
    return CellEstimate(
        node=(i, j),
        count=b.size,
        mean=mean,
        variance=variance,
        kind=_KIND_ALIASES[kind],
        target=target_id,
        clipped=clipped,
    )


def pairwise_difference(
    data: PathDataset,
    kernel: TransitionKernel | None,
    target: TransitionKernel | None,
    j: int,
    i: int,
    i2: int,
    which: str = "mean",
    kind: str = "plugin",
) -> float:
    """Difference of two same-column cell estimates, est(i, j) - est(i2, j).

    Under a uniform target kernel this estimates the difference of the two
    nodes' own contribution means (or variances), which is the identifiable
    quantity in this model family.
    """
    if which not in ("mean", "variance"):
        raise ModelError(f"which must be 'mean' or 'variance', got {which!r}")
    if i == i2:
        return 0.0
    a = cell_estimate(data, i, j, kind, kernel, target)
    b = cell_estimate(data, i2, j, kind, kernel, target)
    if which == "mean":
        return a.mean - b.mean
    return a.variance - b.variance


def estimate_all_cells(
    data: PathDataset,
    kind: str,
    kernel: TransitionKernel | None = None,
    target: TransitionKernel | None = None,
    target_id: str = "",
) -> list[CellEstimate | None]:
    """Cell estimates for every node in column-major order; empty cells
    yield None entries (the explicit no-data marker)."""
    out: list[CellEstimate | None] = []
    for j, r in enumerate(data.spec.levels, start=1):
        for i in range(1, r + 1):
            try:
                out.append(cell_estimate(data, i, j, kind, kernel, target, target_id))
            except NoDataError:
                out.append(None)
    return out
