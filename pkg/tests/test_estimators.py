import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import daglm
from daglm import ModelError, NoDataError, StatisticalError
from daglm.estimators import accumulate_counts, cell_estimate, estimate_all_cells

from conftest import random_model


def make_data(spec, rows):
    paths = np.array([r[0] for r in rows])
    responses = np.array([float(r[1]) for r in rows])
    return daglm.PathDataset(spec=spec, paths=paths, responses=responses)


@pytest.fixture
def tiny(demo_spec):
    # node (1, col 2) sees paths (1,1) twice and (2,1) once
    return make_data(
        demo_spec,
        [((1, 1), 1.0), ((1, 1), 3.0), ((2, 1), 2.0), ((1, 2), 4.0), ((2, 2), 0.0)],
    )


def test_accumulate_counts_single_record(demo_spec):
    data = make_data(demo_spec, [((1, 1), 3.0)])
    B, V = accumulate_counts(data)
    np.testing.assert_array_equal(V, [[1, 1], [0, 0]])
    np.testing.assert_array_equal(B, [[3, 3], [0, 0]])


def test_accumulate_counts_empty(demo_spec):
    data = daglm.PathDataset(
        spec=demo_spec, paths=np.empty((0, 2), dtype=int), responses=np.empty(0)
    )
    B, V = accumulate_counts(data)
    assert not B.any() and not V.any()


def test_accumulate_counts_column_sums(demo_data):
    B, V = accumulate_counts(demo_data)
    np.testing.assert_array_equal(V.sum(axis=0), [demo_data.n, demo_data.n])


def test_naive_mean_average(demo_spec):
    data = make_data(demo_spec, [((1, 1), 2.0), ((1, 2), 4.0)])
    assert daglm.naive_mean(data, 1, 1) == 3.0


def test_naive_variance_small_cases(demo_spec):
    data = make_data(demo_spec, [((1, 1), 2.0), ((1, 2), 4.0)])
    assert daglm.naive_variance(data, 1, 1) == pytest.approx(1.0)
    const = make_data(demo_spec, [((1, 1), 5.0), ((1, 2), 5.0)])
    assert daglm.naive_variance(const, 1, 1) == 0.0


def test_naive_variance_bessel(demo_spec):
    data = make_data(demo_spec, [((1, 1), 2.0), ((1, 2), 4.0)])
    assert daglm.naive_variance(data, 1, 1, bessel=True) == pytest.approx(2.0)
    single = make_data(demo_spec, [((1, 1), 2.0)])
    with pytest.raises(StatisticalError, match="Bessel"):
        daglm.naive_variance(single, 1, 1, bessel=True)


@given(seed=st.integers(0, 10_000), n=st.integers(2, 60))
@settings(max_examples=50, deadline=None)
def test_naive_variance_matches_brute_force(seed, n):
    rng = np.random.default_rng(seed)
    spec = daglm.DagSpec(levels=(2, 2))
    paths = rng.integers(1, 3, size=(n, 2))
    responses = rng.normal(0, 3, size=n)
    data = daglm.PathDataset(spec=spec, paths=paths, responses=responses)
    for j in (1, 2):
        for i in (1, 2):
            sel = responses[paths[:, j - 1] == i]
            if sel.size == 0:
                with pytest.raises(NoDataError):
                    daglm.naive_variance(data, i, j)
                continue
            assert daglm.naive_variance(data, i, j) == pytest.approx(
                np.var(sel), abs=1e-12
            )


def test_no_data_signal(demo_spec):
    data = make_data(demo_spec, [((1, 1), 2.0)])
    with pytest.raises(NoDataError, match=r"no data at node \(2, 1\)"):
        daglm.naive_mean(data, 2, 1)


def test_measure_change_ratio_values(demo_kernel, demo_uniform):
    assert daglm.measure_change_ratio(
        demo_kernel, demo_uniform, (1, 1), 2, 1
    ) == pytest.approx(2 / 3)
    assert daglm.measure_change_ratio(
        demo_kernel, demo_uniform, (2, 1), 2, 1
    ) == pytest.approx(2.0)


def test_measure_change_ratio_identity(demo_kernel):
    for path in [(1, 1), (1, 2), (2, 1), (2, 2)]:
        for j in (1, 2):
            assert daglm.measure_change_ratio(
                demo_kernel, demo_kernel, path, j, path[j - 1]
            ) == 1.0


def test_measure_change_ratio_errors(demo_kernel, demo_uniform):
    blocked = daglm.TransitionKernel(
        initial=np.array([0.5, 0.5]),
        steps=(np.array([[1.0, 0.0], [0.0, 1.0]]),),
    )
    with pytest.raises(ModelError, match="not equivalent"):
        daglm.measure_change_ratio(demo_kernel, blocked, (1, 1), 1, 1)
    with pytest.raises(ModelError, match="does not pass"):
        daglm.measure_change_ratio(demo_kernel, demo_uniform, (1, 1), 2, 2)


def test_weighted_mean_hand_computed(tiny, demo_kernel, demo_uniform):
    # cell (1, col 2): b = (1, 3, 2), C = (2/3, 2/3, 2)
    want = (1 * 2 / 3 + 3 * 2 / 3 + 2 * 2) / 3
    assert daglm.weighted_mean(tiny, demo_kernel, demo_uniform, 1, 2) == pytest.approx(want)


def test_weighted_variance_clips_small_sample(tiny, demo_kernel, demo_uniform):
    # hand computation gives second moment 44/9 and mean 20/9, so the raw
    # value is 44/9 - 400/81 = -4/81: genuinely negative in this tiny sample,
    # reported as 0 with the clip flag
    assert daglm.weighted_variance(tiny, demo_kernel, demo_uniform, 1, 2) == 0.0
    est = cell_estimate(
        tiny, 1, 2, "weighted", demo_kernel, demo_uniform, "uniform"
    )
    assert est.clipped and est.variance == 0.0


def test_weighted_equals_naive_same_kernel(demo_data, demo_kernel):
    for j in (1, 2):
        for i in (1, 2):
            w = daglm.weighted_mean(demo_data, demo_kernel, demo_kernel, i, j)
            assert w == daglm.naive_mean(demo_data, i, j)
            wv = daglm.weighted_variance(demo_data, demo_kernel, demo_kernel, i, j)
            assert wv == daglm.naive_variance(demo_data, i, j)


def test_empirical_ratio_balanced(demo_spec, demo_uniform):
    rows = [((1, 1), 0.0), ((1, 2), 0.0), ((2, 1), 0.0), ((2, 2), 0.0)]
    data = make_data(demo_spec, rows)
    for path in [(1, 1), (1, 2), (2, 1), (2, 2)]:
        for j in (1, 2):
            assert daglm.empirical_ratio(
                data, demo_uniform, path, j, path[j - 1]
            ) == pytest.approx(1.0)


def test_empirical_ratio_skewed_cell(demo_spec, demo_uniform):
    # path (1,1) at 3 of 4 records through node (1, col 2)
    rows = [((1, 1), 0.0)] * 3 + [((2, 1), 0.0)]
    data = make_data(demo_spec, rows)
    assert daglm.empirical_ratio(data, demo_uniform, (1, 1), 2, 1) == pytest.approx(2 / 3)
    assert daglm.empirical_ratio(data, demo_uniform, (2, 1), 2, 1) == pytest.approx(2.0)


def test_empirical_ratio_unseen_path(demo_spec, demo_uniform):
    rows = [((1, 1), 0.0), ((1, 2), 0.0)]
    data = make_data(demo_spec, rows)
    with pytest.raises(StatisticalError, match="zero empirical frequency"):
        daglm.empirical_ratio(data, demo_uniform, (2, 1), 2, 1)


def test_empirical_ratio_converges_to_exact(demo_config, demo_kernel, demo_uniform):
    config = daglm.with_replicates(demo_config, 1)
    config = daglm.ExperimentConfig(
        spec=config.spec, kernel=config.kernel, quality=config.quality,
        n=200_000, seed=41,
    )
    data = daglm.sample_dataset(config, 0)
    for path in [(1, 1), (2, 1)]:
        exact = daglm.measure_change_ratio(demo_kernel, demo_uniform, path, 2, 1)
        est = daglm.empirical_ratio(data, demo_uniform, path, 2, 1)
        assert est == pytest.approx(exact, rel=0.02)


def test_plugin_equals_naive_when_target_is_empirical(demo_spec):
    # with two columns the stepwise empirical kernel reproduces the joint
    # path frequencies exactly, so every plugin weight is 1 up to rounding
    rng = np.random.default_rng(7)
    paths = rng.integers(1, 3, size=(500, 2))
    responses = rng.normal(size=500)
    data = daglm.PathDataset(spec=demo_spec, paths=paths, responses=responses)
    emp = daglm.estimate_kernel(data)
    for j in (1, 2):
        for i in (1, 2):
            assert daglm.plugin_mean(data, emp, i, j) == pytest.approx(
                daglm.naive_mean(data, i, j), rel=1e-12, abs=1e-12
            )
            assert daglm.plugin_variance(data, emp, i, j) == pytest.approx(
                daglm.naive_variance(data, i, j), rel=1e-12, abs=1e-12
            )


def test_plugin_balanced_equals_naive(demo_spec, demo_uniform):
    # balanced path frequencies make every plugin weight exactly 1
    rows = []
    rng = np.random.default_rng(3)
    for path in [(1, 1), (1, 2), (2, 1), (2, 2)]:
        for _ in range(5):
            rows.append((path, float(rng.normal())))
    data = make_data(demo_spec, rows)
    for j in (1, 2):
        for i in (1, 2):
            assert daglm.plugin_mean(data, demo_uniform, i, j) == daglm.naive_mean(
                data, i, j
            )
            assert daglm.plugin_variance(
                data, demo_uniform, i, j
            ) == daglm.naive_variance(data, i, j)


def test_plugin_missing_support_mass(demo_spec, demo_uniform):
    # only one of the two uniform-support paths through node (1, col 2) seen
    rows = [((1, 1), 1.0), ((1, 2), 2.0), ((2, 2), 0.5)]
    data = make_data(demo_spec, rows)
    with pytest.raises(StatisticalError, match="missing from the data"):
        daglm.plugin_mean(data, demo_uniform, 1, 2)


def test_plugin_target_excludes_observed_path(demo_spec):
    target = daglm.TransitionKernel(
        initial=np.array([0.5, 0.5]),
        steps=(np.array([[1.0, 0.0], [0.0, 1.0]]),),
    )
    rows = [((1, 1), 1.0), ((1, 2), 2.0)]
    data = make_data(demo_spec, rows)
    with pytest.raises(StatisticalError, match="excludes observed path"):
        daglm.plugin_mean(data, target, 1, 1)


def test_cell_estimate_fields(tiny, demo_kernel, demo_uniform):
    est = cell_estimate(tiny, 1, 2, "weighted", demo_kernel, demo_uniform, "uniform")
    assert est.node == (1, 2)
    assert est.count == 3
    assert est.kind == "weighted-knownQ"
    assert est.target == "uniform"


def test_cell_estimate_count_invariant(demo_data):
    B, V = accumulate_counts(demo_data)
    for j in (1, 2):
        for i in (1, 2):
            est = cell_estimate(demo_data, i, j, "naive")
            assert est.count == int(V[i - 1, j - 1])
            assert est.count <= demo_data.n


def test_pairwise_difference_same_level_exact_zero(demo_data, demo_uniform):
    val = daglm.pairwise_difference(
        demo_data, None, demo_uniform, 1, 1, 1, which="mean", kind="plugin"
    )
    assert val == 0.0


def test_pairwise_difference_orders(demo_data, demo_kernel, demo_uniform):
    d12 = daglm.pairwise_difference(
        demo_data, demo_kernel, demo_uniform, 1, 1, 2, "mean", "weighted"
    )
    d21 = daglm.pairwise_difference(
        demo_data, demo_kernel, demo_uniform, 1, 2, 1, "mean", "weighted"
    )
    assert d12 == pytest.approx(-d21)
    with pytest.raises(ModelError, match="which"):
        daglm.pairwise_difference(
            demo_data, demo_kernel, demo_uniform, 1, 1, 2, "median", "weighted"
        )


def test_estimate_all_cells_marks_empty(demo_spec):
    data = make_data(demo_spec, [((1, 1), 2.0)])
    cells = estimate_all_cells(data, "naive")
    # column-major: (1,1), (2,1), (1,2), (2,2)
    assert cells[0] is not None and cells[0].count == 1
    assert cells[1] is None
    assert cells[2] is not None
    assert cells[3] is None


@given(seed=st.integers(0, 100_000))
@settings(max_examples=30, deadline=None)
def test_weighted_and_naive_fp_equal_on_random_data(seed):
    rng = np.random.default_rng(seed)
    spec, kernel, _, quality = random_model(rng, max_c=3, max_r=3)
    config = daglm.ExperimentConfig(
        spec=spec, kernel=kernel, quality=quality,
        n=int(rng.integers(20, 200)), seed=seed,
    )
    data = daglm.sample_dataset(config, 0)
    for j in range(1, spec.c + 1):
        for i in range(1, spec.levels[j - 1] + 1):
            if data.count(j, i) == 0:
                continue
            assert daglm.weighted_mean(data, kernel, kernel, i, j) == daglm.naive_mean(
                data, i, j
            )
            assert daglm.weighted_variance(
                data, kernel, kernel, i, j
            ) == daglm.naive_variance(data, i, j)


@given(seed=st.integers(0, 100_000))
@settings(max_examples=20, deadline=None)
def test_plugin_weights_average_to_one(seed):
    # the empirical ratios weight-average to exactly the target's conditional
    # mass over observed paths, which the support check pins to 1
    rng = np.random.default_rng(seed)
    spec, kernel, target, quality = random_model(rng, max_c=3, max_r=3)
    config = daglm.ExperimentConfig(
        spec=spec, kernel=kernel, quality=quality, n=600, seed=seed
    )
    data = daglm.sample_dataset(config, 0)
    from daglm.estimators import _plugin_weights

    for j in range(1, spec.c + 1):
        for i in range(1, spec.levels[j - 1] + 1):
            if data.count(j, i) == 0:
                continue
            try:
                b, w = _plugin_weights(data, target, i, j)
            except StatisticalError:
                continue  # support not exhausted at this n; checked elsewhere
            assert np.sum(w) / b.size == pytest.approx(1.0, abs=1e-9)
