"""Simulate the bundled 2x2 demo model and compare the three estimator
families against the exact targets.

The source kernel makes the two factor columns strongly dependent, so naive
per-cell averages mix in neighbour effects: in the second column the two
node means differ by 1, yet the naive difference converges to 0. Reweighting
toward the uniform kernel (exact ratios or plugin ratios) recovers the real
per-node differences.

Usage:
    python scripts/unbiasing_demo.py --n 100000 --seed 17
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import daglm
from daglm.estimators import cell_estimate
from daglm.oracle import exact_estimator_targets
from daglm.simulation import ExperimentConfig, load_config, sample_dataset


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=100_000, help="sample size")
    parser.add_argument("--seed", type=int, default=17)
    parser.add_argument(
        "--config", default=None,
        help="experiment config JSON (default: bundled demo config)",
    )
    args = parser.parse_args()

    base = load_config(args.config or daglm.data_path("demo_config.json"))
    config = ExperimentConfig(
        spec=base.spec, kernel=base.kernel, quality=base.quality,
        n=args.n, seed=args.seed,
    )
    target = daglm.uniform_kernel(config.spec)
    data = sample_dataset(config, 0)
    means, variances = exact_estimator_targets(config.kernel, target,
                                               config.quality)

    print(f"n = {config.n}, seed = {config.seed}")
    print(f"{'node':>6} {'exact mean':>11} {'naive':>8} {'weighted':>9} "
          f"{'plugin':>8}   {'exact var':>9} {'naive':>8} {'weighted':>9} "
          f"{'plugin':>8}")
    cells = {}
    for j, r in enumerate(config.spec.levels, start=1):
        for i in range(1, r + 1):
            naive = cell_estimate(data, i, j, "naive")
            weighted = cell_estimate(data, i, j, "weighted", config.kernel,
                                     target, "uniform")
            plugin = cell_estimate(data, i, j, "plugin", target=target,
                                   target_id="uniform")
            cells[(i, j)] = (naive, weighted, plugin)
            print(
                f" ({i},{j}) {means[i - 1, j - 1]:11.3f} {naive.mean:8.3f} "
                f"{weighted.mean:9.3f} {plugin.mean:8.3f}   "
                f"{variances[i - 1, j - 1]:9.3f} {naive.variance:8.3f} "
                f"{weighted.variance:9.3f} {plugin.variance:8.3f}"
            )

    print("\nwithin-column differences, level 1 minus level 2:")
    print(f"{'column':>7} {'which':>9} {'exact':>7} {'naive':>8} "
          f"{'weighted':>9} {'plugin':>8}")
    for j in (1, 2):
        a, b = cells[(1, j)], cells[(2, j)]
        exact_m = means[0, j - 1] - means[1, j - 1]
        exact_v = variances[0, j - 1] - variances[1, j - 1]
        print(f"{j:>7} {'mean':>9} {exact_m:7.3f} "
              f"{a[0].mean - b[0].mean:8.3f} {a[1].mean - b[1].mean:9.3f} "
              f"{a[2].mean - b[2].mean:8.3f}")
        print(f"{j:>7} {'variance':>9} {exact_v:7.3f} "
              f"{a[0].variance - b[0].variance:8.3f} "
              f"{a[1].variance - b[1].variance:9.3f} "
              f"{a[2].variance - b[2].variance:8.3f}")
    print("\nthe naive column-2 mean difference sits near 0 even though the "
          "node means differ by 1;\nboth reweighted estimators recover it.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
