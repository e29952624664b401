"""Regenerate the bundled datasets under src/daglm/data.

Deterministic: every stochastic step uses a fixed Philox key, so rerunning
this script reproduces the shipped files byte for byte. See
src/daglm/data/PROVENANCE.md for what each file is and is not.
"""

import csv
import json
from pathlib import Path

import numpy as np

DATA_DIR = Path(__file__).resolve().parent.parent / "src" / "daglm" / "data"

TOOTH_VC = {
    "0.5": [4.2, 11.5, 7.3, 5.8, 6.4, 10.0, 11.2, 11.2, 5.2, 7.0],
    "1": [16.5, 16.5, 15.2, 17.3, 22.5, 17.3, 13.6, 14.5, 18.8, 15.5],
    "2": [23.6, 18.5, 33.9, 25.5, 26.4, 32.5, 26.7, 21.5, 23.3, 29.5],
}
TOOTH_OJ = {
    "0.5": [15.2, 21.5, 17.6, 9.7, 14.5, 10.0, 8.2, 9.4, 16.5, 9.7],
    "1": [19.7, 23.3, 23.6, 26.4, 20.0, 25.2, 25.8, 21.2, 14.5, 27.3],
    "2": [25.5, 26.4, 22.4, 24.5, 24.8, 30.9, 26.4, 27.3, 29.4, 23.0],
}

# Quintile boundaries the synthetic school data is calibrated to, and the
# empirical transition frequencies (row: english group, column: class-size
# group) it reproduces as cell counts out of 84.
STR_BREAKS = [14.00, 18.16, 19.27, 20.08, 21.08, 25.80]
ENGLISH_BREAKS = [0.00, 1.16, 5.01, 13.14, 30.72, 85.54]
TRANSITION_COUNTS = [
    [27, 20, 16, 15, 6],
    [21, 19, 20, 15, 9],
    [17, 10, 17, 16, 24],
    [9, 23, 19, 14, 19],
    [10, 12, 12, 24, 26],
]
N_SCHOOLS = 420
PER_GROUP = 84


def write_toothgrowth():
    path = DATA_DIR / "toothgrowth.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["supp", "dose", "len"])
        for supp, block in (("VC", TOOTH_VC), ("OJ", TOOTH_OJ)):
            for dose in ("0.5", "1", "2"):
                for value in block[dose]:
                    writer.writerow([supp, dose, value])
    return path


def pinned_order_statistics(breaks, rng):
    """Sorted sample of 420 values whose type-7 quintiles equal `breaks`.

    With n = 420 the p = k/5 quantile sits at fractional position 419 * k/5,
    between two order statistics. Placing that pair symmetrically around the
    wanted boundary (split by the interpolation weight) makes the computed
    quantile land on the boundary exactly; endpoints pin the min and max.
    """
    x = np.empty(N_SCHOOLS)
    gap = 0.01
    anchors = [(0, breaks[0], None)]
    for k, frac in zip(range(1, 5), (0.8, 0.6, 0.4, 0.2)):
        lo_idx = int(np.floor(419 * k / 5))
        anchors.append((lo_idx, breaks[k] - frac * gap, breaks[k] + (1 - frac) * gap))
    anchors.append((419, breaks[5], None))
    for idx, lo, hi in anchors:
        x[idx] = lo
        if hi is not None:
            x[idx + 1] = hi
    # fill strictly increasing interiors between consecutive pinned values
    fixed = sorted(
        [a[0] for a in anchors]
        + [a[0] + 1 for a in anchors if a[2] is not None]
    )
    for left, right in zip(fixed[:-1], fixed[1:]):
        m = right - left - 1
        if m <= 0:
            continue
        lo, hi = x[left], x[right]
        base = np.linspace(lo, hi, m + 2)[1:-1]
        step = (hi - lo) / (m + 1)
        jitter = rng.uniform(-0.3, 0.3, size=m) * step
        vals = np.sort(base + jitter)
        vals = np.clip(vals, lo + 1e-4, hi - 1e-4)
        x[left + 1:right] = np.round(vals, 4)
    assert np.all(np.diff(x) > 0), "order statistics must be strictly increasing"
    return x


def write_caschools():
    rng = np.random.Generator(np.random.Philox(key=[20260801, 0]))
    english = pinned_order_statistics(ENGLISH_BREAKS, rng)
    str_values = pinned_order_statistics(STR_BREAKS, rng)

    str_pools = [list(str_values[g * PER_GROUP:(g + 1) * PER_GROUP]) for g in range(5)]
    rows = []
    for g1 in range(5):
        eng_block = english[g1 * PER_GROUP:(g1 + 1) * PER_GROUP]
        assigned = []
        for g2 in range(5):
            take = TRANSITION_COUNTS[g1][g2]
            assigned.extend(str_pools[g2][:take])
            del str_pools[g2][:take]
        assigned = np.array(assigned)
        rng.shuffle(assigned)
        for e, s in zip(eng_block, assigned):
            score = 686.0 - 1.0 * (s - 19.64) - 0.65 * e + rng.normal(0.0, 8.0)
            rows.append((e, s, round(score, 2)))
    assert all(not pool for pool in str_pools)
    order = rng.permutation(len(rows))

    path = DATA_DIR / "caschools.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["english", "STR", "score"])
        for k in order:
            e, s, score = rows[k]
            writer.writerow([repr(float(e)), repr(float(s)), repr(float(score))])
    return path


def write_moss():
    rng = np.random.Generator(np.random.Philox(key=[20260801, 1]))
    means = {
        ("HS", "control"): 1.90, ("HS", "N12.5"): 1.20, ("HS", "N50"): 0.80,
        ("PS", "control"): 1.30, ("PS", "N12.5"): 0.90, ("PS", "N50"): 0.55,
    }
    sds = {
        ("HS", "control"): 0.45, ("HS", "N12.5"): 0.30, ("HS", "N50"): 0.22,
        ("PS", "control"): 0.35, ("PS", "N12.5"): 0.25, ("PS", "N50"): 0.18,
    }
    path = DATA_DIR / "moss.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["species", "treatment", "biomass"])
        for species in ("HS", "PS"):
            for treatment in ("control", "N12.5", "N50"):
                draws = means[species, treatment] + sds[species, treatment] * rng.normal(
                    size=6
                )
                for value in np.maximum(np.round(draws, 3), 0.05):
                    writer.writerow([species, treatment, repr(float(value))])
    return path


def write_demo_model():
    doc = {
        "schema_version": 1,
        "columns": [2, 2],
        "labels": [["a1", "a2"], ["b1", "b2"]],
        "initial": [0.5, 0.5],
        "steps": [[[0.75, 0.25], [0.25, 0.75]]],
        "quality": {
            "1,1": {"kind": "gaussian", "mean": 0.0, "variance": 2.0},
            "2,1": {"kind": "gaussian", "mean": -2.0, "variance": 1.0},
            "1,2": {"kind": "gaussian", "mean": 1.0, "variance": 1.0},
            "2,2": {"kind": "gaussian", "mean": 2.0, "variance": 1.0},
        },
    }
    path = DATA_DIR / "demo_2x2.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")

    config = {
        "model-ref": "demo_2x2.json",
        "n": 2000,
        "seed": 17,
        "replicates": 200,
        "target-kernel": "uniform",
        "estimators": ["naive", "weighted", "plugin"],
        "level": 0.95,
    }
    cfg_path = DATA_DIR / "demo_config.json"
    cfg_path.write_text(json.dumps(config, indent=2) + "\n")
    return path, cfg_path


def main():
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    for out in (write_toothgrowth(), write_caschools(), write_moss(),
                *write_demo_model()):
        print("wrote", out)


if __name__ == "__main__":
    main()
