"""Evaluate the brute-force oracles on the hand-picked examples and freeze the results.

Run once from the repository root; the tests read ``tests/fixtures/derived_values.json``
and never recompute these numbers from the package itself.

    python3 scripts/freeze_oracles.py
"""

from __future__ import annotations

import json
import math
import random
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

import oracles  # noqa: E402


def main() -> None:
    rng = random.Random(20240601)
    values = {
        "soft_assignment_scalar": {
            "h": [[0.0]], "centers": [[0.0], [1.0]], "t": 1.0,
            "q": oracles.soft_assignment([[0.0]], [[0.0], [1.0]], 1.0),
        },
        "target_distribution_2x2": {
            "q": [[0.8, 0.2], [0.6, 0.4]],
            "p": oracles.target_distribution([[0.8, 0.2], [0.6, 0.4]]),
        },
        "loss_rec_single": {"x": [[0.0]], "x_rec": [[2.0]], "value": oracles.loss_rec([[0.0]], [[2.0]])},
        "loss_pred_single": {"y_hat": [[3.0]], "y": [[0.0]], "value": oracles.loss_pred([[0.0]], [[3.0]])},
        "loss_ds_pair": {
            "p": [[1.0, 0.0]], "g": [[0.5, 0.5]],
            "forward": oracles.loss_ds([[1.0, 0.0]], [[0.5, 0.5]]),
            "swapped": oracles.loss_ds([[0.5, 0.5]], [[1.0, 0.0]]),
        },
        "total_loss_ones": {"value": oracles.total_loss(1.0, 1.0, 1.0)},
        "mask_vector_001": {
            "labels": [0, 0, 1],
            "mask": oracles.build_mask([0, 0, 1]),
            "vector": oracles.mask_vector(oracles.build_mask([0, 0, 1])),
        },
        "n_windows_200_96_96": {"value": 200 - 96 - 96 + 1},
        "n_patches": [
            {"L": 96, "patch_len": 16, "stride": 8, "C": (96 - 16) // 8 + 1},
            {"L": 104, "patch_len": 24, "stride": 2, "C": (104 - 24) // 2 + 1},
        ],
        "propagation_path3": {
            "adj": [[0, 1, 0], [1, 0, 1], [0, 1, 0]],
            "op": oracles.propagation_operator([[0, 1, 0], [1, 0, 1], [0, 1, 0]]),
        },
        "propagation_empty4": {"op": oracles.propagation_operator([[0.0] * 4 for _ in range(4)])},
    }

    # DTW on short random sequences, full band and a narrow band
    dtw_cases = []
    for _ in range(12):
        n, m = rng.randint(3, 9), rng.randint(3, 9)
        x = [round(rng.uniform(-2, 2), 6) for _ in range(n)]
        y = [round(rng.uniform(-2, 2), 6) for _ in range(m)]
        r = rng.choice([-1, 0, 1, 2])
        dtw_cases.append({"x": x, "y": y, "radius": r, "value": oracles.dtw(x, y, r)})
    values["dtw_cases"] = dtw_cases

    # DTW of a sinusoid and its 10-step shift versus their Euclidean distance
    s = [math.sin(2 * math.pi * i / 40) for i in range(200)]
    shifted = [math.sin(2 * math.pi * (i - 10) / 40) for i in range(200)]
    values["dtw_shift"] = {
        "dtw": oracles.dtw(s, shifted, 50),
        "euclid": math.sqrt(sum((a - b) ** 2 for a, b in zip(s, shifted))),
    }

    # silhouette for two well separated blobs partitioned into 2, 3 and 4 groups
    blobs = [[rng.gauss(0, 0.1), rng.gauss(0, 0.1)] for _ in range(6)] + \
            [[10 + rng.gauss(0, 0.1), 10 + rng.gauss(0, 0.1)] for _ in range(6)]
    two = [0] * 6 + [1] * 6
    three = [0] * 3 + [2] * 3 + [1] * 6
    four = [0] * 3 + [2] * 3 + [1] * 3 + [3] * 3
    values["silhouette_blobs"] = {
        "points": blobs,
        "scores": {"2": oracles.silhouette(blobs, two), "3": oracles.silhouette(blobs, three),
                   "4": oracles.silhouette(blobs, four)},
        "true_labels": two,
    }

    out = ROOT / "tests" / "fixtures" / "derived_values.json"
    out.write_text(json.dumps(values, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
