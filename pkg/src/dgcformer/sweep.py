"""Sequential horizon x variant x seed sweeps and their result grid."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ABLATIONS, ExperimentConfig
from .errors import ConfigError
from .training import RunReport, train

log = logging.getLogger(__name__)

GRID_COLUMNS = ("horizon", "variant", "mse", "mae", "mse_std", "mae_std", "n_seeds")


@dataclass
class SweepResult:
    horizons: list[int]
    ablations: list[str]
    seeds: list[int]
    reports: list[RunReport] = field(default_factory=list)

    def cell(self, horizon: int, ablation: str) -> tuple[float, float, float, float, int]:
        """Seed-averaged (mse, mae, mse_std, mae_std, count) for one grid cell."""
        runs = [r for r in self.reports if r.horizon == horizon and r.ablation == ablation]
        if not runs:
            return math.nan, math.nan, math.nan, math.nan, 0
        mse = np.array([r.test_mse for r in runs])
        mae = np.array([r.test_mae for r in runs])
        return float(mse.mean()), float(mae.mean()), float(mse.std()), float(mae.std()), len(runs)

    def rows(self) -> list[dict]:
        out = []
        for h in self.horizons:
            for a in self.ablations:
                mse, mae, mse_sd, mae_sd, k = self.cell(h, a)
                out.append({"horizon": h, "variant": a, "mse": mse, "mae": mae,
                            "mse_std": mse_sd, "mae_std": mae_sd, "n_seeds": k})
        return out

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=GRID_COLUMNS)
            w.writeheader()
            for row in self.rows():
                w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})

    def text_table(self) -> str:
        """Aligned grid: one row per horizon, one ``MSE / MAE`` column per variant."""
        header = ["horizon"] + list(self.ablations)
        body = []
        for h in self.horizons:
            cells = [str(h)]
            for a in self.ablations:
                mse, mae, *_ = self.cell(h, a)
                cells.append("-" if math.isnan(mse) else f"{mse:.3f} / {mae:.3f}")
            body.append(cells)
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        fmt = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
        rule = "  ".join("-" * w for w in widths)
        return "\n".join([fmt(header), rule] + [fmt(r) for r in body]) + "\n"


def run_sweep(cfg: ExperimentConfig, horizons: Sequence[int], ablations: Sequence[str],
              seeds: Sequence[int], out_dir: str | os.PathLike | None = None) -> SweepResult:
    """Train every (horizon, ablation, seed) combination one after another.

    Per-run artifacts land in ``out_dir/runs``; the grid is written as
    ``sweep.csv`` and ``sweep.txt``.
    """
    horizons, ablations, seeds = list(horizons), list(ablations), list(seeds)
    if not seeds:
        raise ConfigError("sweep needs at least one seed")
    if not horizons:
        raise ConfigError("sweep needs at least one horizon")
    if not ablations:
        raise ConfigError("sweep needs at least one ablation")
    bad = [a for a in ablations if a not in ABLATIONS]
    if bad:
        raise ConfigError(f"unknown ablation(s) {', '.join(bad)}; choose from {', '.join(ABLATIONS)}")
    result = SweepResult(horizons, ablations, seeds)
    runs_dir = Path(out_dir) / "runs" if out_dir is not None else None
    for h in horizons:
        for a in ablations:
            for s in seeds:
                run_cfg = cfg.override(data={"pred_len": int(h)}, train={"ablation": a, "seed": int(s)})
                log.info("sweep run horizon=%d ablation=%s seed=%d", h, a, s)
                result.reports.append(train(run_cfg, out_dir=runs_dir).report)
    if out_dir is not None:
        out = Path(out_dir)
        result.write_csv(out / "sweep.csv")
        (out / "sweep.txt").write_text(result.text_table(), encoding="utf-8")
    return result
