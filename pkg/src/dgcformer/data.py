"""Series ingestion, splitting, normalization, windowing and synthetic data."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    DatasetNotFound,
    EmptySeries,
    MalformedCsv,
    MissingValues,
    SplitTooLarge,
    SplitTooShort,
)

FREQUENCIES = ("10min", "15min", "hourly", "daily", "weekly")
STD_FLOOR = 1e-8
DEFAULT_RATIOS = (0.7, 0.1, 0.2)
DATA_DIR_ENV = "DGC_DATA_DIR"

# name -> (frequency, default split counts or None for ratio split)
KNOWN_DATASETS: dict[str, tuple[str, tuple[int, int, int] | None]] = {
    "ETTh1": ("hourly", (8545, 2881, 2881)),
    "ETTh2": ("hourly", (8545, 2881, 2881)),
    "ETTm1": ("15min", (34465, 11521, 11521)),
    "ETTm2": ("15min", (34465, 11521, 11521)),
    "weather": ("10min", None),
    "electricity": ("hourly", None),
    "exchange_rate": ("daily", None),
    "national_illness": ("weekly", None),
}

_MISSING_TOKENS = {"", "nan", "NaN", "NA", "na", "null", "NULL", "None"}


@dataclass(frozen=True)
class MultivariateSeries:
    values: np.ndarray  # (T, N)
    channel_names: tuple[str, ...]
    frequency: str | None = None
    split_sizes: tuple[int, int, int] | None = None
    name: str = "series"
    timestamps: tuple[str, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D (T, N), got shape {values.shape}")
        if values.shape[0] == 0:
            raise EmptySeries("series has no time steps")
        if len(self.channel_names) != values.shape[1]:
            raise ValueError("channel_names length does not match number of columns")
        if not np.all(np.isfinite(values)):
            raise MissingValues("series contains non-finite values")
        if self.frequency is not None and self.frequency not in FREQUENCIES:
            raise ValueError(f"unknown frequency {self.frequency!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        if self.split_sizes is not None:
            object.__setattr__(self, "split_sizes", _check_counts(self.split_sizes, values.shape[0]))

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "MultivariateSeries":
        return replace(self, values=values)


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, train_values: np.ndarray) -> "NormalizationStats":
        train_values = np.asarray(train_values, dtype=np.float64)
        mean = train_values.mean(axis=0)
        std = np.maximum(train_values.std(axis=0), STD_FLOOR)
        return cls(mean=mean, std=std)

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


@dataclass(frozen=True)
class WindowBatch:
    inputs: np.ndarray  # (B, N, L)
    targets: np.ndarray  # (B, N, S)

    @property
    def L(self) -> int:
        return self.inputs.shape[-1]

    @property
    def S(self) -> int:
        return self.targets.shape[-1]

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def batches(self, batch_size: int, order: np.ndarray | None = None) -> Iterator["WindowBatch"]:
        idx = np.arange(len(self)) if order is None else np.asarray(order)
        for start in range(0, len(idx), batch_size):
            sel = idx[start:start + batch_size]
            yield WindowBatch(np.ascontiguousarray(self.inputs[sel]),
                              np.ascontiguousarray(self.targets[sel]))


@dataclass(frozen=True)
class SyntheticSpec:
    n_channels: int = 8
    n_groups: int = 2
    steps: int = 2000
    seed: int = 0
    noise_std: float = 0.1
    # per-group base signals; drawn from the seed when left empty
    periods: tuple[float, ...] = ()
    phases: tuple[float, ...] = ()
    slopes: tuple[float, ...] = ()

    def __post_init__(self):
        if self.n_groups < 1 or self.n_channels < 1:
            raise ValueError("n_channels and n_groups must be positive")
        if self.n_groups > self.n_channels:
            raise ValueError("n_groups must not exceed n_channels")
        if self.steps < 2:
            raise ValueError("steps must be at least 2")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        for name in ("periods", "phases", "slopes"):
            seq = getattr(self, name)
            if seq and len(seq) != self.n_groups:
                raise ValueError(f"{name} needs one entry per group")


def _parse_cell(cell: str, row: int, col: int) -> float:
    text = cell.strip()
    if text in _MISSING_TOKENS:
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise MalformedCsv(f"row {row}, column {col}: cannot parse {cell!r} as a number") from None


def load_csv(path: str | os.PathLike, *, name: str | None = None, forward_fill: bool = False,
             frequency: str | None = None,
             split_sizes: tuple[int, int, int] | None = None) -> MultivariateSeries:
    """Read a benchmark CSV whose first column is a timestamp.

    Missing cells raise :class:`MissingValues` unless ``forward_fill`` is set.
    When ``name`` matches a known benchmark, its frequency and default split
    counts are attached.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetNotFound(f"dataset file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptySeries(f"{path}: file is empty") from None
        if len(header) < 2:
            raise MalformedCsv(f"{path}: need a timestamp column and at least one channel")
        width = len(header)
        stamps, rows = [], []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != width:
                raise MalformedCsv(f"{path}: row {lineno} has {len(record)} fields, expected {width}")
            stamps.append(record[0])
            rows.append([_parse_cell(c, lineno, j) for j, c in enumerate(record[1:], start=2)])
    if not rows:
        raise EmptySeries(f"{path}: no data rows")
    values = np.asarray(rows, dtype=np.float64)
    if np.isnan(values).any():
        if not forward_fill:
            r, c = np.argwhere(np.isnan(values))[0]
            raise MissingValues(f"{path}: missing value at row {r + 2}, column {c + 2}")
        values = _forward_fill(values)
    name = name or path.stem
    known_freq, known_counts = KNOWN_DATASETS.get(name, (None, None))
    sizes = split_sizes or known_counts
    if sizes is None:
        sizes = counts_from_ratios(values.shape[0], DEFAULT_RATIOS)
    return MultivariateSeries(values=values, channel_names=tuple(h.strip() for h in header[1:]),
                              frequency=frequency or known_freq, split_sizes=sizes,
                              name=name, timestamps=tuple(stamps))


def _forward_fill(values: np.ndarray) -> np.ndarray:
    out = values.copy()
    for t in range(1, out.shape[0]):
        gap = np.isnan(out[t])
        out[t, gap] = out[t - 1, gap]
    if np.isnan(out).any():
        raise MissingValues("leading missing values cannot be forward-filled")
    return out


def resolve_dataset_path(dataset: str, data_dir: str | None = None) -> Path:
    """Find a dataset by explicit path, ``data_dir`` or the ``DGC_DATA_DIR`` root."""
    candidate = Path(dataset)
    if candidate.is_file():
        return candidate
    roots = [r for r in (data_dir, os.environ.get(DATA_DIR_ENV)) if r]
    names = [dataset] if dataset.endswith(".csv") else [dataset + ".csv", dataset]
    for root in roots:
        for nm in names:
            p = Path(root) / nm
            if p.is_file():
                return p
    raise DatasetNotFound(f"dataset not found: {dataset} (searched {', '.join(map(str, roots)) or 'no data root'})")


def counts_from_ratios(n_steps: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) > 1 + 1e-9:
        raise ValueError(f"invalid split ratios {tuple(ratios)}")
    train = int(n_steps * ratios[0])
    test = int(n_steps * ratios[2])
    val = min(int(n_steps * ratios[1]), n_steps - train - test)
    return train, val, test


def _check_counts(counts: Sequence[int], n_steps: int) -> tuple[int, int, int]:
    counts = tuple(int(c) for c in counts)
    if len(counts) != 3 or any(c < 0 for c in counts):
        raise ValueError(f"split counts must be three non-negative integers, got {counts}")
    if sum(counts) > n_steps:
        raise SplitTooLarge(f"split counts {counts} exceed series length {n_steps}")
    return counts


def split(series: MultivariateSeries,
          sizes: Sequence[int] | Sequence[float] | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Contiguous train/val/test views of ``series.values``.

    ``sizes`` may be integer counts or fractional ratios; ``None`` uses the
    series' own split sizes.
    """
    if sizes is None:
        counts = series.split_sizes or counts_from_ratios(series.n_steps, DEFAULT_RATIOS)
    elif all(isinstance(s, (float, np.floating)) for s in sizes):
        counts = counts_from_ratios(series.n_steps, sizes)
    else:
        counts = sizes
    a, b, c = _check_counts(counts, series.n_steps)
    v = series.values
    return v[:a], v[a:a + b], v[a + b:a + b + c]


def split_boundaries(counts: Sequence[int]) -> tuple[int, int]:
    return counts[0], counts[0] + counts[1]


def normalize(series: MultivariateSeries,
              stats: NormalizationStats | None = None) -> tuple[MultivariateSeries, NormalizationStats]:
    """Standardize every split with statistics fitted on the train split only."""
    if stats is None:
        train, _, _ = split(series)
        if len(train) == 0:
            raise SplitTooShort("train split is empty; cannot fit normalization statistics")
        stats = NormalizationStats.fit(train)
    return series.with_values(stats.transform(series.values)), stats


def denormalize(values: np.ndarray, stats: NormalizationStats, channel_axis: int = -1) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    shape = [1] * values.ndim
    shape[channel_axis] = -1
    return values * stats.std.reshape(shape) + stats.mean.reshape(shape)


def n_windows(split_len: int, L: int, S: int, stride: int = 1) -> int:
    if split_len < L + S:
        return 0
    return (split_len - L - S) // stride + 1


def make_windows(values: np.ndarray, L: int, S: int, stride: int = 1) -> WindowBatch:
    """Cut (look-back, horizon) pairs from one split; arrays are read-only views."""
    values = np.asarray(values, dtype=np.float64)
    if L < 1 or S < 1 or stride < 1:
        raise ValueError("L, S and stride must be positive")
    if values.shape[0] < L + S:
        raise SplitTooShort(f"split of length {values.shape[0]} is shorter than L + S = {L + S}")
    frames = np.lib.stride_tricks.sliding_window_view(values, L + S, axis=0)[::stride]  # (B, N, L+S)
    return WindowBatch(inputs=frames[..., :L], targets=frames[..., L:])


def generate_synthetic(spec: SyntheticSpec) -> tuple[MultivariateSeries, np.ndarray]:
    """Channels grouped around shared sinusoid-plus-trend signals.

    Channel ``c`` belongs to group ``c % n_groups`` so every group is non-empty.
    Returns the series and the true group label of each channel.
    """
    rng = np.random.default_rng(spec.seed)
    g = spec.n_groups
    periods = np.asarray(spec.periods or _spread_periods(rng, g), dtype=np.float64)
    phases = np.asarray(spec.phases or rng.uniform(0, 2 * np.pi, g), dtype=np.float64)
    slopes = np.asarray(spec.slopes or rng.uniform(-1.0, 1.0, g), dtype=np.float64)
    t = np.arange(spec.steps, dtype=np.float64)
    base = (np.sin(2 * np.pi * t[:, None] / periods + phases)
            + slopes * t[:, None] / spec.steps)  # (T, g)
    labels = np.arange(spec.n_channels) % g
    values = base[:, labels]
    if spec.noise_std > 0:
        values = values + rng.normal(0.0, spec.noise_std, size=values.shape)
    series = MultivariateSeries(values=values,
                                channel_names=tuple(f"ch{i}" for i in range(spec.n_channels)),
                                frequency="hourly",
                                split_sizes=counts_from_ratios(spec.steps, DEFAULT_RATIOS),
                                name=f"synthetic_seed{spec.seed}")
    return series, labels


def _spread_periods(rng: np.random.Generator, n_groups: int) -> np.ndarray:
    # log-spaced so groups differ clearly in frequency, jittered by the seed
    grid = np.geomspace(24.0, 72.0, n_groups) if n_groups > 1 else np.array([48.0])
    return grid * rng.uniform(0.9, 1.1, n_groups)


def save_csv(series: MultivariateSeries, path: str | os.PathLike) -> None:
    stamps = series.timestamps or tuple(str(i) for i in range(series.n_steps))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *series.channel_names])
        for s, row in zip(stamps, series.values):
            w.writerow([s, *(repr(float(x)) for x in row)])
