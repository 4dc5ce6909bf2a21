"""Pretraining, joint training, early stopping, cluster-count selection, evaluation."""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import torch
from sklearn.metrics import silhouette_score

from .checkpoint import load_checkpoint, save_checkpoint
from .clustering import (
    ChannelClusterer,
    build_graph,
    build_mask,
    centers_from_labels,
    channel_features,
    kmeans,
)
from .config import ExperimentConfig, config_from_dict
from .data import (
    MultivariateSeries,
    NormalizationStats,
    SyntheticSpec,
    WindowBatch,
    generate_synthetic,
    load_csv,
    make_windows,
    normalize,
    resolve_dataset_path,
    split,
)
from .dtw import canonical_labels, dtw_cluster
from .errors import ConfigError, DegenerateCluster, NonFiniteLoss
from .forecaster import MaskedPatchForecaster, loss_pred

log = logging.getLogger(__name__)

METRICS_COLUMNS = ("dataset", "horizon", "ablation", "seed", "mse", "mae", "epochs", "wall_clock_s")


def total_loss(l_rec, l_ds, l_pred, lambda1: float = 0.1, lambda2: float = 1.0):
    return lambda1 * l_ds + lambda2 * l_rec + l_pred


# ----------------------------------------------------------------------------
# data
# ----------------------------------------------------------------------------

@dataclass
class PreparedData:
    series: MultivariateSeries  # normalized
    stats: NormalizationStats
    train_values: np.ndarray
    train: WindowBatch
    val: WindowBatch
    test: WindowBatch
    true_labels: np.ndarray | None = None

    @property
    def n_channels(self) -> int:
        return self.series.n_channels


def load_series(cfg: ExperimentConfig) -> tuple[MultivariateSeries, np.ndarray | None]:
    d = cfg.data
    if d.dataset == "synthetic":
        spec = SyntheticSpec(n_channels=d.synthetic_channels, n_groups=d.synthetic_groups,
                             steps=d.synthetic_steps, seed=d.synthetic_seed, noise_std=d.synthetic_noise)
        return generate_synthetic(spec)
    path = resolve_dataset_path(d.dataset, d.data_dir or None)
    name = Path(d.dataset).stem if d.dataset.endswith(".csv") else Path(d.dataset).name
    return load_csv(path, name=name, forward_fill=d.forward_fill), None


def prepare_data(cfg: ExperimentConfig, series: MultivariateSeries | None = None,
                 true_labels: np.ndarray | None = None) -> PreparedData:
    if series is None:
        series, true_labels = load_series(cfg)
    if cfg.data.split_counts:
        series = MultivariateSeries(series.values, series.channel_names, series.frequency,
                                    tuple(cfg.data.split_counts), series.name, series.timestamps)
    norm, stats = normalize(series)
    tr, va, te = split(norm)
    L, S = cfg.data.seq_len, cfg.data.pred_len
    return PreparedData(series=norm, stats=stats, train_values=tr,
                        train=make_windows(tr, L, S, cfg.train.train_stride),
                        val=make_windows(va, L, S), test=make_windows(te, L, S),
                        true_labels=true_labels)


def _t(a: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    return torch.as_tensor(np.ascontiguousarray(a), dtype=dtype)


# ----------------------------------------------------------------------------
# cluster count selection
# ----------------------------------------------------------------------------

def silhouette(features: np.ndarray, labels: np.ndarray, metric: str = "euclidean") -> float:
    """Mean silhouette; a single cluster scores -1 and all-singleton clusters score 0."""
    k = len(np.unique(labels))
    if k < 2:
        return -1.0
    if k >= len(labels):
        return 0.0
    return float(silhouette_score(features, labels, metric=metric))


def select_cluster_count(h2: np.ndarray, candidates: Sequence[int], seed: int = 0,
                         return_fit: bool = False):
    """Candidate count whose k-means partition has the best mean silhouette.

    ``h2`` is (N, l2) or (B, N, l2); in the latter case each channel is
    described by its codes over all B windows. Ties go to the smaller count.
    """
    feats = channel_features(h2)
    cands = sorted(set(int(c) for c in candidates))
    if not cands:
        raise ValueError("candidates must be non-empty")
    if cands[-1] > feats.shape[0]:
        raise ValueError(f"candidate {cands[-1]} exceeds the number of channels {feats.shape[0]}")
    best = None
    for n in cands:
        labels, centers = kmeans(feats, n, seed=seed)
        score = silhouette(feats, labels) if len(cands) > 1 else 0.0
        if best is None or score > best[0]:
            best = (score, n, labels, centers)
    _, n, labels, centers = best
    return (n, labels, centers) if return_fit else n


def select_dtw_clusters(train_values: np.ndarray, candidates: Sequence[int], radius: int,
                        cap: int) -> tuple[int, np.ndarray]:
    cands = sorted(set(int(c) for c in candidates if c <= train_values.shape[1]))
    if not cands:
        raise ConfigError("no cluster count candidate fits the number of channels")
    best = None
    for n in cands:
        labels, dist = dtw_cluster(train_values, n, radius=radius, cap=cap, return_distances=True)
        score = silhouette(dist, labels, metric="precomputed") if len(cands) > 1 else 0.0
        if best is None or score > best[0]:
            best = (score, n, labels)
    return best[1], best[2]


# ----------------------------------------------------------------------------
# pretraining
# ----------------------------------------------------------------------------

@dataclass
class PretrainReport:
    initial_rec: float
    history: list[float]
    val_start: float | None
    val_end: float | None
    n: int
    labels: list[int]


@torch.no_grad()
def _mean_rec(clusterer: ChannelClusterer, windows: np.ndarray, batch_size: int) -> float:
    total, count = 0.0, 0
    for start in range(0, len(windows), batch_size):
        xb = _t(windows[start:start + batch_size])
        total += float(clusterer.losses(xb, clusterer.cluster_counts[0])["rec"]) * len(xb)
        count += len(xb)
    return total / max(count, 1)


def pretrain_rfl(clusterer: ChannelClusterer, windows: np.ndarray, *, epochs: int = 30,
                 lr: float = 1e-3, batch_size: int = 128, seed: int = 0,
                 reference: np.ndarray | None = None, candidates: Sequence[int] | None = None,
                 val_windows: np.ndarray | None = None) -> PretrainReport:
    """Fit the autoencoder on reconstruction alone, then seed cluster centers.

    ``windows`` is (B, N, L). Centers for the chosen count come from k-means on
    the codes of ``reference`` (defaults to the first 128 of ``windows``).
    """
    windows = np.asarray(windows)
    reference = windows[:128] if reference is None else reference
    history: list[float] = []
    use_gcl = clusterer.use_gcl
    clusterer.use_gcl = False  # reconstruction only
    try:
        initial = _mean_rec(clusterer, windows, 512) if clusterer.use_rfl else 0.0
        val_start = _mean_rec(clusterer, val_windows, 512) if (
            val_windows is not None and clusterer.use_rfl) else None
        if clusterer.use_rfl and epochs > 0:
            params = list(clusterer.encoder.parameters())
            opt = torch.optim.Adam(params, lr=lr)
            rng = np.random.default_rng(seed)
            clusterer.train()
            for _ in range(epochs):
                order = rng.permutation(len(windows))
                total, count = 0.0, 0
                for start in range(0, len(order), batch_size):
                    xb = _t(windows[np.sort(order[start:start + batch_size])])
                    loss = clusterer.losses(xb, clusterer.cluster_counts[0])["rec"]
                    if not torch.isfinite(loss):
                        raise NonFiniteLoss("reconstruction loss became non-finite during pretraining")
                    opt.zero_grad()
                    loss.backward()
                    opt.step()
                    total += loss.item() * len(xb)
                    count += len(xb)
                history.append(total / count)
            clusterer.eval()
        val_end = _mean_rec(clusterer, val_windows, 512) if (
            val_windows is not None and clusterer.use_rfl) else None
    finally:
        clusterer.use_gcl = use_gcl
    n, labels = refresh_clusters(clusterer, reference, candidates or clusterer.cluster_counts,
                                 seed, reset_centers=True)
    return PretrainReport(initial_rec=initial, history=history, val_start=val_start,
                          val_end=val_end, n=n, labels=labels.tolist())


@torch.no_grad()
def reference_codes(clusterer: ChannelClusterer, reference: np.ndarray) -> np.ndarray:
    was_training = clusterer.training
    clusterer.eval()
    _, h2 = clusterer.encode(_t(reference))
    clusterer.train(was_training)
    return h2.double().numpy()


def refresh_clusters(clusterer: ChannelClusterer, reference: np.ndarray, candidates: Sequence[int],
                     seed: int, reset_centers: bool = False) -> tuple[int, np.ndarray]:
    """Re-cluster channels on the reference windows; seed centers the first time a count is used."""
    h2 = reference_codes(clusterer, reference)
    n, labels, _ = select_cluster_count(h2, candidates, seed, return_fit=True)
    labels = canonical_labels(labels)
    if reset_centers or not clusterer.has_centers(n):
        clusterer.set_centers(n, centers_from_labels(h2, labels, n))
    return n, labels


def initial_clustering(cfg: ExperimentConfig, data: PreparedData, clusterer: ChannelClusterer | None
                       ) -> tuple[int, np.ndarray, PretrainReport | None]:
    """Channel grouping before joint training, according to the ablation.

    The clustering variants pretrain ``clusterer`` in place.
    """
    tc = cfg.train
    if tc.ablation == "ci_only":
        return data.n_channels, np.arange(data.n_channels), None
    if tc.ablation == "dtw_cluster":
        n, labels = select_dtw_clusters(data.train_values, tc.cluster_counts,
                                        cfg.cluster.dtw_radius, cfg.cluster.dtw_cap)
        return n, labels, None
    if clusterer is None:
        raise ConfigError(f"ablation {tc.ablation!r} needs a clusterer")
    pre = pretrain_rfl(clusterer, data.train.inputs[::tc.pretrain_stride], epochs=tc.pretrain_epochs,
                       lr=tc.pretrain_lr, batch_size=tc.pretrain_batch_size, seed=tc.seed,
                       reference=reference_windows(cfg, data), candidates=clusterer.cluster_counts,
                       val_windows=data.val.inputs[:4 * tc.batch_size])
    return pre.n, np.asarray(pre.labels), pre


def reference_windows(cfg: ExperimentConfig, data: PreparedData) -> np.ndarray:
    """The fixed window set on which channels are (re-)clustered: the first training batch."""
    return np.ascontiguousarray(data.train.inputs[:cfg.train.batch_size])


# ----------------------------------------------------------------------------
# joint training
# ----------------------------------------------------------------------------

@dataclass
class RunReport:
    dataset: str
    horizon: int
    ablation: str
    seed: int
    config_hash: str
    channel_names: list[str]
    epochs: list[dict[str, Any]] = field(default_factory=list)
    pretrain: dict[str, Any] | None = None
    best_epoch: int = -1
    epochs_run: int = 0
    stopped_early: bool = False
    test_mse: float = math.nan
    test_mae: float = math.nan
    final_n: int = 0
    final_labels: list[int] = field(default_factory=list)
    n_history: list[int] = field(default_factory=list)
    wall_clock_s: float = 0.0
    ari: float | None = None

    def masks(self) -> list[np.ndarray]:
        return [build_mask(e["labels"]) for e in self.epochs]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RunReport":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))

    def metrics_row(self) -> dict[str, Any]:
        return {"dataset": self.dataset, "horizon": self.horizon, "ablation": self.ablation,
                "seed": self.seed, "mse": repr(self.test_mse), "mae": repr(self.test_mae),
                "epochs": self.epochs_run, "wall_clock_s": f"{self.wall_clock_s:.3f}"}


def append_metrics_row(path: str | os.PathLike, report: RunReport) -> None:
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=METRICS_COLUMNS)
        if new:
            w.writeheader()
        w.writerow(report.metrics_row())


@dataclass
class TrainResult:
    report: RunReport
    forecaster: MaskedPatchForecaster
    clusterer: ChannelClusterer | None
    labels: np.ndarray
    n: int
    data: PreparedData
    checkpoint: Path | None = None


def build_models(cfg: ExperimentConfig, n_channels: int,
                 adjacency: np.ndarray | None) -> tuple[MaskedPatchForecaster, ChannelClusterer | None]:
    ab = cfg.train.ablation
    forecaster = MaskedPatchForecaster(cfg.data.seq_len, cfg.data.pred_len, cfg.patch,
                                       instance_norm=cfg.data.instance_norm)
    clusterer = None
    if ab in ("full", "no_gcl", "no_rfl"):
        counts = [c for c in cfg.train.cluster_counts if c <= n_channels]
        if not counts:
            raise ConfigError(f"no cluster count in {list(cfg.train.cluster_counts)} fits {n_channels} channels")
        c = cfg.cluster
        clusterer = ChannelClusterer(cfg.data.seq_len, adjacency, counts, l1=c.hidden_dim,
                                     l2=c.latent_dim, epsilon=c.epsilon, t=c.t,
                                     use_rfl=ab != "no_rfl", use_gcl=ab != "no_gcl")
    return forecaster, clusterer


def _seed_everything(seed: int, deterministic: bool) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)
    if deterministic:
        torch.use_deterministic_algorithms(True)


@torch.no_grad()
def evaluate(forecaster: MaskedPatchForecaster, windows: WindowBatch, mask: np.ndarray | None,
             batch_size: int = 256) -> tuple[float, float]:
    """(MSE, MAE) over every window, channel and step, in normalized space."""
    forecaster.eval()
    mask_t = None if mask is None else _t(mask)
    sq = ab = 0.0
    count = 0
    for batch in windows.batches(batch_size):
        pred = forecaster(_t(batch.inputs), mask_t).double().numpy()
        err = pred - batch.targets
        sq += float((err ** 2).sum())
        ab += float(np.abs(err).sum())
        count += err.size
    return sq / count, ab / count


@torch.no_grad()
def _val_losses(forecaster, clusterer, windows: WindowBatch, mask_t, n: int, cfg, batch_size=256):
    forecaster.eval()
    if clusterer is not None:
        clusterer.eval()
    sums = {"rec": 0.0, "ds": 0.0, "pred": 0.0}
    count = 0
    for batch in windows.batches(batch_size):
        xb, yb = _t(batch.inputs), _t(batch.targets)
        sums["pred"] += float(loss_pred(forecaster(xb, mask_t), yb)) * len(batch)
        if clusterer is not None:
            cl = clusterer.losses(xb, n)
            sums["rec"] += float(cl["rec"]) * len(batch)
            sums["ds"] += float(cl["ds"]) * len(batch)
        count += len(batch)
    out = {k: v / count for k, v in sums.items()}
    out["total"] = total_loss(out["rec"], out["ds"], out["pred"], cfg.train.lambda1, cfg.train.lambda2)
    return out


def train(cfg: ExperimentConfig, data: PreparedData | None = None,
          out_dir: str | os.PathLike | None = None) -> TrainResult:
    """Run one experiment end to end and return the report and best models.

    With ``out_dir`` the report JSON, the best checkpoint and a metrics CSV
    row are written there.
    """
    t0 = time.perf_counter()
    tc = cfg.train
    _seed_everything(tc.seed, tc.deterministic)
    data = data or prepare_data(cfg)
    n_ch = data.n_channels
    adjacency = build_graph(data.train_values, cfg.cluster.threshold) if n_ch > 1 else np.zeros((1, 1))
    forecaster, clusterer = build_models(cfg, n_ch, adjacency)
    reference = reference_windows(cfg, data)
    report = RunReport(dataset=data.series.name, horizon=cfg.data.pred_len, ablation=tc.ablation,
                       seed=tc.seed, config_hash=cfg.config_hash(),
                       channel_names=list(data.series.channel_names))

    n, labels, pre = initial_clustering(cfg, data, clusterer)
    if pre is not None:
        report.pretrain = asdict(pre)

    params = list(forecaster.parameters()) + (list(clusterer.parameters()) if clusterer else [])
    opt = torch.optim.Adam(params, lr=tc.lr, betas=(0.9, 0.999), weight_decay=0.0)
    rng = np.random.default_rng(tc.seed)
    best = {"val": math.inf, "epoch": -1, "forecaster": copy.deepcopy(forecaster.state_dict()),
            "clusterer": copy.deepcopy(clusterer.state_dict()) if clusterer else None,
            "labels": labels.copy(), "n": n}
    wait = 0
    for epoch in range(tc.max_epochs):
        if clusterer is not None and epoch > 0 and tc.cluster_refresh == "epoch":
            n, labels = refresh_clusters(clusterer, reference, clusterer.cluster_counts, tc.seed)
        mask_t = _t(build_mask(labels))
        forecaster.train()
        if clusterer is not None:
            clusterer.train()
        sums = {"rec": 0.0, "ds": 0.0, "pred": 0.0, "total": 0.0}
        count = 0
        order = rng.permutation(len(data.train))
        for batch in data.train.batches(tc.batch_size, order):
            xb, yb = _t(batch.inputs), _t(batch.targets)
            l_pred = loss_pred(forecaster(xb, mask_t), yb)
            if clusterer is not None:
                try:
                    cl = clusterer.losses(xb, n)
                except DegenerateCluster:
                    log.warning("empty cluster at epoch %d; re-seeding centers", epoch)
                    n, labels = refresh_clusters(clusterer, reference, [n], tc.seed, reset_centers=True)
                    cl = clusterer.losses(xb, n)
                l_rec, l_ds = cl["rec"], cl["ds"]
            else:
                l_rec = l_ds = l_pred.new_zeros(())
            loss = total_loss(l_rec, l_ds, l_pred, tc.lambda1, tc.lambda2)
            if not torch.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            b = len(batch)
            for k, v in (("rec", l_rec), ("ds", l_ds), ("pred", l_pred), ("total", loss)):
                sums[k] += v.item() * b
            count += b
        train_losses = {k: v / count for k, v in sums.items()}
        val_losses = _val_losses(forecaster, clusterer, data.val, mask_t, n, cfg)
        report.epochs.append({"epoch": epoch, "n": int(n), "labels": [int(v) for v in labels],
                              "train": train_losses, "val": val_losses})
        report.n_history.append(int(n))
        log.info("epoch %d n=%d train=%.5f val_pred=%.5f", epoch, n, train_losses["total"], val_losses["pred"])
        if val_losses["pred"] < best["val"]:
            best.update(val=val_losses["pred"], epoch=epoch,
                        forecaster=copy.deepcopy(forecaster.state_dict()),
                        clusterer=copy.deepcopy(clusterer.state_dict()) if clusterer else None,
                        labels=labels.copy(), n=n)
            wait = 0
        else:
            wait += 1
            if wait >= tc.patience:
                report.stopped_early = True
                break
    report.epochs_run = len(report.epochs)
    forecaster.load_state_dict(best["forecaster"])
    if clusterer is not None:
        clusterer.load_state_dict(best["clusterer"])
    labels, n = np.asarray(best["labels"]), int(best["n"])
    report.best_epoch = best["epoch"]
    report.final_n, report.final_labels = n, [int(v) for v in labels]
    report.test_mse, report.test_mae = evaluate(forecaster, data.test, build_mask(labels))
    if data.true_labels is not None:
        from sklearn.metrics import adjusted_rand_score
        report.ari = float(adjusted_rand_score(data.true_labels, labels))
    report.wall_clock_s = time.perf_counter() - t0

    result = TrainResult(report, forecaster, clusterer, labels, n, data)
    if out_dir is not None:
        result.checkpoint = write_run(result, cfg, out_dir)
    return result


def run_stem(report: RunReport) -> str:
    return f"{report.dataset}_S{report.horizon}_{report.ablation}_seed{report.seed}"


def write_run(result: TrainResult, cfg: ExperimentConfig, out_dir: str | os.PathLike) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = result.report
    stem = run_stem(rep)
    header = {
        "config_hash": rep.config_hash,
        "epoch": rep.best_epoch,
        "metrics": {"mse": rep.test_mse, "mae": rep.test_mae},
        "config": cfg.to_dict(),
        "cluster": {"labels": rep.final_labels, "n": rep.final_n, "threshold": cfg.cluster.threshold},
        "channel_names": rep.channel_names,
        "stats": {"mean": result.data.stats.mean.tolist(), "std": result.data.stats.std.tolist()},
    }
    state = {"forecaster": result.forecaster.state_dict()}
    if result.clusterer is not None:
        state["clusterer"] = result.clusterer.state_dict()
    ckpt = out / f"{stem}.ckpt"
    save_checkpoint(ckpt, header, state)
    rep.save(out / f"{stem}.json")
    append_metrics_row(out / "metrics.csv", rep)
    return ckpt


def load_forecaster(path: str | os.PathLike) -> tuple[MaskedPatchForecaster, dict[str, Any], ExperimentConfig]:
    header, state = load_checkpoint(path)
    cfg = config_from_dict(header["config"])
    model = MaskedPatchForecaster(cfg.data.seq_len, cfg.data.pred_len, cfg.patch,
                                  instance_norm=cfg.data.instance_norm)
    model.load_state_dict(state["forecaster"])
    model.eval()
    return model, header, cfg


def evaluate_checkpoint(path: str | os.PathLike, data: PreparedData | None = None) -> tuple[float, float]:
    model, header, cfg = load_forecaster(path)
    data = data or prepare_data(cfg)
    return evaluate(model, data.test, build_mask(header["cluster"]["labels"]))
