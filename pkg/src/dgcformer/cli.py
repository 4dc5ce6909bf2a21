"""Command-line entry point.

Every failure prints exactly one line on stderr of the form
``dgcformer-error: <kind>: <message>`` and exits nonzero: 2 when training
diverged (non-finite loss or activation), 1 for everything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .config import ABLATIONS, ExperimentConfig, load_config, save_config, tomllib
from .errors import DGCError, NonFiniteActivation, NonFiniteLoss, UsageError

PREFIX = "dgcformer-error"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # single-line diagnostics instead of usage dumps
        raise UsageError(message)


# ----------------------------------------------------------------------------
# config assembly
# ----------------------------------------------------------------------------

def _parse_value(raw: str) -> Any:
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def _apply_sets(cfg: ExperimentConfig, sets: Sequence[str]) -> ExperimentConfig:
    sections: dict[str, dict[str, Any]] = {}
    for item in sets:
        key, sep, raw = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        if section not in ("data", "patch", "cluster", "train"):
            raise UsageError(f"--set: unknown section {section!r}")
        sections.setdefault(section, {})[name] = _parse_value(raw.strip())
    return cfg.override(**sections) if sections else cfg


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """File values first, then ``--set`` pairs, then the dedicated flags."""
    cfg = load_config(args.config)
    cfg = _apply_sets(cfg, getattr(args, "set", None) or [])
    data: dict[str, Any] = {}
    train: dict[str, Any] = {}
    if getattr(args, "dataset", None):
        data["dataset"] = args.dataset
    if getattr(args, "horizon", None) is not None:
        data["pred_len"] = args.horizon
    if getattr(args, "ablation", None):
        train["ablation"] = args.ablation
    if getattr(args, "seed", None) is not None:
        train["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        train["max_epochs"] = args.epochs
        train["patience"] = min(cfg.train.patience, args.epochs)
    cfg = cfg.override(data=data, train=train)
    if getattr(args, "out", None):
        cfg = cfg.override(out_dir=args.out)
    return cfg


def _common(p: argparse.ArgumentParser, *, horizon: bool = True, ablation: bool = True,
            seed: bool = True) -> None:
    p.add_argument("--config", help="TOML config file (defaults apply to missing keys)")
    p.add_argument("--dataset", help="dataset name, CSV path, or 'synthetic'")
    if horizon:
        p.add_argument("--horizon", type=int, help="forecast horizon S")
    if ablation:
        p.add_argument("--ablation", choices=ABLATIONS)
    if seed:
        p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one config field (repeatable), e.g. train.max_epochs=5")


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------

def cmd_train(args) -> int:
    from .training import run_stem, train

    cfg = build_config(args)
    out = Path(cfg.out_dir)
    result = train(cfg, out_dir=out)
    save_config(cfg, out / f"{run_stem(result.report)}.toml")
    rep = result.report
    print(json.dumps({"report": str(out / f"{run_stem(rep)}.json"), "checkpoint": str(result.checkpoint),
                      "mse": rep.test_mse, "mae": rep.test_mae, "epochs": rep.epochs_run,
                      "n": rep.final_n, "labels": rep.final_labels}))
    return 0


def cmd_sweep(args) -> int:
    from .sweep import run_sweep

    if args.seeds is not None and len(args.seeds) == 0:
        raise UsageError("--seeds was given without any seed")
    cfg = build_config(args)
    horizons = args.horizons or [cfg.data.pred_len]
    ablations = args.ablations or [cfg.train.ablation]
    seeds = args.seeds if args.seeds is not None else [cfg.train.seed]
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_sweep(cfg, horizons, ablations, seeds, out_dir=out)
    sys.stdout.write(result.text_table())
    return 0


def cmd_inspect_clusters(args) -> int:
    from .clustering import CLUSTER_JSON_SCHEMA, build_graph, cluster_export, correlation_matrix
    from .plots import correlation_heatmap
    from .training import build_models, initial_clustering, prepare_data

    if args.checkpoint:
        from .checkpoint import read_header
        from .config import config_from_dict

        header = read_header(args.checkpoint)
        cfg = config_from_dict(header["config"])
        if args.dataset:
            cfg = cfg.override(data={"dataset": args.dataset})
        data = prepare_data(cfg)
        labels = np.asarray(header["cluster"]["labels"])
        n = int(header["cluster"]["n"])
        source = str(args.checkpoint)
        if len(labels) != data.n_channels:
            raise UsageError(f"checkpoint has {len(labels)} channels but the dataset has {data.n_channels}")
    else:
        cfg = build_config(args)
        data = prepare_data(cfg)
        adjacency = build_graph(data.train_values, cfg.cluster.threshold)
        _, clusterer = build_models(cfg, data.n_channels, adjacency)
        n, labels, _ = initial_clustering(cfg, data, clusterer)
        source = cfg.data.dataset
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corr = correlation_matrix(data.train_values)
    payload = cluster_export(labels, cfg.cluster.threshold, n)
    payload.update(channel_names=list(data.series.channel_names), source=source,
                   ablation=cfg.train.ablation, correlation=np.round(corr, 6).tolist())
    if data.true_labels is not None:
        from sklearn.metrics import adjusted_rand_score

        payload["true_labels"] = [int(v) for v in data.true_labels]
        payload["ari"] = float(adjusted_rand_score(data.true_labels, labels))
    stem = args.name or f"{data.series.name}_clusters"
    json_path, png_path = out / f"{stem}.json", out / f"{stem}.png"
    _validate(payload, CLUSTER_JSON_SCHEMA)
    json_path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    correlation_heatmap(corr, data.series.channel_names, png_path, labels=labels,
                        title=f"{data.series.name}: channel correlation (n={n})")
    print(json.dumps({"json": str(json_path), "image": str(png_path), "n": n,
                      "labels": payload["labels"], "ari": payload.get("ari")}))
    return 0


def _validate(payload: dict, schema: dict) -> None:
    try:
        import jsonschema
    except ImportError:  # optional; the schema is still written for downstream tools
        return
    jsonschema.validate(payload, schema)


def _channel_indices(spec: Sequence[str] | None, names: Sequence[str]) -> list[int]:
    if not spec:
        return list(range(min(len(names), 4)))
    out = []
    for item in spec:
        if item in names:
            out.append(list(names).index(item))
            continue
        try:
            idx = int(item)
        except ValueError:
            raise UsageError(f"unknown channel {item!r}; channels are {', '.join(names)}") from None
        if not 0 <= idx < len(names):
            raise UsageError(f"channel index {idx} out of range [0, {len(names)})")
        out.append(idx)
    return out


def cmd_forecast_plot(args) -> int:
    import torch

    from .clustering import build_mask
    from .plots import forecast_overlay
    from .training import load_forecaster, prepare_data

    model, header, cfg = load_forecaster(args.checkpoint)
    if args.dataset:
        cfg = cfg.override(data={"dataset": args.dataset})
    data = prepare_data(cfg)
    windows = data.test
    if not 0 <= args.window < len(windows):
        raise UsageError(f"window index {args.window} out of range [0, {len(windows)})")
    names = list(data.series.channel_names)
    chans = _channel_indices(args.channels, names)
    x = torch.tensor(windows.inputs[args.window:args.window + 1], dtype=torch.float32)
    mask = torch.as_tensor(build_mask(header["cluster"]["labels"]), dtype=torch.float32)
    with torch.no_grad():
        pred = model(x, mask)[0].double().numpy()
    mean, std = data.stats.mean[chans, None], data.stats.std[chans, None]
    hist = windows.inputs[args.window, chans] * std + mean
    truth = windows.targets[args.window, chans] * std + mean
    fc = pred[chans] * std + mean
    out = Path(args.out) if args.out else Path(cfg.out_dir) / f"forecast_w{args.window}.png"
    out.parent.mkdir(parents=True, exist_ok=True)
    forecast_overlay(hist, truth, fc, [names[c] for c in chans], out,
                     title=f"{data.series.name} test window {args.window}, L={cfg.data.seq_len}, "
                           f"S={cfg.data.pred_len}")
    if args.csv:
        _write_forecast_csv(args.csv, [names[c] for c in chans], truth, fc)
    print(json.dumps({"image": str(out), "channels": [names[c] for c in chans]}))
    return 0


def _write_forecast_csv(path: str, names: list[str], truth: np.ndarray, fc: np.ndarray) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step"] + [f"{n}_true" for n in names] + [f"{n}_pred" for n in names])
        for s in range(truth.shape[1]):
            w.writerow([s] + [repr(float(v)) for v in truth[:, s]] + [repr(float(v)) for v in fc[:, s]])


def cmd_make_synthetic(args) -> int:
    from .data import SyntheticSpec, generate_synthetic, save_csv

    spec = SyntheticSpec(n_channels=args.channels, n_groups=args.groups, steps=args.steps,
                         seed=args.seed, noise_std=args.noise)
    series, labels = generate_synthetic(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(series, out)
    labels_path = out.with_suffix(".labels.json")
    labels_path.write_text(json.dumps({"true_labels": [int(v) for v in labels]}), encoding="utf-8")
    print(json.dumps({"csv": str(out), "labels": str(labels_path), "steps": series.n_steps,
                      "channels": series.n_channels}))
    return 0


def cmd_evaluate(args) -> int:
    from .training import evaluate_checkpoint, load_forecaster, prepare_data

    data = None
    if args.dataset:
        _, _, cfg = load_forecaster(args.checkpoint)
        data = prepare_data(cfg.override(data={"dataset": args.dataset}))
    mse, mae = evaluate_checkpoint(args.checkpoint, data)
    print(json.dumps({"mse": mse, "mae": mae}))
    return 0


# ----------------------------------------------------------------------------
# parser and main
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dgcformer", description="Cluster-masked patch transformer forecasting.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train one model; writes report JSON, checkpoint and metrics CSV")
    _common(p)
    p.add_argument("--epochs", type=int, help="maximum training epochs (caps patience)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="horizon x ablation x seed grid, run sequentially")
    _common(p, horizon=False, ablation=False, seed=False)
    p.add_argument("--horizons", type=int, nargs="+")
    p.add_argument("--ablations", nargs="+", choices=ABLATIONS)
    p.add_argument("--seeds", type=int, nargs="*")
    p.add_argument("--epochs", type=int, help="maximum training epochs (caps patience)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inspect-clusters", help="correlation heatmap plus cluster labels and mask as JSON")
    _common(p, horizon=False)
    p.add_argument("--checkpoint", help="read labels from a trained checkpoint instead of clustering")
    p.add_argument("--name", help="file stem for the JSON and image")
    p.set_defaults(func=cmd_inspect_clusters)

    p = sub.add_parser("forecast-plot", help="overlay ground truth and forecast for one test window")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", help="override the dataset recorded in the checkpoint")
    p.add_argument("--window", type=int, default=0, help="test window index")
    p.add_argument("--channels", nargs="+", help="channel names or indices (default: first four)")
    p.add_argument("--out", help="image path")
    p.add_argument("--csv", help="also write the plotted forecast as CSV")
    p.set_defaults(func=cmd_forecast_plot)

    p = sub.add_parser("make-synthetic", help="write a planted-cluster CSV and its true labels")
    p.add_argument("--out", required=True, help="CSV path; labels go next to it")
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--groups", type=int, default=2)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("evaluate", help="test MSE and MAE of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset")
    p.set_defaults(func=cmd_evaluate)
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    line = " ".join(str(message).split())  # keep it on one line
    print(f"{PREFIX}: {kind}: {line}", file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except DGCError as exc:
        return _fail(exc.kind, exc, 1)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (NonFiniteLoss, NonFiniteActivation) as exc:
        return _fail(exc.kind, exc, 2)
    except DGCError as exc:
        return _fail(exc.kind, exc, 1)
    except FileNotFoundError as exc:
        return _fail("FileNotFound", f"{exc.strerror or exc}: {exc.filename}", 1)
    except (OSError, ValueError) as exc:
        return _fail(type(exc).__name__, exc, 1)


if __name__ == "__main__":
    sys.exit(main())
