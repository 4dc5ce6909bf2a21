"""Single-file checkpoints: magic, JSON header, then a torch payload.

Layout::

    b"DGCF" | uint64 little-endian header length | UTF-8 JSON header | torch.save bytes

The header always carries ``schema_version``, ``config_hash``, ``epoch`` and
``metrics``; the trainer adds the effective config and cluster state so a
checkpoint can be evaluated on its own.
"""

from __future__ import annotations

import io
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Any

import torch

MAGIC = b"DGCF"
SCHEMA_VERSION = 1
REQUIRED_KEYS = ("schema_version", "config_hash", "epoch", "metrics")


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path: str | os.PathLike, header: dict[str, Any], state: dict[str, Any]) -> None:
    header = {"schema_version": SCHEMA_VERSION, **header}
    missing = [k for k in REQUIRED_KEYS if k not in header]
    if missing:
        raise ValueError(f"checkpoint header lacks {', '.join(missing)}")
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    torch.save(state, buf)
    atomic_write_bytes(path, MAGIC + struct.pack("<Q", len(head)) + head + buf.getvalue())


def read_header(path: str | os.PathLike) -> dict[str, Any]:
    with open(path, "rb") as fh:
        return _read_header(fh)


def _read_header(fh) -> dict[str, Any]:
    if fh.read(4) != MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    (size,) = struct.unpack("<Q", fh.read(8))
    header = json.loads(fh.read(size).decode("utf-8"))
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported checkpoint schema {header.get('schema_version')}")
    return header


def load_checkpoint(path: str | os.PathLike) -> tuple[dict[str, Any], dict[str, Any]]:
    with open(path, "rb") as fh:
        header = _read_header(fh)
        state = torch.load(io.BytesIO(fh.read()), map_location="cpu", weights_only=True)
    return header, state
