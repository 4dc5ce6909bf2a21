import json
import sys
from pathlib import Path

import pytest
import torch

TESTS = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS))

from dgcformer.config import ExperimentConfig  # noqa: E402


@pytest.fixture(scope="session")
def derived():
    """Oracle outputs frozen by scripts/freeze_oracles.py."""
    return json.loads((TESTS / "fixtures" / "derived_values.json").read_text())


@pytest.fixture(autouse=True)
def _reset_determinism():
    yield
    torch.use_deterministic_algorithms(False)


def tiny_config(**train) -> ExperimentConfig:
    """Synthetic data and a very small model so a full run takes seconds."""
    base = {"max_epochs": 3, "patience": 2, "pretrain_epochs": 2, "pretrain_stride": 8,
            "batch_size": 64, "train_stride": 4, "lr": 1e-3}
    base.update(train)
    return ExperimentConfig().override(
        data={"dataset": "synthetic", "seq_len": 32, "pred_len": 16, "synthetic_channels": 6,
              "synthetic_groups": 2, "synthetic_steps": 800},
        patch={"patch_len": 8, "stride": 4, "d_model": 16, "n_heads": 2, "n_layers": 1, "dropout": 0.0},
        cluster={"hidden_dim": 8, "latent_dim": 4},
        train=base,
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
