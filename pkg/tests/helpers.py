"""Shared builders for the gradient and acceptance tests."""

from __future__ import annotations

import numpy as np
import torch

from dgcformer.clustering import ChannelClusterer, build_mask
from dgcformer.forecaster import MaskedPatchForecaster, PatchConfig, loss_pred


def central_difference_check(loss_fn, params, h=1e-5):
    """Worst relative error between autograd and central differences, per tensor.

    Relative error is ``|fd - ad|_2 / max(|fd|_2, |ad|_2)`` for each parameter
    tensor; tensors whose gradients are both below 1e-10 are skipped.
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    worst = 0.0
    for p in params:
        analytic = p.grad.detach().clone().reshape(-1)
        numeric = torch.zeros_like(analytic)
        flat = p.data.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + h
                up = loss_fn().item()
                flat[i] = orig - h
                down = loss_fn().item()
                flat[i] = orig
            numeric[i] = (up - down) / (2 * h)
        scale = max(numeric.norm().item(), analytic.norm().item())
        if scale < 1e-10:
            continue
        worst = max(worst, (numeric - analytic).norm().item() / scale)
    return worst


def tiny_clusterer(seed=0):
    """N=3, L=8, l1=4, l2=3, n=2 in double precision with centers set."""
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    adj = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=float)
    model = ChannelClusterer(8, adj, [2], l1=4, l2=3).double()
    model.set_centers(2, rng.uniform(0.0, 1.0, size=(2, 3)))
    x = torch.tensor(rng.normal(size=(2, 3, 8)))
    return model, x


def clustering_loss(model, x):
    out = model.losses(x, 2)
    return out["rec"] + out["ds"]


def tiny_forecaster(seed=0):
    """N=3, L=16, d_p=8, stride=4, d_model=8, 2 heads, 1 layer, double precision."""
    torch.manual_seed(seed)
    cfg = PatchConfig(patch_len=8, stride=4, d_model=8, n_heads=2, n_layers=1, dropout=0.0)
    model = MaskedPatchForecaster(16, 4, cfg).double().eval()
    rng = np.random.default_rng(seed)
    x = torch.tensor(rng.normal(size=(2, 3, 16)))
    y = torch.tensor(rng.normal(size=(2, 3, 4)))
    mask = torch.tensor(build_mask([0, 0, 1]))
    return model, x, y, mask


def forecast_loss(model, x, y, mask):
    return loss_pred(model(x, mask), y)
