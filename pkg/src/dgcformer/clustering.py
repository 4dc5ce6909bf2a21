"""Channel clustering: GRU autoencoder codes, graph convolution, masks, losses.

Array-level helpers (graph, k-means, masks) work on numpy; the differentiable
pieces (soft assignment, target distribution, losses, the two networks) work
on torch tensors with arbitrary leading batch dimensions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import torch
from torch import Tensor, nn

from .errors import DegenerateCluster, ShapeMismatch

DEFAULT_THRESHOLD = 0.6
DEFAULT_EPSILON = 0.5
KL_FLOOR = 1e-12


# ----------------------------------------------------------------------------
# graph and hard clustering (numpy)
# ----------------------------------------------------------------------------

def correlation_matrix(values: np.ndarray) -> np.ndarray:
    """Pearson correlation between the columns of ``values`` (T, N).

    Constant channels get correlation 0 with every other channel and 1 with
    themselves.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] < 2:
        raise ValueError("need at least 2 time steps to correlate channels")
    centered = values - values.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    safe = np.where(norms > 0, norms, 1.0)
    unit = centered / safe
    corr = unit.T @ unit
    dead = norms == 0
    corr[dead, :] = 0.0
    corr[:, dead] = 0.0
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, -1.0, 1.0)


def build_graph(train_values: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Binary adjacency: edge where the absolute correlation reaches ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    corr = correlation_matrix(train_values)
    adj = (np.abs(corr) >= threshold).astype(np.float64)
    np.fill_diagonal(adj, 0.0)
    return adj


def propagation_operator(adj: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 with D the row sums of A + I."""
    adj = np.asarray(adj, dtype=np.float64)
    a_tilde = adj + np.eye(adj.shape[0])
    d = a_tilde.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return a_tilde * inv_sqrt[:, None] * inv_sqrt[None, :]


def kmeans(points: np.ndarray, n: int, seed: int = 0, max_iter: int = 100,
           tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding.

    Stops when no center moves by more than ``tol``. An emptied cluster is
    re-seeded at the point farthest from its assigned center.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatch(f"k-means expects a 2-D array, got shape {x.shape}")
    m = x.shape[0]
    if not 1 <= n <= m:
        raise ValueError(f"cluster count {n} must lie in [1, {m}]")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(x, n, rng)
    labels = np.zeros(m, dtype=np.int64)
    for _ in range(max_iter):
        labels = _sq_dists(x, centers).argmin(axis=1)
        new = centers.copy()
        for j in range(n):
            members = labels == j
            if members.any():
                new[j] = x[members].mean(axis=0)
        _fill_empty(x, labels, new, n)
        shift = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        if shift <= tol:
            break
    labels = _sq_dists(x, centers).argmin(axis=1)
    _fill_empty(x, labels, centers, n)
    return labels.astype(np.int64), centers


def _fill_empty(x: np.ndarray, labels: np.ndarray, centers: np.ndarray, n: int) -> None:
    """Give every empty cluster the point farthest from its own center (in place).

    Donor points are taken only from clusters with more than one member, so
    no cluster is emptied by the repair.
    """
    for j in range(n):
        if (labels == j).any():
            continue
        sizes = np.bincount(labels, minlength=n)
        own = ((x - centers[labels]) ** 2).sum(axis=1)
        own[sizes[labels] < 2] = -1.0
        far = int(own.argmax())
        labels[far] = j
        centers[j] = x[far]


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=-1)


def _kmeanspp(x: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    m = x.shape[0]
    chosen = [int(rng.integers(m))]
    closest = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, n):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(m, p=closest / total))
        else:  # all remaining points coincide with chosen centers
            rest = np.setdiff1d(np.arange(m), chosen)
            idx = int(rng.choice(rest))
        chosen.append(idx)
        closest = np.minimum(closest, ((x - x[idx]) ** 2).sum(axis=1))
    return x[chosen].copy()


def inertia(points: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> float:
    points = np.asarray(points, dtype=np.float64)
    return float(((points - centers[labels]) ** 2).sum())


def build_mask(labels: Sequence[int]) -> np.ndarray:
    labels = np.asarray(labels)
    return (labels[:, None] == labels[None, :]).astype(np.float64)


def mask_vector(mask: np.ndarray) -> np.ndarray:
    """1 for channels that share their cluster with at least one other channel."""
    mask = np.asarray(mask)
    off = mask.astype(bool) & ~np.eye(mask.shape[0], dtype=bool)
    return off.any(axis=1).astype(np.float64)


def cluster_export(labels: Sequence[int], threshold: float, n: int | None = None) -> dict:
    labels = [int(v) for v in labels]
    mask = build_mask(labels).astype(int).tolist()
    return {"labels": labels, "mask": mask, "n": int(n if n is not None else len(set(labels))),
            "threshold": float(threshold)}


CLUSTER_JSON_SCHEMA = {
    "type": "object",
    "required": ["labels", "mask", "n", "threshold"],
    "properties": {
        "labels": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "mask": {"type": "array",
                 "items": {"type": "array", "items": {"type": "integer", "enum": [0, 1]}}},
        "n": {"type": "integer", "minimum": 1},
        "threshold": {"type": "number"},
    },
}


def write_cluster_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)


# ----------------------------------------------------------------------------
# distributions and losses (torch)
# ----------------------------------------------------------------------------

def soft_assignment(h: Tensor, centers: Tensor, t: float = 1.0) -> Tensor:
    """Student-t similarity of codes ``h`` (..., N, l2) to ``centers`` (n, l2)."""
    d2 = ((h.unsqueeze(-2) - centers) ** 2).sum(dim=-1)
    kernel = (1.0 + d2 / t) ** (-(t + 1.0) / 2.0)
    return kernel / kernel.sum(dim=-1, keepdim=True)


def target_distribution(q: Tensor) -> Tensor:
    """Sharpened targets; cluster frequencies are summed over the node axis."""
    f = q.sum(dim=-2, keepdim=True)
    if bool((f <= 0).any()):
        raise DegenerateCluster("a cluster received zero total soft assignment")
    w = q ** 2 / f
    return w / w.sum(dim=-1, keepdim=True)


def loss_rec(x: Tensor, x_rec: Tensor) -> Tensor:
    """||X_rec - X||_F^2 / (2N) per window, averaged over leading batch dims."""
    if x.shape != x_rec.shape:
        raise ShapeMismatch(f"reconstruction shape {tuple(x_rec.shape)} != input {tuple(x.shape)}")
    n = x.shape[-2]
    per_window = ((x_rec - x) ** 2).sum(dim=(-2, -1)) / (2.0 * n)
    return per_window.mean()


def loss_ds(p: Tensor, g: Tensor) -> Tensor:
    """KL(P || G) summed over nodes and clusters, averaged over batch dims."""
    if p.shape != g.shape:
        raise ShapeMismatch(f"P shape {tuple(p.shape)} != G shape {tuple(g.shape)}")
    kl = torch.xlogy(p, p) - p * torch.log(g.clamp_min(KL_FLOOR))
    return kl.sum(dim=(-2, -1)).mean()


# ----------------------------------------------------------------------------
# networks
# ----------------------------------------------------------------------------

class GRUAutoencoder(nn.Module):
    """Each channel's window is a univariate sequence through a GRU.

    ``encode`` returns the ReLU'd final GRU state (l1) and the ReLU'd linear
    code (l2). ``decode`` maps the code back to l1, drives a GRU for ``L``
    steps with it (as the initial state and as every input) and reads one
    value per step.
    """

    def __init__(self, seq_len: int, l1: int = 32, l2: int = 10):
        super().__init__()
        self.seq_len, self.l1, self.l2 = seq_len, l1, l2
        self.enc_gru = nn.GRU(1, l1, batch_first=True)
        self.enc_fc = nn.Linear(l1, l2)
        self.dec_fc = nn.Linear(l2, l1)
        self.dec_gru = nn.GRU(l1, l1, batch_first=True)
        self.readout = nn.Linear(l1, 1)

    def encode(self, x: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape[-1] != self.seq_len:
            raise ShapeMismatch(f"expected windows of length {self.seq_len}, got {x.shape[-1]}")
        lead = x.shape[:-1]
        _, h_last = self.enc_gru(x.reshape(-1, self.seq_len, 1))
        h1 = torch.relu(h_last[-1])
        h2 = torch.relu(self.enc_fc(h1))
        return h1.reshape(*lead, self.l1), h2.reshape(*lead, self.l2)

    def decode(self, h2: Tensor) -> Tensor:
        if h2.shape[-1] != self.l2:
            raise ShapeMismatch(f"expected codes of width {self.l2}, got {h2.shape[-1]}")
        lead = h2.shape[:-1]
        start = torch.relu(self.dec_fc(h2.reshape(-1, self.l2)))
        steps = start.unsqueeze(1).expand(-1, self.seq_len, -1)
        out, _ = self.dec_gru(steps, start.unsqueeze(0).contiguous())
        return self.readout(out).squeeze(-1).flip(-1).reshape(*lead, self.seq_len)


class LinearEncoder(nn.Module):
    """Stand-in for the autoencoder when it is ablated: a linear map of raw windows."""

    def __init__(self, seq_len: int, l1: int = 32, l2: int = 10):
        super().__init__()
        self.seq_len, self.l1, self.l2 = seq_len, l1, l2
        self.proj = nn.Linear(seq_len, l1)
        self.enc_fc = nn.Linear(l1, l2)

    def encode(self, x: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape[-1] != self.seq_len:
            raise ShapeMismatch(f"expected windows of length {self.seq_len}, got {x.shape[-1]}")
        h1 = self.proj(x)
        return h1, self.enc_fc(h1)


class GraphClusterNet(nn.Module):
    """Three graph-convolution layers fused with the autoencoder's layers.

    One output weight matrix is kept per admissible cluster count so the
    count can change between epochs.
    """

    def __init__(self, seq_len: int, l1: int, l2: int, cluster_counts: Iterable[int],
                 epsilon: float = DEFAULT_EPSILON):
        super().__init__()
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        self.epsilon = epsilon
        self.w0 = nn.Parameter(_glorot(seq_len, l1))
        self.w1 = nn.Parameter(_glorot(l1, l2))
        self.w2 = nn.ParameterDict({str(n): nn.Parameter(_glorot(l2, n)) for n in sorted(set(cluster_counts))})

    def forward(self, x: Tensor, op: Tensor, h1: Tensor, h2: Tensor, n: int) -> Tensor:
        if x.shape[-1] != self.w0.shape[0]:
            raise ShapeMismatch(f"expected windows of length {self.w0.shape[0]}, got {x.shape[-1]}")
        if op.shape[-1] != x.shape[-2]:
            raise ShapeMismatch("propagation operator does not match the number of channels")
        eps = self.epsilon
        g1 = torch.relu(op @ (x @ self.w0))
        g1 = (1 - eps) * g1 + eps * h1
        g2 = torch.relu(op @ (g1 @ self.w1))
        g2 = (1 - eps) * g2 + eps * h2
        return torch.softmax(op @ (g2 @ self.w2[str(n)]), dim=-1)


def _glorot(fan_in: int, fan_out: int) -> Tensor:
    bound = (6.0 / (fan_in + fan_out)) ** 0.5
    return torch.empty(fan_in, fan_out).uniform_(-bound, bound)


@dataclass
class ClusterState:
    h2: np.ndarray
    q: np.ndarray | None
    p: np.ndarray | None
    g_final: np.ndarray | None
    labels: np.ndarray
    mask: np.ndarray


class ChannelClusterer(nn.Module):
    """Autoencoder (or its linear stand-in), graph network and cluster centers."""

    def __init__(self, seq_len: int, adjacency: np.ndarray, cluster_counts: Sequence[int],
                 l1: int = 32, l2: int = 10, epsilon: float = DEFAULT_EPSILON,
                 t: float = 1.0, use_rfl: bool = True, use_gcl: bool = True):
        super().__init__()
        self.use_rfl, self.use_gcl, self.t = use_rfl, use_gcl, t
        self.cluster_counts = sorted(set(int(c) for c in cluster_counts))
        self.encoder = GRUAutoencoder(seq_len, l1, l2) if use_rfl else LinearEncoder(seq_len, l1, l2)
        self.gcn = GraphClusterNet(seq_len, l1, l2, self.cluster_counts, epsilon) if use_gcl else None
        self.centers = nn.ParameterDict({str(n): nn.Parameter(torch.zeros(n, l2)) for n in self.cluster_counts})
        self.register_buffer("op", torch.as_tensor(propagation_operator(adjacency), dtype=torch.float32))
        self.register_buffer("centers_ready", torch.zeros(len(self.cluster_counts), dtype=torch.bool))

    def encode(self, x: Tensor) -> tuple[Tensor, Tensor]:
        return self.encoder.encode(x)

    def set_centers(self, n: int, centers: np.ndarray) -> None:
        with torch.no_grad():
            param = self.centers[str(n)]
            param.copy_(torch.as_tensor(centers, dtype=param.dtype))
        self.centers_ready[self.cluster_counts.index(n)] = True

    def has_centers(self, n: int) -> bool:
        return bool(self.centers_ready[self.cluster_counts.index(n)])

    def losses(self, x: Tensor, n: int) -> dict[str, Tensor]:
        """Clustering losses on a batch of windows ``x`` (..., N, L)."""
        h1, h2 = self.encode(x)
        zero = x.new_zeros(())
        out = {"rec": zero, "ds": zero}
        if self.use_rfl:
            out["rec"] = loss_rec(x, self.encoder.decode(h2))
        if self.use_gcl:
            q = soft_assignment(h2, self.centers[str(n)], self.t)
            p = target_distribution(q)
            g = self.gcn(x, self.op.to(x.dtype), h1, h2, n)
            out["ds"] = loss_ds(p, g)
        return out

    @torch.no_grad()
    def state(self, x: Tensor, labels: np.ndarray, n: int) -> ClusterState:
        h1, h2 = self.encode(x)
        q = p = g = None
        if self.use_gcl and self.has_centers(n):
            qt = soft_assignment(h2, self.centers[str(n)], self.t)
            q, p = qt.cpu().numpy(), target_distribution(qt).cpu().numpy()
            g = self.gcn(x, self.op.to(x.dtype), h1, h2, n).cpu().numpy()
        return ClusterState(h2=h2.cpu().numpy(), q=q, p=p, g_final=g,
                            labels=np.asarray(labels), mask=build_mask(labels))


def channel_features(h2: np.ndarray) -> np.ndarray:
    """Per-channel feature rows from codes of shape (B, N, l2): (N, B*l2)."""
    h2 = np.asarray(h2, dtype=np.float64)
    if h2.ndim == 2:
        return h2
    return np.transpose(h2, (1, 0, 2)).reshape(h2.shape[1], -1)


def centers_from_labels(h2: np.ndarray, labels: np.ndarray, n: int) -> np.ndarray:
    """Mean code (over windows and member channels) of every cluster, (n, l2)."""
    h2 = np.asarray(h2, dtype=np.float64)
    if h2.ndim == 2:
        h2 = h2[None]
    out = np.zeros((n, h2.shape[-1]))
    for j in range(n):
        members = labels == j
        if members.any():
            out[j] = h2[:, members].mean(axis=(0, 1))
    return out
