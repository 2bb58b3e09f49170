"""node2vec structural embeddings and the trainable per-slot time embedding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import Tensor, parameter, take

INIT_STD = 0.02


@dataclass
class Node2vecConfig:
    dim: int = 128
    walks_per_node: int = 10
    walk_length: int = 40
    return_p: float = 1.0
    inout_q: float = 1.0
    window: int = 5
    negatives: int = 5
    epochs: int = 3
    lr: float = 0.025
    steps_per_epoch: int = 100
    seed: int = 0

    def __post_init__(self):
        for name in ("dim", "walks_per_node", "walk_length", "window", "negatives", "steps_per_epoch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.return_p <= 0 or self.inout_q <= 0:
            raise ValueError("return_p and inout_q must be positive")


def union_graph(snapshots, n_devices: int) -> dict[int, list[int]]:
    """Undirected union of every snapshot edge; all devices present, possibly isolated."""
    nbrs: dict[int, set[int]] = {i: set() for i in range(n_devices)}
    for snap in snapshots:
        for e in snap.edges:
            nbrs[e.trustor_id].add(e.trustee_id)
            nbrs[e.trustee_id].add(e.trustor_id)
    return {i: sorted(v) for i, v in nbrs.items()}


def transition_probs(adj: dict[int, list[int]], adj_sets: dict[int, set[int]], prev: int | None, cur: int,
                     p: float, q: float) -> tuple[list[int], np.ndarray]:
    """Second-order node2vec step distribution from ``cur`` having arrived from ``prev``."""
    candidates = adj[cur]
    if prev is None:
        w = np.ones(len(candidates))
    else:
        w = np.array([1.0 / p if x == prev else 1.0 if x in adj_sets[prev] else 1.0 / q for x in candidates])
    return candidates, w / w.sum()


def biased_walks(adj: dict[int, list[int]], cfg: Node2vecConfig) -> list[list[int]]:
    if not adj:
        raise ValueError("graph has no nodes")
    rng = np.random.default_rng([cfg.seed, 11])
    adj_sets = {k: set(v) for k, v in adj.items()}
    nodes = np.array(sorted(adj))
    walks = []
    for _ in range(cfg.walks_per_node):
        for start in rng.permutation(nodes):
            walk = [int(start)]
            prev = None
            while len(walk) < cfg.walk_length:
                cur = walk[-1]
                if not adj[cur]:
                    break
                cands, probs = transition_probs(adj, adj_sets, prev, cur, cfg.return_p, cfg.inout_q)
                k = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"))
                prev = cur
                walk.append(cands[min(k, len(cands) - 1)])
            walks.append(walk)
    return walks


def _skipgram_pairs(walks: Sequence[Sequence[int]], window: int) -> np.ndarray:
    chunks = []
    for walk in walks:
        w = np.asarray(walk, dtype=np.int64)
        for off in range(1, min(window, len(w) - 1) + 1):
            chunks.append(np.stack([w[:-off], w[off:]], axis=1))
            chunks.append(np.stack([w[off:], w[:-off]], axis=1))
    return np.concatenate(chunks) if chunks else np.zeros((0, 2), dtype=np.int64)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def cooccurrence(walks: Sequence[Sequence[int]], n_nodes: int, window: int) -> np.ndarray:
    """``(n, n)`` counts of (center, context) pairs within ``window`` steps."""
    pairs = _skipgram_pairs(walks, window)
    flat = pairs[:, 0] * n_nodes + pairs[:, 1]
    return np.bincount(flat, minlength=n_nodes * n_nodes).reshape(n_nodes, n_nodes).astype(np.float64)


def train_sgns(walks: Sequence[Sequence[int]], n_nodes: int, cfg: Node2vecConfig) -> Tensor:
    """Skip-gram with negative sampling; returns a frozen ``(n_nodes, dim)`` table.

    The vocabulary is the device set, so the objective is optimised full-batch
    on the co-occurrence matrix with negatives at their expected counts
    (``negatives * count(center) * noise(context)``, noise ~ unigram^0.75)
    instead of sampling pairs one at a time. Adam drives ``epochs *
    steps_per_epoch`` updates.
    """
    if not walks:
        raise ValueError("no walks to train on")
    rng = np.random.default_rng([cfg.seed, 12])
    emb = rng.uniform(-0.5 / cfg.dim, 0.5 / cfg.dim, size=(n_nodes, cfg.dim))
    ctx = np.zeros((n_nodes, cfg.dim))
    pos = cooccurrence(walks, n_nodes, cfg.window)
    n_pairs = pos.sum()
    if cfg.epochs == 0 or n_pairs == 0:
        return Tensor(emb)

    counts = np.bincount(np.concatenate([np.asarray(w) for w in walks]), minlength=n_nodes).astype(np.float64)
    noise = counts ** 0.75
    noise /= noise.sum()
    neg = cfg.negatives * np.outer(pos.sum(axis=1), noise)

    moments = [[np.zeros_like(emb), np.zeros_like(emb)], [np.zeros_like(ctx), np.zeros_like(ctx)]]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    for t in range(1, cfg.epochs * cfg.steps_per_epoch + 1):
        sig = _sigmoid(emb @ ctx.T)
        g_score = ((pos + neg) * sig - pos) / n_pairs
        grads = (g_score @ ctx, g_score.T @ emb)
        for table, grad, (m, v) in zip((emb, ctx), grads, moments):
            m *= beta1
            m += (1 - beta1) * grad
            v *= beta2
            v += (1 - beta2) * grad * grad
            table -= cfg.lr * (m / (1 - beta1 ** t)) / (np.sqrt(v / (1 - beta2 ** t)) + eps)
    return Tensor(emb)


def node2vec(snapshots, n_devices: int, cfg: Node2vecConfig) -> Tensor:
    adj = union_graph(snapshots, n_devices)
    return train_sgns(biased_walks(adj, cfg), n_devices, cfg)


def init_temporal_table(n_slots: int, dim: int, rng: np.random.Generator) -> Tensor:
    return parameter(rng.normal(0.0, INIT_STD, size=(n_slots, dim)))


def temporal_embedding(table: Tensor, slot: int) -> Tensor:
    if not 0 <= slot < table.shape[0]:
        raise ValueError(f"slot {slot} out of range [0, {table.shape[0]})")
    return take(table, slot, axis=0)
