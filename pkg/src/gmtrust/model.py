"""GM model: parameters plus the spatial -> temporal -> pair-head forward pass.

Three variants share the code path:

``gm``
    role-aware GNN trajectories fused by Mamba blocks.
``temporal_only``
    node2vec rows (zeroed where the device is absent) fed straight to Mamba.
``spatial_only``
    GNN trajectories averaged over time and projected to the head width.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spatial, temporal
from .embed import init_temporal_table
from .tensor import (Tensor, concat, load_into, matmul, mean_over_axis, mul, parameter, read_checkpoint, relu,
                     reshape, save_checkpoint, swapaxes, take, transpose)

VARIANTS = ("gm", "temporal_only", "spatial_only")


@dataclass
class ModelConfig:
    d_a: int = 128
    d_t: int = 8
    gnn_widths: tuple[int, ...] = (32, 64, 32)
    mamba_blocks: int = 4
    d_inner: int = 32
    d_state: int = 16
    conv_width: int = 4
    head_hidden: int = 128
    n_bins: int = 256
    activation: str = "relu"
    residual: bool = True
    block_norm: bool = True
    variant: str = "gm"

    def __post_init__(self):
        self.gnn_widths = tuple(int(w) for w in self.gnn_widths)
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.activation not in spatial.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.n_bins < 2 or self.mamba_blocks < 1 or not self.gnn_widths:
            raise ValueError("n_bins >= 2, mamba_blocks >= 1 and at least one GNN layer required")


@dataclass
class GmModel:
    config: ModelConfig
    n_slots: int
    params: dict[str, Tensor] = field(default_factory=dict)

    NODE_TABLE = "embed.node2vec"

    @classmethod
    def create(cls, config: ModelConfig, node_table: Tensor, n_slots: int, seed: int) -> "GmModel":
        rng = np.random.default_rng([seed, 21])
        cfg = config
        p: dict[str, Tensor] = {cls.NODE_TABLE: Tensor(np.array(node_table.data))}
        p["embed.temporal"] = init_temporal_table(n_slots, cfg.d_a, rng)
        if cfg.variant != "temporal_only":
            d_in = cfg.d_a
            for i, w in enumerate(cfg.gnn_widths):
                for k, v in spatial.init_layer(d_in, w, cfg.d_a, cfg.d_t, rng).items():
                    p[f"spatial.layer{i}.{k}"] = v
                d_in = w
        if cfg.variant == "spatial_only":
            w = cfg.gnn_widths[-1]
            p["pool.proj"] = parameter(rng.normal(0.0, 1.0 / np.sqrt(w), size=(cfg.d_a, w)))
        else:
            d_in = cfg.d_a if cfg.variant == "temporal_only" else cfg.gnn_widths[-1]
            for i in range(cfg.mamba_blocks):
                for k, v in temporal.init_block(d_in, cfg.d_a, rng, d_inner=cfg.d_inner, d_state=cfg.d_state,
                                                conv_width=cfg.conv_width).items():
                    p[f"temporal.block{i}.{k}"] = v
                d_in = cfg.d_a
        h = cfg.head_hidden
        p["head.W1"] = parameter(rng.normal(0.0, np.sqrt(2.0 / (2 * cfg.d_a)), size=(h, 2 * cfg.d_a)))
        p["head.b1"] = parameter(np.zeros(h))
        p["head.W2"] = parameter(rng.normal(0.0, 1.0 / np.sqrt(h), size=(cfg.n_bins, h)))
        p["head.b2"] = parameter(np.zeros(cfg.n_bins))
        return cls(cfg, n_slots, p)

    # --------------------------------------------------------------- access

    def trainable(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if v.requires_grad}

    def _group(self, prefix: str) -> list[dict[str, Tensor]]:
        groups: dict[int, dict[str, Tensor]] = {}
        for name, t in self.params.items():
            if name.startswith(prefix):
                idx, _, key = name[len(prefix):].partition(".")
                groups.setdefault(int(idx), {})[key] = t
        return [groups[i] for i in sorted(groups)]

    @property
    def spatial_layers(self) -> list[dict[str, Tensor]]:
        return self._group("spatial.layer")

    @property
    def mamba_blocks(self) -> list[dict[str, Tensor]]:
        return self._group("temporal.block")

    # -------------------------------------------------------------- forward

    def trajectories(self, graph: spatial.HistoryGraph, dropout_rate: float = 0.0, train: bool = False,
                     rng: np.random.Generator | None = None) -> Tensor:
        """Per-device trajectories ``(n, S', width)`` for the given history slots."""
        node = self.params[self.NODE_TABLE]
        if self.config.variant == "temporal_only":
            n, k = graph.n_devices, len(graph.slots)
            rows = mul(take(node, np.tile(np.arange(n), k)), Tensor(graph.present))
            return swapaxes(reshape(rows, (k, n, node.shape[1])), 0, 1)
        return spatial.spatial_forward(graph, node, self.params["embed.temporal"], self.spatial_layers,
                                       self.config.activation, dropout_rate, train, rng)

    def fuse(self, traj: Tensor, dropout_rate: float = 0.0, train: bool = False,
             rng: np.random.Generator | None = None) -> Tensor:
        """Trajectories ``(m, S', width)`` to fused embeddings ``(m, d_a)``."""
        if self.config.variant == "spatial_only":
            return matmul(mean_over_axis(traj, axis=-2), transpose(self.params["pool.proj"]))
        return temporal.temporal_forward(traj, self.mamba_blocks, self.config.residual, dropout_rate, train, rng,
                                         self.config.block_norm)

    def embed_devices(self, graph: spatial.HistoryGraph, devices: np.ndarray, dropout_rate: float = 0.0,
                      train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        traj = self.trajectories(graph, dropout_rate, train, rng)
        return self.fuse(take(traj, np.asarray(devices, dtype=np.int64), axis=0), dropout_rate, train, rng)

    def head(self, emb_i: Tensor, emb_j: Tensor) -> Tensor:
        x = concat([emb_i, emb_j], axis=-1)
        hid = relu(matmul(x, transpose(self.params["head.W1"])) + self.params["head.b1"])
        return matmul(hid, transpose(self.params["head.W2"])) + self.params["head.b2"]

    def pair_logits(self, graph: spatial.HistoryGraph, pairs: np.ndarray, dropout_rate: float = 0.0,
                    train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Logits ``(len(pairs), n_bins)`` for (trustor, trustee) rows of ``pairs``."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        uniq, inv = np.unique(pairs, return_inverse=True)
        inv = inv.reshape(-1, 2)
        emb = self.embed_devices(graph, uniq, dropout_rate, train, rng)
        return self.head(take(emb, inv[:, 0]), take(emb, inv[:, 1]))

    # ----------------------------------------------------------- checkpoint

    def save(self, path) -> None:
        save_checkpoint(path, self.params)

    def load(self, path) -> None:
        load_into(self.params, read_checkpoint(path))
