"""Role-aware message passing over directed trust snapshots.

Every device gets two views per layer: a trustee view aggregated from the
devices that delegated tasks to it (in-neighbours) and a trustor view
aggregated from the devices it delegated to (out-neighbours). The two views
are fused into a single state; three stacked layers give the per-slot state
that forms a device's trust trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import (Tensor, as_tensor, concat, dropout, matmul, mul, parameter, relu, reshape, segment_mean,
                     swapaxes, take, transpose)

ACTIVATIONS = {"relu": relu}


def encode_trust(value: float, d_t: int = 8) -> np.ndarray:
    """Quantise ``value`` in [0, 1] to ``d_t`` bits, most significant first."""
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"trust value must be in [0, 1], got {value}")
    q = int(round(value * (2 ** d_t - 1)))
    return np.array([(q >> (d_t - 1 - k)) & 1 for k in range(d_t)], dtype=np.float64)


def decode_trust(bits: np.ndarray) -> float:
    d_t = len(bits)
    q = 0
    for b in bits:
        q = (q << 1) | int(b)
    return q / (2 ** d_t - 1)


def init_layer(d_in: int, d_out: int, d_a: int, d_t: int, rng: np.random.Generator) -> dict[str, Tensor]:
    fan_msg = d_in + d_out + d_a
    return {
        "P_tr": parameter(rng.normal(0.0, 1.0 / np.sqrt(d_t), size=(d_out, d_t))),
        "P_to": parameter(rng.normal(0.0, 1.0 / np.sqrt(d_t), size=(d_out, d_t))),
        "msg_W": parameter(rng.normal(0.0, np.sqrt(2.0 / fan_msg), size=(d_out, fan_msg))),
        "msg_b": parameter(np.zeros(d_out)),
        "W_fuse": parameter(rng.normal(0.0, np.sqrt(2.0 / (2 * d_out)), size=(d_out, 2 * d_out))),
        "b_fuse": parameter(np.zeros(d_out)),
    }


def _message(h_nbr: Tensor, u: Tensor, tau: Tensor, params) -> Tensor:
    x = concat([h_nbr, u, tau], axis=-1)
    return relu(matmul(x, transpose(params["msg_W"])) + params["msg_b"])


def trustee_message(h_src, code, tau, params) -> Tensor:
    """Message from a trustor ``h_src`` to the trustee it delegated to."""
    u = matmul(as_tensor(code), transpose(params["P_tr"]))
    return _message(as_tensor(h_src), u, as_tensor(tau), params)


def trustor_message(h_dst, code, tau, params) -> Tensor:
    """Message from a trustee ``h_dst`` back to the trustor that relied on it."""
    u = matmul(as_tensor(code), transpose(params["P_to"]))
    return _message(as_tensor(h_dst), u, as_tensor(tau), params)


def aggregate(messages: Sequence[Tensor], width: int) -> Tensor:
    """Elementwise mean; an empty neighbourhood gives the zero vector."""
    if not messages:
        return Tensor(np.zeros(width))
    acc = messages[0]
    for m in messages[1:]:
        acc = acc + m
    return acc * (1.0 / len(messages))


def role_fuse(h_tr, h_to, params, activation: str = "relu") -> Tensor:
    h_tr, h_to = as_tensor(h_tr), as_tensor(h_to)
    if h_tr.shape[-1] != h_to.shape[-1]:
        raise ValueError(f"role_fuse: shape mismatch {h_tr.shape} vs {h_to.shape}")
    pre = matmul(concat([h_tr, h_to], axis=-1), transpose(params["W_fuse"])) + params["b_fuse"]
    return ACTIVATIONS[activation](pre)


@dataclass
class HistoryGraph:
    """A run of snapshots flattened into one graph for batched message passing.

    Node ``k * n_devices + i`` is device ``i`` in the ``k``-th history slot, so
    messages never cross slots.
    """

    slots: tuple[int, ...]
    n_devices: int
    src: np.ndarray        # (E,) flattened trustor node index
    dst: np.ndarray        # (E,) flattened trustee node index
    edge_slot: np.ndarray  # (E,) absolute slot index, for the time embedding
    codes: np.ndarray      # (E, d_t)
    present: np.ndarray    # (K * n, 1) 1.0 where the device has an edge in that slot

    @property
    def n_nodes(self) -> int:
        return len(self.slots) * self.n_devices

    @classmethod
    def from_snapshots(cls, snapshots, n_devices: int, d_t: int = 8) -> "HistoryGraph":
        src, dst, eslot, codes = [], [], [], []
        present = np.zeros((len(snapshots) * n_devices, 1))
        for k, snap in enumerate(snapshots):
            s, d, w = snap.edge_arrays()
            if len(s) and (s.max() >= n_devices or d.max() >= n_devices):
                raise ValueError(f"slot {snap.slot_index}: device id outside [0, {n_devices})")
            src.append(s + k * n_devices)
            dst.append(d + k * n_devices)
            eslot.append(np.full(len(s), snap.slot_index, dtype=np.int64))
            codes.extend(encode_trust(v, d_t) for v in w)
            present[s + k * n_devices] = 1.0
            present[d + k * n_devices] = 1.0
        return cls(tuple(s.slot_index for s in snapshots), n_devices, _cat(src), _cat(dst), _cat(eslot),
                   np.array(codes).reshape(-1, d_t), present)


def _cat(parts: list[np.ndarray]) -> np.ndarray:
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def layer_forward(h: Tensor, g: HistoryGraph, tau_edges: Tensor, params, activation: str = "relu") -> Tensor:
    """One role-aware layer over every (slot, device) node: ``(K*n, d_in) -> (K*n, d_out)``."""
    codes = Tensor(g.codes)
    m_tr = trustee_message(take(h, g.src), codes, tau_edges, params)
    m_to = trustor_message(take(h, g.dst), codes, tau_edges, params)
    h_tr = segment_mean(m_tr, g.dst, g.n_nodes)
    h_to = segment_mean(m_to, g.src, g.n_nodes)
    return role_fuse(h_tr, h_to, params, activation)


def spatial_forward(g: HistoryGraph, node_emb: Tensor, temporal_table: Tensor, layers: Sequence[dict],
                    activation: str = "relu", dropout_rate: float = 0.0, train: bool = False,
                    rng: np.random.Generator | None = None) -> Tensor:
    """Trust trajectories for every device: ``(n, K, d_out)`` for the K history slots.

    Devices with no edge in a slot get a zero row there.
    """
    n, k = g.n_devices, len(g.slots)
    h = take(node_emb, np.tile(np.arange(n), k))
    tau_edges = take(temporal_table, g.edge_slot)
    for params in layers:
        h = layer_forward(h, g, tau_edges, params, activation)
        h = dropout(h, dropout_rate, train, rng)
    h = mul(h, Tensor(g.present))
    return swapaxes(reshape(h, (k, n, h.shape[-1])), 0, 1)
