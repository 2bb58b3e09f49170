"""Time-window slicing of collaboration records into directed trust graphs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class WindowSpec:
    n_slots: int
    horizon_s: float

    def __post_init__(self):
        if self.n_slots < 1:
            raise ValueError(f"n_slots must be >= 1, got {self.n_slots}")
        if self.horizon_s <= 0:
            raise ValueError(f"horizon_s must be positive, got {self.horizon_s}")

    @property
    def slot_len_s(self) -> float:
        return self.horizon_s / self.n_slots

    def slot_of(self, t: float) -> int:
        """Half-open slots ``[k*len, (k+1)*len)``; times past the horizon clamp to the last slot."""
        return min(max(int(math.floor(t / self.slot_len_s)), 0), self.n_slots - 1)


@dataclass(frozen=True)
class TrustEdge:
    trustor_id: int
    trustee_id: int
    weight: float
    n_interactions: int


@dataclass
class TrustSnapshot:
    slot_index: int
    edges: list[TrustEdge]
    nodes: set[int] = field(init=False)
    in_adj: dict[int, list[int]] = field(init=False)
    out_adj: dict[int, list[int]] = field(init=False)

    def __post_init__(self):
        self.nodes, self.in_adj, self.out_adj = set(), {}, {}
        seen = set()
        for e in self.edges:
            pair = (e.trustor_id, e.trustee_id)
            if pair in seen:
                raise ValueError(f"duplicate edge {pair} in slot {self.slot_index}")
            seen.add(pair)
            self.nodes.update(pair)
            self.out_adj.setdefault(e.trustor_id, []).append(e.trustee_id)
            self.in_adj.setdefault(e.trustee_id, []).append(e.trustor_id)

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(trustor ids, trustee ids, weights) as aligned arrays."""
        src = np.array([e.trustor_id for e in self.edges], dtype=np.int64)
        dst = np.array([e.trustee_id for e in self.edges], dtype=np.int64)
        w = np.array([e.weight for e in self.edges], dtype=np.float64)
        return src, dst, w


def aggregate_edge(records: Sequence[tuple[float, int]], alpha1: float, alpha2: float) -> float:
    """Mean of ``alpha1*(1 - loss) + alpha2*outcome`` over a pair's records."""
    if not records:
        raise ValueError("aggregate_edge needs at least one record")
    if alpha1 < 0 or alpha2 < 0 or abs(alpha1 + alpha2 - 1.0) > 1e-12:
        raise ValueError(f"alpha weights must be non-negative and sum to 1, got {alpha1}, {alpha2}")
    total = 0.0
    for loss, out in records:
        total += alpha1 * (1.0 - loss) + alpha2 * out
    return total / len(records)


def build_snapshots(dataset, window: WindowSpec, alpha1: float = 0.6, alpha2: float = 0.4) -> list[TrustSnapshot]:
    if window.n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    grouped: list[dict[tuple[int, int], list[tuple[float, int]]]] = [{} for _ in range(window.n_slots)]
    for r in dataset.records:
        slot = window.slot_of(r.time)
        grouped[slot].setdefault((r.trustor_id, r.trustee_id), []).append((r.packet_loss, r.outcome))
    snapshots = []
    for s, pairs in enumerate(grouped):
        edges = [TrustEdge(i, j, aggregate_edge(obs, alpha1, alpha2), len(obs))
                 for (i, j), obs in sorted(pairs.items())]
        snapshots.append(TrustSnapshot(s, edges))
    return snapshots


def snapshot_lines(snapshots: Iterable[TrustSnapshot]) -> list[str]:
    return [json.dumps({"slot": s.slot_index, "src": e.trustor_id, "dst": e.trustee_id, "w": e.weight,
                        "n": e.n_interactions}, separators=(",", ":"))
            for s in snapshots for e in s.edges]


def write_snapshots(path, snapshots: Sequence[TrustSnapshot]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in snapshot_lines(snapshots):
            fh.write(line + "\n")


def read_snapshots(path, n_slots: int) -> list[TrustSnapshot]:
    edges: list[list[TrustEdge]] = [[] for _ in range(n_slots)]
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                edges[int(obj["slot"])].append(TrustEdge(int(obj["src"]), int(obj["dst"]), float(obj["w"]),
                                                         int(obj["n"])))
            except (ValueError, KeyError, TypeError, IndexError) as exc:
                raise ValueError(f"{path}: line {lineno}: corrupt edge ({exc})") from None
    return [TrustSnapshot(s, e) for s, e in enumerate(edges)]
