"""Seeded statistical simulator of a collaborative device network.

Devices are placed in a square arena, given a CPU frequency from a fixed menu
and a behaviour profile. ``simulate`` then synthesises collaboration records:
each task picks a trustor uniformly and a trustee from that trustor's static
affinity set, and draws packet loss and a binary outcome from the trustee's
profile for the current drift window.

All randomness comes from numpy's PCG64 generator (``np.random.default_rng``)
seeded with ``seed`` (network), ``[seed, 1]`` (affinity graph) and
``[seed, 2]`` (records), so datasets are reproducible bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .snapshot import WindowSpec, aggregate_edge

PROFILE_KINDS = ("stable", "degrading", "oscillating", "malicious")
DATASET_VERSION = 1


@dataclass(frozen=True)
class DeviceProfile:
    kind: str
    base_reliability: float
    loss_mean: float
    loss_jitter: float
    drift: float = 0.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")

    def reliability_at(self, window: int) -> float:
        """Task success probability during drift window ``window``."""
        if self.kind == "degrading":
            p = self.base_reliability + self.drift * window
        elif self.kind == "oscillating":
            p = self.base_reliability + self.drift * (window % 2)
        else:
            p = self.base_reliability
        return min(1.0, max(0.0, p))


@dataclass(frozen=True)
class Device:
    id: int
    cpu_hz: float
    tx_power_w: float
    position: tuple[float, float]
    profile: DeviceProfile

    def __post_init__(self):
        if self.cpu_hz <= 0 or self.tx_power_w <= 0:
            raise ValueError(f"device {self.id}: cpu_hz and tx_power_w must be positive")


@dataclass(frozen=True)
class CollaborationRecord:
    trustor_id: int
    trustee_id: int
    time: float
    packet_loss: float
    outcome: int


@dataclass(frozen=True)
class Dataset:
    devices: tuple[Device, ...]
    records: tuple[CollaborationRecord, ...]
    horizon_s: float
    seed: int

    @property
    def n_devices(self) -> int:
        return len(self.devices)


@dataclass
class SimConfig:
    arena_m: float = 1000.0
    cpu_choices_hz: tuple[float, ...] = (2e9, 4e9, 6e9)
    tx_power_w: float = 0.1
    # stable, degrading, oscillating, malicious
    mixture: tuple[float, ...] = (0.60, 0.15, 0.15, 0.10)
    affinity_frac: float = 0.05
    horizon_s: float = 10000.0
    n_windows: int = 10
    n_devices: int = 500
    n_tasks: int = 8000

    def __post_init__(self):
        self.cpu_choices_hz = tuple(float(c) for c in self.cpu_choices_hz)
        self.mixture = tuple(float(m) for m in self.mixture)
        if len(self.mixture) != len(PROFILE_KINDS) or abs(sum(self.mixture) - 1.0) > 1e-9:
            raise ValueError(f"mixture must have {len(PROFILE_KINDS)} weights summing to 1")
        if min(self.mixture) < 0:
            raise ValueError("mixture weights must be non-negative")
        if self.arena_m <= 0 or self.horizon_s <= 0 or self.n_windows < 1:
            raise ValueError("arena_m, horizon_s must be positive and n_windows >= 1")
        if not 0 < self.affinity_frac <= 1:
            raise ValueError("affinity_frac must be in (0, 1]")


def _draw_profile(kind: str, rng: np.random.Generator) -> DeviceProfile:
    if kind == "stable":
        return DeviceProfile(kind, rng.uniform(0.85, 0.99), rng.uniform(0.01, 0.08), 0.02)
    if kind == "degrading":
        return DeviceProfile(kind, rng.uniform(0.90, 0.99), rng.uniform(0.01, 0.08), 0.02,
                             -rng.uniform(0.06, 0.10))
    if kind == "oscillating":
        return DeviceProfile(kind, rng.uniform(0.85, 0.99), rng.uniform(0.01, 0.08), 0.02,
                             -rng.uniform(0.50, 0.70))
    return DeviceProfile(kind, rng.uniform(0.05, 0.25), rng.uniform(0.20, 0.40), 0.05)


def generate_network(n_devices: int, seed: int, config: SimConfig | None = None) -> Dataset:
    cfg = config or SimConfig()
    if n_devices < 2:
        raise ValueError(f"n_devices must be >= 2, got {n_devices}")
    rng = np.random.default_rng(seed)
    positions = rng.uniform(0.0, cfg.arena_m, size=(n_devices, 2))
    cpus = rng.choice(np.array(cfg.cpu_choices_hz), size=n_devices)
    kinds = rng.choice(len(PROFILE_KINDS), size=n_devices, p=np.array(cfg.mixture))
    devices = tuple(
        Device(i, float(cpus[i]), cfg.tx_power_w, (float(positions[i, 0]), float(positions[i, 1])),
               _draw_profile(PROFILE_KINDS[kinds[i]], rng))
        for i in range(n_devices)
    )
    return Dataset(devices, (), cfg.horizon_s, seed)


def affinity_graph(n_devices: int, seed: int, affinity_frac: float) -> list[np.ndarray]:
    """Each device's fixed set of preferred collaborators (about ``affinity_frac`` of peers)."""
    rng = np.random.default_rng([seed, 1])
    k = max(1, int(round(affinity_frac * (n_devices - 1))))
    out = []
    for i in range(n_devices):
        others = np.array([j for j in range(n_devices) if j != i])
        out.append(np.sort(rng.choice(others, size=k, replace=False)))
    return out


def simulate(dataset: Dataset, n_tasks: int, config: SimConfig | None = None) -> Dataset:
    """Append ``n_tasks`` records spaced uniformly over the horizon."""
    cfg = config or SimConfig()
    if not dataset.devices:
        raise RuntimeError("cannot simulate an empty network")
    if n_tasks < 0:
        raise ValueError(f"n_tasks must be >= 0, got {n_tasks}")
    if n_tasks == 0:
        return dataset
    n = dataset.n_devices
    affinity = affinity_graph(n, dataset.seed, cfg.affinity_frac)
    rng = np.random.default_rng([dataset.seed, 2])
    trustors = rng.integers(0, n, size=n_tasks)
    picks = rng.integers(0, len(affinity[0]), size=n_tasks)
    noise = rng.standard_normal(n_tasks)
    coins = rng.random(n_tasks)

    window_len = dataset.horizon_s / cfg.n_windows
    records = []
    for k in range(n_tasks):
        t = round(k * dataset.horizon_s / n_tasks, 6)
        src = int(trustors[k])
        dst = int(affinity[src][picks[k]])
        prof = dataset.devices[dst].profile
        window = min(int(t // window_len), cfg.n_windows - 1)
        loss = min(1.0, max(0.0, prof.loss_mean + prof.loss_jitter * float(noise[k])))
        out = int(coins[k] < prof.reliability_at(window))
        records.append(CollaborationRecord(src, dst, t, loss, out))
    merged = sorted(dataset.records + tuple(records), key=lambda r: r.time)
    return replace(dataset, records=tuple(merged))


def ground_truth_labels(dataset: Dataset, window: WindowSpec, alpha1: float = 0.6,
                        alpha2: float = 0.4) -> dict[tuple[int, int, int], float]:
    """Observed trust per (trustor, trustee, slot); pairs without records are absent."""
    if not dataset.records:
        raise RuntimeError("dataset has no records")
    grouped: dict[tuple[int, int, int], list[tuple[float, int]]] = {}
    for r in dataset.records:
        key = (r.trustor_id, r.trustee_id, window.slot_of(r.time))
        grouped.setdefault(key, []).append((r.packet_loss, r.outcome))
    return {key: aggregate_edge(obs, alpha1, alpha2) for key, obs in grouped.items()}


# ------------------------------------------------------------------ JSONL I/O

def _device_to_json(d: Device) -> dict:
    p = d.profile
    return {"id": d.id, "cpu_hz": d.cpu_hz, "tx_power_w": d.tx_power_w, "x": d.position[0], "y": d.position[1],
            "kind": p.kind, "base_reliability": p.base_reliability, "loss_mean": p.loss_mean,
            "loss_jitter": p.loss_jitter, "drift": p.drift}


def _device_from_json(obj: dict) -> Device:
    profile = DeviceProfile(obj["kind"], float(obj["base_reliability"]), float(obj["loss_mean"]),
                            float(obj["loss_jitter"]), float(obj["drift"]))
    return Device(int(obj["id"]), float(obj["cpu_hz"]), float(obj["tx_power_w"]),
                  (float(obj["x"]), float(obj["y"])), profile)


def dataset_lines(dataset: Dataset) -> list[str]:
    header = {"version": DATASET_VERSION, "seed": dataset.seed, "horizon_s": dataset.horizon_s,
              "devices": [_device_to_json(d) for d in dataset.devices]}
    lines = [json.dumps(header, separators=(",", ":"))]
    for r in dataset.records:
        lines.append(f'{{"src":{r.trustor_id},"dst":{r.trustee_id},"t":{r.time:.6f},'
                     f'"loss":{r.packet_loss!r},"out":{r.outcome}}}')
    return lines


def write_dataset(path: str | Path, dataset: Dataset) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(dataset_lines(dataset)) + "\n")


def read_dataset(path: str | Path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
        devices = tuple(_device_from_json(d) for d in header["devices"])
        horizon, seed = float(header["horizon_s"]), int(header["seed"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ValueError(f"{path}: line 1: bad header ({exc})") from None
    ids = {d.id for d in devices}
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rec = CollaborationRecord(int(obj["src"]), int(obj["dst"]), float(obj["t"]),
                                      float(obj["loss"]), int(obj["out"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}: line {lineno}: corrupt record ({exc})") from None
        if rec.trustor_id not in ids or rec.trustee_id not in ids or rec.trustor_id == rec.trustee_id:
            raise ValueError(f"{path}: line {lineno}: bad device ids {rec.trustor_id}->{rec.trustee_id}")
        if not 0.0 <= rec.packet_loss <= 1.0 or rec.outcome not in (0, 1):
            raise ValueError(f"{path}: line {lineno}: loss/outcome out of range")
        if records and rec.time < records[-1].time:
            raise ValueError(f"{path}: line {lineno}: records not sorted by time")
        records.append(rec)
    return Dataset(devices, tuple(records), horizon, seed)
