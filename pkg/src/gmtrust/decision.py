"""Task-specific resource trust and collaborator selection.

A candidate's resources are trusted for a task when shipping the task data
to it and executing it there fits inside the task's deadline. Final trust
is historical trust gated by that test.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

from .simnet import Device

BITS_PER_MB = 8e6


@dataclass(frozen=True)
class TaskSpec:
    size_bits: float
    density: float      # CPU cycles per bit
    max_time_s: float

    def __post_init__(self):
        if not (self.size_bits > 0 and self.density > 0 and self.max_time_s > 0):
            raise ValueError(f"task fields must be strictly positive, got {self}")

    @classmethod
    def from_mb(cls, size_mb: float, density: float, max_time_s: float, bits_per_mb: float = BITS_PER_MB):
        return cls(size_mb * bits_per_mb, density, max_time_s)


# (density cycles/bit, deadline s)
PRESETS = {
    "face": (2339.0, 80.0),
    "virus": (32946.0, 700.0),
}


def preset_task(name: str, size_mb: float, bits_per_mb: float = BITS_PER_MB) -> TaskSpec:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    density, deadline = PRESETS[name]
    return TaskSpec.from_mb(size_mb, density, deadline, bits_per_mb)


@dataclass(frozen=True)
class ChannelModel:
    bandwidth_hz: float = 5e6
    noise_w: float = 1e-11          # -80 dBm
    k0: float = 1e-6
    d0_m: float = 1.0
    pathloss_exp: float = 3.0

    def __post_init__(self):
        if self.bandwidth_hz <= 0 or self.noise_w <= 0 or self.k0 <= 0 or self.d0_m <= 0:
            raise ValueError("bandwidth, noise, k0 and d0 must be positive")

    def gain(self, distance_m: float) -> float:
        """Log-distance path gain ``k0 * (d0 / d) ** gamma``."""
        if distance_m <= 0:
            raise ValueError(f"distance must be positive, got {distance_m}")
        return self.k0 * (self.d0_m / distance_m) ** self.pathloss_exp

    def rate(self, tx_power_w: float, gain: float) -> float:
        return self.bandwidth_hz * math.log2(1.0 + tx_power_w * gain / self.noise_w)


def distance(a: Device, b: Device) -> float:
    return math.hypot(a.position[0] - b.position[0], a.position[1] - b.position[1])


def transmission_time(task: TaskSpec, owner: Device, candidate: Device, ch: ChannelModel) -> float:
    """Seconds to send the task from ``owner`` to ``candidate``; ``inf`` when the rate is zero."""
    if owner.id == candidate.id:
        raise ValueError("owner and candidate must differ")
    d = distance(owner, candidate)
    gain = ch.gain(d) if d > 0 else math.inf
    r = ch.rate(owner.tx_power_w, gain)
    return task.size_bits / r if r > 0 else math.inf


def computation_time(task: TaskSpec, candidate: Device) -> float:
    if candidate.cpu_hz <= 0:
        raise ValueError(f"cpu_hz must be positive, got {candidate.cpu_hz}")
    return task.size_bits * task.density / candidate.cpu_hz


def resource_trust(task: TaskSpec, owner: Device, candidate: Device, ch: ChannelModel) -> int:
    """1 iff transmission plus computation fits the deadline (inclusive)."""
    total = transmission_time(task, owner, candidate, ch) + computation_time(task, candidate)
    return int(total <= task.max_time_s)


@dataclass(frozen=True)
class TrustAssessment:
    trustee_id: int
    t_his: float
    t_res: int
    t_total: float
    t_tra_s: float
    t_com_s: float

    def as_json(self) -> dict:
        return {"id": self.trustee_id, "t_his": self.t_his, "t_res": self.t_res,
                "t_tra": self.t_tra_s if math.isfinite(self.t_tra_s) else None,
                "t_com": self.t_com_s, "t_total": self.t_total}


@dataclass(frozen=True)
class Selection:
    owner: int
    task: TaskSpec
    ranking: tuple[TrustAssessment, ...]
    selected: TrustAssessment | None   # None: no trusted collaborator

    def to_json(self) -> str:
        doc = {
            "owner": self.owner,
            "task": asdict(self.task),
            "ranking": [a.as_json() for a in self.ranking],
            "selected": None if self.selected is None else self.selected.trustee_id,
        }
        return json.dumps(doc, indent=2)


def assess(owner: Device, candidate: Device, task: TaskSpec, t_his: float, ch: ChannelModel) -> TrustAssessment:
    t_tra = transmission_time(task, owner, candidate, ch)
    t_com = computation_time(task, candidate)
    t_res = int(t_tra + t_com <= task.max_time_s)
    return TrustAssessment(candidate.id, float(t_his), t_res, float(t_his) * t_res, t_tra, t_com)


def select_collaborator(owner: Device, candidates: Sequence[Device], task: TaskSpec,
                        historical: Callable[[int, Sequence[int]], Sequence[float]],
                        ch: ChannelModel | None = None) -> Selection:
    """Rank candidates by ``t_his * t_res``; ties go to higher ``t_his``, then lower id.

    ``historical(owner_id, candidate_ids)`` returns the learned trust of each
    (owner, candidate) pair, e.g. decoded model scores.
    """
    ch = ch or ChannelModel()
    candidates = [c for c in candidates if c.id != owner.id]
    if not candidates:
        raise ValueError("no candidates to select from")
    scores = historical(owner.id, [c.id for c in candidates])
    ranking = sorted((assess(owner, c, task, s, ch) for c, s in zip(candidates, scores)),
                     key=lambda a: (-a.t_total, -a.t_his, a.trustee_id))
    best = ranking[0] if ranking[0].t_total > 0 else None
    return Selection(owner.id, task, tuple(ranking), best)


def trusted_count(owner: Device, candidates: Sequence[Device], task: TaskSpec, ch: ChannelModel) -> int:
    return sum(resource_trust(task, owner, c, ch) for c in candidates if c.id != owner.id)
