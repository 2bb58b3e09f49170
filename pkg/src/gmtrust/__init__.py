"""Trust evaluation for collaborative devices: role-aware graph encoding of
trust snapshots fused over time with selective state-space blocks."""

__version__ = "0.1.0"
