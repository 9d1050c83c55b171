"""Path-selection strategies: which path carries each batch of packets.

A scheduler maps a trace to a per-packet path index. Path changes happen
only at batch boundaries: every B packets in packet mode, or at window
crossings (window k covers [k*T, (k+1)*T); a packet at exactly k*T belongs
to window k) in time mode.

Strategies:

* round robin cycles 0, 1, ..., n-1 by batch; in time mode the path is the
  absolute window index mod n, so a real scheduler switching every T
  microseconds would agree packet for packet.
* uniform random draws each batch's path independently.
* weighted random draws one probability vector per connection from a
  symmetric Dirichlet and then samples every batch from it.
* context-dependent sends the first H packets (the handshake) down one
  path and everything afterwards down another: exactly one switch.

Random strategies consume draws lazily, one per populated batch or
observed window, so an assignment is a pure function of the packet
sequence, the config, and the (seed, trace index) stream.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any

import numpy as np

from .rand import stream_rng
from .traces import Trace

_STREAM_SCHEDULE = 201


class Strategy(str, enum.Enum):
    ROUND_ROBIN = "rr"
    UNIFORM_RANDOM = "ur"
    WEIGHTED_RANDOM = "wr"
    CONTEXT_DEPENDENT = "context"


class BoundaryMode(str, enum.Enum):
    PACKET_COUNT = "packets"
    TIME_WINDOW = "time"


@dataclass(frozen=True)
class SchedulerConfig:
    n_paths: int = 3
    strategy: Strategy = Strategy.WEIGHTED_RANDOM
    boundary: BoundaryMode = BoundaryMode.PACKET_COUNT
    batch_packets: int = 50
    window_us: int = 100_000
    dirichlet_alpha: float = 1.0
    handshake_packets: int = 4
    vpn_path: int = 0
    direct_path: int = 1
    rr_offset: int = 0
    seed: int = 0

    def validate(self) -> None:
        if self.n_paths < 2:
            raise ValueError(f"n_paths must be >= 2, got {self.n_paths}")
        if self.batch_packets < 1:
            raise ValueError(f"batch_packets must be >= 1, got {self.batch_packets}")
        if self.window_us < 1:
            raise ValueError(f"window_us must be >= 1, got {self.window_us}")
        if self.dirichlet_alpha <= 0:
            raise ValueError(
                f"dirichlet_alpha must be > 0, got {self.dirichlet_alpha}"
            )
        if self.handshake_packets < 1:
            raise ValueError(
                f"handshake_packets must be >= 1, got {self.handshake_packets}"
            )
        if self.strategy is Strategy.CONTEXT_DEPENDENT:
            if self.vpn_path == self.direct_path:
                raise ValueError("vpn_path and direct_path must differ")
            if not (0 <= self.vpn_path < self.n_paths):
                raise ValueError(f"vpn_path {self.vpn_path} out of range")
            if not (0 <= self.direct_path < self.n_paths):
                raise ValueError(f"direct_path {self.direct_path} out of range")
        if not (0 <= self.rr_offset < self.n_paths):
            raise ValueError(f"rr_offset {self.rr_offset} out of range")

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_paths": self.n_paths,
            "strategy": self.strategy.value,
            "boundary": self.boundary.value,
            "batch_packets": self.batch_packets,
            "window_us": self.window_us,
            "dirichlet_alpha": self.dirichlet_alpha,
            "handshake_packets": self.handshake_packets,
            "vpn_path": self.vpn_path,
            "direct_path": self.direct_path,
            "rr_offset": self.rr_offset,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SchedulerConfig":
        known = {
            "n_paths",
            "strategy",
            "boundary",
            "batch_packets",
            "window_us",
            "dirichlet_alpha",
            "handshake_packets",
            "vpn_path",
            "direct_path",
            "rr_offset",
            "seed",
        }
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown scheduler config field(s): {', '.join(unknown)}")
        kwargs = dict(data)
        if "strategy" in kwargs:
            kwargs["strategy"] = Strategy(kwargs["strategy"])
        if "boundary" in kwargs:
            kwargs["boundary"] = BoundaryMode(kwargs["boundary"])
        config = cls(**kwargs)
        config.validate()
        return config


@dataclass(frozen=True)
class PathAssignment:
    """Per-packet path indices for one trace."""

    path_per_packet: tuple[int, ...]
    n_paths: int
    weights_used: tuple[float, ...] | None = None

    def __post_init__(self):
        if any(not (0 <= p < self.n_paths) for p in self.path_per_packet):
            raise ValueError("path index out of range")
        if self.weights_used is not None:
            if len(self.weights_used) != self.n_paths:
                raise ValueError("weights_used must have n_paths entries")
            if abs(sum(self.weights_used) - 1.0) > 1e-9:
                raise ValueError("weights_used must sum to 1")


def draw_connection_weights(
    n_paths: int, alpha: float, rng: np.random.Generator
) -> np.ndarray:
    """Draw one per-connection path-probability vector, symmetric Dirichlet."""
    if n_paths < 2:
        raise ValueError(f"n_paths must be >= 2, got {n_paths}")
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    weights = rng.dirichlet(np.full(n_paths, float(alpha)))
    return weights / weights.sum()


def schedule(trace: Trace, config: SchedulerConfig, trace_index: int = 0) -> PathAssignment:
    """Assign a path to every packet of the trace.

    Deterministic in (trace, config, trace_index): random strategies use
    the stream named by (config.seed, trace_index) so traces of a dataset
    are independent and the whole dataset is reproducible.
    """
    config.validate()
    if not trace.packets:
        raise ValueError("cannot schedule an empty trace")
    if config.strategy is Strategy.CONTEXT_DEPENDENT:
        return schedule_context_dependent(
            trace,
            config.handshake_packets,
            config.vpn_path,
            config.direct_path,
            n_paths=config.n_paths,
        )

    n = len(trace.packets)
    rng = stream_rng(config.seed, _STREAM_SCHEDULE, trace_index)
    weights = None
    if config.strategy is Strategy.WEIGHTED_RANDOM:
        weights = draw_connection_weights(config.n_paths, config.dirichlet_alpha, rng)

    if config.boundary is BoundaryMode.PACKET_COUNT:
        inverse = np.arange(n) // config.batch_packets
        block_ids = np.arange(int(inverse[-1]) + 1)
    else:
        times = np.fromiter((p.timestamp_us for p in trace.packets), np.int64, n)
        block_ids, inverse = np.unique(times // config.window_us, return_inverse=True)

    if config.strategy is Strategy.ROUND_ROBIN:
        per_block = (config.rr_offset + block_ids) % config.n_paths
    elif config.strategy is Strategy.UNIFORM_RANDOM:
        per_block = rng.integers(0, config.n_paths, size=len(block_ids))
    else:
        per_block = rng.choice(config.n_paths, size=len(block_ids), p=weights)

    paths = per_block[inverse]
    return PathAssignment(
        tuple(int(p) for p in paths),
        config.n_paths,
        tuple(float(w) for w in weights) if weights is not None else None,
    )


def schedule_context_dependent(
    trace: Trace,
    handshake_packets: int,
    vpn_path: int = 0,
    direct_path: int = 1,
    n_paths: int | None = None,
) -> PathAssignment:
    """Handshake packets ride the tunneled path, the rest the direct one.

    Traces shorter than the handshake stay entirely on the tunneled path;
    otherwise there is exactly one path switch.
    """
    if handshake_packets < 1:
        raise ValueError(f"handshake_packets must be >= 1, got {handshake_packets}")
    if vpn_path == direct_path:
        raise ValueError("vpn_path and direct_path must differ")
    if vpn_path < 0 or direct_path < 0:
        raise ValueError("path indices must be non-negative")
    if n_paths is None:
        n_paths = max(vpn_path, direct_path) + 1
    if n_paths <= max(vpn_path, direct_path):
        raise ValueError("n_paths too small for the given path indices")
    n = len(trace.packets)
    head = min(handshake_packets, n)
    paths = (vpn_path,) * head + (direct_path,) * (n - head)
    return PathAssignment(paths, n_paths)
