"""Packet-trace data model, file I/O, and a labeled synthetic-trace generator.

Two wire formats are supported:

ndjson
    One JSON object per line::

        {"label": str, "monitored": bool,
         "packets": [[timestamp_us, signed_size], ...]}

csv
    Header ``trace_id,label,monitored,timestamp_us,signed_size``, one row
    per packet, rows grouped by ``trace_id``.

In both formats a packet's direction rides on the sign of its size:
positive is outgoing (client to server), negative is incoming. Zero sizes
are invalid. Loaders normalize every trace so its first packet sits at
t=0 with packets stably sorted by timestamp, and reject unknown fields or
columns by name. The label "unmonitored" is reserved: traces with
monitored=false must carry it and monitored traces must not.

Dataset ``metadata`` is in-memory bookkeeping only; neither format
persists it.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .rand import stream_rng

UNMONITORED_LABEL = "unmonitored"

NDJSON_FIELDS = ("label", "monitored", "packets")
CSV_COLUMNS = ("trace_id", "label", "monitored", "timestamp_us", "signed_size")
FORMATS = ("ndjson", "csv")


class DatasetFormatError(ValueError):
    """A dataset file violates the wire format; names the offending line."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class Direction(enum.Enum):
    OUTGOING = 1
    INCOMING = -1

    @property
    def sign(self) -> int:
        return self.value


@dataclass(frozen=True, slots=True)
class Packet:
    """One captured datagram, timed in integer microseconds from trace start."""

    timestamp_us: int
    direction: Direction
    size_bytes: int

    def __post_init__(self):
        if self.timestamp_us < 0:
            raise ValueError(f"negative timestamp {self.timestamp_us}")
        if self.size_bytes < 1:
            raise ValueError(f"packet size must be >= 1, got {self.size_bytes}")

    @property
    def signed_size(self) -> int:
        return self.direction.sign * self.size_bytes


@dataclass(frozen=True)
class Trace:
    """An ordered packet sequence with its class label.

    Packets are expected to be sorted by timestamp; constructors in this
    module (loaders, generator, :func:`normalize_trace`) guarantee it.
    """

    packets: tuple[Packet, ...]
    label: str
    monitored: bool

    def __len__(self) -> int:
        return len(self.packets)

    @property
    def total_bytes(self) -> int:
        return sum(p.size_bytes for p in self.packets)


@dataclass(frozen=True)
class Dataset:
    """A trace collection; monitored classes plus background traffic."""

    traces: tuple[Trace, ...]
    monitored_class_count: int
    metadata: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_traces(
        cls, traces: Iterable[Trace], metadata: dict[str, Any] | None = None
    ) -> "Dataset":
        traces = tuple(traces)
        labels = set()
        for i, trace in enumerate(traces):
            if trace.monitored and trace.label == UNMONITORED_LABEL:
                raise ValueError(
                    f"trace {i} is monitored but uses the reserved label "
                    f"{UNMONITORED_LABEL!r}"
                )
            if not trace.monitored and trace.label != UNMONITORED_LABEL:
                raise ValueError(
                    f"trace {i} is unmonitored but labeled {trace.label!r}; "
                    f"expected the reserved label {UNMONITORED_LABEL!r}"
                )
            if trace.monitored:
                labels.add(trace.label)
        return cls(traces, len(labels), dict(metadata or {}))

    def __len__(self) -> int:
        return len(self.traces)


def filter_direction(trace: Trace, direction: Direction) -> Trace:
    """Keep only one traffic direction (an adversary's one-sided view)."""
    packets = tuple(p for p in trace.packets if p.direction is direction)
    return Trace(packets, trace.label, trace.monitored)


def normalize_trace(trace: Trace) -> Trace:
    """Stably sort packets by timestamp and shift the first one to t=0.

    Idempotent: normalizing an already normalized trace is a no-op.
    """
    if not trace.packets:
        return trace
    ordered = sorted(trace.packets, key=lambda p: p.timestamp_us)
    origin = ordered[0].timestamp_us
    if origin == 0 and ordered == list(trace.packets):
        return trace
    packets = tuple(
        Packet(p.timestamp_us - origin, p.direction, p.size_bytes) for p in ordered
    )
    return Trace(packets, trace.label, trace.monitored)


# ---------------------------------------------------------------------------
# Loading / saving


def load_dataset(path, fmt: str = "ndjson") -> Dataset:
    """Load a dataset file, normalizing and sorting every trace.

    Raises DatasetFormatError with the offending line number on malformed
    input, unknown fields/columns, zero-size packets, or empty traces.
    """
    _check_format(fmt)
    if fmt == "ndjson":
        traces = _read_ndjson(path)
    else:
        traces = _read_csv(path)
    return Dataset.from_traces(traces)


def save_dataset(dataset: Dataset, path, fmt: str = "ndjson") -> None:
    """Write a dataset; load(save(d)) reproduces d's traces exactly."""
    _check_format(fmt)
    for i, trace in enumerate(dataset.traces):
        if not trace.packets:
            raise ValueError(
                f"trace {i} (label {trace.label!r}) has no packets; "
                "empty traces are not representable on disk"
            )
    if fmt == "ndjson":
        text = _to_ndjson(dataset)
    else:
        text = _to_csv(dataset)
    atomic_write_text(path, text)


def atomic_write_text(path, text: str) -> None:
    """Write text to path via a same-directory temp file plus rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".pathsplit-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _check_format(fmt: str) -> None:
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def _check_reserved_label(label: str, monitored: bool, line: int) -> None:
    if monitored and label == UNMONITORED_LABEL:
        raise DatasetFormatError(
            f"monitored trace uses the reserved label {UNMONITORED_LABEL!r}", line
        )
    if not monitored and label != UNMONITORED_LABEL:
        raise DatasetFormatError(
            f"unmonitored trace labeled {label!r}; expected {UNMONITORED_LABEL!r}",
            line,
        )


def _trace_from_pairs(
    pairs: Sequence[tuple[int, int]], label: str, monitored: bool, line: int
) -> Trace:
    if not pairs:
        raise DatasetFormatError(f"empty trace (label {label!r})", line)
    for ts, signed in pairs:
        if signed == 0:
            raise DatasetFormatError(f"zero-size packet in trace {label!r}", line)
    ordered = sorted(pairs, key=lambda p: p[0])  # stable: preserves file order on ties
    origin = ordered[0][0]
    packets = tuple(
        Packet(
            ts - origin,
            Direction.OUTGOING if signed > 0 else Direction.INCOMING,
            abs(signed),
        )
        for ts, signed in ordered
    )
    return Trace(packets, label, monitored)


def _read_ndjson(path) -> list[Trace]:
    traces = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"invalid JSON: {exc.msg}", lineno) from None
            if not isinstance(obj, dict):
                raise DatasetFormatError("record is not a JSON object", lineno)
            unknown = sorted(set(obj) - set(NDJSON_FIELDS))
            if unknown:
                raise DatasetFormatError(
                    f"unknown field(s): {', '.join(unknown)}", lineno
                )
            missing = sorted(set(NDJSON_FIELDS) - set(obj))
            if missing:
                raise DatasetFormatError(
                    f"missing field(s): {', '.join(missing)}", lineno
                )
            label, monitored, packets = obj["label"], obj["monitored"], obj["packets"]
            if not isinstance(label, str):
                raise DatasetFormatError("label must be a string", lineno)
            if not isinstance(monitored, bool):
                raise DatasetFormatError("monitored must be a boolean", lineno)
            if not isinstance(packets, list):
                raise DatasetFormatError("packets must be a list", lineno)
            pairs = []
            for entry in packets:
                if (
                    not isinstance(entry, list)
                    or len(entry) != 2
                    or not all(
                        isinstance(v, int) and not isinstance(v, bool) for v in entry
                    )
                ):
                    raise DatasetFormatError(
                        "packet entries must be [timestamp_us, signed_size] "
                        f"integer pairs, got {entry!r}",
                        lineno,
                    )
                pairs.append((entry[0], entry[1]))
            _check_reserved_label(label, monitored, lineno)
            traces.append(_trace_from_pairs(pairs, label, monitored, lineno))
    return traces


def _parse_bool(value: str, line: int) -> bool:
    lowered = value.strip().lower()
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    raise DatasetFormatError(f"monitored must be true/false, got {value!r}", line)


def _parse_int(value: str, column: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise DatasetFormatError(
            f"{column} must be an integer, got {value!r}", line
        ) from None


def _read_csv(path) -> list[Trace]:
    traces = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError("missing header row", 1) from None
        if tuple(header) != CSV_COLUMNS:
            unknown = sorted(set(header) - set(CSV_COLUMNS))
            if unknown:
                raise DatasetFormatError(
                    f"unknown column(s): {', '.join(unknown)}", 1
                )
            raise DatasetFormatError(
                f"header must be exactly {','.join(CSV_COLUMNS)}", 1
            )

        current_id: str | None = None
        label = ""
        monitored = False
        pairs: list[tuple[int, int]] = []
        start_line = 2

        def flush():
            if current_id is not None:
                traces.append(_trace_from_pairs(pairs, label, monitored, start_line))

        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise DatasetFormatError(
                    f"expected {len(CSV_COLUMNS)} columns, got {len(row)}", lineno
                )
            tid, row_label, row_mon_s, ts_s, size_s = row
            row_monitored = _parse_bool(row_mon_s, lineno)
            ts = _parse_int(ts_s, "timestamp_us", lineno)
            signed = _parse_int(size_s, "signed_size", lineno)
            if signed == 0:
                raise DatasetFormatError(
                    f"zero-size packet in trace {tid!r}", lineno
                )
            _check_reserved_label(row_label, row_monitored, lineno)
            if tid != current_id:
                flush()
                current_id, label, monitored = tid, row_label, row_monitored
                pairs, start_line = [], lineno
            elif row_label != label or row_monitored != monitored:
                raise DatasetFormatError(
                    f"trace {tid!r} changes label or monitored flag mid-group",
                    lineno,
                )
            pairs.append((ts, signed))
        flush()
    return traces


def _to_ndjson(dataset: Dataset) -> str:
    lines = []
    for trace in dataset.traces:
        obj = {
            "label": trace.label,
            "monitored": trace.monitored,
            "packets": [[p.timestamp_us, p.signed_size] for p in trace.packets],
        }
        lines.append(json.dumps(obj, ensure_ascii=False, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def _to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for i, trace in enumerate(dataset.traces):
        mon = "true" if trace.monitored else "false"
        for p in trace.packets:
            writer.writerow([i, trace.label, mon, p.timestamp_us, p.signed_size])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Synthetic corpus generator
#
# Classes live on a grid of "cells": a direction-burst cycle shared by
# several classes crossed with a coarse response-size level shared by
# several classes. Cell mates differ mainly in packet count, so the
# undefended corpus is cleanly separable while split-robust statistics
# (burst cycle, size histogram) only narrow a subtrace down to its cell.
# Burst cycles are short and periodic, so any slice of a trace shows one
# of a handful of phases of its group's cycle no matter where a batch or
# time-window boundary cuts. Per-trace pacing jitter keeps total duration
# a weak discriminator.

_BURST_GROUPS = 3
_BURST_BASES = ((1, 5), (2, 8), (3, 11))  # (outgoing run, incoming run)
_SIZE_LEVELS = 3
_COUNT_BASE = 150.0
_COUNT_CELL_RATIO = 2.6  # count step between classes sharing a cell
_COUNT_CELL_JITTER = (1.0, 1.13, 1.27)  # deterministic de-collision across cells
_COUNT_SIGMA = 0.10
_IN_SIZE_LEVELS = (620.0, 950.0, 1280.0)
_IN_SIZE_SIGMA = 110.0
_OUT_SIZE_LEVELS = (130.0, 220.0, 310.0)  # one per burst group
_OUT_SIZE_SIGMA = 35.0
_IAT_MEAN_US = 2000.0  # ~500 packets/second
_IAT_TRACE_SIGMA = 0.22
_MIN_PACKETS = 40

_STREAM_MONITORED = 102
_STREAM_UNMONITORED = 103


def _burst_signs(out_run: int, in_run: int, n: int) -> np.ndarray:
    """Periodic direction cycle: out_run requests then in_run responses."""
    cycle = np.asarray([1] * out_run + [-1] * in_run, dtype=np.int64)
    reps = -(-n // len(cycle))
    return np.tile(cycle, reps)[:n]


def _synth_trace(
    rng: np.random.Generator,
    label: str,
    monitored: bool,
    count_mean: float,
    burst_base: tuple[int, int],
    out_size_mu: float,
    in_size_mu: float,
) -> Trace:
    n = max(_MIN_PACKETS, int(round(count_mean * math.exp(rng.normal(0.0, _COUNT_SIGMA)))))
    signs = _burst_signs(*burst_base, n)
    out_mask = signs > 0
    out_sizes = rng.normal(out_size_mu, _OUT_SIZE_SIGMA, size=n)
    in_sizes = rng.normal(in_size_mu, _IN_SIZE_SIGMA, size=n)
    sizes = np.clip(np.rint(np.where(out_mask, out_sizes, in_sizes)), 64, 1500)
    iat_mu = _IAT_MEAN_US * math.exp(rng.normal(0.0, _IAT_TRACE_SIGMA))
    iats = np.maximum(np.rint(rng.exponential(iat_mu, size=n)), 1).astype(np.int64)
    iats[0] = 0
    times = np.cumsum(iats)
    packets = tuple(
        Packet(int(t), Direction.OUTGOING if o else Direction.INCOMING, int(s))
        for t, o, s in zip(times.tolist(), out_mask.tolist(), sizes.tolist())
    )
    return Trace(packets, label, monitored)


def _background_burst(rng: np.random.Generator) -> tuple[int, int]:
    """Burst cycle for background traffic, kept off the monitored cycles."""
    while True:
        base = (int(rng.integers(1, 5)), int(rng.integers(3, 15)))
        if base not in _BURST_BASES:
            return base


def generate_synthetic(
    classes: int,
    traces_per_class: int,
    unmonitored_count: int = 0,
    seed: int = 0,
) -> Dataset:
    """Generate a deterministic labeled corpus for classifier experiments.

    Each class has a fixed signature (packet count, burst pattern, size
    profile) plus per-trace seeded noise; unmonitored traces draw their
    shape from a broad background distribution. Identical arguments always
    produce an identical dataset.
    """
    if classes < 1:
        raise ValueError("classes must be >= 1")
    if traces_per_class < 1:
        raise ValueError("traces_per_class must be >= 1")
    if unmonitored_count < 0:
        raise ValueError("unmonitored_count must be >= 0")

    traces = []
    cells = _BURST_GROUPS * _SIZE_LEVELS
    for c in range(classes):
        cell = c % cells
        rank = c // cells  # position within the cell's count ladder
        group = cell % _BURST_GROUPS
        level = cell // _BURST_GROUPS
        count_mean = (
            _COUNT_BASE
            * _COUNT_CELL_RATIO**rank
            * _COUNT_CELL_JITTER[cell % len(_COUNT_CELL_JITTER)]
        )
        label = f"class-{c:03d}"
        for t in range(traces_per_class):
            rng = stream_rng(seed, _STREAM_MONITORED, c, t)
            traces.append(
                _synth_trace(
                    rng,
                    label,
                    True,
                    count_mean,
                    _BURST_BASES[group],
                    _OUT_SIZE_LEVELS[group],
                    _IN_SIZE_LEVELS[level],
                )
            )

    for u in range(unmonitored_count):
        rng = stream_rng(seed, _STREAM_UNMONITORED, u)
        count = math.exp(rng.uniform(math.log(150.0), math.log(2400.0)))
        burst_base = _background_burst(rng)
        out_mu = rng.uniform(100.0, 340.0)
        in_mu = rng.uniform(450.0, 1450.0)
        traces.append(
            _synth_trace(rng, UNMONITORED_LABEL, False, count, burst_base, out_mu, in_mu)
        )

    metadata = {
        "generator": {
            "classes": classes,
            "traces_per_class": traces_per_class,
            "unmonitored_count": unmonitored_count,
            "seed": seed,
        }
    }
    return Dataset.from_traces(traces, metadata)
