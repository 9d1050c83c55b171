"""Apply a path assignment to a trace: the per-path views an adversary sees.

Splitting is an exact partition: every packet lands in exactly one
subtrace, in original order, with its parent-clock timestamp preserved
(an optional flag re-normalizes a subtrace to its own first packet).
Both directions follow the client's path choice, since migration-capable
servers answer on the most recently used client path. merge() is the
inverse used for conservation checks.
"""

from __future__ import annotations

from dataclasses import dataclass

from .scheduler import PathAssignment, SchedulerConfig, schedule
from .traces import Dataset, Packet, Trace


@dataclass(frozen=True)
class SubTrace:
    """The slice of one trace visible on one path."""

    path_index: int
    packets: tuple[Packet, ...]
    label: str
    monitored: bool

    def to_trace(self, normalize: bool = False) -> Trace:
        """View as a plain Trace, optionally rebasing the clock to the
        subtrace's own first packet."""
        packets = self.packets
        if normalize and packets:
            origin = packets[0].timestamp_us
            if origin:
                packets = tuple(
                    Packet(p.timestamp_us - origin, p.direction, p.size_bytes)
                    for p in packets
                )
        return Trace(packets, self.label, self.monitored)


def split(trace: Trace, assignment: PathAssignment) -> list[SubTrace]:
    """Partition a trace into one subtrace per path (empties included)."""
    if len(assignment.path_per_packet) != len(trace.packets):
        raise ValueError(
            f"assignment length {len(assignment.path_per_packet)} does not "
            f"match trace length {len(trace.packets)}"
        )
    buckets: list[list[Packet]] = [[] for _ in range(assignment.n_paths)]
    for packet, path in zip(trace.packets, assignment.path_per_packet):
        buckets[path].append(packet)
    return [
        SubTrace(i, tuple(bucket), trace.label, trace.monitored)
        for i, bucket in enumerate(buckets)
    ]


def merge(subtraces: list[SubTrace]) -> Trace:
    """Recombine subtraces of one parent by timestamp.

    Ties break stably by path index then intra-path order, which restores
    the parent exactly whenever equal-timestamp packets left the splitter
    in that order (always true for strictly increasing timestamps).
    """
    if not subtraces:
        raise ValueError("nothing to merge")
    label = subtraces[0].label
    monitored = subtraces[0].monitored
    keyed = [
        (p.timestamp_us, sub.path_index, rank, p)
        for sub in subtraces
        for rank, p in enumerate(sub.packets)
    ]
    keyed.sort(key=lambda item: item[:3])
    return Trace(tuple(item[3] for item in keyed), label, monitored)


def split_dataset(
    dataset: Dataset, config: SchedulerConfig, drop_empty: bool = True
) -> Dataset:
    """Split every trace; each subtrace becomes a separate labeled trace.

    Subtraces inherit their parent's label and monitored flag. Empty
    subtraces (a path that saw nothing) are dropped unless drop_empty is
    False. Output ordering is (parent index, path index); deterministic
    under config.seed.
    """
    out: list[Trace] = []
    for index, trace in enumerate(dataset.traces):
        assignment = schedule(trace, config, trace_index=index)
        for sub in split(trace, assignment):
            if drop_empty and not sub.packets:
                continue
            out.append(sub.to_trace())
    metadata = dict(dataset.metadata)
    metadata["split"] = {
        "config": config.to_dict(),
        "drop_empty": drop_empty,
        "parent_traces": len(dataset.traces),
    }
    return Dataset.from_traces(out, metadata)
