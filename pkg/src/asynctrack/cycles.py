"""Detection of completed communication cycles in an event trace.

A cycle is complete once every agent has computed at least one update
inside the current scan window and some such update of each agent has
been received by all other agents. Cycles never span epoch boundaries,
and the scan window after a completion starts at the next tick, so each
epoch's ticks are partitioned into disjoint cycle intervals.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

from .simulator import ComputeEvent, DeliverEvent, EventTrace

__all__ = ["CycleCount", "detect_cycles"]

_INF = float("inf")


@dataclass
class CycleCount:
    """Per-epoch completed-cycle counts and their completion ticks."""

    counts: list
    completion_ticks: list

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    def __getitem__(self, t: int) -> int:
        return self.counts[t]


def _epoch_candidates(trace: EventTrace, n_agents: int, lo: int, hi: int):
    """Per agent, the (compute tick, full-delivery tick) pairs in [lo, hi).

    The full-delivery tick of a compute is the earliest tick by which its
    value has reached every other agent, with both the compute and all
    deliveries inside the window; infinity when it never fully arrives.
    """
    computes = [[] for _ in range(n_agents)]
    first_delivery = {}  # (src, origin, dst) -> earliest in-window deliver tick
    for ev in trace.events:
        if isinstance(ev, ComputeEvent):
            if lo <= ev.tick < hi:
                computes[ev.agent].append((ev.tick, ev.state_index))
        elif isinstance(ev, DeliverEvent):
            if lo <= ev.tick < hi:
                key = (ev.src, ev.origin, ev.dst)
                if key not in first_delivery or ev.tick < first_delivery[key]:
                    first_delivery[key] = ev.tick

    candidates = []
    for i in range(n_agents):
        cands = []
        for tick_c, origin in sorted(computes[i]):
            if n_agents == 1:
                cands.append((tick_c, tick_c))
                continue
            full = tick_c
            for dst in range(n_agents):
                if dst == i:
                    continue
                d = first_delivery.get((i, origin, dst))
                if d is None:
                    full = _INF
                    break
                full = max(full, d)
            cands.append((tick_c, full))
        candidates.append(cands)
    return candidates


def detect_cycles(trace: EventTrace, n_agents: int = None) -> CycleCount:
    """Greedy earliest-completion cycle count per epoch.

    Scanning each epoch window from its first tick: a cycle completes at
    the earliest tick by which, for every agent, some compute at or
    after the window start has been delivered to all other agents; the
    next window starts at the following tick. Earliest completion makes
    the boundaries as early as possible, so the count is the maximum
    number of disjoint sequential cycles the trace supports.
    """
    if n_agents is None:
        n_agents = trace.n_agents
    counts = []
    completion_ticks = []
    for lo, hi in trace.epoch_windows():
        candidates = _epoch_candidates(trace, n_agents, lo, hi)
        # suffix minima of full-delivery ticks over computes sorted by tick
        ticks_per_agent = []
        suffix_min = []
        for cands in candidates:
            ticks = [c[0] for c in cands]
            mins = [0.0] * len(cands)
            running = _INF
            for idx in range(len(cands) - 1, -1, -1):
                running = min(running, cands[idx][1])
                mins[idx] = running
            ticks_per_agent.append(ticks)
            suffix_min.append(mins)

        ticks_found = []
        start = lo
        while True:
            completion = -1
            for i in range(n_agents):
                idx = bisect.bisect_left(ticks_per_agent[i], start)
                if idx >= len(ticks_per_agent[i]) or suffix_min[i][idx] == _INF:
                    completion = _INF
                    break
                completion = max(completion, suffix_min[i][idx])
            if completion == _INF or completion < 0:
                break
            ticks_found.append(int(completion))
            start = int(completion) + 1
        counts.append(len(ticks_found))
        completion_ticks.append(ticks_found)
    return CycleCount(counts=counts, completion_ticks=completion_ticks)
