"""Deterministic discrete-event execution of the asynchronous update law.

Logical time advances in integer ticks. Within a tick, message
deliveries are applied strictly before gradient computes; a computing
agent updates only its own block of its own local copy, then may
broadcast the new block to every other agent over per-link FIFO channels
with arbitrary finite delays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .blocks import PartitionedVector
from .objectives import TimeVaryingProblem

__all__ = [
    "CommRule",
    "DelayRule",
    "Schedule",
    "AgentState",
    "ComputeEvent",
    "SendEvent",
    "DeliverEvent",
    "EventTrace",
    "AuditReport",
    "ErrorSeries",
    "run",
    "audit_trace",
    "error_series",
]


@dataclass(frozen=True)
class CommRule:
    """When a computing agent broadcasts its new block.

    ``fixed``: broadcast with constant probability ``p`` (p = 1 means
    always). ``uniform``: the probability itself is redrawn every tick
    per agent from ``U(low, high)``.
    """

    kind: str
    p: float = 1.0
    low: float = 0.0
    high: float = 0.0

    def __post_init__(self):
        if self.kind == "fixed":
            if not 0.0 < self.p <= 1.0:
                raise ValueError(f"communicate probability must be in (0, 1], got {self.p}")
        elif self.kind == "uniform":
            if not 0.0 < self.low <= self.high <= 1.0:
                raise ValueError(
                    f"uniform communicate bounds must satisfy 0 < low <= high <= 1, "
                    f"got [{self.low}, {self.high}]"
                )
        else:
            raise ValueError(f"unknown communicate rule {self.kind!r}")

    @classmethod
    def always(cls) -> "CommRule":
        return cls(kind="fixed", p=1.0)

    @classmethod
    def fixed(cls, p: float) -> "CommRule":
        return cls(kind="fixed", p=p)

    @classmethod
    def uniform(cls, low: float, high: float) -> "CommRule":
        return cls(kind="uniform", p=0.0, low=low, high=high)


@dataclass(frozen=True)
class DelayRule:
    """Extra transit ticks beyond the mandatory one-tick latency.

    A message sent at tick ``k`` is delivered at ``k + 1 + extra`` where
    ``extra`` is 0 (``zero``), a constant (``fixed``), or a uniform
    integer draw from ``[low, high]`` (``uniform``); delivery times are
    then clamped per link so they never decrease (FIFO).
    """

    kind: str
    ticks: int = 0
    low: int = 0
    high: int = 0

    def __post_init__(self):
        if self.kind == "zero":
            pass
        elif self.kind == "fixed":
            if self.ticks < 0:
                raise ValueError("fixed delay must be nonnegative")
        elif self.kind == "uniform":
            if not 0 <= self.low <= self.high:
                raise ValueError(
                    f"uniform delay bounds must satisfy 0 <= low <= high, "
                    f"got [{self.low}, {self.high}]"
                )
        else:
            raise ValueError(f"unknown delay rule {self.kind!r}")

    @classmethod
    def zero(cls) -> "DelayRule":
        return cls(kind="zero")

    @classmethod
    def fixed(cls, ticks: int) -> "DelayRule":
        return cls(kind="fixed", ticks=ticks)

    @classmethod
    def uniform(cls, low: int, high: int) -> "DelayRule":
        return cls(kind="uniform", low=low, high=high)


@dataclass(frozen=True)
class Schedule:
    """Who computes and communicates when.

    ``synchronous`` mode: every agent computes at every tick.
    ``bernoulli`` mode: each agent computes with probability
    ``p_compute`` per tick (0 is allowed as a pathological test
    override; the long-run guarantee needs it positive).
    """

    mode: str
    seed: int = 0
    p_compute: float = 1.0
    comm: CommRule = field(default_factory=CommRule.always)
    delay: DelayRule = field(default_factory=DelayRule.zero)

    def __post_init__(self):
        if self.mode not in ("synchronous", "bernoulli"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if not 0.0 <= self.p_compute <= 1.0:
            raise ValueError(f"compute probability must be in [0, 1], got {self.p_compute}")


@dataclass
class AgentState:
    """Snapshot of one agent: full local copy plus per-block provenance.

    ``provenance[j]`` is the state index at which agent ``j`` computed
    the block value this agent holds; -1 marks the initial value.
    """

    agent: int
    local_copy: np.ndarray
    provenance: np.ndarray


@dataclass(frozen=True)
class ComputeEvent:
    tick: int
    epoch: int
    agent: int
    state_index: int  # the updated value is the agent's state at this index
    new_block: np.ndarray


@dataclass(frozen=True)
class SendEvent:
    tick: int
    src: int
    dst: int
    origin: int  # state index of the compute whose value is carried
    deliver_tick: int
    payload: np.ndarray


@dataclass(frozen=True)
class DeliverEvent:
    tick: int
    src: int
    dst: int
    origin: int


@dataclass
class EventTrace:
    """Full record of a run: events plus per-tick error snapshots.

    ``errors[k, i]`` is the block-maximum distance of agent ``i``'s
    pre-tick state ``u^i(k)`` from the minimizer of the epoch active at
    tick ``k``. ``boundary_errors[t, i]`` measures the state reached at
    the end of epoch ``t`` against that same epoch's minimizer (the
    pre-switch error).
    """

    block_dims: tuple
    kappas: tuple
    events: list = field(default_factory=list)
    errors: Optional[np.ndarray] = None
    boundary_errors: Optional[np.ndarray] = None
    final_states: Optional[list] = None
    problem_signature: Optional[str] = None

    @property
    def n_agents(self) -> int:
        return len(self.block_dims)

    @property
    def total_ticks(self) -> int:
        return int(sum(self.kappas))

    @property
    def eta(self) -> list:
        out, total = [], 0
        for k in self.kappas:
            total += int(k)
            out.append(total)
        return out

    def epoch_windows(self) -> list:
        """Per-epoch half-open tick windows [start, end)."""
        out, start = [], 0
        for k in self.kappas:
            out.append((start, start + int(k)))
            start += int(k)
        return out


def _row_block_max(diff: np.ndarray, slices: list) -> np.ndarray:
    """Block-maximum norm of each row of a matrix of difference vectors."""
    norms = np.stack(
        [np.sqrt((diff[:, s] ** 2).sum(axis=1)) for s in slices], axis=1
    )
    return norms.max(axis=1)


def run(problem: TimeVaryingProblem, schedule: Schedule, initial=None,
        record_events: bool = True) -> EventTrace:
    """Execute the asynchronous update law over the full horizon.

    Per tick, in order: scheduled deliveries are applied (updating the
    receiver's copy and provenance), then every agent with a compute
    event projects a block gradient step onto its box slice and, gated
    by the communicate rule, broadcasts the new block with per-link
    delays clamped to keep deliveries in send order. Deterministic given
    (problem, schedule, initial).

    Parameters
    ----------
    initial : None, array, PartitionedVector, or list thereof
        Starting local copy; a single vector is shared by all agents,
        and everything is projected onto the box first. Defaults to the
        projected origin.
    """
    if not problem.constants:
        raise ValueError("problem has no epoch constants; assemble it first")
    partition = problem.partition
    n = partition.total_dim
    N = partition.n_blocks
    slices = partition.slices()
    box = problem.box
    kappas = problem.kappas
    total_ticks = problem.total_ticks
    eta = problem.eta
    u_hats = np.stack([c.minimizer.data for c in problem.constants])

    # initial copies: shared projected vector unless overridden per agent
    if initial is None:
        shared = box.clip(np.zeros(n))
        U = np.tile(shared, (N, 1))
    else:
        if isinstance(initial, PartitionedVector):
            initial = initial.data
        if isinstance(initial, np.ndarray) and initial.ndim == 1:
            U = np.tile(box.clip(np.asarray(initial, dtype=float)), (N, 1))
        else:
            rows = [v.data if isinstance(v, PartitionedVector) else np.asarray(v, dtype=float)
                    for v in initial]
            if len(rows) != N:
                raise ValueError(f"need one initial vector per agent ({N}), got {len(rows)}")
            U = np.stack([box.clip(r) for r in rows])
    tau = np.full((N, N), -1, dtype=int)

    rng = np.random.default_rng(schedule.seed)
    comm = schedule.comm
    delay = schedule.delay
    synchronous = schedule.mode == "synchronous"

    events: list = []
    errors = np.empty((total_ticks, N))
    boundary_errors = np.empty((len(kappas), N))
    pending: dict = {}  # deliver tick -> [(src, dst, origin, payload), ...]
    link_floor = np.zeros((N, N), dtype=int)  # FIFO clamp per directed link

    epoch_idx = 0
    for k in range(total_ticks):
        if k >= eta[epoch_idx]:
            epoch_idx += 1
        epoch = problem.epochs[epoch_idx]
        gamma = problem.constants[epoch_idx].stepsize

        errors[k] = _row_block_max(U - u_hats[epoch_idx], slices)

        # deliveries scheduled for this tick, in send order
        for src, dst, origin, payload in pending.pop(k, ()):
            U[dst, slices[src]] = payload
            tau[dst, src] = origin
            if record_events:
                events.append(DeliverEvent(tick=k, src=src, dst=dst, origin=origin))

        # compute phase: disjoint own-block updates on post-delivery state
        if synchronous:
            compute_mask = np.ones(N, dtype=bool)
        elif schedule.p_compute == 0.0:
            compute_mask = np.zeros(N, dtype=bool)
        else:
            compute_mask = rng.random(N) < schedule.p_compute

        if comm.kind == "uniform":
            p_comm = rng.uniform(comm.low, comm.high, N)
            comm_mask = rng.random(N) < p_comm
        elif comm.p >= 1.0:
            comm_mask = np.ones(N, dtype=bool)
        else:
            comm_mask = rng.random(N) < comm.p

        for i in range(N):
            if not compute_mask[i]:
                continue
            g = epoch.gradient(U[i])
            si = slices[i]
            new_block = box.clip_block(U[i, si] - gamma * g[si], i)
            U[i, si] = new_block
            tau[i, i] = k + 1
            frozen = new_block.copy()
            frozen.setflags(write=False)
            if record_events:
                events.append(ComputeEvent(
                    tick=k, epoch=epoch_idx, agent=i,
                    state_index=k + 1, new_block=frozen,
                ))
            if not comm_mask[i]:
                continue
            for dst in range(N):
                if dst == i:
                    continue
                if delay.kind == "zero":
                    extra = 0
                elif delay.kind == "fixed":
                    extra = delay.ticks
                else:
                    extra = int(rng.integers(delay.low, delay.high + 1))
                deliver_at = max(k + 1 + extra, link_floor[i, dst])
                link_floor[i, dst] = deliver_at
                pending.setdefault(deliver_at, []).append((i, dst, k + 1, frozen))
                if record_events:
                    events.append(SendEvent(
                        tick=k, src=i, dst=dst, origin=k + 1,
                        deliver_tick=deliver_at, payload=frozen,
                    ))

        if k + 1 == eta[epoch_idx]:
            boundary_errors[epoch_idx] = _row_block_max(U - u_hats[epoch_idx], slices)

    assert all(box.contains(U[i], tol=1e-12) for i in range(N)), \
        "iterates left the box despite projection"

    final_states = [AgentState(agent=i, local_copy=U[i].copy(), provenance=tau[i].copy())
                    for i in range(N)]
    return EventTrace(
        block_dims=partition.block_dims,
        kappas=tuple(kappas),
        events=events,
        errors=errors,
        boundary_errors=boundary_errors,
        final_states=final_states,
        problem_signature=problem.signature(),
    )


# ---------------------------------------------------------------------------
# Trace auditing
# ---------------------------------------------------------------------------

@dataclass
class AuditReport:
    ok: bool
    violations: list

    @property
    def first_violation(self) -> Optional[str]:
        return self.violations[0] if self.violations else None


def audit_trace(trace: EventTrace, require_epoch_computes: bool = False) -> AuditReport:
    """Validate FIFO delivery, value provenance, and compute coverage.

    Checks that deliveries on each directed link match that link's sends
    in order with nondecreasing delivery ticks and at least one tick of
    transit; that every sent payload equals the value its origin compute
    produced; and, when ``require_epoch_computes`` is set (schedules
    that guarantee computes), that every agent computes in every epoch
    window. Violations are collected rather than raised.
    """
    violations = []
    computed_value = {}  # (agent, state_index) -> block value
    computes_in_epoch = {}  # (agent, epoch) -> count
    windows = trace.epoch_windows()

    def epoch_of(k):
        for t, (lo, hi) in enumerate(windows):
            if lo <= k < hi:
                return t
        return None

    sends = {}
    delivers = {}
    for ev in trace.events:
        if isinstance(ev, ComputeEvent):
            computed_value[(ev.agent, ev.state_index)] = ev.new_block
            t = epoch_of(ev.tick)
            if t is not None:
                computes_in_epoch[(ev.agent, t)] = computes_in_epoch.get((ev.agent, t), 0) + 1
        elif isinstance(ev, SendEvent):
            sends.setdefault((ev.src, ev.dst), []).append(ev)
        elif isinstance(ev, DeliverEvent):
            delivers.setdefault((ev.src, ev.dst), []).append(ev)

    for link, dl in delivers.items():
        sl = sends.get(link, [])
        if len(dl) > len(sl):
            violations.append(
                f"link {link[0]}->{link[1]}: {len(dl)} deliveries but only "
                f"{len(sl)} sends"
            )
            continue
        last_tick = None
        for r, d in enumerate(dl):
            s = sl[r]
            if d.origin != s.origin:
                violations.append(
                    f"link {link[0]}->{link[1]}: delivery {r} has origin "
                    f"{d.origin} but the matching send (FIFO order) carries "
                    f"origin {s.origin}"
                )
            if d.tick < s.tick + 1:
                violations.append(
                    f"link {link[0]}->{link[1]}: delivery at tick {d.tick} "
                    f"precedes send tick {s.tick} + 1"
                )
            if last_tick is not None and d.tick < last_tick:
                violations.append(
                    f"link {link[0]}->{link[1]}: delivery tick {d.tick} "
                    f"before previous delivery tick {last_tick} (FIFO violation)"
                )
            last_tick = d.tick

    for link, sl in sends.items():
        last_origin = None
        for s in sl:
            value = computed_value.get((s.src, s.origin))
            if value is None:
                violations.append(
                    f"link {link[0]}->{link[1]}: send at tick {s.tick} carries "
                    f"origin {s.origin} but agent {s.src} has no compute at "
                    f"that state index"
                )
            elif not np.array_equal(value, s.payload):
                violations.append(
                    f"link {link[0]}->{link[1]}: payload sent at tick {s.tick} "
                    f"differs from the value agent {s.src} computed at state "
                    f"index {s.origin}"
                )
            if last_origin is not None and s.origin < last_origin:
                violations.append(
                    f"link {link[0]}->{link[1]}: send origins decrease "
                    f"({last_origin} then {s.origin})"
                )
            last_origin = s.origin

    if require_epoch_computes:
        for t in range(len(windows)):
            for i in range(trace.n_agents):
                if computes_in_epoch.get((i, t), 0) == 0:
                    violations.append(
                        f"agent {i} never computes during epoch {t} although "
                        f"the schedule guarantees computes"
                    )

    return AuditReport(ok=not violations, violations=violations)


# ---------------------------------------------------------------------------
# Error series extraction
# ---------------------------------------------------------------------------

@dataclass
class ErrorSeries:
    """Per-tick and per-epoch-boundary tracking errors.

    ``per_tick[k, i]`` compares agent ``i``'s pre-tick state at ``k``
    with the active epoch's minimizer; ``boundary[t, i]`` is the
    pre-switch error at the end of epoch ``t``.
    """

    epoch_of_tick: np.ndarray
    per_tick: np.ndarray
    boundary: np.ndarray

    @property
    def max_boundary(self) -> np.ndarray:
        """Worst-agent error at each epoch boundary."""
        return self.boundary.max(axis=1)


def error_series(trace: EventTrace, problem: TimeVaryingProblem) -> ErrorSeries:
    """Extract the recorded error series, validating trace/problem match."""
    if trace.errors is None or trace.boundary_errors is None:
        raise ValueError("trace carries no error snapshots")
    if trace.problem_signature != problem.signature():
        raise ValueError("trace was produced by a different problem")
    epoch_of_tick = np.searchsorted(np.array(problem.eta), np.arange(trace.total_ticks),
                                    side="right")
    return ErrorSeries(
        epoch_of_tick=epoch_of_tick,
        per_tick=trace.errors,
        boundary=trace.boundary_errors,
    )
