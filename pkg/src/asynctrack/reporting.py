"""CSV artifacts and the figures rendered alongside them.

CSV files are the reproducibility contract: identical runs produce
byte-identical files. Figures are companions for quick inspection and
carry no such guarantee.
"""

from __future__ import annotations

import csv
import numpy as np

from .cycles import CycleCount
from .simulator import ComputeEvent, DeliverEvent, EventTrace, SendEvent

__all__ = [
    "write_errors_csv",
    "write_events_csv",
    "write_cycles_csv",
    "write_bounds_csv",
    "write_plan_csv",
    "figure_tracking_error",
    "figure_bound_vs_error",
    "figure_plan",
]


def _fmt(x) -> str:
    return repr(float(x))


def write_errors_csv(path, trace: EventTrace, epoch_of_tick) -> None:
    """Per-tick per-agent errors: columns (k, t, agent, error_2inf)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "t", "agent", "error_2inf"])
        for k in range(trace.total_ticks):
            t = int(epoch_of_tick[k])
            for agent in range(trace.n_agents):
                writer.writerow([k, t, agent, _fmt(trace.errors[k, agent])])


def write_events_csv(path, trace: EventTrace) -> None:
    """Event log: columns (k, kind, src, dst, origin_tick)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "kind", "src", "dst", "origin_tick"])
        for ev in trace.events:
            if isinstance(ev, ComputeEvent):
                writer.writerow([ev.tick, "compute", ev.agent, -1, ev.state_index])
            elif isinstance(ev, SendEvent):
                writer.writerow([ev.tick, "send", ev.src, ev.dst, ev.origin])
            elif isinstance(ev, DeliverEvent):
                writer.writerow([ev.tick, "deliver", ev.src, ev.dst, ev.origin])


def write_cycles_csv(path, cycles: CycleCount) -> None:
    """Cycle counts: columns (t, c_t, completion_ticks)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "c_t", "completion_ticks"])
        for t, (count, ticks) in enumerate(zip(cycles.counts, cycles.completion_ticks)):
            writer.writerow([t, count, ";".join(str(k) for k in ticks)])


def write_bounds_csv(path, measured, bounds) -> None:
    """Bound check: columns (t, measured_max_error, theorem2_bound)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "measured_max_error", "theorem2_bound"])
        for t, (m, b) in enumerate(zip(measured, bounds)):
            writer.writerow([t, _fmt(m), _fmt(b)])


def write_plan_csv(path, c_real, c_int) -> None:
    """Cycle plan: columns (t, c_real, c_int)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "c_real", "c_int"])
        for t, (cr, ci) in enumerate(zip(c_real, c_int)):
            writer.writerow([t, _fmt(cr), int(ci)])


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def figure_tracking_error(path, trace: EventTrace, eta, title="Tracking error") -> None:
    """Per-agent error curves over ticks with epoch switches marked."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ticks = np.arange(trace.total_ticks)
    for agent in range(trace.n_agents):
        ax.semilogy(ticks, np.maximum(trace.errors[:, agent], 1e-16), lw=0.8)
    for boundary in eta[:-1]:
        ax.axvline(boundary, color="0.8", lw=0.6, zorder=0)
    ax.set_xlabel("tick k")
    ax.set_ylabel(r"$\|u^i(k) - \hat u^t\|_{2,\infty}$")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def figure_bound_vs_error(path, measured, bounds) -> None:
    """Measured worst-agent boundary error against the closed-form bound."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ts = np.arange(len(measured))
    ax.semilogy(ts, bounds, "s--", label="bound", color="tab:red")
    ax.semilogy(ts, np.maximum(np.asarray(measured), 1e-16), "o-",
                label="measured max error", color="tab:blue")
    ax.set_xlabel("epoch t")
    ax.set_ylabel("error at epoch end")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def figure_plan(path, c_real, c_int) -> None:
    """Budget allocation across epochs: real optimum and integer plan."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ts = np.arange(len(c_real))
    ax.bar(ts - 0.2, c_real, width=0.4, label="real optimum")
    ax.bar(ts + 0.2, c_int, width=0.4, label="integer plan")
    ax.set_xlabel("epoch t")
    ax.set_ylabel("cycles")
    ax.set_xticks(ts)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
