"""Experiment configuration: a strict YAML schema and builders.

One file drives a whole experiment. Unknown keys are errors — silent
typos in experiment configs destroy reproducibility — and all
randomness flows from exactly two named seeds: the problem seed and the
schedule seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .objectives import (
    TimeVaryingProblem,
    assemble_problem,
    generate_feedback_problem,
    generate_quadratic_problem,
    quadratic_epoch,
)
from .blocks import BoxSet, Partition
from .simulator import CommRule, DelayRule, Schedule

__all__ = ["ExperimentConfig", "load_config", "save_config", "build_problem", "build_schedule"]

_TOP_KEYS = {"problem", "schedule", "epochs", "stepsize_fraction", "outputs", "planner"}
_PROBLEM_KEYS = {
    "kind", "seed", "agents", "block_dims", "horizon", "drift_scale",
    "box_half_width", "coupling", "reference", "noise_std", "matrices",
}
_SCHEDULE_KEYS = {"mode", "seed", "p_compute", "communicate", "delay"}
_COMM_KEYS = {"kind", "p", "low", "high"}
_DELAY_KEYS = {"kind", "ticks", "low", "high"}
_EPOCH_KEYS = {"ticks"}
_PLANNER_KEYS = {"budget", "c_min", "rho", "enforce"}


def _reject_unknown(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(section).__name__}")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _positive_int(value, where: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(f"{where} must be a positive integer, got {value!r}")
    return value


@dataclass
class ExperimentConfig:
    """Validated experiment description; see the README for the schema."""

    problem: dict
    schedule: dict
    epochs: dict = field(default_factory=lambda: {"ticks": 50})
    stepsize_fraction: float = 0.5
    outputs: str = "out"
    planner: dict = None

    def to_dict(self) -> dict:
        out = {
            "problem": dict(self.problem),
            "schedule": dict(self.schedule),
            "epochs": dict(self.epochs),
            "stepsize_fraction": self.stepsize_fraction,
            "outputs": self.outputs,
        }
        if self.planner is not None:
            out["planner"] = dict(self.planner)
        return out


def _validate_problem(section: dict) -> dict:
    _reject_unknown(section, _PROBLEM_KEYS, "problem")
    kind = section.get("kind")
    if kind not in ("quadratic", "feedback", "explicit"):
        raise ConfigError(
            f"problem.kind must be one of quadratic, feedback, explicit; got {kind!r}"
        )
    out = dict(section)
    if kind == "quadratic":
        out.setdefault("seed", 0)
        out.setdefault("drift_scale", 1.0)
        out.setdefault("box_half_width", 10.0)
        if "agents" not in out and "block_dims" not in out:
            raise ConfigError("quadratic problem needs agents or block_dims")
        out.setdefault("horizon", 9)
        for bad in ("coupling", "reference", "noise_std", "matrices"):
            if bad in out:
                raise ConfigError(f"problem.{bad} is not a quadratic-problem key")
    elif kind == "feedback":
        out.setdefault("seed", 0)
        out.setdefault("noise_std", 0.0)
        out.setdefault("box_half_width", 10.0)
        for key in ("coupling", "reference"):
            if key not in out:
                raise ConfigError(f"feedback problem needs problem.{key}")
        if not isinstance(out["reference"], (list, tuple)) or not out["reference"]:
            raise ConfigError("problem.reference must be a non-empty list")
        if "horizon" in out and out["horizon"] != len(out["reference"]) - 1:
            raise ConfigError(
                "problem.horizon disagrees with the reference trajectory length"
            )
        if "agents" not in out and "block_dims" not in out:
            raise ConfigError("feedback problem needs agents or block_dims")
        if float(out["noise_std"]) < 0:
            raise ConfigError("problem.noise_std must be nonnegative")
        for bad in ("drift_scale", "matrices"):
            if bad in out:
                raise ConfigError(f"problem.{bad} is not a feedback-problem key")
    else:  # explicit
        if "matrices" not in out or not isinstance(out["matrices"], list) or not out["matrices"]:
            raise ConfigError("explicit problem needs a non-empty problem.matrices list")
        out.setdefault("box_half_width", 10.0)
        for i, entry in enumerate(out["matrices"]):
            _reject_unknown(entry, {"Q", "q"}, f"problem.matrices[{i}]")
            if "Q" not in entry:
                raise ConfigError(f"problem.matrices[{i}] needs a Q matrix")
        if "block_dims" not in out:
            raise ConfigError("explicit problem needs block_dims")
        for bad in ("seed", "drift_scale", "coupling", "reference", "noise_std", "horizon"):
            if bad in out:
                raise ConfigError(f"problem.{bad} is not an explicit-problem key")
    return out


def _validate_schedule(section: dict) -> dict:
    _reject_unknown(section, _SCHEDULE_KEYS, "schedule")
    out = dict(section)
    mode = out.get("mode")
    if mode not in ("synchronous", "bernoulli"):
        raise ConfigError(
            f"schedule.mode must be synchronous or bernoulli, got {mode!r}"
        )
    out.setdefault("seed", 0)
    out.setdefault("p_compute", 1.0)
    p = out["p_compute"]
    if not isinstance(p, (int, float)) or not 0.0 < float(p) <= 1.0:
        raise ConfigError(f"schedule.p_compute must lie in (0, 1], got {p!r}")
    comm = out.setdefault("communicate", {"kind": "fixed", "p": 1.0})
    _reject_unknown(comm, _COMM_KEYS, "schedule.communicate")
    if comm.get("kind") == "fixed":
        pc = comm.setdefault("p", 1.0)
        if not 0.0 < float(pc) <= 1.0:
            raise ConfigError(f"schedule.communicate.p must lie in (0, 1], got {pc!r}")
    elif comm.get("kind") == "uniform":
        if "low" not in comm or "high" not in comm:
            raise ConfigError("uniform communicate rule needs low and high")
        if not 0.0 < float(comm["low"]) <= float(comm["high"]) <= 1.0:
            raise ConfigError("uniform communicate bounds must satisfy 0 < low <= high <= 1")
    else:
        raise ConfigError(
            f"schedule.communicate.kind must be fixed or uniform, got {comm.get('kind')!r}"
        )
    delay = out.setdefault("delay", {"kind": "zero"})
    _reject_unknown(delay, _DELAY_KEYS, "schedule.delay")
    if delay.get("kind") == "zero":
        pass
    elif delay.get("kind") == "fixed":
        if int(delay.get("ticks", -1)) < 0:
            raise ConfigError("fixed delay needs nonnegative ticks")
    elif delay.get("kind") == "uniform":
        if "low" not in delay or "high" not in delay:
            raise ConfigError("uniform delay rule needs low and high")
        if not 0 <= int(delay["low"]) <= int(delay["high"]):
            raise ConfigError("uniform delay bounds must satisfy 0 <= low <= high")
    else:
        raise ConfigError(
            f"schedule.delay.kind must be zero, fixed, or uniform, got {delay.get('kind')!r}"
        )
    return out


def _validate_epochs(section: dict) -> dict:
    _reject_unknown(section, _EPOCH_KEYS, "epochs")
    out = dict(section)
    ticks = out.setdefault("ticks", 50)
    if isinstance(ticks, list):
        if not ticks:
            raise ConfigError("epochs.ticks list is empty")
        for k in ticks:
            _positive_int(k, "epochs.ticks entries")
    else:
        _positive_int(ticks, "epochs.ticks")
    return out


def _validate_planner(section: dict) -> dict:
    _reject_unknown(section, _PLANNER_KEYS, "planner")
    out = dict(section)
    if "budget" in out:
        _positive_int(out["budget"], "planner.budget")
    out.setdefault("c_min", 0)
    if out["c_min"] not in (0, 1):
        raise ConfigError(f"planner.c_min must be 0 or 1, got {out['c_min']!r}")
    if "rho" in out:
        rho = out["rho"]
        if isinstance(rho, str):
            if rho not in ("inf", ".inf", "infinity"):
                raise ConfigError(f"planner.rho must be a positive number or 'inf', got {rho!r}")
            out["rho"] = float("inf")
        elif not isinstance(rho, (int, float)) or float(rho) <= 0:
            raise ConfigError(f"planner.rho must be positive, got {rho!r}")
    out.setdefault("enforce", False)
    if not isinstance(out["enforce"], bool):
        raise ConfigError("planner.enforce must be a boolean")
    if "budget" not in out and "rho" not in out:
        raise ConfigError("planner section needs a budget, a rho target, or both")
    return out


def parse_config(raw: dict) -> ExperimentConfig:
    _reject_unknown(raw, _TOP_KEYS, "the top level")
    for key in ("problem", "schedule"):
        if key not in raw:
            raise ConfigError(f"config needs a {key} section")
    zeta = raw.get("stepsize_fraction", 0.5)
    if not isinstance(zeta, (int, float)) or not 0.0 < float(zeta) < 1.0:
        raise ConfigError(f"stepsize_fraction must lie in (0, 1), got {zeta!r}")
    return ExperimentConfig(
        problem=_validate_problem(raw["problem"]),
        schedule=_validate_schedule(raw["schedule"]),
        epochs=_validate_epochs(raw.get("epochs", {"ticks": 50})),
        stepsize_fraction=float(zeta),
        outputs=str(raw.get("outputs", "out")),
        planner=_validate_planner(raw["planner"]) if "planner" in raw else None,
    )


def load_config(path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a mapping")
    return parse_config(raw)


def save_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=True))


def _kappas_for(config: ExperimentConfig, horizon: int):
    ticks = config.epochs["ticks"]
    if isinstance(ticks, list):
        if len(ticks) != horizon + 1:
            raise ConfigError(
                f"epochs.ticks lists {len(ticks)} epochs but the problem has {horizon + 1}"
            )
        return [int(k) for k in ticks]
    return int(ticks)


def build_problem(config: ExperimentConfig) -> TimeVaryingProblem:
    """Materialize the problem section into an assembled problem."""
    p = config.problem
    kind = p["kind"]
    zeta = config.stepsize_fraction
    if kind == "quadratic":
        block_dims = p.get("block_dims")
        agents = p.get("agents", len(block_dims) if block_dims else None)
        horizon = int(p["horizon"])
        return generate_quadratic_problem(
            n_agents=int(agents), block_dims=block_dims, horizon=horizon,
            seed=int(p["seed"]), drift_scale=float(p["drift_scale"]),
            kappa=_kappas_for(config, horizon),
            box_half_width=float(p["box_half_width"]),
            stepsize_fraction=zeta,
        )
    if kind == "feedback":
        block_dims = p.get("block_dims")
        agents = p.get("agents", len(block_dims) if block_dims else None)
        horizon = len(p["reference"]) - 1
        return generate_feedback_problem(
            n_agents=int(agents), coupling=p["coupling"], reference=p["reference"],
            block_dims=block_dims, seed=int(p["seed"]),
            noise_std=float(p["noise_std"]),
            kappa=_kappas_for(config, horizon),
            box_half_width=float(p["box_half_width"]),
            stepsize_fraction=zeta,
        )
    partition = Partition(p["block_dims"])
    box = BoxSet.symmetric(float(p["box_half_width"]), partition)
    epochs = []
    for t, entry in enumerate(p["matrices"]):
        qvec = entry.get("q", [0.0] * partition.total_dim)
        epochs.append(quadratic_epoch(np.array(entry["Q"], dtype=float),
                                      np.array(qvec, dtype=float), partition, t))
    horizon = len(epochs) - 1
    return assemble_problem(epochs, box, _kappas_for(config, horizon),
                            stepsize_fraction=zeta)


def build_schedule(config: ExperimentConfig) -> Schedule:
    s = config.schedule
    comm_cfg = s["communicate"]
    if comm_cfg["kind"] == "fixed":
        comm = CommRule.fixed(float(comm_cfg["p"]))
    else:
        comm = CommRule.uniform(float(comm_cfg["low"]), float(comm_cfg["high"]))
    delay_cfg = s["delay"]
    if delay_cfg["kind"] == "zero":
        delay = DelayRule.zero()
    elif delay_cfg["kind"] == "fixed":
        delay = DelayRule.fixed(int(delay_cfg["ticks"]))
    else:
        delay = DelayRule.uniform(int(delay_cfg["low"]), int(delay_cfg["high"]))
    return Schedule(
        mode=s["mode"],
        seed=int(s["seed"]),
        p_compute=float(s["p_compute"]),
        comm=comm,
        delay=delay,
    )
