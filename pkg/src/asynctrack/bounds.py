"""Closed-form tracking-error bounds and communication-cycle requirements.

Everything here is a pure function of the per-epoch contraction factors
``q_t``, the minimizer drifts ``sigma_t``, the initial error ``D_0``, and
the per-epoch cycle counts ``c(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BoundInputs",
    "finite_time_bound",
    "bound_series",
    "asymptotic_bound",
    "required_cycles_finite",
    "required_cycles_asymptotic",
]


def _validate_q(q) -> list:
    q = [float(v) for v in q]
    for t, v in enumerate(q):
        if not 0.0 < v < 1.0:
            raise ValueError(f"contraction factor q[{t}] = {v} outside (0, 1)")
    return q


@dataclass
class BoundInputs:
    """Inputs of the tracking bounds for one horizon.

    ``q`` has one entry per epoch, ``sigma`` one per epoch switch
    (length ``len(q) - 1``), and ``cycles`` one count per epoch (reals
    are accepted for planner interoperability).
    """

    q: list
    sigma: list
    d0: float
    cycles: list

    def __post_init__(self):
        self.q = _validate_q(self.q)
        self.sigma = [float(s) for s in self.sigma]
        self.cycles = [float(c) for c in self.cycles]
        if len(self.sigma) != len(self.q) - 1:
            raise ValueError(
                f"{len(self.q)} epochs need {len(self.q) - 1} drift constants, "
                f"got {len(self.sigma)}"
            )
        if len(self.cycles) != len(self.q):
            raise ValueError(
                f"{len(self.q)} epochs need {len(self.q)} cycle counts, "
                f"got {len(self.cycles)}"
            )
        if any(s < 0 for s in self.sigma):
            raise ValueError("drift constants must be nonnegative")
        if any(c < 0 for c in self.cycles):
            raise ValueError("cycle counts must be nonnegative")
        if self.d0 < 0:
            raise ValueError("initial error must be nonnegative")

    @property
    def horizon(self) -> int:
        return len(self.q) - 1

    @property
    def q_max(self) -> float:
        return max(self.q)

    @property
    def drift_bound(self) -> float:
        """The constant B: the larger of the initial error and any drift."""
        return max([self.d0] + self.sigma) if self.sigma else self.d0

    def d_sequence(self) -> list:
        """Worst-case error at each epoch start: D_{t} = q^{c} D_{t-1} + sigma."""
        out = [self.d0]
        for t in range(self.horizon):
            out.append(self.q[t] ** self.cycles[t] * out[t] + self.sigma[t])
        return out

    @classmethod
    def from_run(cls, problem, trace, cycle_count) -> "BoundInputs":
        """Assemble bound inputs from a prepared problem and a finished run."""
        counts = cycle_count.counts if hasattr(cycle_count, "counts") else list(cycle_count)
        return cls(
            q=[c.contraction for c in problem.constants],
            sigma=[c.sigma for c in problem.constants[:-1]],
            d0=float(trace.errors[0].max()),
            cycles=counts,
        )

    def to_dict(self) -> dict:
        return {"q": list(self.q), "sigma": list(self.sigma),
                "d0": self.d0, "cycles": list(self.cycles)}

    @classmethod
    def from_dict(cls, data: dict) -> "BoundInputs":
        return cls(q=data["q"], sigma=data["sigma"], d0=float(data["d0"]),
                   cycles=data["cycles"])

    def save(self, path) -> None:
        import json

        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "BoundInputs":
        import json

        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def finite_time_bound(inputs: BoundInputs, t: int) -> float:
    """Worst-agent tracking error bound at the end of epoch ``t``.

    Evaluates ``D_0 prod_{theta<=t} q^c + sum_p sigma_{p-1}
    prod_{r=p..t} q^c`` with products accumulated before the final sum;
    underflow of ``q**c`` to zero is the correct limit.
    """
    if not 0 <= t <= inputs.horizon:
        raise IndexError(f"epoch {t} outside horizon [0, {inputs.horizon}]")
    # suffix[p] = prod_{r=p}^{t} q_r^{c_r}
    suffix = [1.0] * (t + 2)
    for r in range(t, -1, -1):
        suffix[r] = suffix[r + 1] * inputs.q[r] ** inputs.cycles[r]
    terms = [inputs.d0 * suffix[0]]
    terms.extend(inputs.sigma[p - 1] * suffix[p] for p in range(1, t + 1))
    return math.fsum(terms)


def bound_series(inputs: BoundInputs) -> np.ndarray:
    """The finite-time bound at every epoch boundary."""
    return np.array([finite_time_bound(inputs, t) for t in range(inputs.horizon + 1)])


def asymptotic_bound(drift_bound: float, q_max: float) -> float:
    """Long-run error ball radius ``B * q_max / (1 - q_max)``."""
    if not 0.0 < q_max < 1.0:
        raise ValueError(f"q_max = {q_max} outside (0, 1)")
    if drift_bound < 0:
        raise ValueError("drift bound must be nonnegative")
    return drift_bound * q_max / (1.0 - q_max)


def _finite_requirement_rhs(c: float, ratio: float, q_max: float, horizon: int) -> float:
    # rhs of the implicit requirement: ln((q^{(T+2)c} + rho/B)/(1 + rho/B)) / ln(q)
    num = q_max ** ((horizon + 2) * c) + ratio
    return math.log(num / (1.0 + ratio)) / math.log(q_max)


def required_cycles_finite(rho: float, drift_bound: float, q_max: float,
                           horizon: int) -> int:
    """Smallest constant per-epoch cycle count guaranteeing error <= rho
    at every epoch boundary of a finite horizon.

    The requirement is implicit in ``c`` (it appears on both sides), so
    the search seeds with the asymptotic requirement, which always
    satisfies it, and walks downward while the inequality still holds.
    """
    if rho <= 0:
        raise ValueError("error target rho must be positive")
    if not 0.0 < q_max < 1.0:
        raise ValueError(f"q_max = {q_max} outside (0, 1)")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    c = required_cycles_asymptotic(rho, drift_bound, q_max)
    ratio = rho / drift_bound if drift_bound > 0 else math.inf
    if math.isinf(ratio):
        return 1
    while c > 1 and (c - 1) >= _finite_requirement_rhs(c - 1, ratio, q_max, horizon):
        c -= 1
    return c


def required_cycles_asymptotic(rho: float, drift_bound: float, q_max: float) -> int:
    """Ceiling of ``ln((rho/B)/(1 + rho/B)) / ln(q_max)``, at least 1."""
    if rho <= 0:
        raise ValueError("error target rho must be positive")
    if not 0.0 < q_max < 1.0:
        raise ValueError(f"q_max = {q_max} outside (0, 1)")
    if drift_bound < 0:
        raise ValueError("drift bound must be nonnegative")
    if drift_bound == 0 or math.isinf(rho):
        return 1
    ratio = rho / drift_bound
    c = math.ceil(math.log(ratio / (1.0 + ratio)) / math.log(q_max))
    return max(1, int(c))
