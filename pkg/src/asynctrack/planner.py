"""Allocation of a total communication-cycle budget across epochs.

Minimizes the summed per-epoch tracking bound ``sum_t q_t^{c(t)} D_t``
subject to ``sum_t c(t) <= K`` via its stationarity system: a scalar
dual variable is bisected while an inner fixed point resolves the
coupled per-epoch cycle counts. A brute-force integer enumerator serves
as the validation oracle, and a greedy rounding pass turns the real
solution into an integer plan.

The closed form for the per-epoch marginal-cost weights prints its
drift factors without cycle exponents; taken literally that system's
stationary point is not the objective's minimizer once drift is present
(the enumeration oracle shows integer plans beating it by large
margins). The solver therefore defaults to the exact objective
gradient and keeps the printed form selectable, reporting the residual
under whichever form was not used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .bounds import _validate_q
from .errors import InfeasibleBudget, SolverFailure

__all__ = ["CyclePlan", "objective_value", "solve_kkt", "brute_force_plan", "round_plan"]


def objective_value(cycles, q, sigma, d0: float) -> float:
    """Summed tracking bound over the horizon for a given allocation.

    The per-epoch constant ``D_t`` follows its recursion, so the value
    depends on ``c(0..t-1)`` as well as ``c(t)``.
    """
    q = [float(v) for v in q]
    cycles = [float(c) for c in cycles]
    if len(cycles) != len(q):
        raise ValueError(f"{len(q)} epochs need {len(q)} cycle counts, got {len(cycles)}")
    total = 0.0
    d = float(d0)
    for t in range(len(q)):
        contracted = q[t] ** cycles[t] * d
        total += contracted
        if t < len(q) - 1:
            d = contracted + float(sigma[t])
    return total


@dataclass
class CyclePlan:
    """Solution of the budget-allocation problem.

    ``c_real`` is the stationary real-valued allocation with dual value
    ``mu``; ``c_int`` the greedily rounded integer plan. ``residual`` is
    the worst per-epoch stationarity violation (complementary slackness
    at clamped epochs) and ``budget_gap`` is ``|sum c_real - K|``.
    """

    c_real: list
    c_int: list
    mu: float
    objective_real: float
    objective_int: float
    residual: float
    budget_gap: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def alternate_residual(self) -> float:
        """Stationarity residual under the drift-weight form the solver
        did not use; quantifies the printed-versus-exact discrepancy."""
        return self.diagnostics.get("alternate_residual", float("nan"))


def _printed_drift_weights(q, sigma):
    """The drift part of each epoch's marginal-cost weight, with bare
    (exponent-free) q factors exactly as the closed form prints them."""
    T = len(q) - 1
    E = [0.0] * (T + 1)
    for t in range(T + 1):
        # tail = sum_{theta=t}^{T} prod_{l=t+1}^{theta} q_l
        tail = 0.0
        prod = 1.0
        for theta in range(t, T + 1):
            if theta > t:
                prod *= q[theta]
            tail += prod
        inner = 0.0
        for i in range(t):
            p = 1.0
            for k in range(i + 1, t):
                p *= q[k]
            inner += sigma[i] * p
        E[t] = tail * inner
    return E


def _marginal_weights(c, q, d0, E):
    """G_t = D_0 F_t + E_t for the current allocation."""
    T = len(q) - 1
    # tailc[t] = sum_{theta=t}^{T} prod_{j=t+1}^{theta} q_j^{c_j}
    tailc = [1.0] * (T + 1)
    for t in range(T - 1, -1, -1):
        tailc[t] = 1.0 + q[t + 1] ** c[t + 1] * tailc[t + 1]
    G = []
    pre = 1.0  # prod_{i<t} q_i^{c_i}
    for t in range(T + 1):
        G.append(d0 * pre * tailc[t] + E[t])
        pre *= q[t] ** c[t]
    return G


def _exact_drift_weights(c, q, sigma):
    """Drift part of the true objective gradient: every q factor carries
    its cycle exponent, unlike the printed closed form."""
    T = len(q) - 1
    tailc = [1.0] * (T + 1)
    for t in range(T - 1, -1, -1):
        tailc[t] = 1.0 + q[t + 1] ** c[t + 1] * tailc[t + 1]
    E = [0.0] * (T + 1)
    for t in range(T + 1):
        inner = 0.0
        for i in range(t):
            p = 1.0
            for k in range(i + 1, t):
                p *= q[k] ** c[k]
            inner += sigma[i] * p
        E[t] = tailc[t] * inner
    return E


def _stationarity_residual(c, mu, q, lnq, d0, E):
    """Worst per-epoch stationarity violation; clamped epochs are judged
    by complementary slackness."""
    G = _marginal_weights(c, q, d0, E)
    residual = 0.0
    for t in range(len(q)):
        grad = q[t] ** c[t] * lnq[t] * G[t] + mu
        if c[t] > 0.0:
            residual = max(residual, abs(grad))
        else:
            residual = max(residual, max(0.0, -grad))
    return residual


def _cycles_for_dual(mu, c, q, lnq, d0, weights_of, tol=1e-10, max_iter=10 ** 4):
    """Inner fixed point: allocation satisfying the per-epoch stationarity
    equations for a fixed dual value, nonnegativity clamped."""
    T = len(q) - 1
    c = list(c)
    for _ in range(max_iter):
        G = _marginal_weights(c, q, d0, weights_of(c))
        c_new = []
        for t in range(T + 1):
            if G[t] <= 0.0:
                c_new.append(0.0)  # epoch contributes nothing; no cycles needed
                continue
            val = math.log(mu / (-lnq[t] * G[t])) / lnq[t]
            c_new.append(max(0.0, val))
        delta = max(abs(a - b) for a, b in zip(c, c_new))
        c = [0.5 * a + 0.5 * b for a, b in zip(c, c_new)]
        if delta <= tol:
            return c
    raise SolverFailure(
        f"inner fixed point did not stabilize within {max_iter} iterations",
        residual=delta,
    )


def solve_kkt(q, sigma, d0: float, budget: float,
              inner_tol: float = 1e-10, budget_tol: float = 1e-8,
              drift_weights: str = "exact") -> CyclePlan:
    """Stationarity-system solve of the cycle-allocation problem.

    Bisects the scalar dual: each per-epoch count is monotone
    decreasing in the dual, so the total allocation brackets the budget.
    Negative counts are clamped to zero with complementary-slackness
    bookkeeping. Returns the real solution, the dual value, and the
    greedily rounded integer plan.

    ``drift_weights`` picks the drift part of the marginal-cost weights:
    ``"exact"`` (default) uses the true objective gradient, whose q
    factors carry cycle exponents, so the real solution is the actual
    optimum; ``"as_printed"`` uses the closed form's exponent-free
    factors. The residual under the unused form is reported in
    ``diagnostics['alternate_residual']``.
    """
    q = _validate_q(q)
    sigma = [float(s) for s in sigma]
    T = len(q) - 1
    if len(sigma) != T:
        raise ValueError(f"{T + 1} epochs need {T} drift constants, got {len(sigma)}")
    if budget <= 0:
        raise ValueError("budget must be positive")
    if d0 < 0 or any(s < 0 for s in sigma):
        raise ValueError("d0 and drifts must be nonnegative")
    if drift_weights not in ("exact", "as_printed"):
        raise ValueError(f"drift_weights must be 'exact' or 'as_printed', got {drift_weights!r}")

    lnq = [math.log(v) for v in q]
    printed = _printed_drift_weights(q, sigma)
    if drift_weights == "exact":
        weights_of = lambda c: _exact_drift_weights(c, q, sigma)
        alternate_of = lambda c: printed
    else:
        weights_of = lambda c: printed
        alternate_of = lambda c: _exact_drift_weights(c, q, sigma)

    if d0 == 0.0 and all(s == 0.0 for s in sigma):
        # objective is identically zero; any feasible plan is optimal
        c_real = [budget / (T + 1)] * (T + 1)
        c_int = round_plan(c_real, int(math.floor(budget + 1e-9)), q, sigma, d0)
        return CyclePlan(c_real=c_real, c_int=c_int, mu=0.0, objective_real=0.0,
                         objective_int=0.0, residual=0.0, budget_gap=0.0)

    c_warm = [budget / (T + 1)] * (T + 1)
    evaluations = []

    def total_for(mu):
        nonlocal c_warm
        c_warm = _cycles_for_dual(mu, c_warm, q, lnq, d0, weights_of, tol=inner_tol)
        evaluations.append((mu, sum(c_warm)))
        return sum(c_warm), list(c_warm)

    # bracket the dual: small mu over-allocates, large mu starves
    mu_lo = mu_hi = 1.0
    total, c = total_for(1.0)
    if total > budget:
        for _ in range(200):
            mu_hi *= 2.0
            total, c = total_for(mu_hi)
            if total <= budget:
                break
        else:
            raise InfeasibleBudget("no dual value starves the allocation to the budget")
    else:
        for _ in range(200):
            mu_lo *= 0.5
            total, c = total_for(mu_lo)
            if total >= budget:
                break
        else:
            raise InfeasibleBudget("no dual value makes the budget binding")

    mu = mu_hi
    best = None
    for _ in range(200):
        mu = math.sqrt(mu_lo * mu_hi)  # dual is positive; bisect in log scale
        total, c = total_for(mu)
        best = (mu, c, abs(total - budget))
        if abs(total - budget) <= budget_tol:
            break
        if total > budget:
            mu_lo = mu
        else:
            mu_hi = mu
    mu, c_real, gap = best
    if gap > budget_tol:
        raise SolverFailure(
            f"dual bisection left a budget gap of {gap:.3e}", residual=gap
        )

    # total allocation must be nonincreasing in the dual
    by_mu = sorted(evaluations)
    for (m1, s1), (m2, s2) in zip(by_mu, by_mu[1:]):
        assert s2 <= s1 + 1e-6, f"allocation not monotone in the dual: {m1}->{m2}"

    # damping walks clamped coordinates toward 0 geometrically; snap the
    # stragglers so complementary slackness is judged at exactly 0
    c_real = [0.0 if c < 1e-9 else c for c in c_real]
    residual = _stationarity_residual(c_real, mu, q, lnq, d0, weights_of(c_real))
    alternate = _stationarity_residual(c_real, mu, q, lnq, d0, alternate_of(c_real))

    c_int = round_plan(c_real, int(math.floor(budget + 1e-9)), q, sigma, d0)
    return CyclePlan(
        c_real=c_real,
        c_int=c_int,
        mu=mu,
        objective_real=objective_value(c_real, q, sigma, d0),
        objective_int=objective_value(c_int, q, sigma, d0),
        residual=residual,
        budget_gap=gap,
        diagnostics={"alternate_residual": alternate},
    )


def brute_force_plan(q, sigma, d0: float, budget: int, c_min: int = 0):
    """Exhaustive integer allocation oracle.

    Enumerates every integer allocation with ``sum c(t) <= budget`` and
    ``c(t) >= c_min`` and returns ``(plan, objective)``. Guarded by an
    enumeration-size cap; intended for small horizons and budgets.
    """
    q = _validate_q(q)
    sigma = [float(s) for s in sigma]
    T = len(q) - 1
    if c_min not in (0, 1):
        raise ValueError("per-epoch floor must be 0 or 1")
    budget = int(budget)
    spare = budget - (T + 1) * c_min
    if spare < 0:
        raise InfeasibleBudget(
            f"budget {budget} cannot give {T + 1} epochs a floor of {c_min}"
        )
    count = math.comb(spare + T + 1, T + 1)
    if count > 5_000_000:
        raise ValueError(
            f"enumeration of {count} allocations exceeds the size cap; "
            f"reduce the budget or horizon"
        )

    best_val = math.inf
    best_plan = None

    def descend(t, remaining, d, partial, prefix):
        nonlocal best_val, best_plan
        if t == T:
            for c_t in range(c_min, remaining + 1):
                val = partial + q[t] ** c_t * d
                if val < best_val:
                    best_val = val
                    best_plan = prefix + [c_t]
            return
        for c_t in range(c_min, remaining - (T - t) * c_min + 1):
            contracted = q[t] ** c_t * d
            descend(t + 1, remaining - c_t, contracted + sigma[t],
                    partial + contracted, prefix + [c_t])

    descend(0, budget, float(d0), 0.0, [])
    return best_plan, best_val


def round_plan(c_real, budget: int, q, sigma, d0: float) -> list:
    """Greedy integerization of a real allocation.

    Floors every count, then assigns the leftover budget one unit at a
    time to the epoch whose increment lowers the objective the most.
    """
    budget = int(budget)
    floors = [int(math.floor(c + 1e-9)) for c in c_real]
    if sum(c_real) > budget + 1e-6:
        raise ValueError(
            f"real allocation sums to {sum(c_real)} which exceeds the budget {budget}"
        )
    plan = list(floors)
    for _ in range(budget - sum(floors)):
        best_t, best_val = None, math.inf
        for t in range(len(plan)):
            plan[t] += 1
            val = objective_value(plan, q, sigma, d0)
            plan[t] -= 1
            if val < best_val:
                best_t, best_val = t, val
        plan[best_t] += 1
    return plan
