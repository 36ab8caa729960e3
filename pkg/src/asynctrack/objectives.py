"""Time-varying objective functions and their per-epoch constants.

An epoch is one snapshot of the objective: evaluators for the function,
its gradient, and its Hessian, all over the same block partition. From an
epoch and the constraint box we derive the strong-convexity modulus
``beta``, the gradient Lipschitz constant ``lipschitz``, a stepsize below
the coupling bound, the per-cycle contraction factor ``q``, the epoch's
minimizer, and the drift between consecutive minimizers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .blocks import BoxSet, Partition, PartitionedVector
from .errors import AssumptionViolation, ConvergenceFailure, InvalidStepsize

__all__ = [
    "ObjectiveEpoch",
    "EpochConstants",
    "TimeVaryingProblem",
    "check_block_diagonal_dominance",
    "estimate_epoch_constants",
    "stepsize_bound",
    "contraction_factor",
    "minimizer_oracle",
    "minimizer_drift",
    "assemble_problem",
    "generate_quadratic_problem",
    "quadratic_epoch",
    "make_feedback_objective",
    "generate_feedback_problem",
    "check_gradient",
    "latin_hypercube",
]

DOMINANCE_MARGIN = 0.1  # margin enforced by the problem generators
_BETA_DEFLATION = 0.95
_LIPSCHITZ_INFLATION = 1.05


@dataclass
class ObjectiveEpoch:
    """One epoch of a time-varying objective.

    Parameters
    ----------
    index : int
        Epoch number ``t``.
    partition : Partition
        Block structure shared by all evaluators.
    value : callable
        ``value(u) -> float``.
    gradient : callable
        ``gradient(u) -> ndarray``; this is what agents consume during a
        run and it may be noisy. Each call may advance a private noise
        stream, so it is not safe for concurrent calls.
    hessian : callable
        ``hessian(u) -> ndarray`` of shape ``(n, n)``; always noiseless.
    noiseless_gradient : callable, optional
        Noise-free gradient used by the minimizer oracle and by
        verification. Defaults to ``gradient``.
    hessian_constant : bool
        True when the Hessian does not depend on ``u`` (quadratics); the
        constant estimators then use a single exact evaluation.
    reset_noise : callable, optional
        Rewinds the gradient's private noise stream to its seeded start.
    """

    index: int
    partition: Partition
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    noiseless_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian_constant: bool = False
    reset_noise: Optional[Callable[[], None]] = None

    def oracle_gradient(self, u: np.ndarray) -> np.ndarray:
        g = self.noiseless_gradient if self.noiseless_gradient is not None else self.gradient
        return g(u)


@dataclass
class EpochConstants:
    """Constants attached to one epoch after assembly.

    ``sigma`` is the drift ``||u_hat(t+1) - u_hat(t)||_2`` to the next
    epoch's minimizer; it is None for the final epoch.
    """

    beta: float
    lipschitz: float
    stepsize: float
    contraction: float
    kappa: int
    minimizer: PartitionedVector
    sigma: Optional[float] = None


@dataclass
class TimeVaryingProblem:
    """A horizon of epochs sharing one partition and one constraint box."""

    epochs: list
    box: BoxSet
    constants: list = field(default_factory=list)

    def __post_init__(self):
        if not self.epochs:
            raise ValueError("problem needs at least one epoch")
        part = self.epochs[0].partition
        for ep in self.epochs:
            if ep.partition != part:
                raise ValueError("all epochs must share one partition")
        if self.box.partition != part:
            raise ValueError("box partition differs from the epochs' partition")

    @property
    def partition(self) -> Partition:
        return self.epochs[0].partition

    @property
    def horizon(self) -> int:
        """Largest epoch index T; epochs run t = 0..T."""
        return len(self.epochs) - 1

    @property
    def n_agents(self) -> int:
        return self.partition.n_blocks

    @property
    def kappas(self) -> list:
        return [c.kappa for c in self.constants]

    @property
    def eta(self) -> list:
        """Cumulative tick counts: eta[t] is the first tick after epoch t."""
        out, total = [], 0
        for k in self.kappas:
            total += k
            out.append(total)
        return out

    @property
    def total_ticks(self) -> int:
        return sum(self.kappas)

    def epoch_of_tick(self, k: int) -> int:
        if not 0 <= k < self.total_ticks:
            raise IndexError(f"tick {k} outside [0, {self.total_ticks})")
        for t, boundary in enumerate(self.eta):
            if k < boundary:
                return t
        raise AssertionError("unreachable")

    @property
    def minimizers(self) -> list:
        return [c.minimizer for c in self.constants]

    @property
    def q(self) -> list:
        return [c.contraction for c in self.constants]

    @property
    def sigma(self) -> list:
        """Drift constants sigma_0..sigma_{T-1}."""
        return [c.sigma for c in self.constants[:-1]]

    def signature(self) -> str:
        """Fingerprint used to match traces back to their problem."""
        import hashlib

        h = hashlib.sha1()
        h.update(np.array(self.partition.block_dims).tobytes())
        h.update(np.array(self.kappas).tobytes())
        for c in self.constants:
            h.update(np.round(c.minimizer.data, 12).tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# Assumption checks and constants
# ---------------------------------------------------------------------------

def _dominance_margins(H: np.ndarray, partition: Partition):
    """Per-block dominance margins and off-diagonal norm sums.

    margin_i = lambda_min(H_ii) - sum_{j != i} ||H_ij||_2. Raises if a
    diagonal block is not symmetric positive definite.
    """
    H = np.asarray(H, dtype=float)
    n = partition.total_dim
    if H.shape != (n, n):
        raise ValueError(f"Hessian shape {H.shape} does not match dimension {n}")
    sls = partition.slices()
    margins = np.empty(partition.n_blocks)
    offsums = np.empty(partition.n_blocks)
    for i, si in enumerate(sls):
        Hii = H[si, si]
        if not np.allclose(Hii, Hii.T, rtol=1e-8, atol=1e-10):
            raise AssumptionViolation(
                f"diagonal block {i} is not symmetric", block=i
            )
        lam_min = float(np.linalg.eigvalsh(Hii)[0])
        if lam_min <= 0.0:
            raise AssumptionViolation(
                f"diagonal block {i} is not positive definite "
                f"(lambda_min = {lam_min:.3e})",
                block=i,
            )
        off = 0.0
        for j, sj in enumerate(sls):
            if j != i:
                off += float(np.linalg.norm(H[si, sj], 2))
        margins[i] = lam_min - off
        offsums[i] = off
    return margins, offsums


def check_block_diagonal_dominance(H: np.ndarray, partition: Partition):
    """Strict block diagonal dominance test for a partitioned matrix.

    Returns
    -------
    (is_dominant, beta) : (bool, float)
        ``beta`` is the smallest per-block margin
        ``lambda_min(H_ii) - sum_{j != i} ||H_ij||_2``; the matrix is
        dominant when ``beta > 0``. Non-symmetric or non-PD diagonal
        blocks raise :class:`AssumptionViolation` naming the block.
    """
    margins, _ = _dominance_margins(H, partition)
    beta = float(margins.min())
    return beta > 0.0, beta


def latin_hypercube(box: BoxSet, count: int, rng: np.random.Generator) -> np.ndarray:
    """Stratified samples of the box, one stratum per sample per dimension."""
    n = box.partition.total_dim
    u = (rng.permuted(np.tile(np.arange(count), (n, 1)), axis=1).T
         + rng.uniform(size=(count, n))) / count
    return box.lower + u * (box.upper - box.lower)


def estimate_epoch_constants(epoch: ObjectiveEpoch, box: BoxSet,
                             sample_count: int = 1000, seed: int = 0):
    """Strong-convexity modulus ``beta`` and Lipschitz constant over the box.

    Constant Hessians get one exact evaluation. Otherwise the box is
    sampled (Latin hypercube) and the sampled extrema are padded: beta is
    deflated by 0.95 and the Lipschitz constant inflated by 1.05, since
    sampling can miss the true extremum. Any sampled point violating
    dominance raises :class:`AssumptionViolation` with the witness point.
    """
    partition = epoch.partition
    if epoch.hessian_constant:
        H = epoch.hessian(box.center)
        margins, _ = _dominance_margins(H, partition)
        beta = float(margins.min())
        if beta <= 0.0:
            raise AssumptionViolation(
                f"epoch {epoch.index}: Hessian is not strictly block "
                f"diagonally dominant (beta = {beta:.3e})",
                epoch=epoch.index,
            )
        return beta, float(np.linalg.norm(H, 2))

    rng = np.random.default_rng(seed)
    points = latin_hypercube(box, sample_count, rng)
    beta_min = np.inf
    lip_max = 0.0
    for u in points:
        H = epoch.hessian(u)
        try:
            margins, _ = _dominance_margins(H, partition)
        except AssumptionViolation as exc:
            raise AssumptionViolation(
                f"epoch {epoch.index}: {exc} at a sampled point",
                epoch=epoch.index, block=exc.block, witness=u.copy(),
            ) from exc
        m = float(margins.min())
        if m <= 0.0:
            raise AssumptionViolation(
                f"epoch {epoch.index}: dominance fails at a sampled point "
                f"(margin = {m:.3e})",
                epoch=epoch.index,
                witness=u.copy(),
            )
        beta_min = min(beta_min, m)
        lip_max = max(lip_max, float(np.linalg.norm(H, 2)))
    return _BETA_DEFLATION * beta_min, _LIPSCHITZ_INFLATION * lip_max


def stepsize_bound(epoch: ObjectiveEpoch, box: BoxSet, sample_count: int = 1000,
                   lipschitz: Optional[float] = None, seed: int = 0) -> float:
    """Upper stepsize bound ``1 / max_u max_i sum_{j != i} ||H_ij(u)||_2``.

    When every off-diagonal block is zero the bound is infinite; the
    fallback ``1 / lipschitz`` keeps the contraction factor inside (0, 1)
    through the Lipschitz term instead.
    """
    partition = epoch.partition
    if epoch.hessian_constant:
        _, offsums = _dominance_margins(epoch.hessian(box.center), partition)
        off_max = float(offsums.max())
    else:
        rng = np.random.default_rng(seed)
        off_max = 0.0
        for u in latin_hypercube(box, sample_count, rng):
            _, offsums = _dominance_margins(epoch.hessian(u), partition)
            off_max = max(off_max, float(offsums.max()))
    if off_max <= 0.0:
        if lipschitz is None:
            _, lipschitz = estimate_epoch_constants(epoch, box, sample_count, seed)
        return 1.0 / lipschitz
    return 1.0 / off_max


def contraction_factor(gamma: float, beta: float, lipschitz: float) -> float:
    """Per-cycle contraction factor ``max{|1 - gamma*beta|, |1 - gamma*L|}``.

    Raises :class:`InvalidStepsize` unless the result lies strictly
    inside (0, 1); the downstream cycle formulas take its logarithm.
    """
    if gamma <= 0.0:
        raise InvalidStepsize(f"stepsize must be positive, got {gamma}")
    if beta > lipschitz + 1e-12:
        raise ValueError(f"beta = {beta} exceeds lipschitz = {lipschitz}")
    q = max(abs(1.0 - gamma * beta), abs(1.0 - gamma * lipschitz))
    if q >= 1.0:
        raise InvalidStepsize(
            f"stepsize {gamma} gives contraction factor {q} >= 1"
        )
    if q <= 0.0:
        raise InvalidStepsize(
            "contraction factor is exactly 0 (beta == lipschitz with gamma = "
            "1/lipschitz); perturb the stepsize to keep logarithms finite"
        )
    return q


def minimizer_oracle(epoch: ObjectiveEpoch, box: BoxSet,
                     lipschitz: Optional[float] = None,
                     tol: float = 1e-10, max_iter: int = 10 ** 6) -> PartitionedVector:
    """High-precision minimizer via centralized projected gradient.

    Runs ``u <- clip(u - grad(u)/L)`` from the box center until the
    fixed-point residual drops below ``tol``. Deterministic given the
    epoch; uses the noiseless gradient.
    """
    if lipschitz is None:
        _, lipschitz = estimate_epoch_constants(epoch, box)
    u = box.center.copy()
    step = 1.0 / lipschitz
    for _ in range(max_iter):
        u_next = box.clip(u - step * epoch.oracle_gradient(u))
        if float(np.linalg.norm(u_next - u)) <= tol:
            return PartitionedVector(u_next, epoch.partition)
        u = u_next
    raise ConvergenceFailure(
        f"epoch {epoch.index}: projected gradient did not reach tol={tol} "
        f"within {max_iter} iterations"
    )


def minimizer_drift(problem: TimeVaryingProblem, t: int) -> float:
    """Exact drift ``||u_hat(t+1) - u_hat(t)||_2`` between epoch minimizers."""
    if not 0 <= t < problem.horizon:
        raise IndexError(f"drift defined for t in [0, {problem.horizon}), got {t}")
    u0 = problem.constants[t].minimizer.data
    u1 = problem.constants[t + 1].minimizer.data
    return float(np.linalg.norm(u1 - u0))


def assemble_problem(epochs: list, box: BoxSet, kappas,
                     stepsize_fraction: float = 0.5,
                     sample_count: int = 1000) -> TimeVaryingProblem:
    """Attach constants (beta, L, stepsize, q, minimizer, drift) to epochs.

    ``kappas`` is the tick count per epoch: a single int applied
    uniformly, or one entry per epoch. The stepsize is
    ``stepsize_fraction`` times the coupling bound.
    """
    if isinstance(kappas, int):
        kappas = [kappas] * len(epochs)
    kappas = [int(k) for k in kappas]
    if len(kappas) != len(epochs):
        raise ValueError(f"need {len(epochs)} epoch lengths, got {len(kappas)}")
    if any(k < 1 for k in kappas):
        raise ValueError("every epoch must span at least one tick")
    if not 0.0 < stepsize_fraction < 1.0:
        raise ValueError("stepsize fraction must lie in (0, 1)")

    constants = []
    for ep, kappa in zip(epochs, kappas):
        beta, lip = estimate_epoch_constants(ep, box, sample_count, seed=ep.index)
        bound = stepsize_bound(ep, box, sample_count, lipschitz=lip, seed=ep.index)
        # the coupling bound alone does not keep the contraction factor
        # below 1 when coupling is weak; 2/(beta+L) is the true safe cap
        gamma = stepsize_fraction * min(bound, 2.0 / (beta + lip))
        q = contraction_factor(gamma, beta, lip)
        u_hat = minimizer_oracle(ep, box, lipschitz=lip)
        constants.append(EpochConstants(
            beta=beta, lipschitz=lip, stepsize=gamma, contraction=q,
            kappa=kappa, minimizer=u_hat,
        ))
    for t in range(len(constants) - 1):
        constants[t].sigma = float(np.linalg.norm(
            constants[t + 1].minimizer.data - constants[t].minimizer.data
        ))
    return TimeVaryingProblem(epochs=list(epochs), box=box, constants=constants)


# ---------------------------------------------------------------------------
# Problem generators
# ---------------------------------------------------------------------------

def quadratic_epoch(Q: np.ndarray, qvec: np.ndarray, partition: Partition,
                    index: int) -> ObjectiveEpoch:
    """Epoch for ``f(u) = 0.5 u'Qu + q'u`` with a constant Hessian."""
    Q = np.array(Q, dtype=float)
    qvec = np.array(qvec, dtype=float).reshape(-1)
    n = partition.total_dim
    if Q.shape != (n, n) or qvec.size != n:
        raise ValueError("quadratic data does not match the partition dimension")
    Q.setflags(write=False)  # the hessian evaluator hands out this object
    qvec.setflags(write=False)
    return ObjectiveEpoch(
        index=index,
        partition=partition,
        value=lambda u: float(0.5 * u @ Q @ u + qvec @ u),
        gradient=lambda u: Q @ u + qvec,
        hessian=lambda u: Q,
        hessian_constant=True,
    )


def _dominant_quadratic_matrix(n: int, partition: Partition,
                               rng: np.random.Generator) -> np.ndarray:
    """Random PSD matrix shifted until block dominance holds with margin 0.1.

    Adding ``m * I`` raises every diagonal block's smallest eigenvalue by
    ``m`` and leaves off-diagonal blocks untouched, so the shift needed is
    exactly the margin deficit.
    """
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    Q = A.T @ A + DOMINANCE_MARGIN * np.eye(n)
    margins, _ = _dominance_margins(Q, partition)
    deficit = DOMINANCE_MARGIN - float(margins.min())
    if deficit > 0.0:
        Q = Q + deficit * np.eye(n)
    return Q


def generate_quadratic_problem(n_agents: int, block_dims=None, horizon: int = 9,
                               seed: int = 0, drift_scale: float = 1.0,
                               kappa=50, box_half_width: float = 10.0,
                               stepsize_fraction: float = 0.5) -> TimeVaryingProblem:
    """Random time-varying quadratic program with guaranteed dominance.

    Per epoch, ``Q(t)`` is a scaled Wishart matrix shifted so that strict
    block diagonal dominance holds with margin at least 0.1, and ``q(t)``
    has i.i.d. normal entries scaled by ``drift_scale``. Bit-identical
    output for identical seeds.
    """
    if block_dims is None:
        block_dims = [1] * n_agents
    partition = Partition(block_dims)
    if partition.n_blocks != n_agents:
        raise ValueError(
            f"{n_agents} agents but {partition.n_blocks} blocks in {block_dims}"
        )
    n = partition.total_dim
    rng = np.random.default_rng(seed)
    box = BoxSet.symmetric(box_half_width, partition)
    epochs = []
    for t in range(horizon + 1):
        Q = _dominant_quadratic_matrix(n, partition, rng)
        qvec = drift_scale * rng.standard_normal(n)
        epochs.append(quadratic_epoch(Q, qvec, partition, t))
    return assemble_problem(epochs, box, kappa,
                            stepsize_fraction=stepsize_fraction)


def make_feedback_objective(Q: np.ndarray, coupling, reference: float,
                            noise_std: float, seed: int, partition: Partition,
                            index: int = 0) -> ObjectiveEpoch:
    """Epoch for ``f(u) = 0.5 u'Qu + 0.5 (a'u - r)^2`` with measured output.

    The steady-state input-output map is linear, ``y(u) = a'u``. The
    gradient evaluator sees a noisy measurement ``y(u) + n`` with
    ``n ~ N(0, noise_std^2)`` drawn once per call from a private seeded
    stream; the value, Hessian, and noiseless gradient use the exact map.
    """
    Q = np.array(Q, dtype=float)
    a = np.array(coupling, dtype=float).reshape(-1)
    n = partition.total_dim
    if Q.shape != (n, n) or a.size != n:
        raise ValueError("feedback data does not match the partition dimension")
    r = float(reference)
    H = Q + np.outer(a, a)
    H.setflags(write=False)  # the hessian evaluator hands out this object
    state = {"rng": np.random.default_rng(seed)}

    def noiseless_gradient(u):
        return Q @ u + a * (a @ u - r)

    def gradient(u):
        measured = a @ u + (state["rng"].normal(0.0, noise_std) if noise_std > 0 else 0.0)
        return Q @ u + a * (measured - r)

    def reset_noise():
        state["rng"] = np.random.default_rng(seed)

    return ObjectiveEpoch(
        index=index,
        partition=partition,
        value=lambda u: float(0.5 * u @ Q @ u + 0.5 * (a @ u - r) ** 2),
        gradient=gradient,
        hessian=lambda u: H,
        noiseless_gradient=noiseless_gradient,
        hessian_constant=True,
        reset_noise=reset_noise,
    )


def generate_feedback_problem(n_agents: int, coupling, reference,
                              block_dims=None, seed: int = 0,
                              noise_std: float = 0.0,
                              kappa=50, box_half_width: float = 10.0,
                              stepsize_fraction: float = 0.5) -> TimeVaryingProblem:
    """Feedback-optimization horizon: random dominant ``Q(t)``, given
    coupling vector and reference trajectory, optional measurement noise.

    The horizon length is ``len(reference) - 1``. Each epoch's full
    Hessian is ``Q(t) + a a'``; ``Q(t)`` is shifted so that the full
    Hessian keeps dominance margin at least 0.1 despite the rank-one
    coupling term.
    """
    if block_dims is None:
        block_dims = [1] * n_agents
    partition = Partition(block_dims)
    if partition.n_blocks != n_agents:
        raise ValueError(
            f"{n_agents} agents but {partition.n_blocks} blocks in {block_dims}"
        )
    n = partition.total_dim
    a = np.array(coupling, dtype=float).reshape(-1)
    if a.size != n:
        raise ValueError(f"coupling vector length {a.size} != dimension {n}")
    reference = [float(r) for r in reference]
    if not reference:
        raise ValueError("reference trajectory is empty")
    rng = np.random.default_rng(seed)
    box = BoxSet.symmetric(box_half_width, partition)
    rank_one = np.outer(a, a)
    epochs = []
    for t, r_t in enumerate(reference):
        Q = _dominant_quadratic_matrix(n, partition, rng)
        margins, _ = _dominance_margins(Q + rank_one, partition)
        deficit = DOMINANCE_MARGIN - float(margins.min())
        if deficit > 0.0:
            Q = Q + deficit * np.eye(n)
        epochs.append(make_feedback_objective(
            Q, a, r_t, noise_std, seed=seed + 7919 * (t + 1),
            partition=partition, index=t,
        ))
    return assemble_problem(epochs, box, kappa,
                            stepsize_fraction=stepsize_fraction)


# ---------------------------------------------------------------------------
# Verification helpers
# ---------------------------------------------------------------------------

def check_gradient(epoch: ObjectiveEpoch, box: BoxSet,
                   rng: np.random.Generator, points: int = 3,
                   rel_tol: float = 1e-5) -> float:
    """Central-difference check of the noiseless gradient against the value.

    Samples random interior points and returns the worst relative error;
    raises :class:`AssumptionViolation` past ``rel_tol``.
    """
    n = box.partition.total_dim
    worst = 0.0
    for _ in range(points):
        frac = rng.uniform(0.25, 0.75, size=n)
        u = box.lower + frac * (box.upper - box.lower)
        g = epoch.oracle_gradient(u)
        fd = np.empty(n)
        h = 1e-6 * max(1.0, float(np.linalg.norm(u)))
        for d in range(n):
            e = np.zeros(n)
            e[d] = h
            fd[d] = (epoch.value(u + e) - epoch.value(u - e)) / (2 * h)
        denom = max(1.0, float(np.linalg.norm(g)))
        err = float(np.linalg.norm(fd - g)) / denom
        worst = max(worst, err)
    if worst > rel_tol:
        raise AssumptionViolation(
            f"epoch {epoch.index}: gradient disagrees with finite differences "
            f"(relative error {worst:.3e})",
            epoch=epoch.index,
        )
    return worst
