import numpy as np
import pytest

from asynctrack.blocks import BoxSet, Partition
from asynctrack.errors import AssumptionViolation, InvalidStepsize
from asynctrack.objectives import (
    ObjectiveEpoch,
    assemble_problem,
    check_block_diagonal_dominance,
    check_gradient,
    contraction_factor,
    estimate_epoch_constants,
    generate_feedback_problem,
    generate_quadratic_problem,
    latin_hypercube,
    make_feedback_objective,
    minimizer_drift,
    minimizer_oracle,
    quadratic_epoch,
    stepsize_bound,
    _dominance_margins,
)

P2 = Partition([1, 1])
Q_COUPLED = np.array([[2.0, 0.5], [0.5, 2.0]])


def box2(width=10.0):
    return BoxSet.symmetric(width, P2)


# ---------------------------------------------------------------------------
# dominance checks
# ---------------------------------------------------------------------------

def test_dominance_coupled_quadratic():
    dominant, beta = check_block_diagonal_dominance(Q_COUPLED, P2)
    assert dominant
    assert beta == pytest.approx(1.5)


def test_dominance_identity():
    for p in (P2, Partition([2]), Partition([1, 2, 1])):
        dominant, beta = check_block_diagonal_dominance(np.eye(p.total_dim), p)
        assert dominant
        assert beta == pytest.approx(1.0)


def test_dominance_fails_with_negative_margin():
    dominant, beta = check_block_diagonal_dominance([[1.0, 2.0], [2.0, 1.0]], P2)
    assert not dominant
    assert beta == pytest.approx(-1.0)


def test_dominance_rejects_bad_diagonal_blocks():
    with pytest.raises(AssumptionViolation) as err:
        check_block_diagonal_dominance([[0.0, 0.1], [0.1, 1.0]], P2)
    assert err.value.block == 0
    asym = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(AssumptionViolation):
        check_block_diagonal_dominance(asym, Partition([2, 1]))


# ---------------------------------------------------------------------------
# epoch constants
# ---------------------------------------------------------------------------

def test_constants_exact_for_quadratics():
    ep = quadratic_epoch(Q_COUPLED, np.zeros(2), P2, 0)
    beta, lip = estimate_epoch_constants(ep, box2())
    assert beta == pytest.approx(1.5)  # eigenvalues of Q are 1.5 and 2.5
    assert lip == pytest.approx(2.5)
    ep_id = quadratic_epoch(np.eye(2), np.zeros(2), P2, 0)
    beta, lip = estimate_epoch_constants(ep_id, box2())
    assert beta == pytest.approx(1.0)
    assert lip == pytest.approx(1.0)


def test_generated_problem_rechecks_dominance_at_fresh_samples():
    problem = generate_quadratic_problem(4, horizon=2, seed=3, kappa=5)
    rng = np.random.default_rng(99)
    points = latin_hypercube(problem.box, 1000, rng)
    for epoch in problem.epochs:
        for u in points:
            margins, _ = _dominance_margins(epoch.hessian(u), problem.partition)
            assert margins.min() > 0


def test_sampled_constants_for_state_dependent_hessian():
    # quadratic plus a small cosine ripple: Hessian varies with u
    eps = 0.05
    Q = Q_COUPLED

    def value(u):
        return float(0.5 * u @ Q @ u + eps * np.sum(np.cos(u)))

    def gradient(u):
        return Q @ u - eps * np.sin(u)

    def hessian(u):
        return Q + eps * np.diag(-np.cos(u))

    ep = ObjectiveEpoch(index=0, partition=P2, value=value,
                        gradient=gradient, hessian=hessian)
    beta, lip = estimate_epoch_constants(ep, box2(2.0), sample_count=200, seed=1)
    # true extrema over the box: diagonal entries move by at most eps
    assert 0 < beta <= 1.5 + eps
    assert lip >= 2.5 - eps
    check_gradient(ep, box2(2.0), np.random.default_rng(0))


def test_sampled_constants_report_witness_on_violation():
    # diagonal stays PD everywhere but dominance fails where cos dips low
    def hessian(u):
        return np.array([[1.0 + 0.5 * np.cos(u[0]), 0.8],
                         [0.8, 1.0 + 0.5 * np.cos(u[1])]])

    ep = ObjectiveEpoch(index=0, partition=P2, value=lambda u: 0.0,
                        gradient=lambda u: np.zeros(2), hessian=hessian)
    with pytest.raises(AssumptionViolation) as err:
        estimate_epoch_constants(ep, box2(4.0), sample_count=100, seed=2)
    assert err.value.witness is not None


# ---------------------------------------------------------------------------
# stepsize bound and contraction factor
# ---------------------------------------------------------------------------

def test_stepsize_bound_examples():
    ep = quadratic_epoch(Q_COUPLED, np.zeros(2), P2, 0)
    assert stepsize_bound(ep, box2()) == pytest.approx(2.0)  # 1 / 0.5
    ep_diag = quadratic_epoch(np.diag([2.0, 4.0]), np.zeros(2), P2, 0)
    # zero off-diagonal blocks: fall back to 1/L
    assert stepsize_bound(ep_diag, box2()) == pytest.approx(1.0 / 4.0)


def test_stepsize_bound_positive_for_generated_problems():
    for seed in range(100):
        problem = generate_quadratic_problem(3, horizon=0, seed=seed, kappa=1)
        ep = problem.epochs[0]
        assert stepsize_bound(ep, problem.box) > 0


def test_contraction_factor_examples():
    assert contraction_factor(0.1, 1.0, 5.0) == pytest.approx(0.9)
    assert contraction_factor(0.4, 1.5, 2.5) == pytest.approx(0.4)
    with pytest.raises(InvalidStepsize):
        contraction_factor(1.0 / 3.0, 3.0, 3.0)  # exactly zero is rejected
    with pytest.raises(InvalidStepsize):
        contraction_factor(2.0, 1.0, 5.0)


def test_contraction_factor_inside_unit_interval_for_valid_stepsizes():
    rng = np.random.default_rng(17)
    for _ in range(200):
        beta = rng.uniform(0.1, 2.0)
        lip = beta + rng.uniform(0.01, 3.0)
        cap = 2.0 / (beta + lip)
        gamma = rng.uniform(1e-6, cap * (1 - 1e-9))
        q = contraction_factor(gamma, beta, lip)
        assert 0.0 < q < 1.0


# ---------------------------------------------------------------------------
# minimizer oracle and drift
# ---------------------------------------------------------------------------

def test_oracle_unconstrained_interior():
    ep = quadratic_epoch(np.eye(3), np.zeros(3), Partition([1, 1, 1]), 0)
    box = BoxSet.symmetric(1.0, Partition([1, 1, 1]))
    u_hat = minimizer_oracle(ep, box)
    assert np.allclose(u_hat.data, 0.0, atol=1e-9)


def test_oracle_clamped_at_bounds():
    p = Partition([1, 1, 1])
    ep = quadratic_epoch(np.eye(3), -2.0 * np.ones(3), p, 0)
    box = BoxSet(np.zeros(3), np.ones(3), p)
    u_hat = minimizer_oracle(ep, box)
    assert np.allclose(u_hat.data, 1.0, atol=1e-9)


def test_oracle_matches_linear_solve_on_interior_optima():
    rng = np.random.default_rng(23)
    for seed in range(10):
        problem = generate_quadratic_problem(3, block_dims=[1, 2, 1], horizon=0,
                                             seed=seed, drift_scale=0.3, kappa=1)
        ep = problem.epochs[0]
        Q = ep.hessian(np.zeros(4))
        qvec = ep.gradient(np.zeros(4))
        direct = np.linalg.solve(Q, -qvec)
        if not problem.box.contains(direct):
            continue
        u_hat = problem.constants[0].minimizer
        assert np.linalg.norm(u_hat.data - direct) < 1e-8


def test_oracle_fixed_point_property():
    problem = generate_quadratic_problem(3, horizon=0, seed=5, kappa=1)
    c = problem.constants[0]
    u_hat = c.minimizer.data
    rng = np.random.default_rng(4)
    for _ in range(5):
        gamma = rng.uniform(1e-3, c.stepsize)
        stepped = problem.box.clip(u_hat - gamma * problem.epochs[0].gradient(u_hat))
        assert np.linalg.norm(stepped - u_hat) < 1e-9


def test_minimizer_drift():
    p = Partition([1, 1])
    box = box2()
    ep0 = quadratic_epoch(np.eye(2), np.zeros(2), p, 0)
    ep1 = quadratic_epoch(np.eye(2), np.zeros(2), p, 1)
    ep2 = quadratic_epoch(np.eye(2), np.array([-1.0, 0.0]), p, 2)
    problem = assemble_problem([ep0, ep1, ep2], box, 1)
    assert minimizer_drift(problem, 0) == pytest.approx(0.0, abs=1e-9)
    assert minimizer_drift(problem, 1) == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(IndexError):
        minimizer_drift(problem, 2)


def test_drift_matches_linear_solve_oracle():
    problem = generate_quadratic_problem(3, horizon=3, seed=11,
                                         drift_scale=0.3, kappa=2)
    solved = []
    for ep in problem.epochs:
        Q = ep.hessian(np.zeros(3))
        qvec = ep.gradient(np.zeros(3))
        u = np.linalg.solve(Q, -qvec)
        assert problem.box.contains(u), "test expects interior optima"
        solved.append(u)
    for t in range(3):
        expected = np.linalg.norm(solved[t + 1] - solved[t])
        assert minimizer_drift(problem, t) == pytest.approx(expected, abs=1e-7)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def test_generator_every_epoch_dominant():
    problem = generate_quadratic_problem(5, horizon=4, seed=21, kappa=3)
    for ep, c in zip(problem.epochs, problem.constants):
        dominant, beta = check_block_diagonal_dominance(
            ep.hessian(np.zeros(5)), problem.partition)
        assert dominant
        assert beta == pytest.approx(c.beta)
        assert beta >= 0.1 - 1e-12


def test_generator_deterministic_under_seed():
    a = generate_quadratic_problem(4, horizon=2, seed=42, kappa=2)
    b = generate_quadratic_problem(4, horizon=2, seed=42, kappa=2)
    z = np.zeros(4)
    for ea, eb in zip(a.epochs, b.epochs):
        assert np.array_equal(ea.hessian(z), eb.hessian(z))
        assert np.array_equal(ea.gradient(z), eb.gradient(z))
    for ca, cb in zip(a.constants, b.constants):
        assert np.array_equal(ca.minimizer.data, cb.minimizer.data)


def test_generator_at_reference_experiment_scale():
    problem = generate_quadratic_problem(15, horizon=10, seed=1, kappa=50)
    assert problem.n_agents == 15
    assert problem.horizon == 10
    assert all(0 < c.contraction < 1 for c in problem.constants)


def test_smallest_hessian_eigenvalue_dominates_beta():
    problem = generate_quadratic_problem(4, horizon=1, seed=8, kappa=2)
    rng = np.random.default_rng(2)
    points = latin_hypercube(problem.box, 100, rng)
    for ep, c in zip(problem.epochs, problem.constants):
        for u in points:
            lam_min = np.linalg.eigvalsh(ep.hessian(u))[0]
            assert lam_min >= c.beta - 1e-9


# ---------------------------------------------------------------------------
# feedback objective
# ---------------------------------------------------------------------------

def test_feedback_noiseless_matches_finite_differences():
    a = np.array([0.3, -0.2, 0.1])
    ep = make_feedback_objective(np.eye(3) * 2.0, a, reference=1.5,
                                 noise_std=0.0, seed=0,
                                 partition=Partition([1, 1, 1]))
    check_gradient(ep, BoxSet.symmetric(5.0, Partition([1, 1, 1])),
                   np.random.default_rng(1))


def test_feedback_noise_is_zero_mean():
    a = np.array([0.4, 0.2])
    ep = make_feedback_objective(np.eye(2) * 2.0, a, reference=0.5,
                                 noise_std=1000.0, seed=12, partition=P2)
    u = np.array([0.7, -0.3])
    clean = ep.oracle_gradient(u)
    draws = 10 ** 5
    acc = np.zeros(2)
    for _ in range(draws):
        acc += ep.gradient(u)
    mean = acc / draws
    se = np.abs(a) * 1000.0 / np.sqrt(draws)
    assert np.all(np.abs(mean - clean) <= 3.0 * se + 1e-12)


def test_feedback_noise_stream_is_seeded_and_resettable():
    a = np.array([0.4, 0.2])
    ep = make_feedback_objective(np.eye(2), a, 0.0, noise_std=10.0, seed=3,
                                 partition=P2)
    u = np.zeros(2)
    first = [ep.gradient(u).copy() for _ in range(4)]
    ep.reset_noise()
    second = [ep.gradient(u).copy() for _ in range(4)]
    for f, s in zip(first, second):
        assert np.array_equal(f, s)


def test_feedback_problem_with_reference_noise_level():
    problem = generate_feedback_problem(
        4, coupling=[0.2, 0.1, -0.1, 0.2], reference=[1.0, 2.0, 0.5],
        seed=6, noise_std=1000.0, kappa=3)
    assert problem.horizon == 2
    # verification path stays noiseless: Hessian-based constants are exact
    for ep, c in zip(problem.epochs, problem.constants):
        dominant, beta = check_block_diagonal_dominance(
            ep.hessian(np.zeros(4)), problem.partition)
        assert dominant and beta >= 0.1 - 1e-12
        assert 0 < c.contraction < 1


def test_latin_hypercube_stratifies_each_dimension():
    box = BoxSet(np.array([0.0, -2.0]), np.array([1.0, 2.0]), P2)
    pts = latin_hypercube(box, 10, np.random.default_rng(0))
    assert pts.shape == (10, 2)
    for d in range(2):
        frac = (pts[:, d] - box.lower[d]) / (box.upper[d] - box.lower[d])
        strata = np.sort(np.floor(frac * 10).astype(int))
        assert np.array_equal(strata, np.arange(10))


def test_oracle_reports_iteration_cap():
    from asynctrack.errors import ConvergenceFailure

    ep = quadratic_epoch(Q_COUPLED, np.array([3.0, -1.0]), P2, 0)
    with pytest.raises(ConvergenceFailure):
        minimizer_oracle(ep, box2(), max_iter=2)
