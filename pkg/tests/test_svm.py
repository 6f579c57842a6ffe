import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invkern.errors import ConfigError, ConvergenceError, ValidationError
from invkern.group import GroupSpec, make_group
from invkern.kernels import BaseKernel, InvariantKernel, gram
from invkern.svm import (DualProblem, SvmModel, decision, dual_objective, kkt_report, load_model, save_model,
                         solve_dual)

from oracles import active_set_dual, projected_gradient_dual, random_dual_problem

X2 = np.array([[1.0, 0.0], [-1.0, 0.0]])
Y2 = np.array([1.0, -1.0])


@pytest.mark.parametrize("C", [0.5, 10.0])
def test_two_point_problem(C):
    p = DualProblem(X2 @ X2.T, Y2, box_C=C)
    m = solve_dual(p)
    assert np.allclose(m.alphas, [0.5, 0.5], atol=1e-12)
    assert m.bias == pytest.approx(0.0, abs=1e-12)
    assert decision(m, X2 @ np.array([2.0, 0.0])) == pytest.approx(2.0)
    assert decision(m, [0.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
    assert decision(m, X2 @ X2[0]) == pytest.approx(1.0)
    assert kkt_report(m, p).max_violation <= 1e-9


def test_default_box_is_one_over_n():
    p = DualProblem(X2 @ X2.T, Y2)
    assert p.box_C == 0.5


def test_kkt_report_flags_perturbation_and_infeasibility():
    p = DualProblem(X2 @ X2.T, Y2, box_C=10.0)
    m = solve_dual(p)
    bumped = SvmModel(m.alphas + np.array([0.1, 0.0]), m.bias, m.labels, m.box_C)
    rep = kkt_report(bumped, p)
    assert rep.equality_violation == pytest.approx(0.1)
    assert 0.05 <= rep.max_violation <= 0.2
    assert not rep.passed


def test_input_errors():
    with pytest.raises(ConfigError):
        DualProblem(np.eye(2), [1, 1])
    with pytest.raises(ValidationError):
        DualProblem(np.array([[1.0, 0.5], [0.0, 1.0]]), Y2)
    with pytest.raises(ConfigError):
        DualProblem(np.eye(3), Y2)
    with pytest.raises(ConfigError):
        DualProblem(np.eye(2), [1, 0])
    m = solve_dual(DualProblem(np.eye(2), Y2))
    with pytest.raises(ConfigError):
        decision(m, [1.0, 2.0, 3.0])


def test_non_convergence_reports_residual():
    rng = np.random.default_rng(3)
    K, y, _ = random_dual_problem(rng, 12)
    with pytest.raises(ConvergenceError) as e:
        solve_dual(DualProblem(K, y, box_C=5.0, max_iterations=1))
    assert e.value.residual > 0 and e.value.iterations == 1


def test_max_pooled_gram_needs_override(swap):
    X = np.array([[1.0, 0.2], [0.1, -1.0], [-0.5, 0.5]])
    G = gram(InvariantKernel(BaseKernel("linear"), swap, "max"), X)
    with pytest.raises(ValidationError):
        solve_dual(DualProblem(G, [1, -1, 1]))
    m = solve_dual(DualProblem(G, [1, -1, 1], allow_non_psd=True))
    assert m.jitter > 0 and "jitter" in m.kernel


def test_model_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    K, y, C = random_dual_problem(rng, 9)
    m = solve_dual(DualProblem(K, y, box_C=C, sample_ids=[f"s{i}" for i in range(9)]))
    m.kernel = {"base": BaseKernel("rbf", gamma=0.3).descriptor(), "pooling": "mean"}
    save_model(m, tmp_path / "m.svm")
    back = load_model(tmp_path / "m.svm")
    assert back.alphas.tobytes() == m.alphas.tobytes()
    assert back.bias.hex() == m.bias.hex()
    assert back.sample_ids == m.sample_ids and back.kernel == m.kernel and back.box_C == m.box_C


@pytest.mark.parametrize("seed", range(20))
def test_matches_exhaustive_active_set(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    K, y, C = random_dual_problem(rng, n)
    m = solve_dual(DualProblem(K, y, box_C=C))
    _, best = active_set_dual(K, y, C)
    ours = dual_objective(K, y, m.alphas)
    assert abs(ours - best) <= 1e-8 * max(1.0, abs(best))


@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_feasible_and_matches_projected_gradient(n, seed):
    rng = np.random.default_rng(seed)
    K, y, C = random_dual_problem(rng, n)
    p = DualProblem(K, y, box_C=C)
    m = solve_dual(p)
    assert np.all(m.alphas >= 0) and np.all(m.alphas <= C)
    assert abs(m.alphas @ y) <= 1e-10
    _, ref = projected_gradient_dual(K, y, C)
    ours = dual_objective(K, y, m.alphas)
    assert ours <= ref + 1e-6 * max(1.0, abs(ref))
    assert abs(ours - ref) <= 1e-6 * max(1.0, abs(ref))
    assert kkt_report(m, p).max_violation <= 1e-8


@given(st.integers(3, 10), st.integers(0, 2**32 - 1))
def test_permutation_equivariance(n, seed):
    rng = np.random.default_rng(seed)
    K, y, C = random_dual_problem(rng, n)
    perm = rng.permutation(n)
    a = solve_dual(DualProblem(K, y, box_C=C))
    b = solve_dual(DualProblem(K[np.ix_(perm, perm)], y[perm], box_C=C))
    oa, ob = dual_objective(K, y, a.alphas), dual_objective(K[np.ix_(perm, perm)], y[perm], b.alphas)
    assert abs(oa - ob) <= 1e-9 * max(1.0, abs(oa))


def test_one_shot_generalisation_on_orbits():
    # a separable problem under the mean-pooled invariant kernel, trained on untransformed samples only
    G = make_group(GroupSpec("cyclic_shift", 8))
    rng = np.random.default_rng(5)
    X = rng.standard_normal((10, 8))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    ik = InvariantKernel(BaseKernel("rbf", gamma=1.0), G)
    h = ik.pairwise(X, X[:2]) @ np.array([1.0, -1.0])
    y = np.where(h > np.median(h), 1.0, -1.0)
    m = solve_dual(DualProblem(gram(ik, X), y, box_C=1e4))
    train_margin = np.min(y * m.decision_many(ik.pairwise(X, X)))
    assert train_margin > 0
    for i in range(G.order):
        f = m.decision_many(ik.pairwise(G.apply(i, X), X))
        assert np.all(np.sign(f) == y)
        assert abs(np.min(y * f) - train_margin) <= 1e-8
