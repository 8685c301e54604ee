import math

import numpy as np
import pytest

from mgdm import constants as C
from mgdm.data import (BatchMoments, DataSet, SimConfig, full_moments, generate_dataset,
                       make_batch_plan, partition_moments)
from mgdm.errors import InvalidInput, SingularMatrix
from mgdm.linalg import block_ones, build_Z
from mgdm.optimizer import GdmConfig, ols, run_mgdm
from mgdm.stability import (asymptotic_variance, assemble_omega, bias_term, circulant_pattern,
                            d_gamma_closed, d_gamma_dense, projected_inverse, shuffle_error_scan,
                            shuffle_partition, solve_stable, stable_for_partition)


def random_moments(M, p, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(M):
        B = rng.standard_normal((3 * p, p))
        out.append(BatchMoments(sxx=B.T @ B / (3 * p), sxy=rng.standard_normal(p)))
    return out


def recursion_matrix(moments, alpha, gamma):
    """Matrix of the map theta -> fixed-point residual of one epoch, read off
    column by column.  Block m of the residual is
    theta_m - theta_{m-1} + gamma (theta_{m-2} - theta_{m-1}) + alpha S_m theta_{m-1}
    (indices cyclic), i.e. the batch update evaluated at a periodic orbit."""
    M, p = len(moments), moments[0].sxx.shape[0]
    q = M * p

    def residual(theta):
        th = theta.reshape(M, p)
        r = np.empty((M, p))
        for m in range(M):
            prev, prev2 = th[(m - 1) % M], th[(m - 2) % M]
            v = gamma * (prev2 - prev) + alpha * (moments[m].sxx @ prev)
            r[m] = th[m] - (prev - v)
        return r.ravel()

    return np.column_stack([residual(e) for e in np.eye(q)])


def homogeneous_dataset(M, n, p, seed):
    rng = np.random.default_rng(seed)
    Xb = rng.standard_normal((n, p))
    yb = Xb @ np.arange(1.0, p + 1) + rng.standard_normal(n)
    ds = DataSet(X=np.tile(Xb, (M, 1)), y=np.tile(yb, M))
    batches = np.arange(M * n).reshape(M, n)
    return ds, batches


def test_two_batch_example():
    bm = BatchMoments(sxx=np.array([[1.0]]), sxy=np.array([1.0]))
    sys = assemble_omega([bm, bm], 0.1, 0.5)
    # Delta = 1.4; the gamma band lands on the diagonal for two batches
    assert np.allclose(sys.omega, [[1.5, -1.4], [-1.4, 1.5]], atol=1e-15)
    assert np.allclose(sys.omega, recursion_matrix([bm, bm], 0.1, 0.5), atol=1e-15)


@pytest.mark.parametrize("M,p", [(1, 2), (2, 3), (3, 1), (5, 2), (10, 3)])
def test_omega_matches_recursion(M, p):
    mom = random_moments(M, p, seed=M * 10 + p)
    alpha, gamma = 0.07, 0.4
    sys = assemble_omega(mom, alpha, gamma)
    assert np.max(np.abs(sys.omega - recursion_matrix(mom, alpha, gamma))) <= 1e-14
    assert np.max(np.abs(sys.omega - sys.a_mat - alpha * sys.b_mat)) <= C.DECOMPOSITION_TOL
    E = block_ones(M, p)
    assert np.max(np.abs(sys.a_mat @ E)) <= 1e-12
    assert np.max(np.abs(sys.a_mat.T @ E)) <= 1e-12
    assert sys.q == M * p


def test_block_pattern():
    M, p, alpha, gamma = 6, 2, 0.05, 0.3
    mom = random_moments(M, p, 1)
    W = assemble_omega(mom, alpha, gamma).omega
    blk = lambda i, j: W[i * p:(i + 1) * p, j * p:(j + 1) * p]
    for m in range(M):
        assert np.allclose(blk(m, m), np.eye(p))
        assert np.allclose(blk(m, (m - 1) % M), -((1 + gamma) * np.eye(p) - alpha * mom[m].sxx))
        assert np.allclose(blk(m, (m - 2) % M), gamma * np.eye(p))
        for j in set(range(M)) - {m, (m - 1) % M, (m - 2) % M}:
            assert np.all(blk(m, j) == 0)


def test_single_batch_collapses_to_ols():
    ds = generate_dataset(SimConfig(N=200, p=3, seed=0))
    sol = stable_for_partition(ds, [np.arange(200)], 0.05, 0.5)
    assert np.allclose(sol.per_batch[0], ols(ds), atol=1e-12)


def test_assembly_errors():
    mom = random_moments(3, 2, 0)
    with pytest.raises(SingularMatrix):
        assemble_omega(mom, 0.1, 1.0)
    bad = mom[:2] + [BatchMoments(sxx=np.eye(3), sxy=np.zeros(3))]
    with pytest.raises(InvalidInput):
        assemble_omega(bad, 0.1, 0.5)
    with pytest.raises(InvalidInput):
        assemble_omega([], 0.1, 0.5)
    with pytest.raises(SingularMatrix):
        solve_stable(assemble_omega(mom, 0.0, 0.5))


def test_stable_solution_residual_and_block_equations():
    ds = generate_dataset(SimConfig(N=2000, p=5, seed=4))
    parts = make_batch_plan(ds.N, 200, "fixed", 1, 4).epoch(0)
    mom = partition_moments(ds, parts)
    for alpha, gamma in [(0.01, 0.5), (0.1, 0.0), (0.05, 0.9), (0.1, 3.0)]:
        sys = assemble_omega(mom, alpha, gamma)
        sol = solve_stable(sys)
        rhs = alpha * sys.sxy_star
        assert sol.residual <= C.STABLE_RESIDUAL_TOL * max(1.0, np.linalg.norm(rhs))
        th = sol.per_batch
        M = len(mom)
        for m in range(M):
            lhs = (th[m] - ((1 + gamma) * np.eye(5) - alpha * mom[m].sxx) @ th[m - 1]
                   + gamma * th[m - 2])
            assert np.linalg.norm(lhs - alpha * mom[m].sxy) <= C.BLOCK_EQUATION_TOL


def test_homogeneous_batches_recover_ols():
    ds, batches = homogeneous_dataset(M=4, n=30, p=3, seed=2)
    sol = stable_for_partition(ds, batches, 0.05, 0.5)
    for m in range(4):
        assert np.linalg.norm(sol.per_batch[m] - ols(ds)) <= 1e-10
    sys = assemble_omega(partition_moments(ds, batches), 0.05, 0.5)
    assert np.linalg.norm(bias_term(sys, ols(ds))) <= 1e-12


def test_noiseless_data_scan_is_zero():
    # every batch satisfies its own normal equations at the common coefficients
    rng = np.random.default_rng(0)
    X = rng.standard_normal((200, 3))
    ds = DataSet(X=X, y=X @ np.array([1.0, -2.0, 0.5]))
    scan = shuffle_error_scan(ds, 5, 0.05, 0.5, seed=1, n=20)
    assert np.all(scan.values <= 1e-10)


def test_matches_long_iteration():
    ds = generate_dataset(SimConfig(N=5000, p=50, kappa=1.0, seed=0))
    plan = make_batch_plan(ds.N, 500, "fixed", 2000, 0)
    sol = stable_for_partition(ds, plan.epoch(0), 0.01, 0.5)
    tr = run_mgdm(ds, plan, GdmConfig(0.01, 0.5, 2000))
    assert np.linalg.norm(tr.theta_final - sol.last) <= 1e-7


def test_projection_orthogonality():
    for M, p in [(2, 1), (5, 3), (10, 4)]:
        P = np.hstack([block_ones(M, p) / math.sqrt(M), np.kron(build_Z(M), np.eye(p))])
        assert np.linalg.norm(P.T @ P - np.eye(M * p)) <= 1e-11


def test_a22_frobenius_norm():
    for M, p in [(3, 2), (5, 1), (10, 3)]:
        for gamma in (0.0, 0.5, 2.0):
            mom = random_moments(M, p, 0)
            sys = assemble_omega(mom, 0.1, gamma)
            P2 = np.kron(build_Z(M), np.eye(p))
            A22 = P2.T @ sys.a_mat @ P2
            expected = ((1 + gamma) ** 2 + gamma ** 2 + 1) * M * p
            assert math.isclose(np.linalg.norm(A22) ** 2, expected, rel_tol=1e-12)


def test_bias_structured_matches_literal():
    from mgdm.stability import _bias_structured
    ds = generate_dataset(SimConfig(N=1200, p=4, seed=6))
    parts = make_batch_plan(ds.N, 200, "fixed", 1, 6).epoch(0)
    mom = partition_moments(ds, parts)
    th = ols(ds)
    fm = full_moments(ds)
    for gamma in (0.0, 0.5, 4.0):
        E = bias_term(assemble_omega(mom, 0.1, gamma), th)
        Q = projected_inverse(len(mom), gamma)
        E2 = _bias_structured(mom, Q, th, lambda v: np.linalg.solve(fm.sxx, v))
        assert np.allclose(E, E2, atol=1e-10)
        # the bias does not depend on alpha
        assert np.allclose(E, bias_term(assemble_omega(mom, 0.02, gamma), th), atol=1e-12)


def test_bias_first_order_expansion():
    ds = generate_dataset(SimConfig(N=2000, p=3, seed=5))
    parts = make_batch_plan(ds.N, 400, "fixed", 1, 5).epoch(0)
    mom = partition_moments(ds, parts)
    th = ols(ds)
    E = bias_term(assemble_omega(mom, 0.1, 0.5), th)
    errs = []
    for alpha in (0.04, 0.02, 0.01, 0.005):
        sol = solve_stable(assemble_omega(mom, alpha, 0.5))
        errs.append(np.linalg.norm((sol.theta_star - np.tile(th, len(mom))) / alpha - E))
    ratios = np.array(errs[1:]) / np.array(errs[:-1])
    assert np.all(np.abs(ratios - 0.5) <= 0.05)


def test_large_gamma_moves_toward_ols():
    ds = generate_dataset(SimConfig(N=5000, p=50, seed=1))
    parts = make_batch_plan(ds.N, 500, "fixed", 1, 1).epoch(0)
    mom = partition_moments(ds, parts)
    th = ols(ds)
    dist = [np.linalg.norm(solve_stable(assemble_omega(mom, 0.1, g)).theta_star - np.tile(th, 10))
            for g in (2, 5, 10, 50)]
    assert all(a > b for a, b in zip(dist, dist[1:]))


def test_dgamma_examples():
    d = d_gamma_closed(2, 0.0)
    assert np.allclose(d.a_vec, [0.25, -0.25])
    assert math.isclose(d.value, math.sqrt(2) / 4)
    d = d_gamma_closed(10, 0.0)
    assert abs(np.sum(d.a_vec ** 2) - 0.825) <= 1e-12
    assert abs(d.value - 0.908295) < 1e-6
    with pytest.raises(InvalidInput):
        d_gamma_closed(5, 1.0)
    with pytest.raises(InvalidInput):
        d_gamma_closed(1, 0.5)
    with pytest.raises(InvalidInput):
        d_gamma_closed(5, -0.1)


@pytest.mark.parametrize("M", [2, 3, 5, 10])
@pytest.mark.parametrize("gamma", [0.0, 1e-4, 0.3, 0.9, 1.1, 2.0, 5.0])
def test_dgamma_closed_matches_dense(M, gamma):
    d = d_gamma_closed(M, gamma)
    assert abs(d.value - d_gamma_dense(M, gamma)) <= 1e-10
    assert abs(np.sum(d.a_vec)) <= C.DGAMMA_SUM_TOL
    # a is the first row of Q
    assert np.allclose(d.a_vec, projected_inverse(M, gamma)[0], atol=1e-10)


def test_two_batch_dgamma_closed_form():
    for gamma in (0.0, 0.3, 2.0):
        assert math.isclose(d_gamma_closed(2, gamma).value, math.sqrt(2) / (4 * (1 + gamma)),
                            rel_tol=1e-12)


@pytest.mark.parametrize("M", [2, 3, 7, 10])
def test_q_is_circulant_generalized_inverse(M):
    for gamma in (0.0, 0.4, 3.0):
        Q = projected_inverse(M, gamma)
        At = circulant_pattern(M, gamma)
        assert np.linalg.norm(Q @ At @ Q - Q) <= 1e-10
        for r in range(M - 1):
            assert np.allclose(Q[r + 1], np.roll(Q[r], 1), atol=1e-12)


def test_dgamma_curve_shape():
    rising = [d_gamma_closed(10, g).value for g in (0, 0.2, 0.4, 0.6, 0.8)]
    assert all(a < b for a, b in zip(rising, rising[1:]))
    falling = [d_gamma_closed(10, g).value for g in (1.5, 2, 4, 8, 10)]
    assert all(a > b for a, b in zip(falling, falling[1:]))
    grid = [0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.5, 2, 4, 8, 10]
    vals = [d_gamma_closed(10, g).value for g in grid]
    assert 0 < grid[int(np.argmax(vals))] < 1


def test_dgamma_small_gamma_stable():
    for gamma in (1e-3, 1e-6, 1e-9):
        assert abs(d_gamma_closed(10, gamma).value - d_gamma_closed(10, 0.0).value) < 1e-2
    assert abs(d_gamma_closed(10, 1e-9).value - d_gamma_closed(10, 0.0).value) < 1e-7


def test_asymptotic_variance():
    S = np.array([[2.0, 1.0], [1.0, 2.0]])
    assert np.allclose(asymptotic_variance(0.0, 0.5, 5, 1.5, S), 2.25 * np.linalg.inv(S))
    V = asymptotic_variance(0.1, 0.0, 10, 1.0, np.eye(1))
    assert math.isclose(V[0, 0], 1.0825, rel_tol=1e-12)
    with pytest.raises(SingularMatrix):
        asymptotic_variance(0.1, 0.5, 5, 1.0, np.ones((2, 2)))


def test_shuffle_scan_single_partition_matches_bias_term():
    ds = generate_dataset(SimConfig(N=1000, p=3, seed=2))
    scan = shuffle_error_scan(ds, 1, 0.1, 0.5, seed=7, n=100)
    parts = shuffle_partition(ds.N, 100, 7, 0)
    E = bias_term(assemble_omega(partition_moments(ds, parts), 0.1, 0.5), ols(ds))
    assert math.isclose(scan.values[0], np.linalg.norm(E), rel_tol=1e-10)
    assert scan.max == scan.values.max()


def test_shuffle_scan_deterministic_across_workers():
    ds = generate_dataset(SimConfig(N=1000, p=3, seed=2))
    a = shuffle_error_scan(ds, 12, 0.1, 0.5, seed=3, n=100)
    b = shuffle_error_scan(ds, 12, 0.1, 0.5, seed=3, n=100, workers=4)
    assert np.array_equal(a.values, b.values)
    with pytest.raises(InvalidInput):
        shuffle_error_scan(ds, 0, 0.1, 0.5, seed=3, n=100)
    with pytest.raises(InvalidInput):
        shuffle_error_scan(ds, 2, 0.1, 1.0, seed=3, n=100)
    with pytest.raises(InvalidInput):
        shuffle_error_scan(ds, 2, 0.1, 0.5, seed=3, n=300)
