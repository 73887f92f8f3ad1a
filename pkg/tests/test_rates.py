import numpy as np
import pytest

from bregproj import _linalg, geometry as geo, legendre as lg, rates
from bregproj.controls import ControlScheme
from bregproj.oracles import sphere_grid_minmax
from bregproj.solver import FeasibilityProblem, SolveOptions, run_trials
from conftest import interior_point, make_function


def row_sets(A, b):
    return [geo.Hyperplane(A[i], float(b[i]), label=i) for i in range(A.shape[0])]


def random_affine_family(rng, f, n, m):
    z = interior_point(f, rng)
    A = rng.normal(size=(m, n))
    b = A @ z
    return row_sets(A, b), z, A, b


# -- projectors ---------------------------------------------------------------

def test_projector_rank_one_row():
    f = lg.quadratic(np.eye(3))
    a = np.array([1.0, 2.0, 2.0]) / 3.0  # unit norm
    Q = rates.constraint_projector(f, a[None, :], np.zeros(3))
    np.testing.assert_allclose(Q, np.outer(a, a), atol=1e-12)


def test_projector_idempotent_on_random_instances(rng):
    for name in ("boltzmann_shannon", "quadratic", "p_norm"):
        f = make_function(name, 5)
        x_star = interior_point(f, rng)
        A_i = rng.normal(size=(2, 5))
        Q = rates.constraint_projector(f, A_i, x_star)
        assert np.max(np.abs(Q @ Q - Q)) < 1e-10
        np.testing.assert_allclose(Q, Q.T, atol=1e-12)
        w = np.linalg.eigvalsh(Q)
        assert w.min() > -1e-12 and w.max() < 1 + 1e-12


def test_projector_matches_svd_oracle_entropy(rng):
    # H = diag(sqrt(x)) at the uniform point; compare to an orthonormal-basis
    # construction of the projector onto range(H A^T)
    f = lg.boltzmann_shannon(4)
    x_star = np.full(4, 0.7)
    A_i = rng.normal(size=(2, 4))
    Q = rates.constraint_projector(f, A_i, x_star)
    H = np.diag(np.sqrt(x_star))
    U, s, _ = np.linalg.svd(H @ A_i.T, full_matrices=False)
    U = U[:, s > 1e-12]
    np.testing.assert_allclose(Q, U @ U.T, atol=1e-10)


def test_projector_zero_operator():
    f = lg.p_norm(1.5, 2)
    # at x_star = 0 the conjugate Hessian vanishes, so H A^T = 0
    Q = rates.constraint_projector(f, np.array([[1.0, 0.0]]), np.zeros(2))
    np.testing.assert_allclose(Q, np.zeros((2, 2)))


# -- gamma constants -----------------------------------------------------------

def test_gamma_random_identity_rows():
    f = lg.quadratic(np.eye(2))
    sets = row_sets(np.eye(2), np.zeros(2))
    gamma = rates.gamma_random(f, sets, np.array([0.5, 0.5]), np.zeros(2))
    assert gamma == pytest.approx(0.5, abs=1e-12)


def test_gamma_random_single_set_is_one(rng):
    f = lg.quadratic(np.eye(3))
    sets = [geo.GeneralAffineSet(rng.normal(size=(2, 3)), np.zeros(2))]
    gamma = rates.gamma_random(f, sets, np.array([1.0]), np.zeros(3))
    assert gamma == pytest.approx(1.0, abs=1e-10)


def test_gamma_random_matches_eigen_oracle(rng):
    f = make_function("boltzmann_shannon", 8)
    sets, z, A, b = random_affine_family(rng, f, 8, 5)
    mu = rng.uniform(0.1, 1.0, 5)
    mu /= mu.sum()
    gamma = rates.gamma_random(f, sets, mu, z)
    # oracle: assemble the averaged projector from orthonormal bases
    H = np.diag(np.sqrt(f.conj_hess(f.grad(z))))
    Qbar = np.zeros((8, 8))
    for w, row in zip(mu, A):
        u, s, _ = np.linalg.svd((H @ row[:, None]), full_matrices=False)
        u = u[:, s > 1e-12]
        Qbar += w * (u @ u.T)
    vals = np.linalg.eigvalsh(Qbar)
    oracle = vals[vals > 8 * vals.max() * np.finfo(float).eps].min()
    assert gamma == pytest.approx(oracle, abs=1e-10)


def test_gamma_greedy_single_set(rng):
    f = lg.quadratic(np.eye(3))
    sets = [geo.GeneralAffineSet(rng.normal(size=(2, 3)), np.zeros(2))]
    lower, estimate = rates.gamma_greedy(f, sets, np.zeros(3))
    assert estimate == pytest.approx(1.0, abs=1e-9)
    assert lower <= estimate + 1e-12


def test_gamma_greedy_identity_rows_balanced_minimum():
    # min over the unit circle of max(v1^2, v2^2) = 1/2 at diagonal directions
    f = lg.quadratic(np.eye(2))
    sets = row_sets(np.eye(2), np.zeros(2))
    lower, estimate = rates.gamma_greedy(f, sets, np.zeros(2))
    assert estimate == pytest.approx(0.5, abs=1e-6)
    oracle = sphere_grid_minmax(
        [rates.constraint_projector(f, s, np.zeros(2)) for s in sets],
        np.eye(2), resolution=10_000)
    assert estimate == pytest.approx(oracle, abs=1e-3)


def test_gamma_greedy_matches_grid_oracle_dim2(rng):
    # families whose weighted range V has dimension 2
    for _ in range(3):
        f = make_function("quadratic", 2, rng)
        sets, z, A, b = random_affine_family(rng, f, 2, 4)
        lower, estimate = rates.gamma_greedy(f, sets, z)
        H = rates.hessian_factor(f, z)
        U = _linalg.orth_basis(H @ A.T)
        Qs = [rates.constraint_projector(f, s, z) for s in sets]
        oracle = sphere_grid_minmax(Qs, U, resolution=10_000)
        assert estimate == pytest.approx(oracle, abs=1e-3)
        assert lower <= estimate + 1e-9


def test_gamma_ordering_and_scale_invariance(rng):
    for name in ("boltzmann_shannon", "quadratic", "p_norm"):
        f = make_function(name, 5)
        sets, z, A, b = random_affine_family(rng, f, 5, 3)
        mu = np.full(3, 1.0 / 3.0)
        g_rand = rates.gamma_random(f, sets, mu, z)
        lower, est = rates.gamma_greedy(f, sets, z)
        assert 0.0 < g_rand <= est + 1e-9
        assert est <= 1.0 + 1e-9
        # rescaling one constraint leaves the constants unchanged
        scaled = list(sets)
        scaled[0] = geo.Hyperplane(-7.5 * A[0], -7.5 * float(b[0]), label=0)
        g2 = rates.gamma_random(f, scaled, mu, z)
        assert g2 == pytest.approx(g_rand, abs=1e-10)


# -- Kaczmarz specializations ---------------------------------------------------

def test_kaczmarz_identity_two_rows():
    f = lg.quadratic(np.eye(2))
    sg, sr = rates.kaczmarz_rates(f, np.eye(2), np.zeros(2), np.zeros(2))
    assert sr == pytest.approx(0.5, abs=1e-12)
    assert sg == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("m", [2, 3, 4, 5, 6])
def test_kaczmarz_identity_rows_match_eigen_oracle(m):
    f = lg.quadratic(np.eye(m))
    sg, sr = rates.kaczmarz_rates(f, np.eye(m), np.zeros(m), np.zeros(m))
    assert sr == pytest.approx(1.0 - 1.0 / m, abs=1e-12)


def test_kaczmarz_consistent_with_gamma_random(rng):
    # for row families under the Euclidean geometry the two formulas agree
    f = lg.quadratic(np.eye(4))
    A = rng.normal(size=(6, 4))
    z = rng.normal(size=4)
    b = A @ z
    sg, sr = rates.kaczmarz_rates(f, A, b, z)
    gamma = rates.gamma_random(f, row_sets(A, b), np.full(6, 1 / 6), z)
    assert sr == pytest.approx(1.0 - gamma, abs=1e-10)


def test_kaczmarz_zero_weighted_row_error():
    f = lg.p_norm(1.5, 2)
    with pytest.raises(ValueError):
        # at x_star = 0 the conjugate Hessian vanishes on every coordinate
        rates.kaczmarz_rates(f, np.eye(2), np.zeros(2), np.zeros(2))


# -- assumption checks ----------------------------------------------------------

def test_check_rate_assumptions_quadratic_rows(rng):
    f = lg.quadratic(np.eye(3))
    A = rng.normal(size=(2, 3))
    A /= np.linalg.norm(A, axis=1, keepdims=True)  # unit rows
    sets = row_sets(A, np.zeros(2))
    holds, sup = rates.check_rate_assumptions(f, sets, np.zeros(3))
    assert holds
    assert sup == pytest.approx(1.0, abs=1e-10)


def test_check_rate_assumptions_entropy_positive_point(rng):
    f = lg.boltzmann_shannon(3)
    sets, z, A, b = random_affine_family(rng, f, 3, 2)
    holds, sup = rates.check_rate_assumptions(f, sets, z)
    assert holds and np.isfinite(sup)


def test_check_rate_assumptions_constructed_violation():
    # p-norm at a solution with zero coordinates kills A * conj-Hessian
    f = lg.p_norm(1.5, 2)
    sets = [geo.Hyperplane(np.array([1.0, 0.0]), 0.0)]
    holds, _ = rates.check_rate_assumptions(f, sets, np.zeros(2))
    assert not holds


# -- exactness -------------------------------------------------------------------

def test_exactness_row_sketches_full_rank(rng):
    A = rng.normal(size=(3, 5))
    eye = np.eye(3)
    sketches = [eye[:, [i]] for i in range(3)]
    E = rates.averaged_sketch_projector(A, sketches, np.full(3, 1 / 3))
    assert rates.check_exactness(A, E)


def test_exactness_identity_sketch(rng):
    A = rng.normal(size=(3, 4))
    E = rates.averaged_sketch_projector(A, [np.eye(3)], np.array([1.0]))
    assert rates.check_exactness(A, E)


def test_exactness_constructed_negative_case():
    # sketches never touch the third row direction needed by range(A)
    A = np.eye(3)
    eye = np.eye(3)
    sketches = [eye[:, [0]], eye[:, [1]]]
    E = rates.averaged_sketch_projector(A, sketches, np.array([0.5, 0.5]))
    assert not rates.check_exactness(A, E)


# -- Monte-Carlo confirmations ----------------------------------------------------

def test_rate_report_for_row_family(rng):
    f = lg.quadratic(np.eye(3))
    A = rng.normal(size=(3, 3)) + 2 * np.eye(3)
    z = rng.normal(size=3)
    sets = row_sets(A, A @ z)
    report = rates.RateReport.for_family(f, sets, z)
    assert 0.0 < report.gamma_random <= report.gamma_greedy_estimate + 1e-9
    assert report.local_random_rate == pytest.approx(1 - report.gamma_random)
    assert report.assumptions_hold
    assert report.sigma_kaczmarz_random == pytest.approx(
        1.0 - rates.gamma_random(f, sets, np.full(3, 1 / 3), z), abs=1e-10)
    doc = report.to_json()
    assert set(doc) >= {"gamma_random", "gamma_greedy_lower", "local_greedy_rate",
                        "assumptions_hold", "assumption_sup_norm", "notes"}
    # wide sets suppress the row-family constants
    wide = [geo.GeneralAffineSet(A[:2], (A @ z)[:2]),
            geo.GeneralAffineSet(A[2:], (A @ z)[2:])]
    report2 = rates.RateReport.for_family(f, wide, z)
    assert report2.sigma_kaczmarz_random is None


def test_random_one_step_bound_near_solution(rng):
    # near the solution the mean contraction is within 10% of 1 - gamma
    f = lg.quadratic(np.eye(3))
    A = rng.normal(size=(3, 3)) + 2 * np.eye(3)
    z = rng.normal(size=3)
    b = A @ z
    sets = row_sets(A, b)
    mu = np.full(3, 1 / 3)
    gamma = rates.gamma_random(f, sets, mu, z)
    x0 = z + 1e-4 * rng.normal(size=3)
    fp = FeasibilityProblem(f, sets, x0)
    opts = SolveOptions(max_iterations=1, stop_residual=1e-16,
                        compute_dc_trace=True)
    traces = run_trials(fp, ControlScheme.random(mu, 0), opts,
                        trials=3000, seed=23)
    ratios = [t.dc_final / t.dc_sequence()[0] for t in traces]
    assert np.mean(ratios) <= (1.0 - gamma) * 1.1


def test_adaptive_improves_on_random_one_step(rng):
    # paired seeds, heterogeneous row norms
    f = lg.quadratic(np.eye(3))
    A = np.diag([1.0, 5.0, 0.2]) @ (rng.normal(size=(3, 3)) + 2 * np.eye(3))
    z = rng.normal(size=3)
    b = A @ z
    sets = row_sets(A, b)
    mu = np.full(3, 1 / 3)
    x0 = z + 0.3 * rng.normal(size=3)
    fp = FeasibilityProblem(f, sets, x0)
    opts = SolveOptions(max_iterations=1, stop_residual=1e-16,
                        compute_dc_trace=True)
    means = {}
    for kind in ("random", "adaptive"):
        traces = run_trials(fp, ControlScheme(kind, mu, 0), opts,
                            trials=3000, seed=29)
        means[kind] = np.mean([t.dc_final / t.dc_sequence()[0] for t in traces])
    assert means["adaptive"] <= means["random"] * 1.05
