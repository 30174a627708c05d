import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msc import kernels, solvers
from msc.dictionary import Dictionary
from msc.errors import ArgumentError, ConvergenceError, NumericalError
from msc.solvers import (L0, L1, SparseCode, SolverConfig, batch_encode, kkt_violation,
                         lasso, lasso_encode, lasso_objective, omp_config, omp_encode,
                         omp_trace)

from conftest import unit_dictionary
from oracles import lasso_enumerate, soft_threshold

BACKENDS = ["python", "cython"]


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    impl = kernels.get_backend(request.param)
    for name in ("omp", "lasso_cd", "lasso_cd_batch", "lasso_path_batch"):
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return request.param


# ---------------------------------------------------------------- SparseCode

def test_sparse_code_invariants():
    with pytest.raises(ArgumentError):
        SparseCode(5, [2, 1], [1.0, 1.0], L1(0.1))
    with pytest.raises(ArgumentError):
        SparseCode(5, [1, 2], [1.0, 0.0], L1(0.1))
    with pytest.raises(ArgumentError):
        SparseCode(5, [1, 2], [1.0, 1.0], L0(1))
    c = SparseCode(5, [1, 3], [2.0, -1.0], L0(2))
    np.testing.assert_array_equal(c.dense(), [0, 2, 0, -1, 0])
    assert SparseCode.from_dense(c.dense(), L0(2)) == c


# ---------------------------------------------------------------------- OMP

def test_omp_single_atom(backend, rng):
    D = unit_dictionary(rng, 16, 20)
    code = omp_encode(3.0 * D[:, 7], D, omp_config(1))
    assert code.indices.tolist() == [7]
    assert code.values[0] == pytest.approx(3.0, abs=1e-12)
    _, norms = omp_trace(3.0 * D[:, 7], D, omp_config(1))
    assert norms[-1] == pytest.approx(0.0, abs=1e-12)


def test_omp_zero_signal(backend, rng):
    D = unit_dictionary(rng, 8, 12)
    assert omp_encode(np.zeros(8), D, omp_config(3)).nnz == 0


def _sparse_instance(rng, n, k, s):
    D = unit_dictionary(rng, n, k)
    y = np.zeros(k)
    support = rng.choice(k, s, replace=False)
    y[support] = rng.choice([-1.0, 1.0], s) * rng.uniform(1.0, 2.0, s)
    return D, y


def test_omp_recovers_generating_support(backend):
    recovered = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        D, y = _sparse_instance(rng, 64, 128, 5)
        code = omp_encode(D @ y, D, omp_config(5))
        if np.array_equal(code.indices, np.flatnonzero(y)):
            recovered += 1
            np.testing.assert_allclose(code.dense(), y, atol=1e-8)
    assert recovered >= 9


def test_omp_residual_monotone_and_distinct(backend):
    rng = np.random.default_rng(3)
    D = unit_dictionary(rng, 20, 50)
    for _ in range(20):
        x = rng.standard_normal(20)
        support, norms = omp_trace(x, D, omp_config(10))
        assert np.all(np.diff(norms) <= 1e-12)
        assert len(set(support.tolist())) == len(support)


def test_omp_ties_break_to_lowest_index(backend):
    D = np.eye(4)
    code = omp_encode(np.array([0.0, 1.0, 1.0, 0.5]), D, omp_config(1))
    assert code.indices.tolist() == [1]


def test_omp_singular_support(backend):
    # nearly collinear atoms: the second pick has a vanishing Cholesky pivot
    e = 1e-9
    D = np.array([[1.0, np.cos(e)], [0.0, np.sin(e)]])
    with pytest.raises(NumericalError, match="iteration 1"):
        omp_encode(np.array([1.0, 1.0]), D, SolverConfig(L0(2), tol=0.0))


def test_omp_sparsity_exceeds_k(rng):
    with pytest.raises(ArgumentError):
        omp_encode(np.ones(3), np.eye(3), omp_config(4))


# -------------------------------------------------------------------- LASSO

def test_lasso_zero_threshold(backend, rng):
    D = unit_dictionary(rng, 10, 20)
    x = rng.standard_normal(10)
    lam = 2 * np.abs(D.T @ x).max()
    assert lasso_encode(x, D, lasso(lam)).nnz == 0
    assert lasso_encode(x, D, lasso(lam * 0.99)).nnz == 1


def test_lasso_orthonormal_closed_form(backend, rng):
    Q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    x = rng.standard_normal(12)
    lam = 0.7
    y = lasso_encode(x, Q, lasso(lam)).dense()
    np.testing.assert_allclose(y, soft_threshold(Q.T @ x, lam / 2), atol=1e-12)


def test_lasso_matches_enumeration_oracle(backend):
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 10:
        D = unit_dictionary(rng, 8, 12)
        x = rng.standard_normal(8)
        lam = rng.uniform(0.4, 0.9) * 2 * np.abs(D.T @ x).max()
        best, _, certified = lasso_enumerate(x, D, lam, max_support=4)
        if not certified:
            continue
        y = lasso_encode(x, D, lasso(lam)).dense()
        assert lasso_objective(x, D, y, lam) == pytest.approx(best, abs=1e-6)
        checked += 1


def test_lasso_kkt_and_objective_below_zero_code(backend):
    rng = np.random.default_rng(11)
    for _ in range(30):
        n = int(rng.integers(8, 30))
        k = int(rng.integers(n, 2 * n + 1))
        D = unit_dictionary(rng, n, k)
        x = rng.standard_normal(n)
        lam = rng.uniform(0.05, 1.0)
        y = lasso_encode(x, D, lasso(lam)).dense()
        assert kkt_violation(x, D, y, lam) <= 1e-7
        assert lasso_objective(x, D, y, lam) <= x @ x


def test_lasso_nonconvergence_reports_violation(rng):
    D = unit_dictionary(rng, 20, 40)
    x = rng.standard_normal(20)
    with pytest.raises(ConvergenceError) as err:
        # one sweep with an impossible tolerance
        solvers._lasso_dense(x[:, None], D, np.ascontiguousarray(D.T @ D),
                             SolverConfig(L1(1e-3), max_iter=1, tol=1e-300))
    assert err.value.kkt_violation > 0


def test_lasso_needs_l1(rng):
    with pytest.raises(ArgumentError):
        lasso_encode(np.ones(3), np.eye(3), omp_config(1))


def test_encoding_deterministic(rng):
    D = unit_dictionary(rng, 10, 20)
    x = rng.standard_normal(10)
    assert lasso_encode(x, D, lasso(0.2)) == lasso_encode(x.copy(), D.copy(), lasso(0.2))


# -------------------------------------------------------------------- batch

@pytest.mark.parametrize("cfg", [lasso(0.3), omp_config(3)])
def test_batch_singleton(cfg, rng):
    D = Dictionary(unit_dictionary(rng, 10, 20))
    x = rng.standard_normal(10)
    single = solvers.encode(x, D, cfg)
    assert batch_encode(x[:, None], D, cfg) == [single]


@pytest.mark.parametrize("cfg", [lasso(0.3), omp_config(3)])
def test_batch_duplicates(cfg, rng):
    D = unit_dictionary(rng, 10, 20)
    x = rng.standard_normal(10)
    a, b = batch_encode(np.column_stack([x, x]), D, cfg)
    assert a == b


def test_batch_postconditions(backend, rng):
    D = unit_dictionary(rng, 16, 32)
    X = rng.standard_normal((16, 100))
    lam = 0.5
    for j, code in enumerate(batch_encode(X, D, lasso(lam))):
        assert kkt_violation(X[:, j], D, code.dense(), lam) <= 1e-7
    Y = np.zeros((32, 100))
    Y[rng.integers(0, 32, 100), np.arange(100)] = 2.0
    for j, code in enumerate(batch_encode(D @ Y, D, omp_config(1))):
        np.testing.assert_allclose(code.dense(), Y[:, j], atol=1e-10)


def test_backends_agree(rng):
    D = unit_dictionary(rng, 12, 24)
    G = np.ascontiguousarray(D.T @ D)
    X = rng.standard_normal((12, 5))
    out = {}
    for name in BACKENDS:
        impl = kernels.get_backend(name)
        Y = np.zeros((24, 5))
        impl.lasso_cd_batch(G, D.T @ X, 0.2, Y, 1000, 1e-10)
        P = np.zeros((24, 5))
        impl.lasso_path_batch(G, D.T @ X, 0.05, P)
        sup, coef, norms, _ = impl.omp(D, G, X[:, 0].copy(), 6, 1e-7)
        out[name] = (Y, sup, coef, norms, P)
    np.testing.assert_allclose(out["python"][0], out["cython"][0], atol=1e-9)
    np.testing.assert_array_equal(out["python"][1], out["cython"][1])
    np.testing.assert_allclose(out["python"][2], out["cython"][2], atol=1e-10)
    np.testing.assert_allclose(out["python"][4], out["cython"][4], atol=1e-10)


@pytest.mark.parametrize("name", BACKENDS)
def test_path_kernel_is_optimal(name):
    # the warm start alone already satisfies the optimality conditions
    rng = np.random.default_rng(5)
    impl = kernels.get_backend(name)
    D = unit_dictionary(rng, 20, 40)
    G = np.ascontiguousarray(D.T @ D)
    X = rng.standard_normal((20, 30))
    for lam in (0.01, 0.1, 1.0):
        P = np.zeros((40, 30))
        impl.lasso_path_batch(G, D.T @ X, lam, P)
        for j in range(30):
            assert kkt_violation(X[:, j], D, P[:, j], lam) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 2.0))
def test_lasso_kkt_property(seed, lam):
    rng = np.random.default_rng(seed)
    D = unit_dictionary(rng, 8, 16)
    x = rng.standard_normal(8)
    y = lasso_encode(x, D, lasso(lam)).dense()
    assert kkt_violation(x, D, y, lam) <= 1e-7
    assert lasso_objective(x, D, y, lam) <= x @ x + 1e-12
