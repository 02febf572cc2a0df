import numpy as np
import pytest
from scipy import sparse

from hyhtm import FactorPair, NmfConfig, factorize, reconstruction_error
from hyhtm.errors import ConfigurationError, ContractError, ShapeError


def random_nonnegative(rng, n, m, density):
    matrix = sparse.random(n, m, density=density, random_state=int(rng.integers(1 << 31)))
    matrix.data = np.abs(matrix.data)
    return matrix.tocsr()


class TestFactorize:
    def test_rank_one_recovery(self):
        a = sparse.csr_matrix(np.outer([1.0, 2.0], [3.0, 0.0, 1.0]))
        pair = factorize(a, NmfConfig(n_topics=1, max_iter=500, tol=1e-12, seed=42))
        rel = reconstruction_error(a, pair.W, pair.H) / np.sqrt((a.data**2).sum())
        assert rel < 1e-4

    def test_all_zero_input_returns_zero_factors(self, caplog):
        a = sparse.csr_matrix((4, 3))
        with caplog.at_level("WARNING"):
            pair = factorize(a, NmfConfig(n_topics=2))
        assert not pair.W.any() and not pair.H.any()
        assert any("zero" in r.message for r in caplog.records)

    def test_negative_input_rejected(self):
        a = sparse.csr_matrix(np.array([[1.0, -0.5]]))
        with pytest.raises(ContractError):
            factorize(a, NmfConfig(n_topics=1))

    def test_objective_monotone_small_batch(self):
        rng = np.random.default_rng(21)
        for trial in range(8):
            n, m = int(rng.integers(5, 40)), int(rng.integers(5, 60))
            a = random_nonnegative(rng, n, m, float(rng.uniform(0.05, 1.0)))
            if a.nnz == 0:
                continue
            pair = factorize(a, NmfConfig(n_topics=3, max_iter=60, seed=trial))
            hist = pair.objective_history
            for prev, cur in zip(hist, hist[1:]):
                assert cur <= prev + 1e-10

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(22)
        a = random_nonnegative(rng, 20, 30, 0.3)
        p1 = factorize(a, NmfConfig(n_topics=4, max_iter=40, seed=7))
        p2 = factorize(a, NmfConfig(n_topics=4, max_iter=40, seed=7))
        assert np.array_equal(p1.W, p2.W)
        assert np.array_equal(p1.H, p2.H)
        assert p1.objective_history == p2.objective_history

    def test_zero_rows_give_zero_w_rows(self):
        dense = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 0.0], [0.5, 0.1, 3.0]])
        pair = factorize(sparse.csr_matrix(dense), NmfConfig(n_topics=2, max_iter=30))
        assert not pair.W[1].any()

    def test_nonnegativity_preserved(self):
        rng = np.random.default_rng(23)
        a = random_nonnegative(rng, 25, 35, 0.4)
        pair = factorize(a, NmfConfig(n_topics=5, max_iter=50, seed=1))
        assert pair.W.min() >= 0 and pair.H.min() >= 0

    def test_dense_input_accepted(self):
        rng = np.random.default_rng(24)
        a = rng.random((10, 12))
        pair = factorize(a, NmfConfig(n_topics=2, max_iter=30, seed=0))
        assert pair.W.shape == (10, 2) and pair.H.shape == (2, 12)

    def test_nndsvd_like_init_runs_and_is_deterministic(self):
        rng = np.random.default_rng(25)
        a = random_nonnegative(rng, 15, 20, 0.5)
        cfg = NmfConfig(n_topics=3, max_iter=40, seed=3, init="nndsvd-like")
        p1 = factorize(a, cfg)
        p2 = factorize(a, cfg)
        assert np.array_equal(p1.W, p2.W) and np.array_equal(p1.H, p2.H)
        hist = p1.objective_history
        for prev, cur in zip(hist, hist[1:]):
            assert cur <= prev + 1e-10

    def test_convergence_flag_and_history_length(self):
        a = sparse.csr_matrix(np.outer([1.0, 2.0, 3.0], [1.0, 0.5]))
        pair = factorize(a, NmfConfig(n_topics=1, max_iter=500, tol=1e-9, seed=0))
        assert pair.converged
        assert len(pair.objective_history) == pair.n_iter + 1

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            NmfConfig(n_topics=0).validate()
        with pytest.raises(ConfigurationError):
            NmfConfig(n_topics=2, max_iter=0).validate()
        with pytest.raises(ConfigurationError):
            NmfConfig(n_topics=2, tol=0.0).validate()
        with pytest.raises(ConfigurationError):
            NmfConfig(n_topics=2, init="fancy").validate()


class TestReconstructionError:
    def test_exact_factors_give_zero(self):
        w = np.array([[1.0], [2.0]])
        h = np.array([[3.0, 0.0, 1.0]])
        a = sparse.csr_matrix(w @ h)
        assert reconstruction_error(a, w, h) < 1e-9

    def test_zero_factors_give_input_norm(self):
        a = sparse.csr_matrix(np.array([[3.0, 4.0]]))
        w = np.zeros((1, 2))
        h = np.zeros((2, 2))
        assert reconstruction_error(a, w, h) == pytest.approx(5.0, abs=1e-12)

    def test_hand_value(self):
        a = np.array([[1.0]])
        assert reconstruction_error(a, np.array([[1.0]]), np.array([[0.5]])) == pytest.approx(0.5)

    def test_shape_mismatch(self):
        a = np.ones((2, 3))
        with pytest.raises(ShapeError):
            reconstruction_error(a, np.ones((2, 2)), np.ones((3, 3)))
        with pytest.raises(ShapeError):
            reconstruction_error(a, np.ones((3, 2)), np.ones((2, 3)))
