import math
import threading

import numpy as np
import pytest

from mvgeostat import NotPositiveDefiniteError, TiledMatrix, cholesky
from mvgeostat.linalg import cholesky_graph, quadratic_form, solve_triangular
from mvgeostat.taskgraph import TaskGraph, default_workers


def spd(n, seed=0):
    b = np.random.default_rng(seed).standard_normal((n, n))
    return b @ b.T + n * np.eye(n)


class TestCholesky:
    @pytest.mark.parametrize("n, nb", [(1, 1), (7, 3), (64, 64)])
    def test_identity(self, n, nb):
        f = cholesky(TiledMatrix(np.eye(n), nb))
        assert np.array_equal(f.to_dense(), np.eye(n))
        assert f.logdet == 0.0

    def test_two_by_two(self):
        f = cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
        np.testing.assert_allclose(f.to_dense(), [[2, 0], [1, math.sqrt(2)]], rtol=1e-15)
        assert f.logdet == pytest.approx(math.log(8), rel=1e-15)

    @pytest.mark.parametrize("nb", [64, 16, 10, 7])
    def test_reconstruction(self, nb):
        a = spd(64)
        f = cholesky(TiledMatrix(a.copy(), nb))
        l = f.to_dense()
        assert np.max(np.abs(l @ l.T - a)) <= 1e-10
        assert np.array_equal(l, np.tril(l))
        assert f.logdet == pytest.approx(np.linalg.slogdet(a)[1], rel=1e-13)

    def test_tiling_independent(self):
        a = spd(50, 1)
        ref = cholesky(TiledMatrix(a.copy(), 50)).to_dense()
        for nb in (8, 13, 25):
            np.testing.assert_allclose(cholesky(TiledMatrix(a.copy(), nb)).to_dense(), ref, rtol=1e-12, atol=1e-13)

    def test_worker_count_invariant(self):
        a = TiledMatrix(spd(96, 2), 16)
        one = cholesky(a, workers=1).to_dense()
        four = cholesky(a, workers=4).to_dense()
        assert np.array_equal(one, four)

    def test_input_preserved_unless_overwrite(self):
        a = TiledMatrix(spd(20), 8)
        before = a.data.copy()
        cholesky(a)
        assert np.array_equal(a.data, before)
        f = cholesky(a, overwrite=True)
        assert f.L.data is a.data

    def test_not_positive_definite_reports_pivot(self):
        a = np.diag([1.0, 2.0, 3.0, -1.0, 5.0])
        with pytest.raises(NotPositiveDefiniteError) as info:
            cholesky(TiledMatrix(a, 2))
        assert info.value.pivot == 3
        assert isinstance(info.value, np.linalg.LinAlgError)

    def test_graph_task_counts(self):
        g = cholesky_graph(TiledMatrix(np.eye(40), 10))
        assert g.counts() == {"potrf": 4, "trsm": 6, "syrk": 6, "gemm": 4}


class TestSolves:
    def test_identity(self):
        f = cholesky(np.eye(4))
        b = np.arange(8.0).reshape(4, 2)
        assert np.array_equal(solve_triangular(f, b, "forward"), b)
        assert np.array_equal(solve_triangular(f, b, "backward"), b)

    def test_hand_solve(self):
        f = cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
        np.testing.assert_allclose(solve_triangular(f, [2.0, 1 + math.sqrt(2)]), [1.0, 1.0], rtol=1e-15)

    def test_residuals(self):
        a = spd(32, 3)
        f = cholesky(TiledMatrix(a, 8))
        b = np.random.default_rng(4).standard_normal((32, 3))
        l = f.to_dense()
        assert np.linalg.norm(l @ solve_triangular(f, b, "forward") - b) <= 1e-10
        assert np.linalg.norm(l.T @ solve_triangular(f, b, "backward") - b) <= 1e-10
        assert np.linalg.norm(a @ f.solve(b) - b) <= 1e-10

    def test_bad_side_and_shape(self):
        f = cholesky(np.eye(3))
        with pytest.raises(ValueError):
            solve_triangular(f, np.ones(3), "sideways")
        with pytest.raises(ValueError):
            f.solve_lower(np.ones(4))


class TestQuadraticForm:
    def test_identity_and_zero(self):
        f = cholesky(np.eye(5))
        z = np.array([1.0, -2.0, 3.0, 0.5, 0.0])
        assert quadratic_form(f, z) == pytest.approx(z @ z)
        assert quadratic_form(f, np.zeros(5)) == 0.0

    def test_explicit_inverse(self):
        a = spd(16, 5)
        z = np.random.default_rng(6).standard_normal(16)
        want = z @ np.linalg.inv(a) @ z
        assert quadratic_form(cholesky(TiledMatrix(a, 4)), z) == pytest.approx(want, rel=1e-9)


class TestTaskGraph:
    def test_dependencies_respected_in_parallel(self):
        order, lock = [], threading.Lock()

        def log(name):
            with lock:
                order.append(name)

        g = TaskGraph()
        g.submit(log, "w1", writes=["a"])
        g.submit(log, "r1", reads=["a"], writes=["b"])
        g.submit(log, "r2", reads=["a"], writes=["c"])
        g.submit(log, "w2", writes=["a"])
        g.submit(log, "join", reads=["b", "c", "a"])
        g.run(workers=3)
        assert order[0] == "w1"
        assert order.index("w2") > max(order.index("r1"), order.index("r2"))
        assert order[-1] == "join"

    def test_exceptions_propagate(self):
        def boom():
            raise RuntimeError("task failed")

        g = TaskGraph()
        g.submit(boom, writes=[0])
        g.submit(lambda: None, reads=[0])
        with pytest.raises(RuntimeError, match="task failed"):
            g.run(workers=2)

    def test_default_workers(self, monkeypatch):
        monkeypatch.setenv("GEOSTAT_THREADS", "3")
        assert default_workers() == 3
        monkeypatch.setenv("GEOSTAT_THREADS", "junk")
        assert default_workers() == 1
