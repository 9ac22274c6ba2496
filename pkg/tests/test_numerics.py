import numpy as np
import pytest

from efftemp.numerics import (
    NumericsError,
    ols_line,
    singular_values,
    sparse_matrix,
    spmv,
    sym_eig,
    sym_matrix,
)


def _random_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    return 0.5 * (a + a.T)


class TestSymEig:
    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_residual_and_orthonormality(self, seed):
        a = _random_symmetric(40, seed)
        w, v = sym_eig(a)
        assert np.all(np.diff(w) >= 0)
        res = a @ v - v * w
        assert np.max(np.abs(res)) < 1e-11 * max(1.0, np.max(np.abs(w)))
        gram = v.T @ v
        assert np.max(np.abs(gram - np.eye(40))) < 1e-12

    def test_diagonal_matrix(self):
        d = np.diag([3.0, -1.0, 2.0])
        w, v = sym_eig(d)
        assert np.allclose(w, [-1.0, 2.0, 3.0])
        # eigenvectors are signed unit vectors
        assert np.allclose(np.abs(v), np.eye(3)[:, [1, 2, 0]])

    def test_trace_identity(self):
        a = _random_symmetric(25, 9)
        w, _ = sym_eig(a)
        assert np.isclose(w.sum(), np.trace(a), atol=1e-10)

    def test_rejects_nonfinite(self):
        a = np.eye(3)
        a[0, 1] = np.nan
        with pytest.raises(NumericsError):
            sym_eig(sym_matrix(a))


class TestSparse:
    def test_duplicates_are_summed(self):
        m = sparse_matrix(3, [0, 0, 1], [1, 1, 2], [2.0, 3.0, 1.0])
        dense = m.toarray()
        assert dense[0, 1] == 5.0
        assert dense[1, 2] == 1.0

    def test_spmv_matches_dense(self):
        rng = np.random.default_rng(11)
        rows = rng.integers(0, 20, size=60)
        cols = rng.integers(0, 20, size=60)
        vals = rng.standard_normal(60)
        m = sparse_matrix(20, rows, cols, vals)
        x = rng.standard_normal(20)
        assert np.allclose(spmv(m, x), m.toarray() @ x, atol=1e-13)

    def test_spmv_dimension_mismatch(self):
        m = sparse_matrix(4, [0], [1], [1.0])
        with pytest.raises(NumericsError):
            spmv(m, np.ones(5))


class TestSingularValues:
    def test_descending_and_match_numpy(self):
        rng = np.random.default_rng(5)
        m = rng.standard_normal((6, 9)) + 1j * rng.standard_normal((6, 9))
        s = singular_values(m)
        assert np.all(np.diff(s) <= 0)
        assert np.allclose(s, np.linalg.svd(m, compute_uv=False), atol=1e-12)


class TestOlsLine:
    def test_exact_line_recovered(self):
        x = np.linspace(0.0, 5.0, 17)
        y = -0.7 * x + 2.3
        fit = ols_line(x, y)
        assert abs(fit.slope + 0.7) < 1e-12
        assert abs(fit.intercept - 2.3) < 1e-12
        assert fit.r_squared > 1.0 - 1e-12
        assert fit.slope_stderr < 1e-12

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_normal_equations_oracle(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(30)
        y = 1.5 * x - 0.4 + 0.3 * rng.standard_normal(30)
        fit = ols_line(x, y)

        # independent oracle: solve the normal equations directly
        A = np.stack([x, np.ones_like(x)], axis=1)
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        assert abs(fit.slope - coef[0]) < 1e-10
        assert abs(fit.intercept - coef[1]) < 1e-10

        resid = y - A @ coef
        dof = len(x) - 2
        sxx = np.sum((x - x.mean()) ** 2)
        stderr = np.sqrt(resid @ resid / dof / sxx)
        assert abs(fit.slope_stderr - stderr) < 1e-10

        r = np.corrcoef(x, y)[0, 1]
        assert abs(fit.r_squared - r * r) < 1e-10

    def test_flat_y_convention(self):
        x = np.arange(6.0)
        y = np.full(6, 3.0)
        fit = ols_line(x, y)
        assert fit.slope == 0.0
        assert fit.intercept == 3.0
        assert fit.r_squared == 0.0
        assert fit.slope_stderr == 0.0

    def test_too_few_points_rejected(self):
        with pytest.raises(NumericsError):
            ols_line(np.array([0.0, 1.0]), np.array([1.0, 2.0]))

    def test_degenerate_x_rejected(self):
        with pytest.raises(NumericsError):
            ols_line(np.full(5, 2.0), np.arange(5.0))
