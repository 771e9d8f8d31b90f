import numpy as np
import pytest

from sgsqp import (
    ProxSpec,
    prox,
    prox_value,
    smat,
    solve_block1,
    subgrad_residual,
    svec,
    svec_dim,
)
from sgsqp.errors import NeedsShift
from sgsqp.oracle import dense_qp_minimize


class TestSvec:
    def test_dim(self):
        assert [svec_dim(n) for n in (1, 2, 3, 5)] == [1, 3, 6, 15]

    def test_round_trip_and_isometry(self, rng):
        for n in (1, 2, 4, 7):
            A = rng.standard_normal((n, n))
            X = A + A.T
            v = svec(X)
            assert v.shape == (svec_dim(n),)
            np.testing.assert_allclose(smat(v, n), X, atol=1e-14)
            assert np.linalg.norm(v) == pytest.approx(np.linalg.norm(X, "fro"),
                                                      rel=1e-13)

    def test_inner_product_preserved(self, rng):
        A = rng.standard_normal((3, 3))
        B = rng.standard_normal((3, 3))
        X, Y = A + A.T, B + B.T
        assert svec(X) @ svec(Y) == pytest.approx(np.sum(X * Y), rel=1e-13)

    def test_diag_entries_unscaled(self):
        v = svec(np.diag([1.0, -1.0]))
        np.testing.assert_array_equal(v, [1.0, 0.0, -1.0])


class TestClosedForms:
    def test_zero_is_identity(self, rng):
        v = rng.standard_normal(4)
        np.testing.assert_array_equal(prox(ProxSpec.zero(), 3.0, v), v)

    def test_l1_soft_threshold(self):
        spec = ProxSpec.l1(1.0)
        assert prox(spec, 1.0, np.array([2.0]))[0] == 1.0
        assert prox(spec, 2.0, np.array([2.0]))[0] == 1.5
        assert prox(spec, 1.0, np.array([0.5]))[0] == 0.0
        assert prox(spec, 1.0, np.array([-2.0]))[0] == -1.0

    def test_nonneg_and_box_clip(self):
        np.testing.assert_array_equal(
            prox(ProxSpec.nonneg(), 1.0, np.array([-1.0, 2.0])), [0.0, 2.0])
        np.testing.assert_array_equal(
            prox(ProxSpec.box(-1.0, 2.0), 5.0, np.array([-5.0, 0.5, 9.0])),
            [-1.0, 0.5, 2.0])

    def test_psd_projection_kills_negative_eigenvalue(self):
        spec = ProxSpec.psd_cone(2)
        out = smat(prox(spec, 1.0, svec(np.diag([1.0, -1.0]))), 2)
        np.testing.assert_allclose(out, np.diag([1.0, 0.0]), atol=1e-14)

    def test_psd_projection_psd_and_optimal(self, rng):
        spec = ProxSpec.psd_cone(4)
        A = rng.standard_normal((4, 4))
        X = A + A.T
        P = smat(prox(spec, 1.0, svec(X)), 4)
        assert np.linalg.eigvalsh(P).min() >= -1e-12
        # the projection residual must be orthogonal to the projection
        assert np.sum(P * (X - P)) == pytest.approx(0.0, abs=1e-10)


class TestValuesAndSubgradients:
    def test_values(self):
        assert prox_value(ProxSpec.zero(), np.array([4.0])) == 0.0
        assert prox_value(ProxSpec.l1(2.0), np.array([3.0, -1.0])) == 8.0
        assert prox_value(ProxSpec.nonneg(), np.array([0.0, 1.0])) == 0.0
        assert prox_value(ProxSpec.nonneg(), np.array([-1e-3, 1.0])) == np.inf
        assert prox_value(ProxSpec.psd_cone(2), svec(np.eye(2))) == 0.0
        assert prox_value(ProxSpec.psd_cone(2),
                          svec(np.diag([1.0, -1.0]))) == np.inf

    def test_nonneg_subgradient_distance(self):
        r = subgrad_residual(ProxSpec.nonneg(), np.array([1.0, 0.0]),
                             np.array([2.0, -3.0]))
        assert r == pytest.approx(2.0)

    def test_l1_subgradient_distance(self):
        spec = ProxSpec.l1(1.0)
        # at x > 0 the subdifferential is {lam}
        assert subgrad_residual(spec, np.array([2.0]),
                                np.array([1.0])) == pytest.approx(0.0)
        # at x = 0 it is [-lam, lam]
        assert subgrad_residual(spec, np.array([0.0]),
                                np.array([1.5])) == pytest.approx(0.5)

    @pytest.mark.parametrize("spec", [
        ProxSpec.zero(), ProxSpec.l1(0.7), ProxSpec.nonneg(),
        ProxSpec.box(-0.5, 1.5), ProxSpec.psd_cone(3),
    ], ids=["zero", "l1", "nonneg", "box", "psd"])
    def test_prox_satisfies_optimality(self, spec, rng):
        """x = prox(v) iff mu (v - x) lands in the subdifferential at x."""
        n = svec_dim(3) if spec.kind == "psd_cone" else 5
        for mu in (0.3, 1.0, 4.0):
            v = rng.standard_normal(n)
            x = prox(spec, mu, v)
            assert subgrad_residual(spec, x, mu * (v - x)) <= 1e-10

    def test_nonpositive_mu_rejected(self):
        from sgsqp.errors import DiagonalNotPD, InvalidParams, SgsQpError
        with pytest.raises(SgsQpError):
            prox(ProxSpec.l1(1.0), 0.0, np.array([1.0]))


class TestBlock1Solve:
    def test_zero_kind_is_linear_solve(self, rng):
        A = rng.standard_normal((3, 3))
        Q11 = A @ A.T + np.eye(3)
        c1 = rng.standard_normal(3)
        x, g = solve_block1(ProxSpec.zero(), Q11, c1)
        np.testing.assert_allclose(Q11 @ x, c1, atol=1e-10)
        np.testing.assert_allclose(g, 0.0, atol=1e-10)

    def test_l1_identity_block_matches_oracle(self, rng):
        spec = ProxSpec.l1(0.9)
        Q11 = 2.5 * np.eye(4)
        c1 = 3.0 * rng.standard_normal(4)
        x, g = solve_block1(spec, Q11, c1)
        x_ref = dense_qp_minimize(Q11, c1, spec, 4)
        np.testing.assert_allclose(x, x_ref, atol=1e-9)
        np.testing.assert_allclose(Q11 @ x - c1 + g, 0.0, atol=1e-12)
        assert subgrad_residual(spec, x, g) <= 1e-12

    def test_needs_shift_raised(self, rng):
        Q11 = np.array([[3.0, 1.0], [1.0, 2.0]])
        with pytest.raises(NeedsShift):
            solve_block1(ProxSpec.l1(1.0), Q11, np.array([1.0, -1.0]))

    def test_shifted_solve_satisfies_kkt(self, rng):
        spec = ProxSpec.nonneg()
        Q11 = np.array([[3.0, 1.0], [1.0, 2.0]])
        mu = np.linalg.norm(Q11, 2)
        J1 = mu * np.eye(2) - Q11
        c1 = rng.standard_normal(2)
        xbar1 = rng.standard_normal(2)
        x, g = solve_block1(spec, Q11, c1, J1=J1, xbar1=xbar1)
        resid = (Q11 + J1) @ x - (c1 + J1 @ xbar1) + g
        np.testing.assert_allclose(resid, 0.0, atol=1e-12)
        assert subgrad_residual(spec, x, g) <= 1e-12
