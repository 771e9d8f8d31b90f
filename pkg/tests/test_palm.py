import numpy as np
import pytest

from sgsqp import (
    BlockPartition,
    BlockSymOperator,
    BlockVector,
    LinConQP,
    PalmStop,
    ProxSpec,
    QsdpData,
    assemble_penalized,
    lagrangian,
    palm_solve,
    qsdp_assemble,
    qsdp_sgs_step,
    qsdp_to_lincon,
    sgs_cycle,
    smat,
    svec,
    svec_dim,
)
from sgsqp.errors import InvalidParams, TauOutOfRange
from sgsqp.instances import gen_lincon, gen_qsdp
from sgsqp.oracle import dense_kkt_solve, psd_project


def _projection_problem():
    """Minimize 0 subject to Ax = d; the square trailing block makes a
    single sweep land exactly on the constraint."""
    part = BlockPartition((2, 2))
    P = BlockSymOperator(part, {}, factor_diag=False)
    rng = np.random.default_rng(0)
    A = rng.standard_normal((2, 4))
    d = rng.standard_normal(2)
    return LinConQP(P, A, np.zeros(4), d)


class TestLinConQP:
    def test_objective_and_residual(self):
        lp = gen_lincon((2, 2), m=2, seed=0).lincon_problem()
        rng = np.random.default_rng(1)
        x = BlockVector(lp.partition, rng.standard_normal(4))
        Pd = lp.P.dense()
        want = 0.5 * x.data @ (Pd @ x.data) - lp.g @ x.data
        assert lp.objective(x) == pytest.approx(want, rel=1e-12)
        np.testing.assert_allclose(lp.constraint_residual(x),
                                   lp.A @ x.data - lp.d, atol=1e-14)

    def test_kkt_zero_at_saddle_point(self):
        lp = gen_lincon((2, 3), m=2, seed=3).lincon_problem()
        xs, ys = dense_kkt_solve(lp.P.dense(), lp.A, lp.g, lp.d)
        dual, primal = lp.kkt(BlockVector(lp.partition, xs), ys)
        assert dual <= 1e-9 and primal <= 1e-9

    def test_shape_validation(self):
        from sgsqp.errors import DimensionMismatch
        part = BlockPartition((2, 2))
        P = BlockSymOperator(part, {}, factor_diag=False)
        with pytest.raises(DimensionMismatch):
            LinConQP(P, np.zeros((2, 3)), np.zeros(4), np.zeros(2))


class TestAssemblePenalized:
    def test_dense_identity(self):
        lp = gen_lincon((2, 2, 3), m=3, seed=5).lincon_problem()
        sigma = 4.0
        inner = assemble_penalized(lp, sigma)
        want = lp.P.dense() + sigma * lp.A.T @ lp.A
        np.testing.assert_allclose(inner.Q.dense(), want,
                                   atol=1e-12 * (1 + np.linalg.norm(want)))

    def test_first_block_shift_added_for_nonsmooth(self):
        lp = gen_lincon((2, 2), m=2, prox_kind="nonneg", seed=2).lincon_problem()
        inner = assemble_penalized(lp, 2.0)
        assert inner.shifts is not None
        Q00 = inner.Q.block(0, 0)
        J0 = inner.shifts[0]
        eff = Q00 + J0
        mu = eff[0, 0]
        np.testing.assert_allclose(eff, mu * np.eye(2), atol=1e-10 * mu)


class TestPalmSolve:
    def test_projection_in_one_sweep(self):
        lp = _projection_problem()
        x, y, tr = palm_solve(lp, sigma=1.0, tau=1.0,
                              stop=PalmStop(kkt_tol=1e-10, max_iter=50))
        assert tr.termination == "tol"
        assert len(tr.rows) == 1
        assert np.linalg.norm(lp.A @ x.data - lp.d) <= 1e-12

    @pytest.mark.parametrize("tau", [1.0, 1.6, 1.9])
    def test_matches_saddle_oracle(self, tau):
        lp = gen_lincon((2, 3, 2), m=3, seed=1).lincon_problem()
        xs, ys = dense_kkt_solve(lp.P.dense(), lp.A, lp.g, lp.d)
        x, y, tr = palm_solve(lp, sigma=10.0, tau=tau,
                              stop=PalmStop(kkt_tol=1e-9, max_iter=10000))
        assert tr.termination == "tol"
        scale = 1.0 + np.linalg.norm(xs)
        assert np.linalg.norm(x.data - xs) <= 1e-6 * scale
        assert np.linalg.norm(y - ys) <= 1e-6 * (1.0 + np.linalg.norm(ys))

    def test_stationary_at_saddle_point(self):
        lp = gen_lincon((2, 2, 2), m=2, seed=7).lincon_problem()
        xs, ys = dense_kkt_solve(lp.P.dense(), lp.A, lp.g, lp.d)
        x, y, tr = palm_solve(lp, sigma=5.0, tau=1.5,
                              x0=BlockVector(lp.partition, xs), y0=ys,
                              stop=PalmStop(kkt_tol=np.inf, max_iter=1))
        scale = 1.0 + np.linalg.norm(xs)
        assert np.linalg.norm(x.data - xs) <= 1e-9 * scale
        assert np.linalg.norm(y - ys) <= 1e-9 * scale

    def test_previous_multiplier_variant_converges(self):
        lp = gen_lincon((2, 2), m=2, seed=4).lincon_problem()
        x, y, tr = palm_solve(lp, sigma=8.0, tau=1.0,
                              multiplier_update="previous",
                              stop=PalmStop(kkt_tol=1e-8, max_iter=10000))
        assert tr.termination == "tol"

    def test_invalid_update_flag(self):
        lp = _projection_problem()
        with pytest.raises(InvalidParams):
            palm_solve(lp, sigma=1.0, tau=1.0, multiplier_update="stale")

    @pytest.mark.parametrize("tau", [0.0, 2.0, -0.5])
    def test_tau_range(self, tau):
        lp = _projection_problem()
        with pytest.raises(TauOutOfRange):
            palm_solve(lp, sigma=1.0, tau=tau)

    def test_nonsmooth_constrained_run(self):
        lp = gen_lincon((2, 2, 2), m=2, prox_kind="nonneg",
                        seed=9).lincon_problem()
        x, y, tr = palm_solve(lp, sigma=10.0, tau=1.6,
                              stop=PalmStop(kkt_tol=1e-7, max_iter=10000))
        assert tr.termination == "tol"
        assert np.min(x.block(0)) >= -1e-10

    def test_trace_csv(self, tmp_path):
        lp = gen_lincon((2, 2), m=2, seed=0).lincon_problem()
        _, _, tr = palm_solve(lp, sigma=5.0, tau=1.0,
                              stop=PalmStop(kkt_tol=1e-8, max_iter=2000))
        out = tmp_path / "trace.csv"
        tr.to_csv(str(out))
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "k,F,primal_inf,kkt,y_norm,time_s"
        for cell in lines[1].split(",")[1:]:
            float(cell)


class TestLagrangian:
    def test_definition_equals_expansion(self):
        lp = gen_lincon((2, 3), m=2, seed=6).lincon_problem()
        rng = np.random.default_rng(0)
        x = BlockVector(lp.partition, rng.standard_normal(5))
        y = rng.standard_normal(2)
        a = lagrangian(lp, 3.0, x, y, via="definition")
        b = lagrangian(lp, 3.0, x, y, via="expansion")
        assert a == pytest.approx(b, rel=1e-12)


class TestQsdp:
    def test_data_validation(self):
        from sgsqp.errors import ShapeMismatch
        d = svec_dim(3)
        with pytest.raises(ShapeMismatch):
            QsdpData(3, np.eye(d + 1), np.zeros((1, d)), np.zeros(1), np.eye(3))

    def test_assembled_blocks_dense_anchor(self):
        d = svec_dim(2)
        H = np.eye(d)
        B = np.array([[1.0, 0.0, 1.0]])
        q = QsdpData(2, H, B, np.array([0.5]), np.diag([1.0, -0.5]))
        sigma = 2.0
        inner = qsdp_assemble(q, sigma, np.zeros((2, 2)))
        V = q.range_coords()
        want = np.block([
            [sigma * np.eye(d), sigma * B.T, sigma * H @ V],
            [sigma * B, sigma * B @ B.T, sigma * B @ H @ V],
            [(sigma * H @ V).T, (sigma * B @ H @ V).T,
             V.T @ (H + sigma * H @ H) @ V],
        ])
        np.testing.assert_allclose(inner.Q.dense(), want, atol=1e-12)
        u = svec(sigma * np.diag([1.0, -0.5]))
        np.testing.assert_allclose(inner.b.data[:d], u, atol=1e-14)
        assert inner.prox.kind == "psd_cone"

    def test_assembled_operator_psd(self):
        inst = gen_qsdp(4, 2, seed=3)
        q = QsdpData(**{k: inst.qsdp[k] for k in ("n", "H", "B", "h", "C")}) \
            if isinstance(inst.qsdp, dict) else inst.qsdp
        inner = qsdp_assemble(q, 1.5, np.zeros((4, 4)))
        w = np.linalg.eigvalsh(inner.Q.dense())
        assert w.min() >= -1e-9 * max(1.0, w.max())

    @pytest.mark.parametrize("seed,rank", [(0, None), (1, 2), (2, 0)])
    def test_matrix_step_equals_generic_cycle(self, seed, rank):
        inst = gen_qsdp(4, 2, seed=seed, rank_H=rank)
        q = _qsdp_from_instance(inst)
        sigma = 1.7
        rng = np.random.default_rng(seed + 10)
        A0 = rng.standard_normal((4, 4))
        Y = A0 + A0.T
        Z0 = rng.standard_normal((4, 4))
        Z = psd_project(Z0 + Z0.T)
        xi = rng.standard_normal(2)
        W0 = rng.standard_normal((4, 4))
        W = W0 + W0.T
        HW = smat(q.H @ svec(W), 4)
        Znew, xinew, HWnew = qsdp_sgs_step(q, sigma, (Z, xi, HW), Y)

        inner = qsdp_assemble(q, sigma, Y)
        V = q.range_coords()
        r = V.shape[1]
        # generic state: (svec Z, xi, w) with the w-coordinates chosen so
        # that H w reproduces the matrix state's HW
        xbar = _qsdp_state_vector(q, inner.partition, Z, xi, HW)
        res = sgs_cycle(inner, xbar)
        d = svec_dim(4)
        scale = 1.0 + np.linalg.norm(res.x_plus.data)
        np.testing.assert_allclose(svec(Znew), res.x_plus.data[:d],
                                   atol=1e-10 * scale)
        np.testing.assert_allclose(xinew, res.x_plus.data[d:d + 2],
                                   atol=1e-10 * scale)
        if r:
            w_plus = res.x_plus.data[d + 2:]
            np.testing.assert_allclose(svec(HWnew), q.H @ (V @ w_plus),
                                       atol=1e-10 * scale)
        else:
            np.testing.assert_allclose(svec(HWnew), 0.0, atol=1e-12)

    def test_step_fixed_point_is_stationary(self):
        inst = gen_qsdp(3, 2, seed=5)
        q = _qsdp_from_instance(inst)
        sigma = 2.0
        Y = np.zeros((3, 3))
        Z = np.eye(3)
        xi = np.zeros(2)
        HW = np.zeros((3, 3))
        state = (Z, xi, HW)
        for _ in range(400):
            state = qsdp_sgs_step(q, sigma, state, Y)
        Z1, xi1, HW1 = qsdp_sgs_step(q, sigma, state, Y)
        assert np.linalg.norm(Z1 - state[0]) <= 1e-9 * (1 + np.linalg.norm(Z1))
        assert np.linalg.norm(xi1 - state[1]) <= 1e-9 * (1 + np.linalg.norm(xi1))

    def test_lincon_form_matches_assembly(self):
        inst = gen_qsdp(4, 3, seed=8)
        q = _qsdp_from_instance(inst)
        lp = qsdp_to_lincon(q)
        d = svec_dim(4)
        V = q.range_coords()
        r = V.shape[1]
        assert lp.A.shape == (d, d + 3 + r)
        np.testing.assert_allclose(lp.A[:, :d], np.eye(d), atol=1e-14)
        np.testing.assert_allclose(lp.A[:, d:d + 3], q.B.T, atol=1e-14)
        np.testing.assert_allclose(lp.d, svec(q.C), atol=1e-14)
        sigma = 1.3
        inner_a = assemble_penalized(lp, sigma)
        inner_b = qsdp_assemble(q, sigma, np.zeros((4, 4)))
        scale = 1.0 + np.linalg.norm(inner_b.Q.dense())
        assert np.linalg.norm(inner_a.Q.dense() - inner_b.Q.dense()) \
            <= 1e-10 * scale

    def test_palm_drives_qsdp_to_kkt(self):
        inst = gen_qsdp(4, 2, seed=1)
        q = _qsdp_from_instance(inst)
        lp = qsdp_to_lincon(q)
        x, y, tr = palm_solve(lp, sigma=1.0, tau=1.6,
                              stop=PalmStop(kkt_tol=1e-6, max_iter=10000))
        assert tr.termination == "tol"
        dual, primal = lp.kkt(x, y)
        assert max(dual, primal) <= 1e-6


def _qsdp_from_instance(inst):
    data = inst.qsdp
    if isinstance(data, QsdpData):
        return data
    return QsdpData(data["n"], np.asarray(data["H"]), np.asarray(data["B"]),
                    np.asarray(data["h"]), np.asarray(data["C"]))


def _qsdp_state_vector(q, part, Z, xi, HW):
    """Pack a matrix-form state into the generic cycle's coordinates."""
    n = q.n
    V = q.range_coords()
    parts = [svec(Z), np.asarray(xi, dtype=float)]
    if V.shape[1]:
        w = np.linalg.lstsq(q.H @ V, svec(HW), rcond=None)[0]
        parts.append(w)
    return BlockVector(part, np.concatenate(parts))
