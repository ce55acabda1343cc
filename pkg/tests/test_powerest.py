import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beamstat.channel import BeamPowerMap, ReceiveBatch, complex_normal, simulate_rx, synth_power_map
from beamstat.errors import LayoutMismatch, NonpositiveModel
from beamstat.manifold import delay_block_embed
from beamstat.powerest import (BilinearProblem, DenseSandwich, MomentObservation, accumulate_phi,
                               build_Tfactor, dense_operator, estimate, estimate_flat, kl_gradient,
                               kl_objective, split_per_user)

from .conftest import rel


def _batch(Y, sigma_z2=0.0):
    T = len(Y)
    return ReceiveBatch(Y=np.asarray(Y), G_truth=np.zeros((T, 1, 1)), H_truth=np.zeros((T, 1, 1, 1)),
                        sigma_z2=sigma_z2, seed=0)


def _random_problem(seed, shape=(6, 8), noise=0.5):
    rng = np.random.default_rng(seed)
    A = complex_normal(rng, (7, shape[0]))
    B = complex_normal(rng, (shape[1], 9))
    op = DenseSandwich(build_Tfactor(A.conj().T @ A), build_Tfactor(B @ B.conj().T))
    omega = rng.random(shape) ** 2
    phi = op(omega) * rng.uniform(0.5, 1.5, shape) + noise
    obs = MomentObservation(phi=phi, T_used=1, noise_floor=np.asarray(noise))
    return op, obs, omega, rng


def _scalar_kl(phi, model):
    f = 0.0
    for i in range(phi.shape[0]):
        for j in range(phi.shape[1]):
            x, y = phi[i, j], model[i, j]
            f += (x * np.log(x / y) if x > 0 else 0.0) + y - x
    return f


class TestAccumulate:
    def test_zero_input(self, desk):
        Y = np.zeros((3, desk.grids.M_r, desk.grids.M_p), dtype=complex)
        obs = accumulate_phi(_batch(Y, 0.1), desk.grids, desk.pilots)
        assert not obs.phi.any()
        assert float(obs.noise_floor) == pytest.approx(16 * 24 * 0.1)
        assert obs.T_used == 3

    def test_single_beam(self, desk):
        g, ps = desk.grids, desk.pilots
        i, j, val = 5, 7, 0.3 - 1.1j
        Y = (val * np.outer(g.V[:, i], ps.P_mat[j]))[None]
        obs = accumulate_phi(_batch(Y), g, ps)
        op = dense_operator(g, ps)
        assert obs.phi[i, j] == pytest.approx(abs(val) ** 2 * op.T_left[i, i] * op.T_right[j, j], rel=1e-12)
        expect = abs(val) ** 2 * np.outer(op.T_left[:, i], op.T_right[j, :])
        np.testing.assert_allclose(obs.phi, expect, rtol=1e-9, atol=1e-9 * expect.max())

    def test_noise_constant(self, tiny, rng):
        s2 = 0.7
        Y = np.sqrt(s2) * complex_normal(rng, (2000, tiny.grids.M_r, tiny.grids.M_p))
        obs = accumulate_phi(_batch(Y, s2), tiny.grids, tiny.pilots)
        level = tiny.grids.M_r * tiny.grids.M_p * s2
        assert abs(obs.phi.mean() / level - 1) <= 0.05
        dev = np.abs(obs.phi / level - 1)
        assert np.quantile(dev, 0.95) <= 0.05


class TestTfactor:
    def test_identity(self):
        np.testing.assert_array_equal(build_Tfactor(np.eye(4)), np.eye(4))

    def test_orthogonal_grid(self):
        from beamstat.manifold import build_grids
        from beamstat.sysmodel import SystemConfig, validate
        cfg = SystemConfig(N_az=1, N_ax=1, N_ap=1, P_per_root=(6,))
        g = build_grids(cfg, validate(cfg))
        np.testing.assert_allclose(build_Tfactor(g.V.conj().T @ g.V), 256 * np.eye(16), atol=1e-9)

    def test_Tf_blocks(self, desk2):
        U, xt, N_p = desk2.grids.U, desk2.pilots.x_tilde, desk2.dims.N_p
        Tf = dense_operator(desk2.grids, desk2.pilots).T_right
        for a in range(2):
            for b in range(2):
                blk = U.T @ np.diag(xt[a] * xt[b].conj()) @ U.conj()
                np.testing.assert_allclose(Tf[a * N_p:(a + 1) * N_p, b * N_p:(b + 1) * N_p],
                                           np.abs(blk) ** 2, rtol=1e-10, atol=1e-9)

    def test_symmetric_nonnegative(self, desk2):
        op = dense_operator(desk2.grids, desk2.pilots)
        for T in (op.T_left, op.T_right):
            assert (T >= 0).all()
            np.testing.assert_allclose(T, T.T, atol=1e-9)


class TestObjective:
    def test_exact_fit_is_zero(self):
        op, obs, omega, _ = _random_problem(0)
        exact = MomentObservation(phi=op(omega) + 0.5, T_used=1, noise_floor=np.asarray(0.5))
        assert abs(kl_objective(np.sqrt(omega), exact, op)) <= 1e-10 * exact.phi.sum()

    def test_zero_phi(self):
        op, obs, omega, _ = _random_problem(1)
        zero = MomentObservation(phi=np.zeros_like(obs.phi), T_used=1, noise_floor=obs.noise_floor)
        M = np.sqrt(omega)
        assert kl_objective(M, zero, op) == pytest.approx(np.sum(op(omega) + 0.5), rel=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_matches_loop_and_nonnegative(self, seed):
        op, obs, omega, rng = _random_problem(seed)
        obs.phi[0, 0] = 0.0
        M = rng.standard_normal(omega.shape)
        f = kl_objective(M, obs, op)
        assert f >= 0
        assert f == pytest.approx(_scalar_kl(obs.phi, op(M * M) + 0.5), rel=1e-12)
        assert kl_objective(-M, obs, op) == f

    def test_nonpositive_model(self):
        op, obs, omega, _ = _random_problem(2)
        bare = MomentObservation(phi=obs.phi, T_used=1, noise_floor=np.asarray(0.0))
        with pytest.raises(NonpositiveModel):
            kl_objective(np.zeros_like(omega), bare, op)


class TestGradient:
    def test_stationary_at_fit(self):
        op, obs, omega, _ = _random_problem(3)
        exact = MomentObservation(phi=op(omega) + 0.5, T_used=1, noise_floor=np.asarray(0.5))
        g = kl_gradient(np.sqrt(omega), exact, op)
        assert np.abs(g).max() <= 1e-10 * np.abs(op.ones_term).max()

    def test_zero_M(self):
        op, obs, omega, _ = _random_problem(4)
        assert not kl_gradient(np.zeros_like(omega), obs, op).any()

    @pytest.mark.parametrize("seed", range(10))
    def test_finite_differences(self, seed):
        op, obs, omega, rng = _random_problem(seed)
        M = rng.standard_normal(omega.shape)
        g = kl_gradient(M, obs, op)
        h = 1e-5
        for i in range(M.shape[0]):
            for j in range(M.shape[1]):
                if abs(g[i, j]) <= 1e-8:
                    continue
                E = np.zeros_like(M)
                E[i, j] = h
                fd = (kl_objective(M + E, obs, op) - kl_objective(M - E, obs, op)) / (2 * h)
                assert abs(fd - g[i, j]) <= 1e-5 * abs(g[i, j])


class TestEstimate:
    @pytest.mark.parametrize("seed", range(5))
    def test_exact_moments_recover_truth(self, seed):
        # near-orthogonal factors: T_left, T_right entrywise positive with condition number ~2
        rng = np.random.default_rng(seed)

        def factor(M, N):
            F = np.exp(-2j * np.pi * np.outer(np.arange(M), np.arange(N)) / M)
            return F + 0.1 * np.sqrt(M) * complex_normal(rng, (M, N))

        A, B = factor(8, 6), factor(10, 8).T
        op = DenseSandwich(build_Tfactor(A.conj().T @ A), build_Tfactor(B @ B.conj().T))
        assert (op.T_left > 0).all() and np.linalg.cond(op.T_left) < 3
        omega = rng.random((6, 8)) ** 2
        exact = MomentObservation(phi=op(omega) + 1e-3, T_used=0, noise_floor=np.asarray(1e-3))
        st_ = estimate(exact, op, D=200)
        assert st_.iter <= 200
        assert rel(st_.omega_est, omega) <= 1e-3

    def test_noise_only(self):
        op, _, omega, _ = _random_problem(6)
        obs = MomentObservation(phi=np.full(omega.shape, 0.5), T_used=1, noise_floor=np.asarray(0.5))
        st_ = estimate(obs, op, D=200)
        start = obs.phi.sum() / obs.phi.size
        assert st_.omega_est.sum() <= 1e-3 * start
        assert np.all(np.diff(st_.objective) <= 0)

    def test_trace_monotone_and_nonnegative(self, desk):
        rng = np.random.default_rng(0)
        maps = [synth_power_map(desk.dims, rng) for _ in range(desk.dims.K)]
        b = simulate_rx(maps, desk.pilots, desk.grids, desk.cfg, desk.dims, seed=0)
        st_ = estimate(accumulate_phi(b, desk.grids, desk.pilots), dense_operator(desk.grids, desk.pilots), D=50)
        tr = np.array(st_.objective)
        assert np.all(np.diff(tr) <= 0)
        assert (st_.omega_est >= 0).all()
        assert st_.iter == 50

    def test_sign_flip_start(self):
        op, obs, omega, rng = _random_problem(7)
        M0 = np.sqrt(obs.phi / obs.phi.size)
        flip = np.where(rng.random(M0.shape) < 0.5, -1.0, 1.0)
        a = estimate(obs, op, D=15, M0=M0)
        b = estimate(obs, op, D=15, M0=flip * M0)
        assert a.objective == b.objective
        np.testing.assert_array_equal(a.omega_est, b.omega_est)

    def test_callback_and_stop_on_small_step(self):
        op, obs, omega, _ = _random_problem(8)
        seen = []
        st_ = estimate(obs, op, D=5, callback=lambda d, M, f: seen.append(d))
        assert seen == [1, 2, 3, 4, 5]
        exact = MomentObservation(phi=op(omega) + 0.5, T_used=1, noise_floor=np.asarray(0.5))
        st2 = estimate(exact, op, D=100, M0=np.sqrt(omega))
        assert st2.converged and st2.iter == 1

    @pytest.mark.parametrize("kw", [{"delta0": 0.0}, {"alpha": 1.0}, {"D": 0},
                                    {"delta0": 1.0, "delta_min": 2.0}])
    def test_bad_options(self, kw):
        op, obs, _, _ = _random_problem(9)
        with pytest.raises(ValueError):
            estimate(obs, op, **kw)

    def test_scale_consistency(self, tiny, rng):
        g, ps = tiny.grids, tiny.pilots
        Y = complex_normal(rng, (6, g.M_r, g.M_p))
        c = 2.0
        base = BilinearProblem(g.V, ps.P_mat, 0.1)
        scaled = BilinearProblem(c * g.V, c * ps.P_mat, 0.1)
        # the iteration is equivariant once the starting points correspond
        obs = base.observe(Y)
        M0 = np.sqrt(obs.phi / obs.phi.size)
        a = base.solve(Y, D=30, M0=M0)
        b = scaled.solve(Y, D=30, M0=M0 / c ** 2)
        np.testing.assert_allclose(b.omega_est * c ** 4, a.omega_est, rtol=1e-9, atol=1e-12 * a.omega_est.max())
        ma = base.operator()(a.omega_est)
        mb = scaled.operator()(b.omega_est) / c ** 4
        assert rel(mb, ma) <= 1e-9


class TestSplit:
    def test_single_user(self, rng):
        from types import SimpleNamespace
        dims = SimpleNamespace(N_r=3, N_p=8, N_f=2)
        om = rng.random((3, 8))
        (m,) = split_per_user(om, dims, (1,))
        np.testing.assert_allclose(m.omega, om[:, :2], rtol=1e-15, atol=0)

    def test_all_ones(self, desk2):
        maps = split_per_user(np.ones((64, 96)), desk2.dims, (12, 12))
        assert len(maps) == 24
        assert all(m.omega.shape == (64, 4) and (m.omega == 1).all() for m in maps)

    def test_roundtrip(self, desk2, rng):
        d = desk2.dims
        user_maps = [rng.random((d.N_r, d.N_f)) for _ in range(24)]
        stacked = np.concatenate([delay_block_embed(user_maps[:12], d.N_p),
                                  delay_block_embed(user_maps[12:], d.N_p)], axis=1)
        back = split_per_user(stacked, d, (12, 12))
        for a, b in zip(back, user_maps):
            np.testing.assert_allclose(a.omega, b, rtol=1e-15, atol=0)

    def test_bad_width(self, desk):
        with pytest.raises(LayoutMismatch):
            split_per_user(np.ones((64, 50)), desk.dims, (12,))


def _flat_setup(M_r, M_t, T_p, seed, sigma2=0.01, T=400):
    rng = np.random.default_rng(seed)
    V_r = np.exp(-2j * np.pi * np.outer(np.arange(M_r), np.arange(M_r)) / M_r)
    V_t = np.exp(-2j * np.pi * np.outer(np.arange(M_t), np.arange(M_t)) / M_t)
    X = np.exp(-2j * np.pi * np.outer(np.arange(M_t), np.arange(T_p)) / T_p)  # orthogonal rows
    omega = rng.random((M_r, M_t)) ** 3
    G = np.sqrt(omega) * complex_normal(rng, (T, M_r, M_t))
    Y = V_r @ G @ V_t.T @ X + np.sqrt(sigma2) * complex_normal(rng, (T, M_r, T_p))
    return V_r, V_t, X, Y, omega


class TestFlatFading:
    def test_closed_form_when_decoupled(self):
        V_r, V_t, X, Y, _ = _flat_setup(4, 3, 6, 0)
        prob = BilinearProblem(V_r, V_t.T @ X, 0.01)
        obs = prob.observe(Y)
        op = prob.operator()
        a = op.T_left[0, 0]
        b = op.T_right[0, 0]
        np.testing.assert_allclose(op.T_left, a * np.eye(4), atol=1e-9)
        np.testing.assert_allclose(op.T_right, b * np.eye(3), atol=1e-9)
        closed = np.maximum(obs.phi - obs.noise, 0.0) / (a * b)
        est = estimate_flat(Y, V_r, V_t, X, 0.01, D=2000)
        assert rel(est.omega, closed) <= 1e-6

    def test_zero_channel(self):
        V_r, V_t, X, _, _ = _flat_setup(4, 3, 6, 1)
        rng = np.random.default_rng(1)
        Y = 0.1 * complex_normal(rng, (4000, 4, 6))
        est = estimate_flat(Y, V_r, V_t, X, 0.01, D=300)
        assert est.omega.max() <= 1e-3 * 0.01

    def test_interface_equivalence(self, rng):
        V_r = complex_normal(rng, (5, 8))
        V_t = complex_normal(rng, (3, 6))
        X = complex_normal(rng, (3, 7))
        Y = complex_normal(rng, (20, 5, 7))
        a = estimate_flat(Y, V_r, V_t, X, 0.2, D=40)
        b = BilinearProblem(V_r, V_t.T @ X, 0.2).solve(Y, D=40)
        np.testing.assert_array_equal(a.omega, b.omega_est)

    def test_noise_floor_formula(self, rng):
        A = complex_normal(rng, (5, 8))
        B = complex_normal(rng, (6, 7))
        prob = BilinearProblem(A, B, 0.3)
        Z = np.sqrt(0.3) * complex_normal(rng, (20_000, 5, 7))
        emp = prob.observe(Z).phi
        assert abs(emp.mean() / prob.observe(Z[:1]).noise_floor.mean() - 1) <= 0.02
