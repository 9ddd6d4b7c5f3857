import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from healthbf._validation import InvalidArgumentError
from healthbf.metrics import reliability_pct
from healthbf.power import hybrid_power_surrogate
from healthbf.scenario import SystemConfig, random_mask
from healthbf.solver import (
    ConvergenceTrace,
    DivergenceError,
    DualState,
    GPGDABeamformer,
    GpgdaPowerParams,
    PGDABeamformer,
    SolverOptions,
    _PGDAProblem,
    _scale_to_hybrid,
    _scene_covariance,
    backtrack_step,
    dual_update,
    gpgda_solve,
    initial_beamformer,
    pgda_solve,
)
from healthbf.experiments import draw_instance, default_antenna_mask

from conftest import crandn

REF = SystemConfig()
SELECTION_MASK = default_antenna_mask(10)


def single_user_config(n_tx=4):
    return SystemConfig(n_tx=n_tx, n_rx=n_tx, n_users=1, n_targets=0, frame_len=n_tx,
                        bw_fraction_radar=0.0, bw_fractions_users=(1.0,), rate_min=(0.0,),
                        rate_max=(100.0,))


class TestDualUpdate:
    def test_power_multiplier_grows_on_violation(self):
        d = dual_update(DualState.constant(4, 0.0, 0.0, 0.05), np.ones(4), 1.2, REF, 0.025)
        assert d.mu == pytest.approx(0.055)

    def test_min_rate_multiplier(self):
        cfg = REF.replace(rate_min=(0.0176,) * 4)
        d = dual_update(DualState.constant(4, 0.04, 0.0, 0.0), np.full(4, 0.5), 1.0, cfg, 0.025)
        np.testing.assert_allclose(d.lambda1, 0.027940)

    def test_active_constraints_leave_multipliers(self):
        d0 = DualState([0.3, 0.1, 0.2, 0.4], [0.5, 0.6, 0.7, 0.8], 0.9)
        d = dual_update(d0, np.array(REF.rate_min), REF.power_budget, REF, 0.025)
        np.testing.assert_allclose(d.lambda1, d0.lambda1)
        assert d.mu == d0.mu

    def test_max_rate_switch(self):
        d0 = DualState.constant(4, 0.0, 0.2, 0.0)
        kept = dual_update(d0, np.zeros(4), 0.0, REF, 0.5, max_rate=False)
        np.testing.assert_array_equal(kept.lambda2, d0.lambda2)

    @given(st.integers(0, 10_000))
    def test_projection_keeps_feasible(self, seed):
        rng = np.random.default_rng(seed)
        d0 = DualState(rng.uniform(0, 1, 4), rng.uniform(0, 1, 4), rng.uniform(0, 1))
        d = dual_update(d0, rng.uniform(0, 100, 4), rng.uniform(0, 5), REF, rng.uniform(0.01, 5))
        assert d.is_feasible()


class TestBacktracking:
    def test_small_step_accepted(self):
        f = lambda w: -float(np.sum(np.abs(w) ** 2))
        W = np.array([[1.0]])
        _, eta = backtrack_step(W, -2 * W, 1e-3, f)
        assert eta == 1e-3

    def test_zero_gradient(self):
        W = np.array([[2.0]])
        Wn, _ = backtrack_step(W, np.zeros_like(W), 0.1, lambda w: -float(w[0, 0].real ** 2))
        np.testing.assert_array_equal(Wn, W)

    def test_quadratic_halving(self):
        Wn, eta = backtrack_step(np.array([[1.0]]), np.array([[-2.0]]), 10.0,
                                 lambda w: -float(abs(w[0, 0]) ** 2))
        assert eta <= 1.0 and abs(Wn[0, 0]) <= 1.0
        assert eta == 10.0 * 0.5 ** 4

    def test_no_ascent_returns_input(self):
        W = np.array([[1.0]])
        Wn, eta = backtrack_step(W, np.array([[1.0]]), 1.0, lambda w: -float(abs(w[0, 0])),
                                 max_backtracks=5)
        assert eta == 1e-12
        np.testing.assert_array_equal(Wn, W)

    @given(st.integers(0, 10_000))
    def test_accepted_steps_never_decrease(self, seed):
        H, scene, _ = draw_instance(REF, seed)
        problem = _PGDAProblem(REF, H, None, 0.0, np.ones((10, 4)))
        rng = np.random.default_rng(seed)
        W = initial_beamformer(rng, 10, 4, 0.5)
        duals = DualState(rng.uniform(0, 1, 4), rng.uniform(0, 1, 4), rng.uniform(0, 1))
        g = problem.ascent_direction(W, duals)
        f = lambda X: problem.value(X, duals)
        Wn, _ = backtrack_step(W, g, 0.025, f)
        assert f(Wn) >= f(W)


class TestPGDA:
    def test_matched_filter(self):
        cfg = single_user_config()
        h = np.zeros((4, 1), complex)
        h[0] = 1
        res = pgda_solve(cfg, None, h, random_state=0)
        w = res.w_star[:, 0]
        assert abs(np.vdot(w, h[:, 0])) / np.linalg.norm(w) >= 1 - 1e-3
        assert abs(res.metrics.tx_power - cfg.power_budget) <= 1e-3

    def test_large_sparsity_annihilates(self):
        cfg = single_user_config()
        # lambda2 equal to the user weight cancels the rate term, mu = 0 drops power
        duals = DualState([0.0], [1.0], 0.0)
        h = crandn(np.random.default_rng(1), 4, 1)
        res = pgda_solve(cfg, None, h, np.zeros((4, 1)), rho_s=1e4, duals0=duals,
                         update_duals=False, random_state=2)
        assert res.trace[0].tx_power == 0
        np.testing.assert_array_equal(res.w_star, 0)
        assert res.converged

    def test_reference_constraints(self):
        passed = 0
        for seed in range(10):
            H, scene, rng = draw_instance(REF, seed)
            res = pgda_solve(REF, scene, H, random_state=rng)
            se = res.metrics.se_per_user
            passed += bool(np.all(se >= np.array(REF.rate_min) - 1e-3)
                           and res.metrics.tx_power <= REF.power_budget * (1 + 1e-3))
            assert res.iterations <= 1000
        assert passed >= 9

    def test_duals_stay_feasible_and_trace_is_finite(self):
        H, scene, rng = draw_instance(REF, 3)
        res = pgda_solve(REF, scene, H, random_mask(10, (10, 4)), rho_s=0.74, random_state=rng)
        assert all(r.duals.is_feasible() for r in res.trace)
        assert np.all(np.diff(res.trace.column("iteration")) > 0)
        for name in ("objective", "radar_mi", "tx_power", "step_norm", "eta"):
            assert np.all(np.isfinite(res.trace.column(name)))
        if res.converged:
            assert res.trace[-1].step_norm < 1e-12

    def test_frozen_zero_duals_is_plain_ascent(self):
        H, scene, rng = draw_instance(REF, 5)
        res = pgda_solve(REF, scene, H, duals0=DualState.constant(4), update_duals=False,
                         random_state=rng, options=SolverOptions(max_iter=200))
        assert np.all(np.diff(res.trace.column("objective")) >= -1e-12)

    def test_density_monotone_in_sparsity(self):
        H, scene, _ = draw_instance(REF, 0)
        mask = random_mask(10, (10, 4))
        dens = [pgda_solve(REF, scene, H, mask, rho_s=r, random_state=7).metrics.density_pct
                for r in (0.0, 0.2218, 0.74, 1.332)]
        assert all(b <= a for a, b in zip(dens, dens[1:]))
        assert dens[0] == 100.0

    def test_divergence_carries_trace(self, monkeypatch):
        calls = []
        original = _PGDAProblem.prox

        def blow_up(self, X, eta, duals):
            calls.append(1)
            return original(self, X, eta, duals) * (np.inf if len(calls) > 3 else 1.0)

        monkeypatch.setattr(_PGDAProblem, "prox", blow_up)
        H, scene, rng = draw_instance(REF, 0)
        with pytest.raises(DivergenceError) as info:
            pgda_solve(REF, scene, H, random_state=rng)
        assert len(info.value.trace) == 3

    def test_wrong_mask_kind(self):
        H, _, _ = draw_instance(REF, 0)
        with pytest.raises(InvalidArgumentError):
            pgda_solve(REF, None, H, SELECTION_MASK)


class TestGPGDA:
    def test_reduces_to_pgda(self):
        cfg = REF.replace(n_targets=4)
        H, scene, _ = draw_instance(cfg, 1)
        W0 = initial_beamformer(3, 10, 4, 0.5)
        duals = DualState.constant(4, 0.04, 0.0, 0.05)
        opts = SolverOptions(max_iter=300)
        a = pgda_solve(cfg, scene, H, None, opts, W0=W0, duals0=duals, update_duals=False)
        est = GPGDABeamformer(cfg, rho_s=0.0, power=GpgdaPowerParams(1.0, 0.0, 1.0),
                              max_iter=300, update_duals=False)
        est.fit(H, _scene_covariance(cfg, scene), np.ones(10), W0=W0, duals0=duals)
        np.testing.assert_allclose(est.coef_, a.w_star, atol=1e-10)

    def test_single_reliable_row(self):
        cfg = single_user_config(5)
        beta = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
        h = crandn(np.random.default_rng(0), 5, 1) / np.sqrt(5)
        res = gpgda_solve(cfg, None, h, beta, GpgdaPowerParams(1.0, 0.0, 1.0), rho_s=50.0,
                          random_state=1)
        rows = np.linalg.norm(res.w_star, axis=1) > 0
        np.testing.assert_array_equal(rows, beta == 1)

    def test_selection_scenario(self):
        power = GpgdaPowerParams()
        passed = 0
        for seed in range(10):
            H, scene, rng = draw_instance(REF, seed)
            res = gpgda_solve(REF, scene, H, SELECTION_MASK, power, rho_s=0.0, random_state=rng)
            assert hybrid_power_surrogate(res.w_star, 0.4, 5.0) <= 100 * (1 + 1e-3)
            passed += bool(np.all(res.metrics.se_per_user >= np.array(REF.rate_min) - 1e-3))
        assert passed >= 9

    def test_reliability_monotone_in_sparsity(self):
        for seed in (0, 1):
            H, scene, _ = draw_instance(REF, seed)
            rel = [reliability_pct(gpgda_solve(REF, scene, H, SELECTION_MASK, rho_s=r,
                                               random_state=seed).w_star, SELECTION_MASK)
                   for r in (0.0, 1.0, 3.0, 10.0)]
            assert all(b >= a for a, b in zip(rel, rel[1:]))

    def test_lambda2_untouched(self):
        H, scene, rng = draw_instance(REF, 2)
        res = gpgda_solve(REF, scene, H, SELECTION_MASK, rho_s=1.0, random_state=rng,
                          options=SolverOptions(max_iter=50))
        np.testing.assert_array_equal(res.duals.lambda2, 0)

    def test_initial_point_on_half_budget(self):
        H, _, _ = draw_instance(REF, 0)
        est = GPGDABeamformer(REF, rho_s=0.0, max_iter=1, random_state=4).fit(H)
        W0 = _scale_to_hybrid(initial_beamformer(4, 10, 4, 1.0), GpgdaPowerParams(), 50.0)
        assert hybrid_power_surrogate(W0, 0.4, 5.0) == pytest.approx(50.0)
        # the first step starts from that point
        assert est.trace_[0].step_norm == pytest.approx(np.linalg.norm(est.coef_ - W0))


class TestEstimatorAPI:
    def test_params_round_trip(self):
        est = PGDABeamformer(rho_s=0.5, max_iter=20)
        assert est.get_params()["rho_s"] == 0.5
        twin = clone(est)
        assert twin.get_params() == est.get_params()
        est.set_params(tol=1e-6)
        assert est.tol == 1e-6

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            PGDABeamformer().transform(np.ones((4, 3)))

    def test_fit_transform_score(self):
        H, scene, _ = draw_instance(REF, 0)
        est = PGDABeamformer(REF, max_iter=30, random_state=0).fit(H)
        S = crandn(np.random.default_rng(0), 4, 12)
        np.testing.assert_allclose(est.transform(S), est.coef_ @ S)
        assert est.score(H) > 0
        assert est.n_iter_ == 30 and len(est.trace_) == 30

    def test_deterministic(self):
        H, _, _ = draw_instance(REF, 0)
        a = PGDABeamformer(REF, max_iter=40, random_state=9).fit(H).coef_
        b = PGDABeamformer(REF, max_iter=40, random_state=9).fit(H).coef_
        assert a.tobytes() == b.tobytes()

    def test_warm_start_continues(self):
        H, _, _ = draw_instance(REF, 0)
        est = PGDABeamformer(REF, max_iter=20, warm_start=True, random_state=0).fit(H)
        first, duals = est.coef_.copy(), est.duals_
        est.fit(H)
        step0 = est.trace_[0].step_norm
        cold = PGDABeamformer(REF, max_iter=20, random_state=0).fit(H, W0=first, duals0=duals)
        assert cold.trace_[0].step_norm == step0

    def test_input_validation(self):
        with pytest.raises(InvalidArgumentError):
            PGDABeamformer(REF).fit(np.ones((3, 4)))
        with pytest.raises(InvalidArgumentError):
            PGDABeamformer(REF, rho_s=-1.0).fit(np.ones((10, 4)))
        with pytest.raises(InvalidArgumentError):
            SolverOptions(backtrack_factor=1.0)
        with pytest.raises(InvalidArgumentError):
            GpgdaPowerParams(eta_pa=0.0)


def test_trace_export_and_ordering():
    H, _, _ = draw_instance(REF, 0)
    res = pgda_solve(REF, None, H, options=SolverOptions(max_iter=3), random_state=0)
    lines = res.trace.to_csv().strip().split("\n")
    assert len(lines) == 4 and lines[0].startswith("iteration,objective")
    trace = ConvergenceTrace()
    trace.append(res.trace[1])
    with pytest.raises(ValueError):
        trace.append(res.trace[0])
