import numpy as np
import pytest

from slowfast import (
    Affine,
    CoupledState,
    GridTransform,
    LinearInY,
    PointwiseSquare,
    RunConfig,
    SchemeKind,
    SeedContext,
    StreamTag,
    dirichlet_spectrum,
    eval_Fbar,
    modified_operators,
    reference_weak_value,
    run_trajectory,
    run_trajectory_batch,
    sample_cylindrical,
    sample_cylindrical_batch,
    saturating_square,
    scheme_mean_recursion,
    solve_averaged_reference,
    step_averaged,
    step_coupled_expo,
    step_coupled_modified,
    step_limiting,
)

rng = np.random.default_rng(31415)

SPEC = dirichlet_spectrum(8)
ZERO_F = LinearInY(c=0.0)


class TestCoupledModifiedStep:
    def test_pure_resolvent_when_uncoupled(self):
        spec = dirichlet_spectrum(1)
        ops = modified_operators(spec, 1.0)
        state = CoupledState(x=np.array([1.0]), y=np.array([0.0]))
        out = step_coupled_modified(spec, 1.0, 1.0, ops, ZERO_F, None, state,
                                    np.zeros(1), np.zeros(1))
        assert out.x[0] == pytest.approx(1.0 / (1.0 + spec.lambdas[0]), rel=1e-15)

    def test_zero_noise_keeps_zero_fast_state(self):
        ops = modified_operators(SPEC, 0.5)
        state = CoupledState(x=rng.standard_normal(8), y=np.zeros(8))
        out = step_coupled_modified(SPEC, 0.1, 0.2, ops, ZERO_F, None, state,
                                    np.zeros(8), np.zeros(8))
        assert np.all(out.y == 0.0)

    def test_one_step_variance_at_stationarity(self):
        # sampled one-step variance of y stays at 1/lambda
        n = 200_000
        dt, eps = 0.1, 0.07
        ops = modified_operators(SPEC, dt / eps)
        y0 = sample_cylindrical_batch(SPEC, 5, StreamTag.INITIAL, 0, 0, n) / np.sqrt(SPEC.lambdas)
        g1 = sample_cylindrical_batch(SPEC, 5, StreamTag.GAMMA_1, 0, 0, n)
        g2 = sample_cylindrical_batch(SPEC, 5, StreamTag.GAMMA_2, 0, 0, n)
        state = CoupledState(x=np.zeros((n, 8)), y=y0)
        out = step_coupled_modified(SPEC, dt, eps, ops, ZERO_F, None, state, g1, g2)
        v = np.var(out.y, axis=0)
        # chi-square concentration: relative 4-sigma band is 4*sqrt(2/n)
        assert np.max(np.abs(v * SPEC.lambdas - 1.0)) < 4 * np.sqrt(2.0 / n)

    def test_combined_noise_variance_identity(self):
        ops = modified_operators(SPEC, 3.7)
        lhs = ops.b1**2 + ops.b2**2
        assert np.max(np.abs(lhs - ops.b_combined**2) / lhs) < 1e-12

    def test_rejects_bad_steps(self):
        ops = modified_operators(SPEC, 1.0)
        state = CoupledState(x=np.zeros(8), y=np.zeros(8))
        with pytest.raises(ValueError):
            step_coupled_modified(SPEC, -0.1, 1.0, ops, ZERO_F, None, state, np.zeros(8), np.zeros(8))
        with pytest.raises(ValueError):
            step_coupled_modified(SPEC, 0.1, 0.0, ops, ZERO_F, None, state, np.zeros(8), np.zeros(8))


class TestCoupledExpoStep:
    def test_decay_and_noise_scale(self):
        # lam = 1, dt/eps = ln 2: decay 1/2, noise variance (1 - 1/4)/1 = 3/4
        spec = dirichlet_spectrum(1)
        spec = type(spec)(J=1, lambdas=np.array([1.0]))
        state = CoupledState(x=np.zeros(1), y=np.array([2.0]))
        out0 = step_coupled_expo(spec, np.log(2.0), 1.0, ZERO_F, None, state, np.zeros(1))
        assert out0.y[0] == pytest.approx(1.0, rel=1e-14)
        out1 = step_coupled_expo(spec, np.log(2.0), 1.0, ZERO_F, None, state, np.ones(1))
        sd = out1.y[0] - out0.y[0]
        assert sd**2 == pytest.approx(0.75, rel=1e-13)

    def test_stationary_variance_in_stiff_limit(self):
        state = CoupledState(x=np.zeros(8), y=np.ones(8))
        out = step_coupled_expo(SPEC, 1.0, 1e-12, ZERO_F, None, state, np.ones(8))
        assert np.allclose(out.y**2 * SPEC.lambdas, 1.0, rtol=1e-10)

    def test_identity_in_smooth_limit(self):
        # deterministic part tends to the identity and the noise scale to 0
        y = rng.standard_normal(8)
        state = CoupledState(x=np.zeros(8), y=y)
        out = step_coupled_expo(SPEC, 1e-16, 1.0, ZERO_F, None, state, np.zeros(8))
        assert np.allclose(out.y, y, rtol=1e-12)
        noisy = step_coupled_expo(SPEC, 1e-16, 1.0, ZERO_F, None, state, np.ones(8))
        assert np.max(np.abs(noisy.y - out.y)) < np.sqrt(2e-16) * 1.01


class TestLimitingAndAveragedSteps:
    def test_limiting_without_coupling_is_resolvent(self):
        x = rng.standard_normal(8)
        out = step_limiting(SPEC, 0.25, ZERO_F, None, x, rng.standard_normal(8))
        assert np.allclose(out, x / (1.0 + 0.25 * SPEC.lambdas), rtol=1e-15)

    def test_limiting_mean_is_centered(self):
        n = 100_000
        x = np.broadcast_to(1.0 / SPEC.lambdas, (n, 8))
        g = sample_cylindrical_batch(SPEC, 77, StreamTag.GAMMA_1, 0, 0, n)
        out = step_limiting(SPEC, 0.1, LinearInY(c=2.0), None, x, g)
        target = (1.0 / SPEC.lambdas) / (1.0 + 0.1 * SPEC.lambdas)
        se = np.std(out, axis=0, ddof=1) / np.sqrt(n)
        assert np.all(np.abs(np.mean(out, axis=0) - target) <= 4 * se)

    def test_limiting_equals_averaged_when_y_ignored(self):
        nl = Affine(c_x=0.8, c_y=0.0)
        x = rng.standard_normal(8)
        lim = step_limiting(SPEC, 0.3, nl, None, x, rng.standard_normal(8))
        avg = step_averaged(SPEC, 0.3, nl, None, x)
        assert np.array_equal(lim, avg)

    def test_averaged_resolvent_when_fbar_zero(self):
        x = rng.standard_normal(8)
        out = step_averaged(SPEC, 0.5, LinearInY(c=3.0), None, x)
        assert np.allclose(out, x / (1.0 + 0.5 * SPEC.lambdas), rtol=1e-15)

    def test_averaged_constant_forcing_closed_form(self):
        gt = GridTransform(8)
        nl = PointwiseSquare(c=1.0)
        g = eval_Fbar(nl, gt, SPEC, np.zeros(8))
        dt, N = 0.05, 100
        x = rng.standard_normal(8)
        cur = x.copy()
        for _ in range(N):
            cur = step_averaged(SPEC, dt, nl, gt, cur)
        r = 1.0 / (1.0 + dt * SPEC.lambdas)
        closed = r**N * x + g * (1.0 - r**N) / SPEC.lambdas
        assert np.allclose(cur, closed, rtol=1e-12)

    def test_averaged_converges_to_equilibrium(self):
        gt = GridTransform(8)
        nl = PointwiseSquare(c=2.0)
        g = eval_Fbar(nl, gt, SPEC, np.zeros(8))
        cur = np.zeros(8)
        for _ in range(5000):
            cur = step_averaged(SPEC, 0.1, nl, gt, cur)
        assert np.allclose(cur, g / SPEC.lambdas, rtol=1e-10)


class TestRunTrajectory:
    def test_single_step_equals_direct_call(self):
        cfg = RunConfig(T=0.125, N=1, eps=0.5, scheme=SchemeKind.COUPLED_MODIFIED,
                        x0=np.ones(8), y0=np.ones(8))
        out = run_trajectory(cfg, SPEC, LinearInY(1.0), master_seed=3, sample_index=2)
        ops = modified_operators(SPEC, cfg.dt / cfg.eps)
        g1 = sample_cylindrical(SPEC, SeedContext(3, 2, 0, StreamTag.GAMMA_1))
        g2 = sample_cylindrical(SPEC, SeedContext(3, 2, 0, StreamTag.GAMMA_2))
        direct = step_coupled_modified(SPEC, cfg.dt, cfg.eps, ops, LinearInY(1.0), None,
                                       CoupledState(x=np.ones(8), y=np.ones(8)), g1, g2)
        assert np.array_equal(out.x, direct.x)
        assert np.array_equal(out.y, direct.y)

    def test_averaged_is_seed_independent(self):
        cfg = RunConfig(T=0.5, N=16, eps=1.0, scheme=SchemeKind.AVERAGED,
                        x0=np.ones(8), y0=np.zeros(8))
        a = run_trajectory(cfg, SPEC, LinearInY(1.0), master_seed=1)
        b = run_trajectory(cfg, SPEC, LinearInY(1.0), master_seed=999)
        assert np.array_equal(a, b)

    def test_uncoupled_slow_geometric_decay(self):
        cfg = RunConfig(T=0.5, N=32, eps=0.25, scheme=SchemeKind.COUPLED_MODIFIED,
                        x0=np.ones(8), y0=np.ones(8))
        out = run_trajectory(cfg, SPEC, ZERO_F, master_seed=5)
        closed = 1.0 / (1.0 + cfg.dt * SPEC.lambdas) ** cfg.N
        assert np.allclose(out.x, closed, rtol=1e-12)

    def test_mean_recursion_bit_for_bit(self):
        # zero noise draws turn the coupled scheme into its own mean
        # recursion; the oracle loop must match to the last bit
        nl = LinearInY(c=1.7)
        dt, eps, N = 0.0625, 0.4, 12
        ops = modified_operators(SPEC, dt / eps)
        state = CoupledState(x=np.ones(8), y=np.full(8, 0.3))
        zero = np.zeros(8)
        for _ in range(N):
            state = step_coupled_modified(SPEC, dt, eps, ops, nl, None, state, zero, zero)
        oracle = scheme_mean_recursion(SchemeKind.COUPLED_MODIFIED, SPEC.lambdas, nl.c, eps,
                                       dt, N, np.ones(8), np.full(8, 0.3))
        assert np.array_equal(state.x, oracle)

    def test_batch_matches_singles(self):
        cfg = RunConfig(T=0.25, N=4, eps=0.3, scheme=SchemeKind.COUPLED_EXPO,
                        x0=np.zeros(8), y0=np.ones(8))
        batch = run_trajectory_batch(cfg, SPEC, LinearInY(1.0), None, 17, 0, 6)
        for i in range(6):
            single = run_trajectory(cfg, SPEC, LinearInY(1.0), master_seed=17, sample_index=i)
            assert np.array_equal(batch.x[i], single.x)

    def test_validation(self):
        with pytest.raises(ValueError):
            RunConfig(T=1.0, N=0, eps=1.0, scheme=SchemeKind.AVERAGED, x0=np.ones(8), y0=np.ones(8))
        with pytest.raises(ValueError):
            RunConfig(T=-1.0, N=4, eps=1.0, scheme=SchemeKind.AVERAGED, x0=np.ones(8), y0=np.ones(8))
        with pytest.raises(ValueError):
            RunConfig(T=1.0, N=4, eps=0.0, scheme=SchemeKind.COUPLED_EXPO, x0=np.ones(8), y0=np.ones(8))
        with pytest.raises(ValueError):
            CoupledState(x=np.ones(3), y=np.ones(4))


class TestReferenceWeakValue:
    def test_constant_functional(self):
        cfg = RunConfig(T=0.25, N=4, eps=0.5, scheme=SchemeKind.COUPLED_MODIFIED,
                        x0=np.ones(8), y0=np.ones(8))
        mean, se = reference_weak_value(cfg, lambda x: np.ones(x.shape[0]), 16, 100, 0, SPEC,
                                        LinearInY(1.0))
        assert mean == 1.0 and se == 0.0

    def test_uncoupled_linear_functional_bound(self):
        # deterministic path: reference equals the resolvent power, which is
        # within the scalar gap of the semigroup value
        h = np.zeros(8)
        h[0] = 1.0
        cfg = RunConfig(T=0.5, N=8, eps=0.5, scheme=SchemeKind.COUPLED_MODIFIED,
                        x0=np.ones(8), y0=np.ones(8))
        R = 64
        mean, se = reference_weak_value(cfg, lambda x: x @ h, R, 50, 0, SPEC, ZERO_F)
        assert se == 0.0
        lam = SPEC.lambdas[0]
        n_fine = cfg.N * R
        gap = abs((1.0 + cfg.T / n_fine * lam) ** (-n_fine) - np.exp(-cfg.T * lam))
        assert abs(mean - np.exp(-cfg.T * lam)) <= gap * (1 + 1e-12)

    def test_refinement_doubling_consistency(self):
        # first-order bias: doubling the refinement about halves the gap
        h = np.ones(8)
        cfg = RunConfig(T=0.5, N=4, eps=0.5, scheme=SchemeKind.COUPLED_MODIFIED,
                        x0=np.ones(8), y0=np.zeros(8))
        truth = float(np.sum(np.exp(-cfg.T * SPEC.lambdas)))
        gaps = []
        for R in (16, 32):
            mean, _ = reference_weak_value(cfg, lambda x: x @ h, R, 10, 0, SPEC, ZERO_F)
            gaps.append(abs(mean - truth))
        assert 1.7 <= gaps[0] / gaps[1] <= 2.3

    def test_rejects_small_refinement(self):
        cfg = RunConfig(T=0.5, N=4, eps=0.5, scheme=SchemeKind.COUPLED_MODIFIED,
                        x0=np.ones(8), y0=np.zeros(8))
        with pytest.raises(ValueError):
            reference_weak_value(cfg, lambda x: x @ np.ones(8), 8, 10, 0, SPEC, ZERO_F)


class TestAveragedReference:
    def test_semigroup_half_life(self):
        spec = type(SPEC)(J=1, lambdas=np.array([1.0]))
        out = solve_averaged_reference(spec, LinearInY(2.0), np.array([1.0]), np.log(2.0))
        assert out[0] == pytest.approx(0.5, rel=1e-14)

    def test_constant_forcing_equilibrium(self):
        gt = GridTransform(8)
        nl = PointwiseSquare(c=1.5)
        g = eval_Fbar(nl, gt, SPEC, np.zeros(8))
        out = solve_averaged_reference(SPEC, nl, np.zeros(8), 100.0, gt)
        assert np.allclose(out, g / SPEC.lambdas, rtol=1e-12)

    def test_variation_of_constants(self):
        gt = GridTransform(8)
        nl = PointwiseSquare(c=1.0)
        g = eval_Fbar(nl, gt, SPEC, np.zeros(8))
        x0 = rng.standard_normal(8)
        T = 0.3
        out = solve_averaged_reference(SPEC, nl, x0, T, gt)
        decay = np.exp(-T * SPEC.lambdas)
        assert np.allclose(out, decay * x0 + (1 - decay) * g / SPEC.lambdas, rtol=1e-13)

    def test_fallback_self_consistency(self):
        gt = GridTransform(8)
        nl = saturating_square(1.0)
        x0 = 1.0 / SPEC.lambdas
        a = solve_averaged_reference(SPEC, nl, x0, 0.5, gt, n_fallback=2**10)
        b = solve_averaged_reference(SPEC, nl, x0, 0.5, gt, n_fallback=2**11)
        # implicit Euler is first order: successive refinements stay O(1/n)
        assert np.max(np.abs(a - b)) < 5.0 / 2**10
        assert np.max(np.abs(a - b)) > 0.0
