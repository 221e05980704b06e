"""Time steppers, residual monitoring, baselines, trace persistence."""

import numpy as np
import pytest

from tideop import deeponet as dn
from tideop import rollout as ro
from tideop.grids import Grid1D, Grid2D


def decay(u):
    return -u


class TestSteppers:
    def test_euler_hand_value(self):
        u = ro.euler_step(decay, np.array([1.0]), 0.1)
        assert u[0] == pytest.approx(0.9, abs=1e-15)

    def test_rk4_hand_value(self):
        u = ro.rk4_step(decay, np.array([1.0]), 0.1)
        assert u[0] == pytest.approx(0.90483750, abs=1e-10)

    def test_abm2_two_step_hand_value(self):
        trace = ro.integrate(decay, np.array([1.0]), 0.1, 2, scheme="abm2")
        # step 1 is the RK4 bootstrap; step 2 the predictor-corrector
        # predictor 0.9048375 + 0.1*(1.5*(-0.9048375) + 0.5) = 0.819111875
        # corrector 0.9048375 + 0.05*(-0.819111875 - 0.9048375)
        assert trace.states[1, 0] == pytest.approx(0.90483750, abs=1e-10)
        assert trace.states[2, 0] == pytest.approx(0.81864003125, abs=1e-12)

    @pytest.mark.parametrize("scheme,order,tol", [
        ("euler", 1.0, 0.1),
        ("abm2", 2.0, 0.2),
        ("rk4", 4.0, 0.3),
    ])
    def test_convergence_order(self, scheme, order, tol):
        dts = np.array([0.2, 0.1, 0.05, 0.025])
        errs = []
        for dt in dts:
            n = int(round(1.0 / dt))
            trace = ro.integrate(decay, np.array([1.0]), dt, n, scheme=scheme)
            errs.append(abs(trace.states[-1, 0] - np.exp(-1.0)))
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert slope == pytest.approx(order, abs=tol)


class TestIntegrate:
    def test_state_count_and_times(self):
        trace = ro.integrate(decay, np.ones(4), 0.01, 500)
        assert trace.states.shape == (501, 4)
        assert trace.times[0] == 0.0
        assert trace.times[-1] == pytest.approx(5.0)
        assert len(trace.wall_s) == 500

    def test_zero_steps_is_initial_state_only(self):
        u0 = np.array([2.0, 3.0])
        trace = ro.integrate(decay, u0, 0.1, 0, recon_fn=lambda u: u)
        assert trace.states.shape == (1, 2)
        assert np.array_equal(trace.states[0], u0)
        assert trace.residuals.shape == (1, 2)

    def test_unknown_scheme_rejected(self):
        with pytest.raises(ValueError, match="scheme"):
            ro.integrate(decay, np.ones(2), 0.1, 1, scheme="heun")

    def test_residuals_align_with_states(self):
        recon = lambda u: u + 0.5
        trace = ro.integrate(decay, np.ones(3), 0.1, 4, recon_fn=recon)
        assert trace.residuals.shape == trace.states.shape
        # bit-for-bit the squared gap, including at the initial state
        for i in range(trace.n_states):
            expect = (trace.states[i] - recon(trace.states[i])) ** 2
            assert np.array_equal(trace.residuals[i], expect)
        assert np.allclose(trace.residual_mean, 0.25)

    def test_perfect_reconstruction_never_flags(self):
        trace = ro.integrate(decay, np.ones(3), 0.1, 5, recon_fn=lambda u: u,
                             residual_threshold=1e-12)
        assert np.array_equal(trace.residuals, np.zeros_like(trace.states))
        assert not trace.flagged.any()

    def test_threshold_flags_do_not_stop_integration(self):
        trace = ro.integrate(decay, np.ones(3), 0.1, 5, recon_fn=lambda u: u + 1.0,
                             residual_threshold=0.5)
        assert trace.flagged.all()
        assert trace.n_states == 6
        assert not trace.diverged

    def test_divergence_truncates_with_failing_step(self):
        def blow_up(u):
            return u * 1e200

        trace = ro.integrate(blow_up, np.ones(2), 1.0, 10, scheme="euler")
        assert trace.diverged
        assert trace.failing_step is not None
        assert np.all(np.isfinite(trace.states))
        assert trace.n_states == trace.failing_step
        assert len(trace.wall_s) == trace.n_states - 1

    def test_no_monitor_without_recon(self):
        trace = ro.integrate(decay, np.ones(2), 0.1, 2)
        assert trace.residuals is None
        assert trace.residual_mean is None
        assert trace.flagged is None


class TestOperatorInference:
    def _piti_setup(self):
        grid = Grid1D(16)
        config = dn.NetConfig("dense", (12,), (12,), 6, (16,), dual_output=True,
                              split_trunk=True)
        params = dn.init_params(config, 11)
        return grid, config, params

    def test_piti_infer_matches_manual_integration(self):
        grid, config, params = self._piti_setup()
        u0 = np.sin(np.pi * grid.nodes)
        trace = ro.piti_infer(params, config, grid, u0, 0.1, 3, scheme="euler")
        tangent = dn.make_tangent_fn(params, config, grid)
        u = u0.copy()
        for _ in range(3):
            u = u + 0.1 * tangent(u)
        assert np.array_equal(trace.states[-1], u)
        assert trace.residuals is not None

    def test_fr_infer_shape_and_past_horizon(self):
        grid = Grid1D(16)
        config = dn.NetConfig("dense", (12,), (12,), 6, (16,), dual_output=False)
        params = dn.init_params(config, 5)
        u0 = np.cos(np.pi * grid.nodes)
        out = ro.fr_infer(params, config, grid, u0, [0.0, 0.5, 5.0])
        assert out.shape == (3, 16)
        assert np.all(np.isfinite(out))

    def test_fr_infer_single_time_matches_batch(self):
        grid = Grid1D(16)
        config = dn.NetConfig("dense", (12,), (12,), 6, (16,), dual_output=False)
        params = dn.init_params(config, 5)
        u0 = np.cos(np.pi * grid.nodes)
        batch = ro.fr_infer(params, config, grid, u0, [0.0, 0.3])
        single = ro.fr_infer(params, config, grid, u0, [0.3])
        assert np.array_equal(batch[1], single[0])

    def test_ar_infer_zero_steps(self):
        grid = Grid1D(16)
        config = dn.NetConfig("dense", (12,), (12,), 6, (16,), dual_output=False)
        params = dn.init_params(config, 5)
        u0 = np.cos(np.pi * grid.nodes)
        states = ro.ar_infer(params, config, grid, u0, 0, dt=0.01)
        assert states.shape == (1, 16)
        assert np.array_equal(states[0], u0)

    def test_ar_infer_is_self_composition(self):
        grid = Grid1D(16)
        config = dn.NetConfig("dense", (12,), (12,), 6, (16,), dual_output=False)
        params = dn.init_params(config, 5)
        u0 = np.cos(np.pi * grid.nodes)
        states = ro.ar_infer(params, config, grid, u0, 3, dt=0.01)
        one = ro.ar_infer(params, config, grid, u0, 1, dt=0.01)[1]
        two = ro.ar_infer(params, config, grid, one, 1, dt=0.01)[1]
        assert np.array_equal(states[1], one)
        assert np.array_equal(states[2], two)

    def test_ar_infer_conv_shape(self):
        grid = Grid2D(16, 16, periodic_x=True, periodic_y=True)
        config = dn.NetConfig("conv2d", (12,), (12,), 6, (16, 16), dual_output=False)
        params = dn.init_params(config, 5)
        u0 = np.tanh(np.add.outer(grid.x_axis.nodes, -grid.y_axis.nodes))
        states = ro.ar_infer(params, config, grid, u0, 2, dt=0.01)
        assert states.shape == (3, 16, 16)

    def test_ar_infer_one_step_matches_forward_with_output_scale(self):
        grid = Grid1D(16)
        config = dn.NetConfig("dense", (12,), (12,), 6, (16,), dual_output=False,
                              output_scale=40.0)
        params = dn.init_params(config, 5)
        u0 = np.cos(np.pi * grid.nodes)
        step = ro.ar_infer(params, config, grid, u0, 1, dt=0.01)[1]
        coords = np.column_stack([np.full(16, 0.01), grid.nodes])
        ref, _ = dn.forward(params.views(), config, u0[None], coords)
        assert np.allclose(step, ref[0], atol=1e-10)


class TestTracePersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        trace = ro.integrate(decay, np.linspace(1, 2, 5), 0.05, 7,
                             recon_fn=lambda u: u * 1.01, residual_threshold=1e-4)
        ro.write_trace(trace, tmp_path / "run")
        back = ro.read_trace(tmp_path / "run")
        assert back.scheme == trace.scheme
        assert back.dt == trace.dt
        assert np.array_equal(back.states, trace.states)
        assert np.array_equal(back.residuals, trace.residuals)
        assert np.array_equal(back.residual_mean, trace.residual_mean)
        assert np.array_equal(back.flagged, trace.flagged)
        assert np.array_equal(back.wall_s, trace.wall_s)
        assert back.threshold == trace.threshold

    def test_diverged_trace_round_trip(self, tmp_path):
        trace = ro.integrate(lambda u: u * 1e200, np.ones(2), 1.0, 9, scheme="euler")
        ro.write_trace(trace, tmp_path / "run")
        back = ro.read_trace(tmp_path / "run")
        assert back.diverged
        assert back.failing_step == trace.failing_step
        assert back.residuals is None
        assert np.array_equal(back.states, trace.states)

    def test_monitorless_trace_round_trip(self, tmp_path):
        trace = ro.integrate(decay, np.ones(3), 0.1, 2)
        ro.write_trace(trace, tmp_path / "run")
        back = ro.read_trace(tmp_path / "run")
        assert back.residuals is None and back.flagged is None
