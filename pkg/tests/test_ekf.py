"""Extended Kalman filter: prediction, measurement model, update algebra,
and closed-loop behavior on simulated traces."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfpsoc import (BatteryState, EcmParams, KfState, NoiseConfig, OcvCurve,
                    SimConfig, run_ekf, simulate_profile, step_state)
from lfpsoc.ekf import (measurement_jacobian, predict, predicted_voltage,
                        step, transition_matrices, update)
from lfpsoc.profiles import generate_profile


def _state(curve, soc=0.5, up=0.0, p=None, noise=None, **kw):
    return KfState(x=BatteryState(soc, up),
                   p=np.diag([1e-4, 1e-4]) if p is None else p,
                   noise=noise or NoiseConfig.default(r=1e-6),
                   curve=curve, **kw)


class TestNoiseConfig:
    def test_rejects_bad_shapes_and_values(self):
        with pytest.raises(ValueError):
            NoiseConfig(q=np.eye(3), r=1e-6)
        with pytest.raises(ValueError):
            NoiseConfig(q=np.array([[1.0, 0.5], [0.0, 1.0]]), r=1e-6)
        with pytest.raises(ValueError):
            NoiseConfig(q=np.array([[1.0, 2.0], [2.0, 1.0]]), r=1e-6)  # not psd
        with pytest.raises(ValueError):
            NoiseConfig(q=np.eye(2), r=0.0)

    def test_override_without_anchor_rejected(self, base_curve):
        with pytest.raises(ValueError):
            _state(base_curve, slope_override=0.1)


class TestTransitionMatrices:
    def test_reference_values(self, params, sim_cfg):
        f, g = transition_matrices(params, sim_cfg)
        decay = math.exp(-1.0 / 40.0)  # tau = rp*cp = 40 s, dt = 1 s
        assert f == pytest.approx(np.diag([1.0, decay]), abs=1e-15)
        assert g[0] == pytest.approx(-1.0 / (3600.0 * 1.063), rel=1e-12)
        assert g[1] == pytest.approx(0.04 * (1.0 - decay), rel=1e-12)

    def test_prediction_matches_simulator(self, params, base_curve, sim_cfg):
        # oracle: the noise-free plant step is the same affine map
        st8 = _state(base_curve, soc=0.6, up=0.02)
        for current in (-1.0, 0.0, 0.5, 2.0):
            prior, _ = predict(st8, params, current, sim_cfg)
            plant, _ = step_state(BatteryState(0.6, 0.02), params, current,
                                  sim_cfg)
            assert prior.soc == pytest.approx(plant.soc, abs=1e-15)
            assert prior.up == pytest.approx(plant.up, abs=1e-15)

    def test_covariance_propagation_with_zero_q(self, params, base_curve,
                                                sim_cfg):
        noise = NoiseConfig(q=np.zeros((2, 2)), r=1e-6)
        p0 = np.array([[2e-4, 1e-5], [1e-5, 3e-4]])
        st8 = _state(base_curve, p=p0, noise=noise)
        _, p_minus = predict(st8, params, 0.0, sim_cfg)
        f, _ = transition_matrices(params, sim_cfg)
        assert np.allclose(p_minus, f @ p0 @ f.T, atol=1e-18)

    def test_q_added_once_per_predict(self, params, base_curve, sim_cfg):
        q = np.diag([1e-7, 1e-6])
        st8 = _state(base_curve, p=np.zeros((2, 2)),
                     noise=NoiseConfig(q=q, r=1e-6))
        _, p_minus = predict(st8, params, 0.0, sim_cfg)
        assert np.allclose(p_minus, q, atol=1e-18)


class TestMeasurementModel:
    def test_jacobian_uses_local_slope(self, two_knot_curve):
        st8 = _state(two_knot_curve, soc=0.3)
        h = measurement_jacobian(st8, BatteryState(0.3, 0.0))
        assert h == pytest.approx([0.5, -1.0], abs=1e-12)

    def test_jacobian_override(self, two_knot_curve):
        st8 = _state(two_knot_curve, slope_override=0.07,
                     anchor=BatteryState(0.3, 0.0))
        h = measurement_jacobian(st8, BatteryState(0.35, 0.0))
        assert h == pytest.approx([0.07, -1.0], abs=1e-12)

    def test_predicted_voltage_plain(self, two_knot_curve):
        p = EcmParams(r0=0.1, rp=0.04, cp=1000.0)
        st8 = _state(two_knot_curve)
        v = predicted_voltage(st8, BatteryState(0.4, 0.05), 1.0, p)
        assert v == pytest.approx(3.30 - 0.05 - 0.1, abs=1e-12)

    def test_predicted_voltage_affine_about_anchor(self, two_knot_curve):
        p = EcmParams(r0=0.1, rp=0.04, cp=1000.0)
        st8 = _state(two_knot_curve, slope_override=0.2,
                     anchor=BatteryState(0.3, 0.0))
        v = predicted_voltage(st8, BatteryState(0.35, 0.01), 0.0, p)
        # anchor value 3.25 on the curve, plus 0.2 * 0.05, minus up
        assert v == pytest.approx(3.25 + 0.2 * 0.05 - 0.01, abs=1e-12)

    def test_carried_anchor_value_takes_precedence(self, two_knot_curve):
        p = EcmParams(r0=0.1, rp=0.04, cp=1000.0)
        st8 = _state(two_knot_curve, slope_override=0.2,
                     anchor=BatteryState(0.3, 0.0), anchor_ocv=3.27)
        v = predicted_voltage(st8, BatteryState(0.3, 0.0), 0.0, p)
        assert v == pytest.approx(3.27, abs=1e-12)


class TestUpdate:
    def test_huge_r_leaves_prior(self, params, base_curve):
        st8 = _state(base_curve, noise=NoiseConfig(q=np.zeros((2, 2)), r=1e12))
        prior, prior_p = BatteryState(0.5, 0.0), np.diag([1e-4, 1e-4])
        out = update(st8, prior, prior_p, 3.9, 0.0, params)
        assert out.posterior.soc == pytest.approx(prior.soc, abs=1e-12)
        assert out.posterior.up == pytest.approx(prior.up, abs=1e-12)
        assert np.allclose(out.posterior_p, prior_p, atol=1e-12)

    def test_zero_innovation_keeps_state(self, params, base_curve):
        st8 = _state(base_curve)
        prior = BatteryState(0.5, 0.0)
        measured = predicted_voltage(st8, prior, 0.5, params)
        out = update(st8, prior, np.diag([1e-4, 1e-4]), measured, 0.5, params)
        assert out.innovation == pytest.approx(0.0, abs=1e-15)
        assert out.posterior.soc == prior.soc
        assert out.posterior.up == prior.up

    def test_scalar_hand_oracle(self, params, two_knot_curve):
        # diagonal prior, slope 0.5: every quantity has a closed form
        r = 1e-6
        p0, p1 = 4e-4, 1e-4
        st8 = _state(two_knot_curve, noise=NoiseConfig(q=np.zeros((2, 2)), r=r))
        prior = BatteryState(0.3, 0.0)
        prior_p = np.diag([p0, p1])
        measured = 3.25 + 0.002 - 0.0  # +2 mV above the model
        out = update(st8, prior, prior_p, measured, 0.0, params)
        h = np.array([0.5, -1.0])
        s = h @ prior_p @ h + r
        k = prior_p @ h / s
        assert out.innovation == pytest.approx(0.002, abs=1e-12)
        assert out.innovation_variance == pytest.approx(s, rel=1e-12)
        assert out.gain == pytest.approx(k, rel=1e-12)
        assert out.posterior.soc == pytest.approx(0.3 + k[0] * 0.002, rel=1e-12)
        assert out.posterior.up == pytest.approx(k[1] * 0.002, rel=1e-12)
        expect_p = (np.eye(2) - np.outer(k, h)) @ prior_p
        assert np.allclose(out.posterior_p, 0.5 * (expect_p + expect_p.T),
                           atol=1e-15)

    def test_soc_clamped_and_flagged(self, params):
        curve = OcvCurve(np.array([0.0, 1.0]), np.array([3.0, 3.4]))
        st8 = _state(curve, noise=NoiseConfig(q=np.zeros((2, 2)), r=1e-9))
        out = update(st8, BatteryState(0.99, 0.0), np.diag([1.0, 1e-8]),
                     5.0, 0.0, params)
        assert out.posterior.soc == 1.0
        assert out.soc_clamped

    @given(p00=st.floats(1e-8, 1e-2), p11=st.floats(1e-8, 1e-2),
           rho=st.floats(-0.9, 0.9), innov=st.floats(-0.05, 0.05))
    @settings(max_examples=100, deadline=None)
    def test_posterior_covariance_symmetric_psd_contracting(
            self, p00, p11, rho, innov):
        params = EcmParams(0.07, 0.04, 1000.0)
        curve = OcvCurve(np.array([0.0, 1.0]), np.array([3.0, 3.4]))
        st8 = _state(curve, noise=NoiseConfig(q=np.zeros((2, 2)), r=1e-6))
        cov = rho * math.sqrt(p00 * p11)
        prior_p = np.array([[p00, cov], [cov, p11]])
        prior = BatteryState(0.5, 0.0)
        measured = predicted_voltage(st8, prior, 0.0, params) + innov
        out = update(st8, prior, prior_p, measured, 0.0, params)
        post = out.posterior_p
        assert np.allclose(post, post.T, atol=1e-12)
        assert np.all(np.linalg.eigvalsh(post) > -1e-15)
        # the update never inflates uncertainty
        assert np.trace(post) <= np.trace(prior_p) + 1e-15


class TestRunEkf:
    def test_exact_init_zero_noise_tracks_truth(self, params, base_curve):
        cfg = SimConfig(capacity_ah=1.063, dt=1.0, cutoff_low_v=0.0)
        prof = generate_profile("dst-like", 1500, seed=3, amp=1.0,
                                target_discharge_ah=0.3)
        trace = simulate_profile(BatteryState(0.8, 0.0), params, base_curve,
                                 prof.samples, cfg)
        init = _state(base_curve, soc=0.8, up=0.0, p=np.diag([1e-6, 1e-6]),
                      noise=NoiseConfig(q=np.diag([1e-12, 1e-12]), r=1e-6))
        outs = run_ekf(init, params, trace, cfg)
        errs = np.array([o.posterior.soc for o in outs]) - trace.true_soc
        assert np.max(np.abs(errs)) < 1e-6

    def test_initial_error_decays(self, params, base_curve):
        cfg = SimConfig(capacity_ah=1.063, dt=1.0, cutoff_low_v=0.0)
        prof = generate_profile("dst-like", 3000, seed=4, amp=1.0,
                                target_discharge_ah=0.5)
        trace = simulate_profile(BatteryState(0.9, 0.0), params, base_curve,
                                 prof.samples, cfg)
        init = _state(base_curve, soc=0.7, up=0.0, p=np.diag([1e-2, 1e-4]),
                      noise=NoiseConfig(q=np.diag([1e-7, 1e-6]), r=1e-6))
        outs = run_ekf(init, params, trace, cfg)
        errs = np.abs(np.array([o.posterior.soc for o in outs]) - trace.true_soc)
        assert np.max(errs[-300:]) < 0.01  # 20 pp initial error forgotten

    def test_voltage_offset_biases_soc_upward(self, params, base_curve):
        # a curve reading consistently 20 mV high makes the filter report a
        # higher state of charge than the truth
        cfg = SimConfig(capacity_ah=1.063, dt=1.0, cutoff_low_v=0.0)
        prof = generate_profile("dst-like", 3000, seed=6, amp=1.0,
                                target_discharge_ah=0.5)
        trace = simulate_profile(BatteryState(0.9, 0.0), params, base_curve,
                                 prof.samples, cfg)
        import dataclasses
        biased = dataclasses.replace(trace,
                                     voltage_v=trace.voltage_v + 0.020)
        init = _state(base_curve, soc=0.9, up=0.0, p=np.diag([1e-4, 1e-4]),
                      noise=NoiseConfig(q=np.diag([1e-7, 1e-6]), r=1e-6))
        outs = run_ekf(init, params, biased, cfg)
        errs = np.array([o.posterior.soc for o in outs]) - trace.true_soc
        assert np.mean(errs[500:]) > 0.02

    def test_per_step_parameter_sequence(self, params, base_curve):
        cfg = SimConfig(capacity_ah=1.063, dt=1.0, cutoff_low_v=0.0)
        prof = generate_profile("dst-like", 400, seed=8, amp=1.0,
                                target_discharge_ah=0.1)
        trace = simulate_profile(BatteryState(0.8, 0.0), params, base_curve,
                                 prof.samples, cfg)
        init = _state(base_curve, soc=0.8, up=0.0,
                      noise=NoiseConfig(q=np.diag([1e-12, 1e-12]), r=1e-6))
        seq = [params] * len(trace)
        a = run_ekf(init, params, trace, cfg)
        b = run_ekf(init, seq, trace, cfg)
        for oa, ob in zip(a, b):
            assert oa.posterior.soc == ob.posterior.soc
            assert oa.innovation == ob.innovation

    def test_near_optimal_innovations_are_white(self, params, base_curve):
        # with the true model and matched noise, the normalized innovation
        # sequence should look like unit-variance white noise
        sigma = 0.003
        cfg = SimConfig(capacity_ah=1.063, dt=1.0, cutoff_low_v=0.0,
                        voltage_noise_sigma=sigma, rng_seed=13)
        prof = generate_profile("dst-like", 4000, seed=13, amp=1.0,
                                target_discharge_ah=0.5)
        trace = simulate_profile(BatteryState(0.9, 0.0), params, base_curve,
                                 prof.samples, cfg)
        init = _state(base_curve, soc=0.9, up=0.0, p=np.diag([1e-6, 1e-6]),
                      noise=NoiseConfig(q=np.diag([1e-12, 1e-12]), r=sigma**2))
        outs = run_ekf(init, params, trace, cfg)
        z = np.array([o.innovation / math.sqrt(o.innovation_variance)
                      for o in outs[200:]])
        n = len(z)
        assert np.var(z) == pytest.approx(1.0, rel=0.1)
        zc = z - z.mean()
        denom = float(zc @ zc)
        bound = 2.0 / math.sqrt(n)
        bad = sum(1 for lag in range(1, 21)
                  if abs(float(zc[lag:] @ zc[:-lag]) / denom) > bound)
        assert bad <= 2


class TestStepFirstFlag:
    def test_first_step_skips_prediction(self, params, base_curve, sim_cfg):
        st8 = _state(base_curve, soc=0.5, up=0.03)
        new, out = step(st8, params, prev_current=2.0,
                        measured_ut=predicted_voltage(
                            st8, st8.x, 0.0, params),
                        current=0.0, cfg=sim_cfg, first=True)
        assert out.prior.soc == 0.5 and out.prior.up == 0.03
        assert out.innovation == pytest.approx(0.0, abs=1e-15)
