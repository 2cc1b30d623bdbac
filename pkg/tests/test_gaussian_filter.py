import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import assert_heisenberg
from qcollapse.errors import NonNormalizableError, ValidationError
from qcollapse.gaussian_filter import (
    GaussianState,
    filter_step,
    filter_step_w,
    gains,
    innovation,
    qp_from_w,
    run_filter,
    simulate_filter,
    w_from_qp,
)
from qcollapse.model import make_params
from qcollapse.noise import NoiseStream
from qcollapse.riccati import asymptotic_dispersions, dispersions, omega_closed_form
from qcollapse.series import MeasurementRecord


def test_from_packet():
    s = GaussianState.from_packet(1.0, 2.0, 1.0, make_params())
    assert s.omega == -0.5
    assert (s.q_hat, s.p_hat) == (1.0, 2.0)


def test_state_rejects_non_normalizable_width():
    with pytest.raises(NonNormalizableError):
        GaussianState(0.0, 0.0, 0.5 + 1j)


def test_w_chart_round_trip():
    rng = np.random.default_rng(0)
    p = make_params(m=1.7, hbar=0.8)
    for _ in range(1000):
        s = GaussianState(rng.normal(0, 10), rng.normal(0, 10),
                          complex(-rng.uniform(1e-3, 10), rng.normal(0, 10)))
        q, pp = qp_from_w(*w_from_qp(s, p), p)
        assert q == pytest.approx(s.q_hat, rel=1e-12, abs=1e-10)
        assert pp == pytest.approx(s.p_hat, rel=1e-12, abs=1e-10)


def test_innovation_and_gains():
    p = make_params(lam=2.0)
    assert innovation(0.5, 1.0, 0.01, p) == pytest.approx(0.5 - 2 * 0.01)
    kq, kp = gains(-1 + 1j, p)
    assert kq == pytest.approx(1.0)
    assert kp == pytest.approx(1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.3, 3), st.floats(0.3, 3), st.floats(0.01, 5),
       st.floats(1e-2, 10), st.floats(-10, 10))
def test_position_gain_is_sqrt_two_lambda_times_width(m, hbar, lam, neg_re, im):
    p = make_params(m=m, hbar=hbar, lam=lam)
    w = complex(-neg_re, im)
    kq, _ = gains(w, p)
    assert kq == pytest.approx(math.sqrt(2 * lam) * dispersions(w, p)[0], rel=1e-12)


def test_deterministic_step_without_measurement():
    p = make_params()
    s = filter_step(GaussianState(1.0, 2.0, -0.5), 0.0, 0.1, p)
    assert s.q_hat == pytest.approx(1.2)
    assert s.p_hat == 2.0
    assert s.t == pytest.approx(0.1)


def test_step_rejects_bad_dt():
    with pytest.raises(ValidationError):
        filter_step(GaussianState(0, 0, -0.5), 0.0, 0.0, make_params())


def test_zero_length_record_is_rejected():
    with pytest.raises(ValidationError):
        MeasurementRecord(1e-3, np.array([]))


def test_width_does_not_depend_on_the_record():
    p = make_params(kappa=-1.0, lam=1.0)
    init = GaussianState.from_packet(0, 0, 2.0, p)
    a, _ = simulate_filter(init, NoiseStream(1, 0, 1e-2), 5.0, p)
    b, _ = simulate_filter(init, NoiseStream(2, 0, 1e-2), 5.0, p)
    assert np.array_equal(a.tau_q2, b.tau_q2)
    assert not np.array_equal(a.q_hat, b.q_hat)
    exact = [dispersions(omega_closed_form(t, init.omega, p), p)[0] for t in a.t]
    np.testing.assert_allclose(a.tau_q2, exact, rtol=1e-8)


def test_replaying_the_record_reproduces_the_trajectory():
    p = make_params(kappa=0.5, g=0.3, lam=1.5)
    init = GaussianState.from_packet(0.2, -0.1, 0.7, p)
    series, record = simulate_filter(init, NoiseStream(3, 4, 1e-3), 2.0, p)
    replay = run_filter(init, record, p)
    np.testing.assert_allclose(replay.q_hat, series.q_hat, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(replay.p_hat, series.p_hat, rtol=1e-12, atol=1e-12)
    assert_heisenberg(replay, p.hbar)


def test_w_chart_is_the_same_filter():
    # both charts are Euler discretisations of one SDE; they agree to O(dt)
    p = make_params(kappa=-1.0, g=0.2, lam=1.0)
    init = GaussianState.from_packet(0.5, 0.0, 1.0, p)
    for dt in (2e-3, 1e-3):
        series, record = simulate_filter(init, NoiseStream(0, 0, dt / 8).coarsened(8), 1.0, p)
        w, om = w_from_qp(init, p)
        for dY in record.increments:
            w, om = filter_step_w(w, om, dY, dt, p)
        q, pp = qp_from_w(w, om, p)
        err = abs(q - series.q_hat[-1]) + abs(pp - series.p_hat[-1])
        assert err < 20 * dt


def test_unobserved_oscillator_follows_the_classical_ellipse():
    p = make_params(kappa=-1.0)
    init = GaussianState.from_packet(1.0, 0.0, 0.5, p)
    dt = 2 * math.pi / 60000
    series, _ = simulate_filter(init, NoiseStream(0, 0, dt), 2 * math.pi, p)
    np.testing.assert_allclose(series.q_hat, np.cos(series.t), atol=5e-4)
    np.testing.assert_allclose(series.p_hat, -np.sin(series.t), atol=5e-4)
    np.testing.assert_allclose(series.tau_q2, 0.5, atol=1e-10)


def test_free_particle_collapses_to_watchdog_width():
    p = make_params(lam=2.0)
    for s2 in (0.05, 1.0, 20.0):
        init = GaussianState.from_packet(0, 0, s2, p)
        series, _ = simulate_filter(init, NoiseStream(0, 0, 1e-3), 10.0, p)
        assert series.tau_q2[-1] == pytest.approx(0.5, abs=1e-6)
        assert series.tau_q2[-1] == pytest.approx(asymptotic_dispersions(p)[0], abs=1e-6)
        assert_heisenberg(series, p.hbar)


def test_record_drift_tracks_position():
    # dY = sqrt(2 lam) q dt + dW with the filter's own q
    p = make_params(lam=0.5)
    noise = NoiseStream(9, 0, 1e-3)
    init = GaussianState.from_packet(3.0, 0.0, 1.0, p)
    series, record = simulate_filter(init, noise, 0.5, p)
    dW = noise.increments(0, len(record))
    np.testing.assert_allclose(record.increments - dW, math.sqrt(1.0) * series.q_hat[:-1] * 1e-3,
                               rtol=1e-12, atol=1e-15)
