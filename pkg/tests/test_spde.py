import math

import numpy as np
import pytest

from conftest import assert_heisenberg
from qcollapse.errors import BoundaryError, InstabilityError, ValidationError
from qcollapse.gaussian_filter import GaussianState, run_filter
from qcollapse.model import (
    GridSpec,
    gaussian_log_fit,
    gaussian_state_from_omega,
    gaussian_wavefunction,
    grid_moments,
    make_params,
    quadratic_potential,
)
from qcollapse.noise import NoiseStream
from qcollapse.riccati import alpha, dispersions, omega_closed_form
from qcollapse.spde import (
    SpdeConfig,
    SpdeRunError,
    canonical_scheme,
    em_stability_bound,
    run_spde,
    spde_step,
    synthesize_record,
)


def _run(params, grid, dt, t_final, scheme="splitstep", seed=0, s2=1.0, q0=0.0, p0=0.0, **kw):
    init = gaussian_wavefunction(q0, p0, s2, grid, params)
    cfg = SpdeConfig(dt, t_final, scheme, **kw)
    return run_spde(init, NoiseStream(seed, 0, dt), cfg, quadratic_potential(params), params)


def test_scheme_names():
    assert canonical_scheme("Euler-Maruyama".lower()) == "em"
    assert canonical_scheme("split-step") == "splitstep"
    with pytest.raises(ValidationError):
        canonical_scheme("rk45")


def test_em_stability_bound_is_enforced():
    p = make_params(lam=1.0)
    grid = GridSpec(-8, 8, 512)
    bound = em_stability_bound(grid, p)
    assert bound == pytest.approx(0.5 * (16 / 512) ** 2)
    with pytest.raises(ValidationError):
        _run(p, grid, 1e-3, 1e-3 * 4, scheme="em")


def test_synthesize_record():
    p = make_params(lam=2.0)
    assert synthesize_record(0.5, 0.1, 0.01, p) == pytest.approx(2 * 0.5 * 0.01 + 0.1)


def test_free_unobserved_spreading_em():
    p = make_params()
    grid = GridSpec(-10, 10, 512)
    res = _run(p, grid, 1e-4, 1.0, scheme="em", track=False)
    exact = dispersions(omega_closed_form(1.0, -0.5, p), p)[0]
    assert exact == pytest.approx(1.25)
    assert abs(res.series.tau_q2[-1] - exact) <= 1e-4
    assert_heisenberg(res.series, p.hbar)


def test_free_unobserved_spreading_splitstep_is_spectrally_exact():
    p = make_params()
    grid = GridSpec(-12, 12, 256)
    res = _run(p, grid, 1e-2, 2.0, track=False)
    exact = [dispersions(omega_closed_form(t, -0.5, p), p)[0] for t in res.series.t]
    np.testing.assert_allclose(res.series.tau_q2, exact, rtol=1e-9)


def test_stationary_packet_is_unchanged_without_noise():
    p = make_params(lam=2.0)
    grid = GridSpec(-8, 8, 256)
    w = 1j * alpha(p)
    state = gaussian_state_from_omega(0.0, 0.0, w, grid, p)
    pot = quadratic_potential(p)
    for dt in (1e-2, 5e-3):
        s = state
        for _ in range(int(round(0.1 / dt))):
            s = spde_step(s, 0.0, dt, pot, p).state
        fit = gaussian_log_fit(s, p)
        assert abs(fit.omega - w) < 2 * dt ** 2
        assert abs(grid_moments(s, p).q_hat) < 1e-12


def test_record_is_synthesised_from_the_posterior_mean():
    p = make_params(lam=2.0)
    noise = NoiseStream(4, 0, 1e-3)
    res = _run(p, GridSpec(-8, 8, 256), 1e-3, 0.2, q0=0.5, seed=4)
    dW = noise.increments(0, 200)
    q = res.series.q_hat
    np.testing.assert_allclose(res.record.increments, 2 * q[:-1] * 1e-3 + dW, rtol=1e-12, atol=1e-15)
    assert res.record.provenance["scheme"] == "splitstep"


def test_runs_are_reproducible():
    p = make_params(kappa=-1.0, lam=1.0)
    a = _run(p, GridSpec(-8, 8, 256), 1e-3, 0.5, seed=3).series
    b = _run(p, GridSpec(-8, 8, 256), 1e-3, 0.5, seed=3).series
    for name, col in a.columns().items():
        assert np.array_equal(col, b.columns()[name], equal_nan=True), name


def test_schemes_agree_on_the_same_noise():
    p = make_params(lam=2.0)
    grid = GridSpec(-8, 8, 256)
    dt = 1e-3
    em = _run(p, grid, dt, 1.0, scheme="em", seed=2).series
    ss = _run(p, grid, dt, 1.0, scheme="splitstep", seed=2).series
    assert np.max(np.abs(em.q_hat - ss.q_hat)) <= 5 * math.sqrt(dt)


def test_norm_drift_shrinks_with_dt():
    p = make_params(lam=2.0)
    grid = GridSpec(-8, 8, 256)
    drifts = []
    for dt in (1e-3, 5e-4):
        s = _run(p, grid, dt, 0.5, scheme="em", seed=1).series
        drifts.append(np.nanmax(np.abs(s.norm_drift)))
    assert 1.5 <= drifts[0] / drifts[1] <= 2.7


def test_width_matches_the_riccati_flow():
    p = make_params(kappa=-1.0, lam=1.0)
    grid = GridSpec(-12, 12, 512)
    res = _run(p, grid, 1e-3, 2.0, s2=2.0, fit_every=100, seed=5)
    fit = gaussian_log_fit(res.final_state, p)
    exact = omega_closed_form(2.0, -0.25, p)
    assert abs(fit.omega - exact) <= 1e-2
    assert res.series.tau_q2[-1] == pytest.approx(dispersions(exact, p)[0], rel=1e-2)
    assert fit.q_fit == pytest.approx(res.series.q_hat[-1], abs=1e-6)
    assert np.nanmax(res.series.fit_residual) <= 1e-3


def test_splitstep_conserves_energy_without_measurement():
    p = make_params(kappa=-1.0)
    grid = GridSpec(-12, 12, 512)
    s = _run(p, grid, 1e-3, 1.0, s2=0.3, q0=1.0, p0=0.5).series
    energy = (s.p_hat ** 2 + s.tau_p2) / 2 + (s.q_hat ** 2 + s.tau_q2) / 2
    assert np.max(np.abs(energy - energy[0])) <= 1e-6


def test_filter_replays_spde_record():
    p = make_params(lam=2.0)
    grid = GridSpec(-8, 8, 256)
    res = _run(p, grid, 1e-3, 1.0, scheme="splitstep", seed=8)
    fs = run_filter(GaussianState.from_packet(0, 0, 1.0, p), res.record, p)
    assert np.max(np.abs(fs.q_hat - res.series.q_hat)) < 0.05
    np.testing.assert_allclose(fs.tau_q2, res.series.tau_q2, rtol=1e-2)


def test_boundary_failure_keeps_partial_results():
    p = make_params(g=5.0)
    grid = GridSpec(-8, 8, 256)
    with pytest.raises(SpdeRunError) as info:
        _run(p, grid, 1e-2, 3.0, s2=0.5, track=False)
    err = info.value
    assert isinstance(err.cause, BoundaryError)
    part = err.partial.series
    assert 1 <= len(part) == err.step
    assert np.all(np.isfinite(part.q_hat))
    assert part.q_hat[-1] > 1.0


def test_norm_drift_limit():
    p = make_params(lam=2.0)
    with pytest.raises(SpdeRunError) as info:
        _run(p, GridSpec(-8, 8, 256), 1e-3, 0.5, max_norm_drift=1e-6)
    assert isinstance(info.value.cause, InstabilityError)


def test_tracking_follows_an_accelerating_packet():
    p = make_params(g=5.0, lam=1.0)
    res = _run(p, GridSpec(-8, 8, 256), 1e-3, 3.0, s2=0.5)
    assert res.series.q_hat[-1] > 15
    assert res.final_state.grid.x_min > 0
    assert_heisenberg(res.series, p.hbar)
