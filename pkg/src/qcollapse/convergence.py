"""Step-halving convergence studies.

Every level is driven by the same Brownian path: level ``j`` sums the
finest-level increments over windows of ``2**(L-1-j)`` steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian_filter import GaussianState, simulate_filter
from .model import GridSpec, ModelParams, gaussian_wavefunction, quadratic_potential
from .noise import NoiseStream
from .prior import PriorMoments, run_prior
from .riccati import dispersions, integrate_omega, omega_closed_form
from .spde import SpdeConfig, run_spde


@dataclass(frozen=True)
class ConvergenceReport:
    label: str
    steps: np.ndarray
    errors: np.ndarray
    order: float
    monotone: bool

    def lines(self):
        out = [f"[{self.label}]"]
        for h, e in zip(self.steps, self.errors):
            out.append(f"  h={h:.6g}  error={e:.6e}")
        flag = "" if self.monotone else "  NON-MONOTONE"
        out.append(f"  fitted order = {self.order:.3f}{flag}")
        return out


def fitted_order(steps, errors):
    """Least-squares slope of log(error) against log(step)."""
    steps = np.asarray(steps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    slope, _ = np.polyfit(np.log(steps), np.log(errors), 1)
    return float(slope)


ROUNDOFF = 1e-11


def _report(label, steps, errors, scale=1.0):
    errors = np.asarray(errors, dtype=float)
    if np.all(errors <= ROUNDOFF * max(1.0, scale)):
        # the integrator is exact for this problem; nothing to fit
        return ConvergenceReport(label + " [exact to round-off]",
                                 np.asarray(steps, dtype=float), errors, float("nan"), True)
    monotone = bool(np.all(np.diff(errors) < 0)) and bool(np.all(errors > 0))
    order = fitted_order(steps, errors) if np.all(errors > 0) else float("nan")
    return ConvergenceReport(label, np.asarray(steps, dtype=float), errors, order, monotone)


def _levels(dt, levels):
    if levels < 3:
        raise ValueError("need at least 3 levels")
    return [dt / 2 ** j for j in range(levels)]


def _coarse_error(fine_t, fine_q, t, q):
    """Max |q - fine| over the coarse time grid."""
    idx = np.rint(t / (fine_t[1] - fine_t[0])).astype(int)
    return float(np.max(np.abs(q - fine_q[idx])))


def filter_strong(params: ModelParams, q0, p0, sigma_q2, dt, t_final, levels, seed=0, index=0):
    steps = _levels(dt, levels)
    finest = NoiseStream(seed, index, steps[-1])
    init = GaussianState.from_packet(q0, p0, sigma_q2, params)
    runs = [simulate_filter(init, finest.coarsened(2 ** (levels - 1 - j)), t_final, params)[0]
            for j in range(levels)]
    ref = runs[-1]
    errs = [_coarse_error(ref.t, ref.q_hat, r.t, r.q_hat) for r in runs[:-1]]
    return _report("filter strong (q_hat vs finest)", steps[:-1], errs)


def riccati_order(params: ModelParams, sigma_q2, dt, t_final, levels):
    steps = _levels(dt, levels)
    omega0 = -params.hbar / (2 * params.m * sigma_q2)
    errs = []
    for h in steps:
        path = integrate_omega(omega0, h, t_final, params, substeps=1)
        exact = np.array([omega_closed_form(t, omega0, params) for t in path.t])
        errs.append(float(np.max(np.abs(path.omega - exact))))
    return _report("riccati RK4 (omega vs closed form)", steps, errs)


def prior_order(params: ModelParams, q0, p0, sigma_q2, dt, t_final, levels):
    steps = _levels(dt, levels)
    init = PriorMoments.from_packet(q0, p0, sigma_q2, params)
    runs = [run_prior(init, h, t_final, params) for h in steps]
    ref = runs[-1]
    errs = []
    for r in runs[:-1]:
        idx = np.rint(r.t / steps[-1]).astype(int)
        errs.append(float(np.max(np.abs(r.var_x - ref.var_x[idx]))))
    return _report("prior RK4 (var_x vs finest)", steps[:-1], errs,
                   scale=float(np.max(np.abs(ref.var_x))))


def spde_strong(params: ModelParams, grid: GridSpec, q0, p0, sigma_q2, dt, t_final, levels,
                scheme="em", seed=0, index=0):
    steps = _levels(dt, levels)
    finest = NoiseStream(seed, index, steps[-1])
    init = gaussian_wavefunction(q0, p0, sigma_q2, grid, params)
    pot = quadratic_potential(params)
    runs = []
    for j, h in enumerate(steps):
        cfg = SpdeConfig(h, t_final, scheme)
        runs.append(run_spde(init, finest.coarsened(2 ** (levels - 1 - j)), cfg, pot, params).series)
    ref = runs[-1]
    errs = [_coarse_error(ref.t, ref.q_hat, r.t, r.q_hat) for r in runs[:-1]]
    return _report(f"spde strong, {scheme} (q_hat vs finest)", steps[:-1], errs)


def spde_spatial(params: ModelParams, x_min, x_max, n_finest, sigma_q2, dt, t_final, levels):
    """Free unobserved packet on successively finer grids (central-difference
    Laplacian), error of tau_q2(t_final) against the exact free-spreading law."""
    free = ModelParams(m=params.m, hbar=params.hbar)
    omega0 = -free.hbar / (2 * free.m * sigma_q2)
    exact = dispersions(omega_closed_form(t_final, omega0, free), free)[0]
    ns = [n_finest // 2 ** (levels - 1 - j) for j in range(levels)]
    errs, hs = [], []
    pot = quadratic_potential(free)
    for n in ns:
        grid = GridSpec(x_min, x_max, n)
        init = gaussian_wavefunction(0.0, 0.0, sigma_q2, grid, free)
        cfg = SpdeConfig(dt, t_final, "em", track=False)
        s = run_spde(init, NoiseStream(0, 0, dt), cfg, pot, free).series
        errs.append(abs(s.tau_q2[-1] - exact))
        hs.append(grid.dx)
    return _report("spde spatial (tau_q2 vs exact free spreading)", hs, errs)
