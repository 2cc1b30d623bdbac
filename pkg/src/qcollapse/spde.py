"""Grid integration of the nonlinear posterior wave equation.

    d psi = [ (i hbar/2m) psi'' - ((i/hbar) phi + (lam/4)(x - q)^2) psi ] dt
            + sqrt(lam/2) (x - q) psi dW

with ``q`` the current posterior mean position and ``dW`` the innovation,
a standard Wiener increment.  The record increment is synthesised as
``dY = sqrt(2 lam) q dt + dW``.

The state is kept in a co-moving window (see :mod:`qcollapse.model`): the
window slides with the frame velocity ``P/m``, the linear part of the
potential about the window centre is absorbed as a kick of ``P``, and
between steps the envelope is re-gauged and shifted by whole nodes so that
it stays centred with small momentum.  All three operations are exact
changes of representation.

Two schemes are provided:

``"em"``
    Euler-Maruyama for the potential, measurement and noise terms, with the
    kinetic term advanced by Crank-Nicolson on the three-point Laplacian.
    A fully explicit kinetic update is unconditionally unstable for the
    Schroedinger operator, so only the stochastic part is explicit.
``"splitstep"``
    Strang splitting: half kinetic step (spectral), full multiplicative step
    ``exp[-(i/hbar) phi dt - (lam/2)(x-q)^2 dt + sqrt(lam/2)(x-q) dW]`` that
    already contains the Ito correction, half kinetic step.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_banded

from .errors import InstabilityError, QCollapseError, ValidationError
from .model import (
    GridState,
    ModelParams,
    gaussian_log_fit,
    grid_moments,
    normalized,
    potential_derivative,
)
from .noise import NoiseStream
from .riccati import step_count
from .series import MeasurementRecord, TrajectorySeries

SCHEME_ALIASES = {
    "em": "em",
    "euler-maruyama": "em",
    "splitstep": "splitstep",
    "split-step": "splitstep",
}


def canonical_scheme(name):
    try:
        return SCHEME_ALIASES[name]
    except KeyError:
        raise ValidationError("scheme", f"unknown scheme {name!r}") from None


@dataclass(frozen=True)
class SpdeConfig:
    dt: float
    t_final: float
    scheme: str = "splitstep"
    renormalize: bool = True
    fit_every: int = 0
    track: bool = True
    max_norm_drift: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "scheme", canonical_scheme(self.scheme))
        step_count(self.dt, self.t_final)
        if self.fit_every < 0:
            raise ValidationError("fit_every", "must be >= 0")


def em_stability_bound(grid, params: ModelParams):
    return 0.5 * params.m * grid.dx ** 2 / params.hbar


def check_stability(config: SpdeConfig, grid, params: ModelParams):
    if config.scheme == "em":
        bound = em_stability_bound(grid, params)
        if config.dt > bound * (1 + 1e-12):
            raise ValidationError(
                "dt", f"{config.dt:g} exceeds the Euler-Maruyama bound {bound:.3g} for dx={grid.dx:.3g}")


def synthesize_record(q_hat, dW, dt, params: ModelParams):
    return math.sqrt(2 * params.lam) * q_hat * dt + dW


@functools.lru_cache(maxsize=16)
def _cn_matrices(n, dx, dt, hbar, m):
    c = 1j * hbar * dt / (4 * m * dx * dx)
    ab = np.empty((3, n), dtype=np.complex128)
    ab[0, :] = -c
    ab[1, :] = 1 + 2 * c
    ab[2, :] = -c
    ab.setflags(write=False)
    return ab, c


def _cn_kinetic(psi, dx, dt, params, explicit_extra):
    """Solve ``(1 - dt/2 K) psi_new = (1 + dt/2 K) psi + explicit_extra``."""
    ab, c = _cn_matrices(psi.size, dx, dt, params.hbar, params.m)
    rhs = (1 - 2 * c) * psi
    rhs[1:] += c * psi[:-1]
    rhs[:-1] += c * psi[1:]
    rhs += explicit_extra
    return solve_banded((1, 1), ab, rhs, check_finite=False)


@functools.lru_cache(maxsize=16)
def _kinetic_phase(n, dx, tau, hbar, m):
    k = 2 * np.pi * np.fft.fftfreq(n, d=dx)
    out = np.exp(-1j * hbar * k * k * tau / (2 * m))
    out.setflags(write=False)
    return out


def _spectral_kinetic(psi, dx, tau, params):
    return np.fft.ifft(np.fft.fft(psi) * _kinetic_phase(psi.size, dx, tau, params.hbar, params.m))


def _potential_split(potential, x, xc):
    """Residual of ``potential`` after removing its value and slope at ``xc``."""
    slope = float(potential_derivative(potential, xc))
    resid = potential(x) - potential(xc) - slope * (x - xc)
    return resid, slope


class StepResult(NamedTuple):
    state: GridState
    q_hat: float
    norm_drift: float


def position_mean(state: GridState):
    rho = np.abs(state.psi) ** 2
    return float(np.sum(state.grid.x * rho) / np.sum(rho))


def spde_step(state: GridState, dW, dt, potential, params: ModelParams,
              scheme="splitstep", renormalize=True, q_hat=None) -> StepResult:
    """Advance one step of length ``dt`` with innovation ``dW``.

    ``q_hat`` (the pre-step posterior mean) is recomputed from ``state``
    when not given.  Returns the new state, the ``q_hat`` used in the
    measurement terms and the pre-renormalisation norm drift.
    """
    scheme = canonical_scheme(scheme)
    grid = state.grid
    dx = grid.dx
    hbar, m, lam = params.hbar, params.m, params.lam
    q = position_mean(state) if q_hat is None else q_hat
    P = state.frame_p
    root = math.sqrt(lam / 2)

    if scheme == "em":
        x = grid.x
        u = x - q
        resid, slope = _potential_split(potential, x, grid.center)
        psi = state.psi
        extra = ((-1j / hbar) * resid - 0.25 * lam * u * u) * psi * dt + root * u * psi * dW
        new = _cn_kinetic(psi.copy(), dx, dt, params, extra)
        new_grid = grid.shifted(P * dt / m)
        new_p = P - slope * dt
    else:
        half = 0.5 * dt
        psi = _spectral_kinetic(state.psi, dx, half, params)
        mid_grid = grid.shifted(P * half / m)
        x = mid_grid.x
        # the packet has moved with the window; use its current centroid
        rho = np.abs(psi) ** 2
        u = x - float(np.sum(x * rho) / np.sum(rho))
        resid, slope = _potential_split(potential, x, mid_grid.center)
        psi = psi * np.exp((-1j / hbar) * resid * dt - 0.5 * lam * u * u * dt + root * u * dW)
        new_p = P - slope * dt
        new = _spectral_kinetic(psi, dx, half, params)
        new_grid = mid_grid.shifted(new_p * half / m)

    norm = float(np.sum(np.abs(new) ** 2) * dx)
    drift = norm - 1.0
    if not math.isfinite(norm):
        raise InstabilityError("non-finite wavefunction")
    if renormalize:
        out = normalized(new_grid, new, new_p)
    else:
        out = GridState(new_grid, new, new_p)
    return StepResult(out, q, drift)


def split_step_substeps(state, dW, dt, potential, params):
    return spde_step(state, dW, dt, potential, params, scheme="splitstep").state


def recenter(state: GridState, params: ModelParams) -> GridState:
    """Re-gauge the envelope's mean momentum into ``frame_p`` and shift the
    window by whole nodes so the packet sits at its centre."""
    grid = state.grid
    mom = grid_moments(state, params)
    psi = state.psi
    frame_p = state.frame_p
    p_env = mom.p_hat - frame_p
    quantum = params.hbar * 2 * np.pi / (grid.x_max - grid.x_min)
    changed = False
    if abs(p_env) > quantum:
        psi = psi * np.exp(-1j * p_env * (grid.x - grid.center) / params.hbar)
        frame_p += p_env
        changed = True
    s = int(round((mom.q_hat - grid.center) / grid.dx))
    if s:
        shifted = np.zeros_like(psi)
        if s > 0:
            shifted[:-s] = psi[s:]
        else:
            shifted[-s:] = psi[:s]
        psi = shifted
        grid = grid.shifted(s * grid.dx)
        changed = True
    if not changed:
        return state
    return normalized(grid, psi, frame_p)


class SpdeResult(NamedTuple):
    series: TrajectorySeries
    record: MeasurementRecord
    final_state: GridState


class SpdeRunError(QCollapseError):
    """A run failed part-way; ``partial`` holds the rows computed so far."""

    def __init__(self, step, cause, partial: SpdeResult):
        super().__init__(f"spde run failed at step {step}: {cause}")
        self.step = step
        self.cause = cause
        self.partial = partial


def run_spde(init: GridState, noise: NoiseStream, config: SpdeConfig, potential,
             params: ModelParams) -> SpdeResult:
    n = step_count(config.dt, config.t_final)
    if not math.isclose(noise.dt, config.dt, rel_tol=1e-12):
        raise ValidationError("dt", f"noise dt {noise.dt} != config dt {config.dt}")
    check_stability(config, init.grid, params)
    dt = config.dt
    dW = noise.increments(0, n)

    cols = {name: np.full(n + 1, np.nan) for name in
            ("q_hat", "p_hat", "tau_q2", "tau_p2", "dY", "norm_drift", "fit_residual")}
    t = dt * np.arange(n + 1)

    def result(upto, state):
        series = TrajectorySeries(t=t[:upto], **{k: v[:upto] for k, v in cols.items()})
        inc = cols["dY"][1:upto] if upto > 1 else np.array([np.nan])
        record = MeasurementRecord(dt, inc, noise.seed, noise.trajectory_index,
                                   {"engine": "spde", "scheme": config.scheme})
        return SpdeResult(series, record, state)

    def record_row(k, state, mom):
        cols["q_hat"][k] = mom.q_hat
        cols["p_hat"][k] = mom.p_hat
        cols["tau_q2"][k] = mom.tau_q2
        cols["tau_p2"][k] = mom.tau_p2
        if config.fit_every and (k % config.fit_every == 0 or k == n):
            cols["fit_residual"][k] = gaussian_log_fit(state, params).residual

    state = recenter(init, params) if config.track else init
    mom = grid_moments(state, params)
    record_row(0, state, mom)
    for k in range(1, n + 1):
        try:
            step = spde_step(state, dW[k - 1], dt, potential, params,
                             scheme=config.scheme, renormalize=config.renormalize,
                             q_hat=mom.q_hat)
            if abs(step.norm_drift) > config.max_norm_drift:
                raise InstabilityError(
                    f"norm drift {step.norm_drift:.3g} exceeds {config.max_norm_drift:g}", k)
            state = recenter(step.state, params) if config.track else step.state
            cols["dY"][k] = synthesize_record(step.q_hat, dW[k - 1], dt, params)
            cols["norm_drift"][k] = step.norm_drift
            mom = grid_moments(state, params)
            record_row(k, state, mom)
        except QCollapseError as exc:
            raise SpdeRunError(k, exc, result(k, state)) from exc
    return result(n + 1, state)
