"""Exact posterior filter within the Gaussian class.

The width ``omega`` follows the deterministic Riccati flow (RK4 substep);
the means follow the linear filtering equations

    dq = p/m dt + K_q dY~,     K_q = -(hbar/m) sqrt(lam/2) / Re(omega)
    dp = (m g + hbar kappa q) dt + K_p dY~,   K_p = -hbar sqrt(lam/2) Im(omega)/Re(omega)

driven by the innovation ``dY~ = dY - sqrt(2 lam) q dt`` (Euler-Maruyama).
Note ``K_q = sqrt(2 lam) * tau_q2``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import InstabilityError, NonNormalizableError, ValidationError
from .model import ModelParams
from .noise import NoiseStream
from .riccati import dispersions_array, rk4_omega_advance, step_count
from .series import MeasurementRecord, TrajectorySeries


@dataclass(frozen=True)
class GaussianState:
    q_hat: float
    p_hat: float
    omega: complex
    t: float = 0.0

    def __post_init__(self):
        omega = complex(self.omega)
        if not (math.isfinite(self.q_hat) and math.isfinite(self.p_hat) and cmath.isfinite(omega)):
            raise ValidationError("state", "all components must be finite")
        if not omega.real < 0:
            raise NonNormalizableError(f"Re(omega) must be < 0, got {omega}")
        object.__setattr__(self, "omega", omega)

    @classmethod
    def from_packet(cls, q, p, sigma_q2, params: ModelParams):
        """State of the minimum-uncertainty packet with position variance ``sigma_q2``."""
        return cls(q, p, -params.hbar / (2 * params.m * sigma_q2), 0.0)


def w_from_qp(state: GaussianState, params: ModelParams):
    w_hat = -state.omega * state.q_hat + 1j * state.p_hat / params.m
    return w_hat, state.omega


def qp_from_w(w_hat, omega, params: ModelParams):
    omega = complex(omega)
    if not omega.real < 0:
        raise NonNormalizableError(f"Re(omega) must be < 0, got {omega}")
    q = -w_hat.real / omega.real
    p = params.m * (w_hat + omega * q).imag
    return q, p


def innovation(dY, q_hat, dt, params: ModelParams):
    return dY - math.sqrt(2 * params.lam) * q_hat * dt


def gains(omega, params: ModelParams):
    """Innovation gains ``(K_q, K_p)`` for width ``omega`` (works on arrays)."""
    s = math.sqrt(params.lam / 2)
    re = np.real(omega)
    return (-(params.hbar / params.m) * s / re,
            -params.hbar * s * np.imag(omega) / re)


def filter_step(state: GaussianState, dY, dt, params: ModelParams, step=None) -> GaussianState:
    if not dt > 0:
        raise ValidationError("dt", f"must be > 0, got {dt}")
    q, p, omega = state.q_hat, state.p_hat, state.omega
    dyt = innovation(dY, q, dt, params)
    kq, kp = gains(omega, params)
    q_new = q + p / params.m * dt + kq * dyt
    p_new = p + (params.m * params.g + params.k * q) * dt + kp * dyt
    omega_new = rk4_omega_advance(omega, dt, params)
    if not omega_new.real < 0 or not cmath.isfinite(omega_new):
        raise InstabilityError(f"Re(omega) left the normalisable region: {omega_new}", step)
    return GaussianState(q_new, p_new, omega_new, state.t + dt)


def filter_step_w(w_hat, omega, dY, dt, params: ModelParams):
    """The same step in the ``(w_hat, omega)`` chart, driven by the raw record."""
    drift = 1j * (params.g + omega * w_hat)
    w_new = w_hat + drift * dt + math.sqrt(params.lam / 2) * params.hbar / params.m * dY
    return w_new, rk4_omega_advance(omega, dt, params)


def _series(t, q, p, omega, dY, params):
    tq, tp = dispersions_array(omega, params)
    return TrajectorySeries(t=t, q_hat=q, p_hat=p, tau_q2=tq, tau_p2=tp, dY=dY)


def run_filter(init: GaussianState, record: MeasurementRecord, params: ModelParams) -> TrajectorySeries:
    """Replay a measurement record through the filter."""
    n = len(record)
    dt = record.dt
    q = np.empty(n + 1)
    p = np.empty(n + 1)
    om = np.empty(n + 1, dtype=np.complex128)
    state = init
    q[0], p[0], om[0] = state.q_hat, state.p_hat, state.omega
    for k, dY in enumerate(record.increments, start=1):
        state = filter_step(state, float(dY), dt, params, step=k)
        q[k], p[k], om[k] = state.q_hat, state.p_hat, state.omega
    dy = np.concatenate(([np.nan], record.increments))
    return _series(init.t + dt * np.arange(n + 1), q, p, om, dy, params)


def omega_path(omega0, dt, n, params):
    out = np.empty(n + 1, dtype=np.complex128)
    out[0] = omega0
    w = complex(omega0)
    for k in range(1, n + 1):
        w = rk4_omega_advance(w, dt, params)
        if not w.real < 0 or not cmath.isfinite(w):
            raise InstabilityError(f"Re(omega) left the normalisable region: {w}", k)
        out[k] = w
    return out


def propagate_means(q0, p0, omega, dW, dt, params):
    """Vectorised Euler-Maruyama for the means given innovations ``dW``.

    ``dW`` has shape ``(..., n)``; ``omega`` is the shared width path of
    length ``n + 1``.  Returns ``(q, p, dY)`` with a trailing time axis of
    length ``n + 1`` (``dY[..., 0]`` is NaN).
    """
    dW = np.asarray(dW, dtype=np.float64)
    n = dW.shape[-1]
    kq, kp = gains(omega[:-1], params)
    shape = dW.shape[:-1] + (n + 1,)
    q = np.empty(shape)
    p = np.empty(shape)
    dY = np.full(shape, np.nan)
    q[..., 0] = q0
    p[..., 0] = p0
    root2lam = math.sqrt(2 * params.lam)
    mg, k, m = params.m * params.g, params.k, params.m
    for i in range(n):
        qi, pi, w = q[..., i], p[..., i], dW[..., i]
        dY[..., i + 1] = root2lam * qi * dt + w
        q[..., i + 1] = qi + pi / m * dt + kq[i] * w
        p[..., i + 1] = pi + (mg + k * qi) * dt + kp[i] * w
    return q, p, dY


def simulate_filter(init: GaussianState, noise: NoiseStream, t_final, params: ModelParams):
    """Self-driven posterior trajectory; the innovations come from ``noise``.

    Returns ``(series, record)`` where the record is synthesised from the
    filter's own position estimate.
    """
    n = step_count(noise.dt, t_final)
    dW = noise.increments(0, n)
    om = omega_path(init.omega, noise.dt, n, params)
    q, p, dY = propagate_means(init.q_hat, init.p_hat, om, dW, noise.dt, params)
    series = _series(init.t + noise.dt * np.arange(n + 1), q, p, om, dY, params)
    record = MeasurementRecord(noise.dt, dY[1:], noise.seed, noise.trajectory_index,
                               {"engine": "filter"})
    return series, record

