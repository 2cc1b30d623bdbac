"""Complex width parameter omega(t) of the Gaussian posterior.

The width obeys the scalar Riccati equation

    d omega/dt = i*(hbar*kappa/m + omega**2) - hbar*lam/m

whose stationary point is ``i*alpha`` with ``alpha = sqrt(hbar/m) * sqrt(kappa + i*lam)``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InstabilityError,
    NonNormalizableError,
    NoStationaryLimitError,
    SingularityError,
    ValidationError,
)
from .model import ModelParams

DIVERGENCE_LIMIT = 1e12
SMALL_ALPHA_T = 1e-6
# largest h*|d rhs/d omega| allowed per RK4 substep in automatic mode
MAX_STIFFNESS_STEP = 0.005


def rk4_step(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def step_count(dt, t_final):
    if not dt > 0:
        raise ValidationError("dt", f"must be > 0, got {dt}")
    if t_final < dt * (1 - 1e-9):
        raise ValidationError("t_final", f"must be >= dt, got {t_final}")
    n = round(t_final / dt)
    if abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValidationError("t_final", f"{t_final} is not a multiple of dt={dt}")
    return int(n)


def alpha(params: ModelParams) -> complex:
    """Square root branch with ``Im(alpha) >= 0`` so that ``Re(i*alpha) <= 0``."""
    a = cmath.sqrt(params.hbar / params.m) * cmath.sqrt(complex(params.kappa, params.lam))
    if a.imag < 0:
        a = -a
    return a


def riccati_rhs(omega, params: ModelParams):
    r = params.hbar / params.m
    return 1j * (r * params.kappa + omega * omega) - r * params.lam


def omega_closed_form(t, omega0, params: ModelParams) -> complex:
    """Exact omega(t) starting from ``omega0``.

    Written as ``i*(omega0*C + i*alpha**2*S) / (i*C + omega0*S)`` with
    ``C = cosh(alpha t)``, ``S = sinh(alpha t)/alpha``; both are entire in
    ``alpha**2``, so the free case ``alpha = 0`` needs no special treatment
    beyond a series for small ``|alpha t|``.
    """
    if t < 0:
        raise ValidationError("t", f"must be >= 0, got {t}")
    omega0 = complex(omega0)
    if omega0.real >= 0:
        raise NonNormalizableError(f"Re(omega0) must be < 0, got {omega0}")
    a = alpha(params)
    z = a * t
    if abs(z) < SMALL_ALPHA_T:
        z2 = z * z
        c = 1 + z2 / 2
        s = t * (1 + z2 / 6)
    elif z.real > 20:
        # scale by exp(-z) to avoid overflow
        e = cmath.exp(-2 * z)
        c = (1 + e) / 2
        s = (1 - e) / (2 * a)
    else:
        c = cmath.cosh(z)
        s = cmath.sinh(z) / a
    den = 1j * c + omega0 * s
    num = omega0 * c + 1j * a * a * s
    if abs(den) < 1e-300 or abs(den) < 1e-14 * abs(num):
        raise SingularityError(f"closed-form omega has a pole at t={t}")
    return 1j * num / den


@dataclass(frozen=True)
class OmegaPath:
    t: np.ndarray
    omega: np.ndarray


def rk4_omega_step(omega, dt, params):
    return rk4_step(lambda w: riccati_rhs(w, params), omega, dt)


def auto_substeps(omega, dt, params: ModelParams):
    """RK4 substeps that keep ``h * 2*max(|omega|, |alpha|)`` below ``MAX_STIFFNESS_STEP``.

    A weakly observed oscillator focuses a broad packet to ``|omega|`` far
    above its initial value; a fixed step sized for the start loses accuracy
    there.
    """
    scale = 2 * max(abs(omega), abs(alpha(params)))
    return max(1, math.ceil(dt * scale / MAX_STIFFNESS_STEP))


def rk4_omega_advance(omega, dt, params: ModelParams, substeps=None):
    """Advance omega by ``dt`` with ``substeps`` RK4 steps (automatic when None)."""
    n = auto_substeps(omega, dt, params) if substeps is None else substeps
    h = dt / n
    for _ in range(n):
        omega = rk4_omega_step(omega, h, params)
    return omega


def integrate_omega(omega0, dt, t_final, params: ModelParams, substeps=None) -> OmegaPath:
    """Classical RK4 for the Riccati flow, sampled every ``dt`` including t=0.

    ``substeps=None`` subdivides stiff output steps (see :func:`auto_substeps`);
    an integer forces that many RK4 steps per output step, ``1`` giving plain
    fixed-step RK4.
    """
    n = step_count(dt, t_final)
    out = np.empty(n + 1, dtype=np.complex128)
    w = complex(omega0)
    out[0] = w
    for i in range(1, n + 1):
        w = rk4_omega_advance(w, dt, params, substeps)
        if not cmath.isfinite(w) or abs(w) > DIVERGENCE_LIMIT:
            raise InstabilityError(f"|omega| exceeded {DIVERGENCE_LIMIT:g}", step=i)
        out[i] = w
    return OmegaPath(dt * np.arange(n + 1), out)


def dispersions(omega, params: ModelParams):
    """Position and momentum variances ``(tau_q2, tau_p2)`` of the Gaussian with width ``omega``."""
    omega = complex(omega)
    if not omega.real < 0:
        raise NonNormalizableError(f"Re(omega) must be < 0, got {omega}")
    tau_q2 = -params.hbar / (2 * params.m * omega.real)
    tau_p2 = -params.hbar * params.m * abs(omega) ** 2 / (2 * omega.real)
    return tau_q2, tau_p2


def dispersions_array(omega, params: ModelParams):
    omega = np.asarray(omega)
    re = omega.real
    if np.any(~(re < 0)):
        raise NonNormalizableError("Re(omega) must be < 0 everywhere")
    return (-params.hbar / (2 * params.m * re),
            -params.hbar * params.m * np.abs(omega) ** 2 / (2 * re))


def asymptotic_dispersions(params: ModelParams):
    """Stationary ``(tau_q2, tau_p2)`` reached as t -> infinity."""
    if params.lam == 0 and params.kappa >= 0:
        kind = "free" if params.kappa == 0 else "unstable"
        raise NoStationaryLimitError(
            f"no stationary width for the unobserved {kind} particle (lambda=0, kappa={params.kappa})")
    hbar, m, kappa, lam = params.hbar, params.m, params.kappa, params.lam
    r = math.hypot(kappa, lam)
    # r - kappa loses precision for kappa >> lam > 0
    gap = r - kappa if kappa <= 0 else lam * lam / (r + kappa)
    tau_q2 = math.sqrt(hbar / (2 * m)) / math.sqrt(gap)
    tau_p2 = math.sqrt(hbar ** 3 * m / 2) * math.sqrt(r * r / gap)
    return tau_q2, tau_p2


def ground_state_variance(params: ModelParams):
    """Position variance of the unobserved oscillator ground state (kappa < 0 only)."""
    if params.kappa >= 0:
        raise ValidationError("kappa", "ground state exists only for kappa < 0")
    w_osc = math.sqrt(-params.hbar * params.kappa / params.m)
    return params.hbar / (2 * params.m * w_osc)
