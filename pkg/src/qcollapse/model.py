"""Physical parameters, grids, Gaussian packets and moment extraction.

Wavefunctions live on a uniform grid window.  To follow a packet that drifts
far from the origin (or picks up a large momentum) a grid state may carry a
*frame momentum* ``P``: the physical wavefunction is
``psi(x) = exp(i P x / hbar) * chi(x)`` up to a global phase, with only the
slowly varying envelope ``chi`` stored.  All moment functions report
lab-frame quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BoundaryError,
    DegenerateSupportError,
    NormalizationError,
    ValidationError,
)

NORM_TOL = 1e-12
BOUNDARY_RATIO = 1e-6
FIT_THRESHOLD = 1e-6
MIN_FIT_NODES = 8


@dataclass(frozen=True)
class ModelParams:
    """One physical scenario: force ``F(x) = hbar*kappa*x + m*g``.

    ``lam`` is the measurement accuracy; ``lam == 0`` is the unobserved limit.
    """

    m: float = 1.0
    hbar: float = 1.0
    kappa: float = 0.0
    g: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        for name in ("m", "hbar", "kappa", "g", "lam"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValidationError(name, f"must be finite, got {value!r}")
        if self.m <= 0:
            raise ValidationError("m", f"must be > 0, got {self.m}")
        if self.hbar <= 0:
            raise ValidationError("hbar", f"must be > 0, got {self.hbar}")
        if self.lam < 0:
            raise ValidationError("lambda", f"must be >= 0, got {self.lam}")
        # normalise -0.0 so complex square roots land on the intended branch
        object.__setattr__(self, "lam", float(self.lam) + 0.0)

    @property
    def k(self):
        """Spring constant ``hbar * kappa``."""
        return self.hbar * self.kappa


def make_params(m=1.0, hbar=1.0, kappa=0.0, g=0.0, lam=0.0):
    return ModelParams(m=float(m), hbar=float(hbar), kappa=float(kappa),
                       g=float(g), lam=float(lam))


@dataclass(frozen=True)
class QuadraticPotential:
    """``phi(x) = -hbar*kappa*x**2/2 - m*g*x`` so that ``-phi' = F``."""

    hbar: float
    kappa: float
    m: float
    g: float

    def __call__(self, x):
        return -0.5 * self.hbar * self.kappa * x * x - self.m * self.g * x

    def derivative(self, x):
        return -(self.hbar * self.kappa * x + self.m * self.g)


def quadratic_potential(params: ModelParams) -> QuadraticPotential:
    return QuadraticPotential(params.hbar, params.kappa, params.m, params.g)


def potential_derivative(potential, x, h=1e-5):
    """Analytic derivative when the potential provides one, else a central difference."""
    deriv = getattr(potential, "derivative", None)
    if deriv is not None:
        return deriv(x)
    return (potential(x + h) - potential(x - h)) / (2 * h)


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise ValidationError("grid", "bounds must be finite")
        if self.x_max <= self.x_min:
            raise ValidationError("grid", "x_max must exceed x_min")
        if self.n < 16 or self.n % 2:
            raise ValidationError("grid", f"n must be even and >= 16, got {self.n}")

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.n

    @property
    def center(self):
        return 0.5 * (self.x_min + self.x_max)

    @property
    def x(self):
        return self.x_min + self.dx * np.arange(self.n)

    def shifted(self, offset):
        """Same node count and spacing, window moved by ``offset``."""
        return GridSpec(self.x_min + offset, self.x_max + offset, self.n)


def auto_grid(q, sigma_max, n=512, span=10.0):
    """Window ``[q - span*sigma_max, q + span*sigma_max]``."""
    return GridSpec(q - span * sigma_max, q + span * sigma_max, n)


@dataclass(frozen=True, eq=False)
class GridState:
    """Unit-norm complex samples of ``chi`` on ``grid`` with frame momentum ``frame_p``."""

    grid: GridSpec
    psi: np.ndarray
    frame_p: float = 0.0
    boundary_ok: bool = field(default=True, compare=False)

    def __post_init__(self):
        psi = np.array(self.psi, dtype=np.complex128)
        if psi.shape != (self.grid.n,):
            raise ValidationError("psi", f"expected shape ({self.grid.n},), got {psi.shape}")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @property
    def norm(self):
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.dx)


def boundary_ratio(psi):
    peak = np.max(np.abs(psi))
    if peak == 0:
        return math.inf
    return max(abs(psi[0]), abs(psi[-1])) / peak


def normalized(grid, psi, frame_p=0.0, check_boundary=True):
    """Build a GridState from raw samples, rescaling to unit norm."""
    psi = np.asarray(psi, dtype=np.complex128)
    norm = np.sum(np.abs(psi) ** 2) * grid.dx
    if not np.isfinite(norm) or norm <= 0:
        raise NormalizationError(f"cannot normalise state with norm {norm}")
    psi = psi / math.sqrt(norm)
    ok = boundary_ratio(psi) <= BOUNDARY_RATIO
    if check_boundary and not ok:
        raise BoundaryError(
            f"|psi| at the grid edge is {boundary_ratio(psi):.3g} of its peak "
            f"(limit {BOUNDARY_RATIO:g}); widen the grid")
    return GridState(grid, psi, frame_p, ok)


def gaussian_wavefunction(q, p, sigma_q2, grid: GridSpec, params: ModelParams) -> GridState:
    """Sample the minimum-uncertainty packet centred at ``(q, p)`` with variance ``sigma_q2``."""
    if not sigma_q2 > 0:
        raise ValidationError("sigma_q2", f"must be > 0, got {sigma_q2}")
    x = grid.x
    amp = (2 * math.pi * sigma_q2) ** -0.25
    psi = amp * np.exp(-((x - q) ** 2) / (4 * sigma_q2) + 1j * p * x / params.hbar)
    return normalized(grid, psi)


def gaussian_state_from_omega(q, p, omega, grid: GridSpec, params: ModelParams) -> GridState:
    """Sample ``exp{(m*omega*(x-q)**2/2 + i*p*x)/hbar}`` for complex ``omega`` with Re < 0."""
    x = grid.x
    expo = (params.m * omega * (x - q) ** 2 / 2 + 1j * p * x) / params.hbar
    return normalized(grid, np.exp(expo))


@dataclass(frozen=True)
class Moments:
    q_hat: float
    p_hat: float
    tau_q2: float
    tau_p2: float

    def uncertainty_product(self):
        return self.tau_q2 * self.tau_p2


def _check_norm(state):
    drift = abs(state.norm - 1.0)
    if drift > 1e-10:
        raise NormalizationError(f"state norm deviates from 1 by {drift:.3g}")


def grid_moments(state: GridState, params: ModelParams, derivative="spectral") -> Moments:
    """Posterior means and variances of position and momentum.

    Parameters
    ----------
    derivative : {"spectral", "central"}
        How momentum overlaps are evaluated.  ``"central"`` uses a
        second-order central difference for ``p_hat`` and the compact
        three-point Laplacian for ``<p**2>``, both with zero ghost values;
        ``"spectral"`` uses the discrete Fourier transform and is exact for
        well-resolved states.
    """
    _check_norm(state)
    grid = state.grid
    dx = grid.dx
    psi = state.psi
    x = grid.x
    rho = np.abs(psi) ** 2 * dx
    q = float(np.sum(x * rho))
    var_x = float(np.sum((x - q) ** 2 * rho))
    hbar = params.hbar

    if derivative == "spectral":
        k = 2 * np.pi * np.fft.fftfreq(grid.n, d=dx)
        w = np.abs(np.fft.fft(psi)) ** 2
        w /= w.sum()
        k_mean = float(np.sum(k * w))
        p_env = hbar * k_mean
        var_p = hbar ** 2 * float(np.sum((k - k_mean) ** 2 * w))
    elif derivative == "central":
        padded = np.concatenate(([0j], psi, [0j]))
        d1 = (padded[2:] - padded[:-2]) / (2 * dx)
        d2 = (padded[2:] - 2 * padded[1:-1] + padded[:-2]) / dx ** 2
        p_env = float(np.real(-1j * hbar * np.sum(np.conj(psi) * d1) * dx))
        p2 = float(np.real(-hbar ** 2 * np.sum(np.conj(psi) * d2) * dx))
        var_p = p2 - p_env ** 2
    else:
        raise ValidationError("derivative", f"unknown method {derivative!r}")
    return Moments(q, p_env + state.frame_p, var_x, var_p)


@dataclass(frozen=True)
class GaussianFit:
    omega: complex
    q_fit: float
    p_fit: float
    residual: float


def gaussian_log_fit(state: GridState, params: ModelParams) -> GaussianFit:
    """Least-squares fit of ``hbar*ln(psi)`` to a complex quadratic.

    Only nodes with ``|psi| > 1e-6 * max|psi|`` enter the fit.  ``residual`` is
    the RMS fit error relative to the RMS of ``hbar*ln|psi|`` on those nodes;
    the constant term (global phase and normalisation) is discarded.
    """
    psi = state.psi
    amp = np.abs(psi)
    mask = amp > FIT_THRESHOLD * amp.max()
    idx = np.nonzero(mask)[0]
    if idx.size < MIN_FIT_NODES:
        raise DegenerateSupportError(
            f"only {idx.size} nodes above the fit threshold (need {MIN_FIT_NODES})")
    x = state.grid.x[idx]
    hbar = params.hbar
    log_amp = np.log(amp[idx])
    phase = np.unwrap(np.angle(psi[idx]))
    target = hbar * (log_amp + 1j * phase)

    xc = float(np.mean(x))
    y = x - xc
    basis = np.stack([np.ones_like(y), y, y * y], axis=1).astype(np.complex128)
    coef, *_ = np.linalg.lstsq(basis, target, rcond=None)
    fit_err = target - basis @ coef
    scale = math.sqrt(float(np.mean((hbar * log_amp) ** 2)))
    residual = math.sqrt(float(np.mean(np.abs(fit_err) ** 2))) / scale if scale > 0 else math.inf

    a2 = coef[2]
    b_lab = coef[1] - 2 * a2 * xc
    omega = complex(2 * a2 / params.m)
    if omega.real != 0:
        q_fit = -b_lab.real / (params.m * omega.real)
    else:
        q_fit = math.nan
    p_fit = b_lab.imag + params.m * omega.imag * q_fit + state.frame_p
    return GaussianFit(omega, float(q_fit), float(p_fit), float(residual))

