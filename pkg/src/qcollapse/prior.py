"""Unconditional (record-averaged) first and second moments.

Taking expectations of the open-system Heisenberg dynamics for
``Z in {X, P, X^2, P^2, (XP+PX)/2}`` in the field vacuum gives the closed
linear system

    d<X>/dt   = <P>/m
    d<P>/dt   = hbar kappa <X> + m g
    dVarX/dt  = 2 Cov / m
    dCov/dt   = VarP / m + hbar kappa VarX
    dVarP/dt  = 2 hbar kappa Cov + lam hbar^2 / 2

The only trace of the measurement is the back-action heating term; the
double commutator ``[X,[X,Z]]`` vanishes for every other ``Z``.
"""

from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np

from .errors import InstabilityError
from .model import ModelParams
from .riccati import DIVERGENCE_LIMIT, rk4_step, step_count
from .series import TrajectorySeries


@dataclass(frozen=True)
class PriorMoments:
    mean_x: float
    mean_p: float
    var_x: float
    var_p: float
    cov_xp: float = 0.0

    @classmethod
    def from_packet(cls, q, p, sigma_q2, params: ModelParams):
        return cls(q, p, sigma_q2, params.hbar ** 2 / (4 * sigma_q2), 0.0)

    def as_array(self):
        return np.array(astuple(self))

    def uncertainty(self):
        return self.var_x * self.var_p - self.cov_xp ** 2


def _rhs(y, params):
    mx, mp, vx, vp, c = y
    m, k = params.m, params.k
    return np.array([
        mp / m,
        k * mx + m * params.g,
        2 * c / m,
        2 * k * c + params.lam * params.hbar ** 2 / 2,
        vp / m + k * vx,
    ])


def prior_rhs(moments: PriorMoments, params: ModelParams) -> PriorMoments:
    d = _rhs(np.array([moments.mean_x, moments.mean_p, moments.var_x,
                       moments.var_p, moments.cov_xp]), params)
    return PriorMoments(*d)


@dataclass(frozen=True)
class PriorSeries:
    t: np.ndarray
    mean_x: np.ndarray
    mean_p: np.ndarray
    var_x: np.ndarray
    var_p: np.ndarray
    cov_xp: np.ndarray

    def at(self, time):
        i = int(np.argmin(np.abs(self.t - time)))
        return PriorMoments(self.mean_x[i], self.mean_p[i], self.var_x[i],
                            self.var_p[i], self.cov_xp[i])


def run_prior(init: PriorMoments, dt, t_final, params: ModelParams) -> PriorSeries:
    """Classical RK4 integration of :func:`prior_rhs`, including t=0."""
    n = step_count(dt, t_final)
    out = np.empty((n + 1, 5))
    y = np.array([init.mean_x, init.mean_p, init.var_x, init.var_p, init.cov_xp], dtype=float)
    out[0] = y
    f = lambda v: _rhs(v, params)  # noqa: E731
    for i in range(1, n + 1):
        y = rk4_step(f, y, dt)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > DIVERGENCE_LIMIT:
            raise InstabilityError(f"prior moments exceeded {DIVERGENCE_LIMIT:g}", step=i)
        out[i] = y
    return PriorSeries(dt * np.arange(n + 1), *out.T)


def prior_series_as_trajectory(prior: PriorSeries):
    """View prior moments in the trajectory-table layout (tau columns = variances)."""
    n = prior.t.size
    return TrajectorySeries(t=prior.t, q_hat=prior.mean_x, p_hat=prior.mean_p,
                            tau_q2=prior.var_x, tau_p2=prior.var_p,
                            dY=np.full(n, np.nan))

