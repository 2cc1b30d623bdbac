"""Many-trajectory runs aggregated against the prior moments.

Trajectory ``i`` always draws from ``NoiseStream(seed, i, dt)``, so results
do not depend on how trajectories are split across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import QCollapseError, ValidationError
from .gaussian_filter import GaussianState, omega_path, propagate_means
from .model import GridState, ModelParams
from .noise import NoiseStream
from .prior import PriorMoments, run_prior
from .riccati import dispersions_array, step_count
from .spde import SpdeConfig, SpdeRunError, run_spde

MIN_SUCCESS_FRACTION = 0.9


@dataclass
class EnsembleData:
    """Sampled trajectories: ``q``/``p``/``tau_q2`` have shape ``(M, len(t))``."""

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    tau_q2: np.ndarray
    tau_p2: np.ndarray
    indices: np.ndarray
    failed: list = field(default_factory=list)


def _sample_index(n, every):
    idx = np.arange(0, n + 1, every)
    if idx[-1] != n:
        idx = np.append(idx, n)
    return idx


def _filter_chunk(args):
    init, seed, indices, dt, n, params, keep = args
    om = omega_path(init.omega, dt, n, params)
    dW = np.stack([NoiseStream(seed, int(i), dt).increments(0, n) for i in indices])
    q, p, _ = propagate_means(init.q_hat, init.p_hat, om, dW, dt, params)
    tq, tp = dispersions_array(om[keep], params)
    return q[:, keep], p[:, keep], tq, tp


def filter_ensemble(init: GaussianState, seed, trajectories, dt, t_final, params: ModelParams,
                    sample_every=1, workers=1, chunk=128) -> EnsembleData:
    if trajectories < 2:
        raise ValidationError("trajectories", "need at least 2")
    n = step_count(dt, t_final)
    keep = _sample_index(n, sample_every)
    indices = np.arange(trajectories)
    jobs = [(init, seed, indices[i:i + chunk], dt, n, params, keep)
            for i in range(0, trajectories, chunk)]
    results = _map(_filter_chunk, jobs, workers)
    q = np.concatenate([r[0] for r in results])
    p = np.concatenate([r[1] for r in results])
    tq = np.broadcast_to(results[0][2], q.shape).copy()
    tp = np.broadcast_to(results[0][3], q.shape).copy()
    return EnsembleData(init.t + dt * keep, q, p, tq, tp, indices)


def _spde_one(args):
    init, seed, index, config, potential, params, keep = args
    try:
        res = run_spde(init, NoiseStream(seed, index, config.dt), config, potential, params)
    except SpdeRunError as exc:
        return index, str(exc), None
    s = res.series
    return index, None, (s.q_hat[keep], s.p_hat[keep], s.tau_q2[keep], s.tau_p2[keep])


def spde_ensemble(init: GridState, seed, trajectories, config: SpdeConfig, potential,
                  params: ModelParams, sample_every=1, workers=1) -> EnsembleData:
    if trajectories < 2:
        raise ValidationError("trajectories", "need at least 2")
    n = step_count(config.dt, config.t_final)
    keep = _sample_index(n, sample_every)
    jobs = [(init, seed, i, config, potential, params, keep) for i in range(trajectories)]
    results = _map(_spde_one, jobs, workers)
    ok = [r for r in results if r[2] is not None]
    failed = [(r[0], r[1]) for r in results if r[2] is None]
    if len(ok) < MIN_SUCCESS_FRACTION * trajectories:
        raise QCollapseError(
            f"{len(failed)} of {trajectories} trajectories failed: indices {[f[0] for f in failed]}")
    stack = lambda j: np.stack([r[2][j] for r in ok])  # noqa: E731
    return EnsembleData(config.dt * keep, stack(0), stack(1), stack(2), stack(3),
                        np.array([r[0] for r in ok]), failed)


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


@dataclass(frozen=True)
class EnsembleSummary:
    """Per-time aggregates; z-scores compare posterior ensembles with prior moments."""

    t: np.ndarray
    mean_q: np.ndarray
    var_q: np.ndarray
    mean_tau_q2: np.ndarray
    prior_mean_x: np.ndarray
    prior_var_x: np.ndarray
    z_mean: np.ndarray
    z_var: np.ndarray
    trajectories: int

    COLUMNS = ("t", "mean_q", "var_q", "mean_tau_q2", "prior_mean_x",
               "prior_var_x", "z_mean", "z_var")

    def rows(self):
        cols = [getattr(self, c) for c in self.COLUMNS]
        return list(zip(*cols))


def summarize(data: EnsembleData, prior_init: PriorMoments, dt, params: ModelParams) -> EnsembleSummary:
    """Compare ensemble statistics with the prior at every sampled time.

    ``z_mean`` tests ``E[q_hat] = mean_x``; ``z_var`` tests the total-variance
    identity ``E[tau_q2] + Var[q_hat] = var_x``.  Standard errors come from the
    sample moments.
    """
    M = data.q.shape[0]
    t_final = float(data.t[-1] - data.t[0])
    prior = run_prior(prior_init, dt, t_final, params) if t_final > 0 else None
    if prior is not None:
        pidx = np.rint((data.t - data.t[0]) / dt).astype(int)
        pm, pv = prior.mean_x[pidx], prior.var_x[pidx]
    else:
        pm = np.full(data.t.size, prior_init.mean_x)
        pv = np.full(data.t.size, prior_init.var_x)

    mean_q = data.q.mean(axis=0)
    dev = data.q - mean_q
    var_q = (dev ** 2).sum(axis=0) / (M - 1)
    m4 = (dev ** 4).mean(axis=0)
    mean_tau = data.tau_q2.mean(axis=0)

    se_mean = np.sqrt(var_q / M)
    se_var = np.sqrt(np.maximum(m4 - var_q ** 2, 0.0) / M)
    se_tau = data.tau_q2.std(axis=0, ddof=1) / math.sqrt(M)
    se_total = np.sqrt(se_var ** 2 + se_tau ** 2)

    with np.errstate(divide="ignore", invalid="ignore"):
        z_mean = np.where(se_mean > 0, (mean_q - pm) / se_mean, 0.0)
        z_var = np.where(se_total > 0, (mean_tau + var_q - pv) / se_total, 0.0)
    return EnsembleSummary(data.t, mean_q, var_q, mean_tau, pm, pv, z_mean, z_var, M)
