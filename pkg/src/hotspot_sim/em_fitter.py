"""Maximum-likelihood estimation of the point-process parameters by EM.

Each event i carries a latent parent label u_i (0 = background, j if event j
triggered it).  The E step computes

    P(u_i = j) = g(t_i - t_j, x_i - x_j, y_i - y_j) / lam(x_i, y_i, t_i)
    P(u_i = 0) = mu(x_i, y_i) / lam(x_i, y_i, t_i)

for admissible parents t_j < t_i; the M step maximises the expected
complete-data log-likelihood in closed form (weighted-MLE updates for an
exponential delay, Gaussian displacement and scaled-Gaussian background).
Temporal/spatial edge effects are ignored by default (each event contributes
its full offspring mass to the compensator); temporal edge correction is
available behind a flag.

The fit records the observed-data log-likelihood (sum of log-intensities at
the events minus the compensator) before each update: that is the quantity
the EM theorem guarantees non-decreasing.  The expected complete-data
log-likelihood remains available as ``expected_loglik`` for analysis, but
its iterate-to-iterate path is not monotone in general because the posterior
entropy term moves with the parameters.
"""

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .model_core import (
    Events,
    SeppParams,
    SpatialDomain,
    background_intensity,
    domain_background_fraction,
)

TWO_PI = 2.0 * math.pi

_SIGMA_FLOOR = 1e-6
_OMEGA_CEIL = 1e6


@dataclass(frozen=True)
class BranchingProbabilities:
    """Sparse posterior parent probabilities, one CSR row per event.

    ``parents[indptr[i]:indptr[i+1]]`` are the admissible parent indices of
    event i and ``probs`` the matching P(u_i = j); ``p0[i]`` is the
    background probability.  Every row sums to one.
    """

    indptr: np.ndarray
    parents: np.ndarray
    probs: np.ndarray
    p0: np.ndarray

    @property
    def n_events(self) -> int:
        return len(self.p0)

    def row(self, i: int):
        sl = slice(self.indptr[i], self.indptr[i + 1])
        return self.parents[sl], self.probs[sl]

    def row_sums(self) -> np.ndarray:
        n = self.n_events
        i_idx = np.repeat(np.arange(n), np.diff(self.indptr))
        return self.p0 + np.bincount(i_idx, weights=self.probs, minlength=n)


@dataclass(frozen=True)
class FitReport:
    """Fit outcome.  ``loglik_trace[k]`` is the observed-data log-likelihood
    of the parameters after k updates (entry 0 is the initialisation), so
    the trace has ``iterations + 1`` entries and never decreases."""

    params: SeppParams
    iterations: int
    loglik_trace: np.ndarray
    converged: bool
    params_trace: tuple

    def to_frame(self):
        import pandas as pd

        rows = [
            {
                "iteration": k + 1,
                "loglik": float(self.loglik_trace[k + 1]),
                "mu_bar": p.mu_bar,
                "theta": p.theta,
                "omega": p.omega,
                "sigma_x": p.sigma_x,
                "sigma_y": p.sigma_y,
            }
            for k, p in enumerate(self.params_trace)
        ]
        return pd.DataFrame(rows)


def _windows(time_window, spatial_window):
    tw = np.inf if time_window is None else float(time_window)
    xr = yr = np.inf if spatial_window is None else float(spatial_window)
    return tw, xr, yr


def e_step(params: SeppParams, events: Events,
           time_window: float = None, spatial_window: float = None
           ) -> BranchingProbabilities:
    """Posterior branching probabilities under the current parameters.

    ``time_window``/``spatial_window`` optionally truncate admissible pairs
    to dt <= time_window days and per-axis displacement <= spatial_window
    km (None means exact).  Intended for analysis-scale data; ``fit``
    streams the same quantities without materialising rows.
    """
    n = len(events)
    x, y, t = events.x, events.y, events.t
    mu = background_intensity(params, x, y)
    if np.any(mu <= 0.0):
        raise FloatingPointError("background intensity degenerate at events")
    tw, xr, yr = _windows(time_window, spatial_window)
    theta, omega = params.theta, params.omega
    sx, sy = params.sigma_x, params.sigma_y
    indptr = np.zeros(n + 1, dtype=np.int64)
    parent_rows = []
    prob_rows = []
    p0 = np.empty(n)
    for i in range(n):
        jlo = int(np.searchsorted(t, t[i] - tw)) if np.isfinite(tw) else 0
        j = np.arange(jlo, i)
        dt = t[i] - t[j]
        ok = dt > 0.0
        dx = x[i] - x[j]
        dy = y[i] - y[j]
        if np.isfinite(xr):
            ok &= (np.abs(dx) <= xr) & (np.abs(dy) <= yr)
        j, dt, dx, dy = j[ok], dt[ok], dx[ok], dy[ok]
        g = theta * omega * np.exp(
            -omega * dt - dx ** 2 / (2 * sx ** 2) - dy ** 2 / (2 * sy ** 2)
        )
        lam = mu[i] + g.sum()
        p0[i] = mu[i] / lam
        parent_rows.append(j)
        prob_rows.append(g / lam)
        indptr[i + 1] = indptr[i] + len(j)
    parents = (np.concatenate(parent_rows) if parent_rows
               else np.empty(0, dtype=np.int64))
    probs = np.concatenate(prob_rows) if prob_rows else np.empty(0)
    return BranchingProbabilities(indptr, parents, probs, p0)


def _stats_from_branching(branching: BranchingProbabilities, events: Events,
                          logphi: np.ndarray):
    i_idx = np.repeat(np.arange(branching.n_events),
                      np.diff(branching.indptr))
    j_idx = branching.parents
    p = branching.probs
    dt = events.t[i_idx] - events.t[j_idx]
    dx = events.x[i_idx] - events.x[j_idx]
    dy = events.y[i_idx] - events.y[j_idx]
    return (
        float(branching.p0.sum()),
        float(np.sum(branching.p0 * logphi)),
        float(p.sum()),
        float(np.sum(p * dt)),
        float(np.sum(p * dx * dx)),
        float(np.sum(p * dy * dy)),
    )


def _log_background_shape(params: SeppParams, events: Events) -> np.ndarray:
    s2 = params.background_sd ** 2
    return (-math.log(TWO_PI * s2)
            - events.x ** 2 / (2 * s2) - events.y ** 2 / (2 * s2))


def _edge_weights(t: np.ndarray, t_end: float, omega: float):
    tail = np.exp(-omega * (t_end - t))
    return float(np.sum(1.0 - tail)), float(np.sum((t_end - t) * tail))


def _mstep_from_stats(stats, prev: SeppParams, n: int, span: float,
                      bg_fraction: float, t: np.ndarray = None,
                      t_end: float = None,
                      edge_correction: bool = False) -> SeppParams:
    sum_p0, _, P, s_dt, s_dx2, s_dy2 = stats[:6]
    mu_bar = sum_p0 / (span * bg_fraction)
    if P <= 0.0:
        return SeppParams(mu_bar, prev.theta, prev.omega, prev.sigma_x,
                          prev.sigma_y, prev.background_sd)
    sx = max(math.sqrt(s_dx2 / P), _SIGMA_FLOOR)
    sy = max(math.sqrt(s_dy2 / P), _SIGMA_FLOOR)
    if not edge_correction:
        omega = min(P / s_dt, _OMEGA_CEIL)
        theta = P / (TWO_PI * sx * sy * n)
    else:
        def score(w):
            W, tail = _edge_weights(t, t_end, w)
            return P / w - s_dt - (P / W) * tail

        if score(_OMEGA_CEIL) >= 0.0:
            omega = _OMEGA_CEIL
        else:
            omega = brentq(score, 1e-8, _OMEGA_CEIL)
        W, _ = _edge_weights(t, t_end, omega)
        theta = P / (TWO_PI * sx * sy * W)
    return SeppParams(mu_bar, theta, omega, sx, sy, prev.background_sd)


def m_step(branching: BranchingProbabilities, events: Events,
           domain: SpatialDomain, T: Union[float, tuple],
           prev: SeppParams, edge_correction: bool = False) -> SeppParams:
    """Closed-form weighted-MLE parameter update for given branching."""
    t_start, t_end = _window_bounds(T)
    logphi = _log_background_shape(prev, events)
    stats = _stats_from_branching(branching, events, logphi)
    bg_fraction = domain_background_fraction(prev, domain)
    return _mstep_from_stats(stats, prev, len(events), t_end - t_start,
                             bg_fraction, events.t, t_end, edge_correction)


def _expected_loglik_from_stats(stats, params: SeppParams, n: int,
                                span: float, bg_fraction: float,
                                t: np.ndarray = None, t_end: float = None,
                                edge_correction: bool = False) -> float:
    sum_p0, sum_p0_logphi, P, s_dt, s_dx2, s_dy2 = stats[:6]
    out = sum_p0 * math.log(params.mu_bar) + sum_p0_logphi
    if P > 0.0:
        out += (P * math.log(params.theta * params.omega)
                - params.omega * s_dt
                - s_dx2 / (2 * params.sigma_x ** 2)
                - s_dy2 / (2 * params.sigma_y ** 2))
    out -= params.mu_bar * span * bg_fraction
    m = TWO_PI * params.theta * params.sigma_x * params.sigma_y
    if edge_correction:
        W, _ = _edge_weights(t, t_end, params.omega)
        out -= m * W
    else:
        out -= m * n
    return out


def _compensator(params: SeppParams, n: int, span: float,
                 bg_fraction: float, t: np.ndarray, t_end: float,
                 edge_correction: bool) -> float:
    out = params.mu_bar * span * bg_fraction
    m = TWO_PI * params.theta * params.sigma_x * params.sigma_y
    if edge_correction:
        W, _ = _edge_weights(t, t_end, params.omega)
        out += m * W
    else:
        out += m * n
    return out


def observed_loglik_from_stats(sum_loglam: float, params: SeppParams,
                               n: int, span: float, bg_fraction: float,
                               t: np.ndarray = None, t_end: float = None,
                               edge_correction: bool = False) -> float:
    return sum_loglam - _compensator(params, n, span, bg_fraction, t, t_end,
                                     edge_correction)


def _window_bounds(T: Union[float, tuple]):
    if isinstance(T, (tuple, list)):
        t_start, t_end = float(T[0]), float(T[1])
    else:
        t_start, t_end = 0.0, float(T)
    if t_end <= t_start:
        raise ValueError("observation window must have positive length")
    return t_start, t_end


def expected_loglik(params: SeppParams, branching: BranchingProbabilities,
                    events: Events, domain: SpatialDomain,
                    T: Union[float, tuple],
                    edge_correction: bool = False) -> float:
    """Expected complete-data log-likelihood under explicit branching."""
    t_start, t_end = _window_bounds(T)
    logphi = _log_background_shape(params, events)
    if len(events):
        stats = _stats_from_branching(branching, events, logphi)
    else:
        stats = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    bg_fraction = domain_background_fraction(params, domain)
    return _expected_loglik_from_stats(
        stats, params, len(events), t_end - t_start, bg_fraction,
        events.t, t_end, edge_correction,
    )


def default_init(events: Events, domain: SpatialDomain, span: float,
                 background_sd: float = None) -> SeppParams:
    """Order-of-magnitude-neutral starting point for the EM iteration."""
    kwargs = {} if background_sd is None else {"background_sd": background_sd}
    probe = SeppParams(1.0, 1e-9, 0.1, 0.2, 0.2, **kwargs)
    bg_fraction = domain_background_fraction(probe, domain)
    mu0 = 0.5 * len(events) / (span * bg_fraction)
    sigma0 = 0.2
    theta0 = 0.3 / (TWO_PI * sigma0 * sigma0)
    return SeppParams(mu0, theta0, 0.1, sigma0, sigma0, **kwargs)


def fit(events: Events, domain: SpatialDomain, T: Union[float, tuple],
        init: Optional[SeppParams] = None, tol: float = 1e-4,
        max_iter: int = 200, time_window: float = None,
        spatial_window: float = None,
        edge_correction: bool = False) -> FitReport:
    """Alternate E and M steps until parameters move less than ``tol``.

    ``T`` is either the window length (start assumed 0) or an explicit
    ``(t_start, t_end)`` pair.  The optional windows truncate admissible
    parent-child pairs to a fixed box (dt <= time_window days, per-axis
    displacement <= spatial_window km), which bounds the cost per iteration
    and keeps the maximised objective fixed, so the likelihood trace stays
    non-decreasing; None means exact (all ordered pairs).
    """
    if len(events) == 0:
        raise ValueError("cannot fit on an empty event set")
    t_start, t_end = _window_bounds(T)
    span = t_end - t_start
    params = init if init is not None else default_init(events, domain, span)
    bg_fraction = domain_background_fraction(params, domain)
    logphi = _log_background_shape(params, events)
    phi = np.exp(logphi)
    tw, xr, yr = _windows(time_window, spatial_window)
    index = None
    if spatial_window is not None:
        index = kernels.build_spatial_index(events.x, events.y, events.t,
                                            h=float(spatial_window))
    def pass_stats(p):
        return kernels.estep_stats(
            events.x, events.y, events.t, p.mu_bar * phi, logphi,
            p.theta, p.omega, p.sigma_x, p.sigma_y, tw, xr, yr, index=index,
        )

    def loglik(stats, p):
        return observed_loglik_from_stats(
            stats[6], p, len(events), span, bg_fraction, events.t, t_end,
            edge_correction,
        )

    trace = []
    params_trace = []
    converged = False
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        stats = pass_stats(params)
        trace.append(loglik(stats, params))
        new = _mstep_from_stats(stats, params, len(events), span,
                                bg_fraction, events.t, t_end,
                                edge_correction)
        params_trace.append(new)
        rel = np.max(np.abs(new.as_array() - params.as_array())
                     / np.abs(params.as_array()))
        params = new
        if rel < tol:
            converged = True
            break
    trace.append(loglik(pass_stats(params), params))
    return FitReport(params, iterations, np.asarray(trace), converged,
                     tuple(params_trace))
