"""Hot numeric kernels, in numba and pure-numpy flavours.

Two operations dominate runtime and live here:

* ``estep_stats``    -- one latent-branching E-step pass over event pairs,
  fused with the weighted-moment accumulation the M-step needs.
* ``grid_trig_mass`` -- per-cell spatial integrals of the triggering sum
  for a whole grid at one evaluation time.

Pair truncation is controlled by three reach parameters (``time_window``,
``x_reach``, ``y_reach``); ``inf`` means exact/no truncation.  A pair (i, j)
with ``t_j < t_i`` enters iff ``t_i - t_j <= time_window`` and
``|x_i - x_j| <= x_reach`` and ``|y_i - y_j| <= y_reach``.  Both backends
apply exactly this test, so they differ only by float summation order.

The numba path can additionally use a coarse spatial hash of the events
(`build_spatial_index`) to skip far-away candidates without scanning them.
"""

import numpy as np
from scipy.special import erf as _erf_np

from .backend import use_numba

_SQRT2 = np.sqrt(2.0)


# ---------------------------------------------------------------------------
# Spatial hash index (numpy-built, numba-consumed)
# ---------------------------------------------------------------------------

class SpatialIndex:
    """Events bucketed into square cells of side ``h``, time-sorted per cell."""

    def __init__(self, x, y, t, h):
        self.h = float(h)
        self.x0 = float(np.min(x)) if len(x) else 0.0
        self.y0 = float(np.min(y)) if len(y) else 0.0
        cx = np.floor((x - self.x0) / self.h).astype(np.int64)
        cy = np.floor((y - self.y0) / self.h).astype(np.int64)
        self.ncx = int(cx.max()) + 1 if len(x) else 1
        self.ncy = int(cy.max()) + 1 if len(y) else 1
        cid = cy * self.ncx + cx
        # t is globally sorted, lexsort is stable -> per-cell times ascending
        order = np.lexsort((t, cid))
        self.order = order
        self.cell_start = np.searchsorted(
            cid[order], np.arange(self.ncx * self.ncy + 1)
        ).astype(np.int64)
        self.xs = np.ascontiguousarray(x[order])
        self.ys = np.ascontiguousarray(y[order])
        self.ts = np.ascontiguousarray(t[order])


def build_spatial_index(x, y, t, h=1.0):
    return SpatialIndex(x, y, t, h)


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _estep_stats_numpy(x, y, t, mu, logphi, theta, omega, sx, sy,
                       time_window, x_reach, y_reach, block=512):
    n = len(t)
    sum_p0 = 0.0
    sum_p0_logphi = 0.0
    sum_pij = 0.0
    sum_dt = 0.0
    sum_dx2 = 0.0
    sum_dy2 = 0.0
    sum_loglam = 0.0
    tw = time_window
    for a in range(0, n, block):
        b = min(a + block, n)
        jlo = 0 if not np.isfinite(tw) else int(np.searchsorted(t, t[a] - tw))
        dt = t[a:b, None] - t[None, jlo:b]
        dx = x[a:b, None] - x[None, jlo:b]
        dy = y[a:b, None] - y[None, jlo:b]
        ok = dt > 0.0
        if np.isfinite(tw):
            ok &= dt <= tw
        if np.isfinite(x_reach):
            ok &= np.abs(dx) <= x_reach
        if np.isfinite(y_reach):
            ok &= np.abs(dy) <= y_reach
        arg = np.where(
            ok,
            -omega * dt
            - dx * dx / (2.0 * sx * sx)
            - dy * dy / (2.0 * sy * sy),
            -np.inf,
        )
        g = theta * omega * np.exp(arg)
        row_g = g.sum(axis=1)
        lam = mu[a:b] + row_g
        inv = 1.0 / lam
        sum_p0 += float(np.sum(mu[a:b] * inv))
        sum_p0_logphi += float(np.sum(mu[a:b] * inv * logphi[a:b]))
        sum_pij += float(np.sum(row_g * inv))
        sum_dt += float(np.sum((g * dt).sum(axis=1) * inv))
        sum_dx2 += float(np.sum((g * dx * dx).sum(axis=1) * inv))
        sum_dy2 += float(np.sum((g * dy * dy).sum(axis=1) * inv))
        sum_loglam += float(np.sum(np.log(lam)))
    return (sum_p0, sum_p0_logphi, sum_pij, sum_dt, sum_dx2, sum_dy2,
            sum_loglam)


def _gauss_cell_masses_np(centers, edges, sd):
    """Per-center unit-Gaussian mass in each 1-D cell: (n_centers, n_cells)."""
    z = (edges[None, :] - centers[:, None]) / (sd * _SQRT2)
    cdf = 0.5 * (1.0 + _erf_np(z))
    return np.diff(cdf, axis=1)


def _grid_trig_mass_numpy(hx, hy, ht, t_eval, theta, omega, sx, sy,
                          x_edges, y_edges, time_window, x_reach, y_reach):
    nx = len(x_edges) - 1
    ny = len(y_edges) - 1
    out = np.zeros((ny, nx))
    keep = ht < t_eval
    if np.isfinite(time_window):
        keep &= (t_eval - ht) <= time_window
    hx, hy, ht = hx[keep], hy[keep], ht[keep]
    if len(ht) == 0:
        return out
    w = 2.0 * np.pi * theta * sx * sy * omega * np.exp(-omega * (t_eval - ht))
    if not (np.isfinite(x_reach) and np.isfinite(y_reach)):
        mx = _gauss_cell_masses_np(hx, x_edges, sx)
        my = _gauss_cell_masses_np(hy, y_edges, sy)
        out += (my * w[:, None]).T @ mx
        return out
    # windowed scatter: each event touches only cells overlapping its reach,
    # same range definition as the numba kernel (clamped to the grid)
    ix_lo = np.clip(np.searchsorted(x_edges[1:], hx - x_reach), 0, nx - 1)
    ix_hi = np.clip(np.searchsorted(x_edges[:-1], hx + x_reach, side="right") - 1,
                    0, nx - 1)
    iy_lo = np.clip(np.searchsorted(y_edges[1:], hy - y_reach), 0, ny - 1)
    iy_hi = np.clip(np.searchsorted(y_edges[:-1], hy + y_reach, side="right") - 1,
                    0, ny - 1)
    wx = int(np.max(ix_hi - ix_lo)) + 1
    wy = int(np.max(iy_hi - iy_lo)) + 1
    cols = ix_lo[:, None] + np.arange(wx)[None, :]
    rows = iy_lo[:, None] + np.arange(wy)[None, :]
    col_ok = cols <= ix_hi[:, None]
    row_ok = rows <= iy_hi[:, None]
    cols_c = np.minimum(cols, nx - 1)
    rows_c = np.minimum(rows, ny - 1)
    zx_lo = (x_edges[cols_c] - hx[:, None]) / (sx * _SQRT2)
    zx_hi = (x_edges[cols_c + 1] - hx[:, None]) / (sx * _SQRT2)
    mx = 0.5 * (_erf_np(zx_hi) - _erf_np(zx_lo)) * col_ok
    zy_lo = (y_edges[rows_c] - hy[:, None]) / (sy * _SQRT2)
    zy_hi = (y_edges[rows_c + 1] - hy[:, None]) / (sy * _SQRT2)
    my = 0.5 * (_erf_np(zy_hi) - _erf_np(zy_lo)) * row_ok
    contrib = w[:, None, None] * my[:, :, None] * mx[:, None, :]
    flat = (rows_c[:, :, None] * nx + cols_c[:, None, :]).reshape(-1)
    np.add.at(out.reshape(-1), flat, contrib.reshape(-1))
    return out


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap if not (args and callable(args[0])) else args[0]

import math


@njit(cache=True, fastmath=True)
def _estep_stats_scan_nb(x, y, t, mu, logphi, theta, omega, sx, sy,
                         time_window, x_reach, y_reach):
    n = len(t)
    sum_p0 = 0.0
    sum_p0_logphi = 0.0
    sum_pij = 0.0
    sum_dt = 0.0
    sum_dx2 = 0.0
    sum_dy2 = 0.0
    sum_loglam = 0.0
    inv2sx2 = 1.0 / (2.0 * sx * sx)
    inv2sy2 = 1.0 / (2.0 * sy * sy)
    for i in range(n):
        row_g = 0.0
        row_gdt = 0.0
        row_gdx2 = 0.0
        row_gdy2 = 0.0
        for j in range(i - 1, -1, -1):
            dt = t[i] - t[j]
            if dt > time_window:
                break
            if dt <= 0.0:
                continue
            dx = x[i] - x[j]
            if dx > x_reach or dx < -x_reach:
                continue
            dy = y[i] - y[j]
            if dy > y_reach or dy < -y_reach:
                continue
            g = theta * omega * math.exp(
                -omega * dt - dx * dx * inv2sx2 - dy * dy * inv2sy2
            )
            row_g += g
            row_gdt += g * dt
            row_gdx2 += g * dx * dx
            row_gdy2 += g * dy * dy
        lam = mu[i] + row_g
        inv = 1.0 / lam
        sum_p0 += mu[i] * inv
        sum_p0_logphi += mu[i] * inv * logphi[i]
        sum_pij += row_g * inv
        sum_dt += row_gdt * inv
        sum_dx2 += row_gdx2 * inv
        sum_dy2 += row_gdy2 * inv
        sum_loglam += math.log(lam)
    return (sum_p0, sum_p0_logphi, sum_pij, sum_dt, sum_dx2, sum_dy2,
            sum_loglam)


@njit(cache=True, fastmath=True)
def _estep_stats_indexed_nb(x, y, t, mu, logphi, theta, omega, sx, sy,
                            time_window, x_reach, y_reach,
                            h, x0, y0, ncx, ncy, cell_start, xs, ys, ts):
    n = len(t)
    sum_p0 = 0.0
    sum_p0_logphi = 0.0
    sum_pij = 0.0
    sum_dt = 0.0
    sum_dx2 = 0.0
    sum_dy2 = 0.0
    sum_loglam = 0.0
    inv2sx2 = 1.0 / (2.0 * sx * sx)
    inv2sy2 = 1.0 / (2.0 * sy * sy)
    for i in range(n):
        xi = x[i]
        yi = y[i]
        ti = t[i]
        cx_lo = int(math.floor((xi - x_reach - x0) / h))
        cx_hi = int(math.floor((xi + x_reach - x0) / h))
        cy_lo = int(math.floor((yi - y_reach - y0) / h))
        cy_hi = int(math.floor((yi + y_reach - y0) / h))
        if cx_lo < 0:
            cx_lo = 0
        if cy_lo < 0:
            cy_lo = 0
        if cx_hi > ncx - 1:
            cx_hi = ncx - 1
        if cy_hi > ncy - 1:
            cy_hi = ncy - 1
        t_min = ti - time_window
        row_g = 0.0
        row_gdt = 0.0
        row_gdx2 = 0.0
        row_gdy2 = 0.0
        for cy in range(cy_lo, cy_hi + 1):
            for cx in range(cx_lo, cx_hi + 1):
                cid = cy * ncx + cx
                lo = cell_start[cid]
                hi = cell_start[cid + 1]
                # binary search the first index with ts >= t_min
                a = lo
                b = hi
                while a < b:
                    mid = (a + b) // 2
                    if ts[mid] < t_min:
                        a = mid + 1
                    else:
                        b = mid
                for k in range(a, hi):
                    dt = ti - ts[k]
                    if dt <= 0.0:
                        break
                    if dt > time_window:
                        continue
                    dx = xi - xs[k]
                    if dx > x_reach or dx < -x_reach:
                        continue
                    dy = yi - ys[k]
                    if dy > y_reach or dy < -y_reach:
                        continue
                    g = theta * omega * math.exp(
                        -omega * dt - dx * dx * inv2sx2 - dy * dy * inv2sy2
                    )
                    row_g += g
                    row_gdt += g * dt
                    row_gdx2 += g * dx * dx
                    row_gdy2 += g * dy * dy
        lam = mu[i] + row_g
        inv = 1.0 / lam
        sum_p0 += mu[i] * inv
        sum_p0_logphi += mu[i] * inv * logphi[i]
        sum_pij += row_g * inv
        sum_dt += row_gdt * inv
        sum_dx2 += row_gdx2 * inv
        sum_dy2 += row_gdy2 * inv
        sum_loglam += math.log(lam)
    return (sum_p0, sum_p0_logphi, sum_pij, sum_dt, sum_dx2, sum_dy2,
            sum_loglam)


@njit(cache=True)
def _grid_trig_mass_nb(hx, hy, ht, t_eval, theta, omega, sx, sy,
                       x_edges, y_edges, time_window, x_reach, y_reach):
    nx = len(x_edges) - 1
    ny = len(y_edges) - 1
    out = np.zeros((ny, nx))
    scale = 2.0 * np.pi * theta * sx * sy * omega
    sx2 = sx * _SQRT2
    sy2 = sy * _SQRT2
    mx = np.empty(nx)
    for k in range(len(ht)):
        dt = t_eval - ht[k]
        if dt <= 0.0 or dt > time_window:
            continue
        w = scale * math.exp(-omega * dt)
        # x cell range within reach
        ix_lo = 0
        ix_hi = nx - 1
        if np.isfinite(x_reach):
            while ix_lo < nx - 1 and x_edges[ix_lo + 1] < hx[k] - x_reach:
                ix_lo += 1
            while ix_hi > 0 and x_edges[ix_hi] > hx[k] + x_reach:
                ix_hi -= 1
        iy_lo = 0
        iy_hi = ny - 1
        if np.isfinite(y_reach):
            while iy_lo < ny - 1 and y_edges[iy_lo + 1] < hy[k] - y_reach:
                iy_lo += 1
            while iy_hi > 0 and y_edges[iy_hi] > hy[k] + y_reach:
                iy_hi -= 1
        edge = 0.5 * math.erf((x_edges[ix_lo] - hx[k]) / sx2)
        for ix in range(ix_lo, ix_hi + 1):
            upper = 0.5 * math.erf((x_edges[ix + 1] - hx[k]) / sx2)
            mx[ix] = upper - edge
            edge = upper
        for iy in range(iy_lo, iy_hi + 1):
            my = 0.5 * (
                math.erf((y_edges[iy + 1] - hy[k]) / sy2)
                - math.erf((y_edges[iy] - hy[k]) / sy2)
            )
            wy = w * my
            for ix in range(ix_lo, ix_hi + 1):
                out[iy, ix] += wy * mx[ix]
    return out


# ---------------------------------------------------------------------------
# dispatchers
# ---------------------------------------------------------------------------

def estep_stats(x, y, t, mu, logphi, theta, omega, sx, sy,
                time_window=np.inf, x_reach=np.inf, y_reach=np.inf,
                index=None):
    """One E-step pass fused with M-step moment accumulation.

    Returns ``(sum_p0, sum_p0_logphi, sum_pij, sum_dt, sum_dx2, sum_dy2,
    sum_loglam)`` where the pij sums run over admissible
    (truncation-included) pairs and ``sum_loglam`` is the sum of
    log-intensities at the events, i.e. the data term of the observed-data
    log-likelihood.
    """
    if use_numba():
        if index is not None and np.isfinite(x_reach) and np.isfinite(y_reach):
            return _estep_stats_indexed_nb(
                x, y, t, mu, logphi, theta, omega, sx, sy,
                time_window, x_reach, y_reach,
                index.h, index.x0, index.y0, index.ncx, index.ncy,
                index.cell_start, index.xs, index.ys, index.ts,
            )
        return _estep_stats_scan_nb(
            x, y, t, mu, logphi, theta, omega, sx, sy,
            time_window, x_reach, y_reach,
        )
    return _estep_stats_numpy(
        x, y, t, mu, logphi, theta, omega, sx, sy,
        time_window, x_reach, y_reach,
    )


def grid_trig_mass(hx, hy, ht, t_eval, theta, omega, sx, sy,
                   x_edges, y_edges,
                   time_window=np.inf, x_reach=np.inf, y_reach=np.inf):
    """Triggering-sum spatial integral in every grid cell at time ``t_eval``.

    Returns an (ny, nx) array of expected-count contributions, i.e.
    ``sum_k theta*omega*exp(-omega*(t-t_k)) * Ix_k(cell) * Iy_k(cell)`` with
    the per-axis Gaussian integrals evaluated through the error function.
    """
    hx = np.ascontiguousarray(hx, dtype=np.float64)
    hy = np.ascontiguousarray(hy, dtype=np.float64)
    ht = np.ascontiguousarray(ht, dtype=np.float64)
    if use_numba():
        return _grid_trig_mass_nb(
            hx, hy, ht, t_eval, theta, omega, sx, sy,
            np.ascontiguousarray(x_edges), np.ascontiguousarray(y_edges),
            time_window, x_reach, y_reach,
        )
    return _grid_trig_mass_numpy(
        hx, hy, ht, t_eval, theta, omega, sx, sy,
        np.asarray(x_edges), np.asarray(y_edges),
        time_window, x_reach, y_reach,
    )
