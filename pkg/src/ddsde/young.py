"""Averaged fields, nonlinear Young integrals and Hölder-exponent regression.

The averaged field of a (time-independent) field ``b`` along a path ``W`` is

    T^W b(t, x) = int_0^t b(x + W_s) ds
                = sum_m c_m exp(2 pi i <m, x>/L) I_m(t),
    I_m(t)      = int_0^t exp(2 pi i <m, W_s>/L) ds,

so it is exact in ``x`` and only the scalar oscillatory integrals ``I_m`` need
quadrature (trapezoid rule on the path grid).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError, ExtrapolationError
from .fbm import FbmPath, TimeGrid
from .field import TWO_PI, SpectralField


@dataclass
class AveragedField:
    """Tabulated ``A(t_i, x_j)``; ``values`` has shape ``(n_t + 1, n_x, output_dim)``."""

    x_grid: np.ndarray
    grid: TimeGrid
    values: np.ndarray
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x_grid, dtype=float)
        self.x_grid = x[:, None] if x.ndim == 1 else x
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2:
            v = v[..., None]
        if v.shape[:2] != (self.grid.n_steps + 1, len(self.x_grid)):
            raise ContractError(f"values of shape {v.shape} do not match the (t, x) grids")
        self.values = v

    @property
    def output_dim(self) -> int:
        return self.values.shape[2]

    def increment(self, s_index: int, t_index: int) -> np.ndarray:
        """``A_{s,t}(x_j) = A(t, x_j) - A(s, x_j)``."""
        return self.values[t_index] - self.values[s_index]


def default_x_grid(period: float, n: int = 257) -> np.ndarray:
    return np.linspace(0.0, period, n)


def _as_path_array(W, n_t: int | None = None) -> np.ndarray:
    vals = W.values if isinstance(W, FbmPath) else np.asarray(W, dtype=float)
    if vals.ndim == 1:
        vals = vals[None, :]
    return vals


def oscillatory_integrals(modes, period, W, dt: float) -> np.ndarray:
    """``I_m(t_i)`` for each half-space mode, shape ``(n_t + 1, M)``, by the trapezoid rule."""
    W = _as_path_array(W)
    phase = np.exp(1j * (TWO_PI / period) * (W.T @ np.asarray(modes, dtype=float).T))
    out = np.zeros_like(phase)
    np.cumsum(0.5 * dt * (phase[1:] + phase[:-1]), axis=0, out=out[1:])
    return out


def averaged_field(b: SpectralField, W, x_grid=None, grid: TimeGrid | None = None) -> AveragedField:
    """Averaged field ``T^W b`` on ``x_grid`` (default: 257 points on one period, d = 1).

    ``W`` is an :class:`~ddsde.fbm.FbmPath` or an array ``(d, n_t + 1)``; in the
    latter case ``grid`` must be given.
    """
    if isinstance(W, FbmPath):
        grid = W.grid
    elif grid is None:
        raise ContractError("a time grid is required when W is a bare array")
    Wv = _as_path_array(W)
    if Wv.shape != (b.d, grid.n_steps + 1):
        raise ContractError(f"path of shape {Wv.shape} does not match d={b.d} and the grid")
    if x_grid is None:
        if b.d != 1:
            raise ContractError("x_grid is required for d > 1")
        x_grid = default_x_grid(b.period)
    x = np.asarray(x_grid, dtype=float).reshape(-1, b.d)
    modes, coeffs, c0 = b._half
    t = grid.times
    vals = np.broadcast_to(c0, (len(t), len(x), b.output_dim)) * t[:, None, None]
    vals = np.array(vals)
    if len(modes):
        integ = oscillatory_integrals(modes, b.period, Wv, grid.dt)
        ex = np.exp(1j * (TWO_PI / b.period) * (x @ modes.T))           # (n_x, M)
        weights = ex[:, :, None] * coeffs[None, :, :]                   # (n_x, M, out)
        flat = weights.transpose(1, 0, 2).reshape(len(modes), -1)
        chunk = max(1, 4_000_000 // max(flat.shape[1], 1))
        for lo in range(0, len(t), chunk):
            part = (integ[lo:lo + chunk] @ flat).real.reshape(-1, len(x), b.output_dim)
            vals[lo:lo + chunk] += 2.0 * part
    return AveragedField(x, grid, vals, {"field_modes": int(len(b.modes)), "period": b.period})


def averaged_gradient(b: SpectralField, W, x_grid=None, grid=None) -> AveragedField:
    """Spatial Jacobian ``D_x T^W b``, computed exactly as ``T^W (D b)``."""
    return averaged_field(b.gradient(), W, x_grid, grid)


# -- nonlinear Young integral ---------------------------------------------------


def _cubic_interp(xg: np.ndarray, table: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Local four-point Lagrange interpolation of rows ``table[k]`` at ``q[k]``."""
    n = len(xg)
    if n < 4:
        raise ContractError("cubic interpolation needs at least 4 x nodes")
    i = np.clip(np.searchsorted(xg, q) - 2, 0, n - 4)
    idx = i[:, None] + np.arange(4)[None, :]
    xs = xg[idx]
    out = np.zeros((len(q), table.shape[-1]))
    for a in range(4):
        w = np.ones(len(q))
        for c in range(4):
            if c != a:
                w *= (q - xs[:, c]) / (xs[:, a] - xs[:, c])
        out += w[:, None] * table[np.arange(len(q)), idx[:, a]]
    return out


def partition_indices(n_steps: int, level: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Grid indices of the dyadic partition of ``[t_start, t_stop]`` into ``2^level`` pieces.

    The partition is rounded to the grid; it can be no finer than the grid itself.
    """
    stop = n_steps if stop is None else stop
    if not 0 <= start < stop <= n_steps:
        raise DomainError(f"invalid index window [{start}, {stop}]")
    pts = np.rint(np.linspace(start, stop, (1 << level) + 1)).astype(np.int64)
    return np.unique(pts)


def nonlinear_young_integral(A: AveragedField, theta, partition_level: int,
                             start: int = 0, stop: int | None = None) -> np.ndarray:
    """Riemann-sum nonlinear Young integral ``int A(ds, theta_s)`` at every grid time.

    Sums ``A_{u,v}(theta_u)`` over the dyadic partition of ``[t_start, t_stop]``
    at level ``partition_level``; at a grid time ``t`` inside a partition interval
    ``[u, v]`` the last term is ``A_{u,t}(theta_u)``.  The result has shape
    ``(n_t + 1, output_dim)`` and vanishes up to ``start``; entries after
    ``stop`` hold the value at ``stop``.  Only one spatial dimension is supported.

    Raises
    ------
    ExtrapolationError
        If ``theta`` leaves the range of ``A.x_grid``.
    """
    if A.x_grid.shape[1] != 1:
        raise ContractError("nonlinear_young_integral supports d = 1 only")
    n = A.grid.n_steps
    stop = n if stop is None else stop
    th = np.asarray(theta, dtype=float).reshape(-1)
    if th.size != n + 1:
        raise ContractError("theta must be given on every grid time")
    xg = A.x_grid[:, 0]
    if np.any(np.diff(xg) <= 0):
        raise ContractError("x_grid must be strictly increasing")
    seg = th[start:stop + 1]
    if seg.min() < xg[0] or seg.max() > xg[-1]:
        raise ExtrapolationError(
            f"theta ranges over [{seg.min():.4g}, {seg.max():.4g}] outside the x hull "
            f"[{xg[0]:.4g}, {xg[-1]:.4g}]")
    part = partition_indices(n, partition_level, start, stop)
    left = np.repeat(part[:-1], np.diff(part))          # left endpoint u for each grid index
    idx = np.arange(start + 1, stop + 1)
    q = th[left]
    a_t = _cubic_interp(xg, A.values[idx], q)
    a_u = _cubic_interp(xg, A.values[left], q)
    terms = a_t - a_u                                   # A_{u,t}(theta_u)
    at_part = np.isin(idx, part[1:])
    completed = np.where(at_part[:, None], terms, 0.0)
    cum = np.cumsum(completed, axis=0)
    before = np.vstack([np.zeros((1, terms.shape[1])), cum[:-1]])
    # completed intervals strictly before the current one, plus the open one
    running = np.where(at_part[:, None], cum, before + terms)
    out = np.zeros((n + 1, A.output_dim))
    out[start + 1:stop + 1] = running
    out[stop + 1:] = out[stop]
    return out


def refinement_rate(A: AveragedField, theta, levels) -> tuple[float, np.ndarray]:
    """Empirical convergence rate of the dyadic Riemann sums at the final time.

    Compares successive levels (``|I_{k+1} - I_k|`` at ``t = T``) and returns
    the negated log2-slope against ``k`` together with the differences.
    """
    levels = list(levels)
    if len(levels) < 3:
        raise ContractError("need at least three partition levels")
    finals = np.array([nonlinear_young_integral(A, theta, k)[-1] for k in levels])
    diffs = np.linalg.norm(np.diff(finals, axis=0), axis=1)
    if np.any(diffs <= 0):
        raise DomainError("successive levels agree exactly; no rate to fit")
    slope = np.polyfit(levels[:-1], np.log2(diffs), 1)[0]
    return float(-slope), diffs


# -- exponent estimation ----------------------------------------------------------


def scale_seminorms(values, dt: float, lags=None, kind: str = "rms") -> np.ndarray:
    """Increment size of a tabulated path at dyadic lags.

    ``values`` has time on axis 0 (any trailing shape).  For each lag ``k``
    (default ``1, 2, 4, ...`` up to a quarter of the grid) returns the pair
    ``(k dt, s_k)`` with ``s_k`` the root-mean-square (``kind="rms"``) or maximal
    (``kind="sup"``) Euclidean size of ``values[i + k] - values[i]``.
    """
    v = np.asarray(values, dtype=float)
    v = v.reshape(v.shape[0], -1)
    n = v.shape[0] - 1
    if lags is None:
        lags = [1 << j for j in range(int(np.log2(max(n, 1))) - 1)]
    rows = []
    for k in lags:
        diff = v[k:] - v[:-k]
        if kind == "rms":
            s = float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))
        elif kind == "sup":
            s = float(np.max(np.linalg.norm(diff, axis=1)))
        else:
            raise ValueError(f"kind must be 'rms' or 'sup', got {kind!r}")
        rows.append((k * dt, s))
    return np.asarray(rows)


def _fit(logh, logs):
    slope, intercept = np.polyfit(logh, logs, 1)
    resid = logs - (slope * logh + intercept)
    ss = np.sum((logs - logs.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return float(slope), float(r2)


def estimate_holder_exponent(seminorms) -> tuple[float, float]:
    """Slope of ``log s`` against ``log h`` and its ``r^2``.

    ``seminorms`` is an array of ``(scale, value)`` rows over at least four
    scales.  When ``r^2 < 0.98`` and at least six scales are present the two
    finest scales are discarded once and the fit repeated.
    """
    arr = np.asarray(seminorms, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 4:
        raise ContractError("need an array of at least four (scale, value) rows")
    if np.any(arr <= 0):
        raise DomainError("scales and seminorm values must be positive")
    arr = arr[np.argsort(arr[:, 0])]
    logh, logs = np.log(arr[:, 0]), np.log(arr[:, 1])
    slope, r2 = _fit(logh, logs)
    if r2 < 0.98 and len(arr) >= 6:
        slope, r2 = _fit(logh[2:], logs[2:])
    return slope, r2


def path_exponent(paths, dt: float, lags=None) -> tuple[float, float]:
    """Exponent of an ensemble ``(n_paths, n_t + 1, ...)`` from its pooled RMS increments."""
    paths = np.asarray(paths, dtype=float)
    sq = None
    for p in paths:
        s = scale_seminorms(p, dt, lags)
        sq = s[:, 1] ** 2 if sq is None else sq + s[:, 1] ** 2
        scales = s[:, 0]
    return estimate_holder_exponent(np.column_stack([scales, np.sqrt(sq / len(paths))]))
