"""Fractional Brownian motion: covariance, exact and FFT samplers, Hölder seminorms.

The covariance used throughout is the standard one,

    E[W_s W_t] = 1/2 (|t|^{2H} + |s|^{2H} - |t - s|^{2H}),

which reduces to ``min(s, t)`` for ``H = 1/2``.

Two samplers are provided.  :func:`sample_fbm_cholesky` factorizes the
(Toeplitz) covariance of the increments and is exact; it is limited to
``n_steps <= 4096``.  :func:`sample_fbm_circulant` is the Davies-Harte /
circulant-embedding method, O(n log n), for long grids.  Both draw each
``(path, component)`` from its own :class:`~ddsde.rng.RngStream`, so ensembles
are reproducible independently of evaluation order.

The Volterra-kernel (canonical) representation of fBm is deliberately not used
for sampling: its kernel is singular on the diagonal and naive quadrature is
both slower and less accurate than either method here.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg

from .errors import DomainError, FactorizationError, ResourceError
from .rng import RngStream, as_stream

log = logging.getLogger(__name__)

MAX_CHOLESKY_STEPS = 4096


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i * T / n_steps`` on ``[0, T]``."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        if int(self.n_steps) < 1:
            raise DomainError(f"n_steps must be >= 1, got {self.n_steps}")
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.horizon
        return t

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.horizon, self.n_steps * factor)


@dataclass
class FbmPath:
    """A ``d``-dimensional fBm sample; ``values`` has shape ``(d, n_steps + 1)``."""

    hurst: float
    grid: TimeGrid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


def _check_hurst(H):
    if not 0.0 < H < 1.0:
        raise DomainError(f"Hurst parameter must lie in (0, 1), got {H}")


def fbm_covariance(s, t, H: float):
    """Covariance ``E[W_s W_t]`` of one-dimensional fBm.

    Accepts scalars or broadcastable arrays of non-negative times.
    """
    _check_hurst(H)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("fBm covariance is defined for non-negative times")
    h2 = 2.0 * H
    out = 0.5 * (np.abs(t) ** h2 + np.abs(s) ** h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def fgn_autocovariance(k, H: float):
    """Autocovariance of unit-spaced fractional Gaussian noise at integer lag ``k``."""
    _check_hurst(H)
    k = np.abs(np.asarray(k, dtype=float))
    h2 = 2.0 * H
    return 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k**h2 + np.abs(k - 1) ** h2)


def covariance_matrix(times, H: float) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    return fbm_covariance(times[:, None], times[None, :], H)


@lru_cache(maxsize=16)
def _fgn_cholesky(n: int, H: float) -> np.ndarray:
    # lower factor of the unit-spacing increment covariance
    cov = linalg.toeplitz(fgn_autocovariance(np.arange(n), H))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        lam_min = float(np.linalg.eigvalsh(cov)[0])
        raise FactorizationError(
            f"fGn covariance (n={n}, H={H}) is not numerically positive definite; "
            f"smallest eigenvalue {lam_min:.3e}"
        ) from exc


def _check_cholesky_size(n: int):
    if n > MAX_CHOLESKY_STEPS:
        raise ResourceError(
            f"Cholesky sampling limited to {MAX_CHOLESKY_STEPS} steps (got {n}); "
            "use sample_fbm_circulant"
        )


def _cholesky_increments(n: int, H: float, dt: float, normals: np.ndarray) -> np.ndarray:
    chol = _fgn_cholesky(n, float(H))
    return (normals @ chol.T) * dt**H


@lru_cache(maxsize=16)
def _circulant_sqrt_eigs(n: int, H: float) -> tuple[np.ndarray, float]:
    m = 1 << max(int(np.ceil(np.log2(n))), 0)
    row = fgn_autocovariance(np.arange(m + 1), H)
    embed = np.concatenate([row, row[-2:0:-1]])
    lam = np.fft.fft(embed).real
    neg = lam < 0
    clipped = 0.0
    if np.any(neg):
        clipped = float(-lam[neg].sum() / np.abs(lam).sum())
        if clipped > 1e-12:
            log.warning(
                "circulant embedding (n=%d, H=%.3f) has negative eigenvalues; "
                "clipped mass %.3e", n, H, clipped,
            )
        lam = np.where(neg, 0.0, lam)
    return np.sqrt(lam / lam.size), clipped


def circulant_eigenvalues(n: int, H: float) -> tuple[np.ndarray, float]:
    """Eigenvalues of the circulant embedding of unit fGn and the clipped mass."""
    _check_hurst(H)
    root, clipped = _circulant_sqrt_eigs(int(n), float(H))
    return root**2 * root.size, clipped


def _circulant_increments(n: int, H: float, dt: float, normals: np.ndarray) -> np.ndarray:
    # normals: (..., 2, M) real; the real part of the FFT is an exact N(0, C) draw
    root, _ = _circulant_sqrt_eigs(n, float(H))
    xi = normals[..., 0, :] + 1j * normals[..., 1, :]
    out = np.fft.fft(root * xi, axis=-1).real[..., :n]
    return out * dt**H


def _draw(method: str, n: int, H: float, streams) -> np.ndarray:
    if method == "cholesky":
        return np.stack([s.normal(n) for s in streams])
    if method == "circulant":
        M = 2 * (1 << max(int(np.ceil(np.log2(n))), 0))
        return np.stack([s.normal((2, M)) for s in streams])
    raise ValueError(f"unknown sampler {method!r}")


def _to_path(increments: np.ndarray) -> np.ndarray:
    shape = increments.shape[:-1] + (increments.shape[-1] + 1,)
    out = np.zeros(shape)
    np.cumsum(increments, axis=-1, out=out[..., 1:])
    return out


def _sample(method, grid, H, d, rng):
    _check_hurst(H)
    rng = as_stream(rng)
    n = grid.n_steps
    if method == "cholesky":
        _check_cholesky_size(n)
    normals = _draw(method, n, H, [rng.spawn(c) for c in range(d)])
    if method == "cholesky":
        inc = _cholesky_increments(n, H, grid.dt, normals)
        meta = {"sampler": "cholesky"}
    else:
        inc = _circulant_increments(n, H, grid.dt, normals)
        meta = {"sampler": "circulant", "clipped_mass": _circulant_sqrt_eigs(n, float(H))[1]}
    return FbmPath(hurst=H, grid=grid, values=_to_path(inc), meta=meta)


def sample_fbm_cholesky(grid: TimeGrid, H: float, d: int, rng) -> FbmPath:
    """Exact sample of a ``d``-dimensional fBm on ``grid``.

    Component ``c`` is driven by ``rng.spawn(c)``.

    Raises
    ------
    ResourceError
        If ``grid.n_steps`` exceeds 4096.
    FactorizationError
        If the increment covariance cannot be Cholesky-factorized.
    """
    return _sample("cholesky", grid, H, d, rng)


def sample_fbm_circulant(grid: TimeGrid, H: float, d: int, rng) -> FbmPath:
    """Circulant-embedding (Davies-Harte) sample of a ``d``-dimensional fBm.

    The embedding has size twice the next power of two above ``n_steps``.
    Negative embedding eigenvalues (not expected for fGn) are clipped to zero;
    the clipped mass is logged and stored in ``path.meta["clipped_mass"]``.
    """
    return _sample("circulant", grid, H, d, rng)


def sample_fbm_ensemble(
    grid: TimeGrid, H: float, d: int, n_paths: int, rng, method: str = "cholesky", indices=None
) -> np.ndarray:
    """Sample ``n_paths`` independent fBm paths, shape ``(n_paths, d, n_steps + 1)``.

    Path ``i`` equals ``sample_fbm_<method>(grid, H, d, rng.spawn(i)).values``,
    so any subset of the ensemble can be regenerated on its own.  ``indices``
    (length ``n_paths``) selects which stream keys to use instead of ``0, 1, ...``.
    """
    _check_hurst(H)
    rng = as_stream(rng)
    n = grid.n_steps
    indices = range(n_paths) if indices is None else [int(i) for i in indices]
    if len(indices) != n_paths:
        raise ValueError("indices must have length n_paths")
    streams = [rng.spawn(i, c) for i in indices for c in range(d)]
    if method == "cholesky":
        _check_cholesky_size(n)
        inc = _cholesky_increments(n, H, grid.dt, _draw(method, n, H, streams))
    elif method == "circulant":
        inc = np.empty((len(streams), n))
        block = 256
        for lo in range(0, len(streams), block):
            chunk = streams[lo:lo + block]
            inc[lo:lo + len(chunk)] = _circulant_increments(n, H, grid.dt, _draw(method, n, H, chunk))
    else:
        raise ValueError(f"unknown sampler {method!r}")
    return _to_path(inc).reshape(n_paths, d, n + 1)


def holder_seminorm(times, values, gamma: float) -> float:
    """Discrete Hölder seminorm ``max_{i<j} |f_j - f_i| / |t_j - t_i|^gamma``.

    ``values`` may be one-dimensional or of shape ``(n_points, k)``; vector
    increments are measured in the Euclidean norm.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if times.size < 2 or values.shape[0] != times.size:
        raise DomainError("need at least two (time, value) points of matching length")
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")
    best = 0.0
    for lag in range(1, times.size):
        num = np.linalg.norm(values[lag:] - values[:-lag], axis=1)
        den = np.abs(times[lag:] - times[:-lag]) ** gamma
        best = max(best, float(np.max(num / den)))
    return best
