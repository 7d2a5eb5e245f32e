"""Empirical measures, Wasserstein distances and convolution of fields with measures."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize, sparse
from scipy.special import logsumexp

from .errors import ContractError, DomainError, ResourceError
from .fbm import TimeGrid
from .field import TWO_PI, SpectralField

log = logging.getLogger(__name__)

MAX_EXACT_PAIRS = 10**6


class EmpiricalMeasure:
    """Weighted point cloud ``sum_i w_i delta_{x_i}`` in R^d.

    ``points`` has shape ``(n, d)`` (a 1-D array is read as ``n`` points in R^1);
    ``weights`` defaults to uniform and must be non-negative and sum to one.
    """

    def __init__(self, points, weights=None):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or len(pts) < 1:
            raise ContractError("points must be a non-empty (n, d) array")
        if weights is None:
            w = np.full(len(pts), 1.0 / len(pts))
        else:
            w = np.asarray(weights, dtype=float).reshape(-1)
            if w.shape[0] != len(pts):
                raise ContractError("weights and points differ in length")
            if np.any(w < 0):
                raise DomainError("weights must be non-negative")
            if abs(w.sum() - 1.0) > 1e-12:
                raise DomainError(f"weights must sum to 1 (sum = {w.sum()!r})")
        self.points = pts
        self.weights = w
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @classmethod
    def normalized(cls, points, weights):
        w = np.asarray(weights, dtype=float)
        return cls(points, w / w.sum())

    @classmethod
    def dirac(cls, x):
        return cls(np.atleast_1d(np.asarray(x, dtype=float))[None, :])

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def translate(self, shift) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.points + np.asarray(shift, dtype=float), self.weights)

    def scale(self, c: float) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.points * c, self.weights)

    def diameter(self) -> float:
        lo, hi = self.points.min(axis=0), self.points.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def characteristic(self, modes, period: float) -> np.ndarray:
        """``sum_j w_j exp(-2 pi i <m, x_j> / L)`` for each row ``m`` of ``modes``."""
        modes = np.asarray(modes, dtype=float).reshape(-1, self.dim)
        if not len(modes):
            return np.zeros(0, dtype=complex)
        phase = np.exp(-1j * (TWO_PI / period) * (self.points @ modes.T))
        return self.weights @ phase

    def __repr__(self):
        return f"EmpiricalMeasure(n={self.n}, d={self.dim})"


@dataclass
class MeasureFlow:
    """One empirical measure per time index of ``grid``."""

    grid: TimeGrid
    measures: list

    def __post_init__(self):
        if len(self.measures) != self.grid.n_steps + 1:
            raise ContractError("a flow needs one measure per grid time")
        dims = {m.dim for m in self.measures}
        if len(dims) != 1:
            raise ContractError("all measures of a flow must share the ambient dimension")

    def __getitem__(self, i) -> EmpiricalMeasure:
        return self.measures[i]

    def __len__(self):
        return len(self.measures)

    def translate(self, shift) -> "MeasureFlow":
        return MeasureFlow(self.grid, [m.translate(shift) for m in self.measures])


def _check_p(p):
    if p < 1:
        raise DomainError(f"Wasserstein order p must be >= 1, got {p}")


def wasserstein_1d(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float = 1.0) -> float:
    """``d_p`` on the line via the monotone (quantile) coupling, integrated exactly."""
    _check_p(p)
    if mu.dim != 1 or nu.dim != 1:
        raise ContractError("wasserstein_1d needs one-dimensional measures")
    if mu.is_uniform and nu.is_uniform and mu.n == nu.n:
        x = np.sort(mu.points[:, 0])
        y = np.sort(nu.points[:, 0])
        return float(np.mean(np.abs(x - y) ** p) ** (1.0 / p))
    ix, iy = np.argsort(mu.points[:, 0]), np.argsort(nu.points[:, 0])
    x, wx = mu.points[ix, 0], mu.weights[ix]
    y, wy = nu.points[iy, 0], nu.weights[iy]
    cx, cy = np.cumsum(wx), np.cumsum(wy)
    cx[-1] = cy[-1] = 1.0
    u = np.union1d(cx, cy)
    du = np.diff(np.concatenate([[0.0], u]))
    mid = u - du / 2
    qx = x[np.minimum(np.searchsorted(cx, mid), len(x) - 1)]
    qy = y[np.minimum(np.searchsorted(cy, mid), len(y) - 1)]
    return float(np.sum(du * np.abs(qx - qy) ** p) ** (1.0 / p))


def _cost_matrix(mu, nu, p):
    diff = mu.points[:, None, :] - nu.points[None, :, :]
    return np.linalg.norm(diff, axis=-1) ** p


def wasserstein_exact(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float = 1.0) -> float:
    """``d_p`` by solving the discrete transport problem exactly.

    Equal-size uniform clouds go through the Hungarian algorithm; otherwise the
    transport linear program is solved with HiGHS.
    """
    _check_p(p)
    if mu.dim != nu.dim:
        raise ContractError("measures live in different dimensions")
    if mu.n * nu.n > MAX_EXACT_PAIRS:
        raise ResourceError(
            f"exact transport limited to {MAX_EXACT_PAIRS} pairs (got {mu.n * nu.n}); "
            "use wasserstein_sinkhorn"
        )
    cost = _cost_matrix(mu, nu, p)
    if mu.is_uniform and nu.is_uniform and mu.n == nu.n:
        rows, cols = optimize.linear_sum_assignment(cost)
        return float(cost[rows, cols].mean() ** (1.0 / p))
    n, m = mu.n, nu.n
    a_rows = sparse.kron(sparse.eye(n), np.ones((1, m)))
    a_cols = sparse.kron(np.ones((1, n)), sparse.eye(m))
    res = optimize.linprog(
        cost.ravel(),
        A_eq=sparse.vstack([a_rows, a_cols]).tocsr(),
        b_eq=np.concatenate([mu.weights, nu.weights]),
        bounds=(0, None),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(max(res.fun, 0.0) ** (1.0 / p))


@dataclass
class SinkhornReport:
    value: float
    converged: bool
    n_iter: int
    marginal_error: float
    reg: float


def wasserstein_sinkhorn(mu, nu, p: float = 1.0, reg: float | None = None,
                         max_iter: int = 20000, tol: float = 1e-8, full_output: bool = False):
    """Entropic surrogate for ``d_p``: ``<P_reg, C>^(1/p)`` without debiasing.

    ``reg`` defaults to ``1e-3 * diameter^p`` of the joint support, i.e. a fixed
    fraction of the largest possible cost (``1e-3 * diameter^2`` for ``p = 2``).  Iterations
    run in the log domain and stop once the marginal violation drops below
    ``tol``.  With ``full_output`` a :class:`SinkhornReport` is returned as well;
    non-convergence is logged and flagged there, never raised.
    """
    _check_p(p)
    if mu.dim != nu.dim:
        raise ContractError("measures live in different dimensions")
    if reg is None:
        joint = EmpiricalMeasure(np.vstack([mu.points, nu.points]))
        reg = 1e-3 * max(joint.diameter(), 1e-12) ** p
    if not reg > 0:
        raise DomainError("reg must be positive")
    cost = _cost_matrix(mu, nu, p)
    log_a, log_b = np.log(mu.weights), np.log(nu.weights)
    f = np.zeros(mu.n)
    g = np.zeros(nu.n)
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        f = reg * (log_a - logsumexp((g[None, :] - cost) / reg, axis=1))
        g = reg * (log_b - logsumexp((f[:, None] - cost) / reg, axis=0))
        if it % 10 == 0 or it == max_iter:
            log_plan = (f[:, None] + g[None, :] - cost) / reg
            err = float(np.abs(np.exp(logsumexp(log_plan, axis=1)) - mu.weights).sum())
            if err < tol:
                break
    plan = np.exp((f[:, None] + g[None, :] - cost) / reg)
    value = float(max(np.sum(plan * cost), 0.0) ** (1.0 / p))
    converged = err < tol
    if not converged:
        log.warning("Sinkhorn did not converge in %d iterations (marginal error %.2e)", it, err)
    report = SinkhornReport(value, converged, it, err, reg)
    return (value, report) if full_output else value


def wasserstein(mu, nu, p: float = 1.0) -> float:
    """Exact ``d_p``, dispatching to the quantile formula in one dimension."""
    if mu.dim == 1 and nu.dim == 1:
        return wasserstein_1d(mu, nu, p)
    return wasserstein_exact(mu, nu, p)


def moment_norm(mu: EmpiricalMeasure, p: float = 1.0) -> float:
    """``(int |x|^p mu(dx))^(1/p)``."""
    _check_p(p)
    r = np.linalg.norm(mu.points, axis=1)
    return float((mu.weights @ r**p) ** (1.0 / p))


def convolve_field(b: SpectralField, mu: EmpiricalMeasure) -> SpectralField:
    """``b * mu`` exactly: each coefficient times the measure's characteristic value."""
    if b.d != mu.dim:
        raise ContractError(f"field is {b.d}-dimensional but measure is {mu.dim}-dimensional")
    return b.scale_coeffs(mu.characteristic(b.modes, b.period))


def sampling_floor(sampler, n: int, p: float = 1.0, rng=None, replicas: int = 1) -> float:
    """Mean ``d_p`` between pairs of independent ``n``-point clouds from ``sampler``.

    ``sampler(n, stream)`` must return an ``(n, d)`` array; pair ``r`` uses the
    streams ``rng.spawn(r, 0)`` and ``rng.spawn(r, 1)``.
    """
    from .rng import as_stream

    rng = as_stream(0 if rng is None else rng)
    vals = []
    for r in range(replicas):
        a = EmpiricalMeasure(sampler(n, rng.spawn(r, 0)))
        b = EmpiricalMeasure(sampler(n, rng.spawn(r, 1)))
        vals.append(wasserstein(a, b, p))
    return float(np.mean(vals))
