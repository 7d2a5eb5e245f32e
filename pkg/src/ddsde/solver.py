"""Frozen-drift Euler integration, the Picard map on measure flows and the particle system.

Random streams are laid out under the root ``RngStream(config.seed)``:

* ``spawn(0, i)``        initial point of particle ``i``;
* ``spawn(1)``           fBm ensemble (path ``i``, component ``c`` at ``spawn(1, i, c)``);
* ``spawn(2, k, ...)``   fresh draws for Picard iteration ``k`` when common random
  numbers are switched off.

Flows are carried internally as trajectory arrays ``(N, n_steps + 1, d)``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .drift import RegimeParams, effective_field, regime_gate
from .errors import ConfigurationError, ContractError, DomainError, NumericalBlowUp
from .fbm import MAX_CHOLESKY_STEPS, FbmPath, TimeGrid, sample_fbm_ensemble
from .field import SpectralField, block_sup_norms, mollify
from .measure import EmpiricalMeasure, MeasureFlow, wasserstein
from .rng import RngStream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InitialLaw:
    """Initial distribution ``mu_0``: ``"point"``, ``"gaussian"`` or ``"uniform"``.

    ``loc`` is a point of R^d and ``scale`` a standard deviation (gaussian) or
    half-width (uniform).  Particle ``i`` is drawn from ``stream.spawn(i)``.
    """

    kind: str = "gaussian"
    loc: tuple = (0.0,)
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("point", "gaussian", "uniform"):
            raise ContractError(f"unknown initial law {self.kind!r}")
        object.__setattr__(self, "loc", tuple(float(v) for v in np.atleast_1d(self.loc)))
        if self.scale < 0:
            raise DomainError("scale must be non-negative")

    @property
    def d(self) -> int:
        return len(self.loc)

    @property
    def tag(self) -> str:
        return f"{self.kind}(loc={list(self.loc)}, scale={self.scale:g})"

    def shifted(self, h) -> "InitialLaw":
        return InitialLaw(self.kind, tuple(np.asarray(self.loc) + h), self.scale)

    def sample(self, n: int, stream: RngStream, labels=None) -> np.ndarray:
        labels = range(n) if labels is None else labels
        loc = np.asarray(self.loc)
        if self.kind == "point":
            return np.broadcast_to(loc, (n, self.d)).copy()
        out = np.empty((n, self.d))
        for row, i in enumerate(labels):
            gen = stream.spawn(int(i)).generator()
            if self.kind == "gaussian":
                out[row] = loc + self.scale * gen.standard_normal(self.d)
            else:
                out[row] = loc + self.scale * gen.uniform(-1.0, 1.0, self.d)
        return out

    def to_dict(self):
        return {"kind": self.kind, "loc": list(self.loc), "scale": self.scale}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc.get("kind", "gaussian"), tuple(doc.get("loc", (0.0,))), float(doc.get("scale", 1.0)))


@dataclass(frozen=True)
class SolverConfig:
    """Discretization and sampling settings shared by all solvers.

    ``thinning`` is the number of pieces of the thinned grid on which
    ``sup_t d_p`` is evaluated (every ``ceil(n_steps / thinning)``-th index).
    ``n_windows > 1`` makes :func:`picard_iterate` converge on nested horizons.
    """

    grid: TimeGrid
    n_particles: int
    hurst: float = 0.5
    mollify_level: int | None = None
    seed: int = 0
    sampler: str = "auto"
    common_random_numbers: bool = True
    p: float = 1.0
    thinning: int = 32
    n_windows: int = 1

    def __post_init__(self):
        if int(self.n_particles) < 1:
            raise ConfigurationError(f"n_particles must be >= 1, got {self.n_particles}")
        if not 0 < self.hurst < 1:
            raise ConfigurationError(f"hurst must lie in (0, 1), got {self.hurst}")
        if self.sampler not in ("auto", "cholesky", "circulant"):
            raise ConfigurationError(f"unknown sampler {self.sampler!r}")
        if self.mollify_level is not None and self.mollify_level < -1:
            raise ConfigurationError("mollify_level must be >= -1")
        if self.n_windows < 1 or self.thinning < 1:
            raise ConfigurationError("n_windows and thinning must be positive")

    @property
    def method(self) -> str:
        if self.sampler != "auto":
            return self.sampler
        return "cholesky" if self.grid.n_steps <= MAX_CHOLESKY_STEPS else "circulant"

    def thinned_indices(self, stop: int | None = None) -> np.ndarray:
        n = self.grid.n_steps if stop is None else stop
        step = max(1, math.ceil(self.grid.n_steps / self.thinning))
        return np.unique(np.append(np.arange(0, n + 1, step), n))

    def resolution_ok(self, eps: float = 0.1) -> bool:
        """``2^mollify_level * dt^(1 - eps) <= 1``."""
        if self.mollify_level is None:
            return True
        return 2.0**self.mollify_level * self.grid.dt ** (1.0 - eps) <= 1.0

    def to_dict(self) -> dict:
        return {
            "T": self.grid.horizon, "n_steps": self.grid.n_steps, "n_particles": self.n_particles,
            "hurst": self.hurst, "mollify_level": self.mollify_level, "seed": self.seed,
            "sampler": self.sampler, "common_random_numbers": self.common_random_numbers,
            "p": self.p, "thinning": self.thinning, "n_windows": self.n_windows,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SolverConfig":
        known = {"T", "n_steps", "n_particles", "hurst", "mollify_level", "seed", "sampler",
                 "common_random_numbers", "p", "thinning", "n_windows"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown solver field(s): {sorted(unknown)}")
        try:
            grid = TimeGrid(float(doc.get("T", 1.0)), int(doc.get("n_steps", 128)))
        except DomainError as exc:
            raise ConfigurationError(str(exc)) from exc
        return cls(grid=grid, n_particles=int(doc.get("n_particles", 256)),
                   hurst=float(doc.get("hurst", 0.5)), mollify_level=doc.get("mollify_level"),
                   seed=int(doc.get("seed", 0)), sampler=doc.get("sampler", "auto"),
                   common_random_numbers=bool(doc.get("common_random_numbers", True)),
                   p=float(doc.get("p", 1.0)), thinning=int(doc.get("thinning", 32)),
                   n_windows=int(doc.get("n_windows", 1)))


@dataclass
class Ensemble:
    grid: TimeGrid
    trajectories: np.ndarray          # (N, n_steps + 1, d)
    initial_law: str = ""
    noise: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trajectories.ndim != 3 or self.trajectories.shape[1] != self.grid.n_steps + 1:
            raise ContractError("trajectories must have shape (N, n_steps + 1, d)")

    @property
    def n_particles(self) -> int:
        return self.trajectories.shape[0]

    @property
    def d(self) -> int:
        return self.trajectories.shape[2]

    def at(self, i: int) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.trajectories[:, i, :])


@dataclass
class PicardReport:
    grid: TimeGrid
    flows: list                       # trajectory arrays, flows[0] is the initial flow
    gaps: np.ndarray
    contraction_ratios: np.ndarray
    converged: bool
    tolerance: float
    residual: float
    diverged: bool = False
    windows: list = field(default_factory=list)

    @property
    def iterates(self) -> list:
        return [law_flow(Ensemble(self.grid, f)) for f in self.flows]

    @property
    def final(self) -> np.ndarray:
        return self.flows[-1]

    @property
    def n_iter(self) -> int:
        return len(self.gaps)

    def summary(self) -> dict:
        return {
            "gaps": [float(g) for g in self.gaps],
            "ratios": [float(r) for r in self.contraction_ratios],
            "residual": float(self.residual),
            "converged": bool(self.converged),
            "diverged": bool(self.diverged),
            "tolerance": float(self.tolerance),
            "windows": [list(map(int, w)) for w in self.windows],
        }


# -- frozen SDE -----------------------------------------------------------------


def looks_rough(b: SpectralField) -> bool:
    """Whether ``2^n ||Delta_n b||`` is still growing over the three top blocks.

    Such fields carry content below Lipschitz regularity that the explicit
    scheme cannot resolve without a frequency cutoff.
    """
    norms = {n: v for n, v in block_sup_norms(b, oversample=2, polish=False).items() if n >= 0 and v > 0}
    if len(norms) < 3:
        return False
    top = sorted(norms)[-3:]
    lip = [2.0**n * norms[n] for n in top]
    return lip[0] < lip[1] < lip[2]


def _noise_array(W, n_particles, d, n_steps) -> np.ndarray:
    if isinstance(W, np.ndarray):
        arr = W
    else:
        arr = np.stack([w.values if isinstance(w, FbmPath) else np.asarray(w) for w in W])
    if arr.shape != (n_particles, d, n_steps + 1):
        raise ContractError(f"noise of shape {arr.shape} does not match "
                            f"({n_particles}, {d}, {n_steps + 1})")
    return arr


def solve_frozen_sde(field_flow, xi, W, config: SolverConfig, *, check_rough: bool = True) -> Ensemble:
    """Explicit Euler scheme ``X_{i+1} = X_i + b_i(X_i) dt + (W_{t_{i+1}} - W_{t_i})``.

    Parameters
    ----------
    field_flow : SpectralField or sequence of SpectralField
        One field for all times, or one per step (``n_steps`` or ``n_steps + 1``
        entries, the field at ``t_i`` drives step ``i``).
    xi : array (N, d)
        Initial points.
    W : array (N, d, n_steps + 1) or sequence of FbmPath
    config : SolverConfig
        When ``mollify_level`` is set every field is truncated above that level.

    Raises
    ------
    ConfigurationError
        If the fields look rough and no ``mollify_level`` is configured.
    NumericalBlowUp
        On non-finite states, with the offending step index.
    """
    grid = config.grid
    n = grid.n_steps
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        xi = xi[:, None]
    N, d = xi.shape
    noise = _noise_array(W, N, d, n)
    if isinstance(field_flow, SpectralField):
        flow = [field_flow]
    else:
        flow = list(field_flow)
        if len(flow) not in (n, n + 1):
            raise ContractError(f"field flow needs {n} or {n + 1} entries, got {len(flow)}")
    if flow[0].d != d:
        raise ContractError(f"fields are {flow[0].d}-dimensional but states are {d}-dimensional")
    if config.mollify_level is None:
        if check_rough and looks_rough(flow[0]):
            raise ConfigurationError("field has sub-Lipschitz content; set mollify_level")
    else:
        flow = [mollify(f, config.mollify_level) for f in flow]
        if not config.resolution_ok():
            log.warning("2^mollify_level * dt^0.9 > 1: the drift scale is not resolved by the grid")
    # X_i = xi + W_i + D_i with D the accumulated drift, so zero drift gives xi + W exactly
    X = zero_drift_flow(xi, noise)
    D = np.zeros((N, d))
    dt = grid.dt
    single = len(flow) == 1
    for i in range(n):
        b = flow[0] if single else flow[i]
        if not b.is_zero():
            D = D + b.evaluate(X[:, i]) * dt
        X[:, i + 1] += D
        if not np.all(np.isfinite(X[:, i + 1])):
            raise NumericalBlowUp(f"non-finite state after step {i}", step=i)
    return Ensemble(grid, X)


def law_flow(ensemble: Ensemble) -> MeasureFlow:
    """Uniform empirical measure of the particles at every grid time."""
    return MeasureFlow(ensemble.grid, [ensemble.at(i) for i in range(ensemble.grid.n_steps + 1)])


# -- sampling helpers -----------------------------------------------------------------


def draw_inputs(config: SolverConfig, mu0: InitialLaw, d: int | None = None, stream=None, labels=None):
    """Initial points ``(N, d)`` and fBm noise ``(N, d, n_steps + 1)`` for ``config``."""
    root = RngStream(config.seed) if stream is None else stream
    d = mu0.d if d is None else d
    N = config.n_particles
    xi = mu0.sample(N, root.spawn(0), labels)
    W = sample_fbm_ensemble(config.grid, config.hurst, d, N, root.spawn(1), config.method,
                            indices=labels)
    return xi, W


def zero_drift_flow(xi, W) -> np.ndarray:
    return xi[:, None, :] + W.transpose(0, 2, 1)


def flow_distance(a: np.ndarray, b: np.ndarray, indices, p: float = 1.0) -> float:
    """``max_{i in indices} d_p`` between the empirical laws of two trajectory arrays."""
    return max(wasserstein(EmpiricalMeasure(a[:, i]), EmpiricalMeasure(b[:, i]), p) for i in indices)


def _picard_step(drift, flow, xi, W, config, stop):
    grid = config.grid
    t = grid.times
    fields = [effective_field(drift, EmpiricalMeasure(flow[:, i]), t[i]) for i in range(stop)]
    sub = SolverConfig(TimeGrid(t[stop], stop), config.n_particles, config.hurst, config.mollify_level,
                       config.seed, config.sampler, config.common_random_numbers, config.p)
    ens = solve_frozen_sde(fields, xi, W[:, :, :stop + 1], sub, check_rough=False)
    return ens.trajectories


def picard_iterate(drift, mu0: InitialLaw, config: SolverConfig, tol: float = 1e-10, max_iter: int = 30,
                   init_flow: np.ndarray | None = None, params: RegimeParams | None = None) -> PicardReport:
    """Fixed-point iteration ``mu^{k+1} = law of the SDE driven by B(., mu^k)``.

    The initial flow is the zero-drift flow ``xi + W`` unless ``init_flow``
    (trajectories ``(N, n_steps + 1, d)``) is given.  Gaps are
    ``max_t d_p(mu^{k+1}_t, mu^k_t)`` over the thinned grid; iteration stops
    once a gap drops below ``tol``.  Five consecutive gap increases stop the
    run and flag it as diverged.  The reported residual is the gap produced by
    one further application of the map to the final flow.
    """
    if params is not None:
        gate = regime_gate(params)
        if not gate.admissible:
            warnings.warn(f"parameters outside the admissible regime: {gate.reason}", RuntimeWarning)
    n = config.grid.n_steps
    if config.mollify_level is None and hasattr(drift, "kernel") and looks_rough(drift.kernel):
        raise ConfigurationError("drift kernel has sub-Lipschitz content; set mollify_level")
    xi, W = draw_inputs(config, mu0, drift.d)
    flow = zero_drift_flow(xi, W) if init_flow is None else np.array(init_flow, dtype=float)
    if flow.shape != (config.n_particles, n + 1, drift.d):
        raise ContractError(f"initial flow of shape {flow.shape} does not match the configuration")
    flows, gaps, windows = [flow], [], []
    bounds = np.rint(np.linspace(0, n, config.n_windows + 1)).astype(int)[1:]
    converged = diverged = False
    k = 0
    for stop in bounds:
        idx = config.thinned_indices(stop)
        start_iter = len(gaps)
        rises = 0
        converged = False
        while k < max_iter * config.n_windows:
            if not config.common_random_numbers and k > 0:
                xi, W = draw_inputs(config, mu0, drift.d, RngStream(config.seed).spawn(2, k))
            new = flow.copy()
            new[:, :stop + 1] = _picard_step(drift, flow, xi, W, config, stop)
            if stop < n:
                # beyond the current window the flow is carried by the zero-drift extension
                new[:, stop + 1:] = new[:, [stop]] + (W[:, :, stop + 1:] - W[:, :, [stop]]).transpose(0, 2, 1)
            gap = flow_distance(new, flow, idx, config.p)
            rises = rises + 1 if gaps[start_iter:] and gap > gaps[-1] else 0
            gaps.append(gap)
            flow = new
            flows.append(flow)
            k += 1
            if gap < tol:
                converged = True
                break
            if rises >= 5:
                diverged = True
                break
            if len(gaps) - start_iter >= max_iter:
                break
        windows.append((int(stop), start_iter, len(gaps)))
        if diverged:
            break
    gaps = np.asarray(gaps)
    ratios = gaps[1:] / np.where(gaps[:-1] > 0, gaps[:-1], np.nan) if len(gaps) > 1 else np.zeros(0)
    once_more = _picard_step(drift, flow, xi, W, config, n)
    residual = flow_distance(once_more, flow, config.thinned_indices(), config.p)
    if diverged:
        log.warning("Picard iteration diverged after %d iterations", len(gaps))
    return PicardReport(config.grid, flows, gaps, ratios, converged and not diverged, tol, residual,
                        diverged, windows)


def particle_system(drift, mu0: InitialLaw, config: SolverConfig, labels=None, stream=None) -> Ensemble:
    """Interacting particles: the drift is rebuilt from the empirical law at every step.

    ``labels`` optionally renames the per-particle random streams (particle
    ``j`` then uses stream ``labels[j]``); symmetric statistics do not depend on it.
    """
    xi, W = draw_inputs(config, mu0, drift.d, stream, labels)
    grid = config.grid
    t = grid.times
    N = config.n_particles
    X = zero_drift_flow(xi, W)
    D = np.zeros((N, drift.d))
    probe = getattr(drift, "kernel", getattr(drift, "base", None))
    if probe is None:
        probe = effective_field(drift, EmpiricalMeasure(xi), 0.0)
    if config.mollify_level is None and looks_rough(probe):
        raise ConfigurationError("drift has sub-Lipschitz content; set mollify_level")
    for i in range(grid.n_steps):
        b = effective_field(drift, EmpiricalMeasure(X[:, i]), t[i])
        if config.mollify_level is not None:
            b = mollify(b, config.mollify_level)
        if not b.is_zero():
            D = D + b.evaluate(X[:, i]) * grid.dt
        X[:, i + 1] += D
        if not np.all(np.isfinite(X[:, i + 1])):
            raise NumericalBlowUp(f"non-finite state after step {i}", step=i)
    noise = {"seed": config.seed, "labels": None if labels is None else [int(v) for v in labels]}
    return Ensemble(grid, X, mu0.tag, noise)


def frozen_ensemble(b, mu0: InitialLaw, config: SolverConfig) -> Ensemble:
    """Convenience wrapper: draw inputs from ``config`` and solve the frozen SDE."""
    xi, W = draw_inputs(config, mu0, b.d if isinstance(b, SpectralField) else None)
    ens = solve_frozen_sde(b, xi, W, config)
    ens.initial_law = mu0.tag
    ens.noise = {"seed": config.seed}
    return ens
