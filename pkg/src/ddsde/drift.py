"""Measure-dependent drifts ``B_t(x, mu)`` and their admissibility diagnostics.

Four variants are supported:

``ZeroDrift``
    ``B = 0``.
``ConvolutionalDrift``
    ``B_t(., mu) = h_t (kernel * mu + external)``.
``BilinearKernelDrift``
    ``B_t(x, mu) = h_t int b(x, y) mu(dy)`` with ``b`` a field on the 2d-torus
    in the coordinates ``(x, y)``.
``StatisticDrift``
    ``B_t(., mu) = h_t base(. - s(mu))`` where ``s`` is the mean of ``mu`` or
    its ``p``-th moment norm (the latter shifts along the first axis only).

``h_t`` is a non-negative :class:`TimeProfile`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError, DomainError
from .field import TWO_PI, SpectralField, besov_norm
from .measure import EmpiricalMeasure, convolve_field, moment_norm, wasserstein
from .rng import as_stream


@dataclass(frozen=True)
class TimeProfile:
    """Piecewise-linear non-negative scalar ``h_t``; a bare constant by default."""

    constant: float = 1.0
    times: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.times:
            if len(self.times) != len(self.values):
                raise ContractError("time profile needs as many values as times")
            if min(self.values) < 0:
                raise DomainError("time profile must be non-negative")
        elif self.constant < 0:
            raise DomainError("time profile must be non-negative")

    def __call__(self, t: float) -> float:
        if self.times:
            return float(np.interp(t, self.times, self.values))
        return float(self.constant)

    @property
    def is_constant(self) -> bool:
        return not self.times

    def scaled(self, c: float) -> "TimeProfile":
        if self.times:
            return TimeProfile(times=self.times, values=tuple(c * v for v in self.values))
        return TimeProfile(constant=c * self.constant)

    def to_dict(self):
        if self.times:
            return {"times": list(self.times), "values": list(self.values)}
        return self.constant

    @classmethod
    def from_dict(cls, doc) -> "TimeProfile":
        if doc is None:
            return cls()
        if isinstance(doc, (int, float)):
            return cls(constant=float(doc))
        return cls(times=tuple(map(float, doc["times"])), values=tuple(map(float, doc["values"])))


@dataclass(frozen=True)
class ZeroDrift:
    d: int = 1
    period: float = TWO_PI
    time_profile: TimeProfile = field(default_factory=TimeProfile)
    tag = "zero"

    def field_at(self, mu, t):
        return SpectralField.zeros(self.d, self.period)


@dataclass(frozen=True)
class ConvolutionalDrift:
    kernel: SpectralField
    external: SpectralField | None = None
    time_profile: TimeProfile = field(default_factory=TimeProfile)
    tag = "convolutional"

    def __post_init__(self):
        if self.external is not None:
            self.kernel._compatible(self.external)

    @property
    def d(self):
        return self.kernel.d

    @property
    def period(self):
        return self.kernel.period

    def field_at(self, mu, t):
        out = convolve_field(self.kernel, mu)
        if self.external is not None:
            out = out + self.external
        return out * self.time_profile(t)


@dataclass(frozen=True)
class BilinearKernelDrift:
    """``kernel`` is a ``2d``-dimensional field in the coordinates ``(x, y)``."""

    kernel: SpectralField
    time_profile: TimeProfile = field(default_factory=TimeProfile)
    tag = "bilinear"

    @property
    def d(self):
        return self.kernel.d // 2

    @property
    def period(self):
        return self.kernel.period

    def __post_init__(self):
        if self.kernel.d % 2:
            raise ContractError("bilinear kernel must live on a 2d-dimensional torus")

    def field_at(self, mu, t):
        d = self.d
        mx, my = self.kernel.modes[:, :d], self.kernel.modes[:, d:]
        # int exp(2 pi i <m_y, y>/L) mu(dy) = conj(characteristic)
        weights = np.conj(mu.characteristic(my, self.period))
        coeffs = self.kernel.coeffs * weights[:, None]
        uniq, inv = np.unique(mx, axis=0, return_inverse=True)
        summed = np.zeros((len(uniq), self.kernel.output_dim), dtype=complex)
        np.add.at(summed, inv.ravel(), coeffs)
        summed[np.all(uniq == 0, axis=1)] = summed[np.all(uniq == 0, axis=1)].real
        out = SpectralField(d, self.period, uniq, summed, self.kernel.output_dim, check=False)
        return out * self.time_profile(t)


@dataclass(frozen=True)
class StatisticDrift:
    base: SpectralField
    statistic: str = "mean"
    p: float = 2.0
    time_profile: TimeProfile = field(default_factory=TimeProfile)
    tag = "statistic"

    def __post_init__(self):
        if self.statistic not in ("mean", "moment"):
            raise ContractError(f"statistic must be 'mean' or 'moment', got {self.statistic!r}")

    @property
    def d(self):
        return self.base.d

    @property
    def period(self):
        return self.base.period

    def shift(self, mu) -> np.ndarray:
        if self.statistic == "mean":
            return mu.mean()
        s = np.zeros(self.d)
        s[0] = moment_norm(mu, self.p)
        return s

    def field_at(self, mu, t):
        return self.base.translate(self.shift(mu)) * self.time_profile(t)


DriftSpec = ZeroDrift | ConvolutionalDrift | BilinearKernelDrift | StatisticDrift


def effective_field(drift, mu: EmpiricalMeasure, t: float) -> SpectralField:
    """The frozen field ``b^mu_t = B_t(., mu)``."""
    if mu.dim != drift.d:
        raise ContractError(f"drift acts on R^{drift.d} but measure lives in R^{mu.dim}")
    return drift.field_at(mu, t)


def drift_to_dict(drift) -> dict:
    doc = {"variant": drift.tag, "time_profile": drift.time_profile.to_dict()}
    if isinstance(drift, ZeroDrift):
        doc.update(d=drift.d, L=drift.period)
    elif isinstance(drift, ConvolutionalDrift):
        doc["kernel"] = drift.kernel.to_dict()
        doc["external"] = None if drift.external is None else drift.external.to_dict()
    elif isinstance(drift, BilinearKernelDrift):
        doc["kernel"] = drift.kernel.to_dict()
    else:
        doc.update(base=drift.base.to_dict(), statistic=drift.statistic, p=drift.p)
    return doc


def drift_from_dict(doc: dict, field_loader=SpectralField.from_dict):
    """Inverse of :func:`drift_to_dict`; ``field_loader`` resolves embedded fields."""
    variant = doc.get("variant")
    profile = TimeProfile.from_dict(doc.get("time_profile"))
    if variant == "zero":
        return ZeroDrift(int(doc.get("d", 1)), float(doc.get("L", TWO_PI)), profile)
    if variant == "convolutional":
        ext = doc.get("external")
        return ConvolutionalDrift(field_loader(doc["kernel"]),
                                  None if ext is None else field_loader(ext), profile)
    if variant == "bilinear":
        return BilinearKernelDrift(field_loader(doc["kernel"]), profile)
    if variant == "statistic":
        return StatisticDrift(field_loader(doc["base"]), doc.get("statistic", "mean"),
                              float(doc.get("p", 2.0)), profile)
    raise ContractError(f"unknown drift variant {variant!r}")


# -- regime gate ---------------------------------------------------------------


@dataclass(frozen=True)
class RegimeParams:
    H: float
    alpha: float
    q: float = np.inf
    p: float = 1.0
    beta: float | None = None

    def __post_init__(self):
        if not 0 < self.H < 1:
            raise DomainError(f"H must lie in (0, 1), got {self.H}")


@dataclass(frozen=True)
class RegimeDecision:
    regime: str          # "holder" (H > 1/2), "besov" (H <= 1/2) or "inadmissible"
    admissible: bool
    threshold: float
    margin: float
    reason: str = ""


def regime_gate(params: RegimeParams) -> RegimeDecision:
    """Which well-posedness regime applies, with the margin ``alpha - threshold``.

    For ``H > 1/2`` the threshold is ``1 - 1/(2H)`` and the time-Hölder exponent
    ``beta`` (default ``H``) must be at least ``H``.  For ``H <= 1/2`` it is
    ``1 + 1/(H q) - 1/(2H)`` with ``q`` in ``(2, inf]``.
    """
    H, alpha = params.H, params.alpha
    if H > 0.5:
        threshold = 1.0 - 1.0 / (2.0 * H)
        margin = alpha - threshold
        beta = H if params.beta is None else params.beta
        if beta < H:
            return RegimeDecision("inadmissible", False, threshold, margin, f"beta={beta} < H={H}")
        ok = margin > 0
        return RegimeDecision("holder" if ok else "inadmissible", ok, threshold, margin,
                              "" if ok else "alpha below threshold")
    q = params.q
    inv_q = 0.0 if np.isinf(q) else 1.0 / q
    threshold = 1.0 + inv_q / H - 1.0 / (2.0 * H)
    margin = alpha - threshold
    if not q > 2:
        return RegimeDecision("inadmissible", False, threshold, margin, f"q={q} not in (2, inf]")
    ok = margin > 0
    return RegimeDecision("besov" if ok else "inadmissible", ok, threshold, margin,
                          "" if ok else "alpha below threshold")


# -- empirical class membership --------------------------------------------------


@dataclass
class ClassReport:
    growth_ratio: float          # sup ||B_t(mu)||_{B^alpha} / h_t
    lipschitz_ratio: float       # sup ||B_t(mu) - B_t(nu)||_{B^(alpha-1)} / (h_t d_p)
    n_probes: int
    sup_bound: float | None = None          # Hölder class: sup |B|
    x_holder: float | None = None           # |B(x) - B(y)| / |x - y|^alpha
    measure_holder: float | None = None     # |B(x, mu) - B(x, nu)| / d_p^alpha
    time_holder: float | None = None        # |B_t - B_s| / |t - s|^(alpha beta)
    per_probe: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        vals = [self.growth_ratio, self.lipschitz_ratio]
        return all(np.isfinite(v) for v in vals)

    @property
    def constant(self) -> float:
        return max(self.growth_ratio, self.lipschitz_ratio)


def probe_pairs(d: int, rng, n_pairs: int = 20, n_points: int = 32) -> list:
    """Probe measure pairs: point masses, Gaussian clouds at several scales and
    two-point clouds separated by ``1e-3 ... 1``."""
    rng = as_stream(rng)
    pairs = []
    scales = [0.1, 0.5, 1.0, 2.0]
    seps = [1e-3, 1e-2, 1e-1, 1.0]
    i = 0
    while len(pairs) < n_pairs:
        gen = rng.spawn(i).generator()
        kind = i % 3
        if kind == 0:
            x, y = gen.normal(size=d), gen.normal(size=d)
            pairs.append((EmpiricalMeasure.dirac(x), EmpiricalMeasure.dirac(y)))
        elif kind == 1:
            s = scales[(i // 3) % len(scales)]
            pairs.append((EmpiricalMeasure(s * gen.normal(size=(n_points, d))),
                          EmpiricalMeasure(s * gen.normal(size=(n_points, d)) + gen.normal(size=d) * s)))
        else:
            h = seps[(i // 3) % len(seps)]
            base = gen.normal(size=(2, d))
            direction = gen.normal(size=d)
            direction /= np.linalg.norm(direction)
            pairs.append((EmpiricalMeasure(base), EmpiricalMeasure(base + h * direction)))
        i += 1
    return pairs


def check_class(drift, params: RegimeParams, probe_measures: Sequence, times: Sequence[float] = (0.0,),
                oversample: int = 4) -> ClassReport:
    """Empirical membership certificate for the drift classes.

    For every probe pair ``(mu, nu)`` and time ``t`` the two ratios

        ||B_t(mu)||_{B^alpha} / h_t   and
        ||B_t(mu) - B_t(nu)||_{B^(alpha-1)} / (h_t d_p(mu, nu))

    are computed; their suprema are reported.  For ``H > 1/2`` the Hölder-class
    terms are also measured, each with its own constant.
    """
    if len(probe_measures) < 10:
        raise ContractError("check_class needs at least 10 probe pairs")
    alpha, p = params.alpha, params.p
    growth = lip = 0.0
    per_probe = []
    for t in times:
        h = drift.time_profile(t)
        for mu, nu in probe_measures:
            bmu = effective_field(drift, mu, t)
            bnu = effective_field(drift, nu, t)
            dist = wasserstein(mu, nu, p)
            g = besov_norm(bmu, alpha, oversample) / h if h > 0 else 0.0
            diff = besov_norm(bmu - bnu, alpha - 1, oversample)
            r = diff / (h * dist) if h > 0 and dist > 0 else 0.0
            growth, lip = max(growth, g), max(lip, r)
            per_probe.append({"t": float(t), "growth": g, "lipschitz": r, "distance": dist})
    report = ClassReport(growth, lip, len(probe_measures), per_probe=per_probe)
    if params.H > 0.5:
        _holder_terms(drift, params, probe_measures, times, report)
    return report


def _holder_terms(drift, params, probes, times, report, n_grid=256):
    alpha, p = params.alpha, params.p
    beta = params.H if params.beta is None else params.beta
    sup_b = x_hold = m_hold = t_hold = 0.0
    for mu, nu in probes:
        fields = [effective_field(drift, mu, t) for t in times]
        for f in fields:
            if f.d == 1:
                x = np.linspace(0.0, f.period, n_grid, endpoint=False)
                v = f.evaluate(x[:, None])
                sup_b = max(sup_b, float(np.max(np.abs(v))))
                dx = np.abs(x[:, None] - x[None, :])
                dx = np.minimum(dx, f.period - dx)
                np.fill_diagonal(dx, np.inf)
                dv = np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)
                x_hold = max(x_hold, float(np.max(dv / dx**alpha)))
            else:
                sup_b = max(sup_b, f.sup_norm())
        dist = wasserstein(mu, nu, p)
        if dist > 0:
            for t in times:
                diff = effective_field(drift, mu, t) - effective_field(drift, nu, t)
                m_hold = max(m_hold, diff.sup_norm() / dist**alpha)
        for (t0, f0), (t1, f1) in zip(zip(times, fields), zip(times[1:], fields[1:])):
            t_hold = max(t_hold, (f1 - f0).sup_norm() / abs(t1 - t0) ** (alpha * beta))
    report.sup_bound, report.x_holder = sup_b, x_hold
    report.measure_holder, report.time_holder = m_hold, t_hold
