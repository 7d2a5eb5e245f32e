"""Band-limited vector fields on the periodic torus, organized by dyadic blocks.

A :class:`SpectralField` is the real trigonometric polynomial

    f(x) = sum_m c_m exp(2 pi i <m, x> / L),    c_{-m} = conj(c_m),

with integer frequency vectors ``m``.  Frequency ``m`` belongs to the
Littlewood-Paley block ``n = -1`` if ``m = 0`` and otherwise to the unique
``n >= 0`` with ``2^(n-1) < |m| <= 2^n``.  With this partition

    ||f||_{B^alpha} = sup_n 2^(alpha n) ||Delta_n f||_inf,

where each block supremum is taken on a sampling grid at four times the block's
Nyquist rate and then polished by a local maximization of the exact trig sum.

The torus stands in for R^d: the period should be large compared with the
range explored by the dynamics (:func:`default_period`).  Distributions
(``alpha < 0``) are represented by their truncation at a finite level.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import optimize

from .errors import ContractError
from .rng import as_stream

TWO_PI = 2.0 * np.pi


def default_period(horizon: float, hurst: float) -> float:
    """Torus length ``16 * T^H``, well beyond the typical fBm excursion."""
    return 16.0 * horizon**hurst


def mode_levels(modes) -> np.ndarray:
    """Dyadic block index of each integer frequency vector (rows of ``modes``)."""
    modes = np.asarray(modes, dtype=np.int64)
    if modes.ndim < 2:
        modes = modes.reshape(len(modes), -1) if modes.size else modes.reshape(0, 1)
    sq = np.sum(modes * modes, axis=1)
    out = np.full(sq.shape, -1, dtype=np.int64)
    for i, s in enumerate(sq):
        if s > 0:
            # 4^(n-1) < s <= 4^n
            out[i] = (int(s - 1).bit_length() + 1) // 2
    return out


def _lattice_block(n: int, d: int) -> np.ndarray:
    """All integer vectors of block ``n``, half-space representatives only."""
    if n < 0:
        return np.zeros((0, d), dtype=np.int64)
    r = 1 << n
    axes = [np.arange(-r, r + 1)] * d
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    pts = pts[mode_levels(pts) == n]
    return pts[_positive_half(pts)]


def _positive_half(modes: np.ndarray) -> np.ndarray:
    """Mask selecting one representative of each ``{m, -m}`` pair (``m != 0``)."""
    mask = np.zeros(len(modes), dtype=bool)
    undecided = np.ones(len(modes), dtype=bool)
    for j in range(modes.shape[1]):
        mask |= undecided & (modes[:, j] > 0)
        undecided &= modes[:, j] == 0
    return mask


@dataclass(frozen=True)
class LittlewoodPaleyBlock:
    level: int
    modes: np.ndarray
    coeffs: np.ndarray


class SpectralField:
    """Real band-limited field on the torus ``[0, L)^d`` with values in R^output_dim.

    Parameters
    ----------
    d : int
        Spatial dimension (1 or 2).
    period : float
        Torus length ``L``.
    modes : array_like of int, shape (M, d)
        Frequencies; together with ``coeffs`` they must be closed under
        ``(m, c) -> (-m, conj(c))``.
    coeffs : array_like of complex, shape (M,) or (M, output_dim)
    output_dim : int, optional
        Inferred from ``coeffs`` when omitted.

    Notes
    -----
    Instances are immutable.  Use :meth:`from_half` to build a field from one
    representative per conjugate pair.
    """

    def __init__(self, d, period, modes, coeffs, output_dim=None, *, check=True):
        if d not in (1, 2):
            raise ContractError(f"only d = 1 or 2 is supported, got {d}")
        modes = np.asarray(modes, dtype=np.int64).reshape(-1, d)
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim == 1:
            coeffs = coeffs[:, None]
        if output_dim is None:
            output_dim = coeffs.shape[1] if coeffs.size else 1
        coeffs = coeffs.reshape(len(modes), output_dim)
        order = np.lexsort(modes.T[::-1]) if len(modes) else np.arange(0)
        modes, coeffs = modes[order], coeffs[order]
        if check:
            _check_modes(modes, coeffs)
        self.d = int(d)
        self.period = float(period)
        self.output_dim = int(output_dim)
        self.modes = modes
        self.coeffs = coeffs
        self.modes.setflags(write=False)
        self.coeffs.setflags(write=False)

    # -- construction -----------------------------------------------------
    @classmethod
    def from_half(cls, d, period, modes, coeffs, constant=None, output_dim=None):
        """Build from non-zero half-space modes plus an optional constant term."""
        modes = np.asarray(modes, dtype=np.int64).reshape(-1, d)
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim == 1:
            coeffs = coeffs[:, None]
        if output_dim is None:
            output_dim = coeffs.shape[1] if coeffs.size else (np.size(constant) if constant is not None else 1)
        coeffs = coeffs.reshape(len(modes), output_dim)
        if np.any(np.all(modes == 0, axis=1)):
            raise ContractError("the zero mode must be passed as `constant`")
        all_modes = [modes, -modes]
        all_coeffs = [coeffs, np.conj(coeffs)]
        if constant is not None:
            c0 = np.atleast_1d(np.asarray(constant, dtype=float)).astype(complex)
            all_modes.append(np.zeros((1, d), dtype=np.int64))
            all_coeffs.append(c0.reshape(1, output_dim))
        return cls(d, period, np.concatenate(all_modes), np.concatenate(all_coeffs), output_dim)

    @classmethod
    def zeros(cls, d=1, period=TWO_PI, output_dim=1):
        return cls(d, period, np.zeros((0, d)), np.zeros((0, output_dim)), output_dim)

    @classmethod
    def constant(cls, value, d=1, period=TWO_PI):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(d, period, np.zeros((1, d)), value[None, :].astype(complex), value.size)

    @classmethod
    def single_mode(cls, m, amplitude, d=1, period=TWO_PI, kind="cos"):
        """``amplitude * cos(2 pi <m,x>/L)`` or ``amplitude * sin(...)``."""
        m = np.atleast_1d(np.asarray(m, dtype=np.int64))
        c = amplitude / 2 if kind == "cos" else -1j * amplitude / 2
        if not np.any(m < 0) and not np.all(m == 0) and _positive_half(m[None, :])[0]:
            return cls.from_half(d, period, m[None, :], [c])
        return cls.from_half(d, period, -m[None, :], [np.conj(c)])

    # -- structure --------------------------------------------------------
    @cached_property
    def levels(self) -> np.ndarray:
        return mode_levels(self.modes)

    @property
    def max_level(self) -> int:
        return int(self.levels.max()) if len(self.modes) else -1

    @property
    def blocks(self) -> list[LittlewoodPaleyBlock]:
        out = []
        for n in np.unique(self.levels):
            sel = self.levels == n
            out.append(LittlewoodPaleyBlock(int(n), self.modes[sel], self.coeffs[sel]))
        return out

    def block(self, n: int) -> "SpectralField":
        sel = self.levels == n
        return SpectralField(self.d, self.period, self.modes[sel], self.coeffs[sel], self.output_dim, check=False)

    def restrict(self, lo: int = -1, hi: int | None = None) -> "SpectralField":
        hi = self.max_level if hi is None else hi
        sel = (self.levels >= lo) & (self.levels <= hi)
        return SpectralField(self.d, self.period, self.modes[sel], self.coeffs[sel], self.output_dim, check=False)

    @classmethod
    def from_blocks(cls, d, period, blocks, output_dim=1):
        if not blocks:
            return cls.zeros(d, period, output_dim)
        modes = np.concatenate([b.modes for b in blocks])
        coeffs = np.concatenate([b.coeffs for b in blocks])
        return cls(d, period, modes, coeffs, output_dim)

    @cached_property
    def _half(self):
        pos = _positive_half(self.modes)
        zero = np.all(self.modes == 0, axis=1)
        c0 = self.coeffs[zero].sum(axis=0).real
        return self.modes[pos], self.coeffs[pos], c0

    # -- arithmetic -------------------------------------------------------
    def _compatible(self, other):
        if (self.d, self.output_dim) != (other.d, other.output_dim) or self.period != other.period:
            raise ContractError("fields differ in dimension, output dimension or period")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._compatible(other)
        modes = np.concatenate([self.modes, other.modes])
        coeffs = np.concatenate([self.coeffs, other.coeffs])
        uniq, inv = np.unique(modes, axis=0, return_inverse=True)
        summed = np.zeros((len(uniq), self.output_dim), dtype=complex)
        np.add.at(summed, inv.ravel(), coeffs)
        return SpectralField(self.d, self.period, uniq, summed, self.output_dim, check=False)

    def __neg__(self):
        return SpectralField(self.d, self.period, self.modes, -self.coeffs, self.output_dim, check=False)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        return SpectralField(self.d, self.period, self.modes, self.coeffs * float(scalar), self.output_dim, check=False)

    __rmul__ = __mul__

    def scale_coeffs(self, factors) -> "SpectralField":
        """Multiply each mode's coefficient by ``factors[i]`` (complex, conjugate-consistent)."""
        factors = np.asarray(factors, dtype=complex).reshape(-1, 1)
        return SpectralField(self.d, self.period, self.modes, self.coeffs * factors, self.output_dim, check=False)

    def translate(self, shift) -> "SpectralField":
        """The field ``x -> f(x - shift)``."""
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (self.d,))
        phase = np.exp(-1j * TWO_PI / self.period * (self.modes @ shift))
        return self.scale_coeffs(phase)

    def gradient(self) -> "SpectralField":
        """Jacobian field, output ``output_dim * d`` (row-major ``[out][axis]``)."""
        k = 1j * TWO_PI / self.period * self.modes
        coeffs = (self.coeffs[:, :, None] * k[:, None, :]).reshape(len(self.modes), -1)
        return SpectralField(self.d, self.period, self.modes, coeffs, self.output_dim * self.d, check=False)

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    # -- evaluation -------------------------------------------------------
    def evaluate(self, x) -> np.ndarray:
        """Exact evaluation; ``x`` of shape ``(d,)`` or ``(N, d)`` (``(N,)`` when d = 1).

        Returns shape ``(output_dim,)`` for a single point, else ``(N, output_dim)``.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1 and (self.d > 1 or x.size == 1) and x.shape[0] == self.d
        if x.ndim == 0:
            single = True
        pts = x.reshape(-1, self.d)
        modes, coeffs, c0 = self._half
        if self.d == 1 and len(modes) >= 32 and modes.max() <= 2 * len(modes):
            out = self._evaluate_dense_1d(pts[:, 0], modes[:, 0], coeffs, c0)
            return out[0] if single else out
        out = np.empty((len(pts), self.output_dim))
        chunk = max(1, 2_000_000 // max(len(modes), 1))
        scale = TWO_PI / self.period
        for lo in range(0, len(pts), chunk):
            p = pts[lo:lo + chunk]
            if len(modes):
                e = np.exp(1j * scale * (p @ modes.T))
                out[lo:lo + chunk] = c0 + 2.0 * (e @ coeffs).real
            else:
                out[lo:lo + chunk] = c0
        return out[0] if single else out

    __call__ = evaluate

    def _evaluate_dense_1d(self, x, m, coeffs, c0, run: int = 32):
        # exp(i k x)^j by short products restarted from an exact exponential
        # every `run` powers; rounding stays at a few dozen ulps
        top = int(m.max())
        dense = np.zeros((top, self.output_dim), dtype=complex)
        dense[m - 1] = coeffs
        theta = (TWO_PI / self.period) * x
        out = np.empty((len(x), self.output_dim))
        chunk = max(1, 1_000_000 // top)
        steps = np.exp(1j * theta)
        for lo in range(0, len(x), chunk):
            th, z = theta[lo:lo + chunk], steps[lo:lo + chunk]
            pw = np.empty((len(th), top), dtype=complex)
            for start in range(0, top, run):
                width = min(run, top - start)
                base = np.exp(1j * (start + 1) * th)
                blk = np.repeat(z[:, None], width, axis=1)
                blk[:, 0] = base
                pw[:, start:start + width] = np.cumprod(blk, axis=1)
            out[lo:lo + chunk] = c0 + 2.0 * (pw @ dense).real
        return out

    def grid_values(self, size: int) -> np.ndarray:
        """Values on the uniform grid with ``size`` points per axis, shape ``(size,)*d + (output_dim,)``."""
        if len(self.modes) and np.max(np.abs(self.modes)) * 2 >= size:
            raise ContractError(f"grid of {size} points aliases modes up to {np.max(np.abs(self.modes))}")
        spec = np.zeros((size,) * self.d + (self.output_dim,), dtype=complex)
        idx = tuple((self.modes % size).T)
        np.add.at(spec, idx, self.coeffs)
        vals = np.fft.ifftn(spec, axes=tuple(range(self.d))) * size**self.d
        return vals.real

    def sup_norm(self, oversample: int = 4, polish: bool = True) -> float:
        """Supremum of the Euclidean norm of ``f`` over the torus."""
        if not len(self.modes) or self.is_zero():
            return 0.0
        top = int(np.max(np.abs(self.modes)))
        size = _grid_size(top, oversample)
        vals = self.grid_values(size)
        mag = np.linalg.norm(vals, axis=-1)
        best = float(mag.max())
        if not polish or top == 0:
            return best
        h = self.period / size
        flat = np.argsort(mag, axis=None)[-3:]
        for idx in flat:
            x0 = np.array(np.unravel_index(idx, mag.shape), dtype=float) * h
            best = max(best, self._local_max(x0, h))
        return best

    def _local_max(self, x0, h) -> float:
        def neg(x):
            return -float(np.linalg.norm(self.evaluate(np.atleast_1d(x).reshape(1, self.d))[0]))

        if self.d == 1:
            res = optimize.minimize_scalar(neg, bounds=(x0[0] - h, x0[0] + h), method="bounded",
                                           options={"xatol": h * 1e-6})
        else:
            res = optimize.minimize(neg, x0, method="Nelder-Mead",
                                    options={"xatol": h * 1e-6, "fatol": 1e-14})
        return -float(res.fun)

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        blocks = []
        for blk in self.blocks:
            modes = []
            for m, c in zip(blk.modes, blk.coeffs):
                k = [int(v) for v in m]
                if self.output_dim == 1:
                    modes.append({"k": k, "re": float(c[0].real), "im": float(c[0].imag)})
                else:
                    modes.append({"k": k, "re": [float(v) for v in c.real], "im": [float(v) for v in c.imag]})
            blocks.append({"n": blk.level, "modes": modes})
        return {"d": self.d, "L": self.period, "output_dim": self.output_dim, "blocks": blocks}

    @classmethod
    def from_dict(cls, doc: dict) -> "SpectralField":
        try:
            d, L, out = int(doc["d"]), float(doc["L"]), int(doc.get("output_dim", 1))
            modes, coeffs = [], []
            for blk in doc["blocks"]:
                for entry in blk["modes"]:
                    modes.append(entry["k"])
                    coeffs.append(np.asarray(entry["re"], dtype=float) + 1j * np.asarray(entry["im"], dtype=float))
        except (KeyError, TypeError) as exc:
            raise ContractError(f"malformed field document: {exc!r}") from exc
        field = cls(d, L, np.asarray(modes, dtype=np.int64).reshape(-1, d),
                    np.asarray(coeffs, dtype=complex).reshape(-1, out), out)
        for blk in doc["blocks"]:
            lv = mode_levels(np.asarray([e["k"] for e in blk["modes"]], dtype=np.int64).reshape(-1, d))
            if np.any(lv != int(blk["n"])):
                raise ContractError(f"block {blk['n']} lists modes outside its dyadic annulus")
        return field

    def __eq__(self, other):
        return (isinstance(other, SpectralField) and self.d == other.d and self.period == other.period
                and self.output_dim == other.output_dim and np.array_equal(self.modes, other.modes)
                and np.array_equal(self.coeffs, other.coeffs))

    __hash__ = None

    def __repr__(self):
        return (f"SpectralField(d={self.d}, L={self.period:g}, output_dim={self.output_dim}, "
                f"modes={len(self.modes)}, max_level={self.max_level})")


def _check_modes(modes, coeffs):
    if len(modes) == 0:
        return
    if len(np.unique(modes, axis=0)) != len(modes):
        raise ContractError("duplicate frequency vectors")
    lookup = {tuple(m): i for i, m in enumerate(modes)}
    for i, m in enumerate(modes):
        j = lookup.get(tuple(-m))
        if j is None or not np.allclose(coeffs[j], np.conj(coeffs[i]), rtol=1e-12, atol=1e-300):
            raise ContractError(f"coefficients are not conjugate-symmetric at mode {tuple(m)}")
    zero = np.all(modes == 0, axis=1)
    if np.any(np.abs(coeffs[zero].imag) > 0):
        raise ContractError("constant mode must be real")


def _grid_size(top_frequency: int, oversample: int) -> int:
    need = max(8, 2 * oversample * max(top_frequency, 1))
    return 1 << int(np.ceil(np.log2(need)))


def block_sup_norms(field: SpectralField, oversample: int = 4, polish: bool = True) -> dict[int, float]:
    """``{n: ||Delta_n f||_inf}`` over the non-empty blocks of ``field``."""
    return {blk.level: field.block(blk.level).sup_norm(oversample, polish) for blk in field.blocks}


def besov_norm(field: SpectralField, alpha: float, oversample: int = 4, polish: bool = True) -> float:
    """``sup_n 2^(alpha n) ||Delta_n f||_inf`` (the ``B^alpha_{inf,inf}`` norm)."""
    norms = block_sup_norms(field, oversample, polish)
    if not norms:
        return 0.0
    return max(2.0 ** (alpha * n) * v for n, v in norms.items())


def mollify(field: SpectralField, level_cut: int) -> SpectralField:
    """Sharp dyadic frequency cutoff: drop every block above ``level_cut``."""
    if level_cut < -1:
        raise ValueError(f"level_cut must be >= -1, got {level_cut}")
    if level_cut >= field.max_level:
        return field
    return field.restrict(-1, level_cut)


def evaluate(field: SpectralField, x) -> np.ndarray:
    return field.evaluate(x)


def synth_besov_field(
    alpha: float,
    max_level: int,
    d: int,
    rng,
    *,
    period: float = TWO_PI,
    output_dim: int = 1,
    normalize: bool = True,
    zero_mean: bool = False,
    min_level: int = -1,
) -> SpectralField:
    """Random field with ``||Delta_n f||_inf = u_n 2^(-alpha n)``, ``u_n ~ U[1/2, 1]``.

    Every block from ``min_level`` to ``max_level`` is filled with unit-modulus
    coefficients of independent uniform phase, then rescaled to its target
    supremum.  Block ``n`` uses the stream ``rng.spawn(n + 1)``.  When
    ``normalize`` is true the result has Besov norm exactly 1 (up to rounding).
    """
    if max_level < 1:
        raise ValueError(f"max_level must be >= 1, got {max_level}")
    rng = as_stream(rng)
    lo = 0 if zero_mean else min_level
    blocks = []
    for n in range(max(lo, -1), max_level + 1):
        gen = rng.spawn(n + 1).generator()
        scale = gen.uniform(0.5, 1.0)
        if n == -1:
            sign = gen.choice([-1.0, 1.0], size=output_dim)
            blk = SpectralField.constant(sign, d=d, period=period)
        else:
            modes = _lattice_block(n, d)
            phases = gen.uniform(0.0, TWO_PI, size=(len(modes), output_dim))
            blk = SpectralField.from_half(d, period, modes, np.exp(1j * phases), output_dim=output_dim)
        sup = blk.sup_norm()
        blk = blk * (scale * 2.0 ** (-alpha * n) / sup)
        blocks.append(blk)
    out = blocks[0]
    for blk in blocks[1:]:
        out = out + blk
    if normalize:
        out = out * (1.0 / besov_norm(out, alpha))
    return out
