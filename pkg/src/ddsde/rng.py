"""Counter-based, splittable random streams.

Every stream is identified by a root seed plus a tuple of integer keys
(e.g. ``(path_index, component)``).  The underlying bit generator is Philox,
keyed through :class:`numpy.random.SeedSequence`, so the numbers drawn for a
given key never depend on which other keys were used before or in which order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """A node in a tree of independent random streams.

    Parameters
    ----------
    seed : int
        Root seed (any non-negative integer, 64-bit in practice).
    key : tuple of int
        Position of this node in the stream tree.

    Examples
    --------
    >>> root = RngStream(7)
    >>> a = root.spawn(3).generator().standard_normal()
    >>> b = RngStream(7, (3,)).generator().standard_normal()
    >>> a == b
    True
    """

    seed: int
    key: tuple[int, ...] = ()

    def __post_init__(self):
        if int(self.seed) < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "key", tuple(int(k) for k in self.key))

    def spawn(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(keys))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(seq))

    def normal(self, size) -> np.ndarray:
        return self.generator().standard_normal(size)


def as_stream(rng) -> RngStream:
    """Coerce an int seed or an existing stream to :class:`RngStream`."""
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError(f"expected RngStream or int seed, got {type(rng).__name__}")
