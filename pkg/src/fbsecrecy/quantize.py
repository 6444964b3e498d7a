"""b-bit feedback quantizer: thresholds, feedback indices and cell masses.

A quantizer with ``Q = 2**b`` thresholds ``0 < t_1 < ... < t_Q`` splits the
gain axis into ``Q + 1`` left-closed cells.  Cell 0 is ``[0, t_1)`` and the
top cell ``[t_Q, inf)`` is unbounded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dist import FadingDistribution
from .errors import DomainError

__all__ = [
    "Quantizer",
    "index_of",
    "cell_probabilities",
    "equiprobable_quantizer",
    "embed_quantizer",
]


@dataclass(frozen=True)
class Quantizer:
    thresholds: tuple
    b: int

    def __post_init__(self):
        t = tuple(float(x) for x in self.thresholds)
        object.__setattr__(self, "thresholds", t)
        if int(self.b) != self.b or self.b < 1:
            raise DomainError("feedback bits b must be a positive integer")
        if len(t) != 2 ** self.b:
            raise DomainError(f"expected {2 ** self.b} thresholds for b={self.b}, got {len(t)}")
        arr = np.asarray(t)
        if not np.all(np.isfinite(arr)) or arr[0] <= 0 or np.any(np.diff(arr) <= 0):
            raise DomainError("thresholds must be finite, positive and strictly increasing")

    @classmethod
    def from_thresholds(cls, thresholds) -> "Quantizer":
        Q = len(thresholds)
        b = int(round(np.log2(Q))) if Q > 0 else 0
        if Q < 2 or 2 ** b != Q:
            raise DomainError(f"number of thresholds must be a power of two >= 2, got {Q}")
        return cls(tuple(thresholds), b)

    @property
    def Q(self) -> int:
        return len(self.thresholds)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.thresholds)

    def edges(self) -> np.ndarray:
        """Cell boundaries ``(0, t_1, ..., t_Q, inf)``."""
        return np.concatenate(([0.0], self.array, [np.inf]))

    def index_of(self, gamma):
        return index_of(self, gamma)

    def to_list(self) -> list:
        return list(self.thresholds)


def index_of(quant: Quantizer, gamma):
    """Feedback index ``q`` with ``t_q <= gamma < t_{q+1}``; 0 below ``t_1``."""
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise DomainError("gain must be non-negative")
    idx = np.searchsorted(quant.array, g, side="right")
    return int(idx) if idx.ndim == 0 else idx


def cell_probabilities(quant: Quantizer, dist: FadingDistribution) -> np.ndarray:
    """Probabilities of the ``Q + 1`` cells under ``dist``."""
    e = quant.edges()
    return dist.mass(e[:-1], e[1:])


def equiprobable_quantizer(dist: FadingDistribution, b: int) -> Quantizer:
    """Thresholds at the ``q / (Q + 1)`` quantiles, so every cell has mass ``1 / (Q + 1)``."""
    if int(b) != b or b < 1:
        raise DomainError("feedback bits b must be a positive integer")
    Q = 2 ** int(b)
    levels = np.arange(1, Q + 1)
    # logit form keeps the upper thresholds accurate for large Q
    r = np.log(levels) - np.log(Q + 1 - levels)
    return Quantizer(tuple(dist.from_logit(r)), int(b))


def embed_quantizer(quant: Quantizer, b: int, dist: FadingDistribution) -> Quantizer:
    """Refine ``quant`` to ``b`` bits, keeping every existing threshold.

    Each transmitting cell ``q >= 1`` is split into ``2**(b - b_old)``
    pieces of equal mass, so any power policy of the coarse quantizer
    is reproduced (or improved) on the fine one.
    """
    if b < quant.b:
        raise DomainError("cannot embed into a coarser quantizer")
    if b == quant.b:
        return quant
    parts = 2 ** (b - quant.b)
    e = quant.edges()
    lo_r = dist.logit(e[1:-1])
    new = []
    for q in range(quant.Q):
        lo = e[q + 1]
        new.append(lo)
        s_lo = float(dist.sf(lo))
        s_hi = float(dist.sf(e[q + 2])) if np.isfinite(e[q + 2]) else 0.0
        for j in range(1, parts):
            s = s_lo - (s_lo - s_hi) * j / parts
            new.append(float(dist.isf(s)) if lo_r[q] > 0 else float(dist.quantile(1.0 - s)))
    return Quantizer(tuple(new), int(b))
