"""Block-fading Monte Carlo of the feedback protocols.

Every block draws the receivers' and the eavesdropper's gains, each
receiver reports its quantizer cell, and the transmitter serves one cell:

* common message: the smallest reported index (weakest receiver);
* independent messages: the largest reported index, ties among receivers
  broken uniformly at random.

The served cell ``q`` fixes power ``P_q`` and codeword rate
``ln(1 + t_q P_q)`` (zero for cell 0); the block contributes the secrecy
increment ``max(0, rate - ln(1 + g_e P_q))``.

Randomness comes from Philox streams keyed by ``(seed, terminal, chunk)``
with terminals ``0..K-1`` for the receivers, ``K`` for the eavesdropper and
``K + 1`` for tie-breaking, so results do not depend on how chunks are
scheduled across workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .dist import FadingDistribution, stream
from .errors import DomainError
from .opt import PowerPolicy
from .quantize import Quantizer, index_of

__all__ = [
    "SimConfig",
    "BlockFadingTrace",
    "SimOutcome",
    "simulate",
    "simulate_common",
    "simulate_sum",
    "replay",
    "empirical_cell_occupancy",
    "occupancy_test",
    "power_estimate",
]

CHUNK = 2 ** 14


@dataclass(frozen=True)
class SimConfig:
    L: int
    quantizer: Quantizer
    powers: tuple
    dists_main: tuple
    dist_e: FadingDistribution
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.powers, PowerPolicy):
            object.__setattr__(self, "powers", self.powers.powers)
        object.__setattr__(self, "powers", tuple(float(p) for p in self.powers))
        if isinstance(self.dists_main, FadingDistribution):
            object.__setattr__(self, "dists_main", (self.dists_main,))
        object.__setattr__(self, "dists_main", tuple(self.dists_main))
        if int(self.L) != self.L or self.L < 1:
            raise DomainError("number of blocks L must be a positive integer")
        if not self.dists_main:
            raise DomainError("at least one receiver is required")
        if len(self.powers) != self.quantizer.Q + 1:
            raise DomainError(f"expected {self.quantizer.Q + 1} powers, got {len(self.powers)}")
        if any(p < 0 or not np.isfinite(p) for p in self.powers):
            raise DomainError("powers must be finite and non-negative")
        if int(self.workers) < 1:
            raise DomainError("workers must be at least 1")

    @property
    def K(self) -> int:
        return len(self.dists_main)


@dataclass(frozen=True)
class BlockFadingTrace:
    gains: np.ndarray      # (L, K) receiver gains
    gamma_e: np.ndarray    # (L,)
    indices: np.ndarray    # (L, K) reported cells
    selected: np.ndarray   # (L,) served cell
    served: np.ndarray     # (L,) served receiver
    power: np.ndarray
    rate: np.ndarray
    increment: np.ndarray
    Q: int
    selection: str

    @property
    def L(self) -> int:
        return self.gamma_e.size

    @property
    def K(self) -> int:
        return self.gains.shape[1]

    def header(self) -> list:
        return (["block"] + [f"gamma_{k + 1}" for k in range(self.K)]
                + ["gamma_e", "q_sel", "power", "rate", "increment"])

    def to_csv(self, path_or_file) -> None:
        """Write one row per block; floats use 17 significant digits (lossless)."""
        cols = [np.arange(self.L)] + [self.gains[:, k] for k in range(self.K)]
        cols += [self.gamma_e, self.selected, self.power, self.rate, self.increment]
        fmt = ["%d"] + ["%.17g"] * (self.K + 1) + ["%d", "%.17g", "%.17g", "%.17g"]
        table = np.empty((self.L, len(cols)), dtype=object)
        for j, c in enumerate(cols):
            table[:, j] = c
        np.savetxt(path_or_file, table, fmt=fmt, delimiter=",", header=",".join(self.header()), comments="")


class SimOutcome(NamedTuple):
    trace: BlockFadingTrace
    rate_estimate: float
    std_error: float


def _serve(gains, gamma_e, tie_u, tau, P, selection):
    """Protocol for one batch of blocks; pure function of its inputs."""
    idx = np.searchsorted(tau, gains, side="right")
    if selection == "min":
        served = np.argmin(idx, axis=1)
        q = idx[np.arange(idx.shape[0]), served]
    else:
        q = idx.max(axis=1)
        ties = idx == q[:, None]
        count = ties.sum(axis=1)
        pick = np.minimum((tie_u * count).astype(np.int64), count - 1)
        # position of the pick-th tied receiver
        rank = np.cumsum(ties, axis=1) - 1
        served = np.argmax(ties & (rank == pick[:, None]), axis=1)
    rate_table = np.concatenate(([0.0], np.log1p(tau * P[1:])))
    power = P[q]
    rate = rate_table[q]
    increment = np.maximum(0.0, rate - np.log1p(gamma_e * power))
    return idx, q, served, power, rate, increment


def _chunk(cfg: SimConfig, c: int, selection: str):
    lo = c * CHUNK
    n = min(CHUNK, cfg.L - lo)
    K = cfg.K
    gains = np.empty((n, K))
    for k, d in enumerate(cfg.dists_main):
        gains[:, k] = d.sample(stream(cfg.seed, k, c), n)
    ge = cfg.dist_e.sample(stream(cfg.seed, K, c), n)
    tie_u = stream(cfg.seed, K + 1, c).random(n)
    tau = cfg.quantizer.array
    P = np.asarray(cfg.powers)
    return (gains, ge) + _serve(gains, ge, tie_u, tau, P, selection)


def simulate(cfg: SimConfig, selection: str) -> SimOutcome:
    """Run ``cfg.L`` blocks under the ``"min"`` or ``"max"`` selection rule."""
    if selection not in ("min", "max"):
        raise DomainError(f"unknown selection rule {selection!r}")
    n_chunks = -(-cfg.L // CHUNK)
    if cfg.workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(lambda c: _chunk(cfg, c, selection), range(n_chunks)))
    else:
        parts = [_chunk(cfg, c, selection) for c in range(n_chunks)]
    cols = [np.concatenate([p[j] for p in parts]) for j in range(8)]
    trace = BlockFadingTrace(*cols, Q=cfg.quantizer.Q, selection=selection)
    est, se = _mean_se(trace.increment)
    return SimOutcome(trace, est, se)


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    m = float(np.mean(x))
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return m, se


def simulate_common(cfg: SimConfig) -> SimOutcome:
    """Common message: serve the weakest receiver's reported cell."""
    return simulate(cfg, "min")


def simulate_sum(cfg: SimConfig) -> SimOutcome:
    """Independent messages: serve the strongest receiver's reported cell."""
    return simulate(cfg, "max")


def replay(trace: BlockFadingTrace, quantizer: Quantizer, powers) -> float:
    """Recompute the rate estimate from the stored gains.

    Tie-breaking only chooses which receiver is served, never the cell, so
    the stored gains determine every increment.
    """
    P = np.asarray(powers.powers if isinstance(powers, PowerPolicy) else powers, dtype=float)
    u = np.zeros(trace.L)
    _, _, _, _, _, inc = _serve(trace.gains, trace.gamma_e, u, quantizer.array, P, trace.selection)
    return float(np.mean(inc))


def empirical_cell_occupancy(trace: BlockFadingTrace) -> np.ndarray:
    """Frequency with which each cell was served."""
    if trace.L < 10 ** 4:
        raise DomainError("occupancy needs at least 10^4 blocks")
    return np.bincount(trace.selected, minlength=trace.Q + 1) / trace.L


def occupancy_test(trace: BlockFadingTrace, expected) -> tuple:
    """Chi-square goodness of fit of the served cells; returns ``(statistic, p_value)``.

    Cells with zero expected probability are dropped (and must be empty).
    """
    expected = np.asarray(expected, dtype=float)
    counts = np.bincount(trace.selected, minlength=trace.Q + 1)
    keep = expected > 0
    if np.any(counts[~keep] > 0):
        return float("inf"), 0.0
    f_exp = expected[keep] / expected[keep].sum() * trace.L
    res = stats.chisquare(counts[keep], f_exp)
    return float(res.statistic), float(res.pvalue)


def power_estimate(trace: BlockFadingTrace) -> tuple:
    """Empirical mean transmit power and its standard error."""
    return _mean_se(trace.power)


def reported_cells(quantizer: Quantizer, gains) -> np.ndarray:
    return index_of(quantizer, gains)
