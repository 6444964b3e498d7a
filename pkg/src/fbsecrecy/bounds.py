"""Secrecy-rate bounds with b-bit feedback and their perfect-CSI limits.

Common message: for every receiver the thresholds and powers are optimised
against that receiver's own gain law, and the bound is the minimum over
receivers (max inside min).  Independent messages: the same machinery runs
on the law of the strongest receiver's gain.

Rates are in nats per channel use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .dist import FadingDistribution, max_order_statistic
from .errors import DomainError, UnsupportedFamilyError
from .opt import (CsiPowerProfile, Mode, Optimum, PowerPolicy, optimize_thresholds_and_powers,
                  perfect_csi_power_policy)
from .quadrature import DEFAULT, QuadratureSettings
from .quantize import Quantizer
from .rates import secrecy_gain_terms

__all__ = [
    "BoundKind",
    "BoundResult",
    "common_message_lower",
    "common_message_upper",
    "sum_rate_lower",
    "sum_rate_upper",
    "perfect_csi_common",
    "perfect_csi_sum",
    "selection_occupancy",
    "protocol_rate",
    "strongest_receiver",
]


class BoundKind(str, Enum):
    COMMON_LOWER = "CommonLower"
    COMMON_UPPER = "CommonUpper"
    SUM_LOWER = "SumLower"
    SUM_UPPER = "SumUpper"
    COMMON_PERFECT = "CommonPerfectCsi"
    SUM_PERFECT = "SumPerfectCsi"


@dataclass(frozen=True)
class BoundResult:
    """One bound value with the quantizer/policy that attains it.

    ``per_receiver`` keeps the individual optimisation results for the
    common-message kinds (one entry per receiver) and is used for warm
    starts; it is left out of :meth:`to_dict`.
    """

    value: float
    kind: BoundKind
    quantizer: Quantizer | None
    policy: PowerPolicy | CsiPowerProfile
    bottleneck_receiver: int | None = None
    diagnostics: dict = field(default_factory=dict)
    per_receiver: tuple = ()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "value_npcu": self.value,
            "b": None if self.quantizer is None else self.quantizer.b,
            "thresholds": None if self.quantizer is None else self.quantizer.to_list(),
            "policy": self.policy.to_dict(),
            "bottleneck_receiver": self.bottleneck_receiver,
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _as_list(dists) -> list:
    if isinstance(dists, FadingDistribution):
        return [dists]
    out = list(dists)
    if not out:
        raise DomainError("at least one receiver is required")
    return out


def strongest_receiver(dist_main, K: int) -> FadingDistribution:
    """Law of the largest main gain among ``K`` i.i.d. receivers."""
    if isinstance(dist_main, FadingDistribution):
        base = dist_main
    else:
        dists = _as_list(dist_main)
        if any(d != dists[0] for d in dists[1:]):
            raise UnsupportedFamilyError("independent messages need identically distributed receivers")
        base = dists[0]
    return base if K == 1 else max_order_statistic(base, K)


def _per_receiver(dists, dist_e, b, P_avg, mode, thresholds, warm, extra, qs, seed):
    """Optimise once per distinct receiver law; identical laws share the result."""
    cache = {}
    out = []
    for k, d in enumerate(dists):
        if d not in cache:
            kw = {}
            if warm is not None and warm[k] is not None:
                kw["warm_start"] = warm[k]
            if extra is not None and extra[k] is not None:
                kw["extra_starts"] = (extra[k],)
            cache[d] = optimize_thresholds_and_powers(d, dist_e, b, P_avg, mode, thresholds=thresholds,
                                                      seed=seed, qs=qs, **kw)
        out.append(cache[d])
    return out


def _quantizers(result: BoundResult | None, K: int):
    if result is None:
        return None
    if result.per_receiver:
        return [r.quantizer for r in result.per_receiver]
    return [result.quantizer] * K


def _assemble(kind, results, b) -> BoundResult:
    values = [r.value for r in results]
    k = int(np.argmin(values))
    best = results[k]
    diag = dict(best.diagnostics)
    diag["per_receiver_values"] = values
    return BoundResult(max(float(values[k]), 0.0), kind, best.quantizer, best.policy, k, diag, tuple(results))


def common_message_lower(dists_main: Sequence[FadingDistribution], dist_e: FadingDistribution, b: int,
                         P_avg: float, *, thresholds: str = "optimized", warm_start: BoundResult | None = None,
                         qs: QuadratureSettings = DEFAULT, seed: int = 0) -> BoundResult:
    """Achievable common-message secrecy rate; the weakest receiver sets the value.

    ``warm_start`` is a result for fewer bits whose quantizers seed the
    search, which keeps the bound non-decreasing along a ``b`` sweep.
    """
    dists = _as_list(dists_main)
    res = _per_receiver(dists, dist_e, b, P_avg, Mode.LOWER, thresholds,
                        _quantizers(warm_start, len(dists)), None, qs, seed)
    return _assemble(BoundKind.COMMON_LOWER, res, b)


def common_message_upper(dists_main: Sequence[FadingDistribution], dist_e: FadingDistribution, b: int,
                         P_avg: float, *, thresholds: str = "optimized", lower: BoundResult | None = None,
                         warm_start: BoundResult | None = None, qs: QuadratureSettings = DEFAULT,
                         seed: int = 0) -> BoundResult:
    """Common-message upper bound with cell-conditional gains (cell 0 included).

    The lower-bound quantizers are used as an extra start: the upper-bound
    objective dominates the lower one at any fixed quantizer and policy,
    so the search cannot end below the lower bound.  If ``lower`` is not
    supplied it is computed first.
    """
    dists = _as_list(dists_main)
    if lower is None:
        lower = common_message_lower(dists, dist_e, b, P_avg, thresholds=thresholds, qs=qs, seed=seed)
    res = _per_receiver(dists, dist_e, b, P_avg, Mode.UPPER, thresholds,
                        _quantizers(warm_start, len(dists)), _quantizers(lower, len(dists)), qs, seed)
    return _assemble(BoundKind.COMMON_UPPER, res, b)


def _single(kind, opt: Optimum) -> BoundResult:
    return BoundResult(max(float(opt.value), 0.0), kind, opt.quantizer, opt.policy, None, dict(opt.diagnostics))


def sum_rate_lower(dist_main, K: int, dist_e: FadingDistribution, b: int, P_avg: float, *,
                   thresholds: str = "optimized", warm_start: BoundResult | None = None,
                   qs: QuadratureSettings = DEFAULT, seed: int = 0) -> BoundResult:
    """Achievable secrecy sum-rate when only the strongest receiver is served."""
    d = strongest_receiver(dist_main, K)
    kw = {} if warm_start is None else {"warm_start": warm_start.quantizer}
    opt = optimize_thresholds_and_powers(d, dist_e, b, P_avg, Mode.LOWER, thresholds=thresholds,
                                         seed=seed, qs=qs, **kw)
    return _single(BoundKind.SUM_LOWER, opt)


def sum_rate_upper(dist_main, K: int, dist_e: FadingDistribution, b: int, P_avg: float, *,
                   thresholds: str = "optimized", lower: BoundResult | None = None,
                   warm_start: BoundResult | None = None, qs: QuadratureSettings = DEFAULT,
                   seed: int = 0) -> BoundResult:
    """Sum-rate upper bound on the strongest-receiver law (see :func:`common_message_upper`)."""
    d = strongest_receiver(dist_main, K)
    if lower is None:
        lower = sum_rate_lower(d, 1, dist_e, b, P_avg, thresholds=thresholds, qs=qs, seed=seed)
    kw = {"extra_starts": (lower.quantizer,)}
    if warm_start is not None:
        kw["warm_start"] = warm_start.quantizer
    opt = optimize_thresholds_and_powers(d, dist_e, b, P_avg, Mode.UPPER, thresholds=thresholds,
                                         seed=seed, qs=qs, **kw)
    return _single(BoundKind.SUM_UPPER, opt)


def perfect_csi_common(dists_main: Sequence[FadingDistribution], dist_e: FadingDistribution, P_avg: float,
                       grid_size: int = 512, qs: QuadratureSettings = DEFAULT) -> BoundResult:
    """Common-message secrecy capacity with the main gains known at the transmitter."""
    dists = _as_list(dists_main)
    cache = {}
    profiles = []
    for d in dists:
        if d not in cache:
            cache[d] = perfect_csi_power_policy(d, dist_e, P_avg, grid_size, qs)
        profiles.append(cache[d])
    values = [p.value for p in profiles]
    k = int(np.argmin(values))
    diag = dict(profiles[k].diagnostics)
    diag["per_receiver_values"] = values
    return BoundResult(max(values[k], 0.0), BoundKind.COMMON_PERFECT, None, profiles[k], k, diag)


def perfect_csi_sum(dist_main, K: int, dist_e: FadingDistribution, P_avg: float,
                    grid_size: int = 512, qs: QuadratureSettings = DEFAULT) -> BoundResult:
    """Secrecy sum-capacity with perfect main CSI (strongest receiver served)."""
    prof = perfect_csi_power_policy(strongest_receiver(dist_main, K), dist_e, P_avg, grid_size, qs)
    return BoundResult(max(prof.value, 0.0), BoundKind.SUM_PERFECT, None, prof, None, dict(prof.diagnostics))


def selection_occupancy(quant: Quantizer, dists_main: Sequence[FadingDistribution], selection: str) -> np.ndarray:
    """Probability that each cell is the one served under a selection rule.

    ``"min"`` serves the weakest receiver's index (common message),
    ``"max"`` the strongest one (independent messages).
    """
    dists = _as_list(dists_main)
    e = quant.edges()
    if selection == "min":
        # Pr[all indices >= q] for q = 0..Q+1
        above = np.ones(e.size)
        for d in dists:
            above = above * np.where(np.isinf(e), 0.0, d.sf(np.minimum(e, np.finfo(float).max)))
        return above[:-1] - above[1:]
    if selection == "max":
        below = np.ones(e.size)
        for d in dists:
            below = below * np.where(np.isinf(e), 1.0, d.cdf(np.minimum(e, np.finfo(float).max)))
        return below[1:] - below[:-1]
    raise DomainError(f"unknown selection rule {selection!r}")


def protocol_rate(quant: Quantizer, powers, dists_main: Sequence[FadingDistribution],
                  dist_e: FadingDistribution, selection: str, qs: QuadratureSettings = DEFAULT) -> float:
    """Ergodic secrecy rate of the feedback protocol for fixed thresholds and powers.

    Each block transmits at ``ln(1 + t_q P_q)`` for the served cell ``q``, so the
    rate is ``sum_q Pr[q served] * S(t_q, P_q)`` with cell 0 silent.  For the
    strongest-receiver rule this is exactly the sum-rate lower-bound objective.
    """
    occ = selection_occupancy(quant, dists_main, selection)
    P = np.asarray(powers, dtype=float)
    if P.size != quant.Q + 1:
        raise DomainError("power vector must have one entry per cell")
    S, _, _ = secrecy_gain_terms(quant.array, P[1:], dist_e, qs)
    return float(np.dot(occ[1:], S))
