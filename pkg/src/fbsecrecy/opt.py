"""Power allocation and threshold search under an average power budget.

For a fixed quantizer the problem

    maximise  sum_q w_q(P_q)   subject to  sum_q theta_q P_q <= P_avg

is separable once the budget is dualised: for a multiplier ``lam`` each
cell solves ``g_q'(P) = lam`` with ``g_q = w_q / theta_q``.  Every per-cell
gain is concave in ``P`` (its second derivative is a negative integral), so
the stationarity equation has at most one root, found by safeguarded
Newton in ``log P``.  The multiplier itself is found the same way on the
budget equation.

Thresholds are improved by coordinate ascent: with the powers and the
multiplier frozen, each threshold is moved to maximise the Lagrangian
(red-black sweep), the powers are re-solved, and the step is kept only if
the true objective increased.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import optimize as sopt

from .dist import FadingDistribution
from .errors import DomainError, NumericalError
from .quadrature import DEFAULT, QuadratureSettings, integrate
from .quantize import Quantizer, cell_probabilities, embed_quantizer, equiprobable_quantizer
from .rates import cell_gain_terms, secrecy_gain_terms

__all__ = [
    "Mode",
    "PowerPolicy",
    "CsiPowerProfile",
    "Optimum",
    "KKTReport",
    "optimize_powers",
    "optimize_thresholds_and_powers",
    "perfect_csi_power_policy",
    "policy_objective",
    "kkt_check",
]

_FLOOR = 1e-13  # powers below FLOOR * (1 + P_avg) are treated as zero


class Mode(str, Enum):
    LOWER = "lower"
    UPPER = "upper"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, Mode):
            return value
        key = str(value).lower()
        aliases = {"lowerbound": "lower", "upperbound": "upper"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class PowerPolicy:
    """Powers ``(P_0, ..., P_Q)`` indexed by feedback cell."""

    powers: tuple
    avg_power_budget: float
    multiplier: float = 0.0
    theta: tuple = ()
    mode: Mode = Mode.LOWER
    objective: float = 0.0

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.powers, dtype=float)

    def expected_power(self, theta=None) -> float:
        th = np.asarray(self.theta if theta is None else theta, dtype=float)
        return float(np.dot(th, self.array))

    def to_dict(self) -> dict:
        return {
            "powers": list(self.powers),
            "avg_power_budget": self.avg_power_budget,
            "multiplier": self.multiplier,
            "theta": list(self.theta),
            "mode": self.mode.value,
            "objective": self.objective,
        }


@dataclass(frozen=True)
class CsiPowerProfile:
    """Perfect-CSI policy ``P(gamma)`` sampled on a quantile grid of the main gain."""

    grid: np.ndarray
    powers: np.ndarray
    lagrange_multiplier: float
    avg_power_budget: float
    value: float
    expected_power: float
    activation_gain: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "powers": self.powers.tolist(),
            "lagrange_multiplier": self.lagrange_multiplier,
            "avg_power_budget": self.avg_power_budget,
            "value": self.value,
            "expected_power": self.expected_power,
            "activation_gain": self.activation_gain,
        }


class Optimum(tuple):
    """``(quantizer, policy, value)`` with solver diagnostics attached."""

    def __new__(cls, quantizer, policy, value, diagnostics=None):
        obj = super().__new__(cls, (quantizer, policy, value))
        obj.diagnostics = diagnostics or {}
        return obj

    quantizer = property(lambda self: self[0])
    policy = property(lambda self: self[1])
    value = property(lambda self: self[2])


# ---------------------------------------------------------------------------
# per-cell objective

class _Cells:
    """Objective pieces ``w_q(P)`` and derivatives for one quantizer."""

    def __init__(self, thresholds, theta, mode, dist_m, dist_e, qs):
        self.tau = np.asarray(thresholds, dtype=float)
        self.edges = np.concatenate(([0.0], self.tau, [np.inf]))
        self.theta = np.asarray(theta, dtype=float)
        self.mode = mode
        self.dist_m = dist_m
        self.dist_e = dist_e
        self.qs = qs
        n = self.tau.size + 1
        if self.theta.size != n:
            raise DomainError(f"expected {n} cell probabilities, got {self.theta.size}")
        first = 1 if mode is Mode.LOWER else 0
        self.cells = np.array([q for q in range(first, n) if self.theta[q] > 0], dtype=int)

    def terms(self, cells, P):
        """``(w, w', w'')`` for the given cell indices at powers ``P``."""
        cells = np.asarray(cells, dtype=int)
        P = np.asarray(P, dtype=float)
        if self.mode is Mode.LOWER:
            S, S1, S2 = secrecy_gain_terms(self.edges[cells], P, self.dist_e, self.qs)
            th = self.theta[cells]
            return th * S, th * S1, th * S2
        return cell_gain_terms(self.edges[cells], self.edges[cells + 1], P,
                               self.dist_m, self.dist_e, self.qs)

    def slopes(self, cells, P):
        """Per-unit-mass marginal gain ``g'`` and curvature ``g''``."""
        _, w1, w2 = self.terms(cells, P)
        th = self.theta[cells]
        return w1 / th, w2 / th


def _newton_log(fun, target, s, lo, hi, tol=1e-13, max_iter=200):
    """Vectorised root of a decreasing ``h(s) = target`` inside ``[lo, hi]``.

    ``fun(s, idx)`` returns ``(h, dh/ds)`` for the entries ``idx``.
    Newton steps that leave the bracket fall back to bisection.
    Returns the roots and the last derivative values.
    """
    s = np.array(s, dtype=float)
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    target = np.broadcast_to(np.asarray(target, dtype=float), s.shape)
    slope = np.full_like(s, -1.0)
    active = np.arange(s.size)
    for _ in range(max_iter):
        if active.size == 0:
            break
        h, dh = fun(s[active], active)
        slope[active] = dh
        r = h - target[active]
        up = r > 0
        lo[active[up]] = s[active[up]]
        hi[active[~up]] = s[active[~up]]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(dh < 0, -r / dh, np.nan)
            # the same Newton step taken in exp(s), better near a zero root
            alt = s[active] + np.log1p(np.where(step > -1, step, np.nan))
        cur = s[active]
        small = np.abs(step) < tol * (1 + np.abs(cur))
        new = cur + step
        inside = lambda v: np.isfinite(v) & (v > lo[active]) & (v < hi[active])
        new = np.where(inside(new), new, np.where(inside(alt), alt, 0.5 * (lo[active] + hi[active])))
        s[active] = np.where(small, cur + np.nan_to_num(step), new)
        done = small | (hi[active] - lo[active] < tol * (1 + np.abs(new))) | (r == 0)
        active = active[~done]
    else:
        raise NumericalError("Newton/bisection did not converge", residual=float(active.size))
    return s, slope


def _cell_powers(cells: _Cells, lam, P_avg, warm=None, slope0=None):
    """Optimal powers for a fixed multiplier; returns ``(P, g'')`` on all cells."""
    n = cells.theta.size
    P = np.zeros(n)
    curv = np.zeros(n)
    idx = cells.cells
    if idx.size == 0:
        return P, curv
    if slope0 is None:
        slope0, _ = cells.slopes(idx, np.zeros(idx.size))
    on = slope0 > lam
    if not np.any(on):
        return P, curv
    act = idx[on]
    floor = _FLOOR * (1.0 + P_avg)

    def fun(s, k):
        p = np.exp(s)
        g1, g2 = cells.slopes(act[k], p)
        return g1, g2 * p

    # upper bracket: grow until the marginal gain drops below lam
    hi = np.full(act.size, np.log(max(P_avg, 1e-300)) + 1.0)
    if warm is not None:
        hi = np.maximum(hi, np.log(np.maximum(warm[act], floor)) + 1.0)
    pending = np.arange(act.size)
    for _ in range(200):
        g1, _ = cells.slopes(act[pending], np.exp(hi[pending]))
        still = g1 > lam
        if not np.any(still):
            break
        pending = pending[still]
        hi[pending] += np.log(8.0)
    else:
        raise NumericalError("could not bracket the per-cell power")
    lo = np.full(act.size, np.log(floor))
    g_floor, _ = cells.slopes(act, np.full(act.size, floor))
    tiny = g_floor <= lam
    s0 = 0.5 * (lo + hi)
    if warm is not None:
        w = warm[act]
        good = (w > floor) & (np.log(np.maximum(w, floor)) < hi)
        s0 = np.where(good, np.log(np.maximum(w, floor)), s0)
    s, ds = _newton_log(fun, lam, s0, lo, hi)
    p = np.where(tiny, 0.0, np.exp(s))
    P[act] = p
    with np.errstate(divide="ignore", invalid="ignore"):
        curv[act] = np.where(tiny, 0.0, ds / np.exp(s))
    return P, curv


def _solve_multiplier(cells: _Cells, P_avg, warm_P=None, warm_lam=None):
    """Multiplier and powers meeting the budget with equality."""
    idx = cells.cells
    theta = cells.theta
    n = theta.size
    if idx.size == 0:
        return 0.0, np.zeros(n)
    slope0, _ = cells.slopes(idx, np.zeros(idx.size))
    lam_max = float(np.max(slope0))
    if lam_max <= 0:
        return 0.0, np.zeros(n)

    def spend(t, warm):
        lam = np.exp(t)
        P, curv = _cell_powers(cells, lam, P_avg, warm, slope0)
        used = float(np.dot(theta, P))
        with np.errstate(divide="ignore", invalid="ignore"):
            dT = lam * float(np.sum(np.where((P > 0) & (curv < 0), theta / curv, 0.0)))
        return used, dT, P

    # spent power T is decreasing in t = log(lam) and vanishes at log(lam_max)
    t_lo, t_hi = -np.inf, np.log(lam_max)
    t = np.log(warm_lam) if warm_lam and 0 < warm_lam < lam_max else t_hi - np.log(2.0)
    P = warm_P
    for _ in range(300):
        used, dT, P = spend(t, P)
        if used > P_avg:
            t_lo = t
        else:
            t_hi = t
        if abs(used - P_avg) <= 1e-12 * P_avg or (t_hi - t_lo) < 1e-14 * (1 + abs(t)):
            break
        # Newton on log T, which is close to linear in log(lam)
        new = t - np.log(used / P_avg) * used / dT if (dT < 0 and used > 0) else np.nan
        if not np.isfinite(t_lo):
            new = max(new, t - np.log(100.0))
        if not (np.isfinite(new) and t_lo < new < t_hi):
            if np.isfinite(t_lo):
                new = 0.5 * (t_lo + t_hi)
            else:
                new = t_hi - max(2 * (t_hi - t), np.log(10.0))
        t = new
    else:
        raise NumericalError("multiplier iteration did not converge", residual=used - P_avg)
    if used > P_avg:
        # land on the feasible side of the budget
        P = P * (P_avg / used)
    return float(np.exp(t)), P


def _objective(cells: _Cells, P):
    idx = cells.cells
    if idx.size == 0:
        return 0.0
    w, _, _ = cells.terms(idx, P[idx])
    return float(np.sum(w))


def optimize_powers(quant: Quantizer, theta, dist_e: FadingDistribution, P_avg: float,
                    mode="lower", dist_m: FadingDistribution | None = None,
                    qs: QuadratureSettings = DEFAULT, warm: PowerPolicy | None = None) -> PowerPolicy:
    """Best powers for fixed thresholds under ``sum theta_q P_q <= P_avg``.

    In lower-bound mode cell 0 carries no power; in upper-bound mode it is
    optimised like the others.
    """
    mode = Mode.parse(mode)
    if not P_avg > 0:
        raise DomainError("average power budget must be positive")
    if mode is Mode.UPPER and dist_m is None:
        raise DomainError("upper-bound mode needs the main-channel distribution")
    theta = np.asarray(theta, dtype=float)
    cells = _Cells(quant.thresholds, theta, mode, dist_m, dist_e, qs)
    lam, P = _solve_multiplier(cells, P_avg,
                               warm_P=None if warm is None else warm.array,
                               warm_lam=None if warm is None else warm.multiplier)
    return PowerPolicy(tuple(float(p) for p in P), float(P_avg), lam, tuple(float(t) for t in theta),
                       mode, _objective(cells, P))


def policy_objective(quant: Quantizer, policy_powers, dist_m, dist_e, mode="lower",
                     qs: QuadratureSettings = DEFAULT) -> float:
    """Bound expression evaluated at the given thresholds and powers."""
    mode = Mode.parse(mode)
    theta = cell_probabilities(quant, dist_m)
    cells = _Cells(quant.thresholds, theta, mode, dist_m, dist_e, qs)
    return _objective(cells, np.asarray(policy_powers, dtype=float))


@dataclass(frozen=True)
class KKTReport:
    ok: bool
    max_violation: float
    derivatives: tuple
    multiplier: float


def kkt_check(quant: Quantizer, policy: PowerPolicy, dist_m, dist_e,
              rel_tol=1e-3, abs_tol=1e-6, qs: QuadratureSettings | None = None) -> KKTReport:
    """Certify stationarity with finite differences of the per-cell gains.

    Active cells need ``g_q'(P_q) = lam`` within ``rel_tol * lam + abs_tol``;
    idle cells need ``g_q'(0) <= lam + abs_tol``.
    """
    qs = qs or QuadratureSettings(rel_tol=1e-13, abs_tol=1e-15)
    theta = np.asarray(policy.theta, dtype=float)
    cells = _Cells(quant.thresholds, theta, policy.mode, dist_m, dist_e, qs)
    P = policy.array
    lam = policy.multiplier
    idx = cells.cells
    deriv = np.full(P.size, np.nan)
    worst = -np.inf       # largest (deviation - tolerance); <= 0 passes
    ok = True
    for q in idx:
        p = P[q]
        th = theta[q]
        if p > 0:
            h = 1e-5 * p
            w, _, _ = cells.terms([q, q], [p + h, p - h])
            d = (w[0] - w[1]) / (2 * h * th)
            viol = abs(d - lam) - (rel_tol * lam + abs_tol)
        else:
            h = 1e-7 * (1.0 + policy.avg_power_budget)
            w, _, _ = cells.terms([q, q], [h, 0.0])
            d = (w[0] - w[1]) / (h * th)
            viol = d - (lam + abs_tol)
        deriv[q] = d
        worst = max(worst, viol)
        ok &= viol <= 0
    return KKTReport(bool(ok), float(worst) if idx.size else 0.0, tuple(deriv), lam)


# ---------------------------------------------------------------------------
# threshold search

_WINDOW = 4.0
_CANDIDATES = 16
_ZOOMS = 3


def _lloyd_sweep(tau, P, lam, mode, dist_m, dist_e, qs):
    """One red-black pass moving each threshold to maximise the Lagrangian
    with powers and multiplier held fixed."""
    tau = np.array(tau, dtype=float)
    Q = tau.size
    P = np.asarray(P, dtype=float)
    for colour in (0, 1):
        js = np.arange(colour, Q, 2)
        r_cur = dist_m.logit(tau[js])
        left = np.where(js > 0, tau[np.maximum(js - 1, 0)], 0.0)
        right = np.where(js < Q - 1, tau[np.minimum(js + 1, Q - 1)], np.inf)
        with np.errstate(divide="ignore"):
            r_left = dist_m.logit(left)
            r_right = np.where(np.isinf(right), np.inf, dist_m.logit(np.where(np.isinf(right), 1.0, right)))
        lo = np.maximum(r_left, r_cur - _WINDOW)
        hi = np.minimum(r_right, r_cur + _WINDOW)
        q = js + 1  # cell above threshold j
        Pq = P[q]
        Pl = P[q - 1]
        if mode is Mode.LOWER:
            S_left, _, _ = secrecy_gain_terms(left, Pl, dist_e, qs)
            psi_left = np.where(q - 1 >= 1, S_left - lam * Pl, 0.0)
        best = r_cur.copy()
        a, b = lo, hi
        for _ in range(_ZOOMS):
            k = np.arange(1, _CANDIDATES + 1) / (_CANDIDATES + 1)
            rc = a[:, None] + (b - a)[:, None] * k[None, :]
            rc = np.concatenate((rc, best[:, None]), axis=1)
            t = dist_m.from_logit(rc.ravel()).reshape(rc.shape)
            t = np.clip(t, np.where(left > 0, np.nextafter(left, np.inf), np.finfo(float).tiny)[:, None],
                        np.nextafter(right, 0)[:, None])
            if mode is Mode.LOWER:
                S, _, _ = secrecy_gain_terms(t, np.broadcast_to(Pq[:, None], t.shape), dist_e, qs)
                below = dist_m.mass(np.broadcast_to(left[:, None], t.shape), t)
                above = dist_m.mass(t, np.broadcast_to(right[:, None], t.shape))
                score = below * psi_left[:, None] + above * (S - lam * Pq[:, None])
                pick = np.argmax(score, axis=1)
            else:
                S_hi, _, _ = secrecy_gain_terms(t, np.broadcast_to(Pq[:, None], t.shape), dist_e, qs)
                S_lo, _, _ = secrecy_gain_terms(t, np.broadcast_to(Pl[:, None], t.shape), dist_e, qs)
                D = (S_lo - lam * Pl[:, None]) - (S_hi - lam * Pq[:, None])
                grid = D[:, :_CANDIDATES]
                pos = grid > 0
                # last candidate where the lower cell still wins
                last_pos = np.where(pos.any(axis=1), _CANDIDATES - 1 - np.argmax(pos[:, ::-1], axis=1), -1)
                pick = np.clip(last_pos, 0, _CANDIDATES - 1)
                none = last_pos < 0
                pick = np.where(none, 0, pick)
                movable = Pq > Pl
                pick = np.where(movable, pick, _CANDIDATES)  # keep current
            chosen = rc[np.arange(js.size), pick]
            step = (b - a) / (_CANDIDATES + 1)
            best = chosen
            a = np.maximum(lo, chosen - step)
            b = np.minimum(hi, chosen + step)
        new = dist_m.from_logit(best)
        lower_ok = np.where(js > 0, new > left, new > 0)
        upper_ok = new < right
        tau[js] = np.where(lower_ok & upper_ok & np.isfinite(new), new, tau[js])
    return tau


def _valid(tau):
    return np.all(np.isfinite(tau)) and tau[0] > 0 and np.all(np.diff(tau) > 0)


def _revive(tau, P, dist_m):
    """Move thresholds separating two idle cells into the transmitting region.

    Such a threshold does nothing; splitting the heaviest transmitting cells
    at their mass midpoint instead can only help.  Returns None when no
    threshold is idle.
    """
    P = np.asarray(P)
    idle = (P[:-1] == 0) & (P[1:] == 0)
    if not np.any(idle):
        return None
    keep = list(tau[~idle])
    for _ in range(int(idle.sum())):
        edges = np.concatenate(([0.0], keep, [np.inf]))
        sf = dist_m.sf(edges[:-1]) - np.where(np.isinf(edges[1:]), 0.0, dist_m.sf(np.minimum(edges[1:], np.finfo(float).max)))
        # only cells above the last idle threshold transmit
        first = int(np.searchsorted(edges, tau[idle].max(), side="right"))
        mass = np.where(np.arange(sf.size) >= max(first - 1, 1), sf, -1.0)
        q = int(np.argmax(mass))
        hi_sf = 0.0 if np.isinf(edges[q + 1]) else float(dist_m.sf(edges[q + 1]))
        mid = float(dist_m.isf(0.5 * (float(dist_m.sf(edges[q])) + hi_sf)))
        if not edges[q] < mid < edges[q + 1]:
            return None
        keep.insert(q, mid)
    out = np.asarray(keep)
    return out if _valid(out) else None


def _threshold_gradient(tau, pol: PowerPolicy, dist_m, dist_e, qs):
    """Derivative of the optimised objective in the log-odds of each threshold.

    Powers and multiplier are optimal, so by the envelope theorem only the
    explicit dependence of the Lagrangian on the thresholds matters.
    """
    P = pol.array
    lam = pol.multiplier
    Pq, Pl = P[1:], P[:-1]
    F = dist_m.cdf(tau)
    w = F * dist_m.sf(tau)  # d tau / d logit = w / pdf
    if pol.mode is Mode.LOWER:
        S_q, _, _ = secrecy_gain_terms(tau, Pq, dist_e, qs)
        psi = np.concatenate(([0.0], S_q - lam * Pq))
        theta = np.asarray(pol.theta)[1:]
        pdf = dist_m.pdf(tau)
        ratio = np.divide(w, pdf, out=np.zeros_like(w), where=pdf > 0)
        slide = theta * dist_e.cdf(tau) * Pq / (1 + tau * Pq) * ratio
        return w * (psi[:-1] - psi[1:]) + slide
    S_l, _, _ = secrecy_gain_terms(tau, Pl, dist_e, qs)
    S_h, _, _ = secrecy_gain_terms(tau, Pq, dist_e, qs)
    return w * ((S_l - lam * Pl) - (S_h - lam * Pq))


def _polish(tau, pol, b, dist_m, dist_e, P_avg, mode, qs, max_iter=500):
    """L-BFGS on the thresholds with powers re-optimised at every evaluation.

    Coordinates are the first log-odds and the logs of successive gaps, so
    every iterate is a valid increasing quantizer.
    """
    r = dist_m.logit(tau)
    x0 = np.concatenate(([r[0]], np.log(np.diff(r))))
    best = {"tau": tau, "pol": pol, "value": pol.objective}
    warm = {"pol": pol}

    def f(x):
        # a huge line-search step overflows to an invalid quantizer, rejected below
        with np.errstate(over="ignore", invalid="ignore"):
            rr = x[0] + np.concatenate(([0.0], np.cumsum(np.exp(x[1:]))))
            t = dist_m.from_logit(rr)
        if not _valid(t):
            return -best["value"] + 1.0, np.zeros_like(x)
        q = Quantizer(tuple(t), b)
        p = optimize_powers(q, cell_probabilities(q, dist_m), dist_e, P_avg, mode, dist_m, qs, warm=warm["pol"])
        warm["pol"] = p
        if p.objective > best["value"]:
            best.update(tau=t, pol=p, value=p.objective)
        g = _threshold_gradient(t, p, dist_m, dist_e, qs)
        tail = np.cumsum(g[::-1])[::-1]
        gx = np.empty_like(x)
        gx[0] = tail[0]
        gx[1:] = np.exp(x[1:]) * tail[1:]
        return -p.objective, -gx

    res = sopt.minimize(f, x0, jac=True, method="L-BFGS-B",
                        options={"maxiter": max_iter, "ftol": 1e-14, "gtol": 1e-11})
    return best["tau"], best["pol"], best["value"], int(res.nfev)


def _lloyd_rounds(tau, pol, b, dist_m, dist_e, P_avg, mode, qs, rounds, tol):
    """A few accepted-if-better Lloyd rounds; returns the improved state."""
    value = pol.objective
    for _ in range(rounds):
        proposal = _lloyd_sweep(tau, pol.array, pol.multiplier, mode, dist_m, dist_e, qs)
        r_old = dist_m.logit(tau)
        r_new = dist_m.logit(proposal)
        gain = 0.0
        for alpha in (1.0, 0.5, 0.25):
            cand = proposal if alpha == 1.0 else dist_m.from_logit(r_old + alpha * (r_new - r_old))
            if not _valid(cand) or np.array_equal(cand, tau):
                continue
            q_c = Quantizer(tuple(cand), b)
            p_c = optimize_powers(q_c, cell_probabilities(q_c, dist_m), dist_e, P_avg, mode, dist_m, qs, warm=pol)
            if p_c.objective > value:
                gain = p_c.objective - value
                tau, pol, value = cand, p_c, p_c.objective
                break
        if gain < tol:
            break
    return tau, pol, value


def _ascent(tau0, b, dist_m, dist_e, P_avg, mode, qs, max_rounds, tol, lloyd_rounds=5):
    """Alternate gradient polishing, Lloyd moves and idle-threshold revival
    until a full cycle gains less than ``tol``."""
    tau = np.asarray(tau0, dtype=float)
    quant = Quantizer(tuple(tau), b)
    pol = optimize_powers(quant, cell_probabilities(quant, dist_m), dist_e, P_avg, mode, dist_m, qs)
    value = pol.objective
    cycles = 0
    while cycles < max_rounds:
        cycles += 1
        start = value
        tau, pol, value, _ = _polish(tau, pol, b, dist_m, dist_e, P_avg, mode, qs)
        tau, pol, value = _lloyd_rounds(tau, pol, b, dist_m, dist_e, P_avg, mode, qs, lloyd_rounds, tol)
        fresh = _revive(tau, pol.array, dist_m)
        if fresh is not None:
            q_c = Quantizer(tuple(fresh), b)
            p_c = optimize_powers(q_c, cell_probabilities(q_c, dist_m), dist_e, P_avg, mode, dist_m, qs)
            if p_c.objective >= value:
                tau, pol, value = fresh, p_c, p_c.objective
                continue
        if value - start < tol:
            break
    return Quantizer(tuple(tau), b), pol, value, cycles


def _perturbed_starts(dist_m, b, count, seed):
    Q = 2 ** b
    levels = np.arange(1, Q + 1)
    base = np.log(levels) - np.log(Q + 1 - levels)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        r = np.sort(base + rng.normal(0.0, 0.5, size=Q))
        t = dist_m.from_logit(r)
        if _valid(t):
            out.append(t)
    return out


def optimize_thresholds_and_powers(dist_m: FadingDistribution, dist_e: FadingDistribution, b: int,
                                   P_avg: float, mode="lower", *, thresholds="optimized",
                                   starts: int = 5, seed: int = 0, warm_start: Quantizer | None = None,
                                   extra_starts=(), max_rounds: int = 20, tol: float = 1e-9,
                                   qs: QuadratureSettings = DEFAULT) -> Optimum:
    """Joint threshold/power search; the returned value is a lower estimate of the maximum.

    ``thresholds="equiprobable"`` skips the threshold search and only
    optimises powers on the equiprobable quantizer.  ``warm_start`` (e.g. the
    solution for fewer bits) is embedded into a ``b``-bit quantizer and used
    as an additional start, which makes the result non-decreasing in ``b``.
    """
    mode = Mode.parse(mode)
    if int(b) != b or not 1 <= b <= 8:
        raise DomainError("b must be an integer in 1..8")
    if not P_avg > 0:
        raise DomainError("average power budget must be positive")
    eq = equiprobable_quantizer(dist_m, b)
    if thresholds == "equiprobable":
        pol = optimize_powers(eq, cell_probabilities(eq, dist_m), dist_e, P_avg, mode, dist_m, qs)
        return Optimum(eq, pol, pol.objective, {"rounds": 0, "starts": 1, "lower_estimate": True,
                                                "thresholds": "equiprobable"})
    if thresholds != "optimized":
        raise DomainError(f"unknown threshold mode {thresholds!r}")
    inits = [("equiprobable", eq.array)]
    inits += [(f"perturbed{i}", t) for i, t in enumerate(_perturbed_starts(dist_m, b, max(starts - 1, 0), seed))]
    if warm_start is not None:
        inits.append(("warm", embed_quantizer(warm_start, b, dist_m).array))
    for i, q in enumerate(extra_starts):
        inits.append((f"extra{i}", embed_quantizer(q, b, dist_m).array))
    best = None
    history = []
    for name, t0 in inits:
        quant, pol, value, rounds = _ascent(t0, b, dist_m, dist_e, P_avg, mode, qs, max_rounds, tol)
        history.append({"start": name, "value": value, "rounds": rounds})
        if best is None or value > best[2]:
            best = (quant, pol, value, rounds, name)
    quant, pol, value, rounds, name = best
    diag = {"rounds": rounds, "starts": len(inits), "best_start": name, "history": history,
            "lower_estimate": True, "thresholds": "optimized"}
    return Optimum(quant, pol, value, diag)


# ---------------------------------------------------------------------------
# perfect CSI

def _activation_gain(lam, dist_e, qs):
    """Smallest main gain at which transmitting pays off: ``int_0^g F_e = lam``."""
    def h(g):
        return float(secrecy_gain_terms(g, 0.0, dist_e, qs)[1]) - lam

    hi = 1.0
    while h(hi) < 0:
        hi *= 2.0
        if hi > 1e300:
            raise NumericalError("activation gain bracket exhausted")
    return sopt.brentq(h, 0.0, hi, xtol=1e-15, rtol=1e-14)


def _csi_powers(gam, lam, P_avg, dist_e, qs, warm=None):
    """Solve ``S_P(gamma, P) = lam`` for each gain (all assumed above activation)."""
    gam = np.asarray(gam, dtype=float)
    floor = _FLOOR * (1.0 + P_avg)
    out = np.zeros(gam.size)
    if gam.size == 0:
        return out
    slope0 = secrecy_gain_terms(gam, 0.0, dist_e, qs)[1]
    on = slope0 > lam
    g = gam[on]
    if g.size == 0:
        return out

    def fun(s, k):
        p = np.exp(s)
        _, S1, S2 = secrecy_gain_terms(g[k], p, dist_e, qs)
        return S1, S2 * p

    hi = np.full(g.size, np.log(max(P_avg, 1e-300)) + 1.0)
    pending = np.arange(g.size)
    for _ in range(200):
        S1 = secrecy_gain_terms(g[pending], np.exp(hi[pending]), dist_e, qs)[1]
        still = S1 > lam
        if not np.any(still):
            break
        pending = pending[still]
        hi[pending] += np.log(8.0)
    lo = np.full(g.size, np.log(floor))
    s0 = 0.5 * (lo + hi)
    if warm is not None:
        w = np.asarray(warm)[on]
        ok = (w > floor) & (np.log(np.maximum(w, floor)) < hi)
        s0 = np.where(ok, np.log(np.maximum(w, floor)), s0)
    s, _ = _newton_log(fun, lam, s0, lo, hi)
    p = np.exp(s)
    p[p <= floor] = 0.0
    out[on] = p
    return out


def _expect_above(h, g0, dist_m, qs):
    """``E[h(gamma); gamma >= g0]`` in log-odds coordinates (vector-valued ``h``)."""
    top = float(dist_m.quantile(qs.tail_quantile))
    r_lo = max(float(dist_m.logit(g0)) if g0 > 0 else -np.inf, float(dist_m.logit(dist_m.quantile(1e-15))))
    r_hi = float(dist_m.logit(top))
    if r_lo >= r_hi:
        return None

    def f(r, idx):
        x = dist_m.from_logit(r.ravel()).reshape(r.shape)
        F = 0.5 * (1 + np.tanh(0.5 * r))
        vals = h(x)
        return vals * (F * (1 - F))[None]

    v, _ = integrate(f, np.array([r_lo]), np.array([r_hi]), qs)
    return v[:, 0]


def perfect_csi_power_policy(dist_m: FadingDistribution, dist_e: FadingDistribution, P_avg: float,
                             grid_size: int = 512, qs: QuadratureSettings = DEFAULT) -> CsiPowerProfile:
    """Optimal power policy and secrecy capacity with the main gain known at the transmitter."""
    if grid_size < 256:
        raise DomainError("grid_size must be at least 256")
    if not P_avg > 0:
        raise DomainError("average power budget must be positive")

    def budget(lam):
        g0 = _activation_gain(lam, dist_e, qs)

        def h(x):
            return _csi_powers(x.ravel(), lam, P_avg, dist_e, qs).reshape(x.shape)[None]

        v = _expect_above(h, g0, dist_m, qs)
        return 0.0 if v is None else float(v[0])

    t_lo, t_hi = 0.0, 0.0
    used = budget(1.0)
    if used > P_avg:
        while used > P_avg:
            t_lo = t_hi
            t_hi += np.log(4.0)
            used = budget(np.exp(t_hi))
        t_lo = t_hi - np.log(4.0)
    else:
        while used <= P_avg:
            t_hi = t_lo
            t_lo -= np.log(4.0)
            used = budget(np.exp(t_lo))
            if t_lo < -700:
                raise NumericalError("perfect-CSI multiplier bracket exhausted")
    iters = [0]

    def r(t):
        iters[0] += 1
        return budget(np.exp(t)) - P_avg

    t = sopt.brentq(r, t_lo, t_hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    lam = float(np.exp(t))
    g0 = _activation_gain(lam, dist_e, qs)

    def both(x):
        flat = x.ravel()
        p = _csi_powers(flat, lam, P_avg, dist_e, qs)
        S, _, _ = secrecy_gain_terms(flat, p, dist_e, qs)
        return np.stack((p.reshape(x.shape), S.reshape(x.shape)))

    v = _expect_above(both, g0, dist_m, qs)
    used, value = (0.0, 0.0) if v is None else (float(v[0]), float(v[1]))
    if used > P_avg:
        # the root sits within solver tolerance; stay on the feasible side
        lam *= 1 + 1e-12
    levels = np.arange(1, grid_size + 1) / (grid_size + 1)
    grid = dist_m.quantile(levels)
    powers = np.zeros(grid_size)
    above = grid > g0
    powers[above] = _csi_powers(grid[above], lam, P_avg, dist_e, qs)
    diag = {"multiplier_iterations": iters[0], "grid_average_power": float(powers.mean())}
    return CsiPowerProfile(grid, powers, lam, float(P_avg), value, used, float(g0), diag)
