"""Secrecy-rate expectations used inside every bound (natural log, npcu).

Two kernels are needed:

* ``S(t, P) = E_e[{ln(1 + tP) - ln(1 + g_e P)}^+]``, the guaranteed secrecy
  gain when the main gain is known to be at least ``t``;
* ``H(lo, hi, P) = E[{ln(1 + g_m P) - ln(1 + g_e P)}^+ ; lo <= g_m < hi]``,
  the cell-restricted expectation whose ratio to the cell mass is the
  conditional gain of the upper bounds.

Integrating by parts removes the positive-part kink:

    S(t, P)      = int_0^t F_e(x) P / (1 + xP) dx
    H(lo, hi, P) = sf_m(lo) S(lo, P) - sf_m(hi) S(hi, P)
                   + int_lo^hi sf_m(g) F_e(g) P / (1 + gP) dg

and the substitution ``u = ln(1 + xP)`` turns ``P dx / (1 + xP)`` into
``du``, leaving smooth bounded integrands for the batched Gauss-Kronrod
engine.  First and second derivatives in ``P`` are integrated alongside.
"""

from __future__ import annotations

import numpy as np

from .dist import FadingDistribution
from .errors import DomainError
from .quadrature import DEFAULT, QuadratureSettings, integrate

__all__ = [
    "QuadratureSettings",
    "pos_log_ratio",
    "expected_secrecy_gain",
    "conditional_upper_gain",
    "secrecy_gain_terms",
    "cell_gain_terms",
    "truncated_upper",
]


def pos_log_ratio(gamma_m, gamma_e, P):
    """``max(0, ln(1 + gamma_m P) - ln(1 + gamma_e P))``."""
    gamma_m, gamma_e, P = (np.asarray(v, dtype=float) for v in (gamma_m, gamma_e, P))
    if np.any(gamma_m < 0) or np.any(gamma_e < 0) or np.any(P < 0):
        raise DomainError("gains and power must be non-negative")
    out = np.maximum(0.0, np.log1p(gamma_m * P) - np.log1p(gamma_e * P))
    return float(out) if out.ndim == 0 else out


_SPLIT_QUANTILE = 0.999
_SPLIT_FRACTION = 0.05


def _log_weighted(a, b, P, phi, qs, split=None):
    """Integrals of ``phi`` against the P-kernels over ``[a, b]``.

    Returns ``(I0, I1, I2)`` with
    ``I0 = int phi P/(1+gP)``, ``I1 = int phi/(1+gP)^2`` and
    ``I2 = int phi (-2g)/(1+gP)^3``, i.e. a primitive and its first two
    derivatives in ``P``.

    ``split`` is a gain where ``phi`` stops varying quickly (the bulk of the
    eavesdropper law).  The engine refines uniformly, so when that point
    sits in a small leading fraction of ``[a, b]`` (in ``u`` coordinates)
    the range is cut there and the two pieces are integrated separately.
    """
    a, b, P = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, P)))
    shape = a.shape
    a, b, P = a.ravel(), b.ravel(), P.ravel()
    owner = np.arange(a.size)
    if split is not None:
        c = float(split)
        ua = np.log1p(a * P)
        du = np.log1p(b * P) - ua
        uc = np.log1p(c * P) - ua
        cut = (c > a) & (c < b) & (P > 0) & (uc < _SPLIT_FRACTION * du)
        if np.any(cut):
            extra = np.flatnonzero(cut)
            a = np.concatenate((a, np.full(extra.size, c)))
            b = np.concatenate((np.where(cut, c, b), b[extra]))
            P = np.concatenate((P, P[extra]))
            owner = np.concatenate((owner, extra))
    parts = _log_weighted_pieces(a, b, P, lambda g, idx: phi(g, owner[idx]), qs)
    out = []
    for I in parts:
        total = np.zeros(shape).ravel()
        np.add.at(total, owner, I)
        out.append(total.reshape(shape))
    return tuple(out)


def _log_weighted_pieces(a, b, P, phi, qs):
    ua = np.log1p(a * P)
    du = np.log1p(b * P) - ua
    pos = P > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(pos, du / np.where(pos, P, 1.0), b - a)

    def f(w, idx):
        Pi = P[idx][:, None]
        posi = pos[idx][:, None]
        u = ua[idx][:, None] + w * du[idx][:, None]
        lin = a[idx][:, None] + w * (b - a)[idx][:, None]
        g = np.where(posi, np.expm1(u) / np.where(posi, Pi, 1.0), lin)
        ph = phi(g, idx)
        e = np.exp(-u)
        return np.stack((ph, ph * e, ph * g * e * e))

    J, _ = integrate(f, np.zeros_like(a), np.ones_like(a), qs)
    return du * J[0], scale * J[1], -2.0 * scale * J[2]


def secrecy_gain_terms(tau, P, dist_e: FadingDistribution, qs: QuadratureSettings = DEFAULT):
    """``S(tau, P)`` with its first and second ``P``-derivatives (vectorised)."""
    tau = np.asarray(tau, dtype=float)
    P = np.asarray(P, dtype=float)
    if np.any(tau < 0) or np.any(P < 0):
        raise DomainError("threshold and power must be non-negative")
    return _log_weighted(0.0, tau, P, lambda g, idx: dist_e._cdf(g), qs,
                         dist_e.quantile(_SPLIT_QUANTILE))


def truncated_upper(lo, hi, dist_m: FadingDistribution, qs: QuadratureSettings = DEFAULT):
    """Finite stand-in for an infinite cell edge.

    Truncates where the conditional mass left beyond is ``1 - tail_quantile``
    (for ``lo = 0`` this is ``dist_m.quantile(tail_quantile)``).
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    tail = 1.0 - qs.tail_quantile
    inf = np.isinf(hi)
    if not np.any(inf):
        return hi
    s_lo = np.maximum(dist_m._sf(np.where(inf, lo, 0.0)) * tail, np.finfo(float).tiny)
    cap = dist_m._isf(s_lo)
    return np.where(inf, np.maximum(cap, lo), hi)


def cell_gain_terms(lo, hi, P, dist_m: FadingDistribution, dist_e: FadingDistribution,
                    qs: QuadratureSettings = DEFAULT):
    """Unconditional cell expectation ``H(lo, hi, P)`` and its ``P``-derivatives.

    All three pieces (the two boundary ``S`` terms and the interior
    integral) go through a single batched quadrature call.
    """
    lo, hi, P = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (lo, hi, P)))
    if np.any(lo < 0) or np.any(P < 0) or np.any(hi < lo):
        raise DomainError("cell limits must satisfy 0 <= lo <= hi and power must be non-negative")
    shape = lo.shape
    lo, hi, P = lo.ravel(), hi.ravel(), P.ravel()
    top = truncated_upper(lo, hi, dist_m, qs)
    n = lo.size
    a = np.concatenate((np.zeros(n), np.zeros(n), lo))
    b = np.concatenate((lo, top, top))
    PP = np.concatenate((P, P, P))
    cell = np.arange(3 * n) >= 2 * n

    def phi(g, idx):
        out = dist_e._cdf(g)
        c = cell[idx]
        if np.any(c):
            out[c] = out[c] * dist_m._sf(g[c])
        return out

    I0, I1, I2 = _log_weighted(a, b, PP, phi, qs, dist_e.quantile(_SPLIT_QUANTILE))
    s_lo = dist_m._sf(lo)
    s_hi = dist_m._sf(top)
    terms = []
    for I in (I0, I1, I2):
        terms.append((s_lo * I[:n] - s_hi * I[n:2 * n] + I[2 * n:]).reshape(shape))
    return tuple(terms)


def expected_secrecy_gain(tau, P, dist_e: FadingDistribution, qs: QuadratureSettings = DEFAULT):
    """``E_e[{ln((1 + tau P) / (1 + g_e P))}^+]`` by adaptive quadrature."""
    S, _, _ = secrecy_gain_terms(tau, P, dist_e, qs)
    S = np.maximum(S, 0.0)
    return float(S) if S.ndim == 0 else S


def conditional_upper_gain(tau_lo, tau_hi, P, dist_m: FadingDistribution,
                           dist_e: FadingDistribution, qs: QuadratureSettings = DEFAULT):
    """``E[{ln((1 + g_m P) / (1 + g_e P))}^+ | tau_lo <= g_m < tau_hi]``."""
    lo = np.asarray(tau_lo, dtype=float)
    hi = np.asarray(tau_hi, dtype=float)
    if np.any(lo < 0) or np.any(hi <= lo):
        raise DomainError("cell must satisfy 0 <= tau_lo < tau_hi")
    theta = dist_m.mass(lo, hi)
    if np.any(theta <= 0):
        raise DomainError("cell has zero probability under the main-channel law")
    H, _, _ = cell_gain_terms(lo, hi, P, dist_m, dist_e, qs)
    out = np.maximum(H / theta, 0.0)
    return float(out) if out.ndim == 0 else out
