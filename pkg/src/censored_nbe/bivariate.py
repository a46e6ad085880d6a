"""Bivariate building blocks: the standard bivariate normal CDF and the
Husler-Reiss exponent function with its partial derivatives.

``bvn_cdf`` follows Genz's vectorised rendering of the Drezner-Wesolowsky
method (20-point Gauss-Legendre rule throughout).
"""

from __future__ import annotations

import numpy as np
from scipy.special import log_ndtr, ndtr

__all__ = ["bvn_cdf", "bvn_upper", "bvn_pdf", "hr_exponent_V", "hr_exponent", "hr_arguments",
           "hr_log_terms"]

_GL_X = np.array([
    0.9931285991850949, 0.9639719272779138, 0.9122344282513259, 0.8391169718222188,
    0.7463319064601508, 0.6360536807265150, 0.5108670019508271, 0.3737060887154196,
    0.2277858511416451, 0.07652652113349733,
])
_GL_W = np.array([
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
    0.1019301198172404, 0.1181945319615184, 0.1316886384491766, 0.1420961093183821,
    0.1491729864726037, 0.1527533871307259,
])
_X = np.concatenate([1.0 - _GL_X, 1.0 + _GL_X])
_W = np.concatenate([_GL_W, _GL_W])
_TWO_PI = 2.0 * np.pi


def bvn_upper(dh, dk, r):
    """``P(X > dh, Y > dk)`` for a standard bivariate normal with correlation ``r``."""
    dh, dk, r = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (dh, dk, r)))
    shape = dh.shape
    h, k, r = dh.ravel().copy(), dk.ravel().copy(), r.ravel().copy()
    out = np.empty(h.shape)

    r = np.clip(r, -1.0, 1.0)
    one = np.abs(r) >= 1.0
    if np.any(one):
        hh, kk, rr = h[one], k[one], r[one]
        out[one] = np.where(
            rr > 0,
            ndtr(-np.maximum(hh, kk)),
            np.maximum(0.0, ndtr(-hh) - ndtr(kk)),
        )

    mid = ~one & (np.abs(r) < 0.925)
    if np.any(mid):
        hh, kk, rr = h[mid], k[mid], r[mid]
        hk = hh * kk
        hs = 0.5 * (hh * hh + kk * kk)
        asr = 0.5 * np.arcsin(rr)
        sn = np.sin(asr[:, None] * _X[None, :])
        with np.errstate(invalid="ignore"):
            bvn = np.exp((sn * hk[:, None] - hs[:, None]) / (1.0 - sn * sn)) @ _W
        out[mid] = bvn * asr / _TWO_PI + ndtr(-hh) * ndtr(-kk)

    high = ~one & ~mid
    if np.any(high):
        hh, kk, rr = h[high], k[high], r[high]
        kk = np.where(rr < 0, -kk, kk)
        hk = hh * kk
        as_ = 1.0 - rr * rr
        a = np.sqrt(as_)
        bs = (hh - kk) ** 2
        asr = -0.5 * (bs / as_ + hk)
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 80.0
        with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
            bvn = np.where(
                asr > -100,
                a * np.exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_**2),
                0.0,
            )
            b = np.sqrt(bs)
            sp = np.sqrt(_TWO_PI) * ndtr(-b / a)
            bvn = np.where(
                hk > -100,
                bvn - np.exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0),
                bvn,
            )
            a2 = a / 2.0
            xs = (a2[:, None] * _X[None, :]) ** 2
            asr2 = -0.5 * (bs[:, None] / xs + hk[:, None])
            keep = asr2 > -100
            spx = 1.0 + c[:, None] * xs * (1.0 + 5.0 * d[:, None] * xs)
            rs = np.sqrt(1.0 - xs)
            ep = np.exp(-(hk[:, None] / 2.0) * xs / (1.0 + rs) ** 2) / rs
            terms = np.where(keep, np.exp(asr2) * (spx - ep), 0.0)
        bvn = (a2 * (terms @ _W) - bvn) / _TWO_PI
        pos = rr > 0
        res = np.empty_like(bvn)
        res[pos] = bvn[pos] + ndtr(-np.maximum(hh[pos], kk[pos]))
        neg = ~pos
        hn, kn, bn = hh[neg], kk[neg], bvn[neg]
        L = np.where(hn < 0, ndtr(kn) - ndtr(hn), ndtr(-hn) - ndtr(-kn))
        res[neg] = np.where(hn >= kn, -bn, L - bn)
        out[high] = res

    # infinite limits
    out = np.where(np.isposinf(h) | np.isposinf(k), 0.0, out)
    out = np.where(np.isneginf(h), ndtr(-k), out)
    out = np.where(np.isneginf(k) & ~np.isneginf(h), ndtr(-h), out)
    out = np.clip(out, 0.0, 1.0).reshape(shape)
    return out if out.ndim else float(out)


def bvn_cdf(z1, z2, rho):
    """Standard bivariate normal CDF ``P(X <= z1, Y <= z2)`` with correlation ``rho``.

    ``|rho| = 1`` returns the comonotone / countermonotone limits.
    """
    return bvn_upper(-np.asarray(z1, dtype=float), -np.asarray(z2, dtype=float), rho)


def bvn_pdf(z1, z2, rho):
    z1, z2, rho = (np.asarray(v, dtype=float) for v in (z1, z2, rho))
    om = 1.0 - rho * rho
    q = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / om
    return np.exp(-0.5 * q) / (_TWO_PI * np.sqrt(om))


def _phi(x):
    return np.exp(-0.5 * x * x) / np.sqrt(_TWO_PI)


def hr_exponent(z1, z2, gamma_h):
    """Husler-Reiss exponent ``V`` and partials ``(V, V1, V2, V12)``.

    ``gamma_h`` is the semivariogram at the pair's lag, so ``a = sqrt(2 gamma_h)``.
    ``gamma_h = 0`` gives the comonotone limit ``V = 1 / min(z1, z2)``.
    """
    z1, z2, g = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (z1, z2, gamma_h)))
    a = np.sqrt(2.0 * g)
    zero = a <= 0
    a_safe = np.where(zero, 1.0, a)
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.log(z2 / z1)
        q1 = a_safe / 2.0 + lr / a_safe
        q2 = a_safe - q1
        P1, P2 = ndtr(q1), ndtr(q2)
        V = P1 / z1 + P2 / z2
        V1 = -P1 / z1**2
        V2 = -P2 / z2**2
        V12 = -_phi(q1) / (a_safe * z1**2 * z2)
    if np.any(zero):
        zmin = np.minimum(z1, z2)
        V = np.where(zero, 1.0 / zmin, V)
        V1 = np.where(zero, np.where(z1 < z2, -1.0 / z1**2, 0.0), V1)
        V2 = np.where(zero, np.where(z2 < z1, -1.0 / z2**2, 0.0), V2)
        V12 = np.where(zero, 0.0, V12)
    if V.ndim == 0:
        return float(V), float(V1), float(V2), float(V12)
    return V, V1, V2, V12


def hr_exponent_V(z1, z2, gamma_h):
    """Husler-Reiss exponent function ``V(z1, z2)`` alone."""
    return hr_exponent(z1, z2, gamma_h)[0]


def hr_arguments(z1, z2, gamma_h):
    """Standardised arguments ``(a, q1, q2)`` with ``V = Phi(q1) / z1 + Phi(q2) / z2``."""
    z1, z2, g = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (z1, z2, gamma_h)))
    a = np.sqrt(2.0 * g)
    with np.errstate(divide="ignore", invalid="ignore"):
        q1 = a / 2.0 + np.log(z2 / z1) / a
    return a, q1, a - q1


def hr_log_terms(z1, z2, gamma_h):
    """``V`` with ``log(-V1)``, ``log(-V2)`` and ``log(V1 V2 - V12)`` in log space.

    Deep in the joint tail ``Phi(q)`` underflows long before its logarithm
    does, so the partial derivatives are assembled from ``log_ndtr``.
    Requires ``gamma_h > 0``.
    """
    z1, z2, g = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (z1, z2, gamma_h)))
    a, q1, q2 = hr_arguments(z1, z2, g)
    with np.errstate(divide="ignore", invalid="ignore"):
        lp1, lp2 = log_ndtr(q1), log_ndtr(q2)
        lz1, lz2 = np.log(z1), np.log(z2)
        V = np.exp(lp1 - lz1) + np.exp(lp2 - lz2)
        lV1, lV2 = lp1 - 2.0 * lz1, lp2 - 2.0 * lz2
        lphi = -0.5 * (q1 * q1 + np.log(_TWO_PI))
        lmix = np.logaddexp(lp1 + lp2 - lz2, lphi - np.log(a)) - 2.0 * lz1 - lz2
    if V.ndim == 0:
        return float(V), float(lV1), float(lV2), float(lmix)
    return V, lV1, lV2, lmix
