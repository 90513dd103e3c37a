"""Bivariate standard normal density, orthant probabilities and helpers.

The rectangle probability uses Genz's refinement of the Drezner-Wesolowsky
method: Gauss-Legendre quadrature of Plackett's identity for moderate
correlation, and an asymptotic expansion plus quadrature of the remainder
for |rho| >= 0.925. Absolute error is close to machine precision over the
whole plane, which is what the likelihood code needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

__all__ = [
    "QuadrantProbs",
    "bvn_pdf",
    "bvn_cdf",
    "quadrant_probs",
    "norm_cdf",
    "norm_pdf",
    "norm_logcdf",
    "norm_quantile",
    "LOG_FLOOR",
]

TWO_PI = 2.0 * math.pi
# probabilities are floored here before any log is taken
LOG_FLOOR = 1e-300

_GL = {m: np.polynomial.legendre.leggauss(m) for m in (6, 12, 20)}


@dataclass(frozen=True)
class QuadrantProbs:
    """Cell probabilities of the 2x2 table of (y1, y2) outcomes."""

    p11: float | np.ndarray
    p10: float | np.ndarray
    p01: float | np.ndarray
    p00: float | np.ndarray

    def cell(self, y1: int, y2: int):
        return getattr(self, f"p{int(y1)}{int(y2)}")

    def total(self):
        return self.p11 + self.p10 + self.p01 + self.p00


def _check_rho(rho) -> float:
    rho = float(rho)
    if not math.isfinite(rho) or abs(rho) >= 1.0:
        raise DomainError(f"correlation must lie strictly inside (-1, 1), got {rho!r}")
    return rho


def norm_cdf(x):
    return special.ndtr(x)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / math.sqrt(TWO_PI)


def norm_logcdf(x):
    return special.log_ndtr(x)


def norm_quantile(p):
    """Inverse of the standard normal CDF; ``p`` must lie in (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError("norm_quantile requires 0 < p < 1")
    out = special.ndtri(arr)
    return float(out) if np.ndim(out) == 0 else out


def bvn_pdf(z1, z2, rho):
    """Standard bivariate normal density with correlation ``rho``."""
    rho = _check_rho(rho)
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if not (np.all(np.isfinite(z1)) and np.all(np.isfinite(z2))):
        raise DomainError("bvn_pdf requires finite arguments")
    one_m = (1.0 - rho) * (1.0 + rho)
    q = (z1 * z1 + z2 * z2 - 2.0 * rho * z1 * z2) / (2.0 * one_m)
    out = np.exp(-q) / (TWO_PI * math.sqrt(one_m))
    return float(out) if out.ndim == 0 else out


def _bvn_upper(h: np.ndarray, k: np.ndarray, r: float) -> np.ndarray:
    """P[X > h, Y > k] for finite 1-d arrays h, k and scalar |r| < 1."""
    ar = abs(r)
    x, w = _GL[6] if ar < 0.3 else _GL[12] if ar < 0.75 else _GL[20]
    x = x[:, None]
    w = w[:, None]
    hk = h * k

    if ar < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = math.asin(r)
        sn = np.sin(0.5 * asr * (1.0 + x))
        terms = np.exp((sn * hk - hs) / (1.0 - sn * sn))
        return np.sum(w * terms, axis=0) * asr / (2.0 * TWO_PI) + special.ndtr(-h) * special.ndtr(-k)

    if r < 0:
        k = -k
        hk = -hk
    as_ = (1.0 - r) * (1.0 + r)
    a = math.sqrt(as_)
    bs = (h - k) ** 2
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 16.0
    bvn = a * np.exp(-0.5 * (bs / as_ + hk)) * (
        1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0
    )
    ok = hk > -160.0
    hk_safe = np.where(ok, hk, 0.0)
    b = np.sqrt(bs)
    tail = np.exp(-0.5 * hk_safe) * math.sqrt(TWO_PI) * special.ndtr(-b / a) * b * (
        1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0
    )
    bvn = bvn - np.where(ok, tail, 0.0)

    a2 = 0.5 * a
    xs = (a2 * (x + 1.0)) ** 2
    rs = np.sqrt(1.0 - xs)
    expo = -0.5 * (bs / xs + hk)
    live = expo > -100.0
    expo = np.where(live, expo, -100.0)
    inner = np.exp(-hk * xs / (2.0 * (1.0 + rs) ** 2)) / rs - (1.0 + c * xs * (1.0 + d * xs))
    bvn = bvn + np.sum(np.where(live, a2 * w * np.exp(expo) * inner, 0.0), axis=0)
    bvn = -bvn / TWO_PI

    if r > 0:
        return bvn + special.ndtr(-np.maximum(h, k))
    return -bvn + np.maximum(0.0, special.ndtr(-h) - special.ndtr(-k))


def bvn_cdf(h, k, rho):
    """P[Z1 <= h, Z2 <= k] for standard normals with correlation ``rho``.

    ``h`` and ``k`` broadcast against each other and may contain +/-inf.
    ``rho`` is a scalar.
    """
    rho = _check_rho(rho)
    h, k = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float))
    shape = h.shape
    h = h.ravel()
    k = k.ravel()
    if np.any(np.isnan(h)) or np.any(np.isnan(k)):
        raise DomainError("bvn_cdf arguments must not be NaN")

    out = np.empty(h.shape)
    fin = np.isfinite(h) & np.isfinite(k)
    if np.any(fin):
        out[fin] = _bvn_upper(-h[fin], -k[fin], rho)
    if not np.all(fin):
        hi, ki = h[~fin], k[~fin]
        val = np.where(hi == np.inf, special.ndtr(ki), np.where(ki == np.inf, special.ndtr(hi), 0.0))
        val = np.where((hi == -np.inf) | (ki == -np.inf), 0.0, val)
        out[~fin] = val
    np.clip(out, 0.0, 1.0, out=out)
    out = out.reshape(shape)
    return float(out) if out.ndim == 0 else out


def quadrant_probs(v1, v2, rho) -> QuadrantProbs:
    """Probabilities of the four (y1, y2) cells given systematic utilities.

    y_j = 1 when v_j + e_j > 0, with (e1, e2) standard bivariate normal.
    Each cell is evaluated directly so small cells keep relative accuracy.
    """
    rho = _check_rho(rho)
    return QuadrantProbs(
        p11=bvn_cdf(v1, v2, rho),
        p10=bvn_cdf(v1, np.negative(v2), -rho),
        p01=bvn_cdf(np.negative(v1), v2, -rho),
        p00=bvn_cdf(np.negative(v1), np.negative(v2), rho),
    )
