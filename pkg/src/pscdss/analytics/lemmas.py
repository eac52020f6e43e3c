"""Transmitter visibility, nearest-transmitter distance and interference
Laplace transform on concentric spheres."""

from __future__ import annotations

import math

import numpy as np

from .params import ChannelParams, Direction, GeometryParams
from .special import hyp2f1


def visibility_probability(geom: GeometryParams) -> float:
    """Probability that at least one transmitter lies in the receiver's visible cap."""
    re, rs = geom.re, geom.rs
    if geom.direction is Direction.DOWNLINK:
        lam = geom.lambda_s
        dmax = geom.d_max
        mean = math.pi * lam * rs * (dmax**2 + 2 * re * rs - re**2 - rs**2) / re
    else:
        lam = geom.lambda_g
        mean = 2.0 * math.pi * lam * re**2 * (1.0 - math.cos(geom.phi_max))
    return -math.expm1(-mean)


def _xi(geom: GeometryParams) -> float:
    lam, kap = geom.density, geom.kappa
    denom = -math.expm1(-math.pi * lam * kap * (geom.d_max**2 - geom.d_min**2))
    return 2.0 * math.pi * lam * kap * math.exp(math.pi * lam * kap * geom.d_min**2) / denom


def nearest_distance_pdf(geom: GeometryParams, d):
    """Density of the serving (nearest) distance given the cap is non-empty.

    Vectorised over ``d``; zero outside ``[d_min, d_max]``. A density of zero
    (empty process) gives an all-zero density.
    """
    d = np.asarray(d, dtype=float)
    lam, kap = geom.density, geom.kappa
    if lam == 0.0:
        return np.zeros_like(d)
    inside = (d >= geom.d_min) & (d <= geom.d_max)
    # xi * d * exp(-pi lam kap d^2), folded to keep the exponent small
    val = (
        2.0 * math.pi * lam * kap * d
        * np.exp(-math.pi * lam * kap * (d * d - geom.d_min**2))
        / -math.expm1(-math.pi * lam * kap * (geom.d_max**2 - geom.d_min**2))
    )
    return np.where(inside, val, 0.0)


def nearest_distance_cdf(geom: GeometryParams, d):
    d = np.clip(np.asarray(d, dtype=float), geom.d_min, geom.d_max)
    lam, kap = geom.density, geom.kappa
    num = -np.expm1(-math.pi * lam * kap * (d * d - geom.d_min**2))
    den = -math.expm1(-math.pi * lam * kap * (geom.d_max**2 - geom.d_min**2))
    return num / den


def _interference_exponent(c: float, x: float, alpha: int) -> float:
    # x^(alpha+1) / (c^alpha (alpha+1)) * 2F1(alpha, alpha+1; alpha+2; -x/c)
    return (
        x ** (alpha + 1) / (c**alpha * (alpha + 1))
        * hyp2f1(alpha, alpha + 1, alpha + 2, -x / c)
    )


def laplace_kernel(s: float, lam: float, r_ratio: float, d_max: float, d: float,
                   gbar: float, alpha: int, beta: float) -> float:
    """The closed-form Laplace transform of the interference outside radius ``d``.

    ``r_ratio`` is transmitter-sphere radius over receiver-sphere radius.
    """
    if s < 0:
        raise ValueError("Laplace argument must be non-negative")
    if d > d_max:
        d = d_max
    void = -math.pi * lam * r_ratio * (d_max**2 - d**2)
    if s == 0.0 or gbar == 0.0 or lam == 0.0:
        return 1.0
    if math.isinf(s):
        return math.exp(void)
    c = s * gbar * beta
    if c <= 1e-12 * d * d:
        # weak interference: first-order expansion, exact to double precision here
        return math.exp(-math.pi * lam * r_ratio * alpha * c * math.log(d_max**2 / (d * d)))
    corr = _interference_exponent(c, d_max**2, alpha) - _interference_exponent(c, d * d, alpha)
    return math.exp(min(0.0, void + math.pi * lam * r_ratio * corr))


def laplace_interference(s: float, geom: GeometryParams, channel: ChannelParams,
                         gbar: float, d0: float) -> float:
    """Laplace transform of the normalised aggregate interference given serving distance d0."""
    return laplace_kernel(s, geom.density, geom.kappa, geom.d_max, d0, gbar,
                          channel.alpha, channel.beta)
