"""Link outage probabilities for the downlink and uplink."""

from __future__ import annotations

import math

import numpy as np

from .lemmas import laplace_kernel, nearest_distance_pdf, visibility_probability
from .params import ChannelParams, GeometryParams, LinkBudget
from .special import derivative, gauss_kronrod

QUAD_ATOL = 1e-8
QUAD_MAX_INTERVALS = 2000


def _chi(geom: GeometryParams, channel: ChannelParams, gbar: float, d: float):
    # Laplace transform of the interference as a function of u = gamma d^2 / beta
    def chi(u: float) -> float:
        return laplace_kernel(u, geom.density, geom.kappa, geom.d_max, d, gbar,
                              channel.alpha, channel.beta)
    return chi


def _success_given_distance(gamma: float, d: float, noise: float, geom: GeometryParams,
                            channel: ChannelParams, gbar: float) -> float:
    u = gamma * d * d / channel.beta
    chi = _chi(geom, channel, gbar, d)
    total = 0.0
    for m in range(channel.alpha):
        inner = 0.0
        for k in range(m + 1):
            dk = chi(u) if k == 0 else derivative(chi, u, k)
            inner += math.comb(m, k) * noise ** (m - k) * (-1) ** k * dk
        total += u**m / math.factorial(m) * inner
    return math.exp(-u * noise) * total


def coverage_integral(gamma: float, geom: GeometryParams, channel: ChannelParams,
                      budget: LinkBudget, atol: float = QUAD_ATOL) -> float:
    """Probability SINR >= gamma given a visible transmitter (the eta integral)."""
    if geom.density == 0.0:
        return 1.0
    noise = budget.normalized_noise
    gbar = budget.gbar

    def integrand(ds: np.ndarray) -> np.ndarray:
        pdf = nearest_distance_pdf(geom, ds)
        vals = np.array([
            _success_given_distance(gamma, float(d), noise, geom, channel, gbar) if p > 0 else 0.0
            for d, p in zip(ds, pdf)
        ])
        return pdf * vals

    value, _ = gauss_kronrod(integrand, geom.d_min, geom.d_max, atol=atol,
                             max_intervals=QUAD_MAX_INTERVALS)
    return min(1.0, max(0.0, value))


def outage_probability(gamma_thr: float, geom: GeometryParams, channel: ChannelParams,
                       budget: LinkBudget) -> float:
    """Outage probability: P(SINR < gamma | visible) * P(visible).

    ``gamma_thr`` is linear. Direction is taken from ``geom``.
    """
    if gamma_thr <= 0:
        raise ValueError("SINR threshold must be positive (linear units)")
    p_vis = visibility_probability(geom)
    if p_vis == 0.0:
        return 0.0
    if math.isinf(gamma_thr):
        return p_vis
    eta = coverage_integral(gamma_thr, geom, channel, budget)
    return (1.0 - eta) * p_vis


def db(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)
