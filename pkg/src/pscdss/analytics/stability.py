"""Consensus success rate of one round across both tiers."""

from __future__ import annotations

import math
from typing import Sequence

from .outage import outage_probability
from .params import ChannelParams, Direction, GeometryParams, LinkBudget

# Poisson mixtures stop once the remaining tail mass is below this.
POISSON_TAIL = 1e-15


def _check_prob(name: str, p: float) -> None:
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"{name} must lie in [0, 1], got {p}")


def compose_fault_probs(pout_dl: float, pout_ul: float, pout_wl: float,
                        pout_isl: float) -> tuple[float, float]:
    """A node is faulty only when both its wireless link and its backup path fail."""
    for name, p in (("Pout_DL", pout_dl), ("Pout_UL", pout_ul),
                    ("Pout_WL", pout_wl), ("Pout_ISL", pout_isl)):
        _check_prob(name, p)
    return pout_dl * pout_wl, pout_ul * pout_isl


def binom_pmf(k: int, n: int, p: float) -> float:
    """Binomial pmf evaluated in log space; exact at p in {0, 1}."""
    if k < 0 or k > n:
        return 0.0
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if p == 1.0:
        return 1.0 if k == n else 0.0
    # math.log of the exact integer coefficient stays finite for any n
    log_c = math.log(math.comb(n, k))
    return math.exp(log_c + k * math.log(p) + (n - k) * math.log1p(-p))


def ps_semi_analytic(pf_g: float, pf_s: float, m: int, ng: int, ns: int) -> float:
    """Probability that intra-region and inter-region consensus both succeed.

    ``ng`` counts the region's ground nodes including its regulator, ``ns`` the
    region's satellites and ``m`` the number of regions (regulators). The
    intra-region tier tolerates ``(ng+ns)//3`` faults and needs a healthy
    satellite to relay; the inter-region tier tolerates ``m//2`` faulty
    regulators, the local one included.
    """
    _check_prob("Pf_G", pf_g)
    _check_prob("Pf_S", pf_s)
    if m < 1 or ng < 1 or ns < 0:
        raise ValueError("need M >= 1, Ng >= 1, Ns >= 0")
    i_max = (ng + ns) // 3
    p_j = [binom_pmf(j, m - 1, pf_g) for j in range(m)]
    inter_healthy_reg = math.fsum(p_j[: m // 2 + 1])
    inter_faulty_reg = math.fsum(p_j[: m // 2])
    ground_healthy_reg = [binom_pmf(n, ng - 1, pf_g) for n in range(ng)]
    sats = [binom_pmf(k, ns, pf_s) for k in range(ns + 1)]

    healthy_terms = []
    for i in range(i_max + 1):
        for n in range(min(i, ng - 1) + 1):
            if i - n < ns:
                healthy_terms.append((1.0 - pf_g) * ground_healthy_reg[n] * sats[i - n])
    faulty_terms = []
    for i in range(1, i_max + 1):
        for n in range(1, min(i, ng) + 1):
            if i - n < ns:
                # the regulator is one of the n faulty ground nodes
                faulty_terms.append(pf_g * ground_healthy_reg[n - 1] * sats[i - n])
    total = math.fsum(healthy_terms) * inter_healthy_reg + math.fsum(faulty_terms) * inter_faulty_reg
    return min(1.0, max(0.0, total))


def ps_poisson_mixture(pf_g: float, pf_s: float, m: int, ng: int, mean_ns: float) -> float:
    """Success rate when the region's satellite count is Poisson with the given mean."""
    if mean_ns < 0:
        raise ValueError("mean satellite count must be non-negative")
    terms = []
    mass = 0.0
    n = 0
    log_mean = math.log(mean_ns) if mean_ns > 0 else -math.inf
    while True:
        if mean_ns == 0:
            w = 1.0 if n == 0 else 0.0
        else:
            w = math.exp(n * log_mean - mean_ns - math.lgamma(n + 1))
        if w > 0:
            terms.append(w * ps_semi_analytic(pf_g, pf_s, m, ng, n))
        mass += w
        n += 1
        if (1.0 - mass < POISSON_TAIL and n > mean_ns) or n > 10_000:
            break
    return min(1.0, max(0.0, math.fsum(terms)))


def _thresholds(gamma_thr: float | Sequence[float]) -> tuple[float, float]:
    if isinstance(gamma_thr, (tuple, list)):
        gdl, gul = gamma_thr
        return float(gdl), float(gul)
    return float(gamma_thr), float(gamma_thr)


def ps_closed_form(gamma_thr, geom_dl: GeometryParams, geom_ul: GeometryParams,
                   channel: ChannelParams, budgets: tuple[LinkBudget, LinkBudget],
                   pout_wl: float, pout_isl: float, m: int, ng: int, ns: int | None) -> float:
    """End-to-end success rate from link parameters.

    ``gamma_thr`` is one linear threshold or a ``(downlink, uplink)`` pair and
    ``budgets`` is ``(downlink, uplink)``. ``ns=None`` averages over a Poisson
    satellite count whose mean is the downlink visible-satellite mean.
    """
    gdl, gul = _thresholds(gamma_thr)
    geom_dl = geom_dl.with_direction(Direction.DOWNLINK)
    geom_ul = geom_ul.with_direction(Direction.UPLINK)
    dl_budget, ul_budget = budgets
    pout_dl = outage_probability(gdl, geom_dl, channel, dl_budget)
    pout_ul = outage_probability(gul, geom_ul, channel, ul_budget)
    pf_g, pf_s = compose_fault_probs(pout_dl, pout_ul, pout_wl, pout_isl)
    if ns is None:
        return ps_poisson_mixture(pf_g, pf_s, m, ng, geom_dl.mean_visible())
    return ps_semi_analytic(pf_g, pf_s, m, ng, ns)
