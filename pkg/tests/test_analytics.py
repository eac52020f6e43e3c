import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from pscdss.analytics.lemmas import (laplace_interference, laplace_kernel, nearest_distance_cdf,
                                     nearest_distance_pdf, visibility_probability)
from pscdss.analytics.outage import db, outage_probability
from pscdss.analytics.params import (Direction, GeometryParams, LinkBudget, downlink_budget,
                                     gamma_params, uplink_budget)
from pscdss.montecarlo import empirical_visibility, sample_nearest_distances, simulate_link_outage

DL = GeometryParams()
UL = GeometryParams(direction=Direction.UPLINK)
CH = gamma_params()


def test_gamma_fit_of_default_channel():
    assert CH.alpha == 1
    assert CH.mean == pytest.approx(2 * 0.851 + 0.278)
    assert CH.beta == pytest.approx(1.98, abs=1e-12)


def test_gamma_params_validation():
    with pytest.raises(ValueError):
        gamma_params(b0=0.0)
    with pytest.raises(ValueError):
        gamma_params(omega=-1.0)


def test_visible_distance_limits():
    assert DL.d_min == 500e3
    assert DL.d_max == pytest.approx(1694.567e3, abs=1.0)
    assert UL.d_max == pytest.approx(2573.13e3, abs=1.0)


def _cap_area_by_angle(g: GeometryParams) -> float:
    # spherical-cap area on the transmitter sphere from the law of cosines
    rt, rr = g.tx_radius, g.rx_radius
    cos_max = (rt * rt + rr * rr - g.d_max**2) / (2 * rt * rr)
    return 2 * math.pi * rt * rt * (1 - cos_max)


@pytest.mark.parametrize("g", [DL, UL, DL.with_altitude(900e3), UL.with_altitude(300e3)])
def test_cap_area_matches_spherical_cap(g):
    assert g.cap_area() == pytest.approx(_cap_area_by_angle(g), rel=1e-12)


@pytest.mark.parametrize("g", [DL, UL])
def test_visibility_is_void_complement(g):
    assert visibility_probability(g) == pytest.approx(1 - math.exp(-g.mean_visible()), rel=1e-12)


def test_visibility_zero_density():
    assert visibility_probability(GeometryParams(lambda_s=0.0)) == 0.0


@pytest.mark.parametrize("g", [DL, UL, GeometryParams(lambda_s=5e-12)])
def test_nearest_pdf_normalises(g):
    val, _ = integrate.quad(lambda d: float(nearest_distance_pdf(g, d)), g.d_min, g.d_max,
                            epsabs=1e-12, limit=200)
    assert val == pytest.approx(1.0, abs=1e-6)


def test_nearest_cdf_is_integral_of_pdf():
    for d in np.linspace(DL.d_min, DL.d_max, 7):
        val, _ = integrate.quad(lambda x: float(nearest_distance_pdf(DL, x)), DL.d_min, d)
        assert float(nearest_distance_cdf(DL, d)) == pytest.approx(val, abs=1e-9)
    assert float(nearest_distance_pdf(DL, DL.d_max + 1)) == 0.0


def _full_sphere_nearest(g: GeometryParams, trials: int, rng) -> np.ndarray:
    # independent sampler: Poisson points uniform on the whole sphere
    mean_total = g.density * 4 * math.pi * g.tx_radius**2
    receiver = np.array([0.0, 0.0, g.rx_radius])
    out = []
    for _ in range(trials):
        v = rng.normal(size=(rng.poisson(mean_total), 3))
        pts = g.tx_radius * v / np.linalg.norm(v, axis=1, keepdims=True)
        d = np.linalg.norm(pts - receiver, axis=1)
        d = d[d <= g.d_max]
        if d.size:
            out.append(d.min())
    return np.array(out)


def test_cap_sampler_agrees_with_full_sphere_sampler():
    rng = np.random.default_rng(11)
    ref = _full_sphere_nearest(DL, 3000, rng)
    d, _ = sample_nearest_distances(DL, 20000, np.random.default_rng(12))
    d = d[~np.isnan(d)]
    assert stats.ks_2samp(ref, d).pvalue > 0.01
    assert stats.kstest(ref, lambda x: nearest_distance_cdf(DL, x)).pvalue > 0.01


def test_empirical_visibility():
    p, err = empirical_visibility(DL, 50000, seed=3)
    assert abs(p - visibility_probability(DL)) < 4 * err


def _laplace_by_quadrature(s, g: GeometryParams, d0, gbar, alpha, beta):
    # E[exp(-s I)] for a PPP of Gamma-faded r^-2 interferers between d0 and d_max
    c = s * gbar * beta
    f = lambda r: (1 - (1 + c / r**2) ** (-alpha)) * 2 * math.pi * g.kappa * r
    val, _ = integrate.quad(f, d0, g.d_max, epsrel=1e-12, limit=200)
    return math.exp(-g.density * val)


@given(s_exp=st.floats(-3, 4), frac=st.floats(0, 1), alpha=st.integers(1, 3),
       gbar=st.floats(0.01, 1.0), uplink=st.booleans())
def test_laplace_matches_direct_quadrature(s_exp, frac, alpha, gbar, uplink):
    g = UL if uplink else DL
    d0 = g.d_min + frac * (g.d_max - g.d_min)
    beta = CH.mean / alpha
    s = 10.0**s_exp * d0**2  # scale so s/r^2 spans weak to strong interference
    got = laplace_kernel(s, g.density, g.kappa, g.d_max, d0, gbar, alpha, beta)
    assert got == pytest.approx(_laplace_by_quadrature(s, g, d0, gbar, alpha, beta), rel=1e-8)


def test_laplace_limits():
    assert laplace_interference(0.0, DL, CH, 0.1, DL.d_min) == 1.0
    void = math.exp(-DL.density * DL.cap_area())
    assert laplace_interference(math.inf, DL, CH, 0.1, DL.d_min) == pytest.approx(void, rel=1e-12)
    assert laplace_interference(1e40, DL, CH, 0.1, DL.d_min) == pytest.approx(void, abs=1e-6)
    with pytest.raises(ValueError):
        laplace_interference(-1.0, DL, CH, 0.1, DL.d_min)


@given(s1=st.floats(0, 1e14), s2=st.floats(0, 1e14))
def test_laplace_is_decreasing(s1, s2):
    lo, hi = sorted((s1, s2))
    assert (laplace_interference(lo, DL, CH, 0.1, 600e3)
            >= laplace_interference(hi, DL, CH, 0.1, 600e3) - 1e-15)


# Values frozen from a 2e6-trial Monte Carlo cross-check of the analytic form.
OUTAGE_TABLE = [
    (Direction.DOWNLINK, -10, 0.0175), (Direction.DOWNLINK, 0, 0.1545),
    (Direction.DOWNLINK, 10, 0.6868), (Direction.UPLINK, -10, 0.0082),
    (Direction.UPLINK, 0, 0.0751), (Direction.UPLINK, 10, 0.4066),
]


@pytest.mark.parametrize("direction,gamma_db,expected", OUTAGE_TABLE)
def test_outage_reference_values(direction, gamma_db, expected):
    g = GeometryParams(direction=direction)
    budget = downlink_budget() if direction is Direction.DOWNLINK else uplink_budget()
    assert outage_probability(db(gamma_db), g, CH, budget) == pytest.approx(expected, abs=1e-4)


def test_outage_limits():
    b = downlink_budget()
    assert outage_probability(math.inf, DL, CH, b) == pytest.approx(visibility_probability(DL))
    assert outage_probability(1e-8, DL, CH, b) < 1e-6
    assert outage_probability(1.0, GeometryParams(lambda_s=0.0), CH, b) == 0.0
    with pytest.raises(ValueError):
        outage_probability(0.0, DL, CH, b)


@given(g1=st.floats(-15, 15), g2=st.floats(-15, 15))
def test_outage_non_decreasing_in_threshold(g1, g2):
    lo, hi = sorted((g1, g2))
    b = uplink_budget()
    assert outage_probability(db(lo), UL, CH, b) <= outage_probability(db(hi), UL, CH, b) + 1e-9


@given(l1=st.floats(0.5e-13, 4e-13), l2=st.floats(0.5e-13, 4e-13))
def test_outage_non_decreasing_in_interferer_density(l1, l2):
    lo, hi = sorted((l1, l2))
    b = uplink_budget()
    p = [outage_probability(1.0, GeometryParams(lambda_g=x, direction=Direction.UPLINK), CH, b)
         for x in (lo, hi)]
    assert p[0] <= p[1] + 1e-9


def test_noise_only_link_is_exponential_tail():
    # with no interference the outage reduces to a Gamma(1) CDF averaged over distance
    b = LinkBudget(pt_dbw=-100.0, gt_dbi=0.0, gr_dbi=0.0, gbar=0.0)
    gamma = 1.0
    noise = b.normalized_noise
    expected, _ = integrate.quad(
        lambda d: float(nearest_distance_pdf(DL, d)) * -math.expm1(-gamma * noise * d * d / CH.beta),
        DL.d_min, DL.d_max, epsrel=1e-12)
    got = outage_probability(gamma, DL, CH, b)
    assert got == pytest.approx(expected * visibility_probability(DL), rel=1e-6)


def test_outage_against_monte_carlo():
    gammas = [db(x) for x in (-6, 0, 6)]
    for g, b in ((DL, downlink_budget()), (UL, uplink_budget())):
        mc, err = simulate_link_outage(gammas, g, CH, b, 40000, seed=5)
        for x, p, e in zip(gammas, mc, err):
            assert abs(outage_probability(x, g, CH, b) - p) < 4 * e
