import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from oracles import fault_patterns, ps_by_enumeration
from pscdss.analytics.outage import db, outage_probability
from pscdss.analytics.params import Direction, GeometryParams, downlink_budget, gamma_params, uplink_budget
from pscdss.analytics.stability import (binom_pmf, compose_fault_probs, ps_closed_form,
                                        ps_poisson_mixture, ps_semi_analytic)

prob = st.floats(0.0, 1.0)


@pytest.mark.parametrize("ng,ns,m", [(1, 1, 1), (3, 2, 3), (4, 3, 5), (2, 5, 4), (6, 1, 2)])
@pytest.mark.parametrize("pf_g,pf_s", [(0.0, 0.0), (0.1, 0.3), (0.5, 0.5), (0.9, 0.05), (1.0, 0.0)])
def test_semi_analytic_equals_enumeration(ng, ns, m, pf_g, pf_s):
    assert ps_semi_analytic(pf_g, pf_s, m, ng, ns) == pytest.approx(
        ps_by_enumeration(pf_g, pf_s, ng, ns, m), abs=1e-12)


def test_no_satellites_means_no_relay():
    assert ps_semi_analytic(0.0, 0.0, 3, 5, 0) == 0.0


def test_fault_free_always_succeeds():
    assert ps_semi_analytic(0.0, 0.0, 60, 40, 20) == pytest.approx(1.0, abs=1e-15)


@given(k=st.integers(0, 60), n=st.integers(0, 60), p=prob)
def test_binom_pmf_matches_scipy(k, n, p):
    assert binom_pmf(k, n, p) == pytest.approx(float(stats.binom.pmf(k, n, p)), rel=1e-9, abs=1e-300)


@given(pf_g=prob, pf_s=prob, m=st.integers(1, 12), ng=st.integers(1, 20), ns=st.integers(0, 20))
def test_ps_is_probability(pf_g, pf_s, m, ng, ns):
    assert 0.0 <= ps_semi_analytic(pf_g, pf_s, m, ng, ns) <= 1.0


@given(a=prob, b=prob, pf_s=prob, m=st.integers(1, 8), ng=st.integers(1, 12), ns=st.integers(1, 10))
def test_ps_non_increasing_in_ground_faults(a, b, pf_s, m, ng, ns):
    lo, hi = sorted((a, b))
    assert ps_semi_analytic(lo, pf_s, m, ng, ns) >= ps_semi_analytic(hi, pf_s, m, ng, ns) - 1e-12


@given(a=prob, b=prob, pf_g=prob, m=st.integers(1, 8), ng=st.integers(1, 12), ns=st.integers(1, 10))
def test_ps_non_increasing_in_satellite_faults(a, b, pf_g, m, ng, ns):
    lo, hi = sorted((a, b))
    assert ps_semi_analytic(pf_g, lo, m, ng, ns) >= ps_semi_analytic(pf_g, hi, m, ng, ns) - 1e-12


def test_semi_analytic_rejects_bad_probabilities():
    with pytest.raises(ValueError):
        ps_semi_analytic(1.2, 0.0, 2, 3, 1)
    with pytest.raises(ValueError):
        compose_fault_probs(0.1, -0.1, 1.0, 1.0)


def test_compose_fault_probs():
    assert compose_fault_probs(0.2, 0.5, 0.5, 0.1) == pytest.approx((0.1, 0.05))


def test_poisson_mixture_equals_direct_sum():
    mean = 6.3
    direct = math.fsum(float(stats.poisson.pmf(k, mean)) * ps_semi_analytic(0.1, 0.2, 5, 8, k)
                       for k in range(0, 80))
    assert ps_poisson_mixture(0.1, 0.2, 5, 8, mean) == pytest.approx(direct, abs=1e-13)


def test_closed_form_is_the_composition():
    ch = gamma_params()
    g = GeometryParams(lambda_s=1.5e-12, lambda_g=2e-13)
    dl_b, ul_b = downlink_budget(), uplink_budget()
    gdl, gul = db(-2.0), db(1.0)
    pdl = outage_probability(gdl, g.with_direction(Direction.DOWNLINK), ch, dl_b)
    pul = outage_probability(gul, g.with_direction(Direction.UPLINK), ch, ul_b)
    pf = compose_fault_probs(pdl, pul, 0.6, 0.4)
    assert ps_closed_form((gdl, gul), g, g, ch, (dl_b, ul_b), 0.6, 0.4, 7, 9, 6) == pytest.approx(
        ps_semi_analytic(*pf, 7, 9, 6), abs=1e-12)
    mixed = ps_closed_form((gdl, gul), g, g, ch, (dl_b, ul_b), 0.6, 0.4, 7, 9, None)
    assert mixed == pytest.approx(ps_poisson_mixture(*pf, 7, 9, g.mean_visible()), abs=1e-12)
