import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from subacct.dist import (
    Discrete,
    Gaussian,
    Laplace,
    Mixture,
    ProductDistribution,
    cdf,
    log_density_ratio,
    mixture,
    pdf,
    sample,
)
from subacct.errors import MismatchedSupportError, UnsupportedVariantError

locs = st.floats(-3, 3)
scales = st.floats(0.2, 4)


@st.composite
def continuous(draw):
    kind = draw(st.sampled_from(["gauss", "laplace", "mix"]))
    if kind == "gauss":
        return Gaussian(draw(locs), draw(scales))
    if kind == "laplace":
        return Laplace(draw(locs), draw(scales))
    w = draw(st.floats(0.05, 0.95))
    return Mixture((w, 1 - w), (Gaussian(draw(locs), draw(scales)), Laplace(draw(locs), draw(scales))))


def test_pdf_examples():
    assert pdf(Gaussian(0, 1), 0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert pdf(Laplace(0, 2), 0) == pytest.approx(0.25, rel=1e-15)
    m = Mixture((0.5, 0.5), (Laplace(-1, 2), Laplace(1, 2)))
    assert pdf(m, 0) == pytest.approx(math.exp(-0.5) / 4, rel=1e-14)
    assert pdf(m, 0) == pytest.approx(0.15163, abs=1e-5)


def test_cdf_examples():
    assert cdf(Gaussian(0, 1), 0) == 0.5
    assert cdf(Laplace(0, 1), 0) == 0.5
    assert cdf(Laplace(0, 2), 2) == pytest.approx(1 - math.exp(-1) / 2, rel=1e-15)


def test_cdf_rejects_discrete():
    with pytest.raises(UnsupportedVariantError):
        cdf(Discrete((0, 1), (0.5, 0.5)), 0)


def test_log_density_ratio_examples():
    assert log_density_ratio(Gaussian(0, 0.7), Gaussian(1, 0.7), 0.5) == pytest.approx(0, abs=1e-15)
    assert log_density_ratio(Gaussian(0, 1), Gaussian(1, 1), 0) == pytest.approx(0.5, rel=1e-14)
    with pytest.raises(MismatchedSupportError):
        log_density_ratio(Gaussian(0, 1), Discrete((0,), (1,)), 0)


def test_log_density_ratio_discrete_infinities():
    p = Discrete((0, 1), (1, 0))
    q = Discrete((0, 1), (0, 1))
    assert log_density_ratio(p, q, 0) == math.inf
    assert log_density_ratio(p, q, 1) == -math.inf


@given(continuous(), continuous(), st.floats(-10, 10))
def test_log_density_ratio_antisymmetric(p, q, x):
    a = log_density_ratio(p, q, x)
    b = log_density_ratio(q, p, x)
    assert float(a) == pytest.approx(-float(b), abs=1e-12)


def test_log_density_ratio_far_tail_finite():
    # a naive density ratio underflows to 0/0 here
    val = log_density_ratio(Gaussian(0, 1), Gaussian(1, 1), 60.0)
    assert val == pytest.approx(0.5 - 60.0, rel=1e-14)


def _scipy_mass(d, a, b):
    comps = getattr(d, "components", (d,))
    weights = getattr(d, "weights", (1.0,))
    total = 0.0
    for w, c in zip(weights, comps):
        law = stats.norm(c.location, c.scale) if isinstance(c, Gaussian) else stats.laplace(
            c.location, c.scale)
        total += w * (law.cdf(b) - law.cdf(a))
    return total


@given(continuous())
def test_density_integrates_over_window(d):
    comps = getattr(d, "components", (d,))
    s = max(c.scale for c in comps)
    lo = min(c.location for c in comps) - 20 * s
    hi = max(c.location for c in comps) + 20 * s
    pts = sorted({lo, hi} | {k for k in d.kinks() if lo < k < hi}
                 | {c.location for c in comps})
    total = sum(integrate.quad(lambda x: float(pdf(d, x)), a, b, epsabs=1e-14, limit=200)[0]
                for a, b in zip(pts[:-1], pts[1:]))
    # a Laplace law keeps only 1 - e^-20 of its mass in the window, so compare to the window mass
    assert total == pytest.approx(_scipy_mass(d, lo, hi), abs=1e-9)
    if isinstance(d, Gaussian):
        assert total == pytest.approx(1.0, abs=1e-9)


@given(continuous(), st.lists(st.floats(-15, 15), min_size=5, max_size=5))
def test_cdf_matches_quadrature(d, xs):
    comps = getattr(d, "components", (d,))
    lo = min(c.location for c in comps) - 40 * max(c.scale for c in comps)
    for x in xs:
        pts = sorted({p for p in d.kinks() if lo < p < x})
        edges = [lo] + pts + [x]
        val = sum(integrate.quad(lambda t: float(pdf(d, t)), a, b, epsabs=1e-13, limit=200)[0]
                  for a, b in zip(edges[:-1], edges[1:]) if b > a)
        assert float(cdf(d, x)) == pytest.approx(val, abs=1e-9)


def test_cdf_agrees_with_scipy():
    x = np.linspace(-8, 8, 101)
    np.testing.assert_allclose(Gaussian(0.3, 1.7).cdf(x), stats.norm(0.3, 1.7).cdf(x), atol=1e-15)
    np.testing.assert_allclose(Laplace(-1, 2).cdf(x), stats.laplace(-1, 2).cdf(x), atol=1e-15)
    np.testing.assert_allclose(Laplace(-1, 2).sf(x), stats.laplace(-1, 2).sf(x), rtol=1e-13)


def test_interval_mass_keeps_tail_precision():
    g = Gaussian(0, 1)
    m = float(g.interval_mass(30.0, 31.0))
    assert m == pytest.approx(stats.norm.sf(30) - stats.norm.sf(31), rel=1e-12)
    assert m > 0


def test_sample_determinism():
    d = Mixture((0.3, 0.7), (Gaussian(0, 1), Laplace(2, 1)))
    a = sample(d, np.random.default_rng(5), 100)
    b = sample(d, np.random.default_rng(5), 100)
    np.testing.assert_array_equal(a, b)


def test_sample_mean():
    x = sample(Gaussian(0, 1), np.random.default_rng(1), 10**6)
    assert abs(x.mean()) < 0.01


def test_mixture_component_frequencies():
    d = Mixture((0.9, 0.1), (Gaussian(-100, 1), Gaussian(100, 1)))
    x = sample(d, np.random.default_rng(2), 10**6)
    assert abs((x > 0).mean() - 0.1) < 0.003


def test_mixture_validation():
    with pytest.raises(ValueError):
        Mixture((0.5, 0.6), (Gaussian(0, 1), Gaussian(1, 1)))
    with pytest.raises(ValueError):
        Mixture((1.0,) + (0.0,) * 8, (Gaussian(0, 1),) * 9)
    with pytest.raises(ValueError):
        Gaussian(0, 0)
    with pytest.raises(ValueError):
        Laplace(0, -1)


def test_mixture_helper_collapses():
    assert mixture([1.0, 0.0], [Gaussian(0, 1), Gaussian(1, 1)]) == Gaussian(0, 1)
    assert mixture([0.0, 1.0], [Gaussian(0, 1), Gaussian(1, 1)]) == Gaussian(1, 1)


def test_discrete_exact_probabilities():
    from fractions import Fraction

    d = Discrete((0, 1), (Fraction(3, 4), Fraction(1, 4)))
    assert d.prob(1) == Fraction(1, 4)
    assert d.prob(7) == 0
    assert pdf(d, 0) == 0.75
    with pytest.raises(ValueError):
        Discrete((0, 1), (Fraction(1, 2), Fraction(1, 3)))


def test_product_requires_factors():
    with pytest.raises(ValueError):
        ProductDistribution(())
    assert len(ProductDistribution((Gaussian(0, 1),) * 3)) == 3
