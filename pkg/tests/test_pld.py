import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from subacct.dist import Discrete, Gaussian, Laplace, Mixture
from subacct.divergence import hockey_stick_curve
from subacct.errors import DeltaUnreachableError, NonConvexCurveError, StepMismatchError
from subacct.pairs import (
    combined_substitution_curve,
    gaussian,
    pair_add,
    pair_remove,
    pair_substitution_wor_bounds,
    poisson,
)
from subacct.pld import (
    DiscretePLD,
    PrivacyCurve,
    compose,
    curve,
    delta_of,
    epsilon_of,
    pld_from_delta_curve,
    pld_from_pair,
    pld_from_spliced_pairs,
    point_mass,
    self_compose,
)


def gaussian_delta(eps, mu):
    """Exact curve of N(0,1) vs N(mu,1)."""
    eps = np.asarray(eps, float)
    return stats.norm.cdf(-eps / mu + mu / 2) - np.exp(eps) * stats.norm.cdf(-eps / mu - mu / 2)


@pytest.fixture(scope="module")
def gauss_pld():
    return pld_from_pair(Gaussian(0, 1), Gaussian(1, 1), step=1e-3)


def test_identical_pair_is_point_mass():
    pl = pld_from_pair(Gaussian(0, 1), Gaussian(0, 1))
    assert len(pl) <= 2
    assert pl.masses.sum() == pytest.approx(1.0, abs=1e-12)
    assert pl.delta(0.0) <= math.expm1(pl.step)


def test_bucket_masses_match_loss_cdf():
    # loss of N(0,1) vs N(1,1) under P is N(1/2, 1)
    pl = pld_from_pair(Gaussian(0, 1), Gaussian(1, 1), step=1e-2, method="bucket")
    t = pl.losses
    law = stats.norm(0.5, 1.0)
    np.testing.assert_allclose(pl.masses[1:], law.cdf(t[1:]) - law.cdf(t[:-1]), atol=1e-12)
    assert pl.masses[0] == pytest.approx(law.cdf(t[0]), abs=1e-12)


def test_no_infinite_mass_without_truncation():
    pl = pld_from_pair(Gaussian(0, 1), Gaussian(1, 1), step=1e-2, tail_mass_bound=0.0)
    assert pl.mass_inf == 0.0
    m = Mixture((0.7, 0.3), (Laplace(0, 1), Laplace(1, 1)))
    assert pld_from_pair(Laplace(0, 1), m, step=1e-3, tail_mass_bound=0.0).mass_inf == 0.0


def test_truncated_mass_bounded(gauss_pld):
    assert gauss_pld.mass_inf <= 1e-15


def test_gaussian_total_variation(gauss_pld):
    assert gauss_pld.delta(0.0) == pytest.approx(2 * stats.norm.cdf(0.5) - 1, abs=1e-12)


def test_connect_dots_exact_on_grid(gauss_pld):
    eps = gauss_pld.losses[::500]
    eps = eps[(eps > -3) & (eps < 3)]
    np.testing.assert_allclose(gauss_pld.delta(eps), gaussian_delta(eps, 1.0), atol=1e-13)


def test_invalid_step():
    with pytest.raises(ValueError):
        pld_from_pair(Gaussian(0, 1), Gaussian(1, 1), step=0.0)


def test_discrete_pair():
    p = Discrete((0, 1, 2), (0.5, 0.5, 0.0))
    q = Discrete((0, 1, 2), (0.25, 0.25, 0.5))
    pl = pld_from_pair(p, q, step=1e-3)
    # all P-mass sits at loss ln 2, which lies between two grid points
    assert pl.delta(0.0) == pytest.approx(0.5, abs=1e-12)
    assert pl.delta(math.log(2) + pl.step) == pytest.approx(0.0, abs=1e-12)
    assert 0 < pl.delta(math.log(2)) <= 0.5 * math.expm1(pl.step)


# --------------------------------------------------------------------------- delta-curve construction


def test_zero_curve_all_bottom():
    eps = np.linspace(-5, 5, 11)
    pl = pld_from_delta_curve(eps, np.zeros(11))
    assert pl.masses[0] == 1.0 and pl.mass_inf == 0.0
    assert np.all(pl.delta(eps) == 0.0)


def test_two_point_system():
    e1, d0 = 0.7, 0.2
    pl = pld_from_delta_curve([0.0, e1], [d0, 0.0])
    p1 = d0 / (1 - math.exp(-e1))
    assert pl.masses[1] == pytest.approx(p1, rel=1e-14)
    assert pl.masses[0] == pytest.approx(1 - p1, rel=1e-14)


def test_non_convex_rejected():
    with pytest.raises(NonConvexCurveError):
        pld_from_delta_curve([0.0, 0.1, 0.2, 0.3], [0.5, 0.49, 0.2, 0.0])


def test_delta_curve_round_trip_substitution():
    eps = np.round(np.arange(-300, 601) * 0.01, 12)
    c = combined_substitution_curve(gaussian(4.0), 0.05, eps)
    pl = pld_from_delta_curve(eps, c.deltas)
    assert np.max(np.abs(pl.delta(eps) - c.deltas)) <= 1e-12


def test_chord_property():
    p, q = Gaussian(0, 1), Mixture((0.8, 0.2), (Gaussian(0, 1), Gaussian(2, 1)))
    eps = np.linspace(-1, 3, 41)
    pl = pld_from_delta_curve(eps, hockey_stick_curve(p, q, eps))
    mids = 0.5 * (eps[:-1] + eps[1:])
    truth = hockey_stick_curve(p, q, mids)
    x0, x1, xm = np.exp(eps[:-1]), np.exp(eps[1:]), np.exp(mids)
    d0, d1 = pl.delta(eps[:-1]), pl.delta(eps[1:])
    chord = d0 + (d1 - d0) * (xm - x0) / (x1 - x0)
    got = pl.delta(mids)
    assert np.all(got >= truth - 1e-9)
    assert np.all(got <= chord + 1e-9)


def test_spliced_pld_reproduces_combined_curve():
    hi, lo = pair_substitution_wor_bounds(gaussian(4.0), 0.05)
    pl = pld_from_spliced_pairs((hi.p, hi.q), (lo.p, lo.q))
    eps = pl.losses[::997]
    c = combined_substitution_curve(gaussian(4.0), 0.05, eps)
    assert np.max(np.abs(pl.delta(eps) - c.deltas)) <= 1e-12


# --------------------------------------------------------------------------- queries


def test_delta_at_infinity():
    pl = DiscretePLD(0.0, 0.1, [0.5, 0.3], 0.2)
    assert delta_of(pl, 1e6) == pytest.approx(0.2)


def test_single_atom():
    pl = DiscretePLD(0.3, 0.1, [1.0])
    assert delta_of(pl, 0.3) == 0.0


def test_epsilon_of_delta_one(gauss_pld):
    assert epsilon_of(gauss_pld, 1.0) <= gauss_pld.loss_start


@given(st.floats(-2, 4))
def test_epsilon_round_trip(eps):
    pl = pld_from_pair(Gaussian(0, 1), Gaussian(1, 1), step=1e-3)
    d = delta_of(pl, eps)
    if d <= pl.mass_inf or d >= 1:
        return
    assert epsilon_of(pl, d) <= eps + pl.step


def test_epsilon_unreachable():
    pl = DiscretePLD(0.0, 0.1, [0.9], 0.1)
    with pytest.raises(DeltaUnreachableError):
        epsilon_of(pl, 0.05)


def test_curve_object(gauss_pld):
    c = curve(gauss_pld, np.linspace(-1, 3, 50), relation="add")
    assert isinstance(c, PrivacyCurve)
    assert c.is_nonincreasing() and c.is_convex()
    assert c.metadata["relation"] == "add"


# --------------------------------------------------------------------------- composition


def test_compose_identity(gauss_pld):
    out = compose(gauss_pld, point_mass(gauss_pld.step), tail_mass_bound=0.0)
    eps = np.linspace(-2, 4, 61)
    np.testing.assert_allclose(out.delta(eps), gauss_pld.delta(eps), atol=1e-12)


def test_compose_commutative():
    a = pld_from_pair(Gaussian(0, 1), Gaussian(1, 1), step=1e-3)
    b = pld_from_pair(Laplace(0, 1), Mixture((0.5, 0.5), (Laplace(0, 1), Laplace(1, 1))), step=1e-3)
    ab, ba = compose(a, b), compose(b, a)
    assert ab.loss_start == ba.loss_start
    np.testing.assert_allclose(ab.masses, ba.masses, atol=1e-12)


def test_gaussian_additivity(gauss_pld):
    # two rounds of shift 1 equal one round of shift sqrt(2)
    two = compose(gauss_pld, gauss_pld)
    eps = np.linspace(-1, 4, 26)
    np.testing.assert_allclose(two.delta(eps), gaussian_delta(eps, math.sqrt(2)), atol=2e-6)
    assert np.all(two.delta(eps) >= gaussian_delta(eps, math.sqrt(2)) - 1e-12)


def test_step_mismatch():
    with pytest.raises(StepMismatchError):
        compose(point_mass(1e-3), point_mass(1e-4))


def test_self_compose_identity_and_associativity(gauss_pld):
    assert self_compose(gauss_pld, 1) is gauss_pld
    sq = compose(gauss_pld, gauss_pld)
    four = self_compose(gauss_pld, 4)
    ref = compose(sq, sq)
    eps = np.linspace(-2, 6, 41)
    np.testing.assert_allclose(four.delta(eps), ref.delta(eps), atol=1e-12)


def test_self_compose_gaussian_many_rounds():
    pl = pld_from_pair(Gaussian(0, 10), Gaussian(1, 10), step=1e-4)
    k = 100  # shift 1, sigma 10, 100 rounds -> mu = 1
    out = self_compose(pl, k)
    eps = np.linspace(0, 3, 16)
    np.testing.assert_allclose(out.delta(eps), gaussian_delta(eps, 1.0), atol=1e-5)
    assert np.all(out.delta(eps) >= gaussian_delta(eps, 1.0) - 1e-12)


@st.composite
def continuous_pairs(draw):
    kind = draw(st.sampled_from([Gaussian, Laplace]))
    s = draw(st.floats(0.5, 3))
    g = draw(st.floats(0.05, 1.0))
    base = kind(0.0, s)
    mix = Mixture((1 - g, g), (base, kind(1.0, s))) if g < 1 else kind(1.0, s)
    return (base, mix) if draw(st.booleans()) else (mix, base)


@settings(max_examples=15)
@given(continuous_pairs(), st.integers(1, 4))
def test_domination_and_mass(pair, k):
    p, q = pair
    pl = pld_from_pair(p, q, step=1e-3)
    eps = np.linspace(-1, 3, 41)
    assert np.all(pl.delta(eps) >= hockey_stick_curve(p, q, eps) - 1e-12)
    out = self_compose(pl, k)
    assert out.masses.sum() + out.mass_inf == pytest.approx(1.0, abs=1e-9)
    c = curve(out, np.linspace(-1, 5, 61))
    assert c.is_nonincreasing(1e-12) and c.is_convex(1e-9)


def test_bucket_method_dominates():
    pr = pair_remove(gaussian(1.0), poisson(0.2))
    pl = pld_from_pair(pr.p, pr.q, step=1e-3, method="bucket")
    eps = np.linspace(-1, 3, 41)
    assert np.all(pl.delta(eps) >= hockey_stick_curve(pr.p, pr.q, eps) - 1e-12)


def test_mass_conservation_after_many_rounds():
    pr = pair_add(gaussian(0.8), poisson(0.01))
    out = self_compose(pld_from_pair(pr.p, pr.q), 1000)
    assert out.masses.sum() + out.mass_inf == pytest.approx(1.0, abs=1e-9)


def test_json_round_trip(gauss_pld):
    back = DiscretePLD.from_json(gauss_pld.to_json())
    np.testing.assert_array_equal(back.masses, gauss_pld.masses)
    assert (back.loss_start, back.step, back.mass_inf, back.pessimistic) == (
        gauss_pld.loss_start, gauss_pld.step, gauss_pld.mass_inf, True)


def test_invalid_masses():
    with pytest.raises(ValueError):
        DiscretePLD(0.0, 0.1, [0.5, 0.6])
    with pytest.raises(ValueError):
        DiscretePLD(0.0, 0.1, [1.1, -0.1])
