"""Dominating pairs for subsampled Gaussian and Laplace sum queries.

Data points live in [-1, 1]. Every pair is centred so that the unshifted noise
sits at 0; hockey-stick divergences are invariant under a common translation,
so the dataset size never enters.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from subacct.dist import Discrete, Gaussian, Laplace, mixture
from subacct.divergence import hockey_stick_curve
from subacct.errors import UnsupportedVariantError


class Relation(enum.Enum):
    ADD = "add"
    REMOVE = "remove"
    ADD_REMOVE = "add-remove"
    SUBSTITUTION = "substitution"


@dataclass(frozen=True)
class MechanismSpec:
    """Sum query plus additive noise; ``scale`` is sigma or the Laplace scale."""

    noise: str
    scale: float

    def __post_init__(self):
        if self.noise not in ("gaussian", "laplace"):
            raise ValueError(f"unknown noise {self.noise!r}")
        if not self.scale > 0:
            raise ValueError("noise parameter must be positive")

    def at(self, loc: float):
        if self.noise == "gaussian":
            return Gaussian(loc, self.scale)
        return Laplace(loc, self.scale)

    def with_scale(self, scale: float) -> "MechanismSpec":
        return MechanismSpec(self.noise, scale)


def gaussian(sigma: float) -> MechanismSpec:
    return MechanismSpec("gaussian", sigma)


def laplace(scale: float) -> MechanismSpec:
    return MechanismSpec("laplace", scale)


@dataclass(frozen=True)
class SamplingScheme:
    kind: str
    gamma: float

    def __post_init__(self):
        if self.kind not in ("poisson", "wor"):
            raise ValueError(f"unknown sampling scheme {self.kind!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("sampling rate must lie in [0, 1]")

    @property
    def shift(self) -> float:
        # WOR swaps a -1 out of the batch for the differing +1
        return 1.0 if self.kind == "poisson" else 2.0


def poisson(gamma: float) -> SamplingScheme:
    return SamplingScheme("poisson", gamma)


def wor(gamma: float) -> SamplingScheme:
    return SamplingScheme("wor", gamma)


@dataclass(frozen=True)
class DominatingPair:
    p: object
    q: object
    relation: Relation
    scheme: SamplingScheme
    tight: bool
    direction_note: str = ""

    def reversed(self, relation: Relation, note: str = "") -> "DominatingPair":
        return DominatingPair(self.q, self.p, relation, self.scheme, self.tight, note)


def _subsampled(mech: MechanismSpec, gamma: float, shift: float):
    return mixture([1.0 - gamma, gamma], [mech.at(0.0), mech.at(shift)])


def pair_add(mech: MechanismSpec, scheme: SamplingScheme) -> DominatingPair:
    """Tight pair for the add relation: (noise, subsampled noise shifted by one record)."""
    q = _subsampled(mech, scheme.gamma, scheme.shift)
    return DominatingPair(mech.at(0.0), q, Relation.ADD, scheme, True,
                          "D = all-equal dataset, D' = D plus one extreme record")


def pair_remove(mech: MechanismSpec, scheme: SamplingScheme) -> DominatingPair:
    return pair_add(mech, scheme).reversed(
        Relation.REMOVE, "D = dataset with extreme record, D' = record removed")


def pair_substitution_poisson(mech: MechanismSpec, gamma: float) -> DominatingPair:
    """Poisson substitution pair realised by datasets (0,...,0,1) and (0,...,0,-1)."""
    if mech.noise != "gaussian":
        raise UnsupportedVariantError("the substitution pair is only established for Gaussian noise")
    p = mixture([1.0 - gamma, gamma], [mech.at(0.0), mech.at(1.0)])
    q = mixture([1.0 - gamma, gamma], [mech.at(0.0), mech.at(-1.0)])
    return DominatingPair(p, q, Relation.SUBSTITUTION, poisson(gamma), True,
                          "D = (0,...,0,1), D' = (0,...,0,-1)")


def pair_substitution_wor_bounds(mech: MechanismSpec, gamma: float):
    """Direction-specific bounding pairs for WOR substitution.

    Returns ``(upper, lower)`` where ``upper`` bounds the divergence for
    ``alpha >= 1`` and ``lower`` for ``0 < alpha < 1``. Neither is a dominating
    pair under composition.
    """
    scheme = wor(gamma)
    mixed = _subsampled(mech, gamma, 2.0)
    base = mech.at(0.0)
    hi = DominatingPair(mixed, base, Relation.SUBSTITUTION, scheme, False,
                        "bound for alpha >= 1 (eps >= 0)")
    lo = DominatingPair(base, mixed, Relation.SUBSTITUTION, scheme, False,
                        "bound for 0 < alpha < 1 (eps < 0)")
    return hi, lo


def combined_substitution_curve(mech: MechanismSpec, gamma: float, eps_grid):
    """Pointwise maximum of the two single-iteration WOR substitution bounds."""
    from subacct.pld import PrivacyCurve

    eps = np.asarray(eps_grid, dtype=float)
    if eps.ndim != 1 or eps.size == 0 or np.any(np.diff(eps) <= 0):
        raise ValueError("eps_grid must be strictly increasing")
    hi, lo = pair_substitution_wor_bounds(mech, gamma)
    d_hi = hockey_stick_curve(hi.p, hi.q, eps)
    d_lo = hockey_stick_curve(lo.p, lo.q, eps)
    return PrivacyCurve(eps, np.maximum(d_hi, d_lo),
                        {"relation": Relation.SUBSTITUTION.value, "scheme": "wor",
                         "gamma": gamma, "k": 1, "tight": False})


def randomized_response_factor(gamma=Fraction(1, 2), keep=Fraction(3, 4)):
    """Single-round output laws of the subsampled bit mechanism.

    Returns ``(M(D), M(D'))`` for D all zeros and D' = D plus a single 1: the
    mechanism reports 1 with probability ``keep`` iff a 1 was sampled.
    """
    gamma, keep = Fraction(gamma), Fraction(keep)
    on_d = Discrete((0, 1), (keep, 1 - keep))
    one = (1 - gamma) * (1 - keep) + gamma * keep
    on_dp = Discrete((0, 1), (1 - one, one))
    return on_d, on_dp
