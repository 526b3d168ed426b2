"""One-dimensional distributions used to describe mechanism outputs.

Continuous laws (Gaussian, Laplace and finite mixtures of them) expose
log-densities, CDFs and accurate interval masses. Finite discrete laws carry
exact :class:`fractions.Fraction` probabilities so that the randomized
response oracle can be evaluated without rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np
from scipy import special

from subacct.errors import MismatchedSupportError, UnsupportedVariantError

# Beyond these many scale units the tail mass underflows to 0.0 in double
# precision, so the window can be treated as the whole real line.
_GAUSS_WINDOW = 38.5
_LAPLACE_WINDOW = 750.0

MAX_MIXTURE_COMPONENTS = 8


@dataclass(frozen=True)
class Gaussian:
    mean: float
    stddev: float

    def __post_init__(self):
        if not self.stddev > 0:
            raise ValueError(f"stddev must be positive, got {self.stddev}")

    @property
    def scale(self) -> float:
        return self.stddev

    @property
    def location(self) -> float:
        return self.mean

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.stddev
        return -0.5 * z * z - math.log(self.stddev) - 0.5 * math.log(2 * math.pi)

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.mean) / self.stddev)

    def sf(self, x):
        return special.ndtr((self.mean - np.asarray(x, dtype=float)) / self.stddev)

    def interval_mass(self, a, b):
        """Mass of (a, b], computed on whichever tail keeps precision."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        za = (a - self.mean) / self.stddev
        zb = (b - self.mean) / self.stddev
        upper = special.ndtr(-za) - special.ndtr(-zb)
        lower = special.ndtr(zb) - special.ndtr(za)
        mass = np.where(za >= 0, upper, lower)
        return np.maximum(mass, 0.0)

    def window(self) -> tuple[float, float]:
        w = _GAUSS_WINDOW * self.stddev
        return self.mean - w, self.mean + w

    def kinks(self) -> tuple[float, ...]:
        return ()

    def sample(self, rng: np.random.Generator, size=None):
        return rng.normal(self.mean, self.stddev, size=size)


@dataclass(frozen=True)
class Laplace:
    location: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -np.abs(x - self.location) / self.scale - math.log(2 * self.scale)

    def cdf(self, x):
        z = (np.asarray(x, dtype=float) - self.location) / self.scale
        return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0.0)),
                        1.0 - 0.5 * np.exp(-np.maximum(z, 0.0)))

    def sf(self, x):
        z = (np.asarray(x, dtype=float) - self.location) / self.scale
        return np.where(z > 0, 0.5 * np.exp(-np.maximum(z, 0.0)),
                        1.0 - 0.5 * np.exp(np.minimum(z, 0.0)))

    def interval_mass(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        upper = self.sf(a) - self.sf(b)
        lower = self.cdf(b) - self.cdf(a)
        mass = np.where(a >= self.location, upper, lower)
        return np.maximum(mass, 0.0)

    def window(self) -> tuple[float, float]:
        w = _LAPLACE_WINDOW * self.scale
        return self.location - w, self.location + w

    def kinks(self) -> tuple[float, ...]:
        return (self.location,)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.laplace(self.location, self.scale, size=size)


Continuous = Union[Gaussian, Laplace]


@dataclass(frozen=True)
class Mixture:
    """Finite mixture of Gaussian and/or Laplace components."""

    weights: tuple[float, ...]
    components: tuple[Continuous, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.weights) != len(self.components) or not self.components:
            raise ValueError("mixture needs one weight per component")
        if len(self.components) > MAX_MIXTURE_COMPONENTS:
            raise ValueError(f"at most {MAX_MIXTURE_COMPONENTS} components supported")
        if any(not isinstance(c, (Gaussian, Laplace)) for c in self.components):
            raise ValueError("mixture components must be Gaussian or Laplace")
        if any(w < 0 for w in self.weights):
            raise ValueError("mixture weights must be nonnegative")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {sum(self.weights)}, not 1")

    def _active(self):
        return [(w, c) for w, c in zip(self.weights, self.components) if w > 0]

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        out = None
        for w, c in self._active():
            term = math.log(w) + c.logpdf(x)
            out = term if out is None else np.logaddexp(out, term)
        return out

    def cdf(self, x):
        return sum(w * c.cdf(x) for w, c in self._active())

    def sf(self, x):
        return sum(w * c.sf(x) for w, c in self._active())

    def interval_mass(self, a, b):
        return sum(w * c.interval_mass(a, b) for w, c in self._active())

    def window(self) -> tuple[float, float]:
        ends = [c.window() for _, c in self._active()]
        return min(e[0] for e in ends), max(e[1] for e in ends)

    def kinks(self) -> tuple[float, ...]:
        return tuple(sorted({k for _, c in self._active() for k in c.kinks()}))

    def sample(self, rng: np.random.Generator, size=None):
        n = 1 if size is None else int(np.prod(size))
        which = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        out = np.empty(n)
        for i, comp in enumerate(self.components):
            idx = np.flatnonzero(which == i)
            if idx.size:
                out[idx] = comp.sample(rng, size=idx.size)
        return out[0] if size is None else out.reshape(size)


@dataclass(frozen=True)
class Discrete:
    """Finite law over real-valued outcome labels with exact probabilities."""

    outcomes: tuple
    probs: tuple[Fraction, ...]

    def __post_init__(self):
        probs = tuple(Fraction(p) for p in self.probs)
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        object.__setattr__(self, "probs", probs)
        if len(self.outcomes) != len(probs):
            raise ValueError("one probability per outcome required")
        if len(set(self.outcomes)) != len(self.outcomes):
            raise ValueError("outcome labels must be distinct")
        if any(p < 0 for p in probs):
            raise ValueError("probabilities must be nonnegative")
        if sum(probs) != 1:
            raise ValueError(f"probabilities sum to {sum(probs)}, not 1")

    def prob(self, label) -> Fraction:
        try:
            return self.probs[self.outcomes.index(label)]
        except ValueError:
            return Fraction(0)

    def float_probs(self) -> np.ndarray:
        return np.array([float(p) for p in self.probs])

    def sample(self, rng: np.random.Generator, size=None):
        idx = rng.choice(len(self.outcomes), size=size, p=self.float_probs())
        labels = np.asarray(self.outcomes, dtype=float)
        return labels[idx]


Distribution = Union[Gaussian, Laplace, Mixture, Discrete]


@dataclass(frozen=True)
class ProductDistribution:
    factors: tuple[Distribution, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ValueError("product needs at least one factor")

    def __len__(self):
        return len(self.factors)


def mixture(weights: Sequence[float], components: Sequence[Continuous]) -> Continuous:
    """Build a mixture, dropping zero-weight components and collapsing singletons."""
    kept = [(float(w), c) for w, c in zip(weights, components) if w > 0]
    if len(kept) == 1:
        return kept[0][1]
    total = sum(w for w, _ in kept)
    return Mixture(tuple(w / total for w, _ in kept), tuple(c for _, c in kept))


def is_continuous(d) -> bool:
    return isinstance(d, (Gaussian, Laplace, Mixture))


def pdf(d: Distribution, x):
    if isinstance(d, Discrete):
        return float(d.prob(x))
    return np.exp(d.logpdf(x))


def cdf(d: Distribution, x):
    if not is_continuous(d):
        raise UnsupportedVariantError("cdf is only defined for continuous distributions")
    return d.cdf(x)


def log_density_ratio(p: Distribution, q: Distribution, x):
    """ln(dP/dQ)(x), with +inf where only P has mass and -inf where only Q has."""
    if is_continuous(p) != is_continuous(q):
        raise MismatchedSupportError("cannot compare a continuous and a discrete law")
    if is_continuous(p):
        return p.logpdf(x) - q.logpdf(x)
    pp, qq = p.prob(x), q.prob(x)
    if pp == 0 and qq == 0:
        return math.nan
    if qq == 0:
        return math.inf
    if pp == 0:
        return -math.inf
    return math.log(pp) - math.log(qq)


def sample(d: Distribution, rng: np.random.Generator, size=None):
    return d.sample(rng, size=size)
