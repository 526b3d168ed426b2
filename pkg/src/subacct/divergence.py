"""Hockey-stick divergences, exact for discrete laws and numeric for continuous ones.

Continuous divergences are evaluated through the level sets of the privacy loss
``l(x) = ln p(x) - ln q(x)``: the real line is cut into pieces on which ``l`` is
monotone, so ``{l > t}`` is a union of intervals whose masses come straight from
the CDFs. This gives ``H_a(P||Q) = P(l > ln a) - a * Q(l > ln a)`` with no
integration error beyond the CDF accuracy. Adaptive quadrature is kept as an
independent fallback.
"""

from __future__ import annotations

import functools
import itertools
import math
from fractions import Fraction

import numpy as np
from scipy import integrate, optimize

from subacct.dist import Discrete, ProductDistribution, is_continuous
from subacct.errors import (
    BudgetExceededError,
    ConsistencyError,
    LabelMismatchError,
    MismatchedSupportError,
    NoConvergenceError,
    UnsupportedVariantError,
)

Rational = Fraction

DEFAULT_TOL = 1e-12
MAX_ROOTS = 1000
_BISECT_ITERS = 64


def _components(d):
    return getattr(d, "components", (d,))


class LossProfile:
    """Monotone-piece decomposition of the privacy loss of a continuous pair.

    Args:
        p: distribution the loss is sampled under.
        q: reference distribution.
        core_points: sample density used to detect extrema of the loss.
    """

    def __init__(self, p, q, core_points: int = 8001):
        if not (is_continuous(p) and is_continuous(q)):
            raise UnsupportedVariantError("loss profile needs continuous distributions")
        self.p = p
        self.q = q
        self._samples = {}
        comps = _components(p) + _components(q)
        lo = min(min(p.window()[0], q.window()[0]), min(c.location for c in comps))
        hi = max(max(p.window()[1], q.window()[1]), max(c.location for c in comps))
        self.window = (lo, hi)
        scale = max(c.scale for c in comps)
        locs = [c.location for c in comps]
        core_lo = max(lo, min(locs) - 25 * scale)
        core_hi = min(hi, max(locs) + 25 * scale)
        kinks = sorted(set(p.kinks()) | set(q.kinks()))
        xs = [np.linspace(core_lo, core_hi, core_points), np.asarray(kinks, float)]
        if lo < core_lo:
            xs.append(core_lo - np.geomspace(1e-3 * scale, core_lo - lo, 400))
        if hi > core_hi:
            xs.append(core_hi + np.geomspace(1e-3 * scale, hi - core_hi, 400))
        xs.append(np.array([lo, hi]))
        x = np.unique(np.clip(np.concatenate(xs), lo, hi))
        self._breaks = self._find_breaks(x, kinks)
        lvals = self.loss(self._breaks)
        self._pieces = []
        for a, b, la, lb in zip(self._breaks[:-1], self._breaks[1:], lvals[:-1], lvals[1:]):
            direction = 1 if lb > la else (-1 if lb < la else 0)
            self._pieces.append((a, b, la, lb, direction))
        self.loss_min = float(np.min(lvals))
        self.loss_max = float(np.max(lvals))

    def loss(self, x):
        return self.p.logpdf(x) - self.q.logpdf(x)

    def _find_breaks(self, x, kinks):
        lv = self.loss(x)
        d = np.diff(lv)
        noise = 1e-10 * np.maximum(1.0, np.abs(lv[:-1]))
        s = np.where(np.abs(d) <= noise, 0, np.sign(d)).astype(int)
        breaks = {float(x[0]), float(x[-1])}
        breaks.update(k for k in kinks if x[0] < k < x[-1])
        nz = np.flatnonzero(s)
        for i, j in zip(nz[:-1], nz[1:]):
            if s[i] == s[j]:
                continue
            a, b = x[i], x[j + 1]
            sign = s[i]
            res = optimize.minimize_scalar(
                lambda t: -sign * float(self.loss(t)), bounds=(a, b), method="bounded",
                options={"xatol": 1e-12 * max(1.0, abs(a), abs(b))},
            )
            breaks.add(float(res.x))
        return np.array(sorted(breaks))

    def _boundary(self, a, b, t, increasing):
        """Vectorised bisection for the point where ``loss > t`` starts/stops."""
        xs, ls = self._piece_samples(a, b, increasing)
        k = np.clip(np.searchsorted(ls, t, side="right"), 1, xs.size - 1)
        lo, hi = xs[k - 1], xs[k]
        if not increasing:
            lo, hi = hi, lo
        for _ in range(_BISECT_ITERS - 10):
            mid = 0.5 * (lo + hi)
            above = self.loss(mid) > t
            if increasing:
                hi = np.where(above, mid, hi)
                lo = np.where(above, lo, mid)
            else:
                lo = np.where(above, mid, lo)
                hi = np.where(above, hi, mid)
        return 0.5 * (lo + hi)

    def _piece_samples(self, a, b, increasing):
        key = (a, b)
        if key not in self._samples:
            xs = np.linspace(a, b, 4097)
            ls = self.loss(xs)
            if not increasing:
                xs, ls = xs[::-1], ls[::-1]
            # ls is monotone up to rounding; the bracket only needs to contain the root
            self._samples[key] = (xs, np.maximum.accumulate(ls))
        return self._samples[key]

    def exceed_mass(self, t):
        """P- and Q-mass of the set ``{x : loss(x) > t}`` for each threshold."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        mass_p = np.zeros(t.shape)
        mass_q = np.zeros(t.shape)
        for a, b, la, lb, direction in self._pieces:
            full_p = float(self.p.interval_mass(a, b))
            full_q = float(self.q.interval_mass(a, b))
            if direction == 0:
                on = la > t
                mass_p += np.where(on, full_p, 0.0)
                mass_q += np.where(on, full_q, 0.0)
                continue
            low, high = (la, lb) if direction > 0 else (lb, la)
            whole = low > t
            mass_p[whole] += full_p
            mass_q[whole] += full_q
            part = np.flatnonzero((low <= t) & (high > t))
            if part.size == 0:
                continue
            xb = self._boundary(a, b, t[part], direction > 0)
            if direction > 0:
                mass_p[part] += self.p.interval_mass(xb, b)
                mass_q[part] += self.q.interval_mass(xb, b)
            else:
                mass_p[part] += self.p.interval_mass(a, xb)
                mass_q[part] += self.q.interval_mass(a, xb)
        return mass_p, mass_q

    def split_masses(self, grid, parts: bool = False):
        """Connect-the-dots atoms on a uniform loss grid.

        The P-mass of each bucket ``(t[j-1], t[j]]`` is divided between its two
        endpoints so that the bucket's Q-mass is preserved; mass above the top
        is divided between ``t[-1]`` and ``+inf`` the same way. The resulting
        atoms reproduce ``H_{e^t}(P||Q)`` exactly at every grid point, and the
        split form never cancels, unlike solving for atoms from deltas.

        Args:
            grid: increasing loss grid.
            parts: also return the upward share of every bucket and the
                Q-mass above every grid point.

        Returns:
            ``(masses, mass_inf)`` or ``(masses, mass_inf, up_share, exceed_q)``.
        """
        grid = np.asarray(grid, dtype=float)
        sp, sq = self.exceed_mass(grid)
        dp = np.maximum(sp[:-1] - sp[1:], 0.0)
        dq = np.maximum(sq[:-1] - sq[1:], 0.0)
        h = np.diff(grid)
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            frac = (dp - np.exp(grid[:-1]) * dq) / (-np.expm1(-h) * dp)
        frac = np.clip(np.nan_to_num(frac, nan=0.0), 0.0, 1.0)
        up = frac * dp
        masses = np.zeros(grid.size)
        masses[1:] += up
        masses[:-1] += dp - up
        masses[0] += max(1.0 - sp[0], 0.0)
        with np.errstate(over="ignore"):
            top_q = min(math.exp(grid[-1]) * sq[-1], sp[-1]) if sq[-1] > 0 else 0.0
        masses[-1] += top_q
        inf = float(sp[-1] - top_q)
        if parts:
            return masses, inf, up, sq
        return masses, inf

    def delta(self, eps, tol: float = DEFAULT_TOL):
        """Vectorised ``H_{e^eps}(P||Q)``; ``eps = -inf`` gives 1."""
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        sp, sq = self.exceed_mass(eps)
        with np.errstate(over="ignore"):
            val = sp - np.exp(eps) * sq
        val = np.where(np.isneginf(eps), 1.0, val)
        return _clip_unit(val, tol)

    def crossings(self, t: float) -> list[float]:
        roots = []
        for a, b, la, lb, direction in self._pieces:
            if direction == 0:
                continue
            if min(la, lb) < t < max(la, lb):
                roots.append(optimize.brentq(lambda x: float(self.loss(x)) - t, a, b,
                                             xtol=1e-13, rtol=4 * np.finfo(float).eps))
                if len(roots) > MAX_ROOTS:
                    raise BudgetExceededError("too many crossing points")
        return sorted(roots)

    def loss_quantile_bounds(self, tail: float) -> tuple[float, float]:
        """Loss levels outside of which P carries at most ``tail`` mass on each side."""
        lo, hi = self.loss_min, self.loss_max
        if not tail > 0:
            return lo, hi
        top = self._level(lambda t: self.exceed_mass(t)[0] <= tail, lo, hi)
        bottom = self._level(lambda t: 1.0 - self.exceed_mass(t)[0] > tail, lo, hi)
        return bottom, top

    @staticmethod
    def _level(pred, lo, hi, points=257, rounds=6):
        """Smallest level in [lo, hi] where the vectorised monotone predicate turns true."""
        for _ in range(rounds):
            t = np.linspace(lo, hi, points)
            ok = pred(t)
            if ok[0]:
                return float(t[0])
            j = int(np.argmax(ok))
            lo, hi = float(t[j - 1]), float(t[j])
            if hi - lo < 1e-12 * max(1.0, abs(hi)):
                break
        return hi


def _clip_unit(val, tol):
    val = np.asarray(val, dtype=float)
    if np.any(val < -max(tol, 1e-12)):
        raise ConsistencyError(f"negative divergence {val.min():.3e} beyond tolerance")
    return np.clip(val, 0.0, 1.0)


@functools.lru_cache(maxsize=256)
def loss_profile(p, q) -> LossProfile:
    return LossProfile(p, q)


def hockey_stick(p, q, alpha: float, tol: float = DEFAULT_TOL, method: str = "crossing") -> float:
    """H_alpha(P||Q) = integral of max(p - alpha q, 0) for continuous P, Q."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if isinstance(p, Discrete) and isinstance(q, Discrete):
        return float(hockey_stick_discrete(p, q, Fraction(alpha)))
    if is_continuous(p) != is_continuous(q):
        raise MismatchedSupportError("cannot compare a continuous and a discrete law")
    if alpha == 0:
        return 1.0
    if method == "crossing":
        return float(loss_profile(p, q).delta(math.log(alpha), tol)[0])
    if method == "quad":
        return _hockey_stick_quad(p, q, alpha, tol)
    raise ValueError(f"unknown method {method!r}")


def _hockey_stick_quad(p, q, alpha, tol):
    prof = loss_profile(p, q)
    t = math.log(alpha)
    comps = _components(p) + _components(q)
    points = set(prof.crossings(t))
    points.update(c.location for c in comps)
    points.update(p.kinks())
    points.update(q.kinks())
    pts = sorted(points)
    segments = [(-math.inf, pts[0])] + list(zip(pts[:-1], pts[1:])) + [(pts[-1], math.inf)]

    def f(x):
        return float(np.exp(p.logpdf(x)) - alpha * np.exp(q.logpdf(x)))

    total = 0.0
    err = 0.0
    for a, b in segments:
        if a == b:
            continue
        if math.isinf(a):
            probe = b - 1.0
        elif math.isinf(b):
            probe = a + 1.0
        else:
            probe = 0.5 * (a + b)
        if prof.loss(probe) <= t:
            continue
        val, e = integrate.quad(f, a, b, epsabs=tol / len(segments), epsrel=1e-13, limit=500)
        total += val
        err += e
    if err > tol:
        raise NoConvergenceError(f"quadrature error estimate {err:.2e} exceeds tol {tol:.2e}")
    return float(_clip_unit(total, tol))


def hockey_stick_curve(p, q, eps, tol: float = DEFAULT_TOL) -> np.ndarray:
    """H_{e^eps}(P||Q) for an array of eps values."""
    return loss_profile(p, q).delta(eps, tol)


def _aligned(p: Discrete, q: Discrete):
    if set(p.outcomes) != set(q.outcomes):
        raise LabelMismatchError("discrete laws must share their outcome labels")
    return [(p.prob(o), q.prob(o)) for o in p.outcomes]


def hockey_stick_discrete(p: Discrete, q: Discrete, alpha) -> Fraction:
    """Exact sum over outcomes of max(p_i - alpha q_i, 0)."""
    alpha = Fraction(alpha)
    return sum((max(pi - alpha * qi, Fraction(0)) for pi, qi in _aligned(p, q)), Fraction(0))


def hockey_stick_product(ps: ProductDistribution, qs: ProductDistribution, alpha,
                         budget: int = 10**7) -> Fraction:
    """Exact divergence between product laws by enumerating every outcome tuple."""
    if len(ps) != len(qs):
        raise LabelMismatchError("products must have the same number of factors")
    factors = [_aligned(p, q) for p, q in zip(ps.factors, qs.factors)]
    if math.prod(len(f) for f in factors) > budget:
        raise BudgetExceededError("outcome enumeration exceeds budget")
    alpha = Fraction(alpha)
    total = Fraction(0)
    for combo in itertools.product(*factors):
        pp = math.prod((c[0] for c in combo), start=Fraction(1))
        qq = math.prod((c[1] for c in combo), start=Fraction(1))
        diff = pp - alpha * qq
        if diff > 0:
            total += diff
    return total


def crossing_points(p, q, alpha: float) -> list[float]:
    """Sorted roots of p(y) - alpha q(y) for continuous P, Q."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return loss_profile(p, q).crossings(math.log(alpha))
