"""Discretised privacy loss distributions.

A :class:`DiscretePLD` holds probability mass at the losses
``loss_start + i * step`` plus an atom at ``+inf``. Construction is always
pessimistic, so every delta read off a PLD (or off any composition of PLDs)
upper-bounds the true curve.

Two constructions are provided:

* ``"connect-dots"`` (default): atoms are solved so that the discrete curve
  reproduces the exact divergence at every grid epsilon and interpolates
  linearly in ``e^eps`` between them. Convexity of the true curve makes the
  chords an upper bound.
* ``"bucket"``: the P-mass of each loss bucket ``(l - step, l]`` is moved to its
  upper endpoint. Simple, but every composition adds up to one ``step`` of
  bias in epsilon, which is noticeable for thousands of rounds.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
from scipy import special

from subacct.dist import Discrete, is_continuous
from subacct.divergence import loss_profile
from subacct.errors import (
    BudgetExceededError,
    DeltaUnreachableError,
    NonConvexCurveError,
    StepMismatchError,
)

DEFAULT_STEP = 1e-4
DEFAULT_TAIL = 1e-15
MAX_LEN = 2**25
_DIRECT_CONV = 2_000_000


def _workers() -> int:
    return int(os.environ.get("SUBACCT_THREADS", "1"))


@dataclass(frozen=True, eq=False)
class DiscretePLD:
    loss_start: float
    step: float
    masses: np.ndarray
    mass_inf: float = 0.0
    pessimistic: bool = True

    def __post_init__(self):
        masses = np.array(self.masses, dtype=float)
        masses.setflags(write=False)
        object.__setattr__(self, "masses", masses)
        if not self.step > 0:
            raise ValueError("step must be positive")
        if masses.ndim != 1 or masses.size == 0:
            raise ValueError("masses must be a nonempty vector")
        if np.any(masses < 0) or self.mass_inf < 0:
            raise ValueError("masses must be nonnegative")
        total = float(masses.sum()) + self.mass_inf
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"total mass {total!r} differs from 1")

    @property
    def losses(self) -> np.ndarray:
        return self.loss_start + self.step * np.arange(self.masses.size)

    def __len__(self):
        return self.masses.size

    def delta(self, eps):
        return delta_of(self, eps)

    def epsilon(self, delta: float) -> float:
        return epsilon_of(self, delta)

    def to_dict(self) -> dict:
        return {"loss_start": self.loss_start, "step": self.step,
                "masses": self.masses.tolist(), "mass_inf": self.mass_inf,
                "pessimistic": self.pessimistic}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscretePLD":
        return cls(float(d["loss_start"]), float(d["step"]), np.asarray(d["masses"], float),
                   float(d["mass_inf"]), bool(d["pessimistic"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "DiscretePLD":
        return cls.from_dict(json.loads(s))


def point_mass(step: float = DEFAULT_STEP, loss: float = 0.0) -> DiscretePLD:
    """PLD of a mechanism that reveals nothing (the identity for composition)."""
    return DiscretePLD(loss, step, np.array([1.0]))


@dataclass(frozen=True, eq=False)
class PrivacyCurve:
    epsilons: np.ndarray
    deltas: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        eps = np.asarray(self.epsilons, dtype=float)
        dl = np.asarray(self.deltas, dtype=float)
        if eps.shape != dl.shape or eps.ndim != 1:
            raise ValueError("epsilons and deltas must be equal-length vectors")
        if np.any(np.diff(eps) <= 0):
            raise ValueError("epsilons must be strictly increasing")
        if np.any((dl < 0) | (dl > 1)):
            raise ValueError("deltas must lie in [0, 1]")
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "deltas", dl)

    def is_nonincreasing(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.deltas) <= tol))

    def is_convex(self, tol: float = 1e-12) -> bool:
        """Discrete convexity of delta as a function of e^eps."""
        if self.epsilons.size < 3:
            return True
        x = np.exp(self.epsilons)
        slopes = np.diff(self.deltas) / np.diff(x)
        return bool(np.all(np.diff(slopes) >= -tol * (1 + np.abs(slopes[:-1]))))

    def rows(self):
        return list(zip(self.epsilons.tolist(), self.deltas.tolist()))


# --------------------------------------------------------------------------- construction


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    i_lo = math.floor(lo / step + 1e-9)
    i_hi = max(math.ceil(hi / step - 1e-9), i_lo + 1)
    if i_hi - i_lo + 1 > MAX_LEN:
        raise BudgetExceededError(f"loss grid of {i_hi - i_lo + 1} points exceeds budget")
    return step * np.arange(i_lo, i_hi + 1)


def _discrete_atoms(p: Discrete, q: Discrete):
    labels = set(p.outcomes) | set(q.outcomes)
    losses, masses, inf = [], [], 0.0
    for o in labels:
        pp, qq = p.prob(o), q.prob(o)
        if pp == 0:
            continue
        if qq == 0:
            inf += float(pp)
            continue
        losses.append(math.log(pp) - math.log(qq))
        masses.append(float(pp))
    return np.array(losses), np.array(masses), inf


def _atoms_delta(losses, masses, inf, eps):
    eps = np.atleast_1d(np.asarray(eps, float))
    out = np.empty(eps.shape)
    for j, e in enumerate(eps):
        sel = losses > e
        out[j] = inf + float(np.sum(masses[sel] * -np.expm1(e - losses[sel])))
    return out


def pld_from_pair(p, q, step: float = DEFAULT_STEP, tail_mass_bound: float = DEFAULT_TAIL,
                  method: str = "connect-dots") -> DiscretePLD:
    """Pessimistic PLD of the loss ln(dP/dQ)(X), X ~ P.

    Args:
        p, q: both continuous or both :class:`~subacct.dist.Discrete`.
        step: loss-grid spacing.
        tail_mass_bound: P-mass allowed above the grid top (moved to ``+inf``)
            and below the grid bottom (collapsed onto it).
        method: ``"connect-dots"`` or ``"bucket"``.
    """
    if not (step > 0 and math.isfinite(step)):
        raise ValueError("step must be a positive finite number")
    if method not in ("connect-dots", "bucket"):
        raise ValueError(f"unknown method {method!r}")
    if isinstance(p, Discrete) and isinstance(q, Discrete):
        losses, masses, inf = _discrete_atoms(p, q)
        grid = _grid(losses.min(), losses.max(), step)
        if method == "connect-dots":
            deltas = _atoms_delta(losses, masses, inf, grid)
            return pld_from_delta_curve(grid, deltas)
        idx = np.ceil(np.round((losses - grid[0]) / step, 9)).astype(int)
        out = np.bincount(idx, weights=masses, minlength=grid.size)
        return DiscretePLD(grid[0], step, out, inf)
    if not (is_continuous(p) and is_continuous(q)):
        raise ValueError("p and q must both be continuous or both discrete")

    prof = loss_profile(p, q)
    lo, hi = prof.loss_quantile_bounds(tail_mass_bound)
    grid = _grid(lo, hi, step)
    if method == "connect-dots":
        masses, inf = prof.split_masses(grid)
        return DiscretePLD(grid[0], step, masses, inf)
    above = prof.exceed_mass(grid)[0]
    masses = np.empty(grid.size)
    masses[0] = 1.0 - above[0]
    masses[1:] = above[:-1] - above[1:]
    return DiscretePLD(grid[0], step, np.maximum(masses, 0.0), float(above[-1]))


def pld_from_spliced_pairs(upper, lower, step: float = DEFAULT_STEP,
                           tail_mass_bound: float = DEFAULT_TAIL) -> DiscretePLD:
    """Connect-the-dots PLD of a curve spliced from two pairs at eps = 0.

    The curve follows ``H(upper)`` for eps >= 0 and ``H(lower)`` for eps < 0.
    Both branches must agree at eps = 0 (equal total variation). Atoms are
    built from the two loss profiles directly, which keeps them accurate on
    fine grids where solving from a tabulated curve would be swamped by
    rounding.

    Args:
        upper, lower: ``(p, q)`` tuples of continuous distributions.
    """
    prof_hi = loss_profile(*upper)
    prof_lo = loss_profile(*lower)
    lo = min(prof_lo.loss_quantile_bounds(tail_mass_bound)[0], -step)
    hi = max(prof_hi.loss_quantile_bounds(tail_mass_bound)[1], step)
    grid = _grid(lo, hi, step)
    s = int(round(-grid[0] / step))
    m_hi, inf, up_hi, sq_hi = prof_hi.split_masses(grid, parts=True)
    m_lo, _, up_lo, sq_lo = prof_lo.split_masses(grid, parts=True)
    # W_i = (delta(t_{i-1}) - delta(t_i)) / (1 - e^-h); atom_i = W_i - e^-h W_{i+1}
    w_s = up_lo[s - 1] + sq_lo[s]
    w_next = up_hi[s] + math.exp(grid[s + 1]) * sq_hi[s + 1]
    masses = np.concatenate([m_lo[:s], [max(w_s - math.exp(-step) * w_next, 0.0)], m_hi[s + 1:]])
    masses[0] = max(1.0 - masses[1:].sum() - inf, 0.0)
    return DiscretePLD(grid[0], step, masses, inf)


def pld_from_delta_curve(eps_grid, deltas) -> DiscretePLD:
    """Connect-the-dots PLD whose curve passes through every ``(eps, delta)`` point.

    The grid must be uniform. The top delta becomes the ``+inf`` atom and the
    leftover probability sits on the bottom grid point.
    """
    eps = np.asarray(eps_grid, dtype=float)
    d = np.asarray(deltas, dtype=float)
    if eps.ndim != 1 or eps.shape != d.shape or eps.size < 2:
        raise ValueError("need matching grids with at least two points")
    gaps = np.diff(eps)
    if np.any(gaps <= 0):
        raise ValueError("eps_grid must be strictly increasing")
    step = float(gaps.mean())
    if np.max(np.abs(gaps - step)) > 1e-6 * step:
        raise ValueError("eps_grid must be uniformly spaced")
    if np.any(np.diff(d) > 1e-9):
        raise NonConvexCurveError("deltas must be nonincreasing")

    drop = d[:-1] - d[1:]
    nxt = np.append(drop[1:], 0.0)
    masses = np.empty(eps.size)
    masses[1:] = (drop - math.exp(-step) * nxt) / -math.expm1(-step)
    mass_inf = float(d[-1])
    masses[0] = 1.0 - masses[1:].sum() - mass_inf
    if masses.min() < -1e-9:
        raise NonConvexCurveError(
            f"curve is not convex in e^eps (solved mass {masses.min():.3e})")
    # rounding noise in the second differences; keep the total at one
    clipped = -masses[1:][masses[1:] < 0].sum()
    masses = np.maximum(masses, 0.0)
    masses[0] = max(masses[0] - clipped, 0.0)
    finite = masses.sum()
    if finite + mass_inf > 1.0:
        masses *= (1.0 - mass_inf) / finite
    return DiscretePLD(float(eps[0]), step, masses, mass_inf)


# --------------------------------------------------------------------------- queries


def delta_of(pld: DiscretePLD, eps):
    """delta(eps) = sum over losses above eps of mass * (1 - e^(eps - loss)) + mass_inf."""
    scalar = np.ndim(eps) == 0
    out = np.clip(_atoms_delta(pld.losses, pld.masses, pld.mass_inf, eps), 0.0, 1.0)
    return float(out[0]) if scalar else out


def epsilon_of(pld: DiscretePLD, delta: float) -> float:
    """Smallest eps with delta_of(pld, eps) <= delta (exact for the discrete PLD)."""
    if not delta <= 1:
        raise ValueError("delta must be at most 1")
    if delta <= pld.mass_inf:
        raise DeltaUnreachableError(
            f"delta {delta:g} is not above the infinite-loss mass {pld.mass_inf:g}")
    losses, masses = pld.losses, pld.masses

    def d_at(j):
        return pld.mass_inf + float(np.sum(masses[j + 1:] * -np.expm1(losses[j] - losses[j + 1:])))

    if d_at(0) <= delta:
        j = -1
    else:
        lo, hi = 0, losses.size - 1  # d_at(lo) > delta >= d_at(hi)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if d_at(mid) > delta:
                lo = mid
            else:
                hi = mid
        j = lo
    # on (losses[j], losses[j+1]] only atoms above j count: delta = inf + A - e^eps B
    ref = losses[j + 1]
    a = float(masses[j + 1:].sum())
    b = float(np.sum(masses[j + 1:] * np.exp(ref - losses[j + 1:])))
    num = pld.mass_inf + a - delta
    if num <= 0 or b <= 0:
        return -math.inf
    eps = ref + math.log(num / b)
    if j >= 0:
        eps = min(max(eps, losses[j]), ref)
    return float(eps)


def curve(pld: DiscretePLD, eps_grid, **metadata) -> PrivacyCurve:
    eps = np.asarray(eps_grid, dtype=float)
    return PrivacyCurve(eps, delta_of(pld, eps), dict(metadata))


# --------------------------------------------------------------------------- composition


def _convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.size + b.size - 1
    if a.size * b.size <= _DIRECT_CONV:
        return np.convolve(a, b)
    size = scipy.fft.next_fast_len(n, real=True)
    fa = scipy.fft.rfft(a, size, workers=_workers())
    fb = fa if b is a else scipy.fft.rfft(b, size, workers=_workers())
    out = scipy.fft.irfft(fa * fb, size, workers=_workers())[:n]
    return np.maximum(out, 0.0)


def _truncate(start_idx: int, masses: np.ndarray, inf: float, step: float, tail: float,
              window: tuple[float, float] | None):
    """Collapse the lower tail onto the new bottom atom and move the upper tail to +inf."""
    n = masses.size
    csum = np.cumsum(masses)
    rsum = np.cumsum(masses[::-1])[::-1]
    lo = int(np.searchsorted(csum, tail, side="right"))
    hi = n - 1 - int(np.searchsorted(rsum[::-1], tail, side="right"))
    if window is not None:
        lo = max(lo, math.floor(window[0] / step + 1e-9) - start_idx)
        hi = min(hi, math.ceil(window[1] / step - 1e-9) - start_idx)
    lo = min(max(lo, 0), n - 1)
    hi = max(min(hi, n - 1), lo)
    kept = masses[lo:hi + 1].copy()
    if lo > 0:
        kept[0] += csum[lo - 1]
    if hi < n - 1:
        inf += float(rsum[hi + 1])
    return start_idx + lo, kept, inf


def compose(a: DiscretePLD, b: DiscretePLD, tail_mass_bound: float = DEFAULT_TAIL,
            window: tuple[float, float] | None = None) -> DiscretePLD:
    """PLD of the composition: convolve the finite parts, combine the +inf atoms."""
    if not math.isclose(a.step, b.step, rel_tol=1e-9):
        raise StepMismatchError(f"steps differ: {a.step} vs {b.step}")
    if a.pessimistic != b.pessimistic:
        raise ValueError("cannot compose pessimistic with optimistic PLDs")
    step = a.step
    ia = round(a.loss_start / step)
    ib = round(b.loss_start / step)
    aligned = (math.isclose(ia * step, a.loss_start, abs_tol=1e-9 * step)
               and math.isclose(ib * step, b.loss_start, abs_tol=1e-9 * step))
    masses = _convolve(a.masses, b.masses)
    inf = 1.0 - (1.0 - a.mass_inf) * (1.0 - b.mass_inf)
    if aligned:
        start, masses, inf = _truncate(ia + ib, masses, inf, step, tail_mass_bound, window)
        loss_start = start * step
    else:
        offset = a.loss_start + b.loss_start
        start, masses, inf = _truncate(0, masses, inf, step, tail_mass_bound, None)
        loss_start = offset + start * step
    masses, inf = _renormalise(masses, inf)
    return DiscretePLD(loss_start, step, masses, inf, a.pessimistic)


def _renormalise(masses, inf):
    # FFT round-off can push the total a hair above 1; never below
    excess = masses.sum() + inf - 1.0
    if excess > 0:
        masses = masses * (1.0 - inf) / masses.sum()
    else:
        inf -= excess
    return masses, min(max(inf, 0.0), 1.0)


def _chernoff_windows(pld: DiscretePLD, tail: float):
    """Loss window holding all but ``tail`` mass of the m-fold sum, per side."""
    keep = pld.masses > 0
    losses, logm = pld.losses[keep], np.log(pld.masses[keep])
    span = max(float(np.ptp(losses)), pld.step)
    lam = np.geomspace(1e-4, 1e4, 241) / span
    log_mgf_up = special.logsumexp(logm[None, :] + lam[:, None] * losses[None, :], axis=1)
    log_mgf_dn = special.logsumexp(logm[None, :] - lam[:, None] * losses[None, :], axis=1)
    log_tail = math.log(tail)
    lmin, lmax = float(losses.min()), float(losses.max())

    def window(m: int):
        hi = float(np.min((m * log_mgf_up - log_tail) / lam))
        lo = float(np.max((log_tail - m * log_mgf_dn) / lam))
        return max(lo, m * lmin), min(hi, m * lmax)

    return window


def self_compose(pld: DiscretePLD, k: int, tail_mass_bound: float = DEFAULT_TAIL,
                 max_len: int = MAX_LEN) -> DiscretePLD:
    """k-fold composition by repeated squaring with Chernoff-sized truncation."""
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    k = int(k)
    if k == 1:
        return pld
    window = _chernoff_windows(pld, tail_mass_bound) if tail_mass_bound > 0 else None
    result, m_result = None, 0
    base, m_base = pld, 1
    while True:
        if k & 1:
            if result is None:
                result, m_result = base, m_base
            else:
                m_result += m_base
                result = _checked_compose(result, base, tail_mass_bound, window, m_result, max_len)
        k >>= 1
        if not k:
            return result
        m_base *= 2
        base = _checked_compose(base, base, tail_mass_bound, window, m_base, max_len)


def _checked_compose(a, b, tail, window, m, max_len):
    if a.masses.size + b.masses.size - 1 > max_len:
        raise BudgetExceededError("composed PLD exceeds the length budget; raise step or tail bound")
    out = compose(a, b, tail, window(m) if window else None)
    if out.masses.size > max_len:
        raise BudgetExceededError("composed PLD exceeds the length budget")
    return out
