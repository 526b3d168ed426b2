"""Monte Carlo estimates of composed hockey-stick divergences.

For every epsilon in a fixed grid the estimator averages
``max(0, 1 - exp(eps - Y))`` over samples of the k-fold loss ``Y``. Each term
lies in [0, 1], so Hoeffding's inequality plus a union bound over the grid
gives a simultaneous ``+-accuracy`` band with probability ``1 - confidence``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from subacct.dist import Discrete, is_continuous
from subacct.errors import MismatchedSupportError
from subacct.pld import PrivacyCurve

BLOCK_SIZE = 1 << 16


@dataclass(frozen=True)
class MCConfig:
    """Sampling budget and evaluation grid.

    Attributes:
        accuracy: half-width of the guaranteed band around each estimate.
        confidence: failure probability of the band, over all grid points jointly.
        eps_grid: epsilons at which delta is estimated.
        seed: root seed; block ``b`` draws from ``default_rng([seed, b])``.
    """

    accuracy: float = 1e-3
    confidence: float = 1e-2
    eps_grid: tuple = field(default_factory=lambda: tuple(np.linspace(0.0, 2.0, 40).tolist()))
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "eps_grid", tuple(float(e) for e in self.eps_grid))
        if not self.accuracy > 0:
            raise ValueError("accuracy must be positive")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")
        if not self.eps_grid:
            raise ValueError("eps_grid must be nonempty")
        if any(b <= a for a, b in zip(self.eps_grid, self.eps_grid[1:])):
            raise ValueError("eps_grid must be strictly increasing")

    @property
    def samples(self) -> int:
        return hoeffding_samples(self.accuracy, self.confidence, len(self.eps_grid))


def hoeffding_samples(accuracy: float, confidence: float, grid_size: int) -> int:
    """Samples needed for a simultaneous ``accuracy`` band over ``grid_size`` points."""
    if not accuracy > 0 or not 0 < confidence < 1 or grid_size < 1:
        raise ValueError("need accuracy > 0, 0 < confidence < 1 and grid_size >= 1")
    return math.ceil(math.log(2 * grid_size / confidence) / (2 * accuracy**2))


def _loss_fn(p, q):
    if is_continuous(p) and is_continuous(q):
        return lambda x: p.logpdf(x) - q.logpdf(x)
    if isinstance(p, Discrete) and isinstance(q, Discrete):
        table = {}
        for o in p.outcomes:
            pp, qq = p.prob(o), q.prob(o)
            if pp > 0:
                table[float(o)] = math.inf if qq == 0 else math.log(pp) - math.log(qq)
        return np.vectorize(lambda x: table[float(x)], otypes=[float])
    raise MismatchedSupportError("p and q must both be continuous or both discrete")


def _block_sums(loss, p, k, eps, n, rng):
    x = p.sample(rng, size=(n, k))
    y = loss(x).sum(axis=1)
    with np.errstate(over="ignore"):
        terms = -np.expm1(eps[None, :] - y[:, None])
    return np.maximum(terms, 0.0).sum(axis=0)


def mc_delta_curve(p, q, k: int, cfg: MCConfig) -> PrivacyCurve:
    """Estimate ``H_{e^eps}(P^k || Q^k)`` on ``cfg.eps_grid``.

    The returned curve carries ``accuracy``, ``confidence``, ``samples``,
    ``lower`` and ``upper`` (the band clipped to [0, 1]) in its metadata.
    Estimates need not be monotone in eps.
    """
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    eps = np.asarray(cfg.eps_grid, dtype=float)
    loss = _loss_fn(p, q)
    n_total = cfg.samples
    partial = [[] for _ in eps]
    done, block = 0, 0
    while done < n_total:
        n = min(BLOCK_SIZE, n_total - done)
        sums = _block_sums(loss, p, int(k), eps, n, np.random.default_rng([cfg.seed, block]))
        for j, s in enumerate(sums):
            partial[j].append(float(s))
        done += n
        block += 1
    est = np.clip(np.array([math.fsum(col) for col in partial]) / n_total, 0.0, 1.0)
    meta = {"k": int(k), "accuracy": cfg.accuracy, "confidence": cfg.confidence,
            "samples": n_total, "seed": cfg.seed,
            "lower": np.clip(est - cfg.accuracy, 0.0, 1.0),
            "upper": np.clip(est + cfg.accuracy, 0.0, 1.0)}
    return PrivacyCurve(eps, est, meta)
