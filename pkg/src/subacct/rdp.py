"""Renyi-DP accountant for the (Poisson subsampled) Gaussian mechanism.

Used as a reference line: it is looser than PLD accounting but easy to
compose, since RDP values simply add up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

DEFAULT_ORDERS = tuple(range(2, 257))


@dataclass(frozen=True, eq=False)
class RdpProfile:
    """RDP epsilon at each order after ``k`` compositions."""

    orders: np.ndarray
    values: np.ndarray
    k: int = 1

    def __post_init__(self):
        orders = np.asarray(self.orders, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if orders.ndim != 1 or orders.shape != values.shape or orders.size == 0:
            raise ValueError("orders and values must be matching nonempty vectors")
        if np.any(orders <= 1) or np.any(np.diff(orders) <= 0):
            raise ValueError("orders must be strictly increasing and above 1")
        if np.any(values < 0):
            raise ValueError("RDP values must be nonnegative")
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "values", values)

    def compose(self, k: int) -> "RdpProfile":
        """Profile of ``k`` sequential runs of this one."""
        return RdpProfile(self.orders, self.values * k, self.k * k)


def rdp_gaussian(sigma: float, order: float) -> float:
    if not sigma > 0 or not order > 1:
        raise ValueError("need sigma > 0 and order > 1")
    return order / (2 * sigma**2)


def rdp_subsampled_gaussian(sigma: float, gamma: float, order: int) -> float:
    """RDP of the Poisson subsampled Gaussian at an integer order, via the binomial sum.

    Raises:
        OverflowError: if the log-sum is not finite.
    """
    if int(order) != order or order < 2:
        raise ValueError("order must be an integer >= 2")
    if not sigma > 0 or not 0 <= gamma <= 1:
        raise ValueError("need sigma > 0 and gamma in [0, 1]")
    order = int(order)
    if gamma == 0:
        return 0.0
    j = np.arange(order + 1, dtype=float)
    log_binom = special.gammaln(order + 1) - special.gammaln(j + 1) - special.gammaln(order - j + 1)
    with np.errstate(over="ignore", invalid="ignore"):
        terms = (log_binom + special.xlogy(order - j, 1 - gamma) + j * math.log(gamma)
                 + j * (j - 1) / (2 * sigma**2))
        total = special.logsumexp(terms)
    if not math.isfinite(total):
        raise OverflowError("RDP log-sum overflowed")
    return max(float(total) / (order - 1), 0.0)


def gaussian_profile(sigma: float, k: int = 1, orders=DEFAULT_ORDERS) -> RdpProfile:
    values = [rdp_gaussian(sigma, a) for a in orders]
    return RdpProfile(orders, values).compose(k)


def subsampled_gaussian_profile(sigma: float, gamma: float, k: int = 1,
                                orders=DEFAULT_ORDERS) -> RdpProfile:
    values = [rdp_subsampled_gaussian(sigma, gamma, a) for a in orders]
    return RdpProfile(orders, values).compose(k)


def rdp_to_dp(profile: RdpProfile, delta: float) -> float:
    """Smallest epsilon over orders from the standard RDP-to-(eps, delta) conversion, floored at 0."""
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    a = profile.orders
    eps = profile.values + np.log(1 / (a * delta)) / (a - 1) + np.log1p(-1 / a)
    return max(float(eps.min()), 0.0)
