"""End-to-end accounting: epsilon and delta queries, noise calibration and experiments."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from subacct.dist import Laplace, mixture
from subacct.errors import (
    BudgetExceededError,
    DeltaUnreachableError,
    NotBracketableError,
)
from subacct.mc import MCConfig, mc_delta_curve
from subacct.pairs import (
    MechanismSpec,
    Relation,
    SamplingScheme,
    gaussian,
    laplace,
    pair_add,
    pair_remove,
    pair_substitution_poisson,
    pair_substitution_wor_bounds,
    poisson,
    wor,
)
from subacct.pld import (
    DEFAULT_STEP,
    DEFAULT_TAIL,
    DiscretePLD,
    compose,
    pld_from_pair,
    pld_from_spliced_pairs,
    self_compose,
)
from subacct.rdp import DEFAULT_ORDERS, rdp_to_dp, subsampled_gaussian_profile

UPPER_BOUND_LABEL = "upper bound (not tight)"
SIGMA_BRACKET = (1e-2, 1e3)
SIGMA_RTOL = 1e-3
# calibration gives up on a candidate sigma whose loss grid would exceed this
CALIBRATION_MAX_LEN = 2**22


@dataclass(frozen=True)
class AccountantConfig:
    mech: MechanismSpec
    scheme: SamplingScheme
    relation: Relation = Relation.ADD_REMOVE
    k: int = 1
    step: float = DEFAULT_STEP
    tail_mass_bound: float = DEFAULT_TAIL

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("k must be a positive integer")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not 0 <= self.tail_mass_bound < 1:
            raise ValueError("tail_mass_bound must lie in [0, 1)")

    def with_scale(self, scale: float) -> "AccountantConfig":
        return replace(self, mech=self.mech.with_scale(scale))

    @property
    def tight(self) -> bool:
        return not (self.relation is Relation.SUBSTITUTION and self.scheme.kind == "wor")


@dataclass(frozen=True)
class Direction:
    """One composed PLD that enters the maximum taken by the accountant."""

    name: str
    pld: DiscretePLD
    tight: bool


@functools.lru_cache(maxsize=16)
def directions(cfg: AccountantConfig, max_len: int | None = None) -> tuple[Direction, ...]:
    """Composed PLDs whose maximum gives the privacy curve of ``cfg``."""
    kw = {"step": cfg.step, "tail_mass_bound": cfg.tail_mass_bound}
    built = []
    if cfg.relation is Relation.SUBSTITUTION:
        if cfg.scheme.kind == "poisson":
            pr = pair_substitution_poisson(cfg.mech, cfg.scheme.gamma)
            built.append(("substitution", _pair_pld(pr.p, pr.q, kw, max_len), True))
        else:
            hi, lo = pair_substitution_wor_bounds(cfg.mech, cfg.scheme.gamma)
            _check_len(_estimate_len((hi.p, hi.q), (lo.p, lo.q), cfg), max_len)
            pld = pld_from_spliced_pairs((hi.p, hi.q), (lo.p, lo.q), **kw)
            built.append((UPPER_BOUND_LABEL, pld, False))
    else:
        if cfg.relation in (Relation.ADD, Relation.ADD_REMOVE):
            pr = pair_add(cfg.mech, cfg.scheme)
            built.append(("add", _pair_pld(pr.p, pr.q, kw, max_len), True))
        if cfg.relation in (Relation.REMOVE, Relation.ADD_REMOVE):
            pr = pair_remove(cfg.mech, cfg.scheme)
            built.append(("remove", _pair_pld(pr.p, pr.q, kw, max_len), True))
    out = []
    for name, pld, tight in built:
        composed = self_compose(pld, cfg.k, cfg.tail_mass_bound, **({"max_len": max_len} if max_len else {}))
        out.append(Direction(name, composed, tight))
    return tuple(out)


def _estimate_len(upper, lower, cfg):
    from subacct.divergence import loss_profile

    lo = loss_profile(*lower).loss_quantile_bounds(cfg.tail_mass_bound)[0]
    hi = loss_profile(*upper).loss_quantile_bounds(cfg.tail_mass_bound)[1]
    return (hi - lo) / cfg.step


def _check_len(n, max_len):
    if max_len is not None and n > max_len:
        raise BudgetExceededError(f"loss grid of about {n:.0f} points exceeds {max_len}")


def _pair_pld(p, q, kw, max_len):
    if max_len is not None:
        from subacct.divergence import loss_profile

        lo, hi = loss_profile(p, q).loss_quantile_bounds(kw["tail_mass_bound"])
        _check_len((hi - lo) / kw["step"], max_len)
    return pld_from_pair(p, q, **kw)


def epsilon_for(cfg: AccountantConfig, delta: float) -> float:
    return epsilon_detail(cfg, delta)[0]


def epsilon_detail(cfg: AccountantConfig, delta: float, max_len: int | None = None):
    """``(epsilon, direction, tight)`` where direction attains the maximum."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    best = None
    for d in directions(cfg, max_len):
        e = d.pld.epsilon(delta)
        if best is None or e > best[0]:
            best = (e, d.name, d.tight)
    return best


def delta_for(cfg: AccountantConfig, eps):
    """delta(eps), maximised over directions; vectorised over eps."""
    return delta_detail(cfg, eps)[0]


def delta_detail(cfg: AccountantConfig, eps):
    """``(deltas, direction names)`` for every eps."""
    eps_arr = np.atleast_1d(np.asarray(eps, dtype=float))
    dirs = directions(cfg)
    table = np.vstack([d.pld.delta(eps_arr) for d in dirs])
    which = table.argmax(axis=0)
    deltas = table[which, np.arange(eps_arr.size)]
    names = [dirs[i].name for i in which]
    if np.ndim(eps) == 0:
        return float(deltas[0]), names[0]
    return deltas, names


def sigma_for(cfg: AccountantConfig, epsilon: float, delta: float,
              bracket: tuple[float, float] = SIGMA_BRACKET, rtol: float = SIGMA_RTOL) -> float:
    """Smallest noise scale meeting (epsilon, delta), to relative tolerance ``rtol``.

    Bisects in log-space and returns the upper endpoint, which is known to
    satisfy the target. A candidate whose loss grid would be too large to
    compose is treated as failing, since such a spread of losses only occurs
    for noise far below the answer. When the answer lies below the bracket the
    result is the lowest verified scale, within ``rtol`` of the lower end.

    Raises:
        NotBracketableError: the target fails at the top of the bracket.
    """
    if not epsilon > 0 or not 0 < delta < 1:
        raise ValueError("need epsilon > 0 and 0 < delta < 1")
    lo, hi = bracket

    def ok(scale):
        try:
            return epsilon_detail(cfg.with_scale(scale), delta, CALIBRATION_MAX_LEN)[0] <= epsilon
        except (BudgetExceededError, DeltaUnreachableError):
            return False

    if not ok(hi):
        raise NotBracketableError(f"(eps={epsilon}, delta={delta}) not reached for scale <= {hi}")
    # lo is presumed to fail and is never evaluated: tiny noise makes huge loss
    # grids, and the returned endpoint is always one that was checked
    while hi / lo > 1 + rtol:
        mid = math.sqrt(lo * hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# --------------------------------------------------------------------------- experiments


FIG2_GAMMAS = tuple(float(g) for g in np.geomspace(1e-4, 1.0, 9))
FIG2_TARGETS = (("poisson", 1.0), ("poisson", 2.0), ("poisson", 5.0), ("poisson", 10.0),
                ("wor", 10.0))


def sweep_figure2(gammas=FIG2_GAMMAS, targets=FIG2_TARGETS, delta: float = 1e-6, k: int = 10_000,
                  step: float = DEFAULT_STEP, tail_mass_bound: float = DEFAULT_TAIL):
    """Calibrated Gaussian noise per (scheme, epsilon, gamma) under add/remove.

    Returns:
        list of dicts with keys ``scheme, epsilon, gamma, sigma``, ordered by
        target then gamma.
    """
    rows = []
    for kind, eps in targets:
        for g in gammas:
            cfg = AccountantConfig(gaussian(1.0), SamplingScheme(kind, g), Relation.ADD_REMOVE,
                                   k, step, tail_mass_bound)
            rows.append({"scheme": kind, "epsilon": eps, "gamma": g,
                         "sigma": sigma_for(cfg, eps, delta)})
    return rows


FIG1_GAMMA_SEARCH = (0.2, 0.3, 0.4, 0.5)
FIG1_MIN_GAP = 1e-2


@dataclass
class Fig1Result:
    scale: float
    gamma: float
    eps_grid: np.ndarray
    curves: dict = field(default_factory=dict)  # (k, direction, method) -> deltas
    bands: dict = field(default_factory=dict)  # (k, direction) -> mc accuracy


def _laplace_plds(scale, gamma, step):
    a = pair_add(laplace(scale), poisson(gamma))
    r = pair_remove(laplace(scale), poisson(gamma))
    return (pld_from_pair(a.p, a.q, step=step), pld_from_pair(r.p, r.q, step=step)), (a, r)


def crossing_gaps(scale: float, gamma: float, eps_grid, k: int = 2, step: float = 1e-5):
    """``(max(remove - add), max(add - remove))`` over ``eps_grid`` at ``k`` compositions."""
    (pa, pr), _ = _laplace_plds(scale, gamma, step)
    da = self_compose(pa, k).delta(eps_grid)
    dr = self_compose(pr, k).delta(eps_grid)
    return float(np.max(dr - da)), float(np.max(da - dr))


def find_crossing_gamma(scale: float = 1.0, eps_grid=None, gammas=FIG1_GAMMA_SEARCH,
                        min_gap: float = FIG1_MIN_GAP, step: float = 1e-5) -> float:
    """First gamma whose k=2 add and remove curves cross with both gaps above ``min_gap``."""
    eps_grid = np.linspace(0.0, 2.0, 201) if eps_grid is None else np.asarray(eps_grid)
    for g in gammas:
        up, down = crossing_gaps(scale, g, eps_grid, 2, step)
        if min(up, down) > min_gap:
            return float(g)
    raise NotBracketableError(f"no gamma in {gammas} shows a crossing of size {min_gap}")


def experiment_fig1(scale: float = 1.0, gamma: float | None = None, k_list=(1, 2, 16),
                    eps_grid=None, mc_cfg: MCConfig | None = None, step: float = 1e-5,
                    pld_max_k: int = 16) -> Fig1Result:
    """Add and remove curves of the Poisson subsampled Laplace mechanism.

    ``gamma=None`` runs :func:`find_crossing_gamma`. PLD curves are computed
    for every ``k <= pld_max_k``; MC curves are added when ``mc_cfg`` is given,
    evaluated on ``mc_cfg.eps_grid``.
    """
    eps_grid = np.linspace(0.0, 2.0, 201) if eps_grid is None else np.asarray(eps_grid, float)
    if gamma is None:
        gamma = find_crossing_gamma(scale, step=step)
    res = Fig1Result(scale, gamma, eps_grid)
    (pa, pr), (a, r) = _laplace_plds(scale, gamma, step)
    for k in k_list:
        if k <= pld_max_k:
            res.curves[(k, "add", "pld")] = self_compose(pa, k).delta(eps_grid)
            res.curves[(k, "remove", "pld")] = self_compose(pr, k).delta(eps_grid)
        if mc_cfg is not None:
            for name, pair in (("add", a), ("remove", r)):
                c = mc_delta_curve(pair.p, pair.q, k, mc_cfg)
                res.curves[(k, name, "mc")] = c.deltas
                res.bands[(k, name)] = mc_cfg.accuracy
    return res


FIG3_SCALE = 2.0


def fig3_distributions():
    """Output laws of the two-record, batch-one Laplace example under substitution."""
    p = mixture([0.5, 0.5], [Laplace(-1.0, FIG3_SCALE), Laplace(1.0, FIG3_SCALE)])
    q = Laplace(-1.0, FIG3_SCALE)
    return p, q


FIG3_NAMES = ("PxP||QxQ", "QxQ||PxP", "PxQ||QxP")


def experiment_fig3(eps_grid=None, step: float = 1e-4, tail_mass_bound: float = DEFAULT_TAIL):
    """delta(eps) of the three two-fold product pairs, keyed by :data:`FIG3_NAMES`."""
    eps_grid = np.linspace(0.0, 1.2, 241) if eps_grid is None else np.asarray(eps_grid, float)
    p, q = fig3_distributions()
    pq = pld_from_pair(p, q, step, tail_mass_bound)
    qp = pld_from_pair(q, p, step, tail_mass_bound)
    plds = (self_compose(pq, 2, tail_mass_bound), self_compose(qp, 2, tail_mass_bound),
            compose(pq, qp, tail_mass_bound))
    return eps_grid, {name: pl.delta(eps_grid) for name, pl in zip(FIG3_NAMES, plds)}


def strict_max_intervals(eps_grid, curves: dict):
    """Per curve, ``(largest margin over the others, eps where it occurs)``."""
    names = list(curves)
    table = np.vstack([curves[n] for n in names])
    out = {}
    for i, n in enumerate(names):
        others = np.delete(table, i, axis=0).max(axis=0)
        margin = table[i] - others
        j = int(np.argmax(margin))
        out[n] = (float(margin[j]), float(eps_grid[j]))
    return out


FIG4_DELTAS = tuple(float(d) for d in np.geomspace(1e-9, 1e-3, 13))


def experiment_fig4(sigma: float = 4.0, gamma: float = 0.05, k: int = 1000, delta_grid=FIG4_DELTAS,
                    step: float = DEFAULT_STEP, tail_mass_bound: float = DEFAULT_TAIL,
                    orders=DEFAULT_ORDERS):
    """Epsilon of the WOR substitution bounds for the Gaussian mechanism.

    ``upper`` composes the connect-the-dots PLD of the two-branch maximum,
    ``lower`` composes the eps >= 0 branch alone (tight for one round), and
    ``rdp`` is the Poisson RDP accountant at noise ``sigma / 2``, which has
    the same single-round loss as the WOR branch.

    Returns:
        list of dicts ``{delta, upper, lower, rdp}``.
    """
    base = AccountantConfig(gaussian(sigma), wor(gamma), Relation.SUBSTITUTION, k, step,
                            tail_mass_bound)
    upper = directions(base)[0].pld
    hi, _ = pair_substitution_wor_bounds(gaussian(sigma), gamma)
    lower = self_compose(pld_from_pair(hi.p, hi.q, step, tail_mass_bound), k, tail_mass_bound)
    prof = subsampled_gaussian_profile(sigma / 2, gamma, k, orders)
    return [{"delta": d, "upper": upper.epsilon(d), "lower": lower.epsilon(d),
             "rdp": rdp_to_dp(prof, d)} for d in delta_grid]


CONJECTURE_GRID = {"sigma": (0.5, 1.0, 2.0, 4.0), "gamma": (0.01, 0.1, 0.5),
                   "k": (1, 2, 16, 256)}


@dataclass
class ConjectureWitness:
    sigma: float
    gamma: float
    k: int
    epsilon: float
    remove: float
    add: float


def conjecture_sweep(grid=CONJECTURE_GRID, eps_grid=None, step: float = 1e-4, tol: float = 1e-9,
                     tail_mass_bound: float = DEFAULT_TAIL):
    """Check remove-delta >= add-delta for Poisson subsampled Gaussian pairs.

    Both curves are pessimistic discretisations, so ``tol`` absorbs the
    discretisation error where the true curves touch.

    Returns:
        ``(cells checked, witnesses)``; witnesses list every violation.
    """
    eps_grid = np.linspace(0.0, 10.0, 201) if eps_grid is None else np.asarray(eps_grid, float)
    ks = sorted(grid["k"])
    witnesses, cells = [], 0
    for s in grid["sigma"]:
        for g in grid["gamma"]:
            a = pair_add(gaussian(s), poisson(g))
            r = pair_remove(gaussian(s), poisson(g))
            pa = pld_from_pair(a.p, a.q, step, tail_mass_bound)
            pr = pld_from_pair(r.p, r.q, step, tail_mass_bound)
            for k in ks:
                da = self_compose(pa, k, tail_mass_bound).delta(eps_grid)
                dr = self_compose(pr, k, tail_mass_bound).delta(eps_grid)
                cells += 1
                bad = np.flatnonzero(dr < da - tol)
                witnesses.extend(ConjectureWitness(s, g, k, float(eps_grid[i]), float(dr[i]),
                                                   float(da[i])) for i in bad)
    return cells, witnesses


def rr_oracle():
    """Exact divergences of the two-round subsampled bit mechanism.

    Returns:
        dict with keys ``"H_{4/3}(P||Q)"``, ``"H_{4/3}(Q||P)"``, ``"H_2(P||Q)"``
        and ``"H_2(Q||P)"`` mapping to Fractions, where P and Q are the
        two-round output laws on the datasets without and with the 1.
    """
    from fractions import Fraction

    from subacct.dist import ProductDistribution
    from subacct.divergence import hockey_stick_product
    from subacct.pairs import randomized_response_factor

    on_d, on_dp = randomized_response_factor()
    p = ProductDistribution((on_d, on_d))
    q = ProductDistribution((on_dp, on_dp))
    out = {}
    for label, alpha in (("H_{4/3}", Fraction(4, 3)), ("H_2", Fraction(2))):
        out[f"{label}(P||Q)"] = hockey_stick_product(p, q, alpha)
        out[f"{label}(Q||P)"] = hockey_stick_product(q, p, alpha)
    return out


def format_rr(values: dict) -> str:
    return ", ".join(f"{k}={v}" for k, v in values.items())


__all__ = [
    "AccountantConfig", "Direction", "directions", "epsilon_for", "epsilon_detail", "delta_for",
    "delta_detail", "sigma_for", "sweep_figure2", "experiment_fig1", "experiment_fig3",
    "experiment_fig4", "conjecture_sweep", "rr_oracle", "format_rr", "find_crossing_gamma",
    "crossing_gaps", "strict_max_intervals", "fig3_distributions", "UPPER_BOUND_LABEL",
]
