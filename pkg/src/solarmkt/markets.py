"""Short-term clearing of the three solar market designs.

Real-time mechanisms clear each operation period after the output
realization: the single-product market (``srt``) pools solar with grid
energy at the backstop price, the product-differentiated market
(``prt``) lets scarce solar command a premium over it.  The
contract-based market (``cb``) clears once, ex ante, by renting panel
capacity for the whole planning window.

Sellers are homogeneous and both sides are non-atomic, so buyer
allocations under scarcity are carried as a premium threshold (the
marginal served type) rather than per-agent records, and expected
revenues reduce to one-dimensional integrals against the generation
densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .distributions import PeriodProfile, PremiumDistribution
from .numerics import (DEFAULT_D_MAX, ConvergenceError, NoEquilibriumError,
                       bisect_decreasing, gauss_legendre_rule, sup_level_set)

__all__ = [
    "RT_MECHANISMS",
    "MECHANISMS",
    "Scenario",
    "ClearingOutcome",
    "CbClearing",
    "CeVerification",
    "clear_rt",
    "unit_revenue_rt",
    "revenue_rt",
    "cb_unit_value",
    "individual_demand_cb",
    "aggregate_demand_cb",
    "clear_cb",
    "buyer_payoff_cb",
    "verify_ce",
]

RT_MECHANISMS = ("srt", "prt")
MECHANISMS = ("srt", "prt", "cb")

#: Gauss-Legendre order for integrals over the premium quantile axis.
PREMIUM_QUAD_ORDER = 96

#: Gauss-Legendre order for revenue integrals against analytic densities.
REVENUE_QUAD_ORDER = 64


@dataclass(frozen=True)
class Scenario:
    """A full problem instance: operation periods plus investment economics.

    ``pi0`` is the capital-plus-installation cost per unit capacity and
    ``t_tilde`` scales one planning window's expected revenue up to the
    panel lifetime.  ``c_bar`` (the individual panel size) is recorded
    for completeness; in the non-atomic limit it never enters the
    equilibrium conditions.
    """

    periods: tuple[PeriodProfile, ...]
    premium: PremiumDistribution
    pi0: float
    t_tilde: float
    c_bar: float = 1.0
    provenance: Mapping[str, str] = field(default_factory=dict, compare=False,
                                          repr=False)

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(self.periods))
        if not self.periods:
            raise ValueError("scenario needs at least one operation period")
        for name, v in (("pi0", self.pi0), ("t_tilde", self.t_tilde)):
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if self.horizon <= 0.0:
            raise ValueError("total period weight must be positive")

    @property
    def horizon(self) -> float:
        """Total number of operation periods one planning window covers."""
        return sum(p.weight for p in self.periods)

    @property
    def period_scale(self) -> float:
        """Lifetime-per-period scaling: t_tilde / total weight."""
        return self.t_tilde / self.horizon

    def with_epsilon(self, epsilon: float) -> "Scenario":
        return replace(self, premium=self.premium.with_epsilon(epsilon))

    def with_pi0(self, pi0: float) -> "Scenario":
        return replace(self, pi0=float(pi0))


@dataclass(frozen=True)
class ClearingOutcome:
    """One period's competitive equilibrium under a real-time mechanism.

    ``buyer_threshold`` is the smallest premium served under scarcity in
    the product-differentiated market and None otherwise (allocations
    are then flat across buyer types).
    """

    mechanism: str
    regime: str  # "abundant" | "limited"
    price: float
    seller_quantity: float
    buyer_threshold: float | None
    served_fraction: float


@dataclass(frozen=True)
class CbClearing:
    """Ex-ante clearing of the capacity rental market."""

    price: float
    seller_quantity: float
    demand_residual: float


def _check_mechanism(mechanism: str, allowed=MECHANISMS):
    if mechanism not in allowed:
        raise ValueError(f"unknown mechanism {mechanism!r}; expected one of {allowed}")


def _check_capacity(c: float) -> float:
    c = float(c)
    if not math.isfinite(c) or c < 0.0:
        raise ValueError(f"capacity must be finite and non-negative, got {c}")
    return c


def clear_rt(scenario: Scenario, period_index: int, mechanism: str,
             c: float, g: float) -> ClearingOutcome:
    """Competitive equilibrium of one period given the realized output g.

    Abundant supply (c*g > L) clears at price zero under both designs.
    Under scarcity the single-product price is the backstop price, while
    the differentiated price adds the premium of the marginal served
    buyer, found from the complementary quantile at the served fraction.
    """
    _check_mechanism(mechanism, RT_MECHANISMS)
    if not 0 <= period_index < len(scenario.periods):
        raise ValueError(f"invalid period index {period_index}")
    c = _check_capacity(c)
    g = float(g)
    if not math.isfinite(g) or g < 0.0:
        raise ValueError(f"realization must be finite and non-negative, got {g}")

    period = scenario.periods[period_index]
    load = period.load
    supply = c * g
    if supply > load:
        return ClearingOutcome(mechanism, "abundant", 0.0, load, None, 1.0)
    served = supply / load
    if mechanism == "srt":
        return ClearingOutcome(mechanism, "limited", period.utility_price,
                               supply, None, served)
    threshold = float(scenario.premium.complementary_quantile(served))
    return ClearingOutcome(mechanism, "limited", period.utility_price + threshold,
                           supply, threshold, served)


def unit_revenue_rt(scenario: Scenario, mechanism: str, c: float) -> float:
    """Expected lifetime revenue per unit capacity under a real-time design.

    This is the left-hand side of the zero-profit condition; it is
    non-increasing in c because added capacity is only paid for up to
    the load in each realization.
    """
    _check_mechanism(mechanism, RT_MECHANISMS)
    c = _check_capacity(c)
    prem = scenario.premium
    with_premium = (mechanism == "prt"
                    and prem.epsilon > 0.0 and prem.v_bar > 0.0)
    total = 0.0
    for period in scenario.periods:
        gen, load = period.generation, period.load
        term = period.utility_price * float(gen.truncated_mean(c, load))
        if with_premium:
            upper = load / c if c > 0.0 else gen.support_hi
            nodes, weights = gen.quad_nodes(0.0, upper, order=REVENUE_QUAD_ORDER)
            if nodes.size:
                frac = np.clip(c * nodes / load, 0.0, 1.0)
                term += float(weights @ (prem.complementary_quantile(frac) * nodes))
        total += period.weight * term
    return scenario.period_scale * total


def revenue_rt(scenario: Scenario, mechanism: str, c: float) -> float:
    """Expected lifetime seller revenue at aggregate capacity c."""
    c = _check_capacity(c)
    if c == 0.0:
        return 0.0
    return c * unit_revenue_rt(scenario, mechanism, c)


def cb_unit_value(scenario: Scenario, v, d):
    """Whole-window expected value of one rented capacity unit, w(d).

    For a buyer with premium v this sums, across periods, the avoided
    backstop cost plus the premium on energy the rented unit actually
    covers.  Non-increasing in d; its extended inverse is the buyer's
    demand curve.
    """
    v = np.asarray(v, dtype=float)
    d = np.asarray(d, dtype=float)
    total = np.zeros(np.broadcast(v, d).shape)
    for period in scenario.periods:
        mu = period.generation.truncated_mean(d, period.load)
        total = total + period.weight * (period.utility_price + v) * mu
    return total


def _cb_demand_profile(scenario: Scenario, vs, pi: float,
                       d_max: float = DEFAULT_D_MAX) -> np.ndarray:
    """Demanded capacity per buyer type at rental price pi (vectorized)."""
    vs = np.atleast_1d(np.asarray(vs, dtype=float))
    choke = cb_unit_value(scenario, vs, np.zeros_like(vs))
    priced_out = pi > choke * (1.0 + 1e-12) + 1e-300
    targets = np.minimum(pi, choke)
    sup = sup_level_set(lambda d: cb_unit_value(scenario, vs, d), targets,
                        0.0, d_max)
    return np.where(priced_out, 0.0, sup)


def individual_demand_cb(scenario: Scenario, v_i: float, pi: float, *,
                         d_max: float = DEFAULT_D_MAX) -> float:
    """Capacity a buyer with premium v_i rents at price pi (0 when priced out)."""
    if pi < 0.0 or not math.isfinite(pi):
        raise ValueError(f"price must be finite and non-negative, got {pi}")
    if v_i < 0.0 or not math.isfinite(v_i):
        raise ValueError(f"premium must be finite and non-negative, got {v_i}")
    return float(_cb_demand_profile(scenario, [v_i], pi, d_max)[0])


def aggregate_demand_cb(scenario: Scenario, pi: float, *,
                        quad_order: int = PREMIUM_QUAD_ORDER,
                        d_max: float = DEFAULT_D_MAX) -> float:
    """Total rented capacity at price pi, integrated over buyer types.

    The integral runs over the premium distribution's quantile axis so
    analytic and empirical premium models are handled uniformly.  Buyer
    types whose whole-window value of the first unit falls short of the
    price demand nothing, so the integral starts at their boundary
    quantile; this keeps near-choke demand accurate when only a sliver
    of high-premium buyers stays in the market.
    """
    if pi < 0.0 or not math.isfinite(pi):
        raise ValueError(f"price must be finite and non-negative, got {pi}")
    prem = scenario.premium
    base_value = sum(p.weight * p.utility_price * p.generation.mean
                     for p in scenario.periods)
    value_per_premium = sum(p.weight * p.generation.mean
                            for p in scenario.periods)
    p_lo = 0.0
    if pi > base_value:
        if value_per_premium <= 0.0:
            return 0.0
        v_cut = (pi - base_value) / value_per_premium
        p_lo = 1.0 - float(prem.survival(v_cut, weak=True))
        if p_lo >= 1.0:
            return 0.0
    p, w = gauss_legendre_rule(p_lo, 1.0, quad_order)
    vs = prem.quantile(p)
    return float(w @ _cb_demand_profile(scenario, vs, pi, d_max))


def clear_cb(scenario: Scenario, c: float, *, d_max: float = DEFAULT_D_MAX,
             residual_tol: float = 1e-7) -> CbClearing:
    """Price at which aggregate rental demand equals the capacity c.

    Found by bisection on the monotone aggregate demand between zero and
    the highest-premium buyer's choke price.  Convergence failures raise
    rather than returning a silently bad price.
    """
    c = _check_capacity(c)
    if c == 0.0:
        raise ValueError("contract-based clearing needs positive capacity")
    top = float(scenario.premium.complementary_quantile(0.0))
    choke = float(cb_unit_value(scenario, top, 0.0)) + 1.0

    def residual(pi):
        return aggregate_demand_cb(scenario, pi, d_max=d_max) - c

    r0 = residual(0.0)
    if r0 < 0.0:
        raise NoEquilibriumError(
            f"capacity {c:g} exceeds zero-price demand {r0 + c:g}; "
            "no market-clearing rental price exists")
    price, _ = bisect_decreasing(residual, 0.0, choke, f_lo=r0, f_hi=-c)
    res = residual(price)
    if abs(res) > residual_tol * max(1.0, c):
        raise ConvergenceError(
            f"contract-based clearing left demand residual {res:g} at price {price:g}")
    return CbClearing(price=price, seller_quantity=c, demand_residual=res)


def _expected_min_and_shortfall(period: PeriodProfile, q):
    """(E min(q G, L), E (L - q G)+) for an array of capacities q."""
    gen, load = period.generation, period.load
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        cut = np.where(q > 0.0, load / np.maximum(q, 1e-300), np.inf)
    m0 = gen.cdf(np.where(np.isfinite(cut), cut, gen.support_hi))
    m1 = gen.partial_first_moment(np.where(np.isfinite(cut), cut, gen.support_hi))
    m0 = np.where(np.isfinite(cut), m0, 1.0)
    m1 = np.where(np.isfinite(cut), m1, gen.mean)
    emin = q * m1 + load * (1.0 - m0)
    eshort = load * m0 - q * m1
    return emin, eshort


def buyer_payoff_cb(scenario: Scenario, v_i: float, q, pi: float):
    """Expected planning-window payoff of renting capacity q at price pi.

    Premium value on solar-covered load, minus the rental bill, minus
    backstop purchases for the uncovered remainder.  Concave in q; its
    maximizer is the buyer's demand.
    """
    q_arr = np.asarray(q, dtype=float)
    if np.any(q_arr < 0.0) or not np.all(np.isfinite(q_arr)):
        raise ValueError("rented capacity must be finite and non-negative")
    total = -pi * q_arr
    for period in scenario.periods:
        emin, eshort = _expected_min_and_shortfall(period, q_arr)
        total = total + period.weight * (v_i * emin
                                         - period.utility_price * eshort)
    return total if total.ndim else float(total)


# ----------------------------------------------------------------------
# Monte-Carlo verification of the equilibrium conditions
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class CeVerification:
    """Deviation and clearing diagnostics for a claimed equilibrium.

    ``max_deviation_gain`` is the largest payoff improvement any buyer
    type or seller could get by moving to another grid point of its
    feasible set; ``max_clearing_violation`` is the largest relative
    supply/demand mismatch.  Flat payoff regions (price-zero sellers,
    pooled-market buyers) count as ties, not violations.
    """

    mechanism: str
    capacity: float
    sample_count: int
    deviation_grid_size: int
    seed: int
    max_deviation_gain: float
    max_clearing_violation: float
    tolerance: float
    passed: bool
    details: Mapping[str, float] = field(default_factory=dict)


def _verify_rt(scenario, mechanism, c, sample_count, grid_size, rng,
               price_perturbation):
    prem = scenario.premium
    p_grid = np.linspace(0.0, 1.0, grid_size)
    buyer_vs = np.asarray(prem.quantile(p_grid), dtype=float)
    max_gain = 0.0
    max_clear = 0.0
    for index, period in enumerate(scenario.periods):
        load = period.load
        q_dev = np.linspace(0.0, load, grid_size)
        draws = period.generation.sample(rng, sample_count)
        v_eff = buyer_vs if mechanism == "prt" else np.zeros_like(buyer_vs)
        for g in draws:
            outcome = clear_rt(scenario, index, mechanism, c, g)
            price = outcome.price * (1.0 + price_perturbation)
            supply = c * g
            if outcome.regime == "abundant":
                assigned = np.full_like(buyer_vs, load)
                clear_violation = 0.0
            elif mechanism == "srt":
                assigned = np.full_like(buyer_vs, supply)
                clear_violation = 0.0
            else:
                thr = outcome.buyer_threshold
                assigned = np.where(buyer_vs >= thr, load, 0.0)
                served_lo = load * float(prem.survival(thr, weak=False))
                served_hi = load * float(prem.survival(thr, weak=True))
                clear_violation = max(0.0, served_lo - supply,
                                      supply - served_hi) / max(1.0, load)
            dev = (v_eff[:, None] - price) * q_dev[None, :] \
                - period.utility_price * (load - q_dev)[None, :]
            held = (v_eff - price) * assigned \
                - period.utility_price * (load - assigned)
            max_gain = max(max_gain, float((dev.max(axis=1) - held).max()))
            # sellers: payoff price * q on [0, supply]
            seller_assigned = outcome.seller_quantity
            seller_best = price * supply if price > 0.0 else 0.0
            max_gain = max(max_gain, seller_best - price * seller_assigned)
            max_clear = max(max_clear, clear_violation)
    return max_gain, max_clear, {}


def _verify_cb(scenario, c, grid_size, price_perturbation):
    prem = scenario.premium
    clearing = clear_cb(scenario, c)
    price = clearing.price * (1.0 + price_perturbation)
    p_grid = np.linspace(0.0, 1.0, grid_size)
    buyer_vs = np.asarray(prem.quantile(p_grid), dtype=float)
    assigned = _cb_demand_profile(scenario, buyer_vs, clearing.price)
    q_hi = 2.0 * max(float(assigned.max()), 1e-6)
    q_dev = np.linspace(0.0, q_hi, grid_size)

    rental = -price * q_dev[None, :]
    held = -price * assigned
    for period in scenario.periods:
        emin_dev, eshort_dev = _expected_min_and_shortfall(period, q_dev)
        emin_held, eshort_held = _expected_min_and_shortfall(period, assigned)
        rental = rental + period.weight * (buyer_vs[:, None] * emin_dev[None, :]
                                           - period.utility_price * eshort_dev[None, :])
        held = held + period.weight * (buyer_vs * emin_held
                                       - period.utility_price * eshort_held)
    buyer_gain = float((rental.max(axis=1) - held).max())
    argmax_gap = float(np.abs(q_dev[rental.argmax(axis=1)] - assigned).max())
    # sellers: payoff price * q on [0, c], maximized at q = c
    seller_gain = max(0.0, price * c - price * clearing.seller_quantity)
    clear_violation = abs(aggregate_demand_cb(scenario, price) - c) / max(1.0, c)
    details = {"cb_price": clearing.price,
               "cb_argmax_gap": argmax_gap,
               "cb_grid_step": float(q_dev[1] - q_dev[0])}
    return max(buyer_gain, seller_gain), clear_violation, details


def verify_ce(scenario: Scenario, mechanism: str, c: float, sample_count: int,
              deviation_grid_size: int = 201, seed: int = 0, *,
              price_perturbation: float = 0.0,
              tolerance: float = 1e-6) -> CeVerification:
    """Check the claimed equilibrium against grid deviations.

    Real-time mechanisms are checked on ``sample_count`` seeded output
    realizations per period.  The contract-based market trades ex ante
    on expectations, so its check is a single deterministic pass (the
    sample count does not enter).  ``price_perturbation`` corrupts the
    clearing price on purpose, to confirm the checker catches broken
    equilibria.
    """
    _check_mechanism(mechanism)
    c = _check_capacity(c)
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    if deviation_grid_size < 2:
        raise ValueError("deviation_grid_size must be at least 2")
    rng = np.random.default_rng(seed)
    if mechanism == "cb":
        gain, clear, details = _verify_cb(scenario, c, deviation_grid_size,
                                          price_perturbation)
    else:
        gain, clear, details = _verify_rt(scenario, mechanism, c, sample_count,
                                          deviation_grid_size, rng,
                                          price_perturbation)
    gain, clear = float(gain), float(clear)
    return CeVerification(
        mechanism=mechanism, capacity=c, sample_count=sample_count,
        deviation_grid_size=deviation_grid_size, seed=seed,
        max_deviation_gain=gain, max_clearing_violation=clear,
        tolerance=tolerance,
        passed=bool(gain <= tolerance and clear <= tolerance),
        details={k: float(v) for k, v in details.items()})
