from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from smot.errors import (
    HedgeVerificationError,
    InfeasibleModelError,
    InputError,
    MixedKindError,
    PathCountExceededError,
)
from smot.marginals import Grid, MarketInput, Marginal, PriceCurve, call_curve_from_marginal, put_curve_from_marginal
from smot.paths import TailProxySpec, all_paths, build_lattice, lattice_for_market
from smot.payoffs import (
    Payoff,
    analytic_beta,
    asian,
    european_call,
    european_put,
    forward,
    lookback_knock_in,
    table_payoff,
)
from smot.pricing import (
    HedgePortfolio,
    PricingOptions,
    ReportOptions,
    StaticPosition,
    arbitrage_certificate,
    closed_form_one_period,
    delta_dominance,
    duality_report,
    primal_price,
    superhedge_calls,
    superhedge_puts,
    verify_hedge,
)


def _abs_move(values: np.ndarray) -> np.ndarray:
    return np.abs(values[:, 2] - values[:, 1])


ABS_MOVE = Payoff("abs_move", _abs_move, 1.0)


def _setup(marginals, kind="put", proxies=None, s0=100.0):
    lattice = build_lattice(s0, marginals, proxies or TailProxySpec())
    market = MarketInput.from_marginals(s0, marginals, kind)
    return market, lattice, all_paths(lattice)


# ---------------------------------------------------------------------------
# Primal
# ---------------------------------------------------------------------------


def test_one_period_primal_is_an_expectation(one_period_bubble):
    _, _, mask = _setup(one_period_bubble, proxies=TailProxySpec(count=0))
    result = primal_price(one_period_bubble, mask, european_call(85.0))
    assert result.value == pytest.approx(0.4 * 5.0 + 0.3 * 15.0)
    paths, probs = result.support()
    assert probs.sum() == pytest.approx(1.0)
    assert paths.shape[1] == 1


@pytest.mark.parametrize("mode", ["supermartingale", "martingale"])
def test_spread_from_a_point_mass(mode):
    marginals = [Marginal.point_mass(100.0), Marginal.from_pairs([(50.0, 0.5), (150.0, 0.5)])]
    _, _, mask = _setup(marginals, proxies=TailProxySpec(count=0))
    assert primal_price(marginals, mask, ABS_MOVE, mode).value == pytest.approx(50.0)


def test_plain_coupling_bounds_the_supermartingale_value(martingale_pair):
    _, _, mask = _setup(martingale_pair, proxies=TailProxySpec(count=0))
    sup = primal_price(martingale_pair, mask, ABS_MOVE, "supermartingale").value
    plain = primal_price(martingale_pair, mask, ABS_MOVE, "plain_coupling").value
    assert plain >= sup - 1e-9


def test_reverse_order_has_no_supermartingale_law():
    marginals = [Marginal.from_pairs([(50.0, 0.5), (150.0, 0.5)]), Marginal.point_mass(100.0)]
    _, _, mask = _setup(marginals, proxies=TailProxySpec(count=0))
    with pytest.raises(InfeasibleModelError) as info:
        primal_price(marginals, mask, ABS_MOVE)
    assert info.value.farkas_ray is not None


def test_marginals_must_match_the_lattice(one_period_bubble):
    _, _, mask = _setup(one_period_bubble)
    with pytest.raises(InputError):
        primal_price([Marginal.point_mass(90.0)], mask, forward())
    with pytest.raises(InputError):
        primal_price(one_period_bubble, mask, forward(), mode="bogus")  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# Superhedging
# ---------------------------------------------------------------------------


def test_call_market_prices_quoted_claims(one_period_bubble):
    market, _, mask = _setup(one_period_bubble, kind="call")
    assert superhedge_calls(market, mask, european_call(90.0)).value == pytest.approx(3.0)
    assert superhedge_calls(market, mask, forward()).value == pytest.approx(90.0)


def test_put_market_forward_costs_the_spot(one_period_bubble):
    market, _, mask = _setup(one_period_bubble)
    dual = superhedge_puts(market, mask, forward())
    assert dual.value == pytest.approx(100.0)
    assert dual.portfolio.cost == pytest.approx(dual.value)
    assert dual.worst_slack >= -1e-7
    assert float(dual.portfolio.deltas[0]) == pytest.approx(1.0, abs=1e-6)


def test_tampered_hedge_fails_verification(one_period_bubble):
    market, _, mask = _setup(one_period_bubble)
    dual = superhedge_puts(market, mask, forward())
    cheaper = replace(dual, portfolio=replace(dual.portfolio, cash=dual.portfolio.cash - 1.0))
    with pytest.raises(HedgeVerificationError) as info:
        verify_hedge(cheaper, mask, forward())
    assert info.value.worst_slack < 0.0


def test_verification_is_not_diluted_at_tail_proxies(one_period_bubble):
    market, lattice, mask = _setup(one_period_bubble, proxies=TailProxySpec(count=1, growth_factor=1000.0))
    payoff = european_put(100.0)
    dual = superhedge_puts(market, mask, payoff)
    price = float(market.curves[0](np.array([100.0]))[0])
    put = StaticPosition("put", 1, 100.0, 1.0, price)
    exact = replace(dual, portfolio=HedgePortfolio(0.0, (put,), (np.array(0.0),)))
    assert verify_hedge(exact, mask, payoff) == pytest.approx(0.0, abs=1e-12)
    # short a sliver of stock: harmless on the mass levels, about -1e-4 at the proxy
    sliver = replace(dual, portfolio=HedgePortfolio(0.0, (put,), (np.array(-1e-9),)))
    with pytest.raises(HedgeVerificationError) as info:
        verify_hedge(sliver, mask, payoff)
    assert info.value.worst_slack == pytest.approx(-1e-9 * (lattice.levels[0][-1] - 100.0))


def test_hedges_check_the_market_kind(one_period_bubble):
    calls, _, mask = _setup(one_period_bubble, kind="call")
    puts, _, _ = _setup(one_period_bubble)
    with pytest.raises(MixedKindError):
        superhedge_puts(calls, mask, forward())
    with pytest.raises(MixedKindError):
        superhedge_calls(puts, mask, forward())


def test_strike_menu(one_period_bubble):
    market, _, mask = _setup(one_period_bubble)
    payoff = european_call(85.0)
    full = superhedge_puts(market, mask, payoff)
    narrow = superhedge_puts(market, mask, payoff, strike_menu={1: [90.0, 100.0]})
    assert narrow.strike_menu == {1: (90.0, 100.0)}
    assert narrow.value >= full.value - 1e-9
    with pytest.raises(InputError):
        superhedge_puts(market, mask, payoff, strike_menu={1: [95.0]})


def test_oversized_tableaus_are_refused_before_assembly(bubble_pair):
    market, _, mask = _setup(bubble_pair)
    tight = PricingOptions(dense_cell_cap=100)
    with pytest.raises(PathCountExceededError, match="dense tableau"):
        superhedge_puts(market, mask, asian(85.0), options=tight)
    with pytest.raises(PathCountExceededError, match="dense tableau"):
        primal_price(bubble_pair, mask, asian(85.0), options=tight)
    with pytest.raises(PathCountExceededError, match="dense tableau"):
        arbitrage_certificate(market, mask, tight)
    assert superhedge_puts(market, mask, asian(85.0)).value > 0.0


# ---------------------------------------------------------------------------
# One period in closed form
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    ("payoff", "p", "v"),
    [(forward(), 90.0, 100.0), (european_call(85.0), 6.5, 16.5)],
)
def test_closed_form_one_period_matches_the_lps(one_period_bubble, payoff, p, v):
    closed = closed_form_one_period(one_period_bubble[0], payoff, 100.0)
    assert closed.p == pytest.approx(p)
    assert closed.v == pytest.approx(v)
    assert closed.gap == pytest.approx(10.0)

    market, _, mask = _setup(one_period_bubble)
    assert primal_price(one_period_bubble, mask, payoff).value == pytest.approx(p)
    assert superhedge_puts(market, mask, payoff).value == pytest.approx(v, abs=1e-6)


def test_closed_form_needs_an_analytic_beta(one_period_bubble):
    custom = Payoff("custom", lambda v: v[:, 1] - 90.0, 1.0)
    with pytest.raises(InputError, match="closed-form beta"):
        closed_form_one_period(one_period_bubble[0], custom, 100.0)


def test_flat_tables_close_the_one_period_gap(one_period_bubble):
    table = table_payoff([np.array([80.0, 90.0, 100.0])], np.array([1.0, 2.0, 3.0]))
    closed = closed_form_one_period(one_period_bubble[0], table, 100.0)
    assert closed.beta == 0.0
    assert closed.p == pytest.approx(0.3 * 1.0 + 0.4 * 2.0 + 0.3 * 3.0)
    assert closed.v == pytest.approx(closed.p)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def test_report_concurrency_does_not_change_numbers(bubble_pair):
    market, _, mask = _setup(bubble_pair)
    payoff = asian(85.0)
    serial = duality_report(market, mask, payoff, ReportOptions(), bubble_pair)
    threaded = duality_report(market, mask, payoff, ReportOptions(concurrent=True), bubble_pair)
    assert serial.p == threaded.p
    assert serial.v == threaded.v
    assert serial.bubbles == pytest.approx((10.0, 13.0))


def test_call_report_flags_a_zero_strike_call_below_spot(one_period_bubble):
    market, _, mask = _setup(one_period_bubble, kind="call")
    report = duality_report(market, mask, forward(), ReportOptions(routes=("direct", "beta")), one_period_bubble)
    assert report.dominated_by_zero_strike_call is True
    assert report.beta_route is None
    assert abs(report.gap) <= 1e-7 * (1.0 + abs(report.p))


def test_report_serializes(bubble_pair):
    market, lattice, mask = _setup(bubble_pair)
    report = duality_report(
        market, mask, asian(85.0), ReportOptions(routes=("direct", "beta")), bubble_pair
    )
    out = report.to_dict(lattice)
    assert out["P"] == report.p
    assert out["beta_route"]["source"] == "analytic"
    assert out["lattice"]["shape"] == [6, 6]
    assert all(len(row["path"]) == 3 for row in out["primal"]["coupling"])
    assert out["forward"] == pytest.approx(87.0)
    assert out["bubble_flags"] == [True, True]


def test_martingale_quotes_raise_no_bubble_flags(martingale_pair):
    market, _, mask = _setup(martingale_pair, kind="call", proxies=TailProxySpec(count=1))
    report = duality_report(market, mask, asian(95.0), ReportOptions(), martingale_pair)
    assert report.forward == pytest.approx(100.0)
    assert report.bubble_flags == (False, False)
    assert report.bubbles == pytest.approx((0.0, 0.0), abs=1e-12)


# ---------------------------------------------------------------------------
# Hedge structure
# ---------------------------------------------------------------------------


UNIT_FIRST = Marginal.from_pairs([(0.8, 0.3), (0.9, 0.4), (1.0, 0.3)])
UNIT_SECONDS = {
    "mean87": Marginal.from_pairs([(0.7, 0.3), (0.9, 0.4), (1.0, 0.3)]),
    "wide": Marginal.from_pairs([(0.6, 0.2), (0.9, 0.5), (1.0, 0.3)]),
}


@pytest.mark.parametrize("second", sorted(UNIT_SECONDS))
@pytest.mark.parametrize(
    "payoff",
    [asian(0.8), asian(0.95), lookback_knock_in(0.9, 0.75), lookback_knock_in(0.95, 0.85)],
    ids=["asian-0.8", "asian-0.95", "lookback-0.9", "lookback-0.95"],
)
def test_stock_holdings_dominate_beta(payoff, second):
    marginals = [UNIT_FIRST, UNIT_SECONDS[second]]
    market, lattice, mask = _setup(marginals, proxies=TailProxySpec(count=1, growth_factor=1e7), s0=1.0)
    dual = superhedge_puts(market, mask, payoff)
    assert delta_dominance(dual, analytic_beta(payoff, lattice), lattice) == []


# ---------------------------------------------------------------------------
# Arbitrage certificates
# ---------------------------------------------------------------------------

STRIKES = Grid.of([0.0, 80.0, 90.0, 100.0, 110.0, 120.0])


def _quoted_market(martingale_pair, kind, maturity=None, strike=None, price=None):
    build = call_curve_from_marginal if kind == "call" else put_curve_from_marginal
    curves = [build(m, STRIKES, maturity=t) for t, m in enumerate(martingale_pair, start=1)]
    if maturity is not None:
        curve = curves[maturity - 1]
        prices = curve.prices.copy()
        prices[STRIKES.index_of([strike])[0]] = price
        curves[maturity - 1] = PriceCurve.build(kind, maturity, STRIKES, prices)
    return MarketInput.build(100.0, curves)


@pytest.mark.parametrize("kind", ["call", "put"])
def test_consistent_quotes_admit_no_certificate(martingale_pair, kind):
    market = _quoted_market(martingale_pair, kind)
    lattice = lattice_for_market(market, TailProxySpec(count=1))
    assert arbitrage_certificate(market, all_paths(lattice)) is None


@pytest.mark.parametrize(
    ("kind", "maturity", "strike", "price"),
    [
        ("put", 2, 100.0, 3.0),  # p2(100) < p1(100) = 5
        ("put", 2, 110.0, 9.0),  # p2(110) < p1(110) = 10
        ("put", 2, 90.0, -0.5),
        ("put", 1, 100.0, 9.0),  # butterfly around 100
        ("put", 2, 100.0, 9.0),
        ("put", 1, 110.0, 13.0),  # p1(110) > p2(110) = 12.5
        ("put", 1, 120.0, 21.0),  # p1(120) > p2(120) = 20
        ("put", 2, 120.0, 19.0),
        ("put", 2, 110.0, 16.0),  # put spread 100-110 worth more than 10
        ("put", 1, 100.0, -1.0),
        ("put", 1, 120.0, 35.0),  # put spread 110-120 worth 25
        ("put", 2, 100.0, 1.0),
        ("put", 2, 110.0, 5.0),
        ("call", 1, 0.0, 110.0),  # c1(0) above spot
        ("call", 2, 0.0, 101.0),
        ("call", 2, 100.0, 12.0),  # butterfly around 100
        ("call", 1, 100.0, 11.0),  # c1(100) > c1(90)
        ("call", 2, 120.0, 3.0),  # c2(120) > c2(110)
        ("call", 1, 90.0, 25.0),  # c1(90) > c1(80)
        ("call", 2, 90.0, 6.0),  # call spread 80-90 worth 14
        ("call", 1, 110.0, -0.5),
    ],
)
def test_broken_quotes_yield_a_verified_certificate(martingale_pair, kind, maturity, strike, price):
    market = _quoted_market(martingale_pair, kind, maturity, strike, price)
    lattice = lattice_for_market(market, TailProxySpec(count=1))
    mask = all_paths(lattice)
    cert = arbitrage_certificate(market, mask)
    assert cert is not None
    assert cert.cost < -1e-6
    assert cert.cost == pytest.approx(cert.portfolio.cost)
    idx = lattice.all_indices()
    payoff = cert.portfolio.value(idx, lattice.values(idx))
    assert payoff.min() >= -1e-9
    for held in cert.portfolio.deltas:
        assert np.all(held[np.isfinite(held)] >= 0.0)
