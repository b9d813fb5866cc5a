from __future__ import annotations

import numpy as np
import pytest

from smot.errors import (
    GrowthBoundError,
    InputError,
    NoAnalyticBetaError,
    NoTailProxiesError,
    UnboundedGBetaError,
    UnknownSpecError,
)
from smot.marginals import Marginal
from smot.paths import MaskSpec, PathLattice, TailProxySpec, all_paths, build_lattice, build_mask
from smot.payoffs import (
    BetaFunctions,
    Payoff,
    PayoffSpec,
    analytic_beta,
    asian,
    basket,
    check_g_beta_bounded,
    european_call,
    european_put,
    forward,
    lookback_knock_in,
    make_payoff,
    modified_payoff_g_beta,
    numeric_beta,
    penalized_payoff,
    power_call,
    random_table,
    table_payoff,
    verify_growth,
)

LEVELS = Marginal.from_pairs([(70.0, 0.3), (90.0, 0.4), (100.0, 0.3)])


def _lattice(n: int = 2, proxies: TailProxySpec | None = None) -> PathLattice:
    return build_lattice(100.0, [LEVELS] * n, proxies or TailProxySpec(count=3, growth_factor=10.0))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def test_catalog_values():
    path = np.array([[100.0, 50.0, 150.0]])
    assert asian(0.0)(path)[0] == pytest.approx(100.0)
    assert asian(100.0)(np.array([[100.0, 100.0, 100.0]]))[0] == 0.0
    assert lookback_knock_in(100.0, 80.0)(np.array([[100.0, 70.0, 120.0]]))[0] == pytest.approx(20.0)
    assert lookback_knock_in(100.0, 60.0)(np.array([[100.0, 70.0, 120.0]]))[0] == 0.0
    assert forward()(path)[0] == 150.0
    assert forward(1)(path)[0] == 50.0
    assert european_call(120.0)(path)[0] == pytest.approx(30.0)
    assert european_put(120.0, maturity=1)(path)[0] == pytest.approx(70.0)
    assert power_call(50.0, 0.5)(path)[0] == pytest.approx(10.0)


def test_basket_sums_components():
    payoff = basket([(2.0, forward(1)), (0.5, european_call(100.0))])
    assert payoff(np.array([[100.0, 50.0, 150.0]]))[0] == pytest.approx(125.0)
    assert payoff.has_analytic_beta
    assert payoff.growth_bound == pytest.approx(2.5)
    assert not basket([(-1.0, forward(1))]).has_analytic_beta


def test_power_call_exponent_range():
    with pytest.raises(InputError):
        power_call(100.0, 1.5)
    assert power_call(100.0, 1.0).has_analytic_beta


def test_make_payoff_dispatch():
    payoff = make_payoff(PayoffSpec("lookback_knock_in", strike=90.0, barrier=80.0))
    assert payoff.name == "lookback_knock_in(90,80)"
    nested = make_payoff(
        PayoffSpec("basket", components=(PayoffSpec("forward", weight=1.0), PayoffSpec("asian", weight=2.0)))
    )
    assert nested(np.array([[100.0, 80.0, 120.0]]))[0] == pytest.approx(120.0 + 2 * 100.0)
    with pytest.raises(UnknownSpecError):
        make_payoff(PayoffSpec("bogus"))  # type: ignore[arg-type]
    with pytest.raises(InputError):
        make_payoff(PayoffSpec("random_table"))


def test_table_payoff_is_flat_beyond_the_top():
    payoff = table_payoff([np.array([10.0, 20.0])], np.array([1.0, 2.0]))
    out = payoff(np.array([[15.0, 10.0], [15.0, 20.0], [15.0, 25.0], [15.0, 1e6]]))
    np.testing.assert_allclose(out, [1.0, 2.0, 2.0, 2.0])


def test_random_table_is_seeded():
    lattice = _lattice()
    values = lattice.values(lattice.all_indices())
    first = random_table(lattice, 0.0, 1.0, seed=4)(values)
    second = random_table(lattice, 0.0, 1.0, seed=4)(values)
    np.testing.assert_array_equal(first, second)
    assert np.all((first >= 0.0) & (first <= 1.0))


def test_growth_bound():
    lattice = PathLattice.from_levels(100.0, [[100.0, 200.0]], TailProxySpec(count=0))
    table = table_payoff([np.array([100.0, 200.0])], np.array([1000.0, 1000.0]), growth_bound=1.0)
    with pytest.raises(GrowthBoundError):
        verify_growth(table, lattice)
    assert verify_growth(forward(), _lattice()) <= 1.0
    with pytest.raises(GrowthBoundError):
        verify_growth(Payoff("bare", lambda v: v[:, -1]), lattice)


# ---------------------------------------------------------------------------
# beta
# ---------------------------------------------------------------------------


def test_analytic_asian_beta():
    beta = analytic_beta(asian(100.0), _lattice())
    assert float(beta.values[0]) == pytest.approx(1.0)
    np.testing.assert_allclose(beta.values[1], 0.5)
    assert beta.source == "analytic"
    assert not beta.approximate


def test_analytic_lookback_beta_depends_on_history():
    lattice = _lattice(proxies=TailProxySpec(count=0))
    beta = analytic_beta(lookback_knock_in(90.0, 80.0), lattice)
    assert float(beta.values[0]) == pytest.approx(1.0)
    # history (100, 70) has touched the barrier, (100, 90) has not
    assert beta.at(1, np.array([[0]]))[0] == pytest.approx(1.0)
    assert beta.at(1, np.array([[1]]))[0] == pytest.approx(0.0)


@pytest.mark.parametrize("k", [0, 1, 4])
def test_first_period_beta_broadcasts_over_empty_histories(k):
    beta = BetaFunctions((np.array(0.7), np.zeros(3)), "analytic")
    out = beta.at(0, np.zeros((k, 0), dtype=np.intp))
    np.testing.assert_allclose(out, np.full(k, 0.7))
    np.testing.assert_allclose(beta.at(1, np.array([[2], [0]])), [0.0, 0.0])


def test_forward_beta_stops_at_maturity():
    beta = analytic_beta(forward(1), _lattice())
    assert float(beta.values[0]) == 1.0
    np.testing.assert_allclose(beta.values[1], 0.0)


def test_no_analytic_beta_without_a_provider():
    lattice = _lattice()
    payoff = Payoff("custom", lambda v: v[:, 1] * v[:, 2] * 0.0, 1.0)
    with pytest.raises(NoAnalyticBetaError):
        analytic_beta(payoff, lattice)


def test_numeric_asian_beta():
    lattice = _lattice()
    beta = numeric_beta(asian(100.0), lattice, all_paths(lattice))
    assert beta.approximate
    assert 0.99 <= float(beta.values[0]) <= 1.01
    np.testing.assert_allclose(beta.values[1], 0.5, atol=1e-9)


def test_numeric_beta_of_a_bounded_payoff_is_zero():
    lattice = _lattice()
    beta = numeric_beta(european_put(100.0), lattice, all_paths(lattice))
    for values in beta.values:
        np.testing.assert_allclose(values, 0.0)


def test_numeric_lookback_beta_matches_closed_form():
    lattice = _lattice(proxies=TailProxySpec(count=2, growth_factor=10.0))
    payoff = lookback_knock_in(90.0, 80.0)
    numeric = numeric_beta(payoff, lattice, all_paths(lattice))
    exact = analytic_beta(payoff, lattice)
    for got, want in zip(numeric.values, exact.values, strict=True):
        np.testing.assert_allclose(got, want, atol=1e-9)


def test_numeric_beta_needs_proxies():
    lattice = _lattice(proxies=TailProxySpec(count=0))
    with pytest.raises(NoTailProxiesError):
        numeric_beta(asian(100.0), lattice, all_paths(lattice))


# ---------------------------------------------------------------------------
# Modified and penalised payoffs
# ---------------------------------------------------------------------------


def test_g_beta_of_a_forward_is_the_spot():
    lattice = build_lattice(100.0, [LEVELS], TailProxySpec(count=2))
    payoff = forward()
    g_beta = modified_payoff_g_beta(payoff, analytic_beta(payoff, lattice), lattice)
    values = lattice.values(lattice.all_indices())
    np.testing.assert_allclose(g_beta(values), 100.0)


def test_g_beta_of_the_asian():
    lattice = _lattice()
    payoff = asian(80.0)
    g_beta = modified_payoff_g_beta(payoff, analytic_beta(payoff, lattice), lattice)
    values = lattice.values(lattice.all_indices())
    avg = values[:, 1:].mean(axis=1)
    np.testing.assert_allclose(g_beta(values), 100.0 - np.minimum(avg, 80.0), atol=1e-8)
    bound = check_g_beta_bounded(g_beta, lattice, all_paths(lattice))
    assert bound == pytest.approx(100.0 - 70.0)


def test_zero_beta_leaves_the_payoff_alone():
    lattice = _lattice()
    payoff = asian(80.0)
    zero = BetaFunctions(tuple(np.zeros(lattice.shape[:i]) for i in range(2)), "analytic")
    g_beta = modified_payoff_g_beta(payoff, zero, lattice)
    values = lattice.values(lattice.all_indices())
    np.testing.assert_allclose(g_beta(values), payoff(values))
    with pytest.raises(UnboundedGBetaError):
        check_g_beta_bounded(g_beta, lattice, all_paths(lattice))


def test_penalty_applies_off_the_mask_only():
    lattice = PathLattice.from_levels(100.0, [[100.0, 200.0], [100.0, 200.0]], TailProxySpec(count=0))
    mask = build_mask(lattice, MaskSpec("table", paths=((100.0, 100.0),)))
    payoff = forward()
    pen = penalized_payoff(payoff, 1.0, mask)
    out = pen(np.array([[100.0, 100.0, 100.0], [100.0, 100.0, 200.0]]))
    np.testing.assert_allclose(out, [100.0, 200.0 - 301.0])
    assert penalized_payoff(payoff, 0.0, mask) is payoff
    with pytest.raises(InputError):
        penalized_payoff(payoff, -1.0, mask)
