from __future__ import annotations

import numpy as np
import pytest

from smot.errors import EmptyMaskError, GridError, InputError, PathCountExceededError
from smot.marginals import Marginal, MarketInput
from smot.paths import (
    MaskSpec,
    PathLattice,
    TailProxySpec,
    all_paths,
    build_lattice,
    build_mask,
    enumerate_paths,
    is_proxy_path,
    lattice_for_market,
)

TWO_POINT = Marginal.from_pairs([(50.0, 0.5), (150.0, 0.5)])


def _uniform(points: list[float]) -> Marginal:
    return Marginal.build(points, np.full(len(points), 1.0 / len(points)))


def test_levels_without_proxies():
    lattice = build_lattice(100.0, [TWO_POINT], TailProxySpec(count=0))
    assert lattice.path_count == 2
    np.testing.assert_allclose(lattice.levels[0], [50.0, 150.0])
    assert not lattice.has_proxies


def test_proxies_grow_geometrically_above_the_top():
    lattice = build_lattice(100.0, [TWO_POINT], TailProxySpec(count=2, growth_factor=10.0))
    np.testing.assert_allclose(lattice.levels[0], [50.0, 150.0, 1500.0, 15000.0])
    assert lattice.n_mass == (2,)
    np.testing.assert_allclose(lattice.mass_levels(1), [50.0, 150.0])


def test_proxies_start_from_spot_when_it_is_higher():
    lattice = build_lattice(200.0, [TWO_POINT], TailProxySpec(count=1, growth_factor=10.0))
    np.testing.assert_allclose(lattice.proxies, [2000.0])


def test_path_count_is_the_product_of_level_counts():
    m = _uniform([float(x) for x in range(10, 110, 10)])
    lattice = build_lattice(100.0, [m, m], TailProxySpec(count=0))
    assert lattice.shape == (10, 10)
    assert lattice.path_count == 100
    assert enumerate_paths(lattice, all_paths(lattice)).shape == (100, 2)


def test_path_cap():
    m = _uniform([float(x) for x in range(1, 21)])
    with pytest.raises(PathCountExceededError):
        build_lattice(10.0, [m, m, m], TailProxySpec(count=0), path_cap=1000)


def test_enumeration_is_lexicographic():
    lattice = build_lattice(100.0, [TWO_POINT, TWO_POINT], TailProxySpec(count=0))
    paths = enumerate_paths(lattice, all_paths(lattice))
    np.testing.assert_array_equal(paths, [[0, 0], [0, 1], [1, 0], [1, 1]])
    np.testing.assert_allclose(
        lattice.values(paths),
        [[100, 50, 50], [100, 50, 150], [100, 150, 50], [100, 150, 150]],
    )
    assert lattice.decode([1, 0]) == (100.0, 150.0, 50.0)


def test_locate_round_trips_and_rejects_unknown_prices():
    lattice = build_lattice(100.0, [TWO_POINT, TWO_POINT], TailProxySpec(count=1))
    idx = lattice.all_indices()
    np.testing.assert_array_equal(lattice.locate(lattice.values(idx)[:, 1:]), idx)
    with pytest.raises(GridError):
        lattice.locate([[50.0, 70.0]])
    with pytest.raises(InputError):
        lattice.locate([[50.0]])


def test_proxy_paths_are_flagged():
    lattice = build_lattice(100.0, [TWO_POINT, TWO_POINT], TailProxySpec(count=1))
    flags = is_proxy_path(lattice, lattice.all_indices())
    assert flags.sum() == lattice.path_count - 4


def test_bad_levels_are_rejected():
    with pytest.raises(GridError):
        PathLattice.from_levels(100.0, [[50.0, 50.0]], TailProxySpec(count=0))
    with pytest.raises(InputError):
        TailProxySpec(count=2, growth_factor=1.0)


def test_market_lattice_uses_quoted_strikes_and_spot():
    market = MarketInput.from_marginals(105.0, [TWO_POINT, TWO_POINT], "put")
    lattice = lattice_for_market(market, TailProxySpec(count=0))
    np.testing.assert_allclose(lattice.levels[0], [0.0, 50.0, 105.0, 150.0])
    assert lattice.shape == (4, 4)


# ---------------------------------------------------------------------------
# Prediction sets
# ---------------------------------------------------------------------------


def test_all_paths_and_loose_thresholds_keep_everything():
    lattice = build_lattice(100.0, [TWO_POINT, TWO_POINT], TailProxySpec(count=0))
    assert all_paths(lattice).is_all_paths
    loose = build_mask(lattice, MaskSpec("bounded_squared_variation", 1e9))
    assert loose.count == lattice.path_count


def test_zero_increment_mask_off_spot_is_empty():
    lattice = build_lattice(100.0, [TWO_POINT], TailProxySpec(count=0))
    with pytest.raises(EmptyMaskError):
        build_mask(lattice, MaskSpec("max_abs_increment", 0.0))


def test_max_abs_increment():
    lattice = build_lattice(100.0, [TWO_POINT, TWO_POINT], TailProxySpec(count=0))
    mask = build_mask(lattice, MaskSpec("max_abs_increment", 50.0))
    # spot to 50 or 150 is a step of 50; 50 <-> 150 is a step of 100
    np.testing.assert_array_equal(enumerate_paths(lattice, mask), [[0, 0], [1, 1]])
    assert mask.description == "max_abs_increment(50)"


def test_drawdown_ignores_rises():
    lattice = build_lattice(100.0, [TWO_POINT, TWO_POINT], TailProxySpec(count=1))
    mask = build_mask(lattice, MaskSpec("max_drawdown", 50.0))
    values = lattice.values(enumerate_paths(lattice, mask))
    drawdown = (np.maximum.accumulate(values, axis=1) - values).max(axis=1)
    assert np.all(drawdown <= 50.0)
    assert mask.contains_prices([[100.0, 1500.0, 1500.0]])[0]
    assert not mask.contains_prices([[100.0, 1500.0, 150.0]])[0]


def test_table_mask():
    lattice = build_lattice(100.0, [TWO_POINT, TWO_POINT], TailProxySpec(count=0))
    mask = build_mask(lattice, MaskSpec("table", paths=((150.0, 50.0),)))
    np.testing.assert_array_equal(enumerate_paths(lattice, mask), [[1, 0]])
    with pytest.raises(GridError):
        build_mask(lattice, MaskSpec("table", paths=((120.0, 50.0),)))


def test_masks_are_reproducible():
    lattice = build_lattice(100.0, [TWO_POINT, TWO_POINT], TailProxySpec(count=2))
    spec = MaskSpec("bounded_squared_variation", 2 * 50.0**2)
    np.testing.assert_array_equal(build_mask(lattice, spec).bits, build_mask(lattice, spec).bits)
