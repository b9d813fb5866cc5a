"""Shared fixtures: small marginal families and the lattices built on them."""

from __future__ import annotations

import numpy as np
import pytest

from smot.marginals import Marginal


def walk_laws(
    seed: int, n: int, s0: float = 100.0, step: float = 10.0, *, martingale: bool = False
) -> list[Marginal]:
    """Marginals of a random walk on ``s0 + step * Z`` with nonpositive drift.

    After the first period the current top atom never moves up, so the top
    mass level is nonincreasing in maturity.
    """
    rng = np.random.default_rng(seed)
    law = {s0: 1.0}
    out: list[Marginal] = []
    for period in range(n):
        top = max(law)
        nxt: dict[float, float] = {}
        for x, w in law.items():
            up = 0.0 if (period > 0 and x == top) else rng.uniform(0.15, 0.35)
            down = up if martingale else up + rng.uniform(0.0, 0.15)
            for y, p in ((x + step, up), (x, 1.0 - up - down), (x - step, down)):
                if p > 0.0:
                    nxt[y] = nxt.get(y, 0.0) + w * p
        law = nxt
        out.append(Marginal.from_pairs(law.items()))
    return out


@pytest.fixture
def bubble_pair() -> list[Marginal]:
    """Two maturities with means 90 and 87 under spot 100, tops equal."""
    return [
        Marginal.from_pairs([(80.0, 0.3), (90.0, 0.4), (100.0, 0.3)]),
        Marginal.from_pairs([(70.0, 0.3), (90.0, 0.4), (100.0, 0.3)]),
    ]


@pytest.fixture
def bubble_triple(bubble_pair: list[Marginal]) -> list[Marginal]:
    return [*bubble_pair, Marginal.from_pairs([(60.0, 0.3), (90.0, 0.4), (100.0, 0.3)])]


@pytest.fixture
def one_period_bubble() -> list[Marginal]:
    """Single maturity, mean 90 = 0.9 * spot."""
    return [Marginal.from_pairs([(80.0, 0.3), (90.0, 0.4), (100.0, 0.3)])]


@pytest.fixture
def martingale_pair() -> list[Marginal]:
    """Means equal to spot 100; the second law is a mean-preserving spread of the first."""
    return [
        Marginal.from_pairs([(90.0, 0.5), (110.0, 0.5)]),
        Marginal.from_pairs([(80.0, 0.25), (100.0, 0.5), (120.0, 0.25)]),
    ]
