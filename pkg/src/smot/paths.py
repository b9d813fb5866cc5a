"""Finite path space over per-period price levels, and prediction-set masks.

A lattice path is a tuple of level indices ``(j_1, ..., j_n)``; it decodes to
prices ``(s_0, s_1, ..., s_n)`` with the fixed start ``s_0``.  Flat path
numbers follow C order over ``lattice.shape`` so enumeration is lexicographic.

Each period's levels are the support of that period's marginal (mass levels)
followed by tail proxies: shared, zero-probability levels far above every mass
level where hedges are still required to hold.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal

import numpy as np

from smot.errors import EmptyMaskError, GridError, InputError, PathCountExceededError

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from smot.marginals import MarketInput, Marginal

log = logging.getLogger("smot.paths")

DEFAULT_PATH_CAP = 200_000

MaskKind = Literal[
    "all_paths", "max_abs_increment", "bounded_squared_variation", "max_drawdown", "table"
]
_THRESHOLD_KINDS = ("max_abs_increment", "bounded_squared_variation", "max_drawdown")
_MATCH_RTOL = 1e-12


@dataclass(frozen=True)
class TailProxySpec:
    count: int = 3
    growth_factor: float = 10.0

    def __post_init__(self) -> None:
        if self.count < 0:
            msg = f"proxy count must be >= 0, got {self.count}"
            raise InputError(msg)
        if self.count and self.growth_factor <= 1.0:
            msg = f"proxy growth factor must exceed 1, got {self.growth_factor}"
            raise InputError(msg)


@dataclass(frozen=True)
class PathLattice:
    spot: float
    levels: tuple[NDArray[np.float64], ...]
    n_mass: tuple[int, ...]
    weights: tuple[NDArray[np.float64], ...]  # marginal weights on the mass levels
    proxies: NDArray[np.float64]

    @property
    def n_periods(self) -> int:
        return len(self.levels)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(lv.size for lv in self.levels)

    @property
    def mass_shape(self) -> tuple[int, ...]:
        return self.n_mass

    @property
    def path_count(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def has_proxies(self) -> bool:
        return self.proxies.size > 0

    def mass_levels(self, period: int) -> NDArray[np.float64]:
        """Mass levels of ``period`` (1-based)."""
        return self.levels[period - 1][: self.n_mass[period - 1]]

    def all_indices(self) -> NDArray[np.intp]:
        """Every path as a row of level indices, lexicographic."""
        return np.indices(self.shape).reshape(self.n_periods, -1).T

    def mass_indices(self) -> NDArray[np.intp]:
        return np.indices(self.n_mass).reshape(self.n_periods, -1).T

    def values(self, indices: ArrayLike) -> NDArray[np.float64]:
        """Decode ``(k, n)`` level indices to ``(k, n + 1)`` prices, spot first."""
        idx = np.atleast_2d(np.asarray(indices, dtype=np.intp))
        out = np.empty((idx.shape[0], self.n_periods + 1))
        out[:, 0] = self.spot
        for t, lv in enumerate(self.levels):
            out[:, t + 1] = lv[idx[:, t]]
        return out

    def decode(self, index: Sequence[int]) -> tuple[float, ...]:
        return tuple(self.values([list(index)])[0].tolist())

    def locate(self, prices: ArrayLike) -> NDArray[np.intp]:
        """Level indices for ``(k, n)`` prices (``s_1..s_n``); GridError off-lattice."""
        vals = np.atleast_2d(np.asarray(prices, dtype=float))
        if vals.shape[1] != self.n_periods:
            msg = f"expected {self.n_periods} prices per path, got {vals.shape[1]}"
            raise InputError(msg)
        out = np.empty(vals.shape, dtype=np.intp)
        for t, lv in enumerate(self.levels):
            col = vals[:, t]
            pos = np.clip(np.searchsorted(lv, col), 0, lv.size - 1)
            lower = np.clip(pos - 1, 0, lv.size - 1)
            pick = np.where(np.abs(lv[lower] - col) < np.abs(lv[pos] - col), lower, pos)
            if not np.allclose(lv[pick], col, rtol=_MATCH_RTOL, atol=_MATCH_RTOL):
                msg = f"period {t + 1}: prices are not lattice levels"
                raise GridError(msg)
            out[:, t] = pick
        return out

    def values_grid(self) -> NDArray[np.float64]:
        """Prices of every lattice path, shape ``lattice.shape + (n + 1,)``."""
        return self.values(self.all_indices()).reshape(*self.shape, self.n_periods + 1)

    @classmethod
    def from_levels(
        cls,
        spot: float,
        mass_levels: Sequence[ArrayLike],
        proxy_spec: TailProxySpec,
        *,
        weights: Sequence[ArrayLike] | None = None,
        path_cap: int = DEFAULT_PATH_CAP,
    ) -> PathLattice:
        mass = [np.asarray(m, dtype=float).ravel() for m in mass_levels]
        if not mass:
            raise InputError("lattice needs at least one period")
        for t, m in enumerate(mass, start=1):
            if m.size == 0 or m[0] < 0.0 or np.any(np.diff(m) <= 0.0):
                msg = f"period {t}: mass levels must be nonempty, nonnegative, increasing"
                raise GridError(msg)
        top = max(float(m[-1]) for m in mass)
        base = max(top, float(spot))
        proxies = base * proxy_spec.growth_factor ** np.arange(1, proxy_spec.count + 1)
        levels = tuple(np.concatenate([m, proxies]) for m in mass)

        count = int(np.prod([lv.size for lv in levels], dtype=np.int64))
        if count > path_cap:
            msg = f"lattice has {count} paths, cap is {path_cap}"
            raise PathCountExceededError(msg)

        if weights is None:
            w = tuple(np.full(m.size, 1.0 / m.size) for m in mass)
        else:
            w = tuple(np.asarray(x, dtype=float).ravel() for x in weights)
        for arr in (*levels, *w, proxies):
            arr.flags.writeable = False
        log.debug("lattice shape %s (%d paths), proxies %s", [lv.size for lv in levels], count, proxies)
        return cls(
            spot=float(spot),
            levels=levels,
            n_mass=tuple(m.size for m in mass),
            weights=w,
            proxies=proxies,
        )


def build_lattice(
    s0: float,
    marginals: Sequence[Marginal],
    proxy_spec: TailProxySpec | None = None,
    path_cap: int = DEFAULT_PATH_CAP,
) -> PathLattice:
    """Mass levels from each marginal's support, proxies ``base * g**k`` above them.

    ``base`` is the largest mass level over all periods, or the spot when the
    spot is higher.
    """
    spec = proxy_spec or TailProxySpec()
    return PathLattice.from_levels(
        s0,
        [m.support for m in marginals],
        spec,
        weights=[m.support_weights for m in marginals],
        path_cap=path_cap,
    )


def lattice_for_market(
    market: MarketInput,
    proxy_spec: TailProxySpec | None = None,
    path_cap: int = DEFAULT_PATH_CAP,
) -> PathLattice:
    """Lattice on quoted strikes, for markets whose curves do not yield marginals."""
    spec = proxy_spec or TailProxySpec()
    levels = np.array([0.0, market.spot])
    for curve in market.curves:
        levels = np.union1d(levels, curve.strikes.points)
    return PathLattice.from_levels(market.spot, [levels] * market.n, spec, path_cap=path_cap)


# ---------------------------------------------------------------------------
# Prediction sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaskSpec:
    kind: MaskKind = "all_paths"
    threshold: float = 0.0
    paths: tuple[tuple[float, ...], ...] = ()  # table: feasible s_1..s_n

    def describe(self) -> str:
        if self.kind in _THRESHOLD_KINDS:
            return f"{self.kind}({self.threshold:g})"
        if self.kind == "table":
            return f"table({len(self.paths)} paths)"
        return self.kind


@dataclass(frozen=True)
class PredictionMask:
    lattice: PathLattice
    bits: NDArray[np.bool_]
    description: str

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def is_all_paths(self) -> bool:
        return bool(self.bits.all())

    def contains(self, indices: ArrayLike) -> NDArray[np.bool_]:
        idx = np.atleast_2d(np.asarray(indices, dtype=np.intp))
        return self.bits[tuple(idx.T)]

    def contains_prices(self, values: ArrayLike) -> NDArray[np.bool_]:
        """Membership for ``(k, n + 1)`` price rows (spot first)."""
        vals = np.atleast_2d(np.asarray(values, dtype=float))
        return self.contains(self.lattice.locate(vals[:, 1:]))


def all_paths(lattice: PathLattice) -> PredictionMask:
    bits = np.ones(lattice.shape, dtype=bool)
    bits.flags.writeable = False
    return PredictionMask(lattice, bits, "all_paths")


def _increments(values: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.diff(values, axis=1)


def build_mask(lattice: PathLattice, spec: MaskSpec) -> PredictionMask:
    """Evaluate ``spec`` on every decoded path (spot included)."""
    if spec.kind == "all_paths":
        return all_paths(lattice)

    values = lattice.values(lattice.all_indices())
    slack = 1e-12 * max(1.0, abs(spec.threshold))
    if spec.kind == "max_abs_increment":
        ok = np.abs(_increments(values)).max(axis=1) <= spec.threshold + slack
    elif spec.kind == "bounded_squared_variation":
        ok = (_increments(values) ** 2).sum(axis=1) <= spec.threshold + slack
    elif spec.kind == "max_drawdown":
        running_max = np.maximum.accumulate(values, axis=1)
        ok = (running_max - values).max(axis=1) <= spec.threshold + slack
    elif spec.kind == "table":
        ok = np.zeros(values.shape[0], dtype=bool)
        if spec.paths:
            listed = lattice.locate(np.asarray(spec.paths, dtype=float))
            flat = np.ravel_multi_index(tuple(listed.T), lattice.shape)
            ok[flat] = True
    else:
        msg = f"unknown prediction set kind {spec.kind!r}"
        raise InputError(msg)

    if not ok.any():
        msg = f"prediction set {spec.describe()} contains no lattice path"
        raise EmptyMaskError(msg)
    bits = ok.reshape(lattice.shape)
    bits.flags.writeable = False
    log.info("mask %s keeps %d of %d paths", spec.describe(), int(ok.sum()), ok.size)
    return PredictionMask(lattice, bits, spec.describe())


def enumerate_paths(lattice: PathLattice, mask: PredictionMask) -> NDArray[np.intp]:
    """Feasible paths as rows of level indices, in lexicographic order."""
    if mask.lattice is not lattice and mask.bits.shape != lattice.shape:
        raise InputError("mask belongs to a different lattice")
    return np.argwhere(mask.bits)


def is_proxy_path(lattice: PathLattice, indices: NDArray[np.intp]) -> NDArray[np.bool_]:
    """Rows of ``indices`` that visit at least one tail proxy."""
    return np.any(indices >= np.asarray(lattice.n_mass)[None, :], axis=1)
