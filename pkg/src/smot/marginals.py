"""Option price curves, the discrete marginals they imply, and the no-arbitrage checks.

Quoted curves are read as piecewise linear in strike between quotes.  Outside
the quoted range they are extended the way an option on a distribution living
inside that range would behave:

    calls  below the lowest strike: slope -1      above the highest: flat
    puts   below the lowest strike: line to (0, 0) above the highest: slope +1

With that reading the second differences of a curve are exactly the point
masses of a law on the knots, and pricing that law reproduces the curve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal

import numpy as np
from scipy.stats import norm

from smot.errors import GridError, InputError, MixedKindError, NegativeMassError

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from numpy.typing import ArrayLike, NDArray

log = logging.getLogger("smot.marginals")

OptionKind = Literal["call", "put"]

DEFAULT_TOL = 1e-9
_WEIGHT_SUM_TOL = 1e-12


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Grid:
    """Strictly increasing, nonnegative price levels."""

    points: NDArray[np.float64]

    @classmethod
    def of(cls, points: ArrayLike) -> Grid:
        arr = np.asarray(points, dtype=float).ravel()
        if arr.size == 0:
            raise GridError("grid needs at least one point")
        if not np.all(np.isfinite(arr)):
            raise GridError("grid points must be finite")
        if arr[0] < 0.0:
            msg = f"grid points must be nonnegative, got {arr[0]}"
            raise GridError(msg)
        if np.any(np.diff(arr) <= 0.0):
            msg = f"grid points must be strictly increasing: {arr.tolist()}"
            raise GridError(msg)
        return cls(_readonly(arr))

    def __len__(self) -> int:
        return int(self.points.size)

    def union(self, other: Grid) -> Grid:
        return Grid.of(np.union1d(self.points, other.points))

    def index_of(self, values: ArrayLike, *, rtol: float = 1e-12) -> NDArray[np.intp]:
        """Positions of ``values`` in the grid; GridError if any is missing."""
        vals = np.atleast_1d(np.asarray(values, dtype=float))
        pos = np.clip(np.searchsorted(self.points, vals), 0, self.points.size - 1)
        lower = np.clip(pos - 1, 0, self.points.size - 1)
        pick = np.where(
            np.abs(self.points[lower] - vals) < np.abs(self.points[pos] - vals), lower, pos
        )
        ok = np.isclose(self.points[pick], vals, rtol=rtol, atol=rtol)
        if not np.all(ok):
            missing = vals[~ok].tolist()
            msg = f"values {missing} are not grid points"
            raise GridError(msg)
        return pick


@dataclass(frozen=True)
class Marginal:
    """Probability weights on a grid."""

    grid: Grid
    weights: NDArray[np.float64]

    @classmethod
    def build(cls, grid: Grid | ArrayLike, weights: ArrayLike) -> Marginal:
        g = grid if isinstance(grid, Grid) else Grid.of(grid)
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != g.points.shape:
            msg = f"{w.size} weights for {len(g)} grid points"
            raise InputError(msg)
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise InputError("weights must be finite and nonnegative")
        total = float(w.sum())
        if abs(total - 1.0) > _WEIGHT_SUM_TOL:
            msg = f"weights sum to {total!r}, expected 1"
            raise InputError(msg)
        return cls(g, _readonly(w))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]]) -> Marginal:
        items = sorted((float(x), float(p)) for x, p in pairs)
        return cls.build([x for x, _ in items], [p for _, p in items])

    @classmethod
    def point_mass(cls, x: float) -> Marginal:
        return cls.build([x], [1.0])

    @property
    def support(self) -> NDArray[np.float64]:
        return self.grid.points[self.weights > 0.0]

    @property
    def support_weights(self) -> NDArray[np.float64]:
        return self.weights[self.weights > 0.0]

    def mean(self) -> float:
        return float(self.weights @ self.grid.points)

    def expect(self, fn_values: NDArray[np.float64]) -> float:
        return float(self.weights @ fn_values)


def mean(m: Marginal) -> float:
    return m.mean()


@dataclass(frozen=True)
class PriceCurve:
    kind: OptionKind
    maturity: int
    strikes: Grid
    prices: NDArray[np.float64]

    @classmethod
    def build(
        cls, kind: str, maturity: int, strikes: Grid | ArrayLike, prices: ArrayLike
    ) -> PriceCurve:
        if kind not in ("call", "put"):
            msg = f"option kind must be 'call' or 'put', got {kind!r}"
            raise InputError(msg)
        if maturity < 1:
            msg = f"maturity index must be >= 1, got {maturity}"
            raise InputError(msg)
        g = strikes if isinstance(strikes, Grid) else Grid.of(strikes)
        p = np.asarray(prices, dtype=float).ravel()
        if p.shape != g.points.shape:
            msg = f"{p.size} prices for {len(g)} strikes"
            raise InputError(msg)
        if not np.all(np.isfinite(p)):
            raise InputError("prices must be finite")
        return cls(kind, int(maturity), g, _readonly(p))  # type: ignore[arg-type]

    @property
    def top_strike(self) -> float:
        return float(self.strikes.points[-1])

    def knots(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Quoted points with the strike-0 extension prepended when 0 is not quoted."""
        k = self.strikes.points
        p = self.prices
        if k[0] > 0.0:
            at_zero = p[0] + k[0] if self.kind == "call" else 0.0
            k = np.concatenate([[0.0], k])
            p = np.concatenate([[at_zero], p])
        return k, p

    def slopes(self) -> NDArray[np.float64]:
        k, p = self.knots()
        return np.diff(p) / np.diff(k)

    def __call__(self, strikes: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(strikes, dtype=float)
        k, p = self.knots()
        values = np.interp(x, k, p)
        if self.kind == "put":
            values = values + np.maximum(x - k[-1], 0.0)
        return values

    def payoff(self, strike: float, s: ArrayLike) -> NDArray[np.float64]:
        s_arr = np.asarray(s, dtype=float)
        if self.kind == "call":
            return np.maximum(s_arr - strike, 0.0)
        return np.maximum(strike - s_arr, 0.0)


@dataclass(frozen=True)
class MarketInput:
    """Spot plus one quoted curve per maturity, all of one option kind."""

    spot: float
    curves: tuple[PriceCurve, ...]

    @classmethod
    def build(cls, spot: float, curves: Sequence[PriceCurve]) -> MarketInput:
        if not np.isfinite(spot) or spot <= 0.0:
            msg = f"spot must be positive, got {spot}"
            raise InputError(msg)
        if not curves:
            raise InputError("market needs at least one maturity")
        kinds = {c.kind for c in curves}
        if len(kinds) > 1:
            msg = f"curves mix option kinds: {sorted(kinds)}"
            raise MixedKindError(msg)
        ordered = tuple(sorted(curves, key=lambda c: c.maturity))
        got = [c.maturity for c in ordered]
        if got != list(range(1, len(ordered) + 1)):
            msg = f"maturities must be 1..{len(ordered)} exactly once, got {got}"
            raise InputError(msg)
        return cls(float(spot), ordered)

    @classmethod
    def from_marginals(
        cls, spot: float, marginals: Sequence[Marginal], kind: OptionKind
    ) -> MarketInput:
        """Price a full curve per marginal at its support plus strike 0."""
        curves = []
        for i, m in enumerate(marginals, start=1):
            strikes = Grid.of(np.union1d([0.0], m.support))
            curve = (
                call_curve_from_marginal(m, strikes, maturity=i)
                if kind == "call"
                else put_curve_from_marginal(m, strikes, maturity=i)
            )
            curves.append(curve)
        return cls.build(spot, curves)

    @property
    def kind(self) -> OptionKind:
        return self.curves[0].kind

    @property
    def n(self) -> int:
        return len(self.curves)

    def extract_marginals(self, tol: float = DEFAULT_TOL) -> tuple[Marginal, ...]:
        if self.kind == "call":
            return tuple(marginal_from_call_curve(c, tol=tol) for c in self.curves)
        return tuple(marginal_from_put_curve(c, tol=tol) for c in self.curves)


@dataclass(frozen=True)
class Witness:
    """First violation found for a clause: where and by how much."""

    maturities: tuple[int, ...]
    strikes: tuple[float, ...]
    magnitude: float
    detail: str = ""

    def to_dict(self) -> dict[str, object]:
        return {
            "maturities": list(self.maturities),
            "strikes": list(self.strikes),
            "magnitude": self.magnitude,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class ClauseVerdict:
    passed: bool
    witness: Witness | None = None


@dataclass(frozen=True)
class ConditionReport:
    kind: OptionKind
    clauses: dict[str, ClauseVerdict]

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.clauses.values())

    def failed_clauses(self) -> list[str]:
        return [name for name, v in self.clauses.items() if not v.passed]

    def to_dict(self) -> dict[str, object]:
        return {
            "kind": self.kind,
            "passed": self.passed,
            "clauses": {
                name: {
                    "passed": v.passed,
                    "witness": v.witness.to_dict() if v.witness else None,
                }
                for name, v in self.clauses.items()
            },
        }


@dataclass(frozen=True)
class OrderReport:
    passed: bool
    means: tuple[float, ...]
    mean_violations: tuple[Witness, ...] = ()
    violations: tuple[tuple[int, float, float], ...] = ()  # (i, k, excess)

    def to_dict(self) -> dict[str, object]:
        return {
            "passed": self.passed,
            "means": list(self.means),
            "mean_violations": [w.to_dict() for w in self.mean_violations],
            "violations": [
                {"maturity": i, "level": k, "excess": e} for i, k, e in self.violations
            ],
        }


# ---------------------------------------------------------------------------
# Measure <-> curve
# ---------------------------------------------------------------------------


def call_curve_from_marginal(m: Marginal, strikes: Grid, maturity: int = 1) -> PriceCurve:
    x = m.grid.points
    prices = np.maximum(x[None, :] - strikes.points[:, None], 0.0) @ m.weights
    return PriceCurve.build("call", maturity, strikes, prices)


def put_curve_from_marginal(m: Marginal, strikes: Grid, maturity: int = 1) -> PriceCurve:
    x = m.grid.points
    prices = np.maximum(strikes.points[:, None] - x[None, :], 0.0) @ m.weights
    return PriceCurve.build("put", maturity, strikes, prices)


def _masses_to_marginal(
    knots: NDArray[np.float64],
    masses: NDArray[np.float64],
    curve: PriceCurve,
    grid: Grid | None,
    tol: float,
) -> Marginal:
    worst = int(np.argmin(masses))
    if masses[worst] < -tol:
        msg = (
            f"maturity {curve.maturity}: {curve.kind} curve implies mass "
            f"{masses[worst]:.3g} at strike {knots[worst]:g}"
        )
        raise NegativeMassError(
            msg, maturity=curve.maturity, strike=float(knots[worst]), mass=float(masses[worst])
        )
    masses = np.maximum(masses, 0.0)
    total = masses.sum()
    if total <= 0.0:
        msg = f"maturity {curve.maturity}: curve implies no probability mass"
        raise NegativeMassError(msg, maturity=curve.maturity, strike=float(knots[0]), mass=0.0)
    masses = masses / total

    target = Grid.of(knots) if grid is None else grid
    weights = np.zeros(len(target))
    live = masses > 0.0
    try:
        pos = target.index_of(knots[live])
    except GridError as exc:
        msg = f"maturity {curve.maturity}: grid misses a knot carrying mass ({exc})"
        raise GridError(msg) from exc
    np.add.at(weights, pos, masses[live])
    weights /= weights.sum()
    return Marginal.build(target, weights)


def marginal_from_call_curve(
    curve: PriceCurve, grid: Grid | None = None, tol: float = DEFAULT_TOL
) -> Marginal:
    """Point masses at the slope jumps of the call curve: mu([0, K]) = 1 + c'(K+)."""
    if curve.kind != "call":
        msg = f"maturity {curve.maturity}: expected a call curve, got {curve.kind}"
        raise MixedKindError(msg)
    knots, _ = curve.knots()
    if knots.size < 2:
        raise GridError("a call curve quoted only at strike 0 does not determine a law")
    s = curve.slopes()
    masses = np.empty(knots.size)
    masses[0] = 1.0 + s[0]
    masses[1:-1] = np.diff(s)
    masses[-1] = -s[-1]
    return _masses_to_marginal(knots, masses, curve, grid, tol)


def marginal_from_put_curve(
    curve: PriceCurve, grid: Grid | None = None, tol: float = DEFAULT_TOL
) -> Marginal:
    """Point masses at the slope jumps of the put curve: mu([0, K]) = p'(K+)."""
    if curve.kind != "put":
        msg = f"maturity {curve.maturity}: expected a put curve, got {curve.kind}"
        raise MixedKindError(msg)
    knots, _ = curve.knots()
    if knots.size < 2:
        raise GridError("a put curve quoted only at strike 0 does not determine a law")
    t = curve.slopes()
    masses = np.empty(knots.size)
    masses[0] = t[0]
    masses[1:-1] = np.diff(t)
    masses[-1] = 1.0 - t[-1]
    return _masses_to_marginal(knots, masses, curve, grid, tol)


# ---------------------------------------------------------------------------
# Condition checks
# ---------------------------------------------------------------------------


class _Clause:
    """Collects the first violation of one clause."""

    def __init__(self) -> None:
        self.witness: Witness | None = None

    def check(
        self,
        excess: float,
        tol: float,
        maturities: tuple[int, ...],
        strikes: tuple[float, ...],
        detail: str,
    ) -> None:
        if self.witness is None and excess > tol:
            self.witness = Witness(maturities, strikes, float(excess), detail)

    def verdict(self) -> ClauseVerdict:
        return ClauseVerdict(self.witness is None, self.witness)


def _first_excess(excess: NDArray[np.float64], tol: float) -> int | None:
    hits = np.flatnonzero(excess > tol)
    return int(hits[0]) if hits.size else None


def _shape_clause(
    clause: _Clause, curve: PriceCurve, tol: float, *, increasing: bool
) -> None:
    k, p = curve.knots()
    s = curve.slopes()
    i = curve.maturity
    if (j := _first_excess(-p, tol)) is not None:
        clause.check(-p[j], tol, (i,), (float(k[j]),), "negative price")
    if (j := _first_excess(-np.diff(s), tol)) is not None:
        clause.check(s[j] - s[j + 1], tol, (i,), (float(k[j + 1]),), "not convex")
    monotone = -s if increasing else s
    if (j := _first_excess(monotone, tol)) is not None:
        word = "decreasing" if increasing else "increasing"
        clause.check(monotone[j], tol, (i,), (float(k[j]), float(k[j + 1])), f"{word} segment")


def _chain_clause(
    clause: _Clause, spot: float, values: list[float], tol: float, strike: float, what: str
) -> None:
    chain = [spot, *values]
    for i in range(len(chain) - 1):
        clause.check(
            chain[i + 1] - chain[i], tol, (i, i + 1), (strike,), f"{what} increases in maturity"
        )
    clause.check(-chain[-1], tol, (len(values),), (strike,), f"{what} negative")


def _require_kind(market: MarketInput, kind: OptionKind) -> None:
    wrong = [c.maturity for c in market.curves if c.kind != kind]
    if wrong:
        msg = f"expected {kind} curves, maturities {wrong} are not"
        raise MixedKindError(msg)


def _union_strikes(market: MarketInput) -> NDArray[np.float64]:
    pts = np.zeros(1)
    for c in market.curves:
        pts = np.union1d(pts, c.strikes.points)
    return pts


def check_call_conditions(
    market: MarketInput, tol: float = DEFAULT_TOL, decay_tol: float = DEFAULT_TOL
) -> ConditionReport:
    _require_kind(market, "call")
    shape, chain, decay, order = _Clause(), _Clause(), _Clause(), _Clause()
    union = _union_strikes(market)
    at_zero = []
    for curve in market.curves:
        i = curve.maturity
        _shape_clause(shape, curve, tol, increasing=False)
        at_zero.append(float(curve(0.0)))
        first_slope = float(curve.slopes()[0])
        chain.check(-1.0 - first_slope, tol, (i,), (0.0,), "right slope at 0 below -1")
        top = curve.top_strike
        decay.check(float(curve.prices[-1]), decay_tol, (i,), (top,), "call price does not vanish")
    _chain_clause(chain, market.spot, at_zero, tol, 0.0, "c(0)")

    spreads = [c(0.0) - c(union) for c in market.curves]
    for pos in range(len(spreads) - 1):
        excess = spreads[pos + 1] - spreads[pos]
        if (j := _first_excess(excess, tol)) is not None:
            i = market.curves[pos].maturity
            order.check(
                excess[j], tol, (i, i + 1), (float(union[j]),), "c(0) - c(K) increases in maturity"
            )

    return ConditionReport(
        "call",
        {"i": shape.verdict(), "ii": chain.verdict(), "iii": decay.verdict(), "iv": order.verdict()},
    )


def check_put_conditions(
    market: MarketInput, tol: float = DEFAULT_TOL, decay_tol: float = DEFAULT_TOL
) -> ConditionReport:
    _require_kind(market, "put")
    shape, chain, decay, order = _Clause(), _Clause(), _Clause(), _Clause()
    union = _union_strikes(market)
    forwards = []
    for curve in market.curves:
        i = curve.maturity
        _shape_clause(shape, curve, tol, increasing=True)
        s = curve.slopes()
        chain.check(-float(s[0]), tol, (i,), (0.0,), "negative slope at 0")
        chain.check(float(s[0]) - 1.0, tol, (i,), (0.0,), "slope at 0 above 1")
        chain.check(
            float(s[-1]) - 1.0, tol, (i,), (curve.top_strike,), "slope above 1 at the top strike"
        )
        forwards.append(curve.top_strike - float(curve.prices[-1]))
        decay.check(float(curve(0.0)), decay_tol, (i,), (0.0,), "put price at 0 does not vanish")
    _chain_clause(chain, market.spot, forwards, tol, float(union[-1]), "K - p(K)")

    values = [c(union) for c in market.curves]
    for pos in range(len(values) - 1):
        excess = values[pos] - values[pos + 1]
        if (j := _first_excess(excess, tol)) is not None:
            i = market.curves[pos].maturity
            order.check(excess[j], tol, (i, i + 1), (float(union[j]),), "p(K) decreases in maturity")

    return ConditionReport(
        "put",
        {"i": shape.verdict(), "ii": chain.verdict(), "iii": decay.verdict(), "iv": order.verdict()},
    )


def check_conditions(
    market: MarketInput, tol: float = DEFAULT_TOL, decay_tol: float = DEFAULT_TOL
) -> ConditionReport:
    if market.kind == "call":
        return check_call_conditions(market, tol, decay_tol)
    return check_put_conditions(market, tol, decay_tol)


def check_supermartingale_order(
    marginals: Sequence[Marginal], s0: float, tol: float = DEFAULT_TOL
) -> OrderReport:
    """Decreasing convex order test via the extremal functions min(x, k)."""
    means = tuple(m.mean() for m in marginals)
    mean_violations: list[Witness] = []
    chain = [s0, *means]
    for i in range(len(chain) - 1):
        if chain[i + 1] - chain[i] > tol:
            mean_violations.append(
                Witness((i, i + 1), (), chain[i + 1] - chain[i], "mean increases")
            )

    levels = np.zeros(0)
    for m in marginals:
        levels = np.union1d(levels, m.grid.points)
    capped = [np.minimum(m.grid.points[None, :], levels[:, None]) @ m.weights for m in marginals]
    violations: list[tuple[int, float, float]] = []
    for i in range(len(capped) - 1):
        excess = capped[i + 1] - capped[i]
        for j in np.flatnonzero(excess > tol):
            violations.append((i + 1, float(levels[j]), float(excess[j])))

    passed = not mean_violations and not violations
    if not passed:
        log.info(
            "order check failed: %d mean violations, %d level violations",
            len(mean_violations),
            len(violations),
        )
    return OrderReport(passed, means, tuple(mean_violations), tuple(violations))


# ---------------------------------------------------------------------------
# Parametric family
# ---------------------------------------------------------------------------


def discretize_lognormal(
    mean_value: float,
    log_variance: float,
    grid_size: int,
    truncation_quantile: float = 0.99,
) -> Marginal:
    """Mean-preserving lattice law for a lognormal with the given mean.

    ``grid_size - 1`` equally spaced points cover [0, q] where q is the
    truncation quantile; the mass and first moment of every bin are split
    linearly between its endpoints.  The tail beyond q becomes one extra
    level at its conditional mean, so mass and mean are both exact.
    """
    if mean_value <= 0.0 or not np.isfinite(mean_value):
        msg = f"lognormal mean must be positive, got {mean_value}"
        raise InputError(msg)
    if log_variance < 0.0:
        msg = f"log variance must be nonnegative, got {log_variance}"
        raise InputError(msg)
    if log_variance == 0.0:
        return Marginal.point_mass(mean_value)
    if grid_size < 3:
        msg = f"grid_size must be at least 3, got {grid_size}"
        raise InputError(msg)
    if not 0.0 < truncation_quantile < 1.0:
        msg = f"truncation_quantile must lie in (0, 1), got {truncation_quantile}"
        raise InputError(msg)

    sigma = float(np.sqrt(log_variance))
    mu = np.log(mean_value) - 0.5 * log_variance
    q = float(np.exp(mu + sigma * norm.ppf(truncation_quantile)))
    edges = np.linspace(0.0, q, grid_size - 1)

    with np.errstate(divide="ignore"):
        d = (np.log(edges) - mu) / sigma
    cdf = norm.cdf(d)
    partial = mean_value * norm.cdf(d - sigma)  # E[X; X <= edge]
    bin_mass = np.diff(cdf)
    bin_mean = np.diff(partial)
    width = np.diff(edges)

    weights = np.zeros(grid_size)
    weights[:-2] += (edges[1:] * bin_mass - bin_mean) / width
    weights[1:-1] += (bin_mean - edges[:-1] * bin_mass) / width
    tail_mass = 1.0 - cdf[-1]
    tail_first_moment = mean_value - partial[-1]
    weights[-1] = tail_mass
    top = tail_first_moment / tail_mass
    points = np.concatenate([edges, [top]])

    weights = np.maximum(weights, 0.0)
    weights /= weights.sum()
    log.debug(
        "lognormal(mean=%g, var=%g): %d levels up to %g, tail mass %.3g",
        mean_value,
        log_variance,
        grid_size,
        top,
        tail_mass,
    )
    return Marginal.build(points, weights)
