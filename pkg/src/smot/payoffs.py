"""Payoff catalog, asymptotic-slope functions beta, G_beta and penalised payoffs.

Evaluators take a ``(k, n + 1)`` array of path prices (spot in column 0) and
return ``k`` values, ``-inf`` allowed.  The growth bound ``K`` of a payoff
promises ``G <= K * (1 + s_0 + s_1 + ... + s_n)`` on the lattice; the spot is
a constant, so this is the usual linear-growth condition with ``K`` allowed to
depend on it.

beta providers take ``(k, i + 1)`` history prices ``(s_0, ..., s_i)``, the
period index ``i`` and the horizon ``n``, and return ``beta_i`` per history.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Literal

import numpy as np

from smot.errors import (
    GrowthBoundError,
    InputError,
    NoAnalyticBetaError,
    NoTailProxiesError,
    UnboundedGBetaError,
    UnknownSpecError,
)

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from smot.paths import PathLattice, PredictionMask

log = logging.getLogger("smot.payoffs")

Evaluator = Callable[["NDArray[np.float64]"], "NDArray[np.float64]"]
BetaProvider = Callable[["NDArray[np.float64]", int, int], "NDArray[np.float64]"]

PayoffKind = Literal[
    "asian",
    "lookback_knock_in",
    "forward",
    "european_call",
    "european_put",
    "power_call",
    "basket",
    "table",
    "random_table",
]

_GROWTH_SLACK = 1e-9
_G_BETA_SLOPE_TOL = 1e-6


@dataclass(frozen=True)
class Payoff:
    name: str
    evaluator: Evaluator
    growth_bound: float | None = None
    beta_provider: BetaProvider | None = None

    def __call__(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        vals = np.atleast_2d(np.asarray(values, dtype=float))
        return np.asarray(self.evaluator(vals), dtype=float).reshape(vals.shape[0])

    @property
    def has_analytic_beta(self) -> bool:
        return self.beta_provider is not None


@dataclass(frozen=True)
class PayoffSpec:
    """Declarative payoff description, as read from a config file.

    ``maturity = 0`` means the last maturity of the lattice.
    """

    kind: PayoffKind
    strike: float = 0.0
    barrier: float = 0.0
    maturity: int = 0
    exponent: float = 1.0
    weight: float = 1.0
    components: tuple[PayoffSpec, ...] = ()
    levels: tuple[tuple[float, ...], ...] = ()
    values: tuple[float, ...] = ()
    low: float = 0.0
    high: float = 1.0
    seed: int = 0
    growth_bound: float | None = None


@dataclass(frozen=True)
class BetaFunctions:
    """beta_i on lattice histories; ``values[i]`` has shape ``lattice.shape[:i]``."""

    values: tuple[NDArray[np.float64], ...]
    source: Literal["analytic", "numeric"]
    approximate: bool = False

    @property
    def n_periods(self) -> int:
        return len(self.values)

    def at(self, period: int, history: NDArray[np.intp]) -> NDArray[np.float64]:
        """beta_period for ``(k, period)`` history level indices."""
        hist = np.atleast_2d(np.asarray(history, dtype=np.intp))
        if period == 0:
            return np.full(hist.shape[0], float(self.values[0]))
        hist = hist.reshape(-1, period)
        return np.asarray(self.values[period][tuple(hist.T)], dtype=float)

    def to_dict(self) -> dict[str, object]:
        return {
            "source": self.source,
            "approximate": self.approximate,
            "beta0": float(self.values[0]),
            "max_by_period": [float(np.max(v)) for v in self.values],
        }


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------


def _column(values: NDArray[np.float64], maturity: int) -> NDArray[np.float64]:
    return values[:, -1] if maturity == 0 else values[:, maturity]


def _resolve(maturity: int, n: int) -> int:
    return n if maturity == 0 else maturity


def _single_maturity_beta(maturity: int) -> BetaProvider:
    def provider(history: NDArray[np.float64], i: int, n: int) -> NDArray[np.float64]:
        return np.full(history.shape[0], 1.0 if i < _resolve(maturity, n) else 0.0)

    return provider


def _zero_beta(history: NDArray[np.float64], i: int, n: int) -> NDArray[np.float64]:  # noqa: ARG001
    return np.zeros(history.shape[0])


def asian(strike: float) -> Payoff:
    def evaluate(values: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.maximum(values[:, 1:].mean(axis=1) - strike, 0.0)

    def beta(history: NDArray[np.float64], i: int, n: int) -> NDArray[np.float64]:
        return np.full(history.shape[0], (n - i) / n)

    return Payoff(f"asian({strike:g})", evaluate, 1.0, beta)


def lookback_knock_in(strike: float, barrier: float) -> Payoff:
    def evaluate(values: NDArray[np.float64]) -> NDArray[np.float64]:
        knocked = values.min(axis=1) <= barrier
        return np.maximum(values.max(axis=1) - strike, 0.0) * knocked

    def beta(history: NDArray[np.float64], i: int, n: int) -> NDArray[np.float64]:
        return (n - 1 - i) + (history.min(axis=1) <= barrier).astype(float)

    return Payoff(f"lookback_knock_in({strike:g},{barrier:g})", evaluate, 1.0, beta)


def forward(maturity: int = 0) -> Payoff:
    def evaluate(values: NDArray[np.float64]) -> NDArray[np.float64]:
        return _column(values, maturity).copy()

    return Payoff(f"forward(S{maturity or 'n'})", evaluate, 1.0, _single_maturity_beta(maturity))


def european_call(strike: float, maturity: int = 0) -> Payoff:
    def evaluate(values: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.maximum(_column(values, maturity) - strike, 0.0)

    return Payoff(
        f"call({strike:g},S{maturity or 'n'})", evaluate, 1.0, _single_maturity_beta(maturity)
    )


def european_put(strike: float, maturity: int = 0) -> Payoff:
    def evaluate(values: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.maximum(strike - _column(values, maturity), 0.0)

    return Payoff(f"put({strike:g},S{maturity or 'n'})", evaluate, max(strike, 1.0), _zero_beta)


def power_call(strike: float, exponent: float, maturity: int = 0) -> Payoff:
    """((s_m - K)^+)^p for 0 < p <= 1; sub-linear growth when p < 1."""
    if not 0.0 < exponent <= 1.0:
        msg = f"power_call exponent must lie in (0, 1], got {exponent}"
        raise InputError(msg)

    def evaluate(values: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.maximum(_column(values, maturity) - strike, 0.0) ** exponent

    provider = _single_maturity_beta(maturity) if exponent == 1.0 else _zero_beta
    return Payoff(f"power_call({strike:g},{exponent:g})", evaluate, 1.0, provider)


def basket(parts: list[tuple[float, Payoff]]) -> Payoff:
    """Weighted sum; analytic beta only when every weight is nonnegative."""
    if not parts:
        raise InputError("basket needs at least one component")

    def evaluate(values: NDArray[np.float64]) -> NDArray[np.float64]:
        total = np.zeros(values.shape[0])
        for w, p in parts:
            total += w * p(values)
        return total

    growth: float | None = 0.0
    for w, p in parts:
        growth = None if growth is None or p.growth_bound is None else growth + abs(w) * p.growth_bound
    provider: BetaProvider | None = None
    betas = [(w, p.beta_provider) for w, p in parts if w >= 0.0 and p.beta_provider is not None]
    if len(betas) == len(parts):

        def provider(history: NDArray[np.float64], i: int, n: int) -> NDArray[np.float64]:
            total = np.zeros(history.shape[0])
            for w, beta in betas:
                total += w * beta(history, i, n)
            return total

    name = "+".join(f"{w:g}*{p.name}" for w, p in parts)
    return Payoff(f"basket({name})", evaluate, growth, provider)


def table_payoff(
    levels: list[NDArray[np.float64]] | tuple[tuple[float, ...], ...],
    values: NDArray[np.float64],
    growth_bound: float | None = None,
    name: str = "table",
) -> Payoff:
    """Payoff tabulated on per-period levels, constant beyond the largest level.

    Between listed levels the value of the nearest level below is used.
    """
    lv = [np.asarray(x, dtype=float) for x in levels]
    table = np.asarray(values, dtype=float).reshape(tuple(x.size for x in lv))
    bound = growth_bound if growth_bound is not None else max(1.0, float(np.abs(table).max()))

    def evaluate(path_values: NDArray[np.float64]) -> NDArray[np.float64]:
        idx = tuple(
            np.clip(np.searchsorted(x, path_values[:, t + 1], side="right") - 1, 0, x.size - 1)
            for t, x in enumerate(lv)
        )
        return table[idx]

    return Payoff(name, evaluate, bound, _zero_beta)


def random_table(
    lattice: PathLattice, low: float, high: float, seed: int
) -> Payoff:
    """Uniform random values on the lattice's mass paths, flat beyond the top mass levels."""
    rng = np.random.default_rng(seed)
    values = rng.uniform(low, high, size=lattice.mass_shape)
    levels = [lattice.mass_levels(t) for t in range(1, lattice.n_periods + 1)]
    return table_payoff(levels, values, name=f"random_table(seed={seed})")


def make_payoff(spec: PayoffSpec, lattice: PathLattice | None = None) -> Payoff:
    kind = spec.kind
    if kind == "asian":
        payoff = asian(spec.strike)
    elif kind == "lookback_knock_in":
        payoff = lookback_knock_in(spec.strike, spec.barrier)
    elif kind == "forward":
        payoff = forward(spec.maturity)
    elif kind == "european_call":
        payoff = european_call(spec.strike, spec.maturity)
    elif kind == "european_put":
        payoff = european_put(spec.strike, spec.maturity)
    elif kind == "power_call":
        payoff = power_call(spec.strike, spec.exponent, spec.maturity)
    elif kind == "basket":
        payoff = basket([(c.weight, make_payoff(c, lattice)) for c in spec.components])
    elif kind == "table":
        if not spec.levels or not spec.values:
            raise InputError("table payoff needs levels and values")
        payoff = table_payoff(
            [np.asarray(x) for x in spec.levels], np.asarray(spec.values), spec.growth_bound
        )
    elif kind == "random_table":
        if lattice is None:
            raise InputError("random_table payoff needs a lattice")
        payoff = random_table(lattice, spec.low, spec.high, spec.seed)
    else:
        msg = f"unknown payoff kind {kind!r}"
        raise UnknownSpecError(msg)
    if spec.growth_bound is not None and kind != "table":
        payoff = replace(payoff, growth_bound=spec.growth_bound)
    return payoff


def verify_growth(payoff: Payoff, lattice: PathLattice) -> float:
    """Check the declared growth bound on every lattice path; return the tightest K."""
    if payoff.growth_bound is None:
        msg = f"{payoff.name}: no growth bound declared"
        raise GrowthBoundError(msg)
    values = lattice.values(lattice.all_indices())
    g = payoff(values)
    scale = 1.0 + values.sum(axis=1)
    ratio = np.where(np.isfinite(g), g, -np.inf) / scale
    tightest = float(max(ratio.max(), 0.0))
    if tightest > payoff.growth_bound + _GROWTH_SLACK:
        worst = int(np.argmax(ratio))
        msg = (
            f"{payoff.name}: G / (1 + sum s) reaches {tightest:.6g} at "
            f"{values[worst].tolist()}, declared bound {payoff.growth_bound:g}"
        )
        raise GrowthBoundError(msg)
    return tightest


# ---------------------------------------------------------------------------
# beta functions
# ---------------------------------------------------------------------------


def _history_values(lattice: PathLattice, period: int) -> NDArray[np.float64]:
    shape = lattice.shape[:period]
    idx = np.indices(shape).reshape(period, -1).T if period else np.zeros((1, 0), dtype=np.intp)
    out = np.empty((idx.shape[0], period + 1))
    out[:, 0] = lattice.spot
    for t in range(period):
        out[:, t + 1] = lattice.levels[t][idx[:, t]]
    return out


def analytic_beta(payoff: Payoff, lattice: PathLattice) -> BetaFunctions:
    if payoff.beta_provider is None:
        msg = f"{payoff.name} has no closed-form beta"
        raise NoAnalyticBetaError(msg)
    n = lattice.n_periods
    values = []
    for i in range(n):
        hist = _history_values(lattice, i)
        beta = np.asarray(payoff.beta_provider(hist, i, n), dtype=float)
        values.append(np.maximum(beta, 0.0).reshape(lattice.shape[:i]))
    return BetaFunctions(tuple(values), "analytic")


def numeric_beta(payoff: Payoff, lattice: PathLattice, mask: PredictionMask) -> BetaFunctions:
    """Backward recursion for beta with the limit taken at the largest proxy.

    The asymptotic slope of G in period i+1 is the secant between the largest
    proxy and the level just below it; beta_{i+1} is read at the largest proxy
    and the supremum over later periods runs over every lattice continuation.
    Paths outside the mask contribute zero.
    """
    if not lattice.has_proxies:
        raise NoTailProxiesError("numeric beta needs at least one tail proxy level")
    n = lattice.n_periods
    g = payoff(lattice.values(lattice.all_indices())).reshape(lattice.shape)
    bits = mask.bits
    betas: list[NDArray[np.float64]] = [np.zeros(())] * (n + 1)
    betas[n] = np.zeros(lattice.shape)
    for i in range(n - 1, -1, -1):
        lv = lattice.levels[i]
        top = lv.size - 1
        with np.errstate(invalid="ignore"):
            slope = (np.take(g, top, axis=i) - np.take(g, top - 1, axis=i)) / (lv[top] - lv[top - 1])
        slope = np.where(np.isnan(slope), -np.inf, slope)
        after_top = np.take(betas[i + 1], top, axis=i)
        after_top = after_top.reshape(after_top.shape + (1,) * (n - 1 - i))
        term = np.where(np.take(bits, top, axis=i), after_top + slope, 0.0)
        continuation = tuple(range(i, n - 1))
        best = term.max(axis=continuation) if continuation else term
        betas[i] = np.maximum(best, 0.0)
    log.debug("numeric beta0 for %s: %.6g", payoff.name, float(betas[0]))
    return BetaFunctions(tuple(betas[:n]), "numeric", approximate=True)


def modified_payoff_g_beta(payoff: Payoff, beta: BetaFunctions, lattice: PathLattice) -> Payoff:
    """G minus the beta-weighted increments; evaluated on lattice prices only."""
    n = lattice.n_periods
    if beta.n_periods != n:
        msg = f"beta has {beta.n_periods} periods, lattice has {n}"
        raise InputError(msg)

    def evaluate(values: NDArray[np.float64]) -> NDArray[np.float64]:
        idx = lattice.locate(values[:, 1:])
        out = payoff(values).copy()
        for i in range(n):
            out -= beta.at(i, idx[:, :i]) * (values[:, i + 1] - values[:, i])
        return out

    all_values = lattice.values(lattice.all_indices())
    g_beta = evaluate(all_values)
    finite = np.isfinite(g_beta)
    growth = float(np.max(np.maximum(g_beta[finite], 0.0) / (1.0 + all_values[finite].sum(axis=1)), initial=0.0))
    return Payoff(f"{payoff.name}-beta", evaluate, growth, None)


def check_g_beta_bounded(g_beta: Payoff, lattice: PathLattice, mask: PredictionMask) -> float:
    """Upper bound of G_beta on the mask; UnboundedGBetaError if it still grows at the proxies."""
    g = g_beta(lattice.values(lattice.all_indices())).reshape(lattice.shape)
    bits = mask.bits
    if lattice.has_proxies:
        for i, lv in enumerate(lattice.levels):
            top = lv.size - 1
            slope = (np.take(g, top, axis=i) - np.take(g, top - 1, axis=i)) / (lv[top] - lv[top - 1])
            live = np.take(bits, top, axis=i) & np.isfinite(slope)
            if live.any() and slope[live].max() > _G_BETA_SLOPE_TOL:
                msg = (
                    f"{g_beta.name} still grows with slope {slope[live].max():.3g} "
                    f"in period {i + 1} at the tail proxies"
                )
                raise UnboundedGBetaError(msg)
    on_mask = g[bits & np.isfinite(g)]
    return float(on_mask.max()) if on_mask.size else float("-inf")


def penalized_payoff(payoff: Payoff, n_penalty: float, mask: PredictionMask) -> Payoff:
    """G - N * (1 + s_1 + ... + s_n) off the mask; G unchanged on it."""
    if n_penalty < 0:
        msg = f"penalty N must be nonnegative, got {n_penalty}"
        raise InputError(msg)
    if n_penalty == 0:
        return payoff

    def evaluate(values: NDArray[np.float64]) -> NDArray[np.float64]:
        outside = ~mask.contains_prices(values)
        return payoff(values) - n_penalty * (1.0 + values[:, 1:].sum(axis=1)) * outside

    return Payoff(f"{payoff.name}-pen({n_penalty:g})", evaluate, payoff.growth_bound, None)


@dataclass(frozen=True)
class CatalogEntry:
    kind: PayoffKind
    summary: str
    fields: tuple[str, ...] = ()


CATALOG: tuple[CatalogEntry, ...] = (
    CatalogEntry("asian", "(mean(s_1..s_n) - K)+", ("strike",)),
    CatalogEntry("lookback_knock_in", "(max s_i - K)+ 1{min s_i <= B}", ("strike", "barrier")),
    CatalogEntry("forward", "s_m", ("maturity",)),
    CatalogEntry("european_call", "(s_m - K)+", ("strike", "maturity")),
    CatalogEntry("european_put", "(K - s_m)+", ("strike", "maturity")),
    CatalogEntry("power_call", "((s_m - K)+)^p, 0 < p <= 1", ("strike", "exponent", "maturity")),
    CatalogEntry("basket", "sum of weighted components", ("components",)),
    CatalogEntry("table", "tabulated on levels, flat beyond", ("levels", "values")),
    CatalogEntry("random_table", "uniform random on mass paths", ("low", "high", "seed")),
)
