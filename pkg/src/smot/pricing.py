"""Primal transport LPs, superhedging LPs, duality gaps and arbitrage certificates.

The primal side maximises ``E[G]`` over path laws on the mask-feasible mass
paths that reproduce the marginals, with one increment constraint per
history (supermartingale, martingale or none).  The dual side minimises the
cost of cash, signed vanilla options and nonnegative (or free) stock
holdings per history whose combined payoff dominates ``G`` on every
mask-feasible lattice path, tail proxies included.
"""

from __future__ import annotations

import concurrent.futures
import logging
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Literal

import numpy as np

from smot.errors import (
    CertificateVerificationError,
    HedgeVerificationError,
    InfeasibleInputError,
    InfeasibleModelError,
    InputError,
    MixedKindError,
    NoTailProxiesError,
    NumericalBreakdownError,
    PathCountExceededError,
    UnboundedHedgeError,
)
from smot.lp import LpDiagnostics, LpProblem, LpStatus, SolverOptions, check_solution, solve_lp
from smot.marginals import Grid, MarketInput
from smot.paths import all_paths, enumerate_paths
from smot.payoffs import (
    analytic_beta,
    check_g_beta_bounded,
    modified_payoff_g_beta,
    numeric_beta,
    penalized_payoff,
)

if TYPE_CHECKING:
    from collections.abc import Mapping, Sequence

    from numpy.typing import NDArray

    from smot.marginals import Marginal, OptionKind
    from smot.paths import PathLattice, PredictionMask
    from smot.payoffs import BetaFunctions, Payoff

log = logging.getLogger("smot.pricing")

PrimalMode = Literal["supermartingale", "martingale", "plain_coupling"]
DeltaSign = Literal["nonnegative", "free"]
BetaSource = Literal["auto", "analytic", "numeric"]
Route = Literal["direct", "beta", "gammaN"]

DEFAULT_N_SCHEDULE = (1.0, 10.0, 100.0, 1000.0)
# float64 cells in the dense simplex tableau, about 400 MB
DENSE_CELL_CAP = 50_000_000


@dataclass(frozen=True)
class PricingOptions:
    solver: SolverOptions = field(default_factory=SolverOptions)
    verify_tol: float = 1e-7
    cert_tol: float = 1e-6
    weak_duality_tol: float = 1e-7
    dense_cell_cap: int = DENSE_CELL_CAP


# ---------------------------------------------------------------------------
# Result types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrimalResult:
    value: float
    mode: PrimalMode
    paths: NDArray[np.intp]  # (k, n) level indices of the LP columns
    coupling: NDArray[np.float64]  # probability per column
    diagnostics: LpDiagnostics
    iterations: int = 0

    def support(self, min_weight: float = 1e-12) -> tuple[NDArray[np.intp], NDArray[np.float64]]:
        keep = self.coupling > min_weight
        return self.paths[keep], self.coupling[keep]

    def to_dict(self, lattice: PathLattice | None = None) -> dict[str, object]:
        paths, probs = self.support()
        rows: list[object] = (
            [lattice.decode(p) for p in paths] if lattice is not None else paths.tolist()
        )
        return {
            "value": self.value,
            "mode": self.mode,
            "iterations": self.iterations,
            "diagnostics": self.diagnostics.to_dict(),
            "coupling": [{"path": r, "p": float(q)} for r, q in zip(rows, probs, strict=True)],
        }


@dataclass(frozen=True)
class StaticPosition:
    kind: OptionKind
    maturity: int
    strike: float
    quantity: float
    price: float

    def payoff(self, s: NDArray[np.float64]) -> NDArray[np.float64]:
        if self.kind == "call":
            return np.maximum(s - self.strike, 0.0)
        return np.maximum(self.strike - s, 0.0)


@dataclass(frozen=True)
class HedgePortfolio:
    """Cash, vanilla positions and stock holdings per history.

    ``deltas[t]`` has shape ``lattice.shape[:t]``; entries are NaN at
    histories no mask-feasible path passes through.
    """

    cash: float
    statics: tuple[StaticPosition, ...]
    deltas: tuple[NDArray[np.float64], ...]

    @property
    def cost(self) -> float:
        return self.cash + sum(p.quantity * p.price for p in self.statics)

    def value(self, indices: NDArray[np.intp], values: NDArray[np.float64]) -> NDArray[np.float64]:
        total = np.full(values.shape[0], self.cash)
        for pos in self.statics:
            total += pos.quantity * pos.payoff(values[:, pos.maturity])
        for t, delta in enumerate(self.deltas):
            held = np.asarray(delta[tuple(indices[:, :t].T)], dtype=float)
            total += held * (values[:, t + 1] - values[:, t])
        return total

    def to_dict(self, min_quantity: float = 1e-12) -> dict[str, object]:
        return {
            "cash": self.cash,
            "statics": [
                {
                    "kind": p.kind,
                    "maturity": p.maturity,
                    "strike": p.strike,
                    "quantity": p.quantity,
                    "price": p.price,
                }
                for p in self.statics
                if abs(p.quantity) > min_quantity
            ],
            "delta0": float(self.deltas[0]) if self.deltas else None,
            "delta_max": [float(np.nanmax(d)) if np.isfinite(d).any() else None for d in self.deltas],
        }


@dataclass(frozen=True)
class DualResult:
    value: float
    kind: OptionKind
    portfolio: HedgePortfolio
    delta_sign: DeltaSign
    strike_menu: dict[int, tuple[float, ...]]
    worst_slack: float
    diagnostics: LpDiagnostics
    iterations: int = 0

    def to_dict(self) -> dict[str, object]:
        return {
            "value": self.value,
            "kind": self.kind,
            "delta_sign": self.delta_sign,
            "strike_menu": {str(t): list(k) for t, k in self.strike_menu.items()},
            "worst_slack": self.worst_slack,
            "iterations": self.iterations,
            "diagnostics": self.diagnostics.to_dict(),
            "portfolio": self.portfolio.to_dict(),
        }


@dataclass(frozen=True)
class ArbitrageCertificate:
    portfolio: HedgePortfolio
    cost: float
    min_payoff: float
    kind: OptionKind

    def to_dict(self) -> dict[str, object]:
        return {
            "kind": self.kind,
            "cost": self.cost,
            "min_payoff": self.min_payoff,
            "portfolio": self.portfolio.to_dict(),
        }


@dataclass(frozen=True)
class BetaRouteResult:
    value: float
    source: str
    approximate: bool
    g_beta_max: float
    beta0: float

    def to_dict(self) -> dict[str, object]:
        return {
            "value": self.value,
            "source": self.source,
            "approximate": self.approximate,
            "g_beta_max": self.g_beta_max,
            "beta0": self.beta0,
        }


@dataclass(frozen=True)
class GammaRow:
    n_penalty: float
    v: float
    p: float

    @property
    def gamma(self) -> float:
        return self.v - self.p


@dataclass(frozen=True)
class GammaSchedule:
    rows: tuple[GammaRow, ...]

    @property
    def v_estimate(self) -> float:
        return min(r.v for r in self.rows)

    @property
    def gammas(self) -> tuple[float, ...]:
        return tuple(r.gamma for r in self.rows)

    def to_dict(self) -> dict[str, object]:
        return {
            "v_estimate": self.v_estimate,
            "rows": [{"N": r.n_penalty, "V": r.v, "P": r.p, "gamma": r.gamma} for r in self.rows],
        }


@dataclass(frozen=True)
class OnePeriodValue:
    p: float
    v: float
    beta: float

    @property
    def gap(self) -> float:
        return self.v - self.p


@dataclass(frozen=True)
class DominanceViolation:
    period: int
    history: tuple[float, ...]
    delta: float
    beta: float


# ---------------------------------------------------------------------------
# Shared LP plumbing
# ---------------------------------------------------------------------------


def _prefix_groups(
    indices: NDArray[np.intp], period: int, shape: tuple[int, ...]
) -> tuple[NDArray[np.intp], NDArray[np.intp]]:
    """Flat keys of the distinct ``period``-long prefixes and each row's group."""
    if period == 0:
        return np.zeros(1, dtype=np.intp), np.zeros(indices.shape[0], dtype=np.intp)
    keys = np.ravel_multi_index(tuple(indices[:, :period].T), shape[:period])
    uniq, inverse = np.unique(keys, return_inverse=True)
    return uniq, inverse.reshape(-1)


def _increment_rows(
    indices: NDArray[np.intp], values: NDArray[np.float64], shape: tuple[int, ...]
) -> tuple[list[NDArray[np.float64]], list[NDArray[np.intp]]]:
    """One row per (period, history) holding ``s_{t+1} - s_t`` on the paths through it."""
    k = indices.shape[0]
    blocks, keys = [], []
    for t in range(len(shape)):
        uniq, groups = _prefix_groups(indices, t, shape)
        block = np.zeros((uniq.size, k))
        block[groups, np.arange(k)] = values[:, t + 1] - values[:, t]
        blocks.append(block)
        keys.append(uniq)
    return blocks, keys


def _scatter_deltas(
    flat: NDArray[np.float64], keys: list[NDArray[np.intp]], shape: tuple[int, ...]
) -> tuple[NDArray[np.float64], ...]:
    out, offset = [], 0
    for t, uniq in enumerate(keys):
        arr = np.full(int(np.prod(shape[:t], dtype=np.int64)), np.nan)
        arr[uniq] = flat[offset : offset + uniq.size]
        offset += uniq.size
        out.append(arr.reshape(shape[:t]))
    return tuple(out)


def _require_matching(lattice: PathLattice, marginals: Sequence[Marginal]) -> None:
    if len(marginals) != lattice.n_periods:
        msg = f"{len(marginals)} marginals for a {lattice.n_periods}-period lattice"
        raise InputError(msg)
    for t, m in enumerate(marginals, start=1):
        levels = lattice.mass_levels(t)
        if m.support.shape != levels.shape or not np.allclose(m.support, levels, rtol=1e-12):
            msg = f"marginal {t} support does not match the lattice mass levels"
            raise InputError(msg)


def _mass_histories(lattice: PathLattice, period: int) -> NDArray[np.intp]:
    if period == 0:
        return np.zeros((1, 0), dtype=np.intp)
    return np.indices(lattice.n_mass[:period]).reshape(period, -1).T


def _history_count(indices: NDArray[np.intp], shape: tuple[int, ...]) -> int:
    return sum(_prefix_groups(indices, t, shape)[0].size for t in range(len(shape)))


def _check_dense_size(
    *, n_vars: int, n_free: int, n_eq: int, n_ub: int, cap: int, what: str
) -> None:
    """Refuse LPs whose full tableau would not fit in ``cap`` float64 cells.

    Runs before assembly; free columns are split, every ub row gets a slack and
    at most one artificial per row.
    """
    rows = n_eq + n_ub
    cols = n_vars + n_free + n_ub + rows
    cells = (rows + 1) * (cols + 1)
    if cells > cap:
        msg = (
            f"{what}: the dense tableau needs {cells} cells ({rows} rows x {cols} columns), "
            f"cap is {cap}; tighten the prediction set or use fewer proxies"
        )
        raise PathCountExceededError(msg)


# ---------------------------------------------------------------------------
# Primal
# ---------------------------------------------------------------------------


def primal_price(
    marginals: Sequence[Marginal],
    mask: PredictionMask,
    payoff: Payoff,
    mode: PrimalMode = "supermartingale",
    options: PricingOptions | None = None,
) -> PrimalResult:
    opts = options or PricingOptions()
    lattice = mask.lattice
    _require_matching(lattice, marginals)
    if mode not in ("supermartingale", "martingale", "plain_coupling"):
        msg = f"unknown primal mode {mode!r}"
        raise InputError(msg)

    idx = lattice.mass_indices()
    values = lattice.values(idx)
    g = payoff(values)
    keep = mask.contains(idx) & np.isfinite(g)
    if not keep.any():
        raise InfeasibleModelError("no mask-feasible mass path with a finite payoff")
    idx, values, g = idx[keep], values[keep], g[keep]
    k = idx.shape[0]
    n_hist = 0 if mode == "plain_coupling" else _history_count(idx, lattice.shape)
    _check_dense_size(
        n_vars=k,
        n_free=0,
        n_eq=sum(lattice.n_mass) + (n_hist if mode == "martingale" else 0),
        n_ub=n_hist if mode == "supermartingale" else 0,
        cap=opts.dense_cell_cap,
        what=f"{mode} primal",
    )

    eq_blocks = [
        (idx[:, t][None, :] == np.arange(lattice.n_mass[t])[:, None]).astype(float)
        for t in range(lattice.n_periods)
    ]
    eq_rhs = [m.support_weights for m in marginals]
    ub_blocks: list[NDArray[np.float64]] = []
    if mode != "plain_coupling":
        inc, _ = _increment_rows(idx, values, lattice.shape)
        if mode == "martingale":
            eq_blocks.extend(inc)
            eq_rhs.extend(np.zeros(b.shape[0]) for b in inc)
        else:
            ub_blocks = inc

    a_ub = np.vstack(ub_blocks) if ub_blocks else np.zeros((0, k))
    problem = LpProblem.build(
        g,
        a_eq=np.vstack(eq_blocks),
        b_eq=np.concatenate(eq_rhs),
        a_ub=a_ub,
        b_ub=np.zeros(a_ub.shape[0]),
        sense="max",
    )
    log.info("primal (%s): %d paths, %d eq rows, %d ub rows", mode, k, problem.n_eq, problem.n_ub)
    sol = solve_lp(problem, opts.solver)
    if sol.status is LpStatus.INFEASIBLE:
        msg = f"no {mode} law on the prediction set reproduces the marginals"
        raise InfeasibleModelError(msg, farkas_ray=sol.farkas_ray)
    if sol.status is LpStatus.UNBOUNDED or sol.x is None:
        msg = "primal LP over a probability simplex reported unbounded"
        raise NumericalBreakdownError(msg)
    diagnostics = check_solution(problem, sol)
    if diagnostics.worst() > 1e3 * opts.solver.feas_tol:
        log.warning("primal residuals up to %.3e", diagnostics.worst())
    return PrimalResult(sol.objective, mode, idx, sol.x, diagnostics, sol.iterations)


# ---------------------------------------------------------------------------
# Dual (superhedging)
# ---------------------------------------------------------------------------


def _hedge_menu(
    market: MarketInput,
    lattice: PathLattice,
    strike_menu: Mapping[int, Sequence[float]] | None,
) -> list[tuple[int, float, float]]:
    menu: list[tuple[int, float, float]] = []
    for curve in market.curves:
        t = curve.maturity
        mass = lattice.mass_levels(t)
        allowed = np.union1d([0.0], mass) if market.kind == "call" else mass
        strikes = allowed
        if strike_menu is not None and t in strike_menu:
            asked = np.unique(np.asarray(strike_menu[t], dtype=float))
            try:
                pos = Grid.of(allowed).index_of(asked)
            except InputError as exc:
                msg = f"maturity {t}: strike menu must be a subset of the mass levels"
                raise InputError(msg) from exc
            strikes = allowed[pos]
        prices = curve(strikes)
        menu.extend((t, float(k), float(p)) for k, p in zip(strikes, prices, strict=True))
    return menu


def _superhedge(
    market: MarketInput,
    mask: PredictionMask,
    payoff: Payoff,
    *,
    delta_sign: DeltaSign,
    strike_menu: Mapping[int, Sequence[float]] | None,
    options: PricingOptions,
) -> DualResult:
    lattice = mask.lattice
    n = lattice.n_periods
    if market.n != n:
        msg = f"market has {market.n} maturities, lattice has {n} periods"
        raise InputError(msg)

    idx = enumerate_paths(lattice, mask)
    values = lattice.values(idx)
    g = payoff(values)
    if np.any(np.isposinf(g)) or np.any(np.isnan(g)):
        msg = f"{payoff.name} is +inf or NaN on a feasible path"
        raise InputError(msg)
    live = np.isfinite(g)
    if not live.any():
        raise InfeasibleInputError("payoff is -inf on every feasible path")
    idx, values, g = idx[live], values[live], g[live]
    k = idx.shape[0]

    menu = _hedge_menu(market, lattice, strike_menu)
    kind = market.kind
    n_hist = _history_count(idx, lattice.shape)
    _check_dense_size(
        n_vars=1 + len(menu) + n_hist,
        n_free=1 + len(menu) + (n_hist if delta_sign == "free" else 0),
        n_eq=0,
        n_ub=k,
        cap=options.dense_cell_cap,
        what=f"superhedge of {payoff.name}",
    )
    statics = np.column_stack(
        [
            np.maximum(values[:, t] - strike, 0.0)
            if kind == "call"
            else np.maximum(strike - values[:, t], 0.0)
            for t, strike, _ in menu
        ]
    )
    inc_rows, keys = _increment_rows(idx, values, lattice.shape)
    dynamics = np.vstack(inc_rows).T
    n_static = len(menu)
    n_delta = dynamics.shape[1]

    matrix = np.hstack([np.ones((k, 1)), statics, dynamics])
    cost = np.concatenate([[1.0], [p for _, _, p in menu], np.zeros(n_delta)])
    free = np.concatenate(
        [np.ones(1 + n_static, dtype=bool), np.full(n_delta, delta_sign == "free")]
    )
    problem = LpProblem.build(cost, a_ub=-matrix, b_ub=-g, free=free, sense="min")
    log.info(
        "superhedge (%s): %d paths, %d statics, %d deltas (%s)",
        kind,
        k,
        n_static,
        n_delta,
        delta_sign,
    )
    sol = solve_lp(problem, options.solver)
    if sol.status is LpStatus.INFEASIBLE:
        msg = f"no superhedge of {payoff.name} exists on the lattice"
        raise UnboundedHedgeError(msg)
    if sol.status is LpStatus.UNBOUNDED or sol.x is None:
        msg = "superhedging cost is unbounded below: no calibrated model exists"
        raise InfeasibleInputError(msg)

    x = sol.x
    positions = tuple(
        StaticPosition(kind, t, strike, float(q), price)
        for (t, strike, price), q in zip(menu, x[1 : 1 + n_static], strict=True)
    )
    portfolio = HedgePortfolio(
        cash=float(x[0]),
        statics=positions,
        deltas=_scatter_deltas(x[1 + n_static :], keys, lattice.shape),
    )
    used: dict[int, list[float]] = {}
    for t, strike, _ in menu:
        used.setdefault(t, []).append(strike)
    dual = DualResult(
        value=sol.objective,
        kind=kind,
        portfolio=portfolio,
        delta_sign=delta_sign,
        strike_menu={t: tuple(v) for t, v in used.items()},
        worst_slack=float("nan"),
        diagnostics=check_solution(problem, sol),
        iterations=sol.iterations,
    )
    worst = verify_hedge(dual, mask, payoff, options.verify_tol)
    return replace(dual, worst_slack=worst)


def superhedge_calls(
    market: MarketInput,
    mask: PredictionMask,
    payoff: Payoff,
    delta_sign: DeltaSign = "nonnegative",
    options: PricingOptions | None = None,
) -> DualResult:
    if market.kind != "call":
        msg = f"superhedge_calls needs a call market, got {market.kind}"
        raise MixedKindError(msg)
    return _superhedge(
        market,
        mask,
        payoff,
        delta_sign=delta_sign,
        strike_menu=None,
        options=options or PricingOptions(),
    )


def superhedge_puts(
    market: MarketInput,
    mask: PredictionMask,
    payoff: Payoff,
    strike_menu: Mapping[int, Sequence[float]] | None = None,
    options: PricingOptions | None = None,
) -> DualResult:
    if market.kind != "put":
        msg = f"superhedge_puts needs a put market, got {market.kind}"
        raise MixedKindError(msg)
    return _superhedge(
        market,
        mask,
        payoff,
        delta_sign="nonnegative",
        strike_menu=strike_menu,
        options=options or PricingOptions(),
    )


def verify_hedge(
    dual: DualResult, mask: PredictionMask, payoff: Payoff, tol: float = 1e-7
) -> float:
    """Minimum of (Psi - G) / max(1, |G|) over mask-feasible lattice paths."""
    lattice = mask.lattice
    idx = enumerate_paths(lattice, mask)
    values = lattice.values(idx)
    g = payoff(values)
    live = np.isfinite(g)
    if not live.any():
        return float("inf")
    idx, values, g = idx[live], values[live], g[live]
    psi = dual.portfolio.value(idx, values)
    slack = (psi - g) / np.maximum(1.0, np.abs(g))
    worst_pos = int(np.argmin(slack))
    worst = float(slack[worst_pos])
    if not np.isfinite(worst) or worst < -tol:
        msg = (
            f"hedge of {payoff.name} misses G by {worst:.3e} (relative) at "
            f"{values[worst_pos].tolist()}"
        )
        raise HedgeVerificationError(msg, worst_slack=worst)
    log.debug("hedge verified, worst relative slack %.3e", worst)
    return worst


# ---------------------------------------------------------------------------
# Gap routes
# ---------------------------------------------------------------------------


def select_beta(
    payoff: Payoff, lattice: PathLattice, mask: PredictionMask, source: BetaSource = "auto"
) -> BetaFunctions:
    if source == "analytic":
        return analytic_beta(payoff, lattice)
    if source == "numeric":
        return numeric_beta(payoff, lattice, mask)
    if payoff.has_analytic_beta:
        return analytic_beta(payoff, lattice)
    if not lattice.has_proxies:
        msg = f"{payoff.name}: no closed-form beta and no tail proxies for a numeric one"
        raise NoTailProxiesError(msg)
    return numeric_beta(payoff, lattice, mask)


def gap_via_beta(
    marginals: Sequence[Marginal],
    mask: PredictionMask,
    payoff: Payoff,
    beta: BetaFunctions,
    options: PricingOptions | None = None,
) -> BetaRouteResult:
    """Superhedging value as the supermartingale price of G_beta."""
    lattice = mask.lattice
    g_beta = modified_payoff_g_beta(payoff, beta, lattice)
    bound = check_g_beta_bounded(g_beta, lattice, mask)
    result = primal_price(marginals, mask, g_beta, "supermartingale", options)
    return BetaRouteResult(
        value=result.value,
        source=beta.source,
        approximate=beta.approximate,
        g_beta_max=bound,
        beta0=float(beta.values[0]),
    )


def gap_asymptotic(
    marginals: Sequence[Marginal],
    mask: PredictionMask,
    payoff: Payoff,
    n_schedule: Sequence[float] = DEFAULT_N_SCHEDULE,
    kind: OptionKind = "put",
    options: PricingOptions | None = None,
) -> GammaSchedule:
    """Both LPs for the penalised payoff G - N(1 + sum s) 1{not in mask} on all paths."""
    opts = options or PricingOptions()
    lattice = mask.lattice
    if not n_schedule:
        raise InputError("penalty schedule is empty")
    if mask.is_all_paths:
        log.warning("prediction set holds every lattice path; gamma_N does not depend on N")
    market = MarketInput.from_marginals(lattice.spot, marginals, kind)
    full = all_paths(lattice)
    rows = []
    for n_penalty in n_schedule:
        pen = penalized_payoff(payoff, float(n_penalty), mask)
        p = primal_price(marginals, full, pen, "supermartingale", opts).value
        v = _superhedge(
            market, full, pen, delta_sign="nonnegative", strike_menu=None, options=opts
        ).value
        log.info("gamma_N at N=%g: V=%.10g P=%.10g", n_penalty, v, p)
        rows.append(GammaRow(float(n_penalty), v, p))
    return GammaSchedule(tuple(rows))


def closed_form_one_period(marginal: Marginal, payoff: Payoff, s0: float) -> OnePeriodValue:
    """P = E[G(s0, X)], V = P + beta_+ (s0 - mean); needs a closed-form beta."""
    analytic = payoff.beta_provider
    if analytic is None:
        msg = f"{payoff.name} has no closed-form beta"
        raise InputError(msg)
    support = marginal.support
    values = np.column_stack([np.full(support.size, s0), support])
    p = float(marginal.support_weights @ payoff(values))
    beta = float(analytic(np.array([[s0]]), 0, 1)[0])
    v = p + max(beta, 0.0) * (s0 - marginal.mean())
    return OnePeriodValue(p, v, beta)


def delta_dominance(
    dual: DualResult, beta: BetaFunctions, lattice: PathLattice, tol: float = 1e-6
) -> list[DominanceViolation]:
    """Mass-level histories where the solved holding falls below beta."""
    out = []
    for t, (delta, b) in enumerate(zip(dual.portfolio.deltas, beta.values, strict=True)):
        hist = _mass_histories(lattice, t)
        d = np.atleast_1d(delta[tuple(hist.T)])
        bv = np.atleast_1d(b[tuple(hist.T)])
        bad = np.isfinite(d) & (d < bv - tol)
        for j in np.flatnonzero(bad):
            history = (lattice.spot, *(float(lattice.levels[s][hist[j, s]]) for s in range(t)))
            out.append(DominanceViolation(t, history, float(d[j]), float(bv[j])))
    return out


# ---------------------------------------------------------------------------
# Arbitrage
# ---------------------------------------------------------------------------


def arbitrage_certificate(
    market: MarketInput, mask: PredictionMask, options: PricingOptions | None = None
) -> ArbitrageCertificate | None:
    """Static-plus-dynamic strategy with negative cost and nonnegative payoff, if one exists.

    Solves the calibration LP over every mask-feasible lattice path; a Farkas
    ray of the infeasible LP is read back as a trading strategy and checked
    path by path before it is returned.
    """
    opts = options or PricingOptions()
    lattice = mask.lattice
    if market.n != lattice.n_periods:
        msg = f"market has {market.n} maturities, lattice has {lattice.n_periods} periods"
        raise InputError(msg)
    idx = enumerate_paths(lattice, mask)
    values = lattice.values(idx)
    k = idx.shape[0]
    kind = market.kind

    quotes = [
        (c.maturity, float(strike), float(price))
        for c in market.curves
        for strike, price in zip(c.strikes.points, c.prices, strict=True)
    ]
    _check_dense_size(
        n_vars=k,
        n_free=0,
        n_eq=1 + len(quotes),
        n_ub=_history_count(idx, lattice.shape),
        cap=opts.dense_cell_cap,
        what="calibration LP",
    )
    rows = [np.ones(k)]
    for t, strike, _ in quotes:
        rows.append(
            np.maximum(values[:, t] - strike, 0.0)
            if kind == "call"
            else np.maximum(strike - values[:, t], 0.0)
        )
    inc_rows, keys = _increment_rows(idx, values, lattice.shape)
    a_ub = np.vstack(inc_rows)
    problem = LpProblem.build(
        np.zeros(k),
        a_eq=np.vstack(rows),
        b_eq=np.concatenate([[1.0], [p for _, _, p in quotes]]),
        a_ub=a_ub,
        b_ub=np.zeros(a_ub.shape[0]),
    )
    sol = solve_lp(problem, opts.solver)
    if sol.status is not LpStatus.INFEASIBLE:
        log.info("calibration LP feasible on %d paths: no arbitrage", k)
        return None
    if sol.farkas_ray is None:
        raise CertificateVerificationError("infeasible calibration LP returned no Farkas ray")

    strategy = -sol.farkas_ray
    n_eq = problem.n_eq
    cash = float(strategy[0])
    quantities = strategy[1:n_eq]
    holdings = strategy[n_eq:]
    scale = max(abs(cash), float(np.abs(quantities).max(initial=0.0)))
    if scale <= 0.0:
        raise CertificateVerificationError("Farkas ray carries no static position")
    cash /= scale
    quantities = quantities / scale
    holdings = np.maximum(holdings / scale, 0.0)

    portfolio = HedgePortfolio(
        cash=cash,
        statics=tuple(
            StaticPosition(kind, t, strike, float(q), price)
            for (t, strike, price), q in zip(quotes, quantities, strict=True)
        ),
        deltas=_scatter_deltas(holdings, keys, lattice.shape),
    )
    min_payoff = float(portfolio.value(idx, values).min())
    cost = portfolio.cost
    if min_payoff < -opts.solver.feas_tol:
        shift = -min_payoff
        log.debug("shifting certificate cash by %.3e to clear the payoff floor", shift)
        portfolio = HedgePortfolio(portfolio.cash + shift, portfolio.statics, portfolio.deltas)
        cost += shift
        min_payoff = float(portfolio.value(idx, values).min())
    if cost > -opts.cert_tol or min_payoff < -opts.solver.feas_tol:
        msg = f"Farkas ray converts to cost {cost:.3e}, min payoff {min_payoff:.3e}"
        raise CertificateVerificationError(msg)
    log.info("arbitrage certificate: cost %.6g, min payoff %.3e", cost, min_payoff)
    return ArbitrageCertificate(portfolio, cost, min_payoff, kind)


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReportOptions:
    routes: tuple[Route, ...] = ("direct",)
    beta_source: BetaSource = "auto"
    n_schedule: tuple[float, ...] = DEFAULT_N_SCHEDULE
    delta_sign: DeltaSign = "nonnegative"
    strike_menu: Mapping[int, Sequence[float]] | None = None
    concurrent: bool = False
    pricing: PricingOptions = field(default_factory=PricingOptions)


@dataclass(frozen=True)
class DualityReport:
    kind: OptionKind
    payoff: str
    mask: str
    primal: PrimalResult
    dual: DualResult
    bubbles: tuple[float, ...]
    lattice_shape: tuple[int, ...]
    n_mass: tuple[int, ...]
    proxies: tuple[float, ...]
    beta_route: BetaRouteResult | None = None
    gamma: GammaSchedule | None = None
    dominated_by_zero_strike_call: bool | None = None
    forward: float = float("nan")  # f0 = E[S_n], the forward implied by the last marginal
    bubble_flags: tuple[bool, ...] = ()

    @property
    def p(self) -> float:
        return self.primal.value

    @property
    def v(self) -> float:
        return self.dual.value

    @property
    def gap(self) -> float:
        return self.v - self.p

    @property
    def gap_via_beta(self) -> float | None:
        return None if self.beta_route is None else self.beta_route.value - self.p

    def to_dict(self, lattice: PathLattice | None = None) -> dict[str, object]:
        return {
            "kind": self.kind,
            "payoff": self.payoff,
            "mask": self.mask,
            "P": self.p,
            "V": self.v,
            "gap": self.gap,
            "gap_via_beta": self.gap_via_beta,
            "beta_route": self.beta_route.to_dict() if self.beta_route else None,
            "gamma": self.gamma.to_dict() if self.gamma else None,
            "bubbles": list(self.bubbles),
            "bubble_flags": list(self.bubble_flags),
            "forward": self.forward,
            "dominated_by_zero_strike_call": self.dominated_by_zero_strike_call,
            "lattice": {
                "shape": list(self.lattice_shape),
                "mass_levels": list(self.n_mass),
                "proxies": list(self.proxies),
            },
            "primal": self.primal.to_dict(lattice),
            "dual": self.dual.to_dict(),
        }


def _bubbles(market: MarketInput, marginals: Sequence[Marginal]) -> tuple[float, ...]:
    return tuple(market.spot - m.mean() for m in marginals)


def _bubble_flags(spot: float, bubbles: Sequence[float], tol: float) -> tuple[bool, ...]:
    return tuple(bool(b > tol * (1.0 + spot)) for b in bubbles)


def duality_report(
    market: MarketInput,
    mask: PredictionMask,
    payoff: Payoff,
    options: ReportOptions | None = None,
    marginals: Sequence[Marginal] | None = None,
) -> DualityReport:
    opts = options or ReportOptions()
    lattice = mask.lattice
    marg = tuple(marginals) if marginals is not None else market.extract_marginals()

    def run_primal() -> PrimalResult:
        return primal_price(marg, mask, payoff, "supermartingale", opts.pricing)

    def run_dual() -> DualResult:
        if market.kind == "call":
            return superhedge_calls(market, mask, payoff, opts.delta_sign, opts.pricing)
        return superhedge_puts(market, mask, payoff, opts.strike_menu, opts.pricing)

    if opts.concurrent:
        with concurrent.futures.ThreadPoolExecutor(max_workers=2) as pool:
            f_primal = pool.submit(run_primal)
            f_dual = pool.submit(run_dual)
            primal, dual = f_primal.result(), f_dual.result()
    else:
        primal, dual = run_primal(), run_dual()

    gap = dual.value - primal.value
    if gap < -opts.pricing.weak_duality_tol * (1.0 + abs(primal.value)):
        msg = f"weak duality violated: V={dual.value:.12g} < P={primal.value:.12g}"
        raise NumericalBreakdownError(msg)
    log.info("P=%.10g V=%.10g gap=%.3e", primal.value, dual.value, gap)

    beta_route = None
    if "beta" in opts.routes:
        if market.kind == "call":
            log.info("beta route skipped: call markets have no duality gap to explain")
        else:
            beta = select_beta(payoff, lattice, mask, opts.beta_source)
            beta_route = gap_via_beta(marg, mask, payoff, beta, opts.pricing)

    gamma = None
    if "gammaN" in opts.routes:
        gamma = gap_asymptotic(marg, mask, payoff, opts.n_schedule, market.kind, opts.pricing)

    dominated = None
    if market.kind == "call":
        dominated = bool(market.spot > float(market.curves[-1](0.0)) + opts.pricing.solver.feas_tol)

    bubbles = _bubbles(market, marg)
    return DualityReport(
        kind=market.kind,
        payoff=payoff.name,
        mask=mask.description,
        primal=primal,
        dual=dual,
        bubbles=bubbles,
        lattice_shape=lattice.shape,
        n_mass=lattice.n_mass,
        proxies=tuple(lattice.proxies.tolist()),
        beta_route=beta_route,
        gamma=gamma,
        dominated_by_zero_strike_call=dominated,
        forward=float(marg[-1].mean()),
        bubble_flags=_bubble_flags(market.spot, bubbles, opts.pricing.solver.feas_tol),
    )
