"""Config-driven pipeline: conditions, marginals, lattice, pricing, sweeps."""

from __future__ import annotations

import concurrent.futures
import logging
import time
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Any

import numpy as np

from smot.config import config_hash
from smot.errors import ArbitrageDetected, ConfigError, InfeasibleModelError, InputError, SmotError
from smot.marginals import (
    MarketInput,
    Marginal,
    PriceCurve,
    check_conditions,
    check_supermartingale_order,
    discretize_lognormal,
)
from smot.paths import build_lattice, build_mask, lattice_for_market
from smot.payoffs import make_payoff, verify_growth
from smot.pricing import arbitrage_certificate, duality_report, gap_asymptotic
from smot.report import SweepRow, run_report

if TYPE_CHECKING:
    from smot.config import MarginalConfig, SmotConfig, SweepConfig
    from smot.marginals import ConditionReport, OrderReport
    from smot.paths import PathLattice, PredictionMask
    from smot.payoffs import Payoff
    from smot.pricing import DualityReport

log = logging.getLogger("smot.runner")

_MONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class CheckResult:
    market: MarketInput
    conditions: ConditionReport
    marginals: tuple[Marginal, ...] | None
    order: OrderReport | None

    @property
    def passed(self) -> bool:
        return self.conditions.passed and (self.order is None or self.order.passed)


@dataclass(frozen=True)
class Problem:
    market: MarketInput
    marginals: tuple[Marginal, ...]
    lattice: PathLattice
    mask: PredictionMask
    payoff: Payoff
    growth_bound: float
    checks: CheckResult


@dataclass(frozen=True)
class RunResult:
    report: dict[str, Any]
    duality: DualityReport
    problem: Problem


# ---------------------------------------------------------------------------
# Inputs
# ---------------------------------------------------------------------------


def _marginal_from_config(mc: MarginalConfig, where: str) -> Marginal:
    if mc.source == "pmf":
        return Marginal.from_pairs(zip(mc.points, mc.weights, strict=True))
    if mc.source == "lognormal":
        return discretize_lognormal(mc.mean, mc.log_variance, mc.grid_size, mc.truncation_quantile)
    msg = f"{where}: source {mc.source!r} is a price curve, not a law"
    raise ConfigError(msg)


def build_market(cfg: SmotConfig) -> tuple[MarketInput, tuple[Marginal, ...] | None]:
    """Market quotes plus the marginals when the config gives laws directly."""
    sources = {mc.source for mc in cfg.marginals}
    curve_sources = sources & {"call_curve", "put_curve"}
    spot = cfg.problem.spot
    if curve_sources:
        if curve_sources != sources:
            raise ConfigError("marginals: price curves cannot be mixed with pmf or lognormal laws")
        curves = [
            PriceCurve.build(mc.source.removesuffix("_curve"), t, mc.strikes, mc.prices)
            for t, mc in enumerate(cfg.marginals, start=1)
        ]
        market = MarketInput.build(spot, curves)
        if market.kind != cfg.problem.instrument:
            msg = f"problem.instrument is {cfg.problem.instrument!r} but curves are {market.kind}"
            raise ConfigError(msg)
        return market, None
    laws = tuple(
        _marginal_from_config(mc, f"marginals[{i}]") for i, mc in enumerate(cfg.marginals)
    )
    kind = "call" if cfg.problem.instrument == "call" else "put"
    return MarketInput.from_marginals(spot, laws, kind), laws


def check(cfg: SmotConfig) -> CheckResult:
    """Condition and order checks only; no LP beyond curve inversion."""
    market, laws = build_market(cfg)
    tol = cfg.pricing.condition_tol
    conditions = check_conditions(market, tol, cfg.pricing.decay_tol)
    marginals = laws
    order = None
    if conditions.passed:
        marginals = laws or market.extract_marginals(tol)
        order = check_supermartingale_order(marginals, market.spot, tol)
    elif laws is not None:
        order = check_supermartingale_order(laws, market.spot, tol)
    return CheckResult(market, conditions, marginals, order)


def _certificate_or_raise(cfg: SmotConfig, market: MarketInput, mask: PredictionMask, why: str) -> None:
    cert = arbitrage_certificate(market, mask, cfg.pricing_options())
    if cert is not None:
        msg = f"{why}; arbitrage costs {cert.cost:.6g} with nonnegative payoff"
        raise ArbitrageDetected(msg, cert)
    msg = f"{why}; no calibrated model on the prediction set and no uniformly strong arbitrage"
    raise InfeasibleModelError(msg)


def prepare(cfg: SmotConfig) -> Problem:
    checks = check(cfg)
    market = checks.market
    if not checks.conditions.passed:
        lattice = lattice_for_market(market, cfg.proxies.spec(), cfg.proxies.path_cap)
        mask = build_mask(lattice, cfg.prediction_set)
        failed = ", ".join(checks.conditions.failed_clauses())
        _certificate_or_raise(cfg, market, mask, f"market conditions ({failed}) fail")
    if checks.order is not None and not checks.order.passed:
        raise InfeasibleModelError("marginals are not in decreasing convex order")
    marginals = checks.marginals
    if marginals is None:
        raise InputError("no marginals could be derived from the market")

    lattice = build_lattice(market.spot, marginals, cfg.proxies.spec(), cfg.proxies.path_cap)
    mask = build_mask(lattice, cfg.prediction_set)
    spec = cfg.payoff
    if spec.kind == "random_table":
        spec = replace(spec, seed=cfg.problem.seed)
    payoff = make_payoff(spec, lattice)
    growth = verify_growth(payoff, lattice)
    log.info(
        "problem: %s market, %d maturities, lattice %s, mask %s (%d paths), payoff %s",
        market.kind,
        market.n,
        lattice.shape,
        mask.description,
        mask.count,
        payoff.name,
    )
    return Problem(market, marginals, lattice, mask, payoff, growth, checks)


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


def _price(problem: Problem, cfg: SmotConfig) -> DualityReport:
    try:
        return duality_report(
            problem.market,
            problem.mask,
            problem.payoff,
            cfg.report_options(),
            marginals=problem.marginals,
        )
    except InfeasibleModelError:
        _certificate_or_raise(
            cfg, problem.market, problem.mask, "no supermartingale law fits the prediction set"
        )
        raise


def run(cfg: SmotConfig, overrides: dict[str, Any] | None = None) -> RunResult:
    timings: dict[str, float] = {}
    start = time.perf_counter()
    problem = prepare(cfg)
    timings["prepare"] = time.perf_counter() - start
    start = time.perf_counter()
    duality = _price(problem, cfg)
    timings["price"] = time.perf_counter() - start
    report = run_report(
        config_hash=config_hash(cfg.path, overrides),
        conditions=problem.checks.conditions,
        order=problem.checks.order,
        duality=duality,
        lattice=problem.lattice,
        growth_bound=problem.growth_bound,
        timings=timings,
    )
    return RunResult(report, duality, problem)


def arbitrage_report(cfg: SmotConfig, exc: ArbitrageDetected, overrides: dict[str, Any] | None = None) -> dict[str, Any]:
    checks = check(cfg)
    return run_report(
        config_hash=config_hash(cfg.path, overrides),
        conditions=checks.conditions,
        order=checks.order,
        certificate=exc.certificate,
    )


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def _with_axis(cfg: SmotConfig, axis: str, value: float) -> SmotConfig:
    if axis == "proxy_factor":
        return replace(cfg, proxies=replace(cfg.proxies, growth_factor=float(value)))
    if axis == "grid_size":
        if any(mc.source != "lognormal" for mc in cfg.marginals):
            raise ConfigError("sweep axis grid_size needs lognormal marginals")
        return replace(
            cfg, marginals=[replace(mc, grid_size=int(value)) for mc in cfg.marginals]
        )
    msg = f"unknown sweep axis {axis!r}"
    raise ConfigError(msg)


def sweep_point(cfg: SmotConfig, axis: str, value: float) -> SweepRow:
    """Price one axis value; failures become an ``error:<Class>`` row."""
    try:
        if axis == "N":
            problem = prepare(cfg)
            schedule = gap_asymptotic(
                problem.marginals,
                problem.mask,
                problem.payoff,
                (value,),
                problem.market.kind,
                cfg.pricing_options(),
            )
            row = schedule.rows[0]
            return SweepRow(value, row.p, row.v)
        problem = prepare(_with_axis(cfg, axis, value))
        duality = _price(problem, replace(cfg, pricing=replace(cfg.pricing, routes=("direct",))))
        return SweepRow(value, duality.p, duality.v)
    except SmotError as exc:
        log.warning("sweep %s=%g failed: %s", axis, value, exc)
        return SweepRow(value, float("nan"), float("nan"), f"error:{type(exc).__name__}")


def _flag_monotone(rows: list[SweepRow], axis: str) -> list[SweepRow]:
    """V must not fall as proxies grow, nor rise as the penalty grows."""
    out: list[SweepRow] = []
    previous: float | None = None
    for row in rows:
        if row.status == "ok" and previous is not None and axis != "grid_size":
            step = row.v - previous
            scale = _MONOTONE_TOL * (1.0 + abs(previous))
            broken = step < -scale if axis == "proxy_factor" else step > scale
            if broken:
                row = replace(row, status="non_monotone")
        if row.status != "non_monotone" and np.isfinite(row.v):
            previous = row.v
        out.append(row)
    return out


def sweep(cfg: SmotConfig, spec: SweepConfig, workers: int = 1) -> list[SweepRow]:
    values = sorted(spec.values)
    if not values:
        raise ConfigError("sweep: no values")
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(sweep_point, [cfg] * len(values), [spec.axis] * len(values), values))
    else:
        rows = [sweep_point(cfg, spec.axis, v) for v in values]
    return _flag_monotone(rows, spec.axis)
