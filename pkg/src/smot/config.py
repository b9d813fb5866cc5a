"""SmotConfig: one TOML file per pricing problem.

Example (``smot init problem.toml`` writes a commented version):

    [problem]
    spot = 100.0
    maturities = 2
    instrument = "put"        # "call" | "put"
    seed = 0                  # random_table payoffs only

    [[marginals]]             # one table per maturity, in order
    source = "pmf"            # "pmf" | "call_curve" | "put_curve" | "lognormal"
    points = [80.0, 100.0, 120.0]
    weights = [0.3, 0.4, 0.3]
    # strikes = [...]  prices = [...]                   (call_curve / put_curve)
    # mean = 95.0  log_variance = 0.04  grid_size = 12  truncation_quantile = 0.99

    [payoff]
    kind = "asian"            # see smot.payoffs.CATALOG
    strike = 95.0
    # barrier, maturity, exponent, levels, values, low, high, growth_bound
    # [[payoff.components]] for kind = "basket", each with a weight

    [prediction_set]
    kind = "all_paths"        # "max_abs_increment" | "bounded_squared_variation"
    threshold = 0.0           # | "max_drawdown" | "table" (paths = [[s1, ..., sn], ...])

    [proxies]
    count = 3
    growth_factor = 10.0
    path_cap = 200000

    [solver]
    pivot_tol = 1e-10
    feas_tol = 1e-9
    dual_tol = 1e-8
    max_iterations = 50000
    pivot_rule = "dantzig"    # "dantzig" | "bland"
    highs_fallback = true

    [pricing]
    routes = ["direct"]       # any of "direct", "beta", "gammaN"
    beta_source = "auto"      # "auto" | "analytic" | "numeric"
    n_schedule = [1, 10, 100, 1000]
    delta_sign = "nonnegative"
    # strike_menu = { "1" = [90.0, 110.0] }   puts only; subset of the mass levels
    condition_tol = 1e-9
    decay_tol = 1e-9
    verify_tol = 1e-7
    cert_tol = 1e-6
    dense_cell_cap = 50000000  # float64 cells the dense simplex may allocate

    [sweep]
    axis = "proxy_factor"     # "proxy_factor" | "grid_size" | "N"
    values = [10, 100, 1000]

    [output]
    report = "report.json"
    sweep = "sweep.csv"
    workers = 1
"""

from __future__ import annotations

import hashlib
import json
import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, cast

from smot.errors import ConfigError
from smot.lp import SolverOptions
from smot.paths import DEFAULT_PATH_CAP, MaskSpec, TailProxySpec
from smot.payoffs import CATALOG, PayoffSpec
from smot.pricing import DEFAULT_N_SCHEDULE, DENSE_CELL_CAP, PricingOptions, ReportOptions

_SOURCES = ("pmf", "call_curve", "put_curve", "lognormal")
_ROUTES = ("direct", "beta", "gammaN")
_SWEEP_AXES = ("proxy_factor", "grid_size", "N")
_PAYOFF_KINDS = tuple(e.kind for e in CATALOG)


@dataclass
class ProblemConfig:
    spot: float = 100.0
    maturities: int = 1
    instrument: str = "put"
    seed: int = 0


@dataclass
class MarginalConfig:
    """A [[marginals]] entry."""

    source: str = "pmf"
    points: list[float] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)
    strikes: list[float] = field(default_factory=list)
    prices: list[float] = field(default_factory=list)
    mean: float = 0.0
    log_variance: float = 0.0
    grid_size: int = 10
    truncation_quantile: float = 0.99


@dataclass
class ProxyConfig:
    count: int = 3
    growth_factor: float = 10.0
    path_cap: int = DEFAULT_PATH_CAP

    def spec(self) -> TailProxySpec:
        return TailProxySpec(self.count, self.growth_factor)


@dataclass
class PricingConfig:
    routes: tuple[str, ...] = ("direct",)
    beta_source: str = "auto"
    n_schedule: tuple[float, ...] = DEFAULT_N_SCHEDULE
    delta_sign: str = "nonnegative"
    strike_menu: dict[int, tuple[float, ...]] | None = None
    condition_tol: float = 1e-9
    decay_tol: float = 1e-9
    verify_tol: float = 1e-7
    cert_tol: float = 1e-6
    dense_cell_cap: int = DENSE_CELL_CAP
    concurrent: bool = False


@dataclass
class SweepConfig:
    axis: str = ""
    values: tuple[float, ...] = ()


@dataclass
class OutputConfig:
    report: str = ""
    sweep: str = ""
    workers: int = 1


@dataclass
class SmotConfig:
    """Resolved configuration for one pricing problem."""

    path: Path
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    marginals: list[MarginalConfig] = field(default_factory=list)
    payoff: PayoffSpec = field(default_factory=lambda: PayoffSpec("forward"))
    prediction_set: MaskSpec = field(default_factory=MaskSpec)
    proxies: ProxyConfig = field(default_factory=ProxyConfig)
    solver: SolverOptions = field(default_factory=SolverOptions)
    pricing: PricingConfig = field(default_factory=PricingConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def pricing_options(self) -> PricingOptions:
        return PricingOptions(
            solver=self.solver,
            verify_tol=self.pricing.verify_tol,
            cert_tol=self.pricing.cert_tol,
            dense_cell_cap=self.pricing.dense_cell_cap,
        )

    def report_options(self) -> ReportOptions:
        p = self.pricing
        return ReportOptions(
            routes=cast("Any", p.routes),
            beta_source=cast("Any", p.beta_source),
            n_schedule=p.n_schedule,
            delta_sign=cast("Any", p.delta_sign),
            strike_menu=p.strike_menu,
            concurrent=p.concurrent,
            pricing=self.pricing_options(),
        )


# ---------------------------------------------------------------------------
# Field readers
# ---------------------------------------------------------------------------


def _read(section: dict[str, Any], key: str, default: Any, kind: type, where: str) -> Any:
    value = section.get(key, default)
    try:
        if kind is bool and not isinstance(value, bool):
            raise TypeError(value)
        return kind(value)
    except (TypeError, ValueError) as exc:
        msg = f"{where}.{key}: cannot read {value!r} as {kind.__name__}"
        raise ConfigError(msg) from exc


def _floats(section: dict[str, Any], key: str, where: str) -> list[float]:
    value = section.get(key, [])
    if not isinstance(value, list):
        msg = f"{where}.{key}: expected a list of numbers, got {value!r}"
        raise ConfigError(msg)
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        msg = f"{where}.{key}: expected a list of numbers, got {value!r}"
        raise ConfigError(msg) from exc


def _choice(section: dict[str, Any], key: str, default: str, allowed: tuple[str, ...], where: str) -> str:
    value = str(section.get(key, default))
    if value not in allowed:
        msg = f"{where}.{key}: {value!r} is not one of {', '.join(allowed)}"
        raise ConfigError(msg)
    return value


def _section(raw: dict[str, Any], name: str) -> dict[str, Any]:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        msg = f"[{name}] must be a table"
        raise ConfigError(msg)
    return sec


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------


def _marginal(entry: dict[str, Any], where: str) -> MarginalConfig:
    source = _choice(entry, "source", "pmf", _SOURCES, where)
    cfg = MarginalConfig(
        source=source,
        points=_floats(entry, "points", where),
        weights=_floats(entry, "weights", where),
        strikes=_floats(entry, "strikes", where),
        prices=_floats(entry, "prices", where),
        mean=_read(entry, "mean", 0.0, float, where),
        log_variance=_read(entry, "log_variance", 0.0, float, where),
        grid_size=_read(entry, "grid_size", 10, int, where),
        truncation_quantile=_read(entry, "truncation_quantile", 0.99, float, where),
    )
    if source == "pmf" and (not cfg.points or len(cfg.points) != len(cfg.weights)):
        msg = f"{where}.weights: need one weight per point"
        raise ConfigError(msg)
    if source in ("call_curve", "put_curve") and (
        not cfg.strikes or len(cfg.strikes) != len(cfg.prices)
    ):
        msg = f"{where}.prices: need one price per strike"
        raise ConfigError(msg)
    if source == "lognormal" and cfg.mean <= 0.0:
        msg = f"{where}.mean: lognormal mean must be positive"
        raise ConfigError(msg)
    return cfg


def _payoff(sec: dict[str, Any], where: str) -> PayoffSpec:
    kind = _choice(sec, "kind", "forward", _PAYOFF_KINDS, where)
    components = sec.get("components", [])
    if not isinstance(components, list):
        msg = f"{where}.components: expected an array of tables"
        raise ConfigError(msg)
    levels = sec.get("levels", [])
    try:
        level_rows = tuple(tuple(float(x) for x in row) for row in levels)
    except (TypeError, ValueError) as exc:
        msg = f"{where}.levels: expected one list of numbers per maturity"
        raise ConfigError(msg) from exc
    values = sec.get("values", [])
    growth = sec.get("growth_bound")
    return PayoffSpec(
        kind=cast("Any", kind),
        strike=_read(sec, "strike", 0.0, float, where),
        barrier=_read(sec, "barrier", 0.0, float, where),
        maturity=_read(sec, "maturity", 0, int, where),
        exponent=_read(sec, "exponent", 1.0, float, where),
        weight=_read(sec, "weight", 1.0, float, where),
        components=tuple(
            _payoff(c, f"{where}.components[{i}]") for i, c in enumerate(components)
        ),
        levels=level_rows,
        values=tuple(float(v) for v in _flatten(values)),
        low=_read(sec, "low", 0.0, float, where),
        high=_read(sec, "high", 1.0, float, where),
        seed=_read(sec, "seed", 0, int, where),
        growth_bound=None if growth is None else _read(sec, "growth_bound", None, float, where),
    )


def _flatten(values: Any) -> list[Any]:
    if isinstance(values, list):
        return [x for v in values for x in _flatten(v)]
    return [values]


def _strike_menu(raw: Any, where: str) -> dict[int, tuple[float, ...]] | None:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        msg = f"{where}.strike_menu: expected a table of maturity = [strikes]"
        raise ConfigError(msg)
    try:
        return {int(k): tuple(float(x) for x in v) for k, v in raw.items()}
    except (TypeError, ValueError) as exc:
        msg = f"{where}.strike_menu: expected a table of maturity = [strikes]"
        raise ConfigError(msg) from exc


def load_config(path: Path | str) -> SmotConfig:
    """Read and validate a problem file; every failure is a ConfigError naming the field."""
    config_path = Path(path)
    try:
        with config_path.open("rb") as f:
            raw: dict[str, Any] = tomllib.load(f)
    except FileNotFoundError as exc:
        msg = f"config file not found: {config_path}"
        raise ConfigError(msg) from exc
    except tomllib.TOMLDecodeError as exc:
        msg = f"{config_path}: {exc}"
        raise ConfigError(msg) from exc
    except OSError as exc:
        msg = f"cannot read config file {config_path}: {exc.strerror}"
        raise ConfigError(msg) from exc

    prob = _section(raw, "problem")
    problem = ProblemConfig(
        spot=_read(prob, "spot", 100.0, float, "problem"),
        maturities=_read(prob, "maturities", 1, int, "problem"),
        instrument=_choice(prob, "instrument", "put", ("call", "put"), "problem"),
        seed=_read(prob, "seed", 0, int, "problem"),
    )

    entries = raw.get("marginals", [])
    if not isinstance(entries, list) or not entries:
        raise ConfigError("marginals: need one [[marginals]] table per maturity")
    marginals = [_marginal(e, f"marginals[{i}]") for i, e in enumerate(entries)]
    if len(marginals) != problem.maturities:
        msg = f"problem.maturities is {problem.maturities} but {len(marginals)} marginals given"
        raise ConfigError(msg)

    mask_sec = _section(raw, "prediction_set")
    paths = mask_sec.get("paths", [])
    try:
        mask_paths = tuple(tuple(float(x) for x in row) for row in paths)
    except (TypeError, ValueError) as exc:
        raise ConfigError("prediction_set.paths: expected rows of prices") from exc
    prediction_set = MaskSpec(
        kind=cast(
            "Any",
            _choice(
                mask_sec,
                "kind",
                "all_paths",
                (
                    "all_paths",
                    "max_abs_increment",
                    "bounded_squared_variation",
                    "max_drawdown",
                    "table",
                ),
                "prediction_set",
            ),
        ),
        threshold=_read(mask_sec, "threshold", 0.0, float, "prediction_set"),
        paths=mask_paths,
    )

    prx = _section(raw, "proxies")
    proxies = ProxyConfig(
        count=_read(prx, "count", 3, int, "proxies"),
        growth_factor=_read(prx, "growth_factor", 10.0, float, "proxies"),
        path_cap=_read(prx, "path_cap", DEFAULT_PATH_CAP, int, "proxies"),
    )

    slv = _section(raw, "solver")
    solver = SolverOptions(
        pivot_tol=_read(slv, "pivot_tol", 1e-10, float, "solver"),
        feas_tol=_read(slv, "feas_tol", 1e-9, float, "solver"),
        dual_tol=_read(slv, "dual_tol", 1e-8, float, "solver"),
        max_iterations=_read(slv, "max_iterations", 50_000, int, "solver"),
        pivot_rule=cast("Any", _choice(slv, "pivot_rule", "dantzig", ("dantzig", "bland"), "solver")),
        equilibrate=_read(slv, "equilibrate", True, bool, "solver"),
        highs_fallback=_read(slv, "highs_fallback", True, bool, "solver"),
    )

    prc = _section(raw, "pricing")
    routes = prc.get("routes", ["direct"])
    if not isinstance(routes, list) or any(r not in _ROUTES for r in routes):
        msg = f"pricing.routes: {routes!r} must be a list drawn from {', '.join(_ROUTES)}"
        raise ConfigError(msg)
    pricing = PricingConfig(
        routes=tuple(routes),
        beta_source=_choice(prc, "beta_source", "auto", ("auto", "analytic", "numeric"), "pricing"),
        n_schedule=tuple(_floats(prc, "n_schedule", "pricing")) or DEFAULT_N_SCHEDULE,
        delta_sign=_choice(prc, "delta_sign", "nonnegative", ("nonnegative", "free"), "pricing"),
        strike_menu=_strike_menu(prc.get("strike_menu"), "pricing"),
        condition_tol=_read(prc, "condition_tol", 1e-9, float, "pricing"),
        decay_tol=_read(prc, "decay_tol", 1e-9, float, "pricing"),
        verify_tol=_read(prc, "verify_tol", 1e-7, float, "pricing"),
        cert_tol=_read(prc, "cert_tol", 1e-6, float, "pricing"),
        dense_cell_cap=_read(prc, "dense_cell_cap", DENSE_CELL_CAP, int, "pricing"),
        concurrent=_read(prc, "concurrent", False, bool, "pricing"),
    )

    swp = _section(raw, "sweep")
    sweep = SweepConfig(
        axis=_choice(swp, "axis", "proxy_factor", _SWEEP_AXES, "sweep") if swp else "",
        values=tuple(_floats(swp, "values", "sweep")),
    )

    out = _section(raw, "output")
    output = OutputConfig(
        report=str(out.get("report", "")),
        sweep=str(out.get("sweep", "")),
        workers=max(1, _read(out, "workers", 1, int, "output")),
    )

    return SmotConfig(
        path=config_path,
        problem=problem,
        marginals=marginals,
        payoff=_payoff(_section(raw, "payoff"), "payoff"),
        prediction_set=prediction_set,
        proxies=proxies,
        solver=solver,
        pricing=pricing,
        sweep=sweep,
        output=output,
    )


def parse_sweep(text: str) -> SweepConfig:
    """``AXIS=v1,v2,...`` as given on the command line."""
    axis, sep, rest = text.partition("=")
    axis = axis.strip()
    if not sep or axis not in _SWEEP_AXES:
        msg = f"--sweep: expected AXIS=v1,v2,... with AXIS in {', '.join(_SWEEP_AXES)}"
        raise ConfigError(msg)
    try:
        values = tuple(float(v) for v in rest.split(",") if v.strip())
    except ValueError as exc:
        msg = f"--sweep: values must be numbers, got {rest!r}"
        raise ConfigError(msg) from exc
    if not values:
        raise ConfigError("--sweep: no values given")
    return SweepConfig(axis, values)


def parse_routes(text: str) -> tuple[str, ...]:
    routes = tuple(r.strip() for r in text.split(",") if r.strip())
    bad = [r for r in routes if r not in _ROUTES]
    if bad or not routes:
        msg = f"--routes: {text!r} must be drawn from {', '.join(_ROUTES)}"
        raise ConfigError(msg)
    return routes


def config_hash(path: Path | str, overrides: dict[str, Any] | None = None) -> str:
    """SHA-256 of the raw file bytes plus the canonical JSON of CLI overrides."""
    digest = hashlib.sha256(Path(path).read_bytes())
    digest.update(json.dumps(overrides or {}, sort_keys=True, default=str).encode())
    return digest.hexdigest()


def init_config(path: Path) -> Path:
    """Write a commented template problem file. Raises if it already exists."""
    if path.exists():
        msg = f"config already exists at {path}"
        raise FileExistsError(msg)
    content = """\
# Robust pricing problem: forward on S1 in a put market with a bubble.

[problem]
spot = 100.0
maturities = 1
instrument = "put"   # "call" | "put"
# seed = 0           # random_table payoffs

[[marginals]]
source = "pmf"       # "pmf" | "call_curve" | "put_curve" | "lognormal"
points = [80.0, 90.0, 100.0]
weights = [0.3, 0.4, 0.3]
# strikes = [80.0, 90.0, 100.0]    # call_curve / put_curve
# prices = [...]
# mean = 90.0                      # lognormal
# log_variance = 0.04
# grid_size = 12
# truncation_quantile = 0.99

[payoff]
kind = "forward"     # asian | lookback_knock_in | forward | european_call | european_put
# strike = 95.0      # | power_call | basket | table | random_table
# barrier = 90.0
# maturity = 1       # 0 = last maturity

[prediction_set]
kind = "all_paths"   # max_abs_increment | bounded_squared_variation | max_drawdown | table
# threshold = 20.0

[proxies]
count = 3
growth_factor = 10.0
# path_cap = 200000

# [solver]
# pivot_tol = 1e-10
# feas_tol = 1e-9
# max_iterations = 50000
# pivot_rule = "dantzig"
# highs_fallback = true

[pricing]
routes = ["direct", "beta"]   # direct | beta | gammaN
# n_schedule = [1, 10, 100, 1000]
# delta_sign = "nonnegative"  # call markets may use "free"

# [sweep]
# axis = "proxy_factor"       # proxy_factor | grid_size | N
# values = [10, 100, 1000]

[output]
report = "report.json"
# sweep = "sweep.csv"
# workers = 1
"""
    path.write_text(content)
    return path
