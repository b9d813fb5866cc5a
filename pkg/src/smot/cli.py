"""smot CLI: robust superhedging and supermartingale transport on a lattice.

Commands:
    smot init PATH             write a commented problem file
    smot check --config PATH   market conditions and marginal order only
    smot run --config PATH     price, hedge and report (JSON via --out)
    smot sweep --config PATH   P / V / gap along one axis (CSV)

Exit codes: 0 success, 2 arbitrage detected, 3 input problem, 4 solver failure.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any

import click

from smot.config import SmotConfig, init_config, load_config, parse_routes, parse_sweep
from smot.errors import ArbitrageDetected, ConfigError, SmotError
from smot.report import write_report, write_sweep
from smot.runner import arbitrage_report, check, run, sweep

if TYPE_CHECKING:
    from collections.abc import Callable

    from smot.config import SweepConfig
    from smot.pricing import DualityReport
    from smot.report import SweepRow
    from smot.runner import CheckResult

_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


class SmotClickError(click.ClickException):
    """A SmotError on stderr with the exit code its class maps to."""

    def __init__(self, exc: SmotError) -> None:
        super().__init__(str(exc))
        self.exit_code = exc.exit_code


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING, format=_LOG_FORMAT)


def _load_cfg(path: str) -> SmotConfig:
    try:
        return load_config(path)
    except SmotError as exc:
        raise SmotClickError(exc) from exc


def _config_option(fn: Callable[..., Any]) -> Callable[..., Any]:
    return click.option(
        "--config",
        "config_path",
        required=True,
        type=click.Path(),
        help="Problem file (TOML)",
    )(fn)


def _verbose_option(fn: Callable[..., Any]) -> Callable[..., Any]:
    return click.option("--verbose", "-v", is_flag=True, help="Debug logging on stderr")(fn)


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.10g}"


def _print_checks(result: CheckResult) -> None:
    from rich.console import Console
    from rich.table import Table

    table = Table(title=f"{result.market.kind} market, spot {result.market.spot:g}")
    table.add_column("Clause", style="cyan", no_wrap=True)
    table.add_column("Status")
    table.add_column("Witness", style="dim")
    for name, verdict in result.conditions.clauses.items():
        w = verdict.witness
        detail = (
            f"{w.detail}: maturities {list(w.maturities)}, strikes {list(w.strikes)}, by {w.magnitude:.3g}"
            if w
            else ""
        )
        table.add_row(name, "[green]ok[/green]" if verdict.passed else "[red]fail[/red]", detail)
    if result.order is not None:
        order = result.order
        detail = "" if order.passed else f"{len(order.violations) + len(order.mean_violations)} violations"
        table.add_row("order", "[green]ok[/green]" if order.passed else "[red]fail[/red]", detail)
        table.add_row("means", "", ", ".join(f"{m:.6g}" for m in order.means))
    Console().print(table)


def _print_report(duality: DualityReport) -> None:
    from rich.console import Console
    from rich.table import Table

    table = Table(title=f"{duality.payoff} on {duality.mask} ({duality.kind} market)")
    table.add_column("Quantity", style="cyan", no_wrap=True)
    table.add_column("Value", justify="right")
    table.add_row("P (sup E[G])", _fmt(duality.p))
    table.add_row("V (superhedge)", _fmt(duality.v))
    table.add_row("gap", _fmt(duality.gap))
    if duality.beta_route is not None:
        table.add_row(f"V via beta ({duality.beta_route.source})", _fmt(duality.beta_route.value))
        table.add_row("beta0", _fmt(duality.beta_route.beta0))
    if duality.gamma is not None:
        for row in duality.gamma.rows:
            table.add_row(f"gamma_N, N={row.n_penalty:g}", _fmt(row.gamma))
    table.add_row("forward f0 = m_n", _fmt(duality.forward))
    for i, (b, flagged) in enumerate(zip(duality.bubbles, duality.bubble_flags, strict=False), start=1):
        table.add_row(f"s0 - m{i}", f"{_fmt(b)} (bubble)" if flagged else _fmt(b))
    if duality.dominated_by_zero_strike_call is not None:
        table.add_row("s0 > c_n(0)", str(duality.dominated_by_zero_strike_call))
    table.add_row("lattice", f"{list(duality.lattice_shape)} ({list(duality.n_mass)} mass)")
    Console().print(table)


def _print_sweep(rows: list[SweepRow], axis: str) -> None:
    from rich.console import Console
    from rich.table import Table

    table = Table(title=f"sweep over {axis}")
    for name in (axis, "P", "V", "gap", "status"):
        table.add_column(name, justify="right" if name != "status" else "left")
    for row in rows:
        table.add_row(f"{row.axis:g}", _fmt(row.p), _fmt(row.v), _fmt(row.gap), row.status)
    Console().print(table)


def _run_sweep(cfg: SmotConfig, spec: SweepConfig, out: Path, workers: int) -> None:
    rows = sweep(cfg, spec, workers)
    write_sweep(rows, out)
    _print_sweep(rows, spec.axis)
    click.echo(f"Wrote {out}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


@click.group()
@click.version_option(package_name="smot")
def cli() -> None:
    """smot: robust superhedging under a no-short-selling constraint."""


@cli.command()
@click.argument("path", type=click.Path(dir_okay=False))
def init(path: str) -> None:
    """Write a commented problem file."""
    try:
        created = init_config(Path(path))
        click.echo(f"Created {created}")
    except FileExistsError:
        click.echo(f"{path} already exists, skipping init")


@cli.command("check")
@_config_option
@_verbose_option
def check_cmd(config_path: str, verbose: bool) -> None:
    """Check the no-arbitrage conditions and the marginal order."""
    _setup_logging(verbose)
    cfg = _load_cfg(config_path)
    try:
        result = check(cfg)
    except SmotError as exc:
        raise SmotClickError(exc) from exc
    _print_checks(result)
    if not result.passed:
        raise click.exceptions.Exit(3)


@cli.command("run")
@_config_option
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Report path (JSON)")
@click.option("--sweep", "sweep_spec", default=None, help="AXIS=v1,v2,... also run a sweep")
@click.option("--routes", default=None, help="Comma list from direct,beta,gammaN")
@click.option("--seed", type=int, default=None, help="Seed for random_table payoffs")
@_verbose_option
def run_cmd(
    config_path: str,
    out: str | None,
    sweep_spec: str | None,
    routes: str | None,
    seed: int | None,
    verbose: bool,
) -> None:
    """Price, hedge and report one problem."""
    _setup_logging(verbose)
    cfg = _load_cfg(config_path)
    overrides: dict[str, Any] = {}
    try:
        if routes is not None:
            cfg.pricing.routes = parse_routes(routes)
            overrides["routes"] = list(cfg.pricing.routes)
        if seed is not None:
            cfg.problem.seed = seed
            overrides["seed"] = seed
        sweep_cfg = parse_sweep(sweep_spec) if sweep_spec else None
        if sweep_cfg is not None:
            overrides["sweep"] = sweep_spec
    except SmotError as exc:
        raise SmotClickError(exc) from exc

    report_path = Path(out) if out else Path(cfg.output.report) if cfg.output.report else None
    try:
        result = run(cfg, overrides)
    except ArbitrageDetected as exc:
        if report_path is not None:
            write_report(arbitrage_report(cfg, exc, overrides), report_path)
        click.echo(f"Arbitrage: {exc}", err=True)
        raise click.exceptions.Exit(exc.exit_code) from exc
    except SmotError as exc:
        raise SmotClickError(exc) from exc

    _print_report(result.duality)
    if report_path is not None:
        write_report(result.report, report_path)
        click.echo(f"Wrote {report_path}")

    if sweep_cfg is not None:
        target = Path(cfg.output.sweep) if cfg.output.sweep else Path("sweep.csv")
        _run_sweep(cfg, sweep_cfg, target, cfg.output.workers)


@cli.command("sweep")
@_config_option
@click.option("--sweep", "sweep_spec", default=None, help="AXIS=v1,v2,... (default: [sweep] table)")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path")
@click.option("--workers", type=int, default=None, help="Worker processes")
@_verbose_option
def sweep_cmd(
    config_path: str,
    sweep_spec: str | None,
    out: str | None,
    workers: int | None,
    verbose: bool,
) -> None:
    """P, V and gap along proxy_factor, grid_size or N."""
    _setup_logging(verbose)
    cfg = _load_cfg(config_path)
    try:
        spec = parse_sweep(sweep_spec) if sweep_spec else cfg.sweep
        if not spec.axis or not spec.values:
            msg = "no sweep given: pass --sweep or add a [sweep] table"
            raise ConfigError(msg)
        target = Path(out or cfg.output.sweep or "sweep.csv")
        _run_sweep(cfg, spec, target, workers or cfg.output.workers)
    except SmotError as exc:
        raise SmotClickError(exc) from exc


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def main() -> None:
    cli(standalone_mode=True)


if __name__ == "__main__":
    main()
