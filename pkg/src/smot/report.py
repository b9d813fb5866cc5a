"""JSON run reports and sweep CSVs."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

if TYPE_CHECKING:
    from pathlib import Path

    from smot.marginals import ConditionReport, OrderReport
    from smot.paths import PathLattice
    from smot.pricing import ArbitrageCertificate, DualityReport

SWEEP_HEADER = ("axis", "P", "V", "gap", "status")


def clean(obj: Any) -> Any:
    """Plain JSON values: numpy scalars unwrapped, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, list | tuple):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def run_report(
    *,
    config_hash: str,
    conditions: ConditionReport,
    order: OrderReport | None = None,
    duality: DualityReport | None = None,
    lattice: PathLattice | None = None,
    certificate: ArbitrageCertificate | None = None,
    growth_bound: float | None = None,
    timings: dict[str, float] | None = None,
) -> dict[str, Any]:
    """Assemble the report; everything but ``timings`` is a function of the config."""
    return clean(
        {
            "config_hash": config_hash,
            "conditions": conditions.to_dict(),
            "order": order.to_dict() if order else None,
            "duality": duality.to_dict(lattice) if duality else None,
            "arbitrage": certificate.to_dict() if certificate else None,
            "growth_bound": growth_bound,
            "timings": timings or {},
        }
    )


def dumps(report: dict[str, Any]) -> str:
    return json.dumps(clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(report: dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(report))
    return path


@dataclass(frozen=True)
class SweepRow:
    axis: float
    p: float
    v: float
    status: str = "ok"

    @property
    def gap(self) -> float:
        return self.v - self.p

    def cells(self) -> list[str]:
        return [f"{self.axis:.17g}", f"{self.p:.17g}", f"{self.v:.17g}", f"{self.gap:.17g}", self.status]


def write_sweep(rows: list[SweepRow], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SWEEP_HEADER)
        writer.writerows(row.cells() for row in rows)
    return path
