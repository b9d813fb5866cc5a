"""Exception hierarchy shared by the library and the CLI.

Every failure the CLI can report derives from :class:`SmotError` and carries the
process exit code it maps to:

    InputError   -> 3   ill-posed or infeasible input, config problems
    SolverError  -> 4   numerical failure inside the LP machinery
    ArbitrageDetected -> 2
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Any, ClassVar

if TYPE_CHECKING:
    from smot.pricing import ArbitrageCertificate


class SmotError(Exception):
    exit_code: ClassVar[int] = 1


class InputError(SmotError, ValueError):
    exit_code: ClassVar[int] = 3


class SolverError(SmotError, RuntimeError):
    exit_code: ClassVar[int] = 4


# ---------------------------------------------------------------------------
# Input problems
# ---------------------------------------------------------------------------


class ConfigError(InputError):
    """Config file could not be parsed or a field has the wrong shape."""


class GridError(InputError):
    pass


class MixedKindError(InputError):
    pass


class NegativeMassError(InputError):
    def __init__(self, msg: str, *, maturity: int, strike: float, mass: float) -> None:
        super().__init__(msg)
        self.maturity = maturity
        self.strike = strike
        self.mass = mass


class PathCountExceededError(InputError):
    pass


class EmptyMaskError(InputError):
    pass


class UnknownSpecError(InputError):
    pass


class NoAnalyticBetaError(InputError):
    pass


class NoTailProxiesError(InputError):
    pass


class GrowthBoundError(InputError):
    pass


class InfeasibleModelError(InputError):
    """No calibrated supermartingale law is supported on the prediction set."""

    def __init__(self, msg: str, *, farkas_ray: Any = None) -> None:
        super().__init__(msg)
        self.farkas_ray = farkas_ray


class UnboundedHedgeError(InputError):
    pass


class InfeasibleInputError(InputError):
    pass


class UnboundedGBetaError(InputError):
    pass


# ---------------------------------------------------------------------------
# Solver problems
# ---------------------------------------------------------------------------


class IterationLimitExceededError(SolverError):
    pass


class NumericalBreakdownError(SolverError):
    pass


class HedgeVerificationError(SolverError):
    def __init__(self, msg: str, *, worst_slack: float) -> None:
        super().__init__(msg)
        self.worst_slack = worst_slack


class CertificateVerificationError(SolverError):
    pass


# ---------------------------------------------------------------------------
# Arbitrage
# ---------------------------------------------------------------------------


class ArbitrageDetected(SmotError):  # noqa: N818
    exit_code: ClassVar[int] = 2

    def __init__(self, msg: str, certificate: ArbitrageCertificate) -> None:
        super().__init__(msg)
        self.certificate = certificate
