"""Dense two-phase simplex with dual multipliers and Farkas certificates.

Problems are stated as

    min | max   c @ x
    s.t.        a_eq @ x == b_eq
                a_ub @ x <= b_ub
                x[j] >= 0 unless free[j]

and solved on a full tableau.  Free variables are split into positive and
negative parts, every inequality gets a slack, rows are equilibrated by their
largest structural coefficient and flipped so the right-hand side is
nonnegative.  Phase 1 minimises the sum of artificials; when it stops above
zero the phase-1 multipliers are mapped back to the original rows as a Farkas
ray.  Optimal points are refactored from the original columns of the final
basis and checked against the raw data before they are returned.

Sign conventions for the returned multipliers ``y = [y_eq, y_ub]``:

    min problems:  a.T @ y <= c  on nonnegative columns, == c on free ones,
                   y_ub <= 0,  b @ y == optimum
    max problems:  a.T @ y >= c  on nonnegative columns, == c on free ones,
                   y_ub >= 0,  b @ y == optimum

A Farkas ray ``w`` (status INFEASIBLE) satisfies ``w_ub <= 0``,
``a.T @ w <= 0`` on nonnegative columns, ``== 0`` on free columns and
``b @ w > 0``; it is scaled to unit max-norm.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Literal

import numpy as np

from smot.errors import InputError, IterationLimitExceededError, NumericalBreakdownError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

log = logging.getLogger("smot.lp")

_DEGENERATE_RUN_BEFORE_BLAND = 50
_TINY_FRACTION = 1e-3  # entries below pivot_tol * this count as exact zeros


class LpStatus(enum.StrEnum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class SolverOptions:
    pivot_tol: float = 1e-10
    feas_tol: float = 1e-9
    dual_tol: float = 1e-8
    max_iterations: int = 50_000
    pivot_rule: Literal["dantzig", "bland"] = "dantzig"
    equilibrate: bool = True
    highs_fallback: bool = True


# ---------------------------------------------------------------------------
# Problem / solution values
# ---------------------------------------------------------------------------


def _vector(value: ArrayLike | None, size: int | None, name: str) -> NDArray[np.float64]:
    arr = np.zeros(0 if size is None else size) if value is None else np.asarray(value, dtype=float)
    if arr.ndim != 1:
        msg = f"{name} must be one-dimensional, got shape {arr.shape}"
        raise InputError(msg)
    if size is not None and arr.size != size:
        msg = f"{name} has {arr.size} entries, expected {size}"
        raise InputError(msg)
    return arr


def _matrix(value: ArrayLike | None, n_cols: int, name: str) -> NDArray[np.float64]:
    if value is None:
        return np.zeros((0, n_cols))
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, n_cols)
    if arr.ndim != 2 or arr.shape[1] != n_cols:
        msg = f"{name} must have {n_cols} columns, got shape {arr.shape}"
        raise InputError(msg)
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LpProblem:
    """Immutable LP in the form described in the module docstring.

    Use :meth:`build`; it validates shapes and finiteness and freezes the
    arrays so a problem can be shared between threads.
    """

    c: NDArray[np.float64]
    a_eq: NDArray[np.float64]
    b_eq: NDArray[np.float64]
    a_ub: NDArray[np.float64]
    b_ub: NDArray[np.float64]
    free: NDArray[np.bool_]
    sense: Literal["min", "max"] = "min"

    @classmethod
    def build(
        cls,
        c: ArrayLike,
        *,
        a_eq: ArrayLike | None = None,
        b_eq: ArrayLike | None = None,
        a_ub: ArrayLike | None = None,
        b_ub: ArrayLike | None = None,
        free: ArrayLike | None = None,
        sense: Literal["min", "max"] = "min",
    ) -> LpProblem:
        c_arr = _vector(c, None, "c")
        n = c_arr.size
        a_eq_arr = _matrix(a_eq, n, "a_eq")
        a_ub_arr = _matrix(a_ub, n, "a_ub")
        b_eq_arr = _vector(b_eq, a_eq_arr.shape[0], "b_eq")
        b_ub_arr = _vector(b_ub, a_ub_arr.shape[0], "b_ub")
        free_arr = np.zeros(n, dtype=bool) if free is None else np.asarray(free, dtype=bool)
        if free_arr.shape != (n,):
            msg = f"free must have {n} entries, got shape {free_arr.shape}"
            raise InputError(msg)
        if sense not in ("min", "max"):
            msg = f"sense must be 'min' or 'max', got {sense!r}"
            raise InputError(msg)
        for name, arr in (
            ("c", c_arr),
            ("a_eq", a_eq_arr),
            ("b_eq", b_eq_arr),
            ("a_ub", a_ub_arr),
            ("b_ub", b_ub_arr),
        ):
            if not np.all(np.isfinite(arr)):
                msg = f"{name} contains non-finite entries"
                raise InputError(msg)
        return cls(
            c=_freeze(c_arr),
            a_eq=_freeze(a_eq_arr),
            b_eq=_freeze(b_eq_arr),
            a_ub=_freeze(a_ub_arr),
            b_ub=_freeze(b_ub_arr),
            free=_freeze(free_arr),
            sense=sense,
        )

    @property
    def n_vars(self) -> int:
        return int(self.c.size)

    @property
    def n_eq(self) -> int:
        return int(self.a_eq.shape[0])

    @property
    def n_ub(self) -> int:
        return int(self.a_ub.shape[0])

    @property
    def a(self) -> NDArray[np.float64]:
        return np.vstack([self.a_eq, self.a_ub])

    @property
    def b(self) -> NDArray[np.float64]:
        return np.concatenate([self.b_eq, self.b_ub])


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    x: NDArray[np.float64] | None
    objective: float
    y: NDArray[np.float64] | None = None
    farkas_ray: NDArray[np.float64] | None = None
    iterations: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@dataclass(frozen=True)
class LpDiagnostics:
    eq_residual: float
    ub_violation: float
    bound_violation: float
    duality_mismatch: float
    complementarity: float
    dual_infeasibility: float

    def worst(self) -> float:
        return max(
            self.eq_residual,
            self.ub_violation,
            self.bound_violation,
            self.duality_mismatch,
            self.complementarity,
            self.dual_infeasibility,
        )

    def to_dict(self) -> dict[str, float]:
        return {
            "eq_residual": self.eq_residual,
            "ub_violation": self.ub_violation,
            "bound_violation": self.bound_violation,
            "duality_mismatch": self.duality_mismatch,
            "complementarity": self.complementarity,
            "dual_infeasibility": self.dual_infeasibility,
        }


# ---------------------------------------------------------------------------
# Tableau
# ---------------------------------------------------------------------------


class _Tableau:
    """Standard-form tableau plus the bookkeeping to map results back."""

    def __init__(self, problem: LpProblem, options: SolverOptions) -> None:
        self.problem = problem
        self.options = options

        free_idx = np.flatnonzero(problem.free)
        a = problem.a
        b = problem.b
        m = a.shape[0]
        self.m = m
        self.n_split = problem.n_vars + free_idx.size
        self.free_idx = free_idx

        struct = np.hstack([a, -a[:, free_idx]])
        c_struct = np.concatenate([problem.c, -problem.c[free_idx]])
        self.sign = 1.0 if problem.sense == "min" else -1.0

        if options.equilibrate and m:
            scale = np.abs(struct).max(axis=1) if struct.shape[1] else np.ones(m)
            scale[scale == 0.0] = 1.0
        else:
            scale = np.ones(m)
        self.row_scale = scale
        struct = struct / scale[:, None]
        b = b / scale

        flip = np.where(b < 0.0, -1.0, 1.0)
        self.row_flip = flip
        struct *= flip[:, None]
        b = b * flip

        n_ub = problem.n_ub
        slack = np.zeros((m, n_ub))
        slack[problem.n_eq + np.arange(n_ub), np.arange(n_ub)] = flip[problem.n_eq :]

        # Rows whose slack enters with +1 start with it basic; the rest need an artificial.
        slack_basic = np.zeros(m, dtype=bool)
        slack_basic[problem.n_eq :] = flip[problem.n_eq :] > 0
        art_rows = np.flatnonzero(~slack_basic)
        art = np.zeros((m, art_rows.size))
        art[art_rows, np.arange(art_rows.size)] = 1.0

        self.n_slack = n_ub
        self.n_art = art_rows.size
        self.first_art = self.n_split + n_ub
        self.a_full = np.hstack([struct, slack, art])
        self.b_std = b
        self.n_cols = self.a_full.shape[1]

        self.cost2 = np.concatenate([self.sign * c_struct, np.zeros(n_ub + self.n_art)])
        self.cost1 = np.concatenate([np.zeros(self.n_split + n_ub), np.ones(self.n_art)])

        slack_rows = np.flatnonzero(slack_basic)
        self.basis = np.empty(m, dtype=int)
        self.basis[slack_rows] = self.n_split + slack_rows - problem.n_eq
        self.basis[art_rows] = self.first_art + np.arange(art_rows.size)

        self.t = np.zeros((m + 1, self.n_cols + 1))
        self.t[:m, : self.n_cols] = self.a_full
        self.t[:m, -1] = b
        self.iterations = 0
        self.bland = options.pivot_rule == "bland"

    # -- pricing -------------------------------------------------------------

    def set_costs(self, cost: NDArray[np.float64]) -> None:
        row = np.zeros(self.n_cols + 1)
        row[: self.n_cols] = cost
        cb = cost[self.basis]
        nz = np.flatnonzero(cb)
        if nz.size:
            row -= cb[nz] @ self.t[nz, :]
        self.t[-1] = row

    def pivot(self, row: int, col: int) -> None:
        t = self.t
        t[row] /= t[row, col]
        factors = t[:, col].copy()
        factors[row] = 0.0
        nz = np.flatnonzero(factors)
        if nz.size:
            t[nz] -= np.outer(factors[nz], t[row])
        self.basis[row] = col
        self.iterations += 1

    def optimize(self, allowed: NDArray[np.bool_], opt_tol: float, phase: int) -> int | None:
        """Run simplex pivots; return None at optimum or the unbounded column."""
        opts = self.options
        m = self.m
        degenerate_run = 0
        bland = self.bland
        tiny = opts.pivot_tol * _TINY_FRACTION
        while True:
            if self.iterations >= opts.max_iterations:
                msg = f"simplex exceeded {opts.max_iterations} iterations in phase {phase}"
                raise IterationLimitExceededError(msg)
            d = self.t[-1, : self.n_cols]
            candidates = np.flatnonzero(allowed & (d < -opt_tol))
            if candidates.size == 0:
                return None
            if not bland:
                candidates = candidates[np.argsort(d[candidates], kind="stable")]

            rhs = np.maximum(self.t[:m, -1], 0.0)
            chosen: tuple[int, int, float] | None = None
            for col in candidates:
                column = self.t[:m, col]
                eligible = column > opts.pivot_tol
                if not eligible.any():
                    if (column > tiny).any():
                        continue
                    return int(col)
                rows = np.flatnonzero(eligible)
                ratios = rhs[rows] / column[rows]
                best = ratios.min()
                ties = rows[ratios <= best + 1e-12 * (1.0 + best)]
                if bland:
                    row = int(ties[np.argmin(self.basis[ties])])
                else:
                    row = int(ties[np.argmax(column[ties])])
                chosen = (row, int(col), float(best))
                break
            if chosen is None:
                msg = f"no pivot above pivot_tol={opts.pivot_tol} in phase {phase}"
                raise NumericalBreakdownError(msg)

            row, col, step = chosen
            self.pivot(row, col)
            if step <= 1e-12:
                degenerate_run += 1
                if not bland and degenerate_run >= _DEGENERATE_RUN_BEFORE_BLAND:
                    log.warning(
                        "phase %d: %d degenerate pivots in a row, switching to Bland's rule",
                        phase,
                        degenerate_run,
                    )
                    bland = True
            else:
                degenerate_run = 0

    # -- recovery ------------------------------------------------------------

    def basic_solution(self, cost: NDArray[np.float64]) -> tuple[np.ndarray, np.ndarray]:
        """Primal basic values and multipliers for the current basis."""
        m = self.m
        if m == 0:
            return np.zeros(self.n_cols), np.zeros(0)
        basis_matrix = self.a_full[:, self.basis]
        try:
            x_b = np.linalg.solve(basis_matrix, self.b_std)
            y = np.linalg.solve(basis_matrix.T, cost[self.basis])
        except np.linalg.LinAlgError:
            log.debug("basis matrix singular on refinement, refactoring by least squares")
            x_b = np.linalg.lstsq(basis_matrix, self.b_std, rcond=None)[0]
            y = np.linalg.lstsq(basis_matrix.T, cost[self.basis], rcond=None)[0]
        x_full = np.zeros(self.n_cols)
        x_full[self.basis] = x_b
        return x_full, y

    def to_original_rows(self, y_std: np.ndarray) -> np.ndarray:
        return y_std * self.row_flip / self.row_scale

    def to_original_x(self, x_full: np.ndarray) -> np.ndarray:
        n = self.problem.n_vars
        x = x_full[:n].copy()
        x[self.free_idx] -= x_full[n : self.n_split]
        return x

    def drive_out_artificials(self) -> None:
        opts = self.options
        for row in range(self.m):
            if self.basis[row] < self.first_art:
                continue
            entries = np.abs(self.t[row, : self.first_art])
            col = int(np.argmax(entries)) if entries.size else -1
            if col < 0 or entries[col] <= opts.pivot_tol:
                log.debug("row %d is redundant, artificial stays basic at zero", row)
                continue
            self.t[row, -1] = 0.0
            self.pivot(row, col)


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def solve_lp(problem: LpProblem, options: SolverOptions | None = None) -> LpSolution:
    """Solve ``problem``; deterministic for fixed problem and options.

    An optimum is only returned once its residuals, recomputed from the raw
    problem data, are within ``feas_tol`` / ``dual_tol``.  A tableau optimum
    that fails the check is re-solved with Bland's rule, then with HiGHS when
    ``highs_fallback`` is set; if nothing passes, NumericalBreakdownError.
    """
    opts = options or SolverOptions()
    sol = _simplex(problem, opts)
    if not sol.is_optimal or _within_tolerance(problem, sol, opts):
        return sol
    iterations = sol.iterations
    if opts.pivot_rule != "bland":
        log.warning("tableau optimum fails its residual check, re-solving with Bland's rule")
        retry = _simplex(problem, replace(opts, pivot_rule="bland"))
        iterations += retry.iterations
        if retry.is_optimal and _within_tolerance(problem, retry, opts):
            return replace(retry, iterations=iterations)
    if opts.highs_fallback:
        log.warning("tableau optimum fails its residual check, cross-solving with HiGHS")
        highs = _solve_highs(problem, opts)
        if highs is not None and _within_tolerance(problem, highs, opts):
            return replace(highs, iterations=iterations + highs.iterations)
    diag = check_solution(problem, sol)
    msg = (
        f"simplex optimum fails its residual check after {iterations} pivots "
        f"(primal {max(diag.eq_residual, diag.ub_violation, diag.bound_violation):.3e}, "
        f"duality {diag.duality_mismatch:.3e}, dual {diag.dual_infeasibility:.3e})"
    )
    raise NumericalBreakdownError(msg)


def _within_tolerance(problem: LpProblem, solution: LpSolution, opts: SolverOptions) -> bool:
    """Primal residuals within feas_tol and duality within dual_tol, relative to the data scale."""
    if solution.x is None or solution.y is None:
        return False
    diag = check_solution(problem, solution)
    x = solution.x
    y = solution.y
    row_scale = 1.0 + float(
        max(
            np.abs(problem.b).max(initial=0.0),
            (np.abs(problem.a) @ np.abs(x)).max(initial=0.0),
        )
    )
    col_scale = 1.0 + float(
        max(
            np.abs(problem.c).max(initial=0.0),
            (np.abs(problem.a.T) @ np.abs(y)).max(initial=0.0),
        )
    )
    primal_ok = max(diag.eq_residual, diag.ub_violation) <= opts.feas_tol * row_scale
    bounds_ok = diag.bound_violation <= opts.feas_tol * (1.0 + float(np.abs(x).max(initial=0.0)))
    dual_ok = diag.dual_infeasibility <= opts.dual_tol * col_scale
    gap_ok = diag.duality_mismatch <= opts.dual_tol * (1.0 + abs(solution.objective))
    if not (primal_ok and bounds_ok and dual_ok and gap_ok):
        log.debug("residual check failed: %s", diag.to_dict())
        return False
    return True


def _solve_highs(problem: LpProblem, opts: SolverOptions) -> LpSolution | None:
    """Dual simplex from HiGHS, with multipliers mapped onto this module's signs."""
    from scipy.optimize import linprog

    sign = 1.0 if problem.sense == "min" else -1.0
    bounds = [(None, None) if f else (0.0, None) for f in problem.free]
    res = linprog(
        sign * problem.c,
        A_ub=problem.a_ub if problem.n_ub else None,
        b_ub=problem.b_ub if problem.n_ub else None,
        A_eq=problem.a_eq if problem.n_eq else None,
        b_eq=problem.b_eq if problem.n_eq else None,
        bounds=bounds,
        method="highs-ds",
        options={
            "primal_feasibility_tolerance": max(opts.feas_tol, 1e-10),
            "dual_feasibility_tolerance": max(opts.dual_tol, 1e-10),
            "maxiter": opts.max_iterations,
        },
    )
    if res.status != 0 or res.x is None:
        log.warning("HiGHS returned status %d: %s", res.status, res.message)
        return None
    y_eq = np.asarray(res.eqlin.marginals, dtype=float) if problem.n_eq else np.zeros(0)
    y_ub = np.asarray(res.ineqlin.marginals, dtype=float) if problem.n_ub else np.zeros(0)
    x = _refine(problem, np.asarray(res.x, dtype=float))
    return LpSolution(
        status=LpStatus.OPTIMAL,
        x=x,
        objective=float(problem.c @ x),
        y=sign * np.concatenate([y_eq, y_ub]),
        iterations=int(res.nit),
    )


def _refine(problem: LpProblem, x: NDArray[np.float64]) -> NDArray[np.float64]:
    """One least-squares correction of ``x`` on its equality and near-tight rows.

    HiGHS meets its tolerances on a scaled copy of the problem; rows with large
    coefficients can keep absolute residuals well above ``feas_tol``.
    """
    a = problem.a
    slack = problem.b - a @ x
    scale = 1.0 + np.abs(a) @ np.abs(x) + np.abs(problem.b)
    active = np.ones(a.shape[0], dtype=bool)
    active[problem.n_eq :] = slack[problem.n_eq :] <= 1e-6 * scale[problem.n_eq :]
    support = problem.free | (x > 1e-9 * (1.0 + float(np.abs(x).max(initial=0.0))))
    if not active.any() or not support.any():
        return x
    step = np.linalg.lstsq(a[np.ix_(active, support)], slack[active], rcond=None)[0]
    refined = x.copy()
    refined[support] += step
    before = float(np.abs(slack[active]).max())
    after = float(np.abs((problem.b - a @ refined)[active]).max())
    return refined if after < before else x


def _simplex(problem: LpProblem, opts: SolverOptions) -> LpSolution:
    tab = _Tableau(problem, opts)
    log.debug(
        "solve_lp: %d vars (%d split), %d eq rows, %d ub rows, %d artificials",
        problem.n_vars,
        tab.n_split,
        problem.n_eq,
        problem.n_ub,
        tab.n_art,
    )
    non_art = np.zeros(tab.n_cols, dtype=bool)
    non_art[: tab.first_art] = True

    if tab.n_art:
        tab.set_costs(tab.cost1)
        tab.optimize(np.ones(tab.n_cols, dtype=bool), opts.pivot_tol, phase=1)
        infeasibility = -tab.t[-1, -1]
        threshold = opts.feas_tol * max(1.0, float(np.abs(tab.b_std).max(initial=0.0)))
        if infeasibility > threshold:
            _, y1 = tab.basic_solution(tab.cost1)
            ray = tab.to_original_rows(y1)
            norm = float(np.abs(ray).max(initial=0.0))
            if norm > 0.0:
                ray = ray / norm
            log.debug("phase 1 stopped at %.3e: infeasible", infeasibility)
            return LpSolution(
                status=LpStatus.INFEASIBLE,
                x=None,
                objective=float("nan"),
                farkas_ray=ray,
                iterations=tab.iterations,
            )
        tab.drive_out_artificials()

    tab.set_costs(tab.cost2)
    opt_tol = opts.pivot_tol * max(1.0, float(np.abs(tab.cost2).max(initial=0.0)))
    unbounded_col = tab.optimize(non_art, opt_tol, phase=2)
    if unbounded_col is not None:
        log.debug("phase 2: column %d has no positive entry, unbounded", unbounded_col)
        return LpSolution(
            status=LpStatus.UNBOUNDED,
            x=None,
            objective=-tab.sign * float("inf"),
            iterations=tab.iterations,
        )

    x_full, y_std = tab.basic_solution(tab.cost2)
    x = tab.to_original_x(x_full)
    y = tab.sign * tab.to_original_rows(y_std)
    objective = float(problem.c @ x)
    log.debug("optimal after %d pivots, objective %.12g", tab.iterations, objective)
    return LpSolution(
        status=LpStatus.OPTIMAL,
        x=x,
        objective=objective,
        y=y,
        iterations=tab.iterations,
    )


def check_solution(problem: LpProblem, solution: LpSolution) -> LpDiagnostics:
    """Recompute every residual of an optimal solution from the raw problem data."""
    if solution.status is not LpStatus.OPTIMAL or solution.x is None or solution.y is None:
        msg = f"check_solution needs an optimal solution, got {solution.status}"
        raise ValueError(msg)
    x = solution.x
    y = solution.y
    sign = 1.0 if problem.sense == "min" else -1.0
    nonneg = ~problem.free

    eq_res = np.abs(problem.a_eq @ x - problem.b_eq)
    ub_slack = problem.b_ub - problem.a_ub @ x
    y_hat = sign * y
    y_ub = y_hat[problem.n_eq :]
    reduced = sign * problem.c - problem.a.T @ y_hat

    return LpDiagnostics(
        eq_residual=float(eq_res.max(initial=0.0)),
        ub_violation=float(np.maximum(-ub_slack, 0.0).max(initial=0.0)),
        bound_violation=float(np.maximum(-x[nonneg], 0.0).max(initial=0.0)),
        duality_mismatch=float(abs(problem.c @ x - problem.b @ y)),
        complementarity=float(
            max(
                np.abs(x[nonneg] * reduced[nonneg]).max(initial=0.0),
                np.abs(y_ub * ub_slack).max(initial=0.0),
            )
        ),
        dual_infeasibility=float(
            max(
                np.maximum(-reduced[nonneg], 0.0).max(initial=0.0),
                np.abs(reduced[problem.free]).max(initial=0.0),
                np.maximum(y_ub, 0.0).max(initial=0.0),
            )
        ),
    )


def farkas_residuals(problem: LpProblem, ray: NDArray[np.float64]) -> tuple[float, float]:
    """Return (worst violation of the ray's sign conditions, b @ ray)."""
    w_ub = ray[problem.n_eq :]
    wa = problem.a.T @ ray
    violation = max(
        np.maximum(w_ub, 0.0).max(initial=0.0),
        np.maximum(wa[~problem.free], 0.0).max(initial=0.0),
        np.abs(wa[problem.free]).max(initial=0.0),
    )
    return float(violation), float(problem.b @ ray)
