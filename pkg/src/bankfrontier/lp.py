"""Dense linear-programming core: two-phase primal simplex with Bland's rule.

Everything downstream (the DEA scorers) solves desk-scale programs, at most
a few hundred variables and a few dozen rows, so a dense tableau with the
lowest-index anti-cycling rule is the simplest thing that is provably
terminating and bit-deterministic. No sparsity, no warm starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InputError

# Module-wide tolerances; downstream modules inherit these.
FEASIBILITY_TOL = 1e-9
REDUCED_COST_TOL = 1e-9
COMPARISON_TOL = 1e-6

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"

_SENSES = ("<=", ">=", "=")


@dataclass(frozen=True)
class LinearProgram:
    """min (or max) c @ x subject to A x (<=|>=|=) b and box bounds on x.

    Bounds default to x >= 0 with no upper limit. Infinite bounds are
    expressed with -inf/+inf.
    """

    c: np.ndarray
    a: np.ndarray
    senses: tuple[str, ...]
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    maximize: bool = False

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        n = c.shape[0]
        m = a.shape[0]
        if a.size == 0:
            a = a.reshape(0, n)
        if a.shape != (m, n) or b.shape[0] != m or len(self.senses) != m:
            raise DimensionError(
                f"inconsistent program dimensions: A {a.shape}, c {n}, "
                f"b {b.shape[0]}, senses {len(self.senses)}"
            )
        for s in self.senses:
            if s not in _SENSES:
                raise InputError(f"unknown constraint sense {s!r}")
        lower = (
            np.zeros(n) if self.lower is None
            else np.asarray(self.lower, dtype=float)
        )
        upper = (
            np.full(n, np.inf) if self.upper is None
            else np.asarray(self.upper, dtype=float)
        )
        if lower.shape[0] != n or upper.shape[0] != n:
            raise DimensionError("bound vectors must match variable count")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(a))
                and np.all(np.isfinite(b))):
            raise InputError("A, b, c must be finite")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise InputError("bounds may be infinite but not NaN")
        if np.any(lower > upper):
            raise InputError("every lower bound must be <= its upper bound")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "senses", tuple(self.senses))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class LpSolution:
    status: str
    objective_value: float | None
    primal_values: np.ndarray | None
    iterations: int


def dump_program(lp: LinearProgram) -> str:
    """Plain-text listing of a program, for troubleshooting only."""
    sense = "maximize" if lp.maximize else "minimize"
    lines = [f"{sense} " + " + ".join(f"{v:+.6g} x{j}" for j, v in enumerate(lp.c))]
    for i in range(lp.a.shape[0]):
        row = " + ".join(f"{v:+.6g} x{j}" for j, v in enumerate(lp.a[i]) if v != 0.0)
        lines.append(f"  {row or '0'} {lp.senses[i]} {lp.b[i]:.6g}")
    for j in range(lp.n_vars):
        lines.append(f"  {lp.lower[j]:.6g} <= x{j} <= {lp.upper[j]:.6g}")
    return "\n".join(lines)


def _pivot(tableau: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    piv = tableau[row]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, piv)
    # kill residual round-off in the pivot column
    tableau[:, col] = 0.0
    tableau[row, col] = 1.0


def _run_simplex(tableau, basis, costs, max_iter):
    """Minimize costs over the tableau in place. Returns (status, iterations).

    Entering and leaving variables follow Bland's lowest-index rule, which
    guarantees termination under degeneracy.
    """
    n = tableau.shape[1] - 1
    iters = 0
    while iters < max_iter:
        reduced = costs - costs[basis] @ tableau[:, :n]
        entering = -1
        for j in range(n):
            if reduced[j] < -REDUCED_COST_TOL:
                entering = j
                break
        if entering < 0:
            return OPTIMAL, iters
        col = tableau[:, entering]
        rows = np.flatnonzero(col > FEASIBILITY_TOL)
        if rows.size == 0:
            return UNBOUNDED, iters
        ratios = tableau[rows, -1] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + FEASIBILITY_TOL]
        leave = tied[np.argmin(basis[tied])]
        _pivot(tableau, leave, entering)
        basis[leave] = entering
        iters += 1
    raise RuntimeError(f"simplex did not terminate in {max_iter} pivots")


def solve(lp: LinearProgram, max_iter: int = 50_000) -> LpSolution:
    """Two-phase dense primal simplex.

    Internally converts to standard form (equality rows, variables >= 0):
    finite lower bounds are shifted out, upper-only variables are flipped,
    free variables are split, finite ranges gain an explicit row.
    """
    n = lp.n_vars
    c = -lp.c if lp.maximize else lp.c

    # variable substitution x = M z + offset, z >= 0
    cols: list[np.ndarray] = []   # columns of M in original-variable space
    offset = np.zeros(n)
    extra_rows: list[tuple[int, float]] = []  # (z-index, range width) for ranges
    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        e = np.zeros(n)
        if np.isfinite(lo):
            e[j] = 1.0
            offset[j] = lo
            cols.append(e)
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            e[j] = -1.0
            offset[j] = hi
            cols.append(e)
        else:
            e[j] = 1.0
            cols.append(e)
            e2 = np.zeros(n)
            e2[j] = -1.0
            cols.append(e2)
    mmat = np.column_stack(cols)            # n x nz
    nz = mmat.shape[1]

    a_z = lp.a @ mmat
    b_z = lp.b - lp.a @ offset
    c_z = c @ mmat
    senses = list(lp.senses)
    for zidx, width in extra_rows:
        row = np.zeros(nz)
        row[zidx] = 1.0
        a_z = np.vstack([a_z, row])
        b_z = np.append(b_z, width)
        senses.append("<=")
    m = a_z.shape[0]

    # slack/surplus columns, then b >= 0 normalization
    slack_cols = np.zeros((m, m))
    for i, s in enumerate(senses):
        if s == "<=":
            slack_cols[i, i] = 1.0
        elif s == ">=":
            slack_cols[i, i] = -1.0
    full = np.hstack([a_z, slack_cols])
    rhs = b_z.copy()
    neg = rhs < 0
    full[neg] *= -1.0
    rhs[neg] *= -1.0

    n_struct = full.shape[1]
    # phase 1: artificial identity basis on every row
    tableau = np.hstack([full, np.eye(m), rhs[:, None]])
    basis = np.arange(n_struct, n_struct + m)
    phase1_costs = np.concatenate([np.zeros(n_struct), np.ones(m)])
    status, it1 = _run_simplex(tableau, basis, phase1_costs, max_iter)
    if status != OPTIMAL:  # pragma: no cover - phase 1 is bounded below by 0
        raise RuntimeError("phase 1 cannot be unbounded")
    art_sum = phase1_costs[basis] @ tableau[:, -1]
    if art_sum > 1e-7:
        return LpSolution(INFEASIBLE, None, None, it1)

    # drive remaining artificial variables out of the basis
    drop_rows = []
    for i in range(m):
        if basis[i] >= n_struct:
            piv = -1
            for j in range(n_struct):
                if abs(tableau[i, j]) > 1e-8:
                    piv = j
                    break
            if piv < 0:
                drop_rows.append(i)   # redundant row
            else:
                _pivot(tableau, i, piv)
                basis[i] = piv
    if drop_rows:
        keep = [i for i in range(m) if i not in drop_rows]
        tableau = tableau[keep]
        basis = basis[keep]

    tableau = np.hstack([tableau[:, :n_struct], tableau[:, -1:]])
    phase2_costs = np.concatenate([c_z, np.zeros(m)])[:n_struct]
    status, it2 = _run_simplex(tableau, basis, phase2_costs, max_iter)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, None, None, it1 + it2)

    z = np.zeros(n_struct)
    z[basis] = tableau[:, -1]
    x = mmat @ z[:nz] + offset
    obj = float(lp.c @ x)
    return LpSolution(OPTIMAL, obj, x, it1 + it2)
