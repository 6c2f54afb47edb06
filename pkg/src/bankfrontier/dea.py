"""DEA efficiency models over bank cross-sections.

Radial input-oriented scores (CCR under constant returns, BCC under
variable returns) and slacks-based scores (SBM, SBM with an undesirable
output, and two-stage super-efficiency SBM). The fractional SBM program is
linearized by the Charnes-Cooper substitution; the super-efficiency stage
excludes the evaluated unit and searches the convex hull of the remaining
units for the nearest dominating reference point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError, DimensionError, InputError, SchemaError
from .lp import INFEASIBLE, OPTIMAL, LinearProgram, solve

CCR = "CCR"
BCC = "BCC"
SBM_VRS = "SBM_VRS"
SBM_UND_VRS = "SBM_UND_VRS"
SUPER_SBM_UND_VRS = "SUPER_SBM_UND_VRS"
MODELS = (CCR, BCC, SBM_VRS, SBM_UND_VRS, SUPER_SBM_UND_VRS)

SCORED = "Scored"
INFEASIBLE_SUPER = "InfeasibleSuper"
NOT_COMPARABLE = "NotComparable"

CRS = "CRS"
VRS = "VRS"

EFFICIENT_TOL = 1e-6


@dataclass(frozen=True)
class DeaProblem:
    """One frontier: m inputs, s1 desirable and s2 undesirable outputs
    observed on n DMUs. All data strictly positive (ratio normalizations
    divide by the evaluated DMU's own values)."""

    inputs: np.ndarray          # m x n
    goods: np.ndarray           # s1 x n
    bads: np.ndarray            # s2 x n
    dmu_labels: tuple[str, ...]
    returns_to_scale: str = VRS
    input_names: tuple[str, ...] = ()
    good_names: tuple[str, ...] = ()
    bad_names: tuple[str, ...] = ()
    years: tuple = ()

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        yg = np.atleast_2d(np.asarray(self.goods, dtype=float))
        yb = np.asarray(self.bads, dtype=float)
        yb = yb.reshape(0, x.shape[1]) if yb.size == 0 else np.atleast_2d(yb)
        n = x.shape[1]
        if yg.shape[1] != n or yb.shape[1] != n or len(self.dmu_labels) != n:
            raise DimensionError("inputs, outputs, and labels must agree on n")
        if n == 0 or x.shape[0] == 0 or yg.shape[0] == 0:
            raise DimensionError("need at least one DMU, one input, one desirable output")
        if self.returns_to_scale not in (CRS, VRS):
            raise InputError(f"returns_to_scale must be CRS or VRS, got {self.returns_to_scale!r}")
        for name, mat in (("inputs", x), ("goods", yg), ("bads", yb)):
            if mat.size and not (np.isfinite(mat).all() and (mat > 0).all()):
                raise DataError(f"{name} must be strictly positive and finite")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "goods", yg)
        object.__setattr__(self, "bads", yb)
        object.__setattr__(self, "dmu_labels", tuple(str(l) for l in self.dmu_labels))
        object.__setattr__(self, "input_names",
                           tuple(self.input_names) or tuple(f"x{i+1}" for i in range(x.shape[0])))
        object.__setattr__(self, "good_names",
                           tuple(self.good_names) or tuple(f"yg{i+1}" for i in range(yg.shape[0])))
        object.__setattr__(self, "bad_names",
                           tuple(self.bad_names) or tuple(f"yb{i+1}" for i in range(yb.shape[0])))
        object.__setattr__(self, "years",
                           tuple(self.years) if len(self.years) else (None,) * n)
        if len(self.years) != n:
            raise DimensionError("years metadata must have one entry per DMU")

    @property
    def n(self) -> int:
        return self.inputs.shape[1]

    @property
    def m(self) -> int:
        return self.inputs.shape[0]

    @property
    def s1(self) -> int:
        return self.goods.shape[0]

    @property
    def s2(self) -> int:
        return self.bads.shape[0]


@dataclass(frozen=True)
class SlackProfile:
    input_slacks: tuple[float, ...]
    output_shortfalls: tuple[float, ...]
    bad_output_excesses: tuple[float, ...]

    def max_normalized(self, problem: DeaProblem, dmu: int) -> float:
        """Largest slack relative to the DMU's own data value."""
        parts = []
        for s, v in zip(self.input_slacks, problem.inputs[:, dmu]):
            parts.append(s / v)
        for s, v in zip(self.output_shortfalls, problem.goods[:, dmu]):
            parts.append(s / v)
        for s, v in zip(self.bad_output_excesses, problem.bads[:, dmu]):
            parts.append(s / v)
        return max(parts) if parts else 0.0


@dataclass(frozen=True)
class DeaScore:
    dmu: str
    model: str
    value: float
    slacks: SlackProfile
    lambdas: tuple[float, ...]
    status: str = SCORED
    efficient: bool = False
    year: object = None


@dataclass(frozen=True)
class DeaModelSpec:
    model: str
    inputs: tuple[str, ...]
    goods: tuple[str, ...]
    bads: tuple[str, ...] = ()
    frontier_scope: str = "per_year"

    def __post_init__(self):
        if self.model not in MODELS:
            raise InputError(f"unknown model {self.model!r}")
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "goods", tuple(self.goods))
        object.__setattr__(self, "bads", tuple(self.bads))
        groups = (self.inputs, self.goods, self.bads)
        if not self.inputs or not self.goods:
            raise InputError("inputs and desirable outputs must be nonempty")
        combined = [c for g in groups for c in g]
        if len(set(combined)) != len(combined):
            raise InputError("input/output column sets must be disjoint")
        if self.model in (SBM_UND_VRS, SUPER_SBM_UND_VRS) and not self.bads:
            raise InputError(f"{self.model} requires at least one undesirable output")
        if self.model in (CCR, BCC, SBM_VRS) and self.bads:
            raise InputError(f"{self.model} takes undesirable outputs as inputs, not bads")
        if self.frontier_scope not in ("per_year", "pooled"):
            raise InputError(f"frontier_scope must be per_year or pooled")

    @property
    def returns_to_scale(self) -> str:
        return CRS if self.model == CCR else VRS


def default_model_spec(model: str, frontier_scope: str = "per_year") -> DeaModelSpec:
    """Standard bank input/output sets: four cost-side inputs, net profit
    as the desirable output, and non-performing loans either as a fifth
    input (radial and plain SBM) or as the undesirable output (UND models).
    """
    base_inputs = ("tier1", "interest_expense", "op_expense_ex_prov", "loss_provision")
    if model in (CCR, BCC, SBM_VRS):
        return DeaModelSpec(model=model, inputs=base_inputs + ("npl",),
                            goods=("net_profit",), bads=(), frontier_scope=frontier_scope)
    if model in (SBM_UND_VRS, SUPER_SBM_UND_VRS):
        return DeaModelSpec(model=model, inputs=base_inputs,
                            goods=("net_profit",), bads=("npl",),
                            frontier_scope=frontier_scope)
    raise InputError(f"unknown model {model!r}")


def build_dea_problem(panel, spec: DeaModelSpec, year=None,
                      shift_nonpositive: bool = False) -> DeaProblem:
    """Assemble one frontier's matrices from a panel.

    per_year scope takes the given year's cross-section (year required);
    pooled stacks every (bank, year) observation as its own DMU. DMUs are
    ordered by bank identifier (then year when pooled).
    """
    frame = panel.frame
    needed = list(spec.inputs + spec.goods + spec.bads)
    for col in needed:
        if col not in frame.columns:
            raise SchemaError(f"missing column {col!r}")
    if spec.frontier_scope == "per_year":
        if year is None:
            raise InputError("per_year scope requires a year")
        frame = frame[frame["year"] == int(year)]
        if frame.empty:
            raise DataError(f"no observations in year {year}: empty frontier")
        frame = frame.sort_values("bank_id")
        labels = frame["bank_id"].tolist()
    else:
        if year is not None:
            raise InputError("pooled scope scores all years; year must be omitted")
        if frame.empty:
            raise DataError("empty panel: empty frontier")
        frame = frame.sort_values(["bank_id", "year"])
        labels = [f"{b}:{y}" for b, y in zip(frame["bank_id"], frame["year"])]

    data = frame[needed].to_numpy(dtype=float).T
    if shift_nonpositive:
        shifted = data.copy()
        for i in range(shifted.shape[0]):
            row = shifted[i]
            if np.nanmin(row) <= 0.0:
                shifted[i] = row + abs(np.nanmin(row)) + 1.0
        data = shifted
    bad_cells = ~(np.isfinite(data) & (data > 0.0))
    if bad_cells.any():
        offenders = []
        for i, j in zip(*np.nonzero(bad_cells)):
            row = frame.iloc[j]
            offenders.append(f"({row['bank_id']}, {row['year']}, {needed[i]})")
            if len(offenders) == 5:
                break
        raise DataError("non-positive or missing entries at: " + ", ".join(offenders))

    m, s1, s2 = len(spec.inputs), len(spec.goods), len(spec.bads)
    return DeaProblem(
        inputs=data[:m],
        goods=data[m:m + s1],
        bads=data[m + s1:],
        dmu_labels=tuple(labels),
        returns_to_scale=spec.returns_to_scale,
        input_names=spec.inputs,
        good_names=spec.goods,
        bad_names=spec.bads,
        years=tuple(int(y) for y in frame["year"]),
    )


def _check_dmu(problem: DeaProblem, dmu: int) -> int:
    dmu = int(dmu)
    if not 0 <= dmu < problem.n:
        raise InputError(f"dmu index {dmu} out of range for n={problem.n}")
    return dmu


def _solve_or_raise(lp: LinearProgram, label: str):
    sol = solve(lp)
    if sol.status != OPTIMAL:
        raise DataError(f"{label}: solver returned {sol.status}")
    return sol


def radial_input_efficiency(problem: DeaProblem, dmu: int) -> DeaScore:
    """Input-oriented radial score theta: the smallest uniform input
    contraction under which the DMU stays producible by its peers."""
    dmu = _check_dmu(problem, dmu)
    if problem.s2 > 0:
        raise InputError(
            "radial models take undesirable outputs as inputs; rebuild the "
            "problem with them mapped into the input set")
    n, m, s1 = problem.n, problem.m, problem.s1
    x0 = problem.inputs[:, dmu]
    y0 = problem.goods[:, dmu]
    # variables: [theta, lambda_1..lambda_n]
    rows, senses, rhs = [], [], []
    for i in range(m):
        rows.append(np.concatenate([[-x0[i]], problem.inputs[i]]))
        senses.append("<=")
        rhs.append(0.0)
    for r in range(s1):
        rows.append(np.concatenate([[0.0], problem.goods[r]]))
        senses.append(">=")
        rhs.append(y0[r])
    if problem.returns_to_scale == VRS:
        rows.append(np.concatenate([[0.0], np.ones(n)]))
        senses.append("=")
        rhs.append(1.0)
    lp = LinearProgram(
        c=np.concatenate([[1.0], np.zeros(n)]),
        a=np.array(rows), senses=tuple(senses), b=np.array(rhs),
    )
    sol = _solve_or_raise(lp, problem.dmu_labels[dmu])
    theta = float(sol.objective_value)
    lam = sol.primal_values[1:]
    slacks = SlackProfile(
        input_slacks=tuple(np.maximum(theta * x0 - problem.inputs @ lam, 0.0)),
        output_shortfalls=tuple(np.maximum(problem.goods @ lam - y0, 0.0)),
        bad_output_excesses=(),
    )
    model = CCR if problem.returns_to_scale == CRS else BCC
    return DeaScore(
        dmu=problem.dmu_labels[dmu], model=model, value=theta,
        slacks=slacks, lambdas=tuple(lam),
        status=SCORED, efficient=theta >= 1.0 - EFFICIENT_TOL,
        year=problem.years[dmu],
    )


def sbm_efficiency(problem: DeaProblem, dmu: int) -> DeaScore:
    """Slacks-based efficiency rho via the Charnes-Cooper linearization.

    Scaled variables [Lambda, S-, Sg, Sb, t] with the denominator pinned
    to 1; original-program values are recovered by dividing by t.
    """
    dmu = _check_dmu(problem, dmu)
    n, m, s1, s2 = problem.n, problem.m, problem.s1, problem.s2
    x0 = problem.inputs[:, dmu]
    yg0 = problem.goods[:, dmu]
    yb0 = problem.bads[:, dmu] if s2 else np.empty(0)
    q = s1 + s2
    nv = n + m + s1 + s2 + 1   # variable count; t is last
    iL, iSm, iSg, iSb, it = 0, n, n + m, n + m + s1, nv - 1

    rows, senses, rhs = [], [], []
    for i in range(m):
        row = np.zeros(nv)
        row[iL:iL + n] = problem.inputs[i]
        row[iSm + i] = 1.0
        row[it] = -x0[i]
        rows.append(row); senses.append("="); rhs.append(0.0)
    for r in range(s1):
        row = np.zeros(nv)
        row[iL:iL + n] = problem.goods[r]
        row[iSg + r] = -1.0
        row[it] = -yg0[r]
        rows.append(row); senses.append("="); rhs.append(0.0)
    for r in range(s2):
        row = np.zeros(nv)
        row[iL:iL + n] = problem.bads[r]
        row[iSb + r] = 1.0
        row[it] = -yb0[r]
        rows.append(row); senses.append("="); rhs.append(0.0)
    # normalization: t plus the average normalized output deviation equals 1
    row = np.zeros(nv)
    row[it] = 1.0
    for r in range(s1):
        row[iSg + r] = 1.0 / (q * yg0[r])
    for r in range(s2):
        row[iSb + r] = 1.0 / (q * yb0[r])
    rows.append(row); senses.append("="); rhs.append(1.0)
    if problem.returns_to_scale == VRS:
        row = np.zeros(nv)
        row[iL:iL + n] = 1.0
        row[it] = -1.0
        rows.append(row); senses.append("="); rhs.append(0.0)

    c = np.zeros(nv)
    c[it] = 1.0
    for i in range(m):
        c[iSm + i] = -1.0 / (m * x0[i])
    lp = LinearProgram(c=c, a=np.array(rows), senses=tuple(senses), b=np.array(rhs))
    sol = _solve_or_raise(lp, problem.dmu_labels[dmu])
    t = sol.primal_values[it]
    if t <= 0.0:
        raise DataError(f"{problem.dmu_labels[dmu]}: degenerate scale factor")
    lam = sol.primal_values[iL:iL + n] / t
    s_in = sol.primal_values[iSm:iSm + m] / t
    s_good = sol.primal_values[iSg:iSg + s1] / t
    s_bad = sol.primal_values[iSb:iSb + s2] / t
    rho = float(sol.objective_value)
    slacks = SlackProfile(tuple(s_in), tuple(s_good), tuple(s_bad))
    model = SBM_UND_VRS if s2 else SBM_VRS
    efficient = (rho >= 1.0 - EFFICIENT_TOL
                 and slacks.max_normalized(problem, dmu) < EFFICIENT_TOL)
    return DeaScore(
        dmu=problem.dmu_labels[dmu], model=model, value=rho,
        slacks=slacks, lambdas=tuple(lam),
        status=SCORED, efficient=efficient, year=problem.years[dmu],
    )


def super_sbm_efficiency(problem: DeaProblem, dmu: int,
                         stage1: DeaScore | None = None) -> DeaScore:
    """Super-efficiency for a stage-1 efficient DMU.

    Excludes the DMU and finds the convex combination of the remaining
    units that dominates it (weakly more input and bad output, weakly less
    good output) at the smallest average normalized deviation. Infeasible
    when no such combination exists; NotComparable when there are no peers.
    """
    dmu = _check_dmu(problem, dmu)
    if stage1 is None:
        stage1 = sbm_efficiency(problem, dmu)
    if not stage1.efficient:
        raise InputError(
            f"{problem.dmu_labels[dmu]}: super-efficiency is defined only "
            "for stage-1 efficient DMUs")
    n, m, s1, s2 = problem.n, problem.m, problem.s1, problem.s2
    label = problem.dmu_labels[dmu]
    if n == 1:
        return DeaScore(
            dmu=label, model=SUPER_SBM_UND_VRS, value=1.0,
            slacks=SlackProfile((0.0,) * m, (0.0,) * s1, (0.0,) * s2),
            lambdas=(0.0,), status=NOT_COMPARABLE, efficient=True,
            year=problem.years[dmu],
        )
    others = [j for j in range(n) if j != dmu]
    x0 = problem.inputs[:, dmu]
    yg0 = problem.goods[:, dmu]
    yb0 = problem.bads[:, dmu] if s2 else np.empty(0)
    xo = problem.inputs[:, others]
    ygo = problem.goods[:, others]
    ybo = problem.bads[:, others] if s2 else np.empty((0, len(others)))

    # cost of reference weight j: its average normalized input plus bad level
    c = (xo / x0[:, None]).sum(axis=0) / m
    if s2:
        c = c + (ybo / yb0[:, None]).sum(axis=0) / s2
    rows, senses, rhs = [], [], []
    for i in range(m):
        rows.append(xo[i]); senses.append(">="); rhs.append(x0[i])
    for r in range(s1):
        rows.append(ygo[r]); senses.append("<="); rhs.append(yg0[r])
    for r in range(s2):
        rows.append(ybo[r]); senses.append(">="); rhs.append(yb0[r])
    if problem.returns_to_scale == VRS:
        rows.append(np.ones(len(others))); senses.append("="); rhs.append(1.0)
    lp = LinearProgram(c=c, a=np.array(rows), senses=tuple(senses), b=np.array(rhs))
    sol = solve(lp)
    if sol.status == INFEASIBLE:
        return DeaScore(
            dmu=label, model=SUPER_SBM_UND_VRS, value=float("nan"),
            slacks=SlackProfile((float("nan"),) * m, (float("nan"),) * s1,
                                (float("nan"),) * s2),
            lambdas=(0.0,) * n, status=INFEASIBLE_SUPER, efficient=True,
            year=problem.years[dmu],
        )
    if sol.status != OPTIMAL:
        raise DataError(f"{label}: solver returned {sol.status}")
    lam_others = sol.primal_values
    lam = np.zeros(n)
    lam[others] = lam_others
    s_in = np.maximum(xo @ lam_others - x0, 0.0)
    s_good = np.maximum(yg0 - ygo @ lam_others, 0.0)
    s_bad = np.maximum(ybo @ lam_others - yb0, 0.0) if s2 else np.empty(0)
    se = 1.0 + (s_in / x0).sum() / m
    if s2:
        se += (s_bad / yb0).sum() / s2
    return DeaScore(
        dmu=label, model=SUPER_SBM_UND_VRS, value=float(se),
        slacks=SlackProfile(tuple(s_in), tuple(s_good), tuple(s_bad)),
        lambdas=tuple(lam), status=SCORED, efficient=True,
        year=problem.years[dmu],
    )


def score_all(problem: DeaProblem, spec: DeaModelSpec | str) -> list[DeaScore]:
    """Score every DMU in the problem under one model.

    Non-super models score each DMU independently. The super model runs
    the slacks-based stage on everyone, then the self-excluded stage on
    the efficient set; infeasible super programs keep their flag and are
    assigned the largest finite score in the cohort plus one unit.
    """
    model = spec.model if isinstance(spec, DeaModelSpec) else str(spec)
    if model not in MODELS:
        raise InputError(f"unknown model {model!r}")
    if model in (CCR, BCC):
        want = CRS if model == CCR else VRS
        if problem.returns_to_scale != want:
            raise InputError(f"{model} requires {want} returns to scale")
        return [radial_input_efficiency(problem, j) for j in range(problem.n)]
    if model in (SBM_VRS, SBM_UND_VRS):
        if model == SBM_UND_VRS and problem.s2 == 0:
            raise InputError("SBM_UND_VRS requires an undesirable output")
        if model == SBM_VRS and problem.s2 > 0:
            raise InputError("SBM_VRS maps undesirable outputs into inputs")
        return [sbm_efficiency(problem, j) for j in range(problem.n)]

    if problem.s2 == 0:
        raise InputError("SUPER_SBM_UND_VRS requires an undesirable output")
    stage1 = [sbm_efficiency(problem, j) for j in range(problem.n)]
    scores: list[DeaScore | None] = [None] * problem.n
    infeasible = []
    for j, s1_score in enumerate(stage1):
        if not s1_score.efficient:
            # inefficient branch: the super score is the stage-1 evaluation
            scores[j] = DeaScore(
                dmu=s1_score.dmu, model=SUPER_SBM_UND_VRS, value=s1_score.value,
                slacks=s1_score.slacks, lambdas=s1_score.lambdas,
                status=SCORED, efficient=False, year=s1_score.year,
            )
            continue
        sup = super_sbm_efficiency(problem, j, stage1=s1_score)
        scores[j] = sup
        if sup.status == INFEASIBLE_SUPER:
            infeasible.append(j)
    if infeasible:
        finite = [s.value for s in scores if s is not None and np.isfinite(s.value)]
        assigned = (max(finite) if finite else 1.0) + 1.0
        for j in infeasible:
            old = scores[j]
            scores[j] = DeaScore(
                dmu=old.dmu, model=old.model, value=assigned,
                slacks=old.slacks, lambdas=old.lambdas,
                status=INFEASIBLE_SUPER, efficient=True, year=old.year,
            )
    return scores


def scores_to_frame(scores: list[DeaScore], problem: DeaProblem) -> pd.DataFrame:
    """Tabulate scores: one row per DMU with per-dimension slacks and the
    nonzero reference weights serialized as label:weight pairs."""
    rows = []
    for score in scores:
        row = {
            "dmu": score.dmu,
            "year": score.year,
            "model": score.model,
            "value": score.value,
            "status": score.status,
            "efficient": score.efficient,
        }
        for name, s in zip(problem.input_names, score.slacks.input_slacks):
            row[f"slack_in_{name}"] = s
        for name, s in zip(problem.good_names, score.slacks.output_shortfalls):
            row[f"slack_good_{name}"] = s
        for name, s in zip(problem.bad_names, score.slacks.bad_output_excesses):
            row[f"slack_bad_{name}"] = s
        pairs = [
            f"{label}:{weight:.12g}"
            for label, weight in zip(problem.dmu_labels, score.lambdas)
            if weight > 1e-9
        ]
        row["lambdas"] = ";".join(pairs)
        rows.append(row)
    return pd.DataFrame(rows)
