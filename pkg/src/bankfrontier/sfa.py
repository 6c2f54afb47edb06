"""Translog stochastic profit frontier with a composed error.

Production-form frontier on the shifted-log profit scale:

    ln(profit + theta) = X beta + v - u,   v ~ N(0, sigma_v^2),
                                           u ~ |N(0, sigma_u^2)|  (half-normal)

estimated by pooled maximum likelihood in the (sigma^2, gamma)
parameterization, sigma^2 = sigma_v^2 + sigma_u^2 and
gamma = sigma_u^2 / sigma^2. A truncated-normal inefficiency mean mu is
available as an opt-in. Efficiency is the conditional mean E[exp(-u) | eps].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.special import log_ndtr
from scipy.stats import norm

from .errors import CollinearityError, DataError, SchemaError
from .panel import PanelDataset

BASE_VARS = ("deposits", "loans", "p1", "p2", "loss_provision", "op_expense_ex_prov")

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def translog_terms(base: pd.DataFrame) -> tuple[np.ndarray, list[str]]:
    """Mean-scaled translog expansion of the six base variables.

    Each variable is divided by its sample mean before logging, then the
    full symmetric expansion is built: intercept, 6 logs, 6 squared logs,
    15 pairwise cross products (28 terms).
    """
    n = len(base)
    z = {}
    for var in BASE_VARS:
        v = base[var].to_numpy(dtype=float)
        z[var] = np.log(v / v.mean())
    cols = [np.ones(n)]
    names = ["const"]
    for var in BASE_VARS:
        cols.append(z[var])
        names.append(f"ln_{var}")
    for var in BASE_VARS:
        cols.append(z[var] ** 2)
        names.append(f"ln_{var}^2")
    for i, a in enumerate(BASE_VARS):
        for b in BASE_VARS[i + 1:]:
            cols.append(z[a] * z[b])
            names.append(f"ln_{a}*ln_{b}")
    return np.column_stack(cols), names


@dataclass(frozen=True)
class FrontierDesign:
    """Estimation-ready frontier data.

    dependent is ln(profit + theta); regressors holds the translog terms
    (plus the centered year trend when built from a panel); obs_keys keeps
    (bank_id, year) alignment for the efficiency table.
    """

    dependent: np.ndarray
    regressors: np.ndarray
    term_names: tuple[str, ...]
    theta: float
    obs_keys: pd.DataFrame

    def __post_init__(self):
        y = np.asarray(self.dependent, dtype=float)
        x = np.asarray(self.regressors, dtype=float)
        if y.ndim != 1 or x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise DataError("dependent and regressors must align")
        if x.shape[1] != len(self.term_names):
            raise DataError("term_names must label every regressor column")
        object.__setattr__(self, "dependent", y)
        object.__setattr__(self, "regressors", x)
        object.__setattr__(self, "term_names", tuple(self.term_names))

    @property
    def n_obs(self) -> int:
        return self.dependent.shape[0]

    @property
    def n_terms(self) -> int:
        return self.regressors.shape[1]


def _rank_check(x: np.ndarray, names) -> None:
    rank = np.linalg.matrix_rank(x)
    if rank < x.shape[1]:
        # pivoted QR flags the dependent columns by tiny diagonal entries
        from scipy.linalg import qr

        _, r, piv = qr(x, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        cutoff = diag.max() * max(x.shape) * np.finfo(float).eps
        dependent = [names[piv[i]] for i in range(len(diag)) if diag[i] <= cutoff]
        dependent += [names[j] for j in piv[len(diag):]]
        raise CollinearityError(
            "rank-deficient design; dependent terms: " + ", ".join(sorted(dependent))
        )


def build_frontier_design(panel: PanelDataset, include_trend: bool = True) -> FrontierDesign:
    """Assemble the frontier design from a panel.

    p1 = interest_expense / deposits (price of funds) and p2 = npl / loans
    (credit cost) are formed first; theta is 1 when every profit is
    positive, otherwise |min profit| + 1. Rows missing any needed value are
    dropped. The year trend is centered on its sample mean.
    """
    needed = ("deposits", "loans", "interest_expense", "npl",
              "loss_provision", "op_expense_ex_prov", "net_profit")
    for col in needed:
        if col not in panel.frame.columns:
            raise SchemaError(f"missing required column {col!r}")
    frame = panel.frame.dropna(subset=list(needed)).reset_index(drop=True)
    if frame.empty:
        raise DataError("no complete observations to fit on")

    base = pd.DataFrame({
        "deposits": frame["deposits"],
        "loans": frame["loans"],
        "p1": frame["interest_expense"] / frame["deposits"],
        "p2": frame["npl"] / frame["loans"],
        "loss_provision": frame["loss_provision"],
        "op_expense_ex_prov": frame["op_expense_ex_prov"],
    })
    for var in BASE_VARS:
        bad = base[var] <= 0.0
        if bad.any():
            row = frame.loc[bad.idxmax()]
            raise DataError(
                f"non-positive {var} at ({row['bank_id']}, {row['year']})"
            )

    profit = frame["net_profit"].to_numpy(dtype=float)
    theta = 1.0 if profit.min() > 0.0 else abs(profit.min()) + 1.0
    dependent = np.log(profit + theta)

    terms, names = translog_terms(base)
    if include_trend:
        trend = frame["year"].to_numpy(dtype=float)
        terms = np.column_stack([terms, trend - trend.mean()])
        names = names + ["trend"]
    _rank_check(terms, names)
    return FrontierDesign(
        dependent=dependent,
        regressors=terms,
        term_names=tuple(names),
        theta=theta,
        obs_keys=frame[["bank_id", "year"]].copy(),
    )


def _unpack(params, design):
    k = design.n_terms
    params = np.asarray(params, dtype=float)
    if params.shape[0] == k + 2:
        beta, sigma_sq, gamma, mu = params[:k], params[k], params[k + 1], 0.0
    elif params.shape[0] == k + 3:
        beta, sigma_sq, gamma, mu = params[:k], params[k], params[k + 1], params[k + 2]
    else:
        raise DataError(
            f"expected {k}+2 (half-normal) or {k}+3 (truncated-normal) "
            f"parameters, got {params.shape[0]}"
        )
    if not np.isfinite(params).all():
        raise DataError("non-finite parameter")
    if sigma_sq <= 0.0:
        raise DataError(f"sigma_sq must be positive, got {sigma_sq}")
    if not (0.0 < gamma < 1.0):
        raise DataError(f"gamma must lie strictly inside (0, 1), got {gamma}")
    return beta, float(sigma_sq), float(gamma), float(mu)


def log_likelihood(params, design: FrontierDesign) -> float:
    """Composed-error log-likelihood.

    params = [beta..., sigma_sq, gamma] for the half-normal model, with an
    extra trailing mu for the truncated-normal variant.
    """
    beta, sigma_sq, gamma, mu = _unpack(params, design)
    eps = design.dependent - design.regressors @ beta
    sigma = np.sqrt(sigma_sq)
    sig_u = np.sqrt(gamma * sigma_sq)
    sig_v = np.sqrt((1.0 - gamma) * sigma_sq)
    if mu == 0.0:
        lam = np.sqrt(gamma / (1.0 - gamma))
        z = -eps * lam / sigma
        ll = (np.log(2.0) - _HALF_LOG_2PI - 0.5 * np.log(sigma_sq)
              - eps ** 2 / (2.0 * sigma_sq) + log_ndtr(z))
        return float(ll.sum())
    sig_star = sig_u * sig_v / sigma
    mu_star = (sig_v ** 2 * mu - sig_u ** 2 * eps) / sigma_sq
    ll = (-_HALF_LOG_2PI - 0.5 * np.log(sigma_sq)
          - (eps + mu) ** 2 / (2.0 * sigma_sq)
          + log_ndtr(mu_star / sig_star) - log_ndtr(mu / sig_u))
    return float(ll.sum())


def _mills(z: np.ndarray) -> np.ndarray:
    # phi(z)/Phi(z), computed in logs for stability; far in the lower tail
    # the log difference overflows exp, so switch to the asymptotic series
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    far = z < -30.0
    if far.any():
        h = -z[far]
        out[far] = h + 1.0 / h
    near = ~far
    out[near] = np.exp(norm.logpdf(z[near]) - log_ndtr(z[near]))
    return out


def log_likelihood_gradient(params, design: FrontierDesign) -> np.ndarray:
    """Analytic gradient of log_likelihood for the half-normal model.

    The truncated-normal variant falls back to central differences.
    """
    k = design.n_terms
    if np.asarray(params).shape[0] == k + 3:
        return _central_difference_gradient(params, design)
    beta, sigma_sq, gamma, _ = _unpack(params, design)
    eps = design.dependent - design.regressors @ beta
    sigma = np.sqrt(sigma_sq)
    lam = np.sqrt(gamma / (1.0 - gamma))
    z = -eps * lam / sigma
    mills = _mills(z)

    d_beta = design.regressors.T @ (eps / sigma_sq + mills * lam / sigma)
    d_sigma_sq = np.sum(
        -0.5 / sigma_sq + eps ** 2 / (2.0 * sigma_sq ** 2)
        - mills * z / (2.0 * sigma_sq)
    )
    d_lam = np.sum(mills * (-eps / sigma))
    d_gamma = d_lam / (2.0 * lam * (1.0 - gamma) ** 2)
    return np.concatenate([d_beta, [d_sigma_sq], [d_gamma]])


def _central_difference_gradient(params, design, step: float = 1e-6) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    grad = np.empty_like(params)
    for j in range(params.shape[0]):
        hi = params.copy()
        lo = params.copy()
        hi[j] += step
        lo[j] -= step
        grad[j] = (log_likelihood(hi, design) - log_likelihood(lo, design)) / (2 * step)
    return grad


GAMMA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))


@dataclass(frozen=True)
class FitOptions:
    distribution: str = "half_normal"          # or "truncated_normal"
    parameterization: str = "sigma_gamma"      # or "variance_components"
    gamma_grid: tuple = GAMMA_GRID
    max_iter: int = 500
    grad_tol: float = 1e-5


@dataclass(frozen=True, eq=False)
class SfaFit:
    beta: np.ndarray
    sigma_sq: float
    gamma: float
    mu: float
    log_likelihood: float
    converged: bool
    efficiency: np.ndarray
    term_names: tuple[str, ...]
    start_gamma: float
    n_obs: int
    iterations: int
    grad_norm: float
    ll_path: tuple


def _ols_start(design):
    x, y = design.regressors, design.dependent
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ beta
    dof = max(x.shape[0] - x.shape[1], 1)
    s2 = float(resid @ resid) / dof
    return beta, s2


def _projected_grad(grad, params, lower, upper):
    proj = grad.copy()
    at_lo = params <= lower + 1e-12
    at_hi = params >= upper - 1e-12
    # at an active bound, only the infeasible direction counts as slack
    proj[at_lo & (grad < 0)] = 0.0   # pushing further down is blocked
    proj[at_hi & (grad > 0)] = 0.0
    return proj


def fit_frontier(design: FrontierDesign, opts: FitOptions = FitOptions()) -> SfaFit:
    """Multi-start quasi-Newton MLE.

    Starts from the OLS slope estimates with the usual half-normal moment
    corrections, one start per grid gamma; keeps the highest final
    likelihood (ties broken by the lowest grid index). The optimizer works
    on the mean log-likelihood for scale stability; the reported
    log_likelihood and convergence check use the same scaling times n.
    """
    _rank_check(design.regressors, design.term_names)
    n = design.n_obs
    k = design.n_terms
    beta_ols, s2_ols = _ols_start(design)
    const_idx = design.term_names.index("const") if "const" in design.term_names else None

    truncated = opts.distribution == "truncated_normal"
    if opts.distribution not in ("half_normal", "truncated_normal"):
        raise DataError(f"unknown distribution {opts.distribution!r}")
    if opts.parameterization not in ("sigma_gamma", "variance_components"):
        raise DataError(f"unknown parameterization {opts.parameterization!r}")

    def pack_objective():
        if opts.parameterization == "sigma_gamma":
            def to_native(x):
                return x

            def neg_mean_ll(x):
                return -log_likelihood(x, design) / n

            def neg_mean_grad(x):
                return -log_likelihood_gradient(x, design) / n

            bounds = ([(None, None)] * k + [(1e-10, None), (1e-8, 1.0 - 1e-8)]
                      + ([(None, None)] if truncated else []))
            return to_native, neg_mean_ll, neg_mean_grad, bounds

        def to_native(x):
            sv, su = x[k], x[k + 1]
            total = sv + su
            native = np.concatenate([x[:k], [total, su / total], x[k + 2:]])
            return native

        def neg_mean_ll(x):
            return -log_likelihood(to_native(x), design) / n

        def neg_mean_grad(x):
            g = log_likelihood_gradient(to_native(x), design)
            sv, su = x[k], x[k + 1]
            total = sv + su
            d_sv = g[k] * 1.0 + g[k + 1] * (-su / total ** 2)
            d_su = g[k] * 1.0 + g[k + 1] * (sv / total ** 2)
            out = np.concatenate([g[:k], [d_sv, d_su], g[k + 2:]])
            return -out / n

        bounds = ([(None, None)] * k + [(1e-10, None), (1e-10, None)]
                  + ([(None, None)] if truncated else []))
        return to_native, neg_mean_ll, neg_mean_grad, bounds

    to_native, neg_mean_ll, neg_mean_grad, bounds = pack_objective()
    use_jac = not truncated  # the mu variant runs on numerical gradients

    best = None
    for g0 in opts.gamma_grid:
        s2_0 = s2_ols / (1.0 - 2.0 * g0 / np.pi)
        su_0 = np.sqrt(g0 * s2_0)
        beta_0 = beta_ols.copy()
        if const_idx is not None:
            beta_0[const_idx] += su_0 * np.sqrt(2.0 / np.pi)
        if opts.parameterization == "sigma_gamma":
            x0 = np.concatenate([beta_0, [s2_0, g0]])
        else:
            x0 = np.concatenate([beta_0, [(1.0 - g0) * s2_0, g0 * s2_0]])
        if truncated:
            x0 = np.concatenate([x0, [0.0]])

        path = []

        def track(xk):
            path.append(-neg_mean_ll(xk) * n)

        start_ll = -neg_mean_ll(x0) * n
        res = minimize(
            neg_mean_ll, x0,
            jac=neg_mean_grad if use_jac else None,
            method="L-BFGS-B", bounds=bounds, callback=track,
            # the translog design is near-collinear, so give the quasi-Newton
            # approximation enough memory to capture the narrow curvature
            options={"maxiter": opts.max_iter, "ftol": 1e-14, "gtol": 1e-9,
                     "maxcor": 60},
        )
        final_ll = -res.fun * n
        if final_ll < start_ll:   # never report worse than the start
            res.x, final_ll = x0, start_ll
        candidate = (final_ll, g0, res, tuple([start_ll] + path))
        if best is None or candidate[0] > best[0] + 1e-12:
            best = candidate

    final_ll, start_gamma, res, ll_path = best
    lo = np.array([b[0] if b[0] is not None else -np.inf for b in bounds])
    hi = np.array([b[1] if b[1] is not None else np.inf for b in bounds])
    if use_jac:
        mean_grad = -neg_mean_grad(res.x)
    else:
        step = 1e-6
        mean_grad = np.empty_like(res.x)
        for j in range(res.x.shape[0]):
            hi_x, lo_x = res.x.copy(), res.x.copy()
            hi_x[j] += step
            lo_x[j] -= step
            mean_grad[j] = (neg_mean_ll(lo_x) - neg_mean_ll(hi_x)) / (2 * step)
    proj = _projected_grad(mean_grad, res.x, lo, hi)
    grad_norm = float(np.max(np.abs(proj)))
    converged = grad_norm < opts.grad_tol

    native = to_native(res.x)
    beta = native[:k]
    sigma_sq = float(native[k])
    gamma = float(native[k + 1])
    mu = float(native[k + 2]) if truncated else 0.0

    fit = SfaFit(
        beta=beta,
        sigma_sq=sigma_sq,
        gamma=gamma,
        mu=mu,
        log_likelihood=float(final_ll),
        converged=bool(converged),
        efficiency=np.empty(0),
        term_names=design.term_names,
        start_gamma=float(start_gamma),
        n_obs=n,
        iterations=int(res.nit),
        grad_norm=grad_norm,
        ll_path=ll_path,
    )
    eff = technical_efficiency(fit, design)
    object.__setattr__(fit, "efficiency", eff)
    return fit


def technical_efficiency(fit: SfaFit, design: FrontierDesign) -> np.ndarray:
    """Conditional-mean efficiency E[exp(-u) | eps] per observation."""
    eps = design.dependent - design.regressors @ fit.beta
    sigma_sq = fit.sigma_sq
    gamma = fit.gamma
    su_sq = gamma * sigma_sq
    sv_sq = (1.0 - gamma) * sigma_sq
    sig_star = np.sqrt(su_sq * sv_sq / sigma_sq)
    mu_star = (sv_sq * fit.mu - su_sq * eps) / sigma_sq
    if sig_star == 0.0:
        return np.ones_like(eps)
    log_te = (-mu_star + 0.5 * sig_star ** 2
              + log_ndtr(mu_star / sig_star - sig_star)
              - log_ndtr(mu_star / sig_star))
    return np.minimum(np.exp(log_te), 1.0)
