"""Empirical-likelihood engine: residuals, inner problem, objective, estimator.

For each frequency ``t`` on a quadrature grid, observation ``j`` contributes a
residual vector whose first two rows match the empirical cosine/sine moments
to the model characteristic function and whose remaining rows are
``discounted payoff * density ratio - observed price`` for each option quote.
The inner problem profiles probability weights ``p_j`` subject to
``sum p_j g_j = 0``; the resulting local statistic ``2 sum log(1 + lam'g_j)``
is integrated over the grid and, for quotes of several maturities, summed over
maturity groups built from non-overlapping aggregated returns. The estimator
minimizes that objective over the model parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import (
    HullViolation,
    InfeasibleEverywhere,
    InsufficientData,
    InvalidRegime,
    MaxIterations,
    ModelMismatch,
    NoConvergence,
    TruncationNotConverged,
)
from .models import (
    BsParams,
    KouParams,
    MarketEnv,
    MertonParams,
    ModelParams,
    RiskPreference,
    characteristic_function,
    rn_derivative,
    rn_risk_premium,
)
from .pricing import OptionQuote
from .simulate import ReturnSeries, rng_stream

__all__ = [
    "ConstraintSet",
    "ResidualBlock",
    "InnerSolution",
    "EstimationResult",
    "build_residuals",
    "solve_inner",
    "integrated_logel",
    "total_objective",
    "estimate",
    "aggregate_returns",
    "default_bounds",
    "param_names",
    "params_to_vector",
    "vector_to_params",
]

INNER_TOL = 1e-11
INNER_MAX_ITER = 50

_STATUS_OK = 0
_STATUS_HULL = 1
_STATUS_MAXITER = 2


@dataclass(frozen=True)
class ConstraintSet:
    """Quadrature grid, weight measure and option quotes grouped by maturity.

    ``t_weights`` are Riemann weights of a probability measure (they sum to
    one). An empty ``quotes_by_maturity`` means characteristic-function
    constraints only, evaluated at the single-period horizon. A non-``None``
    ``pref`` switches the option rows to the utility-tilted pricing kernel
    with that fixed curvature.
    """

    t_grid: np.ndarray
    t_weights: np.ndarray
    quotes_by_maturity: Mapping[int, tuple]
    env: MarketEnv
    pref: Optional[RiskPreference] = None

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        w = np.asarray(self.t_weights, dtype=float)
        if t.ndim != 1 or t.size == 0 or t.shape != w.shape:
            raise ValueError("t_grid and t_weights must be matching 1-d arrays")
        if abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
            raise ValueError("t_weights must be a probability vector")
        groups = {}
        for k, quotes in dict(self.quotes_by_maturity).items():
            if not (isinstance(k, int) and k >= 1):
                raise ValueError("maturities must be positive integer period counts")
            quotes = tuple(quotes)
            if not quotes:
                raise ValueError(f"maturity group {k} is empty")
            groups[k] = quotes
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "t_weights", w)
        object.__setattr__(self, "quotes_by_maturity", groups)

    @classmethod
    def uniform(cls, env: MarketEnv, a: float = 5.0, nodes: int = 100,
                quotes_by_maturity: Optional[Mapping[int, Sequence[OptionQuote]]] = None,
                pref: Optional[RiskPreference] = None) -> "ConstraintSet":
        """Midpoint grid on ``[-a, a]`` with the uniform probability weight."""
        if not (a > 0 and nodes >= 1):
            raise ValueError("need a > 0 and at least one node")
        edges = np.linspace(-a, a, nodes + 1)
        grid = 0.5 * (edges[:-1] + edges[1:])
        weights = np.full(nodes, 1.0 / nodes)
        return cls(grid, weights, quotes_by_maturity or {}, env, pref)

    @property
    def maturities(self) -> tuple:
        """Maturity groups to aggregate over; a lone cf-only group if no quotes."""
        if not self.quotes_by_maturity:
            return (1,)
        return tuple(sorted(self.quotes_by_maturity))


@dataclass
class ResidualBlock:
    """Residual vectors ``g_j`` for one frequency node: shape ``(n, dim)``."""

    g: np.ndarray
    t: float

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def dim(self) -> int:
        return self.g.shape[1]


@dataclass
class InnerSolution:
    """Inner-problem solution at one node.

    ``weights`` are the implied probabilities ``1 / (n (1 + lam'g_j))``;
    ``logel`` is ``2 sum log(1 + lam'g_j) >= 0``.
    """

    lam: np.ndarray
    weights: np.ndarray
    logel: float
    converged: bool
    iterations: int


@dataclass
class EstimationResult:
    theta_hat: ModelParams
    objective: float
    sigma_hat: Optional[np.ndarray]
    alpha_hat: Optional[float] = None
    multipliers: dict = field(default_factory=dict)
    node_weights: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Residuals.
# ---------------------------------------------------------------------------


def aggregate_returns(returns: np.ndarray, k: int) -> np.ndarray:
    """Sum consecutive non-overlapping blocks of ``k`` returns.

    Uses the first ``k * floor(n/k)`` observations; the remainder is dropped.
    """
    if k < 1:
        raise ValueError("aggregation length must be at least 1")
    if k == 1:
        return np.asarray(returns, dtype=float)
    m = len(returns) // k
    return np.asarray(returns[: m * k], dtype=float).reshape(m, k).sum(axis=1)


def _rn_values(R: np.ndarray, theta: ModelParams, env_k: MarketEnv,
               pref: Optional[RiskPreference]) -> np.ndarray:
    if pref is not None:
        return rn_risk_premium(R, theta, pref, env_k)
    try:
        return rn_derivative(R, theta, env_k)
    except InvalidRegime as exc:
        raise ModelMismatch(str(exc)) from exc


def _residual_tensor(R: np.ndarray, theta: ModelParams, t_grid: np.ndarray,
                     quotes: Sequence[OptionQuote], env_k: MarketEnv,
                     pref: Optional[RiskPreference],
                     payoffs: Optional[np.ndarray] = None) -> np.ndarray:
    """Residuals for every node and observation: shape ``(T, n, 2 + q)``.

    The option rows do not depend on ``t``; ``payoffs`` may carry the
    precomputed discounted payoff matrix ``(q, n)``.
    """
    phi = np.atleast_1d(characteristic_function(t_grid, theta, env_k))
    tr = np.outer(t_grid, R)
    T, n = tr.shape
    q = len(quotes)
    g = np.empty((T, n, 2 + q))
    g[:, :, 0] = np.cos(tr) - phi.real[:, None]
    g[:, :, 1] = np.sin(tr) - phi.imag[:, None]
    if q:
        if payoffs is None:
            payoffs = _discounted_payoffs(R, quotes, env_k)
        rn = _rn_values(R, theta, env_k, pref)
        for i, quote in enumerate(quotes):
            g[:, :, 2 + i] = payoffs[i] * rn - quote.price_normalized
    return g


def _discounted_payoffs(R: np.ndarray, quotes: Sequence[OptionQuote],
                        env_k: MarketEnv) -> np.ndarray:
    """``exp(-r T) max(e^R - 1/m, 0)`` for each quote, shape ``(q, n)``."""
    eR = np.exp(R)
    out = np.empty((len(quotes), len(R)))
    for i, quote in enumerate(quotes):
        disc = math.exp(-quote.rate * env_k.delta)
        out[i] = disc * np.maximum(eR - 1.0 / quote.moneyness, 0.0)
    return out


def build_residuals(returns: ReturnSeries, theta: ModelParams, t: float,
                    quotes: Sequence[OptionQuote], env: MarketEnv,
                    pref: Optional[RiskPreference] = None) -> ResidualBlock:
    """Residual block at one frequency node, single-period returns.

    Quotes must share one maturity; the horizon is that maturity times
    ``env.delta`` and returns are aggregated accordingly.
    """
    ks = {quote.maturity_periods for quote in quotes}
    if len(ks) > 1:
        raise ValueError("quotes in one block must share a maturity")
    k = ks.pop() if ks else 1
    env_k = env.horizon(k)
    R = aggregate_returns(returns.returns, k)
    g = _residual_tensor(R, theta, np.array([t], dtype=float), quotes, env_k, pref)
    return ResidualBlock(g[0], t)


# ---------------------------------------------------------------------------
# Inner problem.
# ---------------------------------------------------------------------------


def _logstar(w: np.ndarray, eps: float) -> np.ndarray:
    """``log`` extended quadratically below ``eps`` (value/slope/curvature match)."""
    main = w >= eps
    safe = np.where(main, w, 1.0)
    return np.where(main, np.log(safe),
                    math.log(eps) - 1.5 + 2.0 * w / eps - w * w / (2.0 * eps * eps))


def _solve_inner_batch(g: np.ndarray, tol: float = INNER_TOL,
                       max_iter: int = INNER_MAX_ITER):
    """Damped Newton on the dual for a batch of nodes.

    ``g`` has shape ``(T, n, k)``. Minimizes
    ``D(lam) = -(1/n) sum_j logstar(1 + lam'g_j)`` per node; at an interior
    optimum ``(1/n) sum_j g_j / (1 + lam'g_j) = 0``. Returns multipliers,
    ``1 + lam'g`` values, the local statistic, iteration counts and a status
    code per node (ok / hull violation / iteration budget).
    """
    g = np.asarray(g, dtype=float)
    T, n, k = g.shape
    eps = 1.0 / n
    lam = np.zeros((T, k))
    w = np.ones((T, n))
    status = np.full(T, _STATUS_MAXITER, dtype=np.int8)
    iters = np.zeros(T, dtype=np.int32)

    # cheap separating-hyperplane pretest along coordinate axes
    hull_bad = ((g.min(axis=1) > 0) | (g.max(axis=1) < 0)).any(axis=1)
    status[hull_bad] = _STATUS_HULL
    idx = np.where(~hull_bad)[0]

    # the loop works on the compressed set of not-yet-finished nodes
    ga = g[idx]
    la = lam[idx]
    gmax = np.abs(ga).max(axis=(1, 2)) if idx.size else np.empty(0)
    wa = 1.0 + np.einsum("tk,tnk->tn", la, ga)
    Da = -_logstar(wa, eps).mean(axis=1)
    stall = np.zeros(idx.size, dtype=np.int8)
    for _ in range(max_iter):
        if not idx.size:
            break
        main = wa >= eps
        safe = np.where(main, wa, 1.0)
        h1 = np.where(main, 1.0 / safe, 2.0 / eps - wa / eps**2)
        h2 = np.where(main, 1.0 / safe**2, 1.0 / eps**2)
        grad = -np.einsum("tn,tnk->tk", h1, ga) / n
        gnorm = np.abs(grad).max(axis=1)
        finished = gnorm <= tol
        if finished.any():
            sel = idx[finished]
            status[sel] = _STATUS_OK
            lam[sel] = la[finished]
            w[sel] = wa[finished]
            keep = ~finished
            idx, ga, la, wa, Da = idx[keep], ga[keep], la[keep], wa[keep], Da[keep]
            grad, h2, stall, gmax = grad[keep], h2[keep], stall[keep], gmax[keep]
            if not idx.size:
                break
        hess = (ga * h2[:, :, None]).transpose(0, 2, 1) @ ga / n
        # ridge scaled to each node's Hessian so tiny-residual nodes keep shape
        ridge = 1e-13 * np.maximum(np.trace(hess, axis1=1, axis2=2) / k, 1e-300)
        hess = hess + ridge[:, None, None] * np.eye(k)
        try:
            step = np.linalg.solve(hess, -grad[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:  # pragma: no cover - ridge keeps this rare
            step = np.einsum("tkl,tl->tk", np.linalg.pinv(hess), -grad)
        slope = np.einsum("tk,tk->t", grad, step)
        # fall back to steepest descent if rounding flipped the direction
        bad_dir = slope >= 0
        if bad_dir.any():
            step[bad_dir] = -grad[bad_dir]
            slope[bad_dir] = -np.square(grad[bad_dir]).sum(axis=1)
        alpha = np.ones(idx.size)
        # absolute allowance keeps the test meaningful at the precision floor
        noise = 1e-15 * np.maximum(1.0, np.abs(Da))
        for _ls in range(40):
            w_try = 1.0 + np.einsum("tk,tnk->tn", la + alpha[:, None] * step, ga)
            D_try = -_logstar(w_try, eps).mean(axis=1)
            ok = D_try <= Da + 1e-4 * alpha * slope + noise
            if ok.all() or alpha.max() < 1e-13:
                break
            alpha = np.where(ok, alpha, alpha * 0.5)
        la = la + alpha[:, None] * step
        wa = 1.0 + np.einsum("tk,tnk->tn", la, ga)
        Da = -_logstar(wa, eps).mean(axis=1)
        iters[idx] += 1
        # a node that cannot make progress twice in a row will never converge;
        # divergence towards an unbounded dual means the hull excludes zero
        stall = np.where(alpha < 1e-13, stall + 1, 0).astype(np.int8)
        diverged = np.abs(la).max(axis=1) * gmax > 1e10
        drop = (stall >= 2) | diverged
        if drop.any():
            sel = idx[drop]
            status[sel] = np.where(diverged[drop], _STATUS_HULL, _STATUS_MAXITER)
            lam[sel] = la[drop]
            w[sel] = wa[drop]
            keep = ~drop
            idx, ga, la, wa, Da = idx[keep], ga[keep], la[keep], wa[keep], Da[keep]
            stall, gmax = stall[keep], gmax[keep]
    if idx.size:  # iteration budget exhausted
        lam[idx] = la
        w[idx] = wa

    # an optimum touching the extension region is infeasible (some p_j > 1)
    interior = w.min(axis=1) >= eps * (1.0 - 1e-8)
    status = np.where((status == _STATUS_OK) & ~interior, _STATUS_HULL, status)
    logel = np.where(status == _STATUS_OK,
                     2.0 * np.sum(np.log(np.maximum(w, 1e-300)), axis=1), np.inf)
    return lam, w, logel, iters, status


def solve_inner(block: ResidualBlock, tol: float = INNER_TOL,
                max_iter: int = INNER_MAX_ITER) -> InnerSolution:
    """Profile the probability weights for one residual block.

    Raises
    ------
    HullViolation
        When zero is not inside the convex hull of the residual vectors.
    MaxIterations
        When the Newton iteration budget is exhausted.
    """
    g = np.asarray(block.g, dtype=float)
    if g.ndim != 2 or g.shape[0] < 2:
        raise ValueError("need a (n, dim) residual matrix with n >= 2")
    lam, w, logel, iters, status = _solve_inner_batch(g[None], tol, max_iter)
    if status[0] == _STATUS_HULL:
        raise HullViolation(f"no feasible weights at t = {block.t}")
    if status[0] == _STATUS_MAXITER:
        raise MaxIterations(f"inner solver exhausted {max_iter} iterations")
    n = g.shape[0]
    return InnerSolution(lam=lam[0], weights=1.0 / (n * w[0]),
                         logel=float(logel[0]), converged=True,
                         iterations=int(iters[0]))


# ---------------------------------------------------------------------------
# Objective.
# ---------------------------------------------------------------------------


def _group_logel(R: np.ndarray, theta: ModelParams, cset: ConstraintSet,
                 k: int, payoffs: Optional[np.ndarray] = None,
                 keep_solution: bool = False, penalize: bool = False):
    """One maturity group's integrated statistic.

    Infeasible nodes make the value infinite; with ``penalize`` they instead
    contribute a large first-order surrogate (the quadratic statistic the
    local value approaches near feasibility, plus an offset), which gives a
    derivative-free outer search a slope back towards feasible territory.
    """
    quotes = cset.quotes_by_maturity.get(k, ())
    dim = 2 + len(quotes)
    if len(R) < dim + 1:
        raise InsufficientData(
            f"{len(R)} aggregated observations cannot support {dim} residual rows")
    env_k = cset.env.horizon(k)
    try:
        g = _residual_tensor(R, theta, cset.t_grid, quotes, env_k, cset.pref,
                             payoffs=payoffs)
    except (InvalidRegime, TruncationNotConverged, ModelMismatch):
        return math.inf, None, dim
    if not np.all(np.isfinite(g)):
        return math.inf, None, dim
    n = g.shape[1]
    lam, w, logel, iters, status = _solve_inner_batch(g)
    bad = status != _STATUS_OK
    solution = (lam, w, iters, status) if keep_solution else None
    if bad.any():
        if not penalize:
            return math.inf, solution, int(bad.sum())
        mean = g[bad].mean(axis=1)
        var = g[bad].var(axis=1) + 1e-300
        surrogate = np.minimum(n * (mean**2 / var).sum(axis=1), 1e4 * n) + 4.0 * n
        logel = logel.copy()
        logel[bad] = surrogate
    value = float(np.dot(cset.t_weights, logel))
    return value, solution, int(bad.sum())


def integrated_logel(returns: ReturnSeries, theta: ModelParams,
                     cset: ConstraintSet, maturity_k: int = 1) -> float:
    """Riemann integral of the local statistic over the frequency grid.

    Returns are aggregated into ``floor(n/k)`` non-overlapping ``k``-period
    sums and every model quantity is evaluated at horizon ``k * delta``.
    Infinite when any node reports an infeasible inner problem.
    """
    R = aggregate_returns(returns.returns, maturity_k)
    value, _, _ = _group_logel(R, theta, cset, maturity_k)
    return value


def total_objective(returns: ReturnSeries, theta: ModelParams,
                    cset: ConstraintSet) -> float:
    """Sum of the integrated statistic over the maturity groups of ``cset``."""
    return sum(integrated_logel(returns, theta, cset, k) for k in cset.maturities)


# ---------------------------------------------------------------------------
# Parameter plumbing for the outer search.
# ---------------------------------------------------------------------------

_PARAM_ORDER = {
    BsParams: ("mu", "sigma"),
    MertonParams: ("mu", "sigma", "lam", "mu_j", "sigma_j"),
    KouParams: ("mu", "sigma", "lam", "p", "eta1", "eta2"),
}

_DEFAULT_BOUNDS = {
    "mu": (-2.0, 2.0),
    "sigma": (0.01, 3.0),
    "lam": (1e-3, 50.0),
    "mu_j": (-3.0, 3.0),
    "sigma_j": (1e-3, 3.0),
    "p": (1e-4, 1.0 - 1e-4),
    "eta1": (1.0 + 1e-3, 200.0),
    "eta2": (1e-3, 200.0),
    "alpha": (1e-4, 1.0 - 1e-4),
}

_MODEL_KINDS = {"bs": BsParams, "merton": MertonParams, "kou": KouParams}


def param_names(model_kind: str, with_alpha: bool = False) -> tuple:
    cls = _MODEL_KINDS[model_kind]
    names = _PARAM_ORDER[cls]
    return names + ("alpha",) if with_alpha else names


def params_to_vector(theta: ModelParams, alpha: Optional[float] = None) -> np.ndarray:
    vec = [getattr(theta, name) for name in _PARAM_ORDER[type(theta)]]
    if alpha is not None:
        vec.append(alpha)
    return np.array(vec, dtype=float)


def vector_to_params(vec: np.ndarray, model_kind: str, with_alpha: bool = False):
    cls = _MODEL_KINDS[model_kind]
    names = _PARAM_ORDER[cls]
    theta = cls(**{name: float(v) for name, v in zip(names, vec)})
    alpha = float(vec[len(names)]) if with_alpha else None
    return theta, alpha


def default_bounds(model_kind: str, with_alpha: bool = False) -> dict:
    """Box bounds keeping every parameter inside its type invariants."""
    return {name: _DEFAULT_BOUNDS[name] for name in param_names(model_kind, with_alpha)}


def _to_internal(name: str, x: float) -> float:
    if name in ("sigma", "lam", "sigma_j", "eta2"):
        return math.log(x)
    if name == "eta1":
        return math.log(x - 1.0)
    if name in ("p", "alpha"):
        return math.log(x / (1.0 - x))
    return x


def _from_internal(name: str, z: float) -> float:
    if name in ("sigma", "lam", "sigma_j", "eta2"):
        return math.exp(z)
    if name == "eta1":
        return 1.0 + math.exp(z)
    if name in ("p", "alpha"):
        return 1.0 / (1.0 + math.exp(-z))
    return z


# ---------------------------------------------------------------------------
# Estimator.
# ---------------------------------------------------------------------------


class _Problem:
    """Precomputed per-dataset quantities reused across objective evaluations."""

    def __init__(self, returns: ReturnSeries, cset: ConstraintSet):
        self.cset = cset
        self.groups = {}
        for k in cset.maturities:
            R = aggregate_returns(returns.returns, k)
            quotes = cset.quotes_by_maturity.get(k, ())
            dim = 2 + len(quotes)
            if len(R) < dim + 1:
                raise InsufficientData(
                    f"maturity {k}: {len(R)} observations for {dim} residual rows")
            env_k = cset.env.horizon(k)
            payoffs = _discounted_payoffs(R, quotes, env_k) if quotes else None
            self.groups[k] = (R, payoffs)

    def objective(self, theta: ModelParams, alpha: Optional[float],
                  penalize: bool = False):
        pref = RiskPreference(alpha) if alpha is not None else self.cset.pref
        cset = self.cset if pref is self.cset.pref else replace(self.cset, pref=pref)
        total = 0.0
        bad_nodes = 0
        for k, (R, payoffs) in self.groups.items():
            value, _, bad = _group_logel(R, theta, cset, k, payoffs=payoffs,
                                         penalize=penalize)
            bad_nodes += bad
            if not math.isfinite(value):
                return math.inf, bad_nodes
            total += value
        return total, bad_nodes

    def solutions_at(self, theta: ModelParams, alpha: Optional[float]):
        """Node multipliers and implied weights per maturity group."""
        pref = RiskPreference(alpha) if alpha is not None else self.cset.pref
        cset = self.cset if pref is self.cset.pref else replace(self.cset, pref=pref)
        out = {}
        for k, (R, payoffs) in self.groups.items():
            _, sol, _ = _group_logel(R, theta, cset, k, payoffs=payoffs,
                                     keep_solution=True)
            if sol is not None:
                lam, w, iters, status = sol
                out[k] = {"lam": lam, "weights": 1.0 / (len(R) * w),
                          "iterations": iters, "status": status}
        return out


def estimate(returns: ReturnSeries, cset: ConstraintSet, model_kind: str,
             init: ModelParams, bounds: Optional[dict] = None,
             init_alpha: Optional[float] = None, n_restarts: int = 5,
             seed: int = 0, xatol: float = 1e-6, fatol: float = 1e-8,
             maxfev: Optional[int] = None,
             compute_sigma: bool = True) -> EstimationResult:
    """Minimize the integrated statistic over the parameter space.

    Derivative-free simplex search in transformed coordinates (log for scale
    parameters, logit for probabilities) from ``init`` plus ``n_restarts``
    uniform random starts inside ``bounds``. ``init_alpha`` adds the
    preference curvature to the estimated vector. Infeasible regions are
    soft: inside the search they contribute a large ranked surrogate that
    slopes back towards feasibility, while the reported objective is the
    exact statistic re-evaluated at the optimum.

    Raises
    ------
    InfeasibleEverywhere
        If every evaluated point had an infinite objective.
    NoConvergence
        If the optimizer failed on every start.
    """
    if model_kind not in _MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    with_alpha = init_alpha is not None
    names = param_names(model_kind, with_alpha)
    box = default_bounds(model_kind, with_alpha)
    if bounds:
        box.update(bounds)
    lo = np.array([_to_internal(nm, box[nm][0]) for nm in names])
    hi = np.array([_to_internal(nm, box[nm][1]) for nm in names])

    problem = _Problem(returns, cset)
    x0 = params_to_vector(init, init_alpha)
    z0 = np.array([_to_internal(nm, x) for nm, x in zip(names, x0)])
    if np.any(z0 < lo) or np.any(z0 > hi):
        raise ValueError("initial point outside bounds")

    n_evals = [0]
    n_inf = [0]

    def fun(z):
        z = np.clip(z, lo, hi)
        vec = np.array([_from_internal(nm, zz) for nm, zz in zip(names, z)])
        theta, alpha = vector_to_params(vec, model_kind, with_alpha)
        value, bad_nodes = problem.objective(theta, alpha, penalize=True)
        n_evals[0] += 1
        if bad_nodes or not math.isfinite(value):
            n_inf[0] += 1
        return value

    rng = rng_stream(seed, substream=2**64)
    starts = [z0]
    for _ in range(n_restarts):
        starts.append(lo + rng.random(len(names)) * (hi - lo))

    best = None
    attempts = []
    for z_start in starts:
        res = minimize(fun, z_start, method="Nelder-Mead",
                       options={"xatol": xatol, "fatol": fatol,
                                "maxfev": maxfev or 600 * len(names),
                                "disp": False})
        attempts.append((float(res.fun), bool(res.success)))
        if math.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise InfeasibleEverywhere("objective was infinite at every evaluated point")
    if not any(ok for _, ok in attempts):
        raise NoConvergence(
            f"none of the {len(starts)} starts met the simplex tolerances")

    z_hat = np.clip(best.x, lo, hi)
    vec_hat = np.array([_from_internal(nm, zz) for nm, zz in zip(names, z_hat)])
    theta_hat, alpha_hat = vector_to_params(vec_hat, model_kind, with_alpha)
    true_objective, _ = problem.objective(theta_hat, alpha_hat, penalize=False)
    if not math.isfinite(true_objective):
        raise InfeasibleEverywhere(
            "best point found is still infeasible for the exact objective")

    at_bound = {nm: bool(min(abs(zz - l), abs(zz - h)) < 1e-6)
                for nm, zz, l, h in zip(names, z_hat, lo, hi)}
    solutions = problem.solutions_at(theta_hat, alpha_hat)
    diagnostics = {
        "outer_iterations": int(best.nit),
        "function_evaluations": n_evals[0],
        "infeasible_evaluations": n_inf[0],
        "touched_infeasible_region": n_inf[0] > 0,
        "at_bound": at_bound,
        "starts": attempts,
        "inner_iterations_max": max(
            (int(s["iterations"].max()) for s in solutions.values()), default=0),
    }

    sigma_hat = None
    if compute_sigma:
        from .asymptotics import sandwich_sigma

        try:
            sigma_hat = sandwich_sigma(returns, theta_hat, cset, alpha=alpha_hat)
        except Exception as exc:  # inference failure should not void the fit
            diagnostics["sigma_error"] = repr(exc)

    return EstimationResult(
        theta_hat=theta_hat,
        objective=float(true_objective),
        sigma_hat=sigma_hat,
        alpha_hat=alpha_hat,
        multipliers={k: s["lam"] for k, s in solutions.items()},
        node_weights={k: s["weights"] for k, s in solutions.items()},
        diagnostics=diagnostics,
    )
