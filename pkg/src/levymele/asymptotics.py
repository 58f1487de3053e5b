"""Plug-in sandwich covariance of the scaled estimation error.

With ``V(t) = E[g(t) g(t)']``, ``J(t) = E[d g(t)/d theta]`` and the cross-node
second moment ``Gamma(t1, t2) = E[g(t1) g(t2)']``, the covariance of
``sqrt(n) (theta_hat - theta0)`` is ``B^{-1} M B^{-1}`` where
``B = -integral J' V^{-1} J`` and
``M = integral integral J(t1)' V(t1)^{-1} Gamma(t1,t2) V(t2)^{-1} J(t2)``.
Expectations are replaced by sample averages at the estimate and the integrals
by the constraint set's quadrature weights; the same weight measure is used
for both integration variables. Jacobians are central finite differences with
an analytic cross-check available for the Gaussian model's moment rows.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .el import (
    ConstraintSet,
    _discounted_payoffs,
    _residual_tensor,
    aggregate_returns,
    param_names,
    params_to_vector,
    vector_to_params,
)
from .errors import BreadSingular
from .models import BsParams, MarketEnv, ModelParams, RiskPreference
from .simulate import ReturnSeries

__all__ = [
    "SandwichParts",
    "MonotonicityReport",
    "estimate_jacobian",
    "estimate_second_moments",
    "sandwich_parts",
    "sandwich_sigma",
    "monotonicity_check",
    "bs_cf_row_jacobian",
]

_FD_SCALE = 1e-5
_EIG_WARN = -1e-8


@dataclass
class SandwichParts:
    """Intermediate matrices of the sandwich estimator.

    ``s11`` holds ``-V(t)`` per node (``(T, k, k)``), ``s12`` the mean
    Jacobians (``(T, k, d)``), ``gamma`` the cross-node second moments
    (``(T, T, k, k)``); ``bread`` and ``meat`` are the assembled ``(d, d)``
    integrals and ``min_eigenvalue`` the smallest eigenvalue of the sandwich
    before flooring.
    """

    s11: np.ndarray
    s12: np.ndarray
    gamma: np.ndarray
    bread: np.ndarray
    meat: np.ndarray
    sigma: np.ndarray
    min_eigenvalue: float


@dataclass
class MonotonicityReport:
    """Ordering of two nested constraint sets' covariances."""

    difference: np.ndarray
    min_eigenvalue: float
    tolerance: float
    passed: bool


def _model_kind(theta: ModelParams) -> str:
    return {"BsParams": "bs", "MertonParams": "merton", "KouParams": "kou"}[
        type(theta).__name__]


def _group_tensor(R, theta, cset, k, alpha, payoffs=None):
    pref = RiskPreference(alpha) if alpha is not None else cset.pref
    env_k = cset.env.horizon(k)
    quotes = cset.quotes_by_maturity.get(k, ())
    return _residual_tensor(R, theta, cset.t_grid, quotes, env_k, pref,
                            payoffs=payoffs)


def _jacobian_tensor(returns: ReturnSeries, theta: ModelParams,
                     cset: ConstraintSet, maturity_k: int = 1,
                     alpha: Optional[float] = None,
                     step_scale: float = _FD_SCALE) -> np.ndarray:
    """Mean residual Jacobian at every node, shape ``(T, k, d)``.

    Central differences in the natural parameter coordinates with step
    ``step_scale * max(1, |theta_i|)`` per coordinate.
    """
    kind = _model_kind(theta)
    with_alpha = alpha is not None
    names = param_names(kind, with_alpha)
    vec = params_to_vector(theta, alpha)
    R = aggregate_returns(returns.returns, maturity_k)
    T = len(cset.t_grid)
    dim = 2 + len(cset.quotes_by_maturity.get(maturity_k, ()))
    out = np.empty((T, dim, len(names)))
    for i in range(len(names)):
        h = step_scale * max(1.0, abs(vec[i]))
        up, dn = vec.copy(), vec.copy()
        up[i] += h
        dn[i] -= h
        theta_up, a_up = vector_to_params(up, kind, with_alpha)
        theta_dn, a_dn = vector_to_params(dn, kind, with_alpha)
        g_up = _group_tensor(R, theta_up, cset, maturity_k, a_up)
        g_dn = _group_tensor(R, theta_dn, cset, maturity_k, a_dn)
        out[:, :, i] = (g_up.mean(axis=1) - g_dn.mean(axis=1)) / (2.0 * h)
    return out


def estimate_jacobian(returns: ReturnSeries, theta: ModelParams, t: float,
                      cset: ConstraintSet, maturity_k: int = 1,
                      alpha: Optional[float] = None) -> np.ndarray:
    """Sample mean of ``d g / d theta`` at one frequency node, ``(k, d)``.

    Warns (without failing) when the matrix falls short of full expected
    rank ``min(k, d)``.
    """
    node = ConstraintSet(np.array([t]), np.array([1.0]),
                         cset.quotes_by_maturity, cset.env, cset.pref)
    jac = _jacobian_tensor(returns, theta, node, maturity_k, alpha)[0]
    expected = min(jac.shape)
    rank = np.linalg.matrix_rank(jac, tol=1e-10 * max(1.0, float(np.abs(jac).max())))
    if rank < expected:
        warnings.warn(f"residual Jacobian rank {rank} < {expected}",
                      RuntimeWarning, stacklevel=2)
    return jac


def estimate_second_moments(returns: ReturnSeries, theta: ModelParams,
                            cset: ConstraintSet, t1: float, t2: float,
                            maturity_k: int = 1,
                            alpha: Optional[float] = None) -> np.ndarray:
    """Sample average of ``g(t1) g(t2)'``; equals ``-s11(t1)`` when ``t1 == t2``."""
    R = aggregate_returns(returns.returns, maturity_k)
    grid = np.array([t1, t2])
    g = _group_tensor(R, theta, ConstraintSet(grid, np.array([0.5, 0.5]),
                                              cset.quotes_by_maturity, cset.env,
                                              cset.pref), maturity_k, alpha)
    return g[0].T @ g[1] / len(R)


def sandwich_parts(returns: ReturnSeries, theta: ModelParams,
                   cset: ConstraintSet, maturity_k: int = 1,
                   alpha: Optional[float] = None,
                   cond_limit: float = 1e12) -> SandwichParts:
    """Assemble every matrix of the sandwich estimator for one maturity group."""
    R = aggregate_returns(returns.returns, maturity_k)
    n = len(R)
    quotes = cset.quotes_by_maturity.get(maturity_k, ())
    env_k = cset.env.horizon(maturity_k)
    payoffs = _discounted_payoffs(R, quotes, env_k) if quotes else None
    g = _group_tensor(R, theta, cset, maturity_k, alpha, payoffs=payoffs)
    T, _, k = g.shape

    flat = g.transpose(0, 2, 1).reshape(T * k, n)
    gram = flat @ flat.T / n
    gamma = gram.reshape(T, k, T, k).transpose(0, 2, 1, 3)
    v = gamma[np.arange(T), np.arange(T)]  # V(t) = E[g g']
    jac = _jacobian_tensor(returns, theta, cset, maturity_k, alpha)

    w = cset.t_weights
    # A(t) = J(t)' V(t)^{-1}, solved batched; bread = -sum w A J
    a = np.linalg.solve(v, jac).transpose(0, 2, 1)
    bread = -np.einsum("t,tdk,tke->de", w, a, jac)
    cond = np.linalg.cond(bread)
    if not np.isfinite(cond) or cond > cond_limit:
        raise BreadSingular(f"outer matrix condition number {cond:.3e}")
    aw_flat = (w[:, None, None] * a).transpose(1, 0, 2).reshape(-1, T * k)
    meat = aw_flat @ gram @ aw_flat.T

    bread_inv = np.linalg.inv(bread)
    sigma = bread_inv @ meat @ bread_inv
    sigma = 0.5 * (sigma + sigma.T)
    eigval, eigvec = np.linalg.eigh(sigma)
    min_eig = float(eigval.min())
    if min_eig < 0:
        sigma = (eigvec * np.maximum(eigval, 0.0)) @ eigvec.T
    return SandwichParts(s11=-v, s12=jac, gamma=gamma, bread=bread, meat=meat,
                         sigma=sigma, min_eigenvalue=min_eig)


def sandwich_sigma(returns: ReturnSeries, theta: ModelParams,
                   cset: ConstraintSet, maturity_k: Optional[int] = None,
                   alpha: Optional[float] = None) -> np.ndarray:
    """Covariance matrix of ``sqrt(n) (theta_hat - theta0)``.

    Symmetrized and floored at zero eigenvalues; a warning is raised if the
    smallest eigenvalue before flooring is materially negative. When several
    maturity groups are present the shortest one (largest effective sample) is
    used.
    """
    if maturity_k is None:
        maturity_k = min(cset.maturities)
    parts = sandwich_parts(returns, theta, cset, maturity_k, alpha)
    if parts.min_eigenvalue < _EIG_WARN * max(1.0, float(np.trace(parts.sigma))):
        warnings.warn(
            f"sandwich eigenvalue {parts.min_eigenvalue:.3e} floored to zero",
            RuntimeWarning, stacklevel=2)
    return parts.sigma


def monotonicity_check(returns: ReturnSeries, theta: ModelParams,
                       cset_full: ConstraintSet, cset_reduced: ConstraintSet,
                       maturity_k: int = 1,
                       alpha: Optional[float] = None) -> MonotonicityReport:
    """Verify that dropping an estimating equation cannot shrink the covariance.

    ``cset_reduced`` must be ``cset_full`` with option rows removed. Passes
    when the smallest eigenvalue of ``Sigma_reduced - Sigma_full`` is above
    ``-1e-6 * trace(Sigma_full)``.
    """
    full = sandwich_parts(returns, theta, cset_full, maturity_k, alpha).sigma
    reduced = sandwich_parts(returns, theta, cset_reduced, maturity_k, alpha).sigma
    diff = reduced - full
    min_eig = float(np.linalg.eigvalsh(0.5 * (diff + diff.T)).min())
    tol = 1e-6 * float(np.trace(full))
    return MonotonicityReport(difference=diff, min_eigenvalue=min_eig,
                              tolerance=tol, passed=min_eig >= -tol)


def bs_cf_row_jacobian(t: float, params: BsParams, env: MarketEnv) -> np.ndarray:
    """Analytic derivatives of the two moment rows for the Gaussian model.

    Rows are ``cos(tR) - Re phi`` and ``sin(tR) - Im phi``, so the Jacobian is
    ``-d phi / d(mu, sigma)`` split into real and imaginary parts. Used as a
    finite-difference cross-check.
    """
    d, mu, s = env.delta, params.mu, params.sigma
    phi = np.exp(d * (1j * t * (mu - 0.5 * s**2) - 0.5 * s**2 * t**2))
    dmu = 1j * t * d * phi
    dsigma = d * (-1j * t * s - s * t**2) * phi
    return -np.array([[dmu.real, dsigma.real], [dmu.imag, dsigma.imag]])
