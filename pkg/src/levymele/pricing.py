"""Normalized European call prices ``c = C/S`` under each return model.

Moneyness is quoted spot-over-strike, ``m = S/K``, so the strike leg carries
``1/m`` and the discounted payoff of one period's return ``R`` is
``exp(-rT) * max(e^R - 1/m, 0)``. All routes price under the measure obtained
by replacing the drift ``mu`` with ``r`` in the model's own drift slot, which
is the measure encoded by the ``rn_*`` density ratios in :mod:`.models`.

Routes: Black-Scholes closed form, a Poisson mixture of Black-Scholes prices
for lognormal jumps, a damped Fourier integral over the characteristic
function, and a Bromwich-line inversion of the strike-space Laplace transform
``exp(-rT) S^{xi+1} exp(G(xi+1) T) / (xi (xi+1))``. The last two serve as
independent cross-checks of each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson
from scipy.special import ndtr

from . import simulate as _sim
from .errors import (
    ContourInvalid,
    CrossRouteDisagreement,
    DampingInvalid,
    InversionNotConverged,
    ModelMismatch,
    QuadratureNotConverged,
    TruncationNotConverged,
)
from .models import (
    BsParams,
    KouParams,
    MarketEnv,
    MertonParams,
    ModelParams,
    RiskPreference,
    _mgf_exponent_z,
    characteristic_function,
    rn_risk_premium,
)

__all__ = [
    "OptionQuote",
    "PricerConfig",
    "DEFAULT_PRICER",
    "price_bs",
    "price_merton_series",
    "price_carr_madan",
    "price_laplace",
    "price",
    "pricing_log_drift",
    "carr_madan_alpha",
    "risk_neutral_cf",
]


@dataclass(frozen=True)
class OptionQuote:
    """One observed European call, normalized by spot.

    ``moneyness`` is ``S/K``; ``price_normalized`` is the call premium divided
    by spot; ``maturity_periods`` counts whole observation periods.
    """

    moneyness: float
    price_normalized: float
    maturity_periods: int
    rate: float

    def __post_init__(self):
        if not (self.moneyness > 0 and math.isfinite(self.moneyness)):
            raise ValueError("moneyness must be positive")
        if not (-1e-12 <= self.price_normalized <= 1.0 + 1e-9):
            raise ValueError("normalized call price must lie in [0, 1]")
        if not (isinstance(self.maturity_periods, int) and self.maturity_periods >= 1):
            raise ValueError("maturity must be a positive integer period count")
        if not math.isfinite(self.rate):
            raise ValueError("rate must be finite")


@dataclass(frozen=True)
class PricerConfig:
    """Numerical knobs for the Fourier and Laplace routes.

    ``fourier_umax``/``fourier_nodes`` set the damped Fourier grid,
    ``laplace_c0``/``laplace_vmax``/``laplace_nodes`` the inversion contour,
    ``quad_tol`` the grid-doubling agreement both routes must pass,
    ``merton_trunc`` the series cutoff, and ``mc_draws``/``mc_seed`` the
    Monte Carlo fallback used for preference-tilted prices.
    """

    carr_madan_alpha: float = 1.5
    fourier_umax: float = 400.0
    fourier_nodes: int = 4096
    laplace_c0: float = 1.5
    laplace_vmax: float = 400.0
    laplace_nodes: int = 4096
    merton_trunc: int = 60
    quad_tol: float = 1e-6
    cross_route_tol: float = 1e-3
    mc_draws: int = 400_000
    mc_seed: int = 714025

    def __post_init__(self):
        if min(self.fourier_umax, self.laplace_vmax, self.quad_tol,
               self.cross_route_tol) <= 0:
            raise ValueError("grid limits and tolerances must be positive")
        if min(self.fourier_nodes, self.laplace_nodes) < 64:
            raise ValueError("quadrature grids need at least 64 nodes")
        if self.merton_trunc < 1 or self.mc_draws < 1:
            raise ValueError("series cutoff and draw count must be positive")


DEFAULT_PRICER = PricerConfig()


def _norm_bs(m: float, sigma: float, r: float, T: float) -> float:
    """Closed-form normalized call, spot-over-strike moneyness."""
    sq = sigma * math.sqrt(T)
    d1 = (math.log(m) + (r + 0.5 * sigma**2) * T) / sq
    d2 = d1 - sq
    return float(ndtr(d1) - math.exp(-r * T) * ndtr(d2) / m)


def price_bs(m: float, sigma: float, env: MarketEnv) -> float:
    """Black-Scholes normalized call over the horizon ``env.delta``.

    ``N(d1) - e^{-rT} N(d2) / m`` with ``d1 = [log m + (r + sigma^2/2)T] /
    (sigma sqrt(T))``; increasing in both ``m`` and ``sigma``.
    """
    if not (m > 0 and sigma > 0):
        raise ValueError("m and sigma must be positive")
    return _norm_bs(m, sigma, env.r, env.delta)


def price_merton_series(m: float, params: MertonParams, env: MarketEnv,
                        cfg: PricerConfig = DEFAULT_PRICER) -> float:
    """Poisson mixture of Black-Scholes prices for the lognormal jump model.

    Conditioning on ``n`` jumps gives weight ``e^{-lam' T}(lam' T)^n / n!``
    with ``lam' = lam (1 + kappa)``, volatility ``sqrt(sigma^2 + n sigma_j^2/T)``
    and rate ``r - lam kappa + n (mu_j + sigma_j^2/2)/T``. Exactly
    :func:`price_bs` when ``lam = 0``.
    """
    T, r = env.delta, env.r
    lam_bar = params.lam * (1.0 + params.kappa) * T
    total = 0.0
    w = math.exp(-lam_bar)
    cum_w = w
    for n in range(cfg.merton_trunc):
        sig_n = math.sqrt(params.sigma**2 + n * params.sigma_j**2 / T)
        r_n = r - params.lam * params.kappa + n * (params.mu_j + 0.5 * params.sigma_j**2) / T
        total += w * _norm_bs(m, sig_n, r_n, T)
        if 1.0 - cum_w < 1e-16:
            return total
        w *= lam_bar / (n + 1)
        cum_w += w
    # remaining weight bounds the dropped terms since each price is <= 1
    left = 1.0 - cum_w + w
    if left > 1e-10:
        raise TruncationNotConverged(
            f"mixture weight {left:.3e} left after {cfg.merton_trunc} terms")
    return total


def pricing_log_drift(params: ModelParams, env: MarketEnv) -> float:
    """Risk-neutral log-price drift per year, drift slot ``mu`` replaced by ``r``."""
    if isinstance(params, BsParams):
        return env.r - 0.5 * params.sigma**2
    if isinstance(params, MertonParams):
        return env.r - params.lam * params.kappa - 0.5 * params.sigma**2
    if isinstance(params, KouParams):
        return env.r - 0.5 * params.sigma**2
    raise ModelMismatch(f"no pricing drift for {type(params).__name__}")


def risk_neutral_cf(params: ModelParams, env: MarketEnv) -> Callable:
    """Characteristic function of the log-return under the pricing measure."""
    q_params = replace(params, mu=env.r)
    return lambda t: characteristic_function(t, q_params, env)


def carr_madan_alpha(params: ModelParams, cfg: PricerConfig = DEFAULT_PRICER) -> float:
    """Damping that keeps the shifted characteristic function finite.

    The double-exponential model needs ``alpha + 1 < eta1``; when the default
    binds it is pulled back to ``0.75 (eta1 - 1)``.
    """
    alpha = cfg.carr_madan_alpha
    if isinstance(params, KouParams) and alpha + 1.0 >= params.eta1:
        alpha = 0.75 * (params.eta1 - 1.0)
    if alpha <= 0:
        raise DampingInvalid(f"no admissible damping, alpha = {alpha}")
    return alpha


def _cm_integral(k_log: float, cf_q: Callable, T: float, r: float,
                 alpha: float, umax: float, nodes: int) -> float:
    u = np.linspace(0.0, umax, nodes + 1)
    z = u - (alpha + 1.0) * 1j
    denom = alpha**2 + alpha - u**2 + 1j * (2.0 * alpha + 1.0) * u
    integrand = np.exp(-1j * u * k_log) * math.exp(-r * T) * cf_q(z) / denom
    return math.exp(-alpha * k_log) / math.pi * float(simpson(integrand.real, x=u))


def price_carr_madan(m: float, cf_q: Callable, T: float, r: float,
                     cfg: PricerConfig = DEFAULT_PRICER,
                     alpha: Optional[float] = None) -> float:
    """Damped-Fourier normalized call from a risk-neutral characteristic function.

    ``cf_q`` must accept complex arguments and describe the log-return over
    the full maturity ``T``. The Hermitian symmetry of the integrand halves
    the integral onto ``[0, umax]``; a doubled grid must agree within
    ``cfg.quad_tol``. Damping values in ``[-1, 0]`` are rejected (neither the
    call nor the put transform converges there).
    """
    if alpha is None:
        alpha = cfg.carr_madan_alpha
    if -1.0 <= alpha <= 0.0:
        raise DampingInvalid(f"damping alpha = {alpha} lies in the divergent band [-1, 0]")
    probe = cf_q(np.array([-(alpha + 1.0) * 1j]))
    if not np.all(np.isfinite(probe)):
        raise DampingInvalid(
            f"shifted characteristic function not finite at alpha = {alpha}")
    k_log = -math.log(m)
    coarse = _cm_integral(k_log, cf_q, T, r, alpha, cfg.fourier_umax, cfg.fourier_nodes)
    fine = _cm_integral(k_log, cf_q, T, r, alpha, cfg.fourier_umax, 2 * cfg.fourier_nodes)
    if abs(fine - coarse) > cfg.quad_tol:
        raise QuadratureNotConverged(
            f"grid doubling moved the price by {abs(fine - coarse):.3e}")
    return max(fine, 0.0)


def _laplace_integral(x: float, G: Callable, T: float, r: float, c0: float,
                      vmax: float, nodes: int) -> float:
    v = np.linspace(0.0, vmax, nodes + 1)
    xi = c0 + 1j * v
    transform = math.exp(-r * T) * np.exp(G(xi + 1.0) * T) / (xi * (xi + 1.0))
    return float(simpson((np.exp(xi * x) * transform).real, x=v)) / math.pi


def price_laplace(m: float, params, env: MarketEnv, T: float,
                  cfg: PricerConfig = DEFAULT_PRICER,
                  mu_tilde: Optional[float] = None) -> float:
    """Normalized call via Bromwich inversion of the strike-space transform.

    The transform ``exp(-rT) exp(G(xi+1)T) / (xi(xi+1))`` (spot normalized to
    one) is inverted along the vertical line ``Re xi = c0``; the integrand
    decays like ``exp(-sigma^2 T v^2 / 2)``, so a plain Simpson rule on the
    line converges rapidly. The contour must satisfy ``0 < c0`` and, for the
    double-exponential model, ``c0 + 1 < eta1``. ``mu_tilde`` overrides the
    log-price drift (default: :func:`pricing_log_drift`).
    """
    if not isinstance(params, (MertonParams, KouParams)):
        raise ModelMismatch("transform pricing is defined for the jump models")
    env_T = MarketEnv(env.r, T)
    if mu_tilde is None:
        mu_tilde = pricing_log_drift(params, env_T)
    c0 = cfg.laplace_c0
    if isinstance(params, KouParams) and c0 + 1.0 >= params.eta1:
        c0 = 0.75 * (params.eta1 - 1.0)
    if c0 <= 0:
        raise ContourInvalid(f"contour abscissa {c0} must be positive")

    def G(z):
        return _mgf_exponent_z(z, params, mu_tilde)

    x = math.log(m)
    coarse = _laplace_integral(x, G, T, env.r, c0, cfg.laplace_vmax, cfg.laplace_nodes)
    fine = _laplace_integral(x, G, T, env.r, c0, cfg.laplace_vmax, 2 * cfg.laplace_nodes)
    if abs(fine - coarse) > cfg.quad_tol:
        raise InversionNotConverged(
            f"grid doubling moved the price by {abs(fine - coarse):.3e}")
    return max(fine, 0.0)


def _price_tilted_mc(m: float, params: ModelParams, env: MarketEnv,
                     maturity_periods: int, pref: RiskPreference,
                     cfg: PricerConfig) -> float:
    """Preference-tilted price by physical simulation weighted with the kernel.

    Slow path: draws ``cfg.mc_draws`` returns over the full maturity under the
    physical law and averages ``discounted payoff * rn_risk_premium``.
    """
    env_k = env.horizon(maturity_periods)
    spec = _sim.SimSpec(params, env_k, cfg.mc_draws, cfg.mc_seed)
    R = _sim.simulate(spec).returns
    payoff = math.exp(-env_k.r * env_k.delta) * np.maximum(np.exp(R) - 1.0 / m, 0.0)
    return float(np.mean(payoff * rn_risk_premium(R, params, pref, env_k)))


def price(params: ModelParams, m: float, maturity_periods: int, env: MarketEnv,
          pref: Optional[RiskPreference] = None,
          cfg: PricerConfig = DEFAULT_PRICER) -> float:
    """Authoritative normalized call price for one ``(m, maturity)`` shape.

    Dispatch: closed form for the Gaussian model, the Poisson mixture for
    lognormal jumps, and the damped Fourier route for double-exponential
    jumps, cross-checked against the Laplace route within
    ``cfg.cross_route_tol``. A risk preference switches every model to the
    tilted Monte Carlo path.
    """
    T = env.delta * maturity_periods
    env_T = MarketEnv(env.r, T)
    if pref is not None:
        return _price_tilted_mc(m, params, env, maturity_periods, pref, cfg)
    if isinstance(params, BsParams):
        return price_bs(m, params.sigma, env_T)
    if isinstance(params, MertonParams):
        return price_merton_series(m, params, env_T, cfg)
    if isinstance(params, KouParams):
        alpha = carr_madan_alpha(params, cfg)
        fourier = price_carr_madan(m, risk_neutral_cf(params, env_T), T, env.r,
                                   cfg, alpha=alpha)
        laplace = price_laplace(m, params, env, T, cfg)
        if abs(fourier - laplace) > cfg.cross_route_tol:
            raise CrossRouteDisagreement(
                f"Fourier {fourier:.6e} vs Laplace {laplace:.6e}")
        return fourier
    raise ModelMismatch(f"no pricing route for {type(params).__name__}")
