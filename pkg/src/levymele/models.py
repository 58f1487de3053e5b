"""Return-distribution models: characteristic functions, densities and measure changes.

Three models for per-period log-returns ``R = log S_{t+delta} - log S_t`` are
supported:

* geometric Brownian motion (``BsParams``),
* lognormal jump diffusion (``MertonParams``),
* double-exponential jump diffusion (``KouParams``).

Every operation takes a :class:`MarketEnv` carrying the risk-free rate and the
period length ``delta`` in years, so multi-period quantities are obtained by
passing ``delta * k``. The risk-neutral measure used throughout replaces the
drift ``mu`` by ``r`` inside each model's own drift slot and leaves the jump
parameters untouched; the change-of-measure functions ``rn_*`` return the
density ratio (risk-neutral over physical) evaluated at a return, so that
``E_physical[payoff * rn]`` is a risk-neutral expectation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import log_ndtr, logsumexp

from .errors import DomainError, InvalidRegime, ModelMismatch, TruncationNotConverged

__all__ = [
    "BsParams",
    "MertonParams",
    "KouParams",
    "RiskPreference",
    "MarketEnv",
    "ModelParams",
    "cf_bs",
    "cf_merton",
    "cf_kou",
    "characteristic_function",
    "density_merton",
    "density_kou_approx",
    "rn_bs",
    "rn_merton",
    "rn_kou",
    "rn_derivative",
    "rn_risk_premium",
    "mgf_exponent",
    "jump_mean_exponential",
]

_TRUNC_DEFAULT = 60
_TERM_TOL = 1e-14
_TAIL_TOL = 1e-10


@dataclass(frozen=True)
class MarketEnv:
    """Risk-free rate per year and observation period length in years."""

    r: float
    delta: float

    def __post_init__(self):
        if not math.isfinite(self.r):
            raise ValueError("risk-free rate must be finite")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError("period length delta must be positive")

    def horizon(self, periods: int) -> "MarketEnv":
        """Environment spanning ``periods`` consecutive observation periods."""
        return MarketEnv(self.r, self.delta * periods)


@dataclass(frozen=True)
class BsParams:
    """Drift per year and volatility per square-root year.

    ``sigma == 0`` is accepted so degenerate simulation paths can be
    expressed; density and measure-change operations require ``sigma > 0``.
    """

    mu: float
    sigma: float

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValueError("mu must be finite")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValueError("sigma must be nonnegative")


@dataclass(frozen=True)
class MertonParams:
    """Diffusion plus compound-Poisson jumps with lognormal jump sizes.

    ``lam`` is the jump intensity per year; the log jump size is normal with
    mean ``mu_j`` and standard deviation ``sigma_j``.
    """

    mu: float
    sigma: float
    lam: float
    mu_j: float
    sigma_j: float

    def __post_init__(self):
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValueError("sigma must be nonnegative")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError("lam must be nonnegative")
        if not (self.sigma_j >= 0 and math.isfinite(self.sigma_j)):
            raise ValueError("sigma_j must be nonnegative")
        if not math.isfinite(self.mu) or not math.isfinite(self.mu_j):
            raise ValueError("drift parameters must be finite")

    @property
    def kappa(self) -> float:
        """Mean relative jump size ``E[J - 1]``; not stored, derived."""
        return math.exp(self.mu_j + 0.5 * self.sigma_j**2) - 1.0


@dataclass(frozen=True)
class KouParams:
    """Diffusion plus compound-Poisson jumps with double-exponential sizes.

    An up-jump (probability ``p``) is exponential with rate ``eta1``; a
    down-jump is the negative of an exponential with rate ``eta2``.
    ``eta1 > 1`` keeps ``E[e^jump]`` finite.
    """

    mu: float
    sigma: float
    lam: float
    p: float
    eta1: float
    eta2: float

    def __post_init__(self):
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValueError("sigma must be nonnegative")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError("lam must be nonnegative")
        if not (0.0 <= self.p <= 1.0):
            raise ValueError("p must lie in [0, 1]")
        if not (self.eta1 > 1.0):
            raise ValueError("eta1 must exceed 1")
        if not (self.eta2 > 0.0):
            raise ValueError("eta2 must be positive")
        if not math.isfinite(self.mu):
            raise ValueError("mu must be finite")


@dataclass(frozen=True)
class RiskPreference:
    """Power-utility curvature of the representative investor.

    ``alpha = 1`` is the risk-neutral boundary where the preference tilt is
    identically one; it is accepted for checks but excluded from estimation
    bounds.
    """

    alpha: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")


ModelParams = Union[BsParams, MertonParams, KouParams]


# ---------------------------------------------------------------------------
# Characteristic functions of the one-horizon log-return.
# ---------------------------------------------------------------------------


def cf_bs(t, params: BsParams, env: MarketEnv):
    """Characteristic function ``E[e^{itR}]`` of the Gaussian return.

    Accepts real or complex ``t`` (scalar or array). Over a horizon
    ``env.delta`` the return is normal with mean ``(mu - sigma^2/2) * delta``
    and variance ``sigma^2 * delta``.
    """
    t = np.asarray(t)
    d, mu, s2 = env.delta, params.mu, params.sigma**2
    return np.exp(d * (1j * t * (mu - 0.5 * s2) - 0.5 * s2 * t * t))


def cf_merton(t, params: MertonParams, env: MarketEnv):
    """Characteristic function of the jump-diffusion return (lognormal jumps).

    The drift carries the jump compensator ``lam * kappa`` so the expected
    simple return per year stays ``mu``. Reduces to :func:`cf_bs` when
    ``lam = 0``.
    """
    t = np.asarray(t)
    d, s2 = env.delta, params.sigma**2
    drift = params.mu - params.lam * params.kappa - 0.5 * s2
    jump = np.exp(1j * params.mu_j * t - 0.5 * params.sigma_j**2 * t * t) - 1.0
    return np.exp(d * (1j * t * drift - 0.5 * s2 * t * t + params.lam * jump))


def cf_kou(t, params: KouParams, env: MarketEnv):
    """Characteristic function of the double-exponential jump-diffusion return.

    Built from the Levy triplet: drift ``mu - sigma^2/2``, diffusion ``sigma``
    and compound-Poisson jump transform
    ``p*eta1/(eta1 - it) + (1-p)*eta2/(eta2 + it) - 1``.
    """
    t = np.asarray(t)
    d, s2 = env.delta, params.sigma**2
    e1, e2, p = params.eta1, params.eta2, params.p
    jump = p * e1 / (e1 - 1j * t) + (1.0 - p) * e2 / (e2 + 1j * t) - 1.0
    return np.exp(d * (1j * t * (params.mu - 0.5 * s2) - 0.5 * s2 * t * t + params.lam * jump))


def characteristic_function(t, params: ModelParams, env: MarketEnv):
    """Dispatch to the model-specific characteristic function."""
    if isinstance(params, BsParams):
        return cf_bs(t, params, env)
    if isinstance(params, MertonParams):
        return cf_merton(t, params, env)
    if isinstance(params, KouParams):
        return cf_kou(t, params, env)
    raise ModelMismatch(f"no characteristic function for {type(params).__name__}")


# ---------------------------------------------------------------------------
# Densities.
# ---------------------------------------------------------------------------


def _merton_log_density(x, params: MertonParams, env: MarketEnv, drift: float,
                        trunc: int) -> np.ndarray:
    """Log of the Poisson-mixture-of-normals return density.

    ``drift`` plays the role of the price drift per year; the log-return drift
    per period is ``(drift - sigma^2/2 - lam*kappa) * delta`` plus ``n * mu_j``
    given ``n`` jumps. Terms are accumulated until the running term falls
    below ``_TERM_TOL`` relative to the partial sum (or ``trunc`` terms), and
    the remaining Poisson mass bounds the dropped tail.
    """
    if params.sigma <= 0:
        raise InvalidRegime("density requires sigma > 0")
    if trunc < 1:
        raise ValueError("series truncation must be at least 1")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = env.delta
    lam_d = params.lam * d
    base = (drift - 0.5 * params.sigma**2 - params.lam * params.kappa) * d

    log_terms = []
    log_w = -lam_d  # log Poisson weight, n = 0
    cum_w = 0.0
    peak = -np.inf
    n_used = trunc
    for n in range(trunc):
        var = d * params.sigma**2 + n * params.sigma_j**2
        mean = base + n * params.mu_j
        log_pdf = -0.5 * (x - mean) ** 2 / var - 0.5 * math.log(2 * math.pi * var)
        log_terms.append(log_w + log_pdf)
        cum_w += math.exp(log_w)
        term_peak = log_w - 0.5 * math.log(2 * math.pi * var)
        peak = max(peak, term_peak)
        if term_peak - peak < math.log(_TERM_TOL):
            n_used = n + 1
            break
        log_w += math.log(lam_d) - math.log(n + 1) if lam_d > 0 else -np.inf
        if not np.isfinite(log_w):
            n_used = n + 1
            break

    # Remaining Poisson mass, each term bounded by its density peak.
    tail_mass = max(0.0, 1.0 - cum_w)
    min_var = d * params.sigma**2 + n_used * params.sigma_j**2
    tail_bound = tail_mass / math.sqrt(2 * math.pi * min_var)
    if tail_bound > _TAIL_TOL * math.exp(peak):
        raise TruncationNotConverged(
            f"density series tail bound {tail_bound:.3e} after {n_used} terms")
    return logsumexp(np.stack(log_terms, axis=0), axis=0)


def density_merton(x, params: MertonParams, env: MarketEnv, drift: float,
                   trunc: int = _TRUNC_DEFAULT):
    """Return density of the jump-diffusion model at log-return ``x``.

    ``drift`` selects the measure: pass ``params.mu`` for the physical density
    and ``env.r`` for the risk-neutral one. With ``lam = 0`` this is exactly
    the normal density with mean ``(drift - sigma^2/2) * delta``.
    """
    scalar = np.isscalar(x)
    out = np.exp(_merton_log_density(x, params, env, drift, trunc))
    return float(out[0]) if scalar else out


def rn_merton(R, params: MertonParams, env: MarketEnv,
              trunc: int = _TRUNC_DEFAULT):
    """Measure-change density ratio for the lognormal jump-diffusion model.

    The ratio of the return density with drift ``env.r`` to the density with
    drift ``params.mu``; identically one when ``mu == r`` and equal to
    :func:`rn_bs` when ``lam = 0``. Evaluated in log space so extreme returns
    do not overflow.
    """
    scalar = np.isscalar(R)
    num = _merton_log_density(R, params, env, env.r, trunc)
    den = _merton_log_density(R, params, env, params.mu, trunc)
    out = np.exp(num - den)
    return float(out[0]) if scalar else out


def _kou_log_tails(u: np.ndarray, sigma: float, p: float, eta1: float,
                   eta2: float, delta: float) -> np.ndarray:
    """Log of the one-jump branch of the small-intensity return density.

    ``u`` is the return net of the deterministic drift. Each branch is the
    exact convolution of a centred normal with an exponential tail; both
    integrate to their branch probability, so the full approximation below
    integrates to one exactly.
    """
    s = sigma * math.sqrt(delta)
    up = (math.log(p * eta1) if p > 0 else -np.inf) \
        + 0.5 * (sigma * eta1) ** 2 * delta - u * eta1 \
        + log_ndtr((u - sigma**2 * eta1 * delta) / s)
    dn = (math.log((1.0 - p) * eta2) if p < 1 else -np.inf) \
        + 0.5 * (sigma * eta2) ** 2 * delta + u * eta2 \
        + log_ndtr(-(u + sigma**2 * eta2 * delta) / s)
    return np.logaddexp(up, dn)


def density_kou_approx(x, params: KouParams, env: MarketEnv, drift: float):
    """Small-intensity approximation of the double-exponential return density.

    Mixture of a no-jump normal with weight ``1 - lam*delta`` and a one-jump
    normal-plus-exponential convolution with weight ``lam*delta``; the two
    branches add. ``drift`` is the log-return drift per year (the density is
    centred at ``drift * delta``), so callers pass ``mu - sigma^2/2`` for the
    physical measure and ``r - sigma^2/2`` for the risk-neutral one.
    """
    if params.sigma <= 0:
        raise InvalidRegime("density requires sigma > 0")
    lam_d = params.lam * env.delta
    if lam_d >= 1.0:
        raise InvalidRegime(
            f"lam * delta = {lam_d:.3f} >= 1; one-jump approximation invalid")
    scalar = np.isscalar(x)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = x - drift * env.delta
    s = params.sigma * math.sqrt(env.delta)
    normal = (1.0 - lam_d) * np.exp(-0.5 * (u / s) ** 2) / (s * math.sqrt(2 * math.pi))
    out = normal
    if lam_d > 0:
        tails = np.exp(_kou_log_tails(u, params.sigma, params.p, params.eta1,
                                      params.eta2, env.delta))
        out = normal + lam_d * tails
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Measure changes.
# ---------------------------------------------------------------------------


def rn_bs(R, params: BsParams, env: MarketEnv):
    """Gaussian measure-change ratio ``exp{(r-mu)/sigma^2 R - ...}``.

    Ratio of the normal return densities with drifts ``r`` and ``mu``;
    strictly positive, identically one when ``mu == r``.
    """
    if params.sigma <= 0:
        raise InvalidRegime("measure change requires sigma > 0")
    R = np.asarray(R, dtype=float)
    r, mu, s2, d = env.r, params.mu, params.sigma**2, env.delta
    return np.exp((r - mu) / s2 * R - (r**2 - mu**2) / (2 * s2) * d + (r - mu) * d / 2)


def rn_kou(R, params: KouParams, env: MarketEnv):
    """Measure-change ratio for the double-exponential jump-diffusion model.

    Ratio of :func:`density_kou_approx` evaluated with risk-neutral and
    physical log-return drifts. Equal to :func:`rn_bs` when ``lam = 0``.
    """
    s2 = params.sigma**2
    num = density_kou_approx(R, params, env, env.r - 0.5 * s2)
    den = density_kou_approx(R, params, env, params.mu - 0.5 * s2)
    return num / den


def rn_derivative(R, params: ModelParams, env: MarketEnv):
    """Dispatch to the model-specific measure-change ratio."""
    if isinstance(params, BsParams):
        return rn_bs(R, params, env)
    if isinstance(params, MertonParams):
        return rn_merton(R, params, env)
    if isinstance(params, KouParams):
        return rn_kou(R, params, env)
    raise ModelMismatch(f"no measure change for {type(params).__name__}")


def rn_risk_premium(R, params, pref: RiskPreference, env: MarketEnv):
    """Utility-tilted pricing kernel of a power-utility investor.

    ``exp{delta[(1-alpha)mu - sigma^2(1-alpha)(2-alpha)/2]} * exp{R(alpha-1)}``,
    an exponential tilt of the return normalised by the Gaussian moment of
    ``e^{(alpha-1)R}``; ``params`` only needs ``mu`` and ``sigma`` fields.
    Identically one at the risk-neutral boundary ``alpha = 1``.
    """
    a = pref.alpha
    R = np.asarray(R, dtype=float)
    mu, s2, d = params.mu, params.sigma**2, env.delta
    const = d * ((1.0 - a) * mu - 0.5 * s2 * (1.0 - a) * (2.0 - a))
    return np.exp(const) * np.exp(R * (a - 1.0))


# ---------------------------------------------------------------------------
# Moment generating exponent.
# ---------------------------------------------------------------------------


def jump_mean_exponential(params) -> float:
    """``E[e^Y] - 1`` for the model's jump-size law ``Y``."""
    if isinstance(params, MertonParams):
        return params.kappa
    if isinstance(params, KouParams):
        p, e1, e2 = params.p, params.eta1, params.eta2
        return p * e1 / (e1 - 1.0) + (1.0 - p) * e2 / (e2 + 1.0) - 1.0
    raise ModelMismatch(f"no jump law for {type(params).__name__}")


def _jump_mgf_term(z, params):
    """``E[e^{zY}] - 1`` for complex or real ``z`` inside the strip."""
    if isinstance(params, MertonParams):
        return np.exp(params.mu_j * z + 0.5 * params.sigma_j**2 * z * z) - 1.0
    p, e1, e2 = params.p, params.eta1, params.eta2
    return p * e1 / (e1 - z) + (1.0 - p) * e2 / (e2 + z) - 1.0


def mgf_exponent(x: float, params, mu_tilde: float) -> float:
    """Exponent ``G(x)`` with ``E[e^{x log(S_t/S_0)}] = exp{G(x) t}``.

    ``G(x) = mu_tilde*x + sigma^2 x^2 / 2 + lam*(E[e^{xY}] - 1)`` where
    ``mu_tilde`` is the log-price drift of the measure of interest. Under the
    martingale drift ``r - sigma^2/2 - lam*zeta`` with
    ``zeta = E[e^Y] - 1`` the identity ``G(1) = r`` holds.

    Raises
    ------
    DomainError
        For the double-exponential model when ``x`` leaves ``(-eta2, eta1)``.
    """
    if not isinstance(params, (MertonParams, KouParams)):
        raise ModelMismatch("moment exponent is defined for the jump models")
    if isinstance(params, KouParams) and not (-params.eta2 < x < params.eta1):
        raise DomainError(
            f"x = {x} outside the moment strip (-{params.eta2}, {params.eta1})")
    return float(mu_tilde * x + 0.5 * params.sigma**2 * x * x
                 + params.lam * np.real(_jump_mgf_term(x, params)))


def _mgf_exponent_z(z, params, mu_tilde: float):
    """Complex-argument version of :func:`mgf_exponent`, no strip check."""
    return mu_tilde * z + 0.5 * params.sigma**2 * z * z \
        + params.lam * _jump_mgf_term(z, params)
