"""Synthetic return paths under each model's physical dynamics.

All randomness flows through a counter-based Philox generator keyed by an
explicit 64-bit seed; substreams are separated by disjoint counter blocks so
replicates can run in parallel without overlap. Identical
:class:`SimSpec` values (seed included) reproduce bit-identical series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import BsParams, KouParams, MarketEnv, MertonParams, ModelParams

__all__ = [
    "SimSpec",
    "ReturnSeries",
    "rng_stream",
    "simulate_bs",
    "simulate_merton",
    "simulate_kou",
    "simulate",
]

#: sub-intervals per period used by the Bernoulli jump scheme
BERNOULLI_SLOTS = 200


@dataclass(frozen=True)
class SimSpec:
    """Everything needed to reproduce one simulated return series.

    ``substream`` selects a disjoint counter block of the same keyed
    generator; replication harnesses assign one substream per path index.
    """

    model_params: ModelParams
    env: MarketEnv
    n: int
    seed: int
    log_s0: float = 100.0
    substream: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("sample size must be at least 2")


@dataclass(frozen=True)
class ReturnSeries:
    """Ordered per-period log-returns with their period length."""

    returns: np.ndarray
    delta: float
    log_s_last: float = field(default=math.nan)

    def __post_init__(self):
        arr = np.asarray(self.returns, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("returns must be a nonempty 1-d array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("returns must be finite")
        object.__setattr__(self, "returns", arr)

    @property
    def n(self) -> int:
        return self.returns.size


def rng_stream(seed: int, substream: int = 0) -> np.random.Generator:
    """Philox generator for ``(seed, substream)``.

    Substreams start ``2**128`` counter blocks apart, so distinct indices can
    never overlap for any realistic draw count.
    """
    bits = np.random.Philox(key=int(seed) & ((1 << 64) - 1),
                            counter=int(substream) << 128)
    return np.random.Generator(bits)


def _finish(spec: SimSpec, returns: np.ndarray) -> ReturnSeries:
    return ReturnSeries(returns, spec.env.delta, spec.log_s0 + float(returns.sum()))


def simulate_bs(spec: SimSpec) -> ReturnSeries:
    """iid normal returns with mean ``(mu - sigma^2/2) delta``, variance ``sigma^2 delta``."""
    p = spec.model_params
    if not isinstance(p, BsParams):
        raise TypeError("simulate_bs expects BsParams")
    d = spec.env.delta
    rng = rng_stream(spec.seed, spec.substream)
    z = rng.standard_normal(spec.n)
    return _finish(spec, (p.mu - 0.5 * p.sigma**2) * d + p.sigma * math.sqrt(d) * z)


def simulate_merton(spec: SimSpec, scheme: str = "bernoulli") -> ReturnSeries:
    """Jump-diffusion returns with lognormal jumps.

    ``scheme="bernoulli"`` splits each period into ``BERNOULLI_SLOTS``
    sub-intervals, each producing a jump with probability
    ``(lam*delta/200) * exp(-lam*delta/200)``; the slot count with a jump is
    drawn as a binomial and the jump sum as one conditional normal, which is
    distributionally identical to drawing the slots one by one. Exact Poisson
    thinning would use success probability ``lam*delta/200``;
    ``scheme="thinning"`` selects that variant.
    """
    p = spec.model_params
    if not isinstance(p, MertonParams):
        raise TypeError("simulate_merton expects MertonParams")
    if scheme not in ("bernoulli", "thinning"):
        raise ValueError(f"unknown jump scheme {scheme!r}")
    d = spec.env.delta
    rng = rng_stream(spec.seed, spec.substream)
    z = rng.standard_normal(spec.n)
    slot = p.lam * d / BERNOULLI_SLOTS
    prob = slot * math.exp(-slot) if scheme == "bernoulli" else slot
    counts = rng.binomial(BERNOULLI_SLOTS, prob, size=spec.n)
    zj = rng.standard_normal(spec.n)
    jumps = counts * p.mu_j + np.sqrt(counts) * p.sigma_j * zj
    drift = (p.mu - p.lam * p.kappa - 0.5 * p.sigma**2) * d
    return _finish(spec, drift + p.sigma * math.sqrt(d) * z + jumps)


def simulate_kou(spec: SimSpec) -> ReturnSeries:
    """Jump-diffusion returns with double-exponential jumps, exact Poisson counts."""
    p = spec.model_params
    if not isinstance(p, KouParams):
        raise TypeError("simulate_kou expects KouParams")
    d = spec.env.delta
    rng = rng_stream(spec.seed, spec.substream)
    z = rng.standard_normal(spec.n)
    counts = rng.poisson(p.lam * d, size=spec.n)
    total = int(counts.sum())
    jumps = np.zeros(spec.n)
    if total:
        up = rng.random(total) < p.p
        mag = np.where(up,
                       rng.exponential(1.0 / p.eta1, total),
                       -rng.exponential(1.0 / p.eta2, total))
        np.add.at(jumps, np.repeat(np.arange(spec.n), counts), mag)
    drift = (p.mu - 0.5 * p.sigma**2) * d
    return _finish(spec, drift + p.sigma * math.sqrt(d) * z + jumps)


def simulate(spec: SimSpec, **kwargs) -> ReturnSeries:
    """Dispatch on the parameter type."""
    p = spec.model_params
    if isinstance(p, BsParams):
        return simulate_bs(spec)
    if isinstance(p, MertonParams):
        return simulate_merton(spec, **kwargs)
    if isinstance(p, KouParams):
        return simulate_kou(spec)
    raise TypeError(f"no simulator for {type(p).__name__}")
