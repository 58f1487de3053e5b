import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from levymele import (
    BsParams,
    KouParams,
    MarketEnv,
    MertonParams,
    RiskPreference,
    SimSpec,
    cf_bs,
    cf_kou,
    cf_merton,
    density_kou_approx,
    density_merton,
    mgf_exponent,
    rn_bs,
    rn_kou,
    rn_merton,
    rn_risk_premium,
    simulate_kou,
    simulate_merton,
)
from levymele.errors import DomainError, InvalidRegime, ModelMismatch
from levymele.models import jump_mean_exponential

from conftest import BS_TRUTH, KOU_TRUTH, MERTON_TRUTH, WEEKLY

T_GRID = np.linspace(-5.0, 5.0, 21)


def _cf(model, params, env, t):
    return {"bs": cf_bs, "merton": cf_merton, "kou": cf_kou}[model](t, params, env)


@pytest.mark.parametrize("model,params", [
    ("bs", BS_TRUTH), ("merton", MERTON_TRUTH), ("kou", KOU_TRUTH)])
def test_cf_at_zero_is_one(model, params, env):
    assert complex(_cf(model, params, env, 0.0)) == 1.0 + 0.0j


@pytest.mark.parametrize("model,params", [
    ("bs", BS_TRUTH), ("merton", MERTON_TRUTH), ("kou", KOU_TRUTH)])
def test_cf_hermitian_and_bounded(model, params, env):
    vals_pos = _cf(model, params, env, T_GRID)
    vals_neg = _cf(model, params, env, -T_GRID)
    np.testing.assert_allclose(vals_neg, np.conj(vals_pos), rtol=0, atol=1e-15)
    assert np.all(np.abs(vals_pos) <= 1.0 + 1e-12)


def test_cf_bs_matches_gaussian_sample_mean(env, rng):
    t = 2.0
    n = 1_000_000
    r_draws = rng.normal((BS_TRUTH.mu - BS_TRUTH.sigma**2 / 2) * WEEKLY,
                         BS_TRUTH.sigma * math.sqrt(WEEKLY), size=n)
    emp = np.exp(1j * t * r_draws)
    model = complex(cf_bs(t, BS_TRUTH, env))
    for part in ("real", "imag"):
        sample = getattr(emp, part)
        se = sample.std(ddof=1) / math.sqrt(n)
        assert abs(sample.mean() - getattr(model, part)) < 3 * se


def test_cf_merton_matches_simulated_sample_mean(env):
    series = simulate_merton(SimSpec(MERTON_TRUTH, env, 1_000_000, seed=5))
    t = 1.0
    emp = np.exp(1j * t * series.returns)
    model = complex(cf_merton(t, MERTON_TRUTH, env))
    for part in ("real", "imag"):
        sample = getattr(emp, part)
        se = sample.std(ddof=1) / math.sqrt(series.n)
        assert abs(sample.mean() - getattr(model, part)) < 3 * se


def test_cf_kou_matches_simulated_sample_mean(env):
    series = simulate_kou(SimSpec(KOU_TRUTH, env, 1_000_000, seed=11))
    t = 3.0
    emp = np.exp(1j * t * series.returns)
    model = complex(cf_kou(t, KOU_TRUTH, env))
    for part in ("real", "imag"):
        sample = getattr(emp, part)
        se = sample.std(ddof=1) / math.sqrt(series.n)
        assert abs(sample.mean() - getattr(model, part)) < 3 * se


@pytest.mark.parametrize("t", T_GRID[::4])
def test_jump_models_collapse_to_gaussian_cf(t, env):
    base = cf_bs(t, BsParams(0.06, 0.25), env)
    merton0 = cf_merton(t, MertonParams(0.06, 0.25, 0.0, -0.1, 0.4), env)
    kou0 = cf_kou(t, KouParams(0.06, 0.25, 0.0, 0.3, 5.0, 6.0), env)
    assert abs(complex(merton0) - complex(base)) < 1e-15
    assert abs(complex(kou0) - complex(base)) < 1e-15


# --- measure changes -----------------------------------------------------


def test_rn_bs_is_one_when_drifts_match():
    env = MarketEnv(r=0.07, delta=WEEKLY)
    params = BsParams(mu=0.07, sigma=0.3)
    r_vals = np.linspace(-0.5, 0.5, 9)
    np.testing.assert_allclose(rn_bs(r_vals, params, env), 1.0, rtol=0, atol=1e-14)


def test_rn_bs_matches_density_ratio_at_point(env):
    # independent oracle: ratio of the two normal densities
    params = BsParams(mu=0.05, sigma=0.3)
    env3 = MarketEnv(r=0.03, delta=WEEKLY)
    num = norm.pdf(0.0, (0.03 - 0.045) * WEEKLY, 0.3 * math.sqrt(WEEKLY))
    den = norm.pdf(0.0, (0.05 - 0.045) * WEEKLY, 0.3 * math.sqrt(WEEKLY))
    expected = num / den
    assert expected == pytest.approx(0.9999786327069164, abs=1e-12)
    assert float(rn_bs(0.0, params, env3)) == pytest.approx(expected, abs=1e-14)


def test_rn_bs_unit_mean_under_physical_law(rng):
    env3 = MarketEnv(r=0.03, delta=WEEKLY)
    n = 100_000
    draws = rng.normal((BS_TRUTH.mu - 0.045) * WEEKLY, 0.3 * math.sqrt(WEEKLY), n)
    vals = rn_bs(draws, BS_TRUTH, env3)
    se = vals.std(ddof=1) / math.sqrt(n)
    assert abs(vals.mean() - 1.0) < 3 * se


def test_density_merton_collapses_to_normal(env):
    params = MertonParams(0.08, 0.22, 0.0, -0.1, 0.5)
    x = np.linspace(-0.3, 0.3, 7)
    expected = norm.pdf(x, (0.08 - 0.5 * 0.22**2) * WEEKLY, 0.22 * math.sqrt(WEEKLY))
    np.testing.assert_allclose(density_merton(x, params, env, 0.08), expected,
                               rtol=1e-13)


def test_density_merton_integrates_to_one(env):
    total, err = quad(lambda x: density_merton(x, MERTON_TRUTH, env, MERTON_TRUTH.mu),
                      -np.inf, np.inf, limit=300)
    assert abs(total - 1.0) < 1e-6


def test_density_merton_matches_simulated_bins(env):
    series = simulate_merton(SimSpec(MERTON_TRUTH, env, 1_000_000, seed=21))
    edges = np.array([-1.5, -0.6, -0.2, -0.05, 0.05, 0.2, 0.6, 1.5])
    freq = np.histogram(series.returns, edges)[0] / series.n
    for i in range(len(edges) - 1):
        prob = quad(lambda x: density_merton(x, MERTON_TRUTH, env, MERTON_TRUTH.mu),
                    edges[i], edges[i + 1], limit=200)[0]
        se = math.sqrt(prob * (1 - prob) / series.n)
        assert abs(freq[i] - prob) < 4 * se + 5e-5


def test_rn_merton_unit_when_drifts_match():
    env = MarketEnv(r=0.0875, delta=WEEKLY)
    r_vals = np.linspace(-0.8, 0.8, 11)
    np.testing.assert_allclose(rn_merton(r_vals, MERTON_TRUTH, env), 1.0,
                               rtol=0, atol=1e-12)


def test_rn_merton_collapses_to_gaussian_ratio(env):
    params = MertonParams(0.06, 0.25, 0.0, -0.1, 0.4)
    base = BsParams(0.06, 0.25)
    r_vals = np.linspace(-0.4, 0.4, 9)
    np.testing.assert_allclose(rn_merton(r_vals, params, env),
                               rn_bs(r_vals, base, env), rtol=0, atol=1e-12)


def test_rn_merton_unit_mean_under_physical_law(env):
    series = simulate_merton(SimSpec(MERTON_TRUTH, env, 100_000, seed=7))
    vals = rn_merton(series.returns, MERTON_TRUTH, env)
    se = vals.std(ddof=1) / math.sqrt(series.n)
    assert abs(vals.mean() - 1.0) < 3 * se


def test_density_kou_collapses_to_normal(env):
    params = KouParams(0.08, 0.22, 0.0, 0.3, 5.0, 6.0)
    x = np.linspace(-0.3, 0.3, 7)
    drift = 0.08 - 0.5 * 0.22**2
    expected = norm.pdf(x, drift * WEEKLY, 0.22 * math.sqrt(WEEKLY))
    np.testing.assert_allclose(density_kou_approx(x, params, env, drift), expected,
                               rtol=1e-13)


def test_density_kou_integrates_to_one(env):
    drift = KOU_TRUTH.mu - 0.5 * KOU_TRUTH.sigma**2
    total, _ = quad(lambda x: density_kou_approx(x, KOU_TRUTH, env, drift),
                    -np.inf, np.inf, limit=400)
    assert abs(total - 1.0) < 1e-4


def test_density_kou_matches_simulated_bins(env):
    series = simulate_kou(SimSpec(KOU_TRUTH, env, 200_000, seed=31))
    drift = KOU_TRUTH.mu - 0.5 * KOU_TRUTH.sigma**2
    edges = np.array([-1.0, -0.3, -0.1, -0.03, 0.03, 0.1, 0.3, 1.0])
    freq = np.histogram(series.returns, edges)[0] / series.n
    for i in range(len(edges) - 1):
        prob = quad(lambda x: density_kou_approx(x, KOU_TRUTH, env, drift),
                    edges[i], edges[i + 1], limit=200)[0]
        se = math.sqrt(prob * (1 - prob) / series.n)
        # the one-jump approximation is itself O((lam*delta)^2) away
        assert abs(freq[i] - prob) < 4 * se + 3e-4


def test_density_kou_rejects_large_jump_mass(env):
    slow_env = MarketEnv(r=0.05, delta=1.0)
    with pytest.raises(InvalidRegime):
        density_kou_approx(0.0, KOU_TRUTH, slow_env, 0.05)


def test_rn_kou_unit_when_drifts_match():
    env = MarketEnv(r=KOU_TRUTH.mu, delta=WEEKLY)
    r_vals = np.linspace(-0.5, 0.5, 9)
    np.testing.assert_allclose(rn_kou(r_vals, KOU_TRUTH, env), 1.0,
                               rtol=0, atol=1e-12)


def test_rn_kou_collapses_to_gaussian_ratio(env):
    params = KouParams(0.06, 0.25, 0.0, 0.3, 5.0, 6.0)
    base = BsParams(0.06, 0.25)
    r_vals = np.linspace(-0.4, 0.4, 9)
    np.testing.assert_allclose(rn_kou(r_vals, params, env),
                               rn_bs(r_vals, base, env), rtol=0, atol=1e-12)


def test_rn_kou_unit_mean_under_physical_law(env):
    series = simulate_kou(SimSpec(KOU_TRUTH, env, 100_000, seed=13))
    vals = rn_kou(series.returns, KOU_TRUTH, env)
    se = vals.std(ddof=1) / math.sqrt(series.n)
    assert abs(vals.mean() - 1.0) < 3 * se


# --- preference tilt -----------------------------------------------------


def test_risk_premium_identity_at_neutral_boundary(env):
    pref = RiskPreference(alpha=1.0)
    r_vals = np.linspace(-1.0, 1.0, 11)
    np.testing.assert_allclose(
        rn_risk_premium(r_vals, BsParams(0.095, 0.30), pref, env), 1.0,
        rtol=0, atol=1e-15)


def test_risk_premium_matches_normalized_tilt(env):
    # two-step oracle: exp{R(alpha-1)} normalized by the Gaussian moment
    params = BsParams(0.095, 0.30)
    pref = RiskPreference(alpha=0.6)
    R = 0.01
    a1 = pref.alpha - 1.0
    log_moment = ((params.mu - 0.5 * params.sigma**2) * a1
                  + 0.5 * params.sigma**2 * a1**2) * WEEKLY
    expected = math.exp(a1 * R) / math.exp(log_moment)
    value = float(rn_risk_premium(R, params, pref, env))
    assert value == pytest.approx(expected, abs=1e-15)
    assert value == pytest.approx(0.9962531907187612, abs=1e-12)


def test_risk_premium_prices_bond_and_stock(rng):
    # with the curvature-implied rate, discounted stock is a martingale
    params = BsParams(0.095, 0.30)
    alpha = 0.6
    r_eq = params.mu - (1 - alpha) * params.sigma**2
    env = MarketEnv(r=r_eq, delta=WEEKLY)
    n = 400_000
    draws = rng.normal((params.mu - 0.045) * WEEKLY, 0.3 * math.sqrt(WEEKLY), n)
    tilt = rn_risk_premium(draws, params, RiskPreference(alpha), env)
    growth = tilt * np.exp(draws)
    se = growth.std(ddof=1) / math.sqrt(n)
    assert abs(growth.mean() - math.exp(r_eq * WEEKLY)) < 3 * se


# --- moment exponent -----------------------------------------------------


def test_mgf_exponent_zero_at_origin():
    assert mgf_exponent(0.0, MERTON_TRUTH, 0.123) == 0.0
    assert mgf_exponent(0.0, KOU_TRUTH, -0.5) == pytest.approx(0.0, abs=1e-15)


def test_mgf_exponent_martingale_identity():
    r = 0.05
    for params in (KOU_TRUTH, MERTON_TRUTH):
        zeta = jump_mean_exponential(params)
        mu_tilde = r - 0.5 * params.sigma**2 - params.lam * zeta
        assert abs(mgf_exponent(1.0, params, mu_tilde) - r) < 1e-12


def test_mgf_exponent_pure_diffusion():
    params = MertonParams(0.1, 0.3, 0.0, -0.1, 0.4)
    mu_tilde = 0.07
    assert mgf_exponent(2.0, params, mu_tilde) == pytest.approx(
        2 * mu_tilde + 2 * params.sigma**2, abs=1e-15)


def test_mgf_exponent_strip(env):
    with pytest.raises(DomainError):
        mgf_exponent(KOU_TRUTH.eta1 + 0.5, KOU_TRUTH, 0.0)
    with pytest.raises(DomainError):
        mgf_exponent(-KOU_TRUTH.eta2 - 0.5, KOU_TRUTH, 0.0)
    with pytest.raises(ModelMismatch):
        mgf_exponent(1.0, BsParams(0.05, 0.3), 0.0)


@pytest.mark.parametrize("x", [-1.0, 0.5, 1.0])
def test_mgf_exponent_matches_simulated_moments(x, env):
    for params, simulate in ((MERTON_TRUTH, simulate_merton), (KOU_TRUTH, simulate_kou)):
        if isinstance(params, MertonParams):
            mu_p = params.mu - params.lam * params.kappa - 0.5 * params.sigma**2
        else:
            mu_p = params.mu - 0.5 * params.sigma**2
        series = simulate(SimSpec(params, env, 400_000, seed=17))
        emp = np.exp(x * series.returns)
        se = emp.std(ddof=1) / math.sqrt(series.n)
        model = math.exp(WEEKLY * mgf_exponent(x, params, mu_p))
        assert abs(emp.mean() - model) < 3.5 * se


# --- parameter validation ------------------------------------------------


def test_parameter_invariants():
    with pytest.raises(ValueError):
        BsParams(mu=0.05, sigma=-0.1)
    with pytest.raises(ValueError):
        MertonParams(0.05, 0.3, -1.0, 0.0, 0.1)
    with pytest.raises(ValueError):
        KouParams(0.05, 0.3, 1.0, 1.2, 7.5, 9.0)
    with pytest.raises(ValueError):
        KouParams(0.05, 0.3, 1.0, 0.5, 0.9, 9.0)
    with pytest.raises(ValueError):
        RiskPreference(alpha=1.2)
    with pytest.raises(ValueError):
        MarketEnv(r=0.05, delta=0.0)
    assert MertonParams(0.0, 0.2, 1.0, 0.1, 0.2).kappa == pytest.approx(
        math.exp(0.1 + 0.02) - 1.0)
