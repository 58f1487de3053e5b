import numpy as np
import pytest

from levymele import BsParams, KouParams, MarketEnv, MertonParams

WEEKLY = 1.0 / 52.0

BS_TRUTH = BsParams(mu=0.05, sigma=0.30)
MERTON_TRUTH = MertonParams(mu=0.0875, sigma=0.30, lam=2.0, mu_j=-0.2, sigma_j=0.60)
KOU_TRUTH = KouParams(mu=0.095, sigma=0.30, lam=2.0, p=0.05, eta1=7.5, eta2=9.0)


@pytest.fixture
def env():
    return MarketEnv(r=0.05, delta=WEEKLY)


@pytest.fixture
def rng():
    return np.random.default_rng(20240831)
