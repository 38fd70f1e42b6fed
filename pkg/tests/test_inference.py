import numpy as np
import pytest

from beliefcal.errors import ConfigError, TooManyFailures, ZeroVariance
from beliefcal.inference import (
    BootstrapConfig,
    bayesian_bootstrap,
    dirichlet_weights,
    multinomial_weights,
    trimmed_sd,
)
from beliefcal.lls import LlsConfig, conditioning_alpha, estimate_ape
from beliefcal.simlab import costly_acquisition_config, simulate_population

IDS = ("a", "b")
Y = {"a": 0.0, "b": 1.0}


def wmean(ids):
    y = np.array([Y[i] for i in ids])
    return lambda w: float(np.dot(w, y) / w.sum())


def test_constant_statistic_has_zero_se():
    res = bayesian_bootstrap(IDS, lambda w: 3.0, BootstrapConfig(n_draws=50))
    assert res.se == 0.0
    assert res.draws.shape == (50,)


def test_weighted_mean_matches_dirichlet_moment():
    # Var of the Dirichlet-weighted mean is var_pop(y) / (n + 1)
    oracle = 0.5 / np.sqrt(3)
    res = bayesian_bootstrap(IDS, wmean(IDS), BootstrapConfig(n_draws=1000, seed=3))
    assert abs(res.se - oracle) / oracle < 0.2


def test_same_seed_same_draws():
    cfg = BootstrapConfig(n_draws=30, seed=5)
    a = bayesian_bootstrap(IDS, wmean(IDS), cfg)
    b = bayesian_bootstrap(IDS, wmean(IDS), cfg)
    np.testing.assert_array_equal(a.draws, b.draws)


def test_se_invariant_to_record_order():
    ids = tuple(f"r{i}" for i in range(30))
    y = dict(zip(ids, np.random.default_rng(0).normal(size=30)))

    def stat(order):
        vals = np.array([y[i] for i in order])
        return lambda w: float(np.dot(w, vals) / w.sum())

    rev = ids[::-1]
    cfg = BootstrapConfig(n_draws=200, seed=1)
    a = bayesian_bootstrap(ids, stat(ids), cfg)
    b = bayesian_bootstrap(rev, stat(rev), cfg)
    np.testing.assert_allclose(a.draws, b.draws, rtol=1e-12)


def test_weights_positive_and_sum_to_n():
    ids = [f"x{i}" for i in range(17)]
    for w in dirichlet_weights(ids, seed=2, n_draws=25, chunk=7):
        assert np.all(w > 0)
        assert w.sum() == pytest.approx(17.0, rel=1e-12)


def test_multinomial_counts():
    ids = [f"x{i}" for i in range(9)]
    for w in multinomial_weights(ids, seed=0, n_draws=5):
        assert w.sum() == 9 and np.all(w == np.round(w))


def test_failed_draws_are_counted():
    calls = iter(range(10_000))

    def flaky(w):
        if next(calls) % 4 == 0:
            raise ZeroVariance("boom")
        return float(w[0])

    res = bayesian_bootstrap(IDS, flaky, BootstrapConfig(n_draws=40, seed=0))
    assert res.n_failed == 10
    assert res.draws.shape == (30,)


def test_too_many_failures():
    def always(w):
        raise ZeroVariance("boom")

    with pytest.raises(TooManyFailures):
        bayesian_bootstrap(IDS, always, BootstrapConfig(n_draws=10))


def test_non_library_errors_propagate():
    def bug(w):
        raise KeyError("programming error")

    with pytest.raises(KeyError):
        bayesian_bootstrap(IDS, bug, BootstrapConfig(n_draws=4))


def test_parallel_matches_serial():
    ids = tuple(f"r{i}" for i in range(20))
    y = np.arange(20.0)
    stat = lambda w: np.array([np.dot(w, y) / w.sum(), w[0]])  # noqa: E731
    a = bayesian_bootstrap(ids, stat, BootstrapConfig(n_draws=40, seed=9))
    b = bayesian_bootstrap(ids, stat, BootstrapConfig(n_draws=40, seed=9, parallel=True,
                                                      max_workers=4))
    np.testing.assert_array_equal(a.draws, b.draws)
    assert a.se.shape == (2,)


def test_trimmed_sd_drops_each_tail():
    draws = np.r_[np.zeros(98), -1e6, 1e6]
    assert trimmed_sd(draws, 0.02) == 0.0
    assert trimmed_sd(draws, 0.0) > 1e4
    vec = np.column_stack([np.arange(10.0), np.r_[np.nan, np.arange(9.0)]])
    out = trimmed_sd(vec, 0.0)
    assert out[0] == pytest.approx(np.std(np.arange(10.0), ddof=1))
    assert out[1] == pytest.approx(np.std(np.arange(9.0), ddof=1))


def test_config_validation():
    for kw in ({"n_draws": 1}, {"outlier_drop": 0.5}, {"mode": "jackknife"}):
        with pytest.raises(ConfigError):
            BootstrapConfig(**kw)


def test_first_step_uncertainty_propagates():
    cfg = LlsConfig(alpha_source="smoothed", smoothing_bandwidth=0.1)
    full, frozen = [], []
    for seed in range(3):
        ds, _ = simulate_population(costly_acquisition_config(n=2000, seed=seed))
        a0, _ = conditioning_alpha(ds, cfg)
        bc = BootstrapConfig(n_draws=100, seed=seed)
        full.append(bayesian_bootstrap(ds, lambda w: estimate_ape(ds, cfg, w).point, bc).se)
        frozen.append(
            bayesian_bootstrap(ds, lambda w: estimate_ape(ds, cfg, w, alpha=a0).point, bc).se
        )
    assert np.mean(full) > np.mean(frozen)
