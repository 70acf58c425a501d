import numpy as np
import pytest

from sigportfolio.simulation import (
    SimConfig,
    SingularCovarianceError,
    growth_optimal_weights,
    reference_go_stream,
    reference_go_weights,
    simulate,
    simulate_log_prices,
    strong_solution_mask,
)
from sigportfolio.tensor import enumerate_words, n_words

SIGMA = [[0.5, 0.0, 0.0], [0.1, 0.5, 0.0], [0.1, 0.1, 0.5]]


def test_bs_degenerate_is_constant():
    panels = simulate(SimConfig("bs", d=2, steps=20, s0=[1.0, 3.0]), 3)
    for p in panels:
        assert np.all(p.prices == p.prices[0])
        np.testing.assert_allclose(p.prices[0], [1.0, 3.0], rtol=1e-15)


def test_bs_terminal_log_mean():
    a, s = 0.3, 0.4
    cfg = SimConfig("bs", d=1, steps=4, drift=[a], sigma=[[s]], seed=7)
    logs, _ = simulate_log_prices(cfg, range(100_000))
    terminal = logs[:, -1, 0]
    se = terminal.std(ddof=1) / np.sqrt(terminal.size)
    assert abs(terminal.mean() - (a - s**2 / 2)) <= 3 * se


def test_volstab_weights_and_positivity():
    cfg = SimConfig("volstab", d=3, steps=2000, alpha=10.0, seed=2)
    for p in simulate(cfg, 3):
        assert np.all(p.prices > 0)
        mu = p.prices / p.prices.sum(axis=1, keepdims=True)
        assert np.abs(mu.sum(axis=1) - 1).max() <= 1e-12


@pytest.mark.parametrize("model", ["bs", "volstab", "sigmarket"])
def test_determinism_across_threads_and_batches(model):
    cfg = SimConfig(model, d=2, steps=50, sigma=[[0.3, 0.0], [0.1, 0.3]], seed=3, alpha=1.0,
                    drift=[0.1, 0.2], sig_coeffs=np.arange(2 * n_words(3, 2)).reshape(2, -1).tolist())
    a = simulate(cfg, 10, threads=1, batch_size=3)
    b = simulate(cfg, 10, threads=4, batch_size=10)
    for p, q in zip(a, b):
        assert np.array_equal(p.prices, q.prices)
    c = simulate(cfg, 4, start=6)
    for p, q in zip(a[6:], c):
        assert np.array_equal(p.prices, q.prices)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig("heston", d=2, steps=10)
    with pytest.raises(ValueError):
        SimConfig("bs", d=2, steps=0)
    with pytest.raises(ValueError):
        SimConfig("bs", d=2, steps=10, s0=[1.0, -1.0])
    with pytest.raises(ValueError):
        SimConfig("volstab", d=2, steps=10, alpha=-1.0)
    with pytest.raises(ValueError):
        SimConfig("sigmarket", d=2, steps=10, sig_coeffs=[[0.0]])
    with pytest.raises(ValueError):
        simulate(SimConfig("bs", d=2, steps=10, sigma=[[1.0, 1.0], [1.0, 1.0]]), 1)


def test_strong_solution_mask():
    words = enumerate_words(3, 2)
    mask = strong_solution_mask(3, 2)
    for w, keep in zip(words, mask):
        assert keep == all(i == 1 for i in w.letters[1:])


class TestGrowthOptimal:
    def test_symmetric_example(self):
        np.testing.assert_allclose(growth_optimal_weights([0.1, 0.1], np.eye(2)), [0.5, 0.5])

    def test_sums_to_one(self, rng):
        for _ in range(50):
            a = rng.normal(size=4)
            sig = rng.normal(size=(4, 4)) + 3 * np.eye(4)
            assert abs(growth_optimal_weights(a, sig).sum() - 1) <= 1e-12

    def test_matches_constrained_maximizer(self, rng):
        # maximize a.w - 0.5 w'Cw subject to sum w = 1 by a KKT linear solve
        a, sig = rng.normal(size=3), rng.normal(size=(3, 3)) + 2 * np.eye(3)
        C = sig @ sig.T
        K = np.block([[C, np.ones((3, 1))], [np.ones((1, 3)), np.zeros((1, 1))]])
        w = np.linalg.solve(K, np.append(a, 1.0))[:3]
        np.testing.assert_allclose(growth_optimal_weights(a, sig), w, atol=1e-12)

    def test_singular(self):
        with pytest.raises(SingularCovarianceError):
            growth_optimal_weights([0.1, 0.2], [[1.0, 1.0], [1.0, 1.0]])

    def test_volstab_closed_form(self):
        alpha, d = 10.0, 3
        mu = np.array([1 / 3, 1 / 3, 1 / 3])
        a = (1 + alpha) / (2 * mu)
        C = np.diag(1 / mu)
        Cinv_a, Cinv_1 = np.linalg.solve(C, a), np.linalg.solve(C, np.ones(d))
        kappa = (Cinv_a.sum() - 1) / Cinv_1.sum()
        expected = Cinv_a - kappa * Cinv_1
        np.testing.assert_allclose(expected, (1 + alpha) / 2 - mu * (d * (1 + alpha) / 2 - 1), atol=1e-12)
        cfg = SimConfig("volstab", d=3, steps=5, alpha=alpha)
        got = reference_go_weights(cfg, np.zeros((6, 3)))
        np.testing.assert_allclose(got, np.tile(expected, (6, 1)), atol=1e-12)
        np.testing.assert_allclose(expected, 1 / 3, atol=1e-12)

    def test_streams(self, rng):
        bs = SimConfig("bs", d=3, steps=30, drift=[0.5, 1.0, 1.5], sigma=SIGMA)
        w = reference_go_stream(bs, simulate(bs, 1)[0])
        assert np.all(w == w[0])
        vs = SimConfig("volstab", d=3, steps=30, alpha=2.0, seed=1)
        p = simulate(vs, 1)[0]
        mu = p.prices / p.prices.sum(axis=1, keepdims=True)
        w = reference_go_stream(vs, p)
        np.testing.assert_allclose(w, 1.5 - mu * (3 * 1.5 - 1), atol=1e-10)
        sm = SimConfig("sigmarket", d=3, steps=30, sigma=np.eye(3).tolist())
        np.testing.assert_allclose(reference_go_stream(sm, simulate(sm, 1)[0]), 1 / 3, atol=1e-12)


def test_growth_rate_dominance(rng):
    cfg = SimConfig("bs", d=3, steps=250, drift=[0.5, 1.0, 1.5], sigma=SIGMA, seed=9)
    logs, _ = simulate_log_prices(cfg, range(1000))
    R = np.expm1(np.diff(logs, axis=1))

    def mean_growth(w):
        return np.log1p(R @ w).sum(axis=1).mean()

    go = mean_growth(growth_optimal_weights(np.array(cfg.drift), np.array(SIGMA)))
    for w in rng.dirichlet(np.ones(3), size=20):
        assert go >= mean_growth(w)
