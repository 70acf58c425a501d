import numpy as np
import pytest

from sigportfolio.backtest import Window, log_relative_wealth, run_backtest
from sigportfolio.market import MarketPanel
from sigportfolio.portfolio import FeatureSpec, PortfolioSpec, portfolio_weights
from sigportfolio.qp import LogOptAccumulator, QpProblem, assemble_logopt, solve_qp
from sigportfolio.simulation import SimConfig, reference_go_weights, simulate_log_prices
from sigportfolio.training import (
    McSettings,
    evaluate_monte_carlo,
    monte_carlo_problem,
    path_features,
    train_window,
    window_data,
    window_problem,
    window_weights,
)

SIGMA = [[0.5, 0.0, 0.0], [0.1, 0.5, 0.0], [0.1, 0.1, 0.5]]
BS = SimConfig("bs", d=3, steps=60, drift=[0.5, 1.0, 1.5], sigma=SIGMA, seed=1)


def spec(kind="I", family="signature", **kw):
    return PortfolioSpec(kind, (0, 1, 2), "universe", FeatureSpec(family, horizon=1.0, **kw))


def test_path_features_match_feature_spec(rng):
    logs, _ = simulate_log_prices(BS, range(3))
    times = np.linspace(0, 1, 61)
    for fs in (FeatureSpec("signature", level=2), FeatureSpec("jl", level=2, projection_dim=4, seed=1),
               FeatureSpec("signature", level=2, underlying="log_prices")):
        mu, phi = path_features(fs, logs, times, (0, 1, 2))
        for b in range(3):
            m = np.exp(logs[b]) / np.exp(logs[b]).sum(axis=1, keepdims=True)
            np.testing.assert_allclose(mu[b], m, atol=1e-14)
            x = m if fs.underlying == "universe_weights" else logs[b]
            np.testing.assert_allclose(phi[b], fs.compute(x, times).values, atol=1e-12)


def test_monte_carlo_matches_direct_assembly():
    s = spec(level=2)
    Q, c, info = monte_carlo_problem(BS, s, 10, settings=McSettings(sim_batch=4, feature_batch=3))
    assert info == {"paths": 10, "regenerated": 0}
    logs, _ = simulate_log_prices(BS, range(10))
    mu, phi = path_features(s.features, logs, np.linspace(0, 1, 61), (0, 1, 2))
    acc = LogOptAccumulator("I")
    for b in range(10):
        acc.add(phi[b], mu[b])
    Qr, cr = acc.mean()
    np.testing.assert_allclose(Q, Qr, atol=1e-12 * np.abs(Qr).max())
    np.testing.assert_allclose(c, cr, atol=1e-12 * np.abs(cr).max())


def test_monte_carlo_thread_invariance():
    s = spec("II", level=2)
    a = monte_carlo_problem(BS, s, 12, settings=McSettings(threads=1, sim_batch=5))
    b = monte_carlo_problem(BS, s, 12, settings=McSettings(threads=8, sim_batch=5))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_monte_carlo_errors():
    with pytest.raises(ValueError):
        monte_carlo_problem(BS, spec(), 0)
    s = spec()
    s.tau = "equal"
    with pytest.raises(ValueError):
        monte_carlo_problem(BS, s, 2)


def test_evaluate_monte_carlo():
    s = spec(level=1)
    Q, c, _ = monte_carlo_problem(BS, s, 20)
    s.coefficients = solve_qp(QpProblem(Q, c, gamma=1e-6)).l
    ev = evaluate_monte_carlo(BS, s, 5, start=100, settings=McSettings(sim_batch=2))
    logs, _ = simulate_log_prices(BS, range(100, 105))
    mu, phi = path_features(s.features, logs, np.linspace(0, 1, 61), (0, 1, 2))
    np.testing.assert_allclose(ev["model"], log_relative_wealth(portfolio_weights("I", mu, s.coefficients, phi), mu))
    np.testing.assert_allclose(ev["growth_optimal"], log_relative_wealth(reference_go_weights(BS, logs), mu))


@pytest.fixture
def panel(rng):
    prices = np.exp(np.cumsum(rng.normal(scale=0.01, size=(300, 3)), axis=0))
    return MarketPanel(np.arange(300.0), prices, ("A", "B", "C"))


def test_window_data_uses_observation_lead(panel):
    s = PortfolioSpec("I", (0, 2), "universe", FeatureSpec("signature", level=2, horizon=150.0))
    w = Window(50, 100, 200)
    data = window_data(s, panel, w)
    assert data.mu.shape == (100, 2) and data.features.shape == (100, 13)
    np.testing.assert_allclose(data.features[0, 1], 50 / 150)
    S = panel.prices[50:200][:, [0, 2]]
    mu = S / S.sum(axis=1, keepdims=True)
    full = s.features.compute(mu, np.arange(150.0)).values
    np.testing.assert_array_equal(data.features, full[50:])
    np.testing.assert_allclose(data.mu, mu[50:])
    with pytest.raises(ValueError):
        window_data(s, panel, Window(250, 260, 310))


def test_window_problem_and_training(panel):
    s = PortfolioSpec("I", (), "universe", FeatureSpec("signature", level=1, horizon=200.0))
    s.universe = (0, 1, 2)
    data = window_data(s, panel, Window(0, 50, 250))
    Q, c = assemble_logopt(data.features, data.mu, "I")
    p = window_problem(s, data, gamma=1e-3)
    assert np.array_equal(p.Q, Q) and np.array_equal(p.c, c)
    res = train_window(s, data, gamma=1e-3)
    assert res["beta"] is None
    pi = window_weights(s, data, res["solution"].l)
    assert np.abs(pi.sum(axis=1) - 1).max() <= 1e-12
    fixed = train_window(s, data, gamma=1e-3, tc=0.01, beta=10.0)
    assert fixed["beta"] == 10.0
    turn = [run_backtest(window_weights(s, data, r["solution"].l), data.prices, 0.01).turnover.mean()
            for r in (res, fixed)]
    assert turn[1] <= turn[0]
    mv = window_problem(s, data, "mv", gamma=1e-6, lam=2.0)
    assert mv.gamma == 1e-6
    with pytest.raises(ValueError):
        window_problem(s, data, "sharpe")
