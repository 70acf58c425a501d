import json

import numpy as np
import pytest

from sigportfolio.backtest import (
    alpha_residual,
    log_relative_wealth,
    run_backtest,
    solve_rebalance_alpha,
    split_train_cv_test,
)
from sigportfolio.market import DataError


def random_pair(rng, U, c):
    """Weights summing to one with possible shorts and sum |prev| < 1 / c."""
    while True:
        prev = rng.normal(size=U)
        prev = prev / prev.sum()
        target = rng.normal(size=U)
        target = target / target.sum()
        if np.abs(prev).sum() < 1 / c and np.abs(target).sum() < 50:
            return prev, target


class TestAlpha:
    def test_no_trade(self):
        out = solve_rebalance_alpha([0.3, 0.7], [0.3, 0.7], 0.05)
        assert out.status == "unique" and out.alpha == 1.0 and out.tc_paid == 0.0

    def test_no_solution(self):
        out = solve_rebalance_alpha([13.1, -12.1], [13.0, -12.0], 0.05)
        assert out.status == "ruin-no-solution" and out.ruined and out.roots == []

    def test_negative_root(self):
        out = solve_rebalance_alpha([11.0, -10.0], [10.0, -9.0], 0.05)
        assert out.status == "ruin-negative" and out.ruined
        assert out.alpha == pytest.approx(-1.0, abs=1e-12)

    def test_two_roots(self):
        prev, target = [5.0, 6.0, -10.0], [5.5, 6.5, -11.0]
        out = solve_rebalance_alpha(prev, target, 0.05)
        assert out.status == "multiple"
        assert [round(r, 4) for r in out.roots] == [0.3333, 0.9535]
        assert out.alpha == max(out.roots)
        for r in out.roots:
            assert abs(alpha_residual(r, prev, target, 0.05)) <= 1e-12

    def test_long_only_tc(self):
        prev, target = np.array([0.5, 0.5]), np.array([0.7, 0.3])
        out = solve_rebalance_alpha(prev, target, 0.01)
        assert out.status == "unique"
        assert out.tc_paid == pytest.approx(1 - out.alpha)
        assert abs(alpha_residual(out.alpha, prev, target, 0.01)) <= 1e-15

    def test_uniqueness_sweep(self, rng):
        for _ in range(1000):
            c = rng.choice([0.001, 0.01, 0.05])
            prev, target = random_pair(rng, rng.integers(2, 6), c)
            out = solve_rebalance_alpha(prev, target, c)
            assert out.status == "unique"
            assert sum(0 <= r <= 1 for r in out.roots) == 1
            assert abs(alpha_residual(out.alpha, prev, target, c)) <= 1e-12

    def test_grid_scan_finds_no_extra_roots(self, rng):
        grid = np.linspace(-5, 5, 1_000_001)
        for _ in range(5):
            c = 0.2
            prev = rng.normal(scale=2, size=3)
            prev /= prev.sum()
            target = rng.normal(scale=2, size=3)
            target /= target.sum()
            out = solve_rebalance_alpha(prev, target, c)
            res = 1 - grid - c * np.abs(grid[:, None] * target - prev).sum(axis=1)
            brackets = np.flatnonzero(np.sign(res[:-1]) * np.sign(res[1:]) <= 0)
            inside = [r for r in out.roots if -5 < r < 5]
            for k in brackets:
                assert any(grid[k] - 1e-9 <= r <= grid[k + 1] + 1e-9 for r in inside)
            for r in out.roots:
                assert abs(alpha_residual(r, prev, target, c)) <= 1e-12

    def test_invalid(self):
        with pytest.raises(ValueError):
            solve_rebalance_alpha([0.5, 0.6], [0.5, 0.5], 0.01)
        with pytest.raises(ValueError):
            solve_rebalance_alpha([0.5, 0.5], [0.5, 0.5], -0.01)


class TestBacktest:
    def test_flat_market(self):
        prices = np.ones((10, 4))
        rep = run_backtest(np.full((10, 4), 0.25), prices, 0.05)
        assert rep.log_relative == 0.0 and rep.turnover.sum() == 0.0

    def test_market_portfolio_needs_no_trading(self, rng):
        prices = np.exp(np.cumsum(rng.normal(scale=0.02, size=(30, 3)), axis=0))
        mu = prices / prices.sum(axis=1, keepdims=True)
        rep = run_backtest(mu, prices, 0.05)
        assert rep.turnover.max() <= 1e-15
        np.testing.assert_allclose(rep.relative, 1.0, atol=1e-13)

    def test_product_formula(self, rng):
        prices = np.exp(np.cumsum(rng.normal(scale=0.02, size=(50, 4)), axis=0))
        mu = prices / prices.sum(axis=1, keepdims=True)
        pi = rng.dirichlet(np.ones(4), size=50)
        rep = run_backtest(pi, prices, 0.0)
        direct = np.sum(np.log(np.sum(pi[:-1] * mu[1:] / mu[:-1], axis=1)))
        assert abs(rep.log_relative - direct) <= 1e-12
        assert abs(log_relative_wealth(pi, mu) - direct) <= 1e-12
        assert rep.wealth[0] == 1.0

    def test_cost_monotone(self, rng):
        prices = np.exp(np.cumsum(rng.normal(scale=0.02, size=(50, 3)), axis=0))
        pi = rng.dirichlet(np.ones(3), size=50)
        logs = [run_backtest(pi, prices, c).log_wealth for c in (0.0, 0.01, 0.05)]
        assert logs[0] >= logs[1] >= logs[2]

    def test_universe_and_benchmark(self, rng):
        prices = np.exp(np.cumsum(rng.normal(scale=0.02, size=(20, 4)), axis=0))
        rep = run_backtest(np.full((20, 2), 0.5), prices, 0.0, universe=[1, 3])
        sub = prices[:, [1, 3]]
        np.testing.assert_allclose(rep.benchmark, sub.sum(axis=1) / sub[0].sum(), rtol=1e-13)

    def test_ruin(self):
        prices = np.array([[1.0, 1.0], [1.0, 1.0], [1.0, 3.0], [1.0, 3.0]])
        rep = run_backtest(np.array([[2.0, -1.0]] * 4), prices, 0.0)
        assert rep.ruined and rep.log_wealth == -np.inf and rep.ruin_step == 1
        assert np.all(rep.wealth[2:] == 0.0)
        rep = run_backtest(np.array([[13.0, -12.0]] * 4), np.ones((4, 2)), 0.05,
                           initial=np.array([13.1, -12.1]))
        assert rep.ruined and rep.statuses == ["ruin-no-solution"]

    def test_log_relative_wealth_vectorized(self, rng):
        mu = rng.dirichlet(np.ones(3), size=(4, 12))
        pi = rng.dirichlet(np.ones(3), size=(4, 12))
        batch = log_relative_wealth(pi, mu)
        for b in range(4):
            assert batch[b] == pytest.approx(run_backtest(pi[b], mu[b]).log_relative, abs=1e-12)
        mu[0, 3], mu[0, 4] = [0.5, 0.25, 0.25], [0.25, 0.5, 0.25]
        pi[0, 3] = [3.0, -1.0, -1.0]
        out = log_relative_wealth(pi, mu)
        assert out[0] == -np.inf and np.all(np.isfinite(out[1:]))

    def test_outputs(self, rng, tmp_path):
        prices = np.exp(np.cumsum(rng.normal(scale=0.02, size=(10, 2)), axis=0))
        rep = run_backtest(np.full((9, 2), 0.5), prices, 0.01)
        rep.to_json(tmp_path / "r.json")
        data = json.loads((tmp_path / "r.json").read_text())
        assert data["ruined"] is False
        rep.to_csv(tmp_path / "r.csv")
        header = (tmp_path / "r.csv").read_text().splitlines()[0]
        assert header.split(",")[1:] == ["wealth", "benchmark", "relative_wealth", "turnover"]

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            run_backtest(np.full((5, 2), 0.5), np.ones((10, 2)))
        with pytest.raises(ValueError):
            run_backtest(np.full((10, 2), 0.6), np.ones((10, 2)))


class TestSplits:
    def test_daily_scale(self):
        s = split_train_cv_test(100 + 2000 + 250 + 750, 2000, 250, 750)
        assert (s.train.length, s.cv.length, s.test.length) == (2000, 250, 750)
        assert s.train.lead == s.cv.lead == s.test.lead == 100
        assert s.train.stop == s.cv.start and s.cv.stop == s.test.start
        assert s.test.stop == 3100
        assert s.retrain.stop == s.test.start and s.retrain.length == 2000

    def test_shortfall(self):
        with pytest.raises(DataError, match="short by 7"):
            split_train_cv_test(3093, 2000, 250, 750)

    def test_offset(self):
        s = split_train_cv_test(500, 100, 50, 50, t0=20, offset=30)
        assert s.train.obs_start == 30 and s.train.start == 50
