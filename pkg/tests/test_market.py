import numpy as np
import pytest

from sigportfolio.market import (
    DataError,
    MarketPanel,
    load_prices_csv,
    market_weights,
    rank_weights,
    realized_covariation_increments,
    validate_universe,
    write_prices_csv,
)
from sigportfolio.simulation import SimConfig, simulate_log_prices


def write(tmp_path, text):
    p = tmp_path / "prices.csv"
    p.write_text(text, encoding="utf-8")
    return p


class TestCsv:
    def test_well_formed(self, tmp_path):
        rows = ["date,A,B,C"] + [f"2020-01-0{k + 1},{k + 1},{2 * k + 1},{3.5}" for k in range(5)]
        panel = load_prices_csv(write(tmp_path, "\n".join(rows) + "\n"))
        assert panel.d == 3 and len(panel) == 5
        assert panel.labels == ("A", "B", "C")
        assert panel.dates[0] == "2020-01-01"

    def test_zero_price_names_row_and_column(self, tmp_path):
        p = write(tmp_path, "date,A,B\n2020-01-01,1,2\n2020-01-02,0,2\n")
        with pytest.raises(DataError, match=r"row 2, column 'A'"):
            load_prices_csv(p)

    def test_missing_price(self, tmp_path):
        p = write(tmp_path, "date,A,B\n2020-01-01,1,\n")
        with pytest.raises(DataError, match="column 'B'"):
            load_prices_csv(p)

    def test_duplicate_and_nonmonotone_dates(self, tmp_path):
        with pytest.raises(DataError, match="duplicate"):
            load_prices_csv(write(tmp_path, "date,A\n2020-01-01,1\n2020-01-01,2\n"))
        with pytest.raises(DataError, match="non-monotone"):
            load_prices_csv(write(tmp_path, "date,A\n2020-01-02,1\n2020-01-01,2\n"))

    def test_malformed(self, tmp_path):
        with pytest.raises(DataError):
            load_prices_csv(write(tmp_path, "date,A,B\n2020-01-01,1\n"))
        with pytest.raises(DataError):
            load_prices_csv(write(tmp_path, "date,A\nnot-a-date,1\n"))
        with pytest.raises(DataError):
            load_prices_csv(write(tmp_path, "date,A\n"))

    def test_numeric_times_and_roundtrip(self, tmp_path):
        panel = load_prices_csv(write(tmp_path, "t,A,B\n0,1,2\n1.5,1.1,2.2\n"))
        np.testing.assert_array_equal(panel.times, [0.0, 1.5])
        out = tmp_path / "again.csv"
        write_prices_csv(out, panel)
        again = load_prices_csv(out)
        np.testing.assert_array_equal(again.prices, panel.prices)

    def test_panel_validation(self):
        with pytest.raises(DataError):
            MarketPanel(np.arange(2.0), np.array([[1.0], [-1.0]]), ("A",))
        with pytest.raises(DataError):
            MarketPanel(np.array([0.0, 0.0]), np.ones((2, 1)), ("A",))


class TestWeights:
    def test_examples(self):
        np.testing.assert_allclose(market_weights(np.ones((3, 4))).weights, 0.25)
        np.testing.assert_array_equal(market_weights(np.ones((3, 4)) * 7, [2]).weights, 1.0)
        np.testing.assert_allclose(market_weights(np.array([[1.0, 2.0, 3.0]])).weights, [[1 / 6, 2 / 6, 3 / 6]])

    def test_rows_sum_to_one(self, rng):
        w = market_weights(np.exp(rng.normal(size=(50, 5))), [0, 2, 4]).weights
        assert np.abs(w.sum(axis=1) - 1).max() <= 1e-12
        assert np.all((w > 0) & (w < 1))

    def test_universe_validation(self):
        assert validate_universe(None, 3) == (0, 1, 2)
        for bad in ([], [0, 0], [3]):
            with pytest.raises(DataError):
                validate_universe(bad, 3)

    def test_rank_example(self):
        r = rank_weights(np.array([[0.2, 0.5, 0.3]]))
        np.testing.assert_array_equal(r.weights, [[0.5, 0.3, 0.2]])
        # rank r is held by asset order[r]: rank 0 -> asset 1, rank 1 -> asset 2, rank 2 -> asset 0
        np.testing.assert_array_equal(r.order, [[1, 2, 0]])

    def test_rank_ties_and_identity(self):
        r = rank_weights(np.array([[0.5, 0.5], [0.25, 0.75]]))
        np.testing.assert_array_equal(r.order, [[0, 1], [1, 0]])
        s = rank_weights(np.array([[0.6, 0.3, 0.1]]))
        np.testing.assert_array_equal(s.order, [[0, 1, 2]])

    def test_rank_inverts(self, rng):
        w = rng.dirichlet(np.ones(6), size=40)
        r = rank_weights(w)
        assert np.all(np.diff(r.weights, axis=1) <= 0)
        np.testing.assert_array_equal(r.unrank(), w)


class TestCovariation:
    def test_trivial_cases(self, rng):
        np.testing.assert_array_equal(realized_covariation_increments(np.full((4, 3), 1 / 3)), 0.0)
        one = realized_covariation_increments(rng.normal(size=(5, 1)))
        assert np.all(one >= 0)
        with pytest.raises(DataError):
            realized_covariation_increments(np.ones((1, 2)))

    def test_psd(self, rng):
        inc = realized_covariation_increments(rng.dirichlet(np.ones(4), size=30))
        v = rng.normal(size=(100, 4))
        quad = np.einsum("pi,kij,pj->pk", v, inc, v)
        assert quad.min() >= -1e-15

    def test_volstab_quadratic_variation(self):
        cfg = SimConfig("volstab", d=3, steps=10_000, alpha=10.0, seed=4)
        logs, _ = simulate_log_prices(cfg, range(4))
        dt = cfg.horizon / cfg.steps
        for lp in logs:
            mu = market_weights(np.exp(lp - lp.max(axis=1, keepdims=True))).weights
            realized = np.diagonal(realized_covariation_increments(mu), axis1=1, axis2=2).sum(axis=0)
            integral = (mu[:-1] * (1 - mu[:-1])).sum(axis=0) * dt
            np.testing.assert_allclose(realized, integral, rtol=0.05)
