"""Price panels, market weights, ranked weights and covariation increments."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "DataError",
    "MarketPanel",
    "WeightPanel",
    "load_prices_csv",
    "write_prices_csv",
    "write_panel_csv",
    "validate_universe",
    "market_weights",
    "rank_weights",
    "realized_covariation_increments",
]


class DataError(ValueError):
    """Malformed or inadmissible market data."""


@dataclass(frozen=True)
class MarketPanel:
    """Strictly positive prices ``(T, d)`` observed at increasing ``times``.

    ``dates`` keeps the original first-column labels of a CSV file (or the
    stringified times for simulated panels).
    """

    times: np.ndarray
    prices: np.ndarray
    labels: tuple[str, ...]
    dates: tuple[str, ...] | None = None

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        times = np.asarray(self.times, dtype=float).reshape(-1)
        if prices.ndim != 2 or prices.shape[0] != times.size:
            raise DataError(f"prices shape {prices.shape} does not match {times.size} times")
        if len(self.labels) != prices.shape[1]:
            raise DataError("one label per asset is required")
        bad = np.argwhere(~(np.isfinite(prices) & (prices > 0)))
        if bad.size:
            r, c = bad[0]
            raise DataError(f"non-positive or missing price at row {r}, column {self.labels[c]!r}")
        if np.any(np.diff(times) <= 0):
            raise DataError("times must be strictly increasing")
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def d(self) -> int:
        return self.prices.shape[1]

    def __len__(self) -> int:
        return self.prices.shape[0]

    def window(self, start: int, stop: int) -> "MarketPanel":
        dates = None if self.dates is None else self.dates[start:stop]
        return MarketPanel(self.times[start:stop], self.prices[start:stop], self.labels, dates)


@dataclass(frozen=True)
class WeightPanel:
    """Rows of portfolio or market weights over a universe.

    ``order`` is only set for ranked panels: ``order[t, r]`` is the index of
    the asset (within the universe) holding rank ``r`` at time ``t``.
    """

    weights: np.ndarray
    universe: tuple[int, ...]
    ranked: bool = False
    order: np.ndarray | None = None

    @property
    def values(self) -> np.ndarray:
        return self.weights

    def unrank(self) -> np.ndarray:
        """Undo the rank sort, returning weights in name order."""
        if self.order is None:
            return self.weights
        out = np.empty_like(self.weights)
        np.put_along_axis(out, self.order, self.weights, axis=1)
        return out


def _parse_time(text: str) -> float:
    try:
        return datetime.fromisoformat(text).timestamp()
    except ValueError:
        return float(text)


def load_prices_csv(path: str | Path) -> MarketPanel:
    """Read a price panel: first column date/time, one price column per asset.

    Raises
    ------
    DataError
        On a malformed file, a missing or non-positive price (naming the row
        and column), or dates that are not strictly increasing.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DataError(f"{path}: need a header and at least one data row")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise DataError(f"{path}: need a date column and at least one price column")
    labels = header[1:]
    dates, times, prices = [], [], []
    for r, row in enumerate(rows[1:], start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
        try:
            t = _parse_time(row[0])
        except ValueError:
            raise DataError(f"{path}: row {r} has unparseable date {row[0]!r}") from None
        vals = []
        for c, cell in enumerate(row[1:]):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {r}, column {labels[c]!r}: missing or non-numeric price {cell!r}") from None
            if not (np.isfinite(v) and v > 0):
                raise DataError(f"{path}: row {r}, column {labels[c]!r}: non-positive price {cell}")
            vals.append(v)
        if times and t <= times[-1]:
            kind = "duplicate" if t == times[-1] else "non-monotone"
            raise DataError(f"{path}: row {r}: {kind} date {row[0]!r}")
        dates.append(row[0].strip())
        times.append(t)
        prices.append(vals)
    if not prices:
        raise DataError(f"{path}: no data rows")
    return MarketPanel(np.array(times), np.array(prices), tuple(labels), tuple(dates))


def write_panel_csv(path: str | Path, first_column: Sequence, columns: Sequence[str],
                    values: np.ndarray, first_header: str = "date") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([first_header, *columns])
        for key, row in zip(first_column, np.asarray(values)):
            writer.writerow([key, *(repr(float(v)) for v in row)])


def write_prices_csv(path: str | Path, panel: MarketPanel) -> None:
    """Write a panel in the format read by :func:`load_prices_csv`."""
    first = panel.dates if panel.dates is not None else [repr(float(t)) for t in panel.times]
    write_panel_csv(path, first, panel.labels, panel.prices)


def validate_universe(universe: Sequence[int] | None, d: int) -> tuple[int, ...]:
    if universe is None:
        return tuple(range(d))
    u = tuple(int(i) for i in universe)
    if not u:
        raise DataError("universe must be nonempty")
    if len(set(u)) != len(u) or any(not 0 <= i < d for i in u):
        raise DataError(f"invalid universe {u} for {d} assets")
    return u


def market_weights(panel: MarketPanel | np.ndarray, universe: Sequence[int] | None = None) -> WeightPanel:
    """Universe weights ``S^i / sum_{j in U} S^j`` (0-based asset indices)."""
    prices = panel.prices if isinstance(panel, MarketPanel) else np.asarray(panel, dtype=float)
    u = validate_universe(universe, prices.shape[1])
    sub = prices[:, list(u)]
    return WeightPanel(sub / sub.sum(axis=1, keepdims=True), u)


def rank_weights(weights: WeightPanel | np.ndarray) -> WeightPanel:
    """Sort each row in descending order; ties go to the smaller label first."""
    if isinstance(weights, WeightPanel):
        w, u = weights.weights, weights.universe
    else:
        w = np.asarray(weights, dtype=float)
        u = tuple(range(w.shape[1]))
    order = np.argsort(-w, axis=1, kind="stable")
    ranked = np.take_along_axis(w, order, axis=1)
    return WeightPanel(ranked, u, ranked=True, order=order)


def realized_covariation_increments(weights: WeightPanel | np.ndarray) -> np.ndarray:
    """Per-step outer products of weight increments, shape ``(T-1, d, d)``."""
    w = weights.weights if isinstance(weights, WeightPanel) else np.asarray(weights, dtype=float)
    if w.shape[0] < 2:
        raise DataError("need at least 2 rows")
    dmu = np.diff(w, axis=0)
    return dmu[:, :, None] * dmu[:, None, :]
