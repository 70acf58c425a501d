"""Buy-and-hold backtests with proportional transaction costs.

At every rebalance the strategy moves from the price-drifted weights
``p`` it holds to the target weights ``pi``.  Paying proportional costs at
rate ``c`` leaves the fraction ``alpha`` of wealth, where

    1 - alpha = c * sum_i |alpha pi^i - p^i|.

With short positions this equation can have zero, one or two roots; the
largest root not above 1 is the cheapest feasible trade.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .market import DataError, MarketPanel, validate_universe, write_panel_csv

__all__ = [
    "TcOutcome",
    "BacktestReport",
    "RuinError",
    "solve_rebalance_alpha",
    "alpha_residual",
    "run_backtest",
    "log_relative_wealth",
    "Window",
    "Splits",
    "split_train_cv_test",
]

UNIQUE = "unique"
MULTIPLE = "multiple"
RUIN_NO_SOLUTION = "ruin-no-solution"
RUIN_NEGATIVE = "ruin-negative"


class RuinError(RuntimeError):
    """A strategy went bankrupt where that is treated as fatal."""


@dataclass
class TcOutcome:
    """Result of the rebalancing equation at one trade.

    ``alpha`` is ``nan`` when there is no admissible root.
    """

    status: str
    alpha: float
    roots: list[float]
    tc_paid: float

    @property
    def ruined(self) -> bool:
        return self.status in (RUIN_NO_SOLUTION, RUIN_NEGATIVE)


def alpha_residual(alpha: float, prev: np.ndarray, target: np.ndarray, c: float) -> float:
    """``1 - alpha - c * sum |alpha target - prev|``."""
    return float(1.0 - alpha - c * np.sum(np.abs(alpha * np.asarray(target) - np.asarray(prev))))


def _check_weights(w: np.ndarray, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(-1)
    if not np.all(np.isfinite(w)) or abs(w.sum() - 1.0) > 1e-8 * max(1.0, np.abs(w).sum()):
        raise ValueError(f"{name} weights must be finite and sum to 1")
    return w


def solve_rebalance_alpha(prev: np.ndarray, target: np.ndarray, c: float) -> TcOutcome:
    """Solve the rebalancing equation exactly.

    Both sides are piecewise linear in ``alpha`` with kinks at
    ``prev^i / target^i``; the equation is solved on every segment between
    sorted kinks and on the two unbounded ones.

    Raises
    ------
    ValueError
        If either weight vector does not sum to 1, or ``c < 0``.
    """
    p = _check_weights(prev, "pre-trade")
    pi = _check_weights(target, "target")
    if p.shape != pi.shape:
        raise ValueError("weight vectors differ in length")
    if c < 0:
        raise ValueError("cost rate must be >= 0")
    if c == 0 or np.array_equal(p, pi):
        return TcOutcome(UNIQUE, 1.0, [1.0], 0.0)

    nz = pi != 0
    kinks = np.unique(p[nz] / pi[nz])
    edges = np.concatenate([[-np.inf], kinks, [np.inf]])
    roots: list[float] = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if np.isinf(lo) and np.isinf(hi):
            probe = 0.0
        elif np.isinf(lo):
            probe = hi - 1.0
        elif np.isinf(hi):
            probe = lo + 1.0
        else:
            probe = 0.5 * (lo + hi)
        s = np.sign(probe * pi - p)
        # on this segment: 1 - alpha - c sum s_i (alpha pi_i - p_i) = A + B alpha
        A = 1.0 + c * float(s @ p)
        B = -1.0 - c * float(s @ pi)
        if B == 0.0:
            if A == 0.0:
                # the whole segment solves the equation; keep its best point
                best = min(hi, 1.0)
                if best >= lo:
                    roots.append(float(best))
            continue
        root = -A / B
        if lo - 1e-12 * max(1.0, abs(lo)) <= root <= hi + 1e-12 * max(1.0, abs(hi)):
            roots.append(float(root))
    roots = sorted(set(roots))
    merged: list[float] = []
    for r in roots:
        if not merged or abs(r - merged[-1]) > 1e-12 * max(1.0, abs(r)):
            merged.append(r)
    admissible = [r for r in merged if r <= 1.0 + 1e-12]
    if not admissible:
        return TcOutcome(RUIN_NO_SOLUTION, float("nan"), merged, float("nan"))
    alpha = min(admissible[-1], 1.0)
    if alpha < 0:
        return TcOutcome(RUIN_NEGATIVE, alpha, merged, 1.0 - alpha)
    # negative roots are never traded, so only roots in [0, 1] count
    status = UNIQUE if sum(r >= 0 for r in admissible) == 1 else MULTIPLE
    return TcOutcome(status, alpha, merged, 1.0 - alpha)


@dataclass
class BacktestReport:
    """Wealth paths of one backtest.

    ``wealth`` and ``relative`` have one entry per grid point of the window,
    starting at 1; after ruin both are 0 and the log values are ``-inf``.
    """

    wealth: np.ndarray
    benchmark: np.ndarray
    relative: np.ndarray
    log_wealth: float
    log_relative: float
    turnover: np.ndarray
    tc_fraction: np.ndarray
    tc_paid: float
    ruined: bool = False
    ruin_step: int | None = None
    statuses: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        def num(v: float):
            return v if np.isfinite(v) else "-inf"
        return {
            "log_wealth": num(self.log_wealth),
            "log_relative_wealth": num(self.log_relative),
            "total_turnover": float(np.sum(self.turnover)),
            "mean_turnover": float(np.mean(self.turnover)) if self.turnover.size else 0.0,
            "tc_paid": float(self.tc_paid),
            "ruined": self.ruined,
            "ruin_step": self.ruin_step,
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def to_csv(self, path: str | Path, times=None) -> None:
        n = self.wealth.size
        turnover = np.concatenate([self.turnover, np.zeros(n - self.turnover.size)])
        cols = np.column_stack([self.wealth, self.benchmark, self.relative, turnover])
        first = range(n) if times is None else times
        write_panel_csv(path, first, ["wealth", "benchmark", "relative_wealth", "turnover"], cols,
                        first_header="step" if times is None else "time")


def _prices(prices) -> np.ndarray:
    return prices.prices if isinstance(prices, MarketPanel) else np.asarray(prices, dtype=float)


def run_backtest(weights: np.ndarray, prices, c: float = 0.0, universe=None,
                 initial: np.ndarray | None = None) -> BacktestReport:
    """Rebalance to ``weights[t]`` at every grid point and hold until the next.

    Parameters
    ----------
    weights : ndarray
        ``(T, U)`` or ``(T - 1, U)`` target weights over the universe; row
        ``t`` is held over ``[t, t + 1]``.
    prices : MarketPanel or ndarray
        ``(T, d)`` prices on the same grid.
    c : float
        Proportional cost rate.
    universe : sequence of int, optional
        Columns of ``prices`` forming the universe (default: all).
    initial : ndarray, optional
        Weights held before the first trade; the universe portfolio by
        default.  The benchmark itself never trades.
    """
    S = _prices(prices)
    u = validate_universe(universe, S.shape[1])
    S = S[:, list(u)]
    T = S.shape[0]
    pi = np.asarray(weights, dtype=float)
    if T < 2 or pi.shape not in ((T, len(u)), (T - 1, len(u))):
        raise ValueError(f"weights {pi.shape} do not match prices {S.shape}")
    pi = pi[:T - 1]
    sums = pi.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > 1e-8 * max(1.0, float(np.abs(pi).sum(axis=1).max())):
        raise ValueError("weight rows must sum to 1")
    growth = S[1:] / S[:-1]
    bench_log = np.concatenate([[0.0], np.cumsum(np.log(S[1:].sum(axis=1) / S[:-1].sum(axis=1)))])
    held = S[0] / S[0].sum() if initial is None else np.asarray(initial, dtype=float)

    log_w = np.zeros(T)
    turnover = np.zeros(T - 1)
    tc_frac = np.zeros(T - 1)
    tc_paid = 0.0
    statuses = []
    ruin_step = None
    if c == 0:
        # no fixed point to solve: every step is closed form
        step = np.einsum("ti,ti->t", pi, growth)
        bad = np.flatnonzero(step <= 0)
        n = T - 1 if bad.size == 0 else int(bad[0])
        prev = np.vstack([held[None], pi[:n] * growth[:n] / step[:n, None]])
        m = min(n + 1, T - 1)
        turnover[:m] = np.abs(pi[:m] - prev[:m]).sum(axis=1)
        log_w[1:n + 1] = np.cumsum(np.log(step[:n]))
        if n < T - 1:
            ruin_step = n
    for t in range(T - 1 if c > 0 else 0):
        if c > 0:
            out = solve_rebalance_alpha(held, pi[t], c)
            statuses.append(out.status)
            if out.ruined:
                ruin_step = t
                break
            alpha = out.alpha
        else:
            alpha = 1.0
        turnover[t] = float(np.sum(np.abs(alpha * pi[t] - held)))
        tc_frac[t] = 1.0 - alpha
        tc_paid += (1.0 - alpha) * np.exp(log_w[t])
        step = float(pi[t] @ growth[t])
        if step <= 0 or alpha <= 0:
            ruin_step = t
            break
        log_w[t + 1] = log_w[t] + np.log(alpha) + np.log(step)
        held = pi[t] * growth[t] / step
    if ruin_step is not None:
        log_w[ruin_step + 1:] = -np.inf
    wealth = np.exp(log_w)
    log_rel = log_w - bench_log
    return BacktestReport(
        wealth=wealth,
        benchmark=np.exp(bench_log),
        relative=np.exp(log_rel),
        log_wealth=float(log_w[-1]),
        log_relative=float(log_rel[-1]),
        turnover=turnover,
        tc_fraction=tc_frac,
        tc_paid=float(tc_paid),
        ruined=ruin_step is not None,
        ruin_step=ruin_step,
        statuses=statuses,
    )


def log_relative_wealth(weights: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Cost-free log-relative wealth ``sum_t log(sum_i pi_t^i mu_{t+1}^i / mu_t^i)``.

    Vectorized over leading axes: ``weights`` ``(..., T or T-1, U)``,
    universe weights ``mu`` ``(..., T, U)``.  Paths with a non-positive
    one-step factor get ``-inf``.
    """
    mu = np.asarray(mu, dtype=float)
    T = mu.shape[-2]
    pi = np.asarray(weights, dtype=float)[..., :T - 1, :]
    step = np.sum(pi * mu[..., 1:, :] / mu[..., :-1, :], axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        logs = np.where(step > 0, np.log(np.where(step > 0, step, 1.0)), -np.inf)
    return np.sum(logs, axis=-1)


@dataclass(frozen=True)
class Window:
    """Investment rows ``[start, stop)`` with features observed from ``obs_start``."""

    obs_start: int
    start: int
    stop: int

    @property
    def length(self) -> int:
        return self.stop - self.start

    @property
    def lead(self) -> int:
        return self.start - self.obs_start

    def to_dict(self) -> dict:
        return {"obs_start": self.obs_start, "start": self.start, "stop": self.stop}


@dataclass(frozen=True)
class Splits:
    train: Window
    cv: Window
    test: Window
    retrain: Window


def split_train_cv_test(n_samples: int | MarketPanel, T_ins: int, T_cv: int, T_test: int,
                        t0: int = 100, offset: int = 0) -> Splits:
    """Consecutive in-sample, cross-validation and test windows.

    Each window carries a ``t0``-sample observation prefix.  The retraining
    window covers the ``T_ins`` samples right before the test window.

    Raises
    ------
    DataError
        If the panel is shorter than ``offset + t0 + T_ins + T_cv + T_test``.
    """
    n = len(n_samples) if isinstance(n_samples, MarketPanel) else int(n_samples)
    if min(T_ins, T_cv, T_test) < 2 or t0 < 0 or offset < 0:
        raise ValueError("windows need at least 2 samples and t0, offset >= 0")
    need = offset + t0 + T_ins + T_cv + T_test
    if n < need:
        raise DataError(f"need {need} samples, panel has {n} (short by {need - n})")
    a = offset + t0
    train = Window(a - t0, a, a + T_ins)
    cv = Window(train.stop - t0, train.stop, train.stop + T_cv)
    test = Window(cv.stop - t0, cv.stop, cv.stop + T_test)
    retrain = Window(test.start - T_ins - t0, test.start - T_ins, test.start)
    return Splits(train, cv, test, retrain)
