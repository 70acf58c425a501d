"""Training and evaluation pipelines.

Two data regimes are covered:

* Monte-Carlo: trajectories are simulated in fixed batches, turned into
  features and folded into running sums of ``(Q, c)`` without ever being
  written to disk.  Batches are processed in parallel and reduced in batch
  order, so results do not depend on the thread count.
* A single observed price panel: features are computed on a window with an
  observation lead-in, and expectations are replaced by time averages.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .backtest import Window, log_relative_wealth, run_backtest
from .market import MarketPanel, validate_universe
from .portfolio import FeatureSpec, PortfolioSpec, auxiliary_weights, portfolio_weights
from .qp import (
    LogOptAccumulator,
    QpProblem,
    add_tc_penalty,
    assemble_logopt,
    assemble_mv,
    solve_qp,
    tune_beta,
)
from .signature import signature_matrix
from .simulation import SimConfig, reference_go_weights, simulate_log_prices

__all__ = [
    "McSettings",
    "path_features",
    "monte_carlo_problem",
    "evaluate_monte_carlo",
    "WindowData",
    "window_data",
    "window_problem",
    "window_weights",
    "train_window",
]


@dataclass
class McSettings:
    """Batching of a Monte-Carlo run.

    ``sim_batch`` paths are simulated together; features and Gram matrices
    are formed ``feature_batch`` paths at a time to bound memory.
    """

    threads: int = 1
    sim_batch: int = 256
    feature_batch: int = 16


def _underlying(choice: str, logs: np.ndarray, mu: np.ndarray) -> np.ndarray:
    if choice == "universe_weights":
        return mu
    if choice == "ranked_weights":
        return -np.sort(-mu, axis=-1)
    if choice == "log_prices":
        return logs
    if choice == "prices":
        return np.exp(logs)
    raise ValueError(f"underlying {choice!r} is not available for simulated paths")


def path_features(spec: FeatureSpec, logs: np.ndarray, times: np.ndarray,
                  universe: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Universe weights ``(B, T, U)`` and features ``(B, T, V)`` of log-price paths."""
    sub = logs[..., list(universe)]
    w = np.exp(sub - sub.max(axis=-1, keepdims=True))
    mu = w / w.sum(axis=-1, keepdims=True)
    x = _underlying(spec.underlying, sub, mu)
    if spec.family == "signature":
        clock = np.broadcast_to((times / spec.horizon)[:, None], x.shape[:-1] + (1,))
        return mu, signature_matrix(np.concatenate([clock, x], axis=-1), spec.level)
    phi = np.stack([spec.compute(path, times).values for path in x])
    return mu, phi


def _batches(n_paths: int, start: int, size: int) -> list[list[int]]:
    ids = list(range(start, start + n_paths))
    return [ids[i:i + size] for i in range(0, n_paths, size)]


def _map(settings: McSettings, fn, items):
    with ThreadPoolExecutor(max_workers=max(1, settings.threads)) as pool:
        return list(pool.map(fn, items))


def monte_carlo_problem(sim: SimConfig, spec: PortfolioSpec, n_paths: int, start: int = 0,
                        t0: int = 0, settings: McSettings | None = None) -> tuple[np.ndarray, np.ndarray, dict]:
    """Monte-Carlo averages ``(Q_hat, c_hat)`` of the log-relative-wealth objective.

    Returns the averages and run information (path count, regenerations).
    """
    if n_paths < 1:
        raise ValueError("need at least one trajectory")
    if spec.tau != "universe":
        raise ValueError("Monte-Carlo training uses the universe portfolio as auxiliary portfolio")
    settings = settings or McSettings()
    universe = validate_universe(spec.universe or None, sim.d)
    times = np.linspace(0.0, sim.horizon, sim.steps + 1)

    def work(ids):
        logs, regen = simulate_log_prices(sim, ids)
        acc = LogOptAccumulator(spec.kind, t0)
        for s in range(0, len(ids), settings.feature_batch):
            mu, phi = path_features(spec.features, logs[s:s + settings.feature_batch], times, universe)
            acc.add(phi, mu)
        return acc.Q, acc.c, acc.count, regen

    total = LogOptAccumulator(spec.kind, t0)
    regenerated = 0
    for Q, c, count, regen in _map(settings, work, _batches(n_paths, start, settings.sim_batch)):
        total.add_sums(Q, c, count)
        regenerated += regen
    Q, c = total.mean()
    return Q, c, {"paths": total.count, "regenerated": regenerated}


def evaluate_monte_carlo(sim: SimConfig, spec: PortfolioSpec, n_paths: int, start: int,
                         settings: McSettings | None = None,
                         growth_optimal: bool = True) -> dict[str, np.ndarray]:
    """Cost-free log-relative wealth of the trained portfolio on fresh paths.

    Returns per-path arrays ``"model"`` and, if requested, ``"growth_optimal"``
    (the model's theoretical growth-optimal portfolio on the same paths).
    """
    settings = settings or McSettings()
    universe = validate_universe(spec.universe or None, sim.d)
    l = spec.check_coefficients()
    times = np.linspace(0.0, sim.horizon, sim.steps + 1)
    if growth_optimal and len(universe) != sim.d:
        raise ValueError("growth-optimal comparison needs the full market as universe")

    def work(ids):
        logs, _ = simulate_log_prices(sim, ids)
        model, go = [], []
        for s in range(0, len(ids), settings.feature_batch):
            chunk = logs[s:s + settings.feature_batch]
            mu, phi = path_features(spec.features, chunk, times, universe)
            pi = portfolio_weights(spec.kind, mu, l, phi)
            model.append(log_relative_wealth(pi, mu))
            if growth_optimal:
                go.append(log_relative_wealth(reference_go_weights(sim, chunk), mu))
        return np.concatenate(model), (np.concatenate(go) if go else None)

    parts = _map(settings, work, _batches(n_paths, start, settings.sim_batch))
    out = {"model": np.concatenate([m for m, _ in parts])}
    if growth_optimal:
        out["growth_optimal"] = np.concatenate([g for _, g in parts])
    return out


@dataclass
class WindowData:
    """Aligned universe weights, universe prices and features on a window."""

    window: Window
    mu: np.ndarray
    prices: np.ndarray
    features: np.ndarray
    extra: dict = field(default_factory=dict)


def window_data(spec: PortfolioSpec, panel: MarketPanel, window: Window,
                external: np.ndarray | None = None) -> WindowData:
    """Features on ``window``, computed from its observation start.

    The clock of the time augmentation counts samples since the observation
    start, divided by the feature horizon.
    """
    if window.obs_start < 0 or window.stop > len(panel):
        raise ValueError(f"window {window} does not fit a panel of {len(panel)} samples")
    universe = validate_universe(spec.universe or None, panel.d)
    S = panel.prices[window.obs_start:window.stop][:, list(universe)]
    mu = S / S.sum(axis=1, keepdims=True)
    choice = spec.features.underlying
    if choice == "external":
        if external is None:
            raise ValueError("external underlying path required")
        x = np.asarray(external, dtype=float)[window.obs_start:window.stop]
    else:
        x = _underlying(choice, np.log(S), mu)
    times = np.arange(S.shape[0], dtype=float)
    phi = spec.features.compute(x, times).values
    k = window.lead
    return WindowData(window, mu[k:], S[k:], phi[k:])


def _tau(spec: PortfolioSpec, data: WindowData) -> np.ndarray:
    return auxiliary_weights(spec.tau, data.mu, spec.tau_bound)


def window_problem(spec: PortfolioSpec, data: WindowData, objective: str = "logopt",
                   gamma: float = 0.0, bounds=None, lam: float = 1.0, delta: int = 1,
                   mode: str = "relative") -> QpProblem:
    """Time-average QP on one window (log-relative wealth or mean-variance)."""
    if objective == "logopt":
        if spec.tau != "universe":
            raise ValueError("log-relative-wealth training uses the universe portfolio as auxiliary portfolio")
        Q, c = assemble_logopt(data.features, data.mu, spec.kind)
        return QpProblem(Q, c, gamma=gamma, bounds=bounds)
    if objective == "mv":
        stats = assemble_mv(data.features, data.prices, _tau(spec, data), lam, spec.kind, delta, mode)
        return stats.to_problem(gamma=gamma, bounds=bounds)
    raise ValueError(f"unknown objective {objective!r}")


def window_weights(spec: PortfolioSpec, data: WindowData, l: np.ndarray | None = None) -> np.ndarray:
    l = spec.check_coefficients() if l is None else l
    return portfolio_weights(spec.kind, _tau(spec, data), l, data.features)


def train_window(spec: PortfolioSpec, data: WindowData, objective: str = "logopt",
                 gamma: float = 0.0, bounds=None, lam: float = 1.0, delta: int = 1,
                 mode: str = "relative", tc: float = 0.0, beta: float | str | None = None,
                 beta0: float = 0.5) -> dict:
    """Fit ``l`` on one window, optionally with a tuned transaction-cost penalty.

    ``beta`` is ``None`` (no penalty), a number, or ``"tune"``.  Returns a
    dict with the solution, the chosen ``beta`` and the search log.
    """
    problem = window_problem(spec, data, objective, gamma, bounds, lam, delta, mode)
    if beta is None:
        sol = solve_qp(problem)
        return {"solution": sol, "beta": None, "search": None}

    def build(b: float) -> QpProblem:
        return add_tc_penalty(problem, b, data.features, data.mu, spec.kind, spec.tau)

    if beta == "tune":
        def wealth(l: np.ndarray) -> float:
            pi = window_weights(spec, data, l)
            return float(run_backtest(pi, data.prices, tc).wealth[-1])
        search = tune_beta(build, wealth, tc, beta0=beta0)
        return {"solution": search.solution, "beta": search.beta, "search": search}
    sol = solve_qp(build(float(beta)))
    return {"solution": sol, "beta": float(beta), "search": None}
