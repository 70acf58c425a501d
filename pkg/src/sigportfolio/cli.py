"""Command-line front end: simulate, features, train, cv, backtest.

Every command reads a JSON config (see :mod:`sigportfolio.config`), writes
its results below ``--out`` and is a pure function of the config and its
input files.

Exit codes: 0 ok, 2 config error, 3 data error, 4 solver or ruin error.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .backtest import RuinError, Window, run_backtest, split_train_cv_test
from .config import ConfigError, load_config, validate_config
from .market import DataError, MarketPanel, load_prices_csv, validate_universe, write_panel_csv, write_prices_csv
from .portfolio import FeatureSpec, PortfolioSpec, load_model, portfolio_weights, save_model
from .qp import LogOptAccumulator, QpProblem, SolverError, solve_qp
from .signature import FeatureMatrix
from .simulation import SimConfig, SimulationError, reference_go_weights, simulate, simulate_log_prices
from .training import (
    McSettings,
    monte_carlo_problem,
    path_features,
    train_window,
    window_data,
    window_weights,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4
TEST_START = 1_000_000
SIM_KEYS = ("model", "d", "steps", "horizon", "s0", "drift", "sigma", "alpha", "sig_level",
            "sig_coeffs", "strong_solution", "max_attempts")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _section(cfg: dict, name: str, required: bool = False) -> dict:
    if required and name not in cfg:
        raise ConfigError(f"config needs a {name!r} section for this command")
    return cfg.get(name, {})


def _sim_config(cfg: dict) -> SimConfig:
    sim = _section(cfg, "simulation", required=True)
    try:
        return SimConfig(seed=cfg.get("seed", 0), **{k: v for k, v in sim.items() if k in SIM_KEYS})
    except ValueError as err:
        raise ConfigError(f"simulation: {err}") from None


def _portfolio(cfg: dict, default_horizon: float) -> PortfolioSpec:
    port = _section(cfg, "portfolio")
    feats = dict(_section(cfg, "features"))
    feats.setdefault("horizon", default_horizon)
    try:
        return PortfolioSpec(kind=port.get("kind", "I"), universe=tuple(port.get("universe", ())),
                             tau=port.get("tau", "universe"), features=FeatureSpec(**feats),
                             tau_bound=port.get("tau_bound", 1e6))
    except ValueError as err:
        raise ConfigError(str(err)) from None


def _with_universe(spec: PortfolioSpec, d: int) -> PortfolioSpec:
    spec.universe = validate_universe(spec.universe or None, d)
    return spec


def _settings(cfg: dict) -> McSettings:
    tr = _section(cfg, "training")
    return McSettings(threads=cfg.get("threads", 1), sim_batch=tr.get("sim_batch", 256),
                      feature_batch=tr.get("feature_batch", 16))


def _load_panels(directory: str) -> list[tuple[str, MarketPanel]]:
    files = sorted(Path(directory).glob("*.csv"))
    if not files:
        raise DataError(f"no CSV panels in {directory}")
    return [(f.stem, load_prices_csv(f)) for f in files]


def _windows(cfg: dict, panel: MarketPanel):
    w = _section(cfg, "data").get("windows")
    if w is None:
        return None
    return split_train_cv_test(panel, w["T_ins"], w["T_cv"], w["T_test"], w.get("t0", 100), w.get("offset", 0))


def _data_horizon(cfg: dict) -> float:
    w = _section(cfg, "data").get("windows")
    return float(w.get("t0", 100) + w["T_ins"]) if w else 1.0


def _gamma(tr: dict, Q: np.ndarray, gamma: float | None = None) -> float:
    g = tr.get("gamma", 0.0) if gamma is None else gamma
    if tr.get("gamma_mode", "absolute") == "relative":
        g *= float(np.trace(Q)) / Q.shape[0]
    return g


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: dict, out: Path) -> dict:
    sim = _sim_config(cfg)
    section = cfg["simulation"]
    n_paths = section.get("n_paths")
    if not n_paths:
        raise ConfigError("simulation.n_paths is required")
    start = section.get("start", 0)
    info: dict = {}
    panels = simulate(sim, n_paths, start=start, threads=cfg.get("threads", 1),
                      batch_size=section.get("batch_size", 64), info=info)
    target = out / "paths"
    target.mkdir(parents=True, exist_ok=True)
    files = []
    for k, panel in enumerate(panels):
        name = f"path_{start + k:06d}.csv"
        write_prices_csv(target / name, panel)
        files.append(name)
    meta = dict(cfg)
    meta["provenance"] = {"command": "simulate", "regenerated": info["regenerated"], "files": files}
    _write_json(out / "metadata.json", meta)
    return {"paths": len(files), "regenerated": info["regenerated"]}


def _feature_sources(cfg: dict):
    """Yield ``(name, panel, times)``; simulated and stored paths use their time grid."""
    data = _section(cfg, "data")
    if "prices" in data:
        panel = load_prices_csv(data["prices"])
        yield Path(data["prices"]).stem, panel, np.arange(len(panel), dtype=float)
    elif "paths_dir" in data:
        for name, panel in _load_panels(data["paths_dir"]):
            yield name, panel, panel.times
    else:
        sim = _sim_config(cfg)
        n = cfg["simulation"].get("n_paths")
        if not n:
            raise ConfigError("simulation.n_paths is required")
        start = cfg["simulation"].get("start", 0)
        for k, panel in enumerate(simulate(sim, n, start=start, threads=cfg.get("threads", 1))):
            yield f"path_{start + k:06d}", panel, panel.times


def cmd_features(cfg: dict, out: Path) -> dict:
    if cfg.get("data"):
        horizon = _data_horizon(cfg)
    else:
        horizon = _section(cfg, "simulation", required=True).get("horizon", 1.0)
    spec = _portfolio(cfg, horizon)
    target = out / "features"
    target.mkdir(parents=True, exist_ok=True)
    count = 0
    for name, panel, times in _feature_sources(cfg):
        _with_universe(spec, panel.d)
        S = panel.prices[:, list(spec.universe)]
        mu = S / S.sum(axis=1, keepdims=True)
        choice = spec.features.underlying
        x = {"universe_weights": mu, "ranked_weights": -np.sort(-mu, axis=1),
             "prices": S, "log_prices": np.log(S)}[choice]
        fm: FeatureMatrix = spec.features.compute(x, times)
        fm.to_csv(target / f"{name}.csv", times)
        count += 1
    return {"files": count}


def _mc_from_dir(cfg: dict, spec: PortfolioSpec, directory: str, t0: int):
    panels = _load_panels(directory)
    d = panels[0][1].d
    if any(p.d != d for _, p in panels):
        raise DataError("stored panels disagree on the number of assets")
    _with_universe(spec, d)
    threads = cfg.get("threads", 1)

    def work(item):
        _, panel = item
        mu, phi = path_features(spec.features, np.log(panel.prices)[None], panel.times, spec.universe)
        acc = LogOptAccumulator(spec.kind, t0)
        acc.add(phi, mu)
        return acc.Q, acc.c

    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(work, panels))
    total = LogOptAccumulator(spec.kind, t0)
    for Q, c in parts:
        total.add_sums(Q, c, 1)
    Q, c = total.mean()
    return Q, c, {"paths": total.count, "d": d}


def _check_solution(sol) -> None:
    if not sol.converged:
        raise SolverError(f"solver did not converge (residual {sol.residual:.3e})")


def cmd_train(cfg: dict, out: Path) -> dict:
    tr = _section(cfg, "training")
    data = _section(cfg, "data")
    objective = tr.get("objective", "logopt")
    bounds = tr.get("bounds")
    out.mkdir(parents=True, exist_ok=True)
    report: dict = {"objective": objective}
    models = []

    if "prices" in data:
        panel = load_prices_csv(data["prices"])
        spec = _with_universe(_portfolio(cfg, _data_horizon(cfg)), panel.d)
        splits = _windows(cfg, panel)
        lead = tr.get("t0", 0)
        window = splits.train if splits else Window(0, lead, len(panel))
        wd = window_data(spec, panel, window)
        lambdas = tr.get("lambdas", [1.0]) if objective == "mv" else [None]
        for lam in lambdas:
            gamma = tr.get("gamma", 1e-6 if objective == "mv" else 0.0)
            res = train_window(spec, wd, objective, gamma=gamma, bounds=bounds,
                               lam=1.0 if lam is None else lam, delta=tr.get("delta", 1),
                               mode=tr.get("mode", "relative"), tc=tr.get("tc", 0.0),
                               beta=tr.get("beta"), beta0=tr.get("beta0", 0.5))
            _check_solution(res["solution"])
            name = "model.json" if lam is None else f"model_lambda_{lam:g}.json"
            entry = {"file": name, "lambda": lam, "beta": res["beta"], "gamma": gamma,
                     "solution": {k: v for k, v in res["solution"].to_dict().items() if k != "l"}}
            if res["search"] is not None:
                entry["beta_search"] = res["search"].evaluations
            models.append((name, res["solution"].l, entry))
        report["window"] = window.to_dict()
        market_dim = panel.d
    else:
        if objective != "logopt":
            raise ConfigError("mean-variance training needs data.prices")
        t0 = tr.get("t0", 0)
        if "paths_dir" in data:
            spec = _portfolio(cfg, _section(cfg, "features").get("horizon", 1.0))
            Q, c, info = _mc_from_dir(cfg, spec, data["paths_dir"], t0)
            market_dim = info.pop("d")
        else:
            sim = _sim_config(cfg)
            spec = _with_universe(_portfolio(cfg, sim.horizon), sim.d)
            n_paths = tr.get("n_paths", cfg["simulation"].get("n_paths"))
            if not n_paths:
                raise ConfigError("training.n_paths (or simulation.n_paths) is required")
            Q, c, info = monte_carlo_problem(sim, spec, n_paths, tr.get("start", 0), t0, _settings(cfg))
            market_dim = sim.d
        gamma = _gamma(tr, Q)
        sol = solve_qp(QpProblem(Q, c, gamma=gamma, bounds=bounds))
        _check_solution(sol)
        entry = {"file": "model.json", "gamma": gamma,
                 "solution": {k: v for k, v in sol.to_dict().items() if k != "l"}}
        models.append(("model.json", sol.l, entry))
        report["monte_carlo"] = info

    for name, l, entry in models:
        spec.coefficients = l
        save_model(out / name, spec, {"market": {"d": market_dim}, "training": {"config": cfg, **entry}})
    report["models"] = [entry for _, _, entry in models]
    _write_json(out / "train_report.json", report)
    return {"models": [name for name, _, _ in models]}


def cmd_cv(cfg: dict, out: Path) -> dict:
    tr = _section(cfg, "training", required=True)
    data = _section(cfg, "data", required=True)
    grid = tr.get("gamma_grid")
    if "prices" not in data or not data.get("windows") or grid is None:
        raise ConfigError("cv needs data.prices, data.windows and training.gamma_grid")
    panel = load_prices_csv(data["prices"])
    spec = _with_universe(_portfolio(cfg, _data_horizon(cfg)), panel.d)
    splits = _windows(cfg, panel)
    objective = tr.get("objective", "logopt")
    lam = tr.get("lambdas", [1.0])[0]
    tc = tr.get("tc", 0.0)
    points = grid.get("points", 100)
    if grid.get("spacing", "linear") == "log":
        if grid["low"] <= 0:
            raise ConfigError("log-spaced gamma grid needs low > 0")
        gammas = np.geomspace(grid["low"], grid["high"], points)
    else:
        gammas = np.linspace(grid["low"], grid["high"], points)
    train = window_data(spec, panel, splits.train)
    cv = window_data(spec, panel, splits.cv)
    kwargs = dict(objective=objective, bounds=tr.get("bounds"), lam=lam, delta=tr.get("delta", 1),
                  mode=tr.get("mode", "relative"), tc=tc, beta=tr.get("beta"), beta0=tr.get("beta0", 0.5))
    rows = []
    for g in gammas:
        res = train_window(spec, train, gamma=float(g), **kwargs)
        rep = run_backtest(window_weights(spec, cv, res["solution"].l), cv.prices, tc)
        rows.append((float(g), rep.log_relative, rep.log_wealth, res["beta"]))
    scores = np.array([r[1] for r in rows])
    best = int(np.argmax(np.where(np.isfinite(scores), scores, -np.inf)))
    if not np.isfinite(scores[best]):
        raise RuinError("every gamma on the grid ruins the strategy in cross-validation")
    gamma = rows[best][0]
    retrain = window_data(spec, panel, splits.retrain)
    res = train_window(spec, retrain, gamma=gamma, **kwargs)
    _check_solution(res["solution"])
    out.mkdir(parents=True, exist_ok=True)
    spec.coefficients = res["solution"].l
    save_model(out / "model.json", spec, {"market": {"d": panel.d}, "training": {
        "config": cfg, "gamma": gamma, "beta": res["beta"], "window": splits.retrain.to_dict(),
        "solution": {k: v for k, v in res["solution"].to_dict().items() if k != "l"}}})
    table = np.array([[r[1], r[2]] for r in rows])
    write_panel_csv(out / "cv_table.csv", [repr(r[0]) for r in rows],
                    ["cv_log_relative_wealth", "cv_log_wealth"], table, first_header="gamma")
    _write_json(out / "cv_report.json", {
        "best_gamma": gamma, "best_cv_log_relative_wealth": float(scores[best]),
        "windows": {k: getattr(splits, k).to_dict() for k in ("train", "cv", "test", "retrain")}})
    return {"best_gamma": gamma}


def _check_model_fits(spec: PortfolioSpec, meta: dict, d: int) -> None:
    trained = meta.get("market", {}).get("d")
    if trained is not None and trained != d:
        raise DataError(f"model was trained on {trained} assets, data has {d}")
    if not spec.universe or max(spec.universe) >= d:
        raise DataError(f"model universe {spec.universe} does not fit data with {d} assets")


def _panel_results(spec: PortfolioSpec, panel: MarketPanel, times: np.ndarray, tc_levels, lead: int = 0):
    mu, phi = path_features(spec.features, np.log(panel.prices)[None], times, spec.universe)
    pi = portfolio_weights(spec.kind, mu[0], spec.coefficients, phi[0])
    prices = panel.prices[lead:][:, list(spec.universe)]
    return [run_backtest(pi[lead:], prices, c) for c in tc_levels]


def cmd_backtest(cfg: dict, out: Path, model_path: str | None = None) -> dict:
    bt = _section(cfg, "backtest")
    model_path = model_path or bt.get("model")
    if not model_path:
        raise ConfigError("backtest needs a model (backtest.model or --model)")
    try:
        spec, meta = load_model(model_path)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as err:
        raise DataError(f"cannot load model {model_path}: {err}") from None
    tc_levels = bt.get("tc_levels", [0.0])
    data = _section(cfg, "data")
    out.mkdir(parents=True, exist_ok=True)
    names, reports, go = [], [], []

    if "prices" in data:
        panel = load_prices_csv(data["prices"])
        _check_model_fits(spec, meta, panel.d)
        splits = _windows(cfg, panel)
        window = splits.test if splits else Window(0, 0, len(panel))
        wd = window_data(spec, panel, window)
        pi = window_weights(spec, wd)
        reports.append([run_backtest(pi, wd.prices, c) for c in tc_levels])
        names.append(Path(data["prices"]).stem)
        if bt.get("curves", True):
            for c, rep in zip(tc_levels, reports[0]):
                rep.to_csv(out / f"curve_tc_{c:g}.csv")
    elif "paths_dir" in data:
        panels = _load_panels(data["paths_dir"])
        for _, p in panels:
            _check_model_fits(spec, meta, p.d)
        with ThreadPoolExecutor(max_workers=cfg.get("threads", 1)) as pool:
            reports = list(pool.map(lambda item: _panel_results(spec, item[1], item[1].times, tc_levels), panels))
        names = [n for n, _ in panels]
    else:
        sim = _sim_config(cfg)
        _check_model_fits(spec, meta, sim.d)
        n_paths = bt.get("n_paths", cfg["simulation"].get("n_paths"))
        if not n_paths:
            raise ConfigError("backtest.n_paths (or simulation.n_paths) is required")
        start = bt.get("start", TEST_START)
        times = np.linspace(0.0, sim.horizon, sim.steps + 1)
        ids = list(range(start, start + n_paths))
        batches = [ids[i:i + 64] for i in range(0, n_paths, 64)]
        want_go = bt.get("growth_optimal", True) and len(spec.universe) == sim.d

        def work(batch):
            logs, _ = simulate_log_prices(sim, batch)
            res, g = [], []
            for lp in logs:
                panel = MarketPanel(times, np.exp(lp), tuple(f"S{i + 1}" for i in range(sim.d)))
                res.append(_panel_results(spec, panel, times, tc_levels))
                if want_go:
                    go_pi = reference_go_weights(sim, lp)
                    g.append(run_backtest(go_pi, panel, 0.0).log_relative)
            return res, g

        with ThreadPoolExecutor(max_workers=cfg.get("threads", 1)) as pool:
            for res, g in pool.map(work, batches):
                reports.extend(res)
                go.extend(g)
        names = [f"path_{i:06d}" for i in ids]

    log_rel = np.array([[r.log_relative for r in row] for row in reports])
    log_w = np.array([[r.log_wealth for r in row] for row in reports])
    write_panel_csv(out / "results.csv", names,
                    [f"log_relative_wealth_tc_{c:g}" for c in tc_levels] + [f"log_wealth_tc_{c:g}" for c in tc_levels],
                    np.hstack([log_rel, log_w]), first_header="path")

    def mean(col):
        m = float(np.mean(col))
        return m if np.isfinite(m) else "-inf"

    summary = {
        "tc_levels": tc_levels,
        "paths": len(names),
        "mean_log_relative_wealth": [mean(log_rel[:, k]) for k in range(len(tc_levels))],
        "mean_log_wealth": [mean(log_w[:, k]) for k in range(len(tc_levels))],
        "ruined": [int(sum(row[k].ruined for row in reports)) for k in range(len(tc_levels))],
        "mean_turnover": [float(np.mean([row[k].turnover.mean() for row in reports])) for k in range(len(tc_levels))],
        "model": str(model_path),
    }
    if go:
        summary["growth_optimal_mean_log_relative_wealth"] = float(np.mean(go))
    write_panel_csv(out / "table.csv", ["mean_log_relative_wealth", "mean_log_wealth"],
                    [f"tc_{c:g}" for c in tc_levels],
                    np.array([[float(np.mean(log_rel[:, k])) for k in range(len(tc_levels))],
                              [float(np.mean(log_w[:, k])) for k in range(len(tc_levels))]]),
                    first_header="metric")
    _write_json(out / "backtest_report.json", summary)
    return {"paths": len(names)}


COMMANDS = {
    "simulate": cmd_simulate,
    "features": cmd_features,
    "train": cmd_train,
    "cv": cmd_cv,
    "backtest": cmd_backtest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sigportfolio", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="worker threads (default 1)")
        p.add_argument("--out", default=".", help="output directory")
        if name == "backtest":
            p.add_argument("--model", help="model JSON (overrides backtest.model)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg["seed"] = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            cfg["threads"] = args.threads
        validate_config(cfg)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "backtest":
            result = cmd_backtest(cfg, out, args.model)
        else:
            result = COMMANDS[args.command](cfg, out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, SimulationError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (SolverError, RuinError) as err:
        print(f"solver error: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as err:
        # remaining value errors stem from inconsistent settings
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
