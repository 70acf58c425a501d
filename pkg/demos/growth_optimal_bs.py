"""Learning the growth-optimal portfolio in a Black-Scholes market.

A linear signature portfolio is fitted by Monte-Carlo on simulated paths
and compared, on fresh paths, with the theoretical growth-optimal
portfolio of the same market.  The sizes here are small enough to finish in
about a minute; ``configs/mc_bs.json`` holds the full-scale setting.
"""

import numpy as np

from sigportfolio.portfolio import FeatureSpec, PortfolioSpec
from sigportfolio.qp import QpProblem, solve_qp
from sigportfolio.simulation import SimConfig
from sigportfolio.training import evaluate_monte_carlo, monte_carlo_problem

sim = SimConfig("bs", d=3, steps=250, seed=1, drift=[0.5, 1.0, 1.5],
                sigma=[[0.5, 0, 0], [0.1, 0.5, 0], [0.1, 0.1, 0.5]])
spec = PortfolioSpec("I", (0, 1, 2), "universe", FeatureSpec("signature", level=2, horizon=sim.horizon))

Q, c, info = monte_carlo_problem(sim, spec, n_paths=2000)
print(f"objective averaged over {info['paths']} paths, {c.size} coefficients")

gamma = 1e-8 * np.trace(Q) / Q.shape[0]
spec.coefficients = solve_qp(QpProblem(Q, c, gamma=gamma, bounds=1e4)).l

result = evaluate_monte_carlo(sim, spec, n_paths=1000, start=10**6)
model, go = result["model"].mean(), result["growth_optimal"].mean()
print(f"mean log-relative wealth: trained {model:.4f}, growth-optimal {go:.4f}")
print(f"relative gap: {100 * (model - go) / abs(go):+.2f}%")
