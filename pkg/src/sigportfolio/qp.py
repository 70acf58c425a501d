"""Quadratic programs for log-relative-wealth and mean-variance training.

Every problem has the form

    minimize  1/2 l^T (Q + gamma I + beta P) l - c^T l + beta p^T l
    subject to |l_k| <= b_k  (optional)

``Q`` and ``c`` come either from :func:`assemble_logopt` (pathwise
log-relative wealth) or from :class:`MvStatistics` (mean-variance), ``P`` and
``p`` from :func:`add_tc_penalty`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .signature import FeatureMatrix

__all__ = [
    "QpProblem",
    "QpSolution",
    "MvStatistics",
    "SolverError",
    "LogOptAccumulator",
    "assemble_logopt",
    "monte_carlo_average",
    "assemble_mv",
    "mv_returns",
    "add_tc_penalty",
    "tc_penalty_value",
    "solve_qp",
    "BetaSearch",
    "tune_beta",
]

ROW_CHUNK = 40_000


class SolverError(RuntimeError):
    """The QP could not be solved (singular system or no convergence)."""


def _as_array(features) -> np.ndarray:
    return features.values if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=float)


@dataclass
class QpProblem:
    """Dense convex QP over the coefficient vector ``l``.

    ``bounds`` is ``None`` (unconstrained), a scalar, or one bound per entry.
    """

    Q: np.ndarray
    c: np.ndarray
    gamma: float = 0.0
    bounds: float | np.ndarray | None = None
    beta: float = 0.0
    P_tc: np.ndarray | None = None
    p_tc: np.ndarray | None = None

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        n = self.c.size
        if self.Q.shape != (n, n):
            raise ValueError(f"Q has shape {self.Q.shape}, expected {(n, n)}")
        if not np.allclose(self.Q, self.Q.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(self.Q).max(initial=0))):
            raise ValueError("Q must be symmetric")
        self.Q = 0.5 * (self.Q + self.Q.T)
        if self.gamma < 0 or self.beta < 0:
            raise ValueError("gamma and beta must be >= 0")
        if self.bounds is not None:
            b = np.broadcast_to(np.asarray(self.bounds, dtype=float), (n,)).copy()
            if np.any(b < 0):
                raise ValueError("bounds must be >= 0")
            self.bounds = b

    @property
    def n(self) -> int:
        return self.c.size

    def hessian(self) -> np.ndarray:
        H = self.Q + self.gamma * np.eye(self.n)
        if self.beta and self.P_tc is not None:
            H = H + self.beta * self.P_tc
        return H

    def linear(self) -> np.ndarray:
        if self.beta and self.p_tc is not None:
            return self.c - self.beta * self.p_tc
        return self.c

    def objective(self, l: np.ndarray) -> float:
        l = np.asarray(l, dtype=float)
        return float(0.5 * l @ self.hessian() @ l - self.linear() @ l)

    def replace(self, **changes) -> "QpProblem":
        fields = dict(Q=self.Q, c=self.c, gamma=self.gamma, bounds=self.bounds,
                      beta=self.beta, P_tc=self.P_tc, p_tc=self.p_tc)
        fields.update(changes)
        return QpProblem(**fields)

    def min_eigenvalue(self) -> float:
        return float(linalg.eigvalsh(self.hessian())[0])

    def check_psd(self, rtol: float = 1e-10) -> bool:
        scale = max(1.0, float(np.abs(self.hessian()).max(initial=0.0)))
        return self.min_eigenvalue() >= -rtol * scale

    def to_dict(self) -> dict:
        out = {"Q": self.Q.tolist(), "c": self.c.tolist(), "gamma": self.gamma, "beta": self.beta,
               "bounds": None if self.bounds is None else self.bounds.tolist()}
        if self.P_tc is not None:
            out["P_tc"] = self.P_tc.tolist()
        if self.p_tc is not None:
            out["p_tc"] = self.p_tc.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "QpProblem":
        data = dict(data)
        for key in ("P_tc", "p_tc"):
            if data.get(key) is not None:
                data[key] = np.asarray(data[key], dtype=float)
        return cls(**data)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")


@dataclass
class QpSolution:
    """Minimizer with its objective value and a convergence report."""

    l: np.ndarray
    objective: float
    method: str
    iterations: int
    residual: float
    converged: bool

    def to_dict(self) -> dict:
        return {"l": self.l.tolist(), "objective": self.objective, "method": self.method,
                "iterations": self.iterations, "residual": self.residual,
                "converged": self.converged}


# ---------------------------------------------------------------------------
# log-relative-wealth objective
# ---------------------------------------------------------------------------

def _logopt_rows(features: np.ndarray, mu: np.ndarray, kind: str, t0: int,
                 covariation: np.ndarray | None, mu_floor: float):
    """Per-trajectory factors with ``Q = sum kron(coeff, phi) kron(coeff, phi)^T``.

    Returns ``coeff`` ``(P, K, U)``, ``phi`` ``(P, K, V)`` (views where
    possible) and the vector ``c``.
    """
    if kind not in ("I", "II"):
        raise ValueError("portfolio type must be 'I' or 'II'")
    if features.shape[:-1] != mu.shape[:-1]:
        raise ValueError(f"features {features.shape} and weights {mu.shape} are not aligned")
    T = mu.shape[-2]
    if not 0 <= t0 < T - 1:
        raise ValueError(f"t0 = {t0} leaves no increments on a grid of {T} points")
    U, V = mu.shape[-1], features.shape[-1]
    phi = features[..., t0:T - 1, :].reshape(-1, T - 1 - t0, V)
    m = mu[..., t0:T - 1, :].reshape(phi.shape[:2] + (U,))
    dmu = np.diff(mu[..., t0:, :], axis=-2).reshape(m.shape)
    if kind == "II":
        if np.min(m) <= mu_floor:
            raise ValueError(f"type II needs universe weights above {mu_floor}")
        gdmu = dmu / m
    else:
        gdmu = dmu
    c = np.zeros((U, V))
    for b in range(phi.shape[0]):
        c += gdmu[b].T @ phi[b]
    if covariation is None:
        return gdmu, phi, c.reshape(U * V)
    cov = np.asarray(covariation, dtype=float)[..., t0:T - 1, :, :]
    if cov.shape[-2:] != (U, U):
        raise ValueError("covariation increments must be (..., T-1, U, U)")
    cov = cov.reshape(m.shape + (U,))
    w, vecs = np.linalg.eigh(cov)
    root = vecs * np.sqrt(np.clip(w, 0.0, None))[..., None, :]
    gamma = 1.0 / m if kind == "II" else np.ones_like(m)
    # factor rows for step k: gamma_k * root_k[:, r], r = 0..U-1
    coeff = np.swapaxes(gamma[..., :, None] * root, -1, -2).reshape(phi.shape[0], -1, U)
    return coeff, np.repeat(phi, U, axis=1), c.reshape(U * V)


def _gram(coeff: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """``sum kron(coeff_r, phi_r) kron(coeff_r, phi_r)^T`` over trajectories and rows.

    When every coefficient row sums to zero (type I on the full universe,
    where weight increments sum to zero) the last asset's blocks are minus
    the sum of the others, and only the reduced Gram matrix is formed.
    """
    U, V = coeff.shape[-1], phi.shape[-1]
    scale = float(np.abs(coeff).max(initial=0.0))
    reduced = U > 1 and float(np.abs(coeff.sum(axis=-1)).max(initial=0.0)) <= 1e-13 * max(scale, 1e-300)
    W = U - 1 if reduced else U
    G = np.zeros((W * V, W * V))
    for b in range(coeff.shape[0]):
        for s in range(0, coeff.shape[1], ROW_CHUNK):
            z = (coeff[b, s:s + ROW_CHUNK, :W, None] * phi[b, s:s + ROW_CHUNK, None, :]).reshape(-1, W * V)
            G += z.T @ z
    if not reduced:
        return G
    B = G.reshape(W, V, W, V)
    Q = np.empty((U, V, U, V))
    Q[:W, :, :W, :] = B
    Q[:W, :, W, :] = -B.sum(axis=2)
    Q[W, :, :W, :] = -B.sum(axis=0)
    Q[W, :, W, :] = B.sum(axis=(0, 2))
    return Q.reshape(U * V, U * V)


def assemble_logopt(features, mu: np.ndarray, kind: str = "I", t0: int = 0,
                    covariation: np.ndarray | None = None,
                    mu_floor: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Pathwise ``(Q, c)`` of the log-relative-wealth objective.

    Parameters
    ----------
    features : array_like or FeatureMatrix
        ``(..., T, V)`` features on the grid; leading axes are trajectories
        and their contributions are summed.
    mu : ndarray
        ``(..., T, U)`` universe weights on the same grid.
    kind : {"I", "II"}
        Portfolio type, with the universe portfolio as auxiliary portfolio.
    t0 : int
        Grid index at which investing starts.
    covariation : ndarray, optional
        ``(..., T-1, U, U)`` covariation increments.  The default is the
        realized ``dmu dmu^T``.

    Returns
    -------
    Q, c
        With ``c_(i,nu) = sum_k g_k^i phi_k^nu dmu_k^i`` and
        ``Q_(i,nu),(j,rho) = sum_k g_k^i g_k^j phi_k^nu phi_k^rho d[mu^i, mu^j]_k``,
        ``g = 1`` for type I and ``1 / mu`` for type II.
    """
    coeff, phi, c = _logopt_rows(_as_array(features), np.asarray(mu, dtype=float),
                                 kind, t0, covariation, mu_floor)
    return _gram(coeff, phi), c


class LogOptAccumulator:
    """Running Monte-Carlo sums of ``(Q, c)`` over batches of trajectories.

    Batches must be added in a fixed order for bit-reproducible results.
    """

    def __init__(self, kind: str = "I", t0: int = 0):
        self.kind = kind
        self.t0 = t0
        self.Q: np.ndarray | None = None
        self.c: np.ndarray | None = None
        self.count = 0

    def add_sums(self, Q: np.ndarray, c: np.ndarray, count: int) -> None:
        if self.Q is None:
            self.Q, self.c = Q.copy(), c.copy()
        else:
            self.Q += Q
            self.c += c
        self.count += count

    def add(self, features: np.ndarray, mu: np.ndarray) -> None:
        """Add a batch ``(B, T, V)`` / ``(B, T, U)`` of trajectories."""
        features = np.asarray(features, dtype=float)
        Q, c = assemble_logopt(features, mu, self.kind, self.t0)
        self.add_sums(Q, c, features.shape[0] if features.ndim == 3 else 1)

    def mean(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.count:
            raise ValueError("no trajectories accumulated")
        return self.Q / self.count, self.c / self.count


def monte_carlo_average(pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    """Arithmetic means of per-trajectory ``(Q, c)`` pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one trajectory")
    Q = sum(np.asarray(q, dtype=float) for q, _ in pairs) / len(pairs)
    c = sum(np.asarray(v, dtype=float) for _, v in pairs) / len(pairs)
    return Q, c


# ---------------------------------------------------------------------------
# mean-variance objective
# ---------------------------------------------------------------------------

@dataclass
class MvStatistics:
    """Time-average estimates for mean-variance training.

    The strategy return is ``R^tau + l^T Y``; minimizing
    ``Var(R) - lam E(R)`` over ``l`` is ``l^T var l - l^T (lam mean - sigma)``
    up to a constant.
    """

    var: np.ndarray
    mean: np.ndarray
    sigma: np.ndarray
    lam: float
    mode: str = "wealth"

    def __post_init__(self):
        self.var = np.asarray(self.var, dtype=float)
        if not np.allclose(self.var, self.var.T, rtol=1e-10, atol=1e-14):
            raise ValueError("variance estimate must be symmetric")

    def to_problem(self, gamma: float = 1e-6, bounds=None) -> QpProblem:
        return QpProblem(2.0 * self.var, self.lam * self.mean - self.sigma, gamma=gamma, bounds=bounds)

    def objective(self, l: np.ndarray) -> float:
        """``l^T var l - l^T (lam mean - sigma)``."""
        l = np.asarray(l, dtype=float)
        return float(l @ self.var @ l - l @ (self.lam * self.mean - self.sigma))


def mv_returns(prices: np.ndarray, tau: np.ndarray, delta: int = 1, mode: str = "wealth",
               t0: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Per-asset returns ``r`` over ``[t, t + delta]`` and the ``tau``-portfolio return.

    ``prices`` are universe prices ``(T, U)``.  In ``"relative"`` mode returns
    are measured in units of the universe portfolio, i.e. through the
    universe weights.
    """
    if mode not in ("wealth", "relative"):
        raise ValueError("mode must be 'wealth' or 'relative'")
    if delta < 1:
        raise ValueError("holding span must be >= 1 grid step")
    x = np.asarray(prices, dtype=float)
    if mode == "relative":
        x = x / x.sum(axis=1, keepdims=True)
    r = x[t0 + delta:] / x[t0:-delta] - 1.0
    tau = np.asarray(tau, dtype=float)[t0:x.shape[0] - delta]
    return r, np.sum(tau * r, axis=1)


def assemble_mv(features, prices: np.ndarray, tau: np.ndarray, lam: float, kind: str = "I",
                delta: int = 1, mode: str = "wealth", t0: int = 0) -> MvStatistics:
    """Estimate the mean-variance statistics by time averages.

    Samples are the overlapping holding periods ``[t, t + delta]`` for
    ``t = t0, ..., T - 1 - delta``.  ``Y_(i,nu) = tau^i phi^nu (r^i - R^tau)``
    for type I and ``phi^nu (r^i - R^tau)`` for type II; variances use the
    ``N - 1`` divisor.

    Raises
    ------
    ValueError
        If fewer than two samples are available.
    """
    phi = _as_array(features)
    prices = np.asarray(prices, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if phi.shape[0] != prices.shape[0] or tau.shape != prices.shape:
        raise ValueError("features, prices and tau must share the time axis")
    r, R = mv_returns(prices, tau, delta, mode, t0)
    N = r.shape[0]
    if N < 2:
        raise ValueError(f"need at least 2 holding periods, got {N}")
    ex = r - R[:, None]
    if kind == "I":
        ex = ex * tau[t0:t0 + N]
    elif kind != "II":
        raise ValueError("portfolio type must be 'I' or 'II'")
    Y = (ex[:, :, None] * phi[t0:t0 + N, None, :]).reshape(N, -1)
    Yc = Y - Y.mean(axis=0)
    var = Yc.T @ Yc / (N - 1)
    sigma = 2.0 * Yc.T @ (R - R.mean()) / (N - 1)
    return MvStatistics(0.5 * (var + var.T), Y.mean(axis=0), sigma, lam, mode)


# ---------------------------------------------------------------------------
# transaction-cost penalty
# ---------------------------------------------------------------------------

def _relative_weight_maps(phi: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """``M_t`` with ``pi_t / mu_t - 1 = M_t l`` for type I with ``tau = mu``."""
    T, U = mu.shape
    A = np.eye(U)[None] - mu[:, None, :]          # (T, U, U): I - 1 mu^T
    return (A[:, :, :, None] * phi[:, None, None, :]).reshape(T, U, -1)


def add_tc_penalty(problem: QpProblem, beta: float, features, mu: np.ndarray,
                   kind: str = "I", tau: str = "universe") -> QpProblem:
    """Add ``(beta / T) sum_t sum_i (pi_{t+1}^i / mu_{t+1}^i - pi_t^i / mu_t^i)^2``.

    Only type I with the universe portfolio as auxiliary portfolio is
    supported; there ``pi / mu`` is affine in ``l`` and the penalty is the
    quadratic ``(beta / 2) l^T P l`` with ``P = (2 / T) sum_t D_t^T D_t``.

    Raises
    ------
    ValueError
        For any other type / auxiliary-portfolio combination.
    """
    if kind != "I" or tau != "universe":
        raise ValueError("transaction-cost penalty needs a type-I portfolio on the universe portfolio")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    phi = _as_array(features)
    mu = np.asarray(mu, dtype=float)
    if phi.shape[0] != mu.shape[0] or mu.shape[0] < 2:
        raise ValueError("features and weights must share a time axis of length >= 2")
    if phi.shape[1] * mu.shape[1] != problem.n:
        raise ValueError("penalty dimension does not match the problem")
    M = _relative_weight_maps(phi, mu)
    D = np.diff(M, axis=0).reshape(-1, problem.n)
    T = mu.shape[0] - 1
    P = 2.0 / T * (D.T @ D)
    return problem.replace(beta=float(beta), P_tc=0.5 * (P + P.T), p_tc=np.zeros(problem.n))


def tc_penalty_value(l: np.ndarray, features, mu: np.ndarray) -> float:
    """Direct evaluation of ``(1 / T) sum_t sum_i (pi_{t+1}/mu_{t+1} - pi_t/mu_t)^2``."""
    from .portfolio import controlling_functions, weights_type1

    mu = np.asarray(mu, dtype=float)
    f = controlling_functions(l, features, mu.shape[1])
    ratio = weights_type1(mu, f) / mu
    return float(np.sum(np.diff(ratio, axis=0) ** 2) / (mu.shape[0] - 1))


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

def _projected_gradient_norm(l, g, lo, hi) -> float:
    return float(np.linalg.norm(l - np.clip(l - g, lo, hi)))


def _polish(H, c, l, lo, hi, tol, max_iter: int = 200):
    """Projected Newton refinement with epsilon-active sets.

    Free variables take a Newton step on their reduced system, variables at
    (or within epsilon of) a bound with an outward gradient take a gradient
    step; the step is projected and shortened until the objective drops.
    """
    f = 0.5 * l @ H @ l - c @ l
    for _ in range(max_iter):
        g = H @ l - c
        pg = _projected_gradient_norm(l, g, lo, hi)
        if pg <= tol:
            break
        eps = min(1e-6, pg)
        active = ((l <= lo + eps) & (g > 0)) | ((l >= hi - eps) & (g < 0))
        free = ~active
        d = -g.copy()
        if free.any():
            try:
                d[free] = -linalg.solve(H[np.ix_(free, free)], g[free], assume_a="pos")
            except (linalg.LinAlgError, ValueError):
                d[free] = -np.linalg.lstsq(H[np.ix_(free, free)], g[free], rcond=None)[0]
        lam = 1.0
        while lam > 1e-20:
            trial = np.clip(l + lam * d, lo, hi)
            ft = 0.5 * trial @ H @ trial - c @ trial
            if ft <= f + 1e-4 * g @ (trial - l):
                break
            # near the optimum f stalls in floating point; the residual still tells
            if _projected_gradient_norm(trial, H @ trial - c, lo, hi) < 0.5 * pg:
                break
            lam *= 0.5
        else:
            break
        if ft >= f and np.array_equal(trial, l):
            break
        l, f = trial, ft
    return l


def _spg(H, c, lo, hi, l0, tol, max_iter, memory: int = 10):
    """Nonmonotone spectral projected gradient (Barzilai-Borwein steps)."""
    l = np.clip(l0, lo, hi)
    g = H @ l - c
    f = 0.5 * l @ (g - c)
    recent = [f]
    step = 1.0 / max(np.abs(H).sum(axis=1).max(), 1e-300)
    for it in range(1, max_iter + 1):
        if _projected_gradient_norm(l, g, lo, hi) <= tol:
            return l, it - 1, True
        d = np.clip(l - step * g, lo, hi) - l
        Hd = H @ d
        gd = g @ d
        dHd = d @ Hd
        lam, f_ref = 1.0, max(recent)
        while f + lam * gd + 0.5 * lam * lam * dHd > f_ref + 1e-4 * lam * gd and lam > 1e-12:
            lam *= 0.5
        s = lam * d
        y = lam * Hd
        l = np.clip(l + s, lo, hi)
        g = g + y
        f = f + lam * gd + 0.5 * lam * lam * dHd
        recent = (recent + [f])[-memory:]
        sy = s @ y
        step = float(s @ s / sy) if sy > 0 else step * 2.0
    return l, max_iter, _projected_gradient_norm(l, g, lo, hi) <= tol


def solve_qp(problem: QpProblem, tol: float = 1e-9, max_iter: int = 100_000,
             raise_on_failure: bool = False, l0: np.ndarray | None = None) -> QpSolution:
    """Minimize the problem's objective.

    Without bounds the stationarity system ``H l = c`` is solved by Cholesky
    factorization.  With bounds the unconstrained minimizer is returned when
    it is feasible; otherwise projected gradient with Barzilai-Borwein steps
    runs until the projected-gradient norm is at most ``tol * (1 + |c|)``,
    followed by a projected Newton polish.

    Raises
    ------
    SolverError
        If an unbounded problem is singular, or (with ``raise_on_failure``)
        if the projected gradient does not converge.
    """
    H = problem.hessian()
    c = problem.linear()
    n = problem.n
    unconstrained = None
    try:
        unconstrained = linalg.cho_solve(linalg.cho_factor(H), c)
    except linalg.LinAlgError:
        if problem.bounds is None:
            raise SolverError("singular unregularized system; use gamma > 0") from None
    if problem.bounds is None:
        res = float(np.linalg.norm(H @ unconstrained - c))
        return QpSolution(unconstrained, problem.objective(unconstrained), "cholesky", 0, res, True)

    hi = problem.bounds
    lo = -hi
    scaled_tol = tol * (1.0 + float(np.linalg.norm(c)))
    if unconstrained is not None and np.all(np.abs(unconstrained) <= hi):
        res = _projected_gradient_norm(unconstrained, H @ unconstrained - c, lo, hi)
        return QpSolution(unconstrained, problem.objective(unconstrained), "cholesky", 0, res, True)
    if not np.any(hi):
        l = np.zeros(n)
        return QpSolution(l, 0.0, "fixed", 0, 0.0, True)
    start = np.zeros(n) if l0 is None else np.asarray(l0, dtype=float)
    if unconstrained is not None and l0 is None:
        start = np.clip(unconstrained, lo, hi)
    l, iters, converged = _spg(H, c, lo, hi, start, scaled_tol, max_iter)
    # Newton polish to well below the stopping tolerance
    l = _polish(H, c, np.clip(l, lo, hi), lo, hi, 1e-6 * scaled_tol)
    res = _projected_gradient_norm(l, H @ l - c, lo, hi)
    converged = res <= scaled_tol
    if not converged and raise_on_failure:
        raise SolverError(f"projected gradient did not converge: residual {res:.3e} after {iters} iterations")
    return QpSolution(l, problem.objective(l), "projected-gradient", iters, res, converged)


# ---------------------------------------------------------------------------
# beta search
# ---------------------------------------------------------------------------

@dataclass
class BetaSearch:
    beta: float
    solution: QpSolution
    wealth: float
    evaluations: list[tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"beta": self.beta, "wealth": self.wealth, "solution": self.solution.to_dict(),
                "evaluations": [[b, w] for b, w in self.evaluations]}


def tune_beta(build: Callable[[float], QpProblem], wealth: Callable[[np.ndarray], float],
              tc_level: float, beta0: float = 0.5, floor: float = 1e-8, ceiling: float = 1e4,
              max_evals: int = 40, ruin_level: float = 1e-4, escape_steps: int = 200) -> BetaSearch:
    """Choose the penalty weight that maximizes in-sample wealth under costs.

    ``build(beta)`` returns the penalized problem and ``wealth(l)`` the
    in-sample terminal wealth of the resulting portfolio under the true
    transaction costs.  A starting value ``beta0`` is increased by 0.5 while
    it leads to (near) ruin, for at most ``escape_steps`` steps.  A
    golden-section search over ``log10 beta`` on ``[floor, ceiling]`` then
    starts from that value and spends at most ``max_evals`` further
    evaluations; ties move towards the larger ``beta``, so a plateau of
    ruined strategies is left in the direction of less trading.  The best of
    all evaluated values is returned.  With ``tc_level == 0`` the penalty can
    only hurt and ``floor`` is returned directly.

    Raises
    ------
    SolverError
        If every evaluated ``beta`` ends in ruin.
    """
    cache: dict[float, tuple[float, QpSolution]] = {}

    def evaluate(beta: float) -> float:
        beta = float(min(max(beta, floor), ceiling))
        if beta not in cache:
            sol = solve_qp(build(beta))
            w = float(wealth(sol.l))
            cache[beta] = (w if np.isfinite(w) else 0.0, sol)
        return cache[beta][0]

    if tc_level == 0:
        evaluate(floor)
    else:
        b0 = min(max(beta0, floor), ceiling)
        for _ in range(escape_steps):
            if evaluate(b0) >= ruin_level or b0 >= ceiling:
                break
            b0 = min(b0 + 0.5, ceiling)
        evaluate(floor)
        lo, hi = math.log10(floor), math.log10(ceiling)
        x, fx = math.log10(b0), evaluate(b0)
        step = (3.0 - math.sqrt(5.0)) / 2.0
        for _ in range(max_evals):
            if hi - lo <= 1e-6:
                break
            u = x - step * (x - lo) if x - lo > hi - x else x + step * (hi - x)
            fu = evaluate(10**u)
            if fu > fx or (fu == fx and u > x):
                lo, hi = (lo, x) if u < x else (x, hi)
                x, fx = u, fu
            else:
                lo, hi = (u, hi) if u < x else (lo, u)
    evaluations = sorted((b, w) for b, (w, _) in cache.items())
    best = max(cache, key=lambda b: (cache[b][0], -b))
    w, sol = cache[best]
    if w <= 0.0:
        raise SolverError("every penalty weight tried leads to ruin")
    return BetaSearch(best, sol, w, evaluations)
