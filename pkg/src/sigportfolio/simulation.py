"""Monte-Carlo market simulators and their growth-optimal reference portfolios.

Three models are supported, all simulated in log-price coordinates so prices
stay positive:

* ``"bs"``: correlated Black-Scholes, ``dS = diag(S)(a dt + Sigma dB)``,
  simulated exactly.
* ``"volstab"``: volatility-stabilised market,
  ``dS^i/S^i = (1+alpha)/(2 mu^i) dt + mu^{-1/2} dB^i``, Euler-Maruyama on
  ``log S``.
* ``"sigmarket"``: drift linear in the running signature of the
  time-augmented market weights, Euler-Maruyama on ``log S``.

Every path ``m`` draws its noise from ``default_rng([seed, m, attempt])``, so a
path is reproducible on its own, whatever the batching or thread count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from math import factorial
from typing import Sequence

import numpy as np

from .market import MarketPanel
from .signature import signature_matrix
from .tensor import enumerate_words, n_words

__all__ = [
    "SimConfig",
    "SimulationError",
    "SingularCovarianceError",
    "simulate",
    "simulate_log_prices",
    "growth_optimal_weights",
    "reference_go_stream",
    "reference_go_weights",
    "strong_solution_mask",
]

MODELS = ("bs", "volstab", "sigmarket")


class SimulationError(RuntimeError):
    """A path could not be simulated without numerical blow-up."""


class SingularCovarianceError(np.linalg.LinAlgError):
    """The instantaneous covariance ``Sigma Sigma^T`` is (numerically) singular."""


@dataclass
class SimConfig:
    """Parameters of one simulated market.

    Attributes
    ----------
    model : {"bs", "volstab", "sigmarket"}
    d : int
        Number of assets.
    steps : int
        Time steps on ``[0, horizon]``.
    drift : list of float
        Black-Scholes drift vector ``a``.
    sigma : list of list of float
        Constant ``d x m`` volatility matrix (``bs`` and ``sigmarket``).
    alpha : float
        Volatility-stabilised parameter.
    sig_level : int
        Signature level of the sig-market drift.
    sig_coeffs : list of list of float
        ``d x n_words(d + 1, sig_level)`` coefficients; column order is the
        (length, lex) word order over letters ``1 = time, 2.. = weights``.
    strong_solution : bool
        Zero every sig-market coefficient outside the index set whose letters
        after the first are all time.
    """

    model: str
    d: int
    steps: int
    horizon: float = 1.0
    seed: int = 0
    s0: list[float] | None = None
    drift: list[float] | None = None
    sigma: list[list[float]] | None = None
    alpha: float = 0.0
    sig_level: int = 2
    sig_coeffs: list[list[float]] | None = None
    strong_solution: bool = True
    max_attempts: int = 20

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.d < 1 or self.steps < 1:
            raise ValueError("need d >= 1 and steps >= 1")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        s0 = np.ones(self.d) if self.s0 is None else np.asarray(self.s0, dtype=float)
        if s0.shape != (self.d,) or np.any(s0 <= 0):
            raise ValueError("s0 must hold d positive prices")
        self.s0 = [float(v) for v in s0]
        if self.model in ("bs", "sigmarket"):
            sig = np.asarray(self.sigma if self.sigma is not None else np.zeros((self.d, self.d)), dtype=float)
            if sig.ndim != 2 or sig.shape[0] != self.d or sig.shape[1] < self.d:
                raise ValueError("sigma must be a d x m matrix with m >= d")
            self.sigma = sig.tolist()
        if self.model == "bs":
            a = np.zeros(self.d) if self.drift is None else np.asarray(self.drift, dtype=float)
            if a.shape != (self.d,):
                raise ValueError("drift must have d entries")
            self.drift = a.tolist()
        if self.model == "volstab" and self.alpha < 0:
            raise ValueError("volstab alpha must be >= 0")
        if self.model == "sigmarket":
            W = n_words(self.d + 1, self.sig_level)
            coeffs = np.zeros((self.d, W)) if self.sig_coeffs is None else np.asarray(self.sig_coeffs, dtype=float)
            if coeffs.shape != (self.d, W):
                raise ValueError(f"sig_coeffs must have shape {(self.d, W)}")
            self.sig_coeffs = coeffs.tolist()

    def sigma_matrix(self) -> np.ndarray:
        return np.asarray(self.sigma, dtype=float)

    def full_rank(self) -> bool:
        return np.linalg.matrix_rank(self.sigma_matrix()) == self.d

    def coefficient_matrix(self) -> np.ndarray:
        """Sig-market drift coefficients after the strong-solution restriction."""
        coeffs = np.asarray(self.sig_coeffs, dtype=float)
        if self.strong_solution:
            coeffs = coeffs * strong_solution_mask(self.d + 1, self.sig_level)
        return coeffs

    def to_dict(self) -> dict:
        return asdict(self)


def strong_solution_mask(n: int, N: int) -> np.ndarray:
    """1 for words whose letters after the first are all the time letter."""
    return np.array([float(all(i == 1 for i in w.letters[1:])) for w in enumerate_words(n, N)])


def _path_rng(seed: int, path_id: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng([seed, path_id, attempt])


def _normals(cfg: SimConfig, path_ids: Sequence[int], attempts: Sequence[int], m: int) -> np.ndarray:
    return np.stack([_path_rng(cfg.seed, p, a).standard_normal((cfg.steps, m))
                     for p, a in zip(path_ids, attempts)])


def _rowmul(x: np.ndarray, M: np.ndarray) -> np.ndarray:
    """``x @ M.T`` by sequential accumulation.

    Unlike BLAS, the rounding does not depend on the batch shape, so a path
    id maps to the same bits whatever batch it is simulated in.
    """
    out = x[..., 0, None] * M[:, 0]
    for j in range(1, M.shape[1]):
        out += x[..., j, None] * M[:, j]
    return out


def _simulate_bs(cfg: SimConfig, z: np.ndarray) -> np.ndarray:
    dt = cfg.horizon / cfg.steps
    a = np.asarray(cfg.drift)
    sig = cfg.sigma_matrix()
    drift = (a - 0.5 * np.sum(sig**2, axis=1)) * dt
    dlog = drift + np.sqrt(dt) * _rowmul(z, sig)
    return dlog


def _softmax_rows(logs: np.ndarray) -> np.ndarray:
    w = np.exp(logs - logs.max(axis=-1, keepdims=True))
    return w / w.sum(axis=-1, keepdims=True)


def _simulate_volstab(cfg: SimConfig, z: np.ndarray, log_s0: np.ndarray) -> np.ndarray:
    dt = cfg.horizon / cfg.steps
    sq = np.sqrt(dt)
    B = z.shape[0]
    out = np.empty((B, cfg.steps + 1, cfg.d))
    out[:, 0] = log_s0
    x = np.broadcast_to(log_s0, (B, cfg.d)).copy()
    half_alpha = 0.5 * cfg.alpha
    with np.errstate(all="ignore"):
        for k in range(cfg.steps):
            mu = _softmax_rows(x)
            # d log S^i = ((1+alpha)/2 - 1/2) / mu^i dt + mu^{-1/2} dB^i
            x = x + half_alpha / mu * dt + z[:, k] * sq / np.sqrt(mu)
            out[:, k + 1] = x
    return out


def _simulate_sigmarket(cfg: SimConfig, z: np.ndarray, log_s0: np.ndarray) -> np.ndarray:
    dt = cfg.horizon / cfg.steps
    sq = np.sqrt(dt)
    B = z.shape[0]
    n, N = cfg.d + 1, cfg.sig_level
    coeffs = cfg.coefficient_matrix()
    sig = cfg.sigma_matrix()
    ito = 0.5 * np.sum(sig**2, axis=1)
    levels = [np.zeros((B, n**k)) for k in range(N + 1)]
    levels[0][:] = 1.0
    inv_fact = [1.0 / factorial(j) for j in range(N + 1)]
    out = np.empty((B, cfg.steps + 1, cfg.d))
    out[:, 0] = log_s0
    x = np.broadcast_to(log_s0, (B, cfg.d)).copy()
    mu = _softmax_rows(x)
    with np.errstate(all="ignore"):
        for k in range(cfg.steps):
            drift = _rowmul(np.concatenate(levels, axis=1), coeffs)
            x = x + (drift - ito) * dt + sq * _rowmul(z[:, k], sig)
            out[:, k + 1] = x
            mu_new = _softmax_rows(x)
            inc = np.column_stack([np.full(B, dt / cfg.horizon), mu_new - mu])
            mu = mu_new
            powers = [np.ones((B, 1))]
            for j in range(1, N + 1):
                powers.append((powers[-1][:, :, None] * inc[:, None, :]).reshape(B, -1))
            new = [levels[0]]
            for lvl in range(1, N + 1):
                acc = levels[lvl].copy()
                for j in range(1, lvl + 1):
                    acc += inv_fact[j] * (levels[lvl - j][:, :, None] * powers[j][:, None, :]).reshape(B, -1)
                new.append(acc)
            levels = new
    return out


def _raw_log_prices(cfg: SimConfig, path_ids: Sequence[int], attempts: Sequence[int]) -> np.ndarray:
    log_s0 = np.log(np.asarray(cfg.s0))
    if cfg.model == "bs":
        m = cfg.sigma_matrix().shape[1]
        z = _normals(cfg, path_ids, attempts, m)
        dlog = _simulate_bs(cfg, z)
        out = np.empty((len(path_ids), cfg.steps + 1, cfg.d))
        out[:, 0] = log_s0
        np.cumsum(dlog, axis=1, out=out[:, 1:])
        out[:, 1:] += log_s0
        return out
    if cfg.model == "volstab":
        return _simulate_volstab(cfg, _normals(cfg, path_ids, attempts, cfg.d), log_s0)
    m = cfg.sigma_matrix().shape[1]
    return _simulate_sigmarket(cfg, _normals(cfg, path_ids, attempts, m), log_s0)


def _healthy(logs: np.ndarray) -> np.ndarray:
    """Per path: finite log prices and weights bounded away from 0 in float."""
    finite = np.all(np.isfinite(logs), axis=(1, 2))
    spread = logs.max(axis=2) - logs.min(axis=2)
    with np.errstate(invalid="ignore"):
        ok_spread = np.all(np.where(np.isfinite(spread), spread, np.inf) < 600.0, axis=1)
    return finite & ok_spread


def simulate_log_prices(cfg: SimConfig, path_ids: Sequence[int]) -> tuple[np.ndarray, int]:
    """Log prices ``(B, steps + 1, d)`` for the given path ids.

    Blown-up paths are regenerated with the next sub-seed.  Returns the array
    and the number of regenerations.
    """
    path_ids = list(path_ids)
    attempts = [0] * len(path_ids)
    logs = _raw_log_prices(cfg, path_ids, attempts)
    regenerated = 0
    bad = np.flatnonzero(~_healthy(logs))
    while bad.size:
        regenerated += bad.size
        for b in bad:
            attempts[b] += 1
            if attempts[b] >= cfg.max_attempts:
                raise SimulationError(f"path {path_ids[b]} blew up {cfg.max_attempts} times")
        redo = _raw_log_prices(cfg, [path_ids[b] for b in bad], [attempts[b] for b in bad])
        logs[bad] = redo
        bad = bad[~_healthy(redo)]
    return logs, regenerated


def simulate(cfg: SimConfig, n_paths: int, start: int = 0, threads: int = 1,
             batch_size: int = 64, info: dict | None = None) -> list[MarketPanel]:
    """Simulate ``n_paths`` price panels (path ids ``start .. start + n_paths - 1``).

    ``info``, if given, receives ``{"regenerated": count}``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if cfg.model in ("bs", "sigmarket") and not cfg.full_rank() and np.any(cfg.sigma_matrix()):
        raise ValueError("sigma must have full row rank d")
    ids = list(range(start, start + n_paths))
    batches = [ids[i:i + batch_size] for i in range(0, n_paths, batch_size)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda b: simulate_log_prices(cfg, b), batches))
    times = np.linspace(0.0, cfg.horizon, cfg.steps + 1)
    labels = tuple(f"S{i + 1}" for i in range(cfg.d))
    panels = []
    for logs, _ in results:
        for lp in logs:
            panels.append(MarketPanel(times, np.exp(lp), labels))
    if info is not None:
        info["regenerated"] = int(sum(r for _, r in results))
    return panels


def growth_optimal_weights(a: np.ndarray, sigma: np.ndarray, cond_limit: float = 1e12) -> np.ndarray:
    """Growth-optimal weights ``C^{-1}(a - kappa 1)`` with ``C = Sigma Sigma^T``.

    ``kappa`` is chosen so the weights sum to one.  Leading axes of ``a``
    (``(..., d)``) and ``sigma`` (``(..., d, m)``) broadcast.

    Raises
    ------
    SingularCovarianceError
        If the condition number of ``C`` exceeds ``cond_limit``.
    """
    a = np.asarray(a, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    C = sigma @ np.swapaxes(sigma, -1, -2)
    cond = np.linalg.cond(C)
    if np.any(~np.isfinite(cond)) or np.any(cond > cond_limit):
        raise SingularCovarianceError("covariance matrix is singular or ill-conditioned")
    ones = np.ones(a.shape)
    Cinv_a = np.linalg.solve(C, a[..., None])[..., 0]
    Cinv_1 = np.linalg.solve(C, np.broadcast_to(ones, np.broadcast_shapes(a.shape, C.shape[:-1]))[..., None])[..., 0]
    kappa = (Cinv_a.sum(axis=-1) - 1.0) / Cinv_1.sum(axis=-1)
    return Cinv_a - kappa[..., None] * Cinv_1


def reference_go_weights(cfg: SimConfig, log_prices: np.ndarray) -> np.ndarray:
    """Growth-optimal weights ``(..., T, d)`` along simulated log-price paths."""
    log_prices = np.asarray(log_prices, dtype=float)
    shape = log_prices.shape
    if cfg.model == "bs":
        w = growth_optimal_weights(np.asarray(cfg.drift), cfg.sigma_matrix())
        return np.broadcast_to(w, shape).copy()
    mu = _softmax_rows(log_prices)
    if cfg.model == "volstab":
        a = 0.5 * (1.0 + cfg.alpha) / mu
        sig = np.zeros(shape + (cfg.d,))
        idx = np.arange(cfg.d)
        sig[..., idx, idx] = 1.0 / np.sqrt(mu)
        return growth_optimal_weights(a, sig)
    times = np.linspace(0.0, 1.0, shape[-2])
    aug = np.concatenate([np.broadcast_to(times[:, None], shape[:-1] + (1,)), mu], axis=-1)
    sig_feats = signature_matrix(aug, cfg.sig_level)
    a = sig_feats @ cfg.coefficient_matrix().T
    return growth_optimal_weights(a, cfg.sigma_matrix())


def reference_go_stream(cfg: SimConfig, panel: MarketPanel) -> np.ndarray:
    """Growth-optimal weights ``(T, d)`` of the model along one panel."""
    if panel.d != cfg.d:
        raise ValueError("panel and config disagree on the number of assets")
    return reference_go_weights(cfg, np.log(panel.prices))
