"""Linear path-functional portfolios of type I and type II.

A portfolio is fixed by an auxiliary portfolio ``tau``, a feature family and
a coefficient vector ``l`` indexed by ``(asset, feature)`` through
:func:`labelling`.  Controlling functions are ``f^i = sum_nu l_(i,nu) phi^nu``
and the weights are

* type I:  ``pi^i = tau^i (f^i + 1 - sum_j tau^j f^j)``
* type II: ``pi^i = f^i + tau^i (1 - sum_j f^j)``

both of which sum to one whenever ``tau`` does.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .signature import (
    DiscretePath,
    FeatureMatrix,
    jl_signature,
    randomized_signature,
    signature_features,
    time_augment,
)
from .tensor import n_words

__all__ = [
    "FeatureSpec",
    "PortfolioSpec",
    "labelling",
    "unlabel",
    "controlling_functions",
    "weights_type1",
    "weights_type2",
    "portfolio_weights",
    "auxiliary_weights",
    "clip_weights",
    "save_model",
    "load_model",
]

FAMILIES = ("signature", "jl", "randomized")
UNDERLYINGS = ("universe_weights", "ranked_weights", "prices", "log_prices", "external")


@dataclass
class FeatureSpec:
    """How to turn an underlying path into features.

    The underlying path is time-augmented with ``t / horizon`` before the
    chosen family is applied.
    """

    family: str = "signature"
    level: int = 2
    projection_dim: int | None = None
    seed: int = 0
    activation: str = "tanh"
    bias_scale: float = 1.0
    underlying: str = "universe_weights"
    horizon: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"feature family must be one of {FAMILIES}")
        if self.underlying not in UNDERLYINGS:
            raise ValueError(f"underlying must be one of {UNDERLYINGS}")
        if self.family != "signature" and not self.projection_dim:
            raise ValueError(f"{self.family} features need projection_dim")

    def n_features(self, input_dim: int) -> int:
        """Feature count for an underlying path of ``input_dim`` components."""
        if self.family == "signature":
            return n_words(input_dim + 1, self.level)
        return int(self.projection_dim)

    def compute(self, values: np.ndarray, times: np.ndarray) -> FeatureMatrix:
        """Features at every sample of ``values`` (``(T, n)``) observed at ``times``."""
        path = time_augment(DiscretePath(times, values), self.horizon)
        if self.family == "signature":
            return signature_features(path, self.level)
        if self.family == "jl":
            return jl_signature(path, self.level, int(self.projection_dim), self.seed)
        return randomized_signature(path, int(self.projection_dim), self.seed,
                                    self.activation, self.bias_scale)


@dataclass
class PortfolioSpec:
    """Everything needed to evaluate a trained linear path-functional portfolio."""

    kind: str = "I"
    universe: tuple[int, ...] = ()
    tau: str | list[float] = "universe"
    features: FeatureSpec = field(default_factory=FeatureSpec)
    coefficients: np.ndarray | None = None
    tau_bound: float = 1e6

    def __post_init__(self):
        if self.kind not in ("I", "II"):
            raise ValueError("portfolio type must be 'I' or 'II'")
        self.universe = tuple(int(i) for i in self.universe)
        if isinstance(self.features, dict):
            self.features = FeatureSpec(**self.features)
        if self.coefficients is not None:
            self.coefficients = np.asarray(self.coefficients, dtype=float)

    @property
    def n_assets(self) -> int:
        return len(self.universe)

    def n_features(self) -> int:
        return self.features.n_features(self.n_assets)

    def check_coefficients(self) -> np.ndarray:
        l = self.coefficients
        if l is None:
            raise ValueError("portfolio has no coefficients")
        expected = self.n_assets * self.n_features()
        if l.size != expected:
            raise ValueError(f"coefficient vector has {l.size} entries, expected {expected}")
        return l

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "universe": list(self.universe),
            "tau": self.tau,
            "features": asdict(self.features),
            "tau_bound": self.tau_bound,
        }
        if self.coefficients is not None:
            out["coefficients"] = [float(v) for v in self.coefficients]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PortfolioSpec":
        data = dict(data)
        data["features"] = FeatureSpec(**data.get("features", {}))
        return cls(**data)


def labelling(i: int, nu: int, n_features: int, n_assets: int | None = None) -> int:
    """Flat index ``i * n_features + nu`` of the pair (asset ``i``, feature ``nu``)."""
    if not 0 <= nu < n_features or i < 0 or (n_assets is not None and i >= n_assets):
        raise IndexError(f"(asset {i}, feature {nu}) out of range")
    return i * n_features + nu


def unlabel(index: int, n_features: int, n_assets: int | None = None) -> tuple[int, int]:
    if index < 0 or (n_assets is not None and index >= n_assets * n_features):
        raise IndexError(f"flat index {index} out of range")
    return divmod(index, n_features)


def _values(features) -> np.ndarray:
    return features.values if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=float)


def controlling_functions(l: np.ndarray, features, n_assets: int) -> np.ndarray:
    """``f[t, i] = sum_nu l[(i, nu)] * phi[t, nu]``, shape ``(T, n_assets)``."""
    phi = _values(features)
    l = np.asarray(l, dtype=float).reshape(-1)
    if l.size != n_assets * phi.shape[-1]:
        raise ValueError(f"l has {l.size} entries; expected {n_assets} x {phi.shape[-1]}")
    return phi @ l.reshape(n_assets, phi.shape[-1]).T


def _check_shapes(tau: np.ndarray, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tau = np.asarray(tau, dtype=float)
    f = np.asarray(f, dtype=float)
    if tau.shape != f.shape:
        raise ValueError(f"tau shape {tau.shape} does not match f shape {f.shape}")
    return tau, f


def weights_type1(tau: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Type-I weights ``tau^i (f^i + 1 - sum_j tau^j f^j)``."""
    tau, f = _check_shapes(tau, f)
    return tau * (f + 1.0 - np.sum(tau * f, axis=-1, keepdims=True))


def weights_type2(tau: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Type-II weights ``f^i + tau^i (1 - sum_j f^j)``."""
    tau, f = _check_shapes(tau, f)
    return f + tau * (1.0 - np.sum(f, axis=-1, keepdims=True))


def auxiliary_weights(tau: str | Sequence[float] | np.ndarray, mu: np.ndarray,
                      bound: float = np.inf) -> np.ndarray:
    """Auxiliary portfolio panel matching the universe weights ``mu`` (``(T, U)``)."""
    mu = np.asarray(mu, dtype=float)
    if isinstance(tau, str):
        if tau == "universe":
            out = mu
        elif tau == "equal":
            out = np.full_like(mu, 1.0 / mu.shape[-1])
        else:
            raise ValueError(f"unknown auxiliary portfolio {tau!r}")
    else:
        out = np.asarray(tau, dtype=float)
        out = np.broadcast_to(out, mu.shape).copy() if out.ndim == 1 else out
        if out.shape != mu.shape:
            raise ValueError("external auxiliary panel has the wrong shape")
        if np.max(np.abs(out.sum(axis=-1) - 1.0)) > 1e-10:
            raise ValueError("auxiliary portfolio rows must sum to 1")
    if np.max(np.abs(out)) > bound:
        raise ValueError(f"auxiliary portfolio exceeds the bound {bound}")
    return out


def portfolio_weights(kind: str, tau: np.ndarray, l: np.ndarray, features) -> np.ndarray:
    f = controlling_functions(l, features, np.asarray(tau).shape[-1])
    return weights_type1(tau, f) if kind == "I" else weights_type2(tau, f)


def clip_weights(weights: np.ndarray, low: float, high: float) -> np.ndarray:
    """Clip weights into ``[low, high]`` and spread the lost mass evenly.

    The result sums to one but may leave the band again when the residual is
    large; it is an optional post-processor, off by default everywhere.
    """
    w = np.clip(np.asarray(weights, dtype=float), low, high)
    return w + (1.0 - w.sum(axis=-1, keepdims=True)) / w.shape[-1]


def save_model(path: str | Path, spec: PortfolioSpec, extra: dict | None = None) -> None:
    """Write a model JSON: portfolio descriptor, coefficients, provenance."""
    spec.check_coefficients()
    payload = {"portfolio": spec.to_dict()}
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> tuple[PortfolioSpec, dict]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    spec = PortfolioSpec.from_dict(data.pop("portfolio"))
    spec.check_coefficients()
    return spec, data
