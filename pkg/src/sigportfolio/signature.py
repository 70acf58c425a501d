"""Streaming signatures of discrete paths and randomized feature streams.

Signatures are those of the piecewise-linear interpolant of the samples:
``g_{k+1} = g_k (x) exp(x_{k+1} - x_k)``.  Expanding this level by level,
the level-``m`` coefficient increment only involves lower levels of ``g_k``,
so each level is a cumulative sum over time and the whole stream is computed
without a Python loop over samples.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .tensor import TruncatedTensor, Word, enumerate_words, group_inverse, n_words, tensor_mul

__all__ = [
    "DiscretePath",
    "SignatureStream",
    "FeatureMatrix",
    "NonFiniteStateError",
    "time_augment",
    "signature_levels",
    "signature_matrix",
    "path_signature",
    "signature_increment",
    "signature_features",
    "jl_matrix",
    "jl_signature",
    "randomized_signature",
    "randomized_signature_params",
    "ACTIVATIONS",
]


class NonFiniteStateError(FloatingPointError):
    """Raised when a randomized-signature trajectory leaves the finite reals."""


@dataclass(frozen=True)
class DiscretePath:
    """Samples ``values[k]`` of an ``n``-dimensional path at ``times[k]``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != times.size:
            raise ValueError(f"values shape {values.shape} does not match {times.size} times")
        if times.size < 2:
            raise ValueError("a path needs at least 2 samples")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise ValueError("path contains NaN or infinite entries")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.times.size

    def slice(self, start: int, stop: int) -> "DiscretePath":
        return DiscretePath(self.times[start:stop], self.values[start:stop])


def time_augment(path: DiscretePath, horizon: float) -> DiscretePath:
    """Prepend the time component ``t / horizon`` to the path."""
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    clock = path.times / horizon
    return DiscretePath(path.times, np.column_stack([clock, path.values]))


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a[..., :, None] * b[..., None, :]).reshape(*a.shape[:-1], a.shape[-1] * b.shape[-1])


def signature_matrix(values: np.ndarray, N: int) -> np.ndarray:
    """Signature stream of sampled paths as one feature array.

    Parameters
    ----------
    values : ndarray, shape (..., T, n)
        Samples; leading axes are batch axes.
    N : int
        Truncation level.

    Returns
    -------
    ndarray, shape (..., T, n_words(n, N))
        Row ``t`` holds the signature over samples ``0..t`` in (length, lex)
        order.
    """
    values = np.asarray(values, dtype=float)
    if N < 0:
        raise ValueError("N must be >= 0")
    dx = np.diff(values, axis=-2)
    batch = values.shape[:-2]
    T, n = values.shape[-2:]
    offsets = np.concatenate([[0], np.cumsum([n**k for k in range(N + 1)])])
    full = np.empty(batch + (T, int(offsets[-1])))
    out = [full[..., offsets[k]:offsets[k + 1]] for k in range(N + 1)]
    out[0][...] = 1.0
    for k in range(1, N + 1):
        # Horner form of sum_j S_{k-j} (x) dx^{(x)j} / j!:
        # ((dx / k + S_1) (x) dx / (k-1) + S_2) ... + S_{k-1}) (x) dx
        acc = dx / k
        for j in range(1, k):
            acc = _outer(acc + out[j][..., :-1, :], dx / (k - j))
        out[k][..., 0, :] = 0.0
        np.cumsum(acc, axis=-2, out=out[k][..., 1:, :])
    return full


def signature_levels(values: np.ndarray, N: int) -> list[np.ndarray]:
    """Signature stream of sampled paths, level by level.

    ``out[k]`` has shape ``(..., T, n**k)``; ``out[k][..., t, :]`` are the
    level-``k`` coefficients of the signature over samples ``0..t``.  The
    levels are views into :func:`signature_matrix`.
    """
    full = signature_matrix(values, N)
    n = np.shape(values)[-1]
    offsets = np.concatenate([[0], np.cumsum([n**k for k in range(N + 1)])])
    return [full[..., offsets[k]:offsets[k + 1]] for k in range(N + 1)]


class SignatureStream:
    """Signatures ``g_k`` of a path restricted to its first ``k + 1`` samples."""

    def __init__(self, levels: Sequence[np.ndarray], n: int, times: np.ndarray | None = None):
        self.levels = [np.asarray(a) for a in levels]
        self.n = int(n)
        self.N = len(self.levels) - 1
        self.times = None if times is None else np.asarray(times)

    def __len__(self) -> int:
        return self.levels[0].shape[0]

    def __getitem__(self, k: int) -> TruncatedTensor:
        if not -len(self) <= k < len(self):
            raise IndexError(f"sample index {k} out of range for {len(self)} samples")
        return TruncatedTensor([a[k] for a in self.levels], self.n)

    def features(self) -> np.ndarray:
        """Matrix ``(T, n_words)`` of all coefficients in (length, lex) order."""
        return np.concatenate(self.levels, axis=1)

    def words(self) -> list[Word]:
        return enumerate_words(self.n, self.N)


def path_signature(path: DiscretePath, N: int) -> SignatureStream:
    """Truncated signature stream of the piecewise-linear interpolant."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return SignatureStream(signature_levels(path.values, N), path.dim, path.times)


def signature_increment(stream: SignatureStream, j: int, k: int) -> TruncatedTensor:
    """Signature over samples ``j..k``, i.e. ``g_j^{-1} (x) g_k``."""
    T = len(stream)
    if not (0 <= j <= k < T):
        raise IndexError(f"need 0 <= j <= k < {T}, got j={j}, k={k}")
    return tensor_mul(group_inverse(stream[j]), stream[k])


@dataclass
class FeatureMatrix:
    """Feature values at each sample of one trajectory.

    ``values`` has shape ``(T, P)``; ``provenance`` records everything needed
    to regenerate identical features (family, level, projection dim, seed).
    """

    values: np.ndarray
    family: str
    names: list[str]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise ValueError("feature names do not match the column count")

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path, times: np.ndarray | None = None) -> None:
        times = np.arange(self.values.shape[0]) if times is None else np.asarray(times)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", *self.names])
            for t, row in zip(times, self.values):
                writer.writerow([repr(float(t)), *(repr(float(v)) for v in row)])


def signature_features(path: DiscretePath, N: int) -> FeatureMatrix:
    """Full truncated signature as a feature matrix (empty word first)."""
    stream = path_signature(path, N)
    names = [str(w) for w in stream.words()]
    return FeatureMatrix(stream.features(), "signature", names, {"level": N, "input_dim": path.dim})


# --- Johnson-Lindenstrauss projected signature -----------------------------------

def _combo_slice(seed: int, size: int, rank: int, P: int, width: int) -> np.ndarray:
    rng = np.random.default_rng([seed, size, rank])
    return rng.normal(0.0, 1.0 / np.sqrt(P), size=(P, width))


def _kept_words(l: int, N: int) -> tuple[list[Word], np.ndarray]:
    """Words over ``{1..l}`` up to length ``N`` using all ``l`` letters."""
    words = enumerate_words(l, N)
    keep = np.array([len(set(w.letters)) == l for w in words])
    return words, keep


def _global_index(letters: Sequence[int], n: int) -> int:
    m = len(letters)
    pos = 0
    for i in letters:
        pos = pos * n + (i - 1)
    return sum(n**k for k in range(m)) + pos


def jl_matrix(n: int, N: int, P: int, seed: int) -> np.ndarray:
    """Materialise the projection matrix ``(P, n_words(n, N))``.

    Column blocks are drawn per letter combination, exactly as consumed by the
    batched evaluation in :func:`jl_signature`, so the two agree.
    """
    A = np.empty((P, n_words(n, N)))
    A[:, 0] = _combo_slice(seed, 0, 0, P, 1)[:, 0]
    for l in range(1, min(N, n) + 1):
        words, keep = _kept_words(l, N)
        for rank, combo in enumerate(combinations(range(1, n + 1), l)):
            block = _combo_slice(seed, l, rank, P, int(keep.sum()))
            idx = [_global_index([combo[i - 1] for i in w.letters], n)
                   for w, k in zip(words, keep) if k]
            A[:, idx] = block
    return A


def jl_signature(
    path: DiscretePath,
    N: int,
    P: int,
    seed: int,
    projection: np.ndarray | None = None,
    method: str = "batched",
) -> FeatureMatrix:
    """Random linear projection of the truncated signature stream.

    Parameters
    ----------
    path : DiscretePath
        Usually the time-augmented path.
    N, P : int
        Signature level and projection dimension.
    seed : int
        Seed of the projection; the same seed always gives the same matrix.
    projection : ndarray, optional
        Explicit ``(P, n_words)`` matrix overriding the seeded draw.
    method : {"batched", "direct"}
        ``"batched"`` signs each combination of ``l`` path components
        separately and keeps only the words that use all ``l`` of them, so the
        full signature is never held in memory.  ``"direct"`` projects the full
        signature; it exists as a cross-check.
    """
    if P < 1:
        raise ValueError("projection dimension must be >= 1")
    n = path.dim
    W = n_words(n, N)
    if projection is not None:
        projection = np.asarray(projection, dtype=float)
        if projection.shape != (P, W):
            raise ValueError(f"projection must have shape {(P, W)}, got {projection.shape}")
    provenance = {"level": N, "projection_dim": P, "seed": seed, "input_dim": n}
    names = [f"jl_{p}" for p in range(P)]

    if method == "direct":
        A = projection if projection is not None else jl_matrix(n, N, P, seed)
        feats = path_signature(path, N).features()
        return FeatureMatrix(feats @ A.T, "jl", names, provenance)
    if method != "batched":
        raise ValueError(f"unknown method {method!r}")

    T = len(path)
    if projection is not None:
        out = np.outer(np.ones(T), projection[:, 0])
    else:
        out = np.outer(np.ones(T), _combo_slice(seed, 0, 0, P, 1)[:, 0])
    for l in range(1, min(N, n) + 1):
        words, keep = _kept_words(l, N)
        kept = [w for w, k in zip(words, keep) if k]
        for rank, combo in enumerate(combinations(range(1, n + 1), l)):
            cols = [c - 1 for c in combo]
            sub = np.concatenate(signature_levels(path.values[:, cols], N), axis=1)[:, keep]
            if projection is not None:
                idx = [_global_index([combo[i - 1] for i in w.letters], n) for w in kept]
                block = projection[:, idx]
            else:
                block = _combo_slice(seed, l, rank, P, len(kept))
            out += sub @ block.T
    return FeatureMatrix(out, "jl", names, provenance)


# --- randomized signature ---------------------------------------------------------

ACTIVATIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "tanh": np.tanh,
    "sigmoid": expit,
    "identity": lambda x: x,
}


def randomized_signature_params(n: int, P: int, seed: int, bias_scale: float = 1.0):
    """Random vector fields ``(A, b)`` with shapes ``(n, P, P)`` and ``(n, P)``."""
    rng = np.random.default_rng(seed)
    A = rng.normal(0.0, 1.0 / np.sqrt(P), size=(n, P, P))
    b = rng.normal(0.0, bias_scale, size=(n, P))
    return A, b


def randomized_signature(
    path: DiscretePath,
    P: int,
    seed: int,
    activation: str = "tanh",
    bias_scale: float = 1.0,
    params: tuple[np.ndarray, np.ndarray] | None = None,
) -> FeatureMatrix:
    """Heun discretisation of ``dS = sum_i act(b_i + A_i S) o dX^i``, ``S_0 = e_1``.

    Raises
    ------
    NonFiniteStateError
        If the state becomes NaN or infinite.
    """
    if P < 1:
        raise ValueError("dimension must be >= 1")
    if activation not in ACTIVATIONS:
        raise ValueError(f"activation must be one of {sorted(ACTIVATIONS)}")
    act = ACTIVATIONS[activation]
    n = path.dim
    A, b = params if params is not None else randomized_signature_params(n, P, seed, bias_scale)
    if A.shape != (n, P, P) or b.shape != (n, P):
        raise ValueError("random parameters do not match path dimension / P")
    dx = np.diff(path.values, axis=0)
    S = np.zeros((len(path), P))
    S[0, 0] = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(dx.shape[0]):
            s = S[k]
            # fields[i] = act(b_i + A_i s)
            fields = act(b + A @ s)
            pred = s + dx[k] @ fields
            fields_pred = act(b + A @ pred)
            S[k + 1] = s + 0.5 * dx[k] @ (fields + fields_pred)
            if not np.all(np.isfinite(S[k + 1])):
                raise NonFiniteStateError(f"randomized signature state not finite at step {k + 1}")
    provenance = {"projection_dim": P, "seed": seed, "activation": activation,
                  "bias_scale": bias_scale, "input_dim": n}
    return FeatureMatrix(S, "randomized", [f"rs_{p}" for p in range(P)], provenance)
