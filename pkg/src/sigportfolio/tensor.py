"""Words, shuffle products and truncated tensor-algebra arithmetic.

Coefficients of an element of T^N(R^n) are stored densely, one flat array per
level.  Level ``k`` holds ``n**k`` entries; the entry for the word
``(i_1, ..., i_k)`` (letters 1-based) sits at the base-``n`` position
``sum_j (i_j - 1) * n**(k - 1 - j)``, i.e. lexicographic order.  Concatenating
the levels gives the global (length, lex) feature order used everywhere else
in the package.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from math import factorial
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Word",
    "WordSum",
    "TruncatedTensor",
    "enumerate_words",
    "word_index",
    "n_words",
    "shuffle",
    "tensor_mul",
    "tensor_exp",
    "group_inverse",
]


@dataclass(frozen=True)
class Word:
    """A multi-index ``(i_1, ..., i_m)`` over the alphabet ``{1, ..., n}``.

    Words are ordered by length first and lexicographically within a length.
    """

    letters: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple(int(i) for i in self.letters))
        if any(i < 1 for i in self.letters):
            raise ValueError(f"letters must be >= 1, got {self.letters}")

    def __len__(self) -> int:
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def __lt__(self, other: "Word") -> bool:
        return (len(self), self.letters) < (len(other), other.letters)

    def __le__(self, other: "Word") -> bool:
        return self == other or self < other

    def __add__(self, other: "Word") -> "Word":
        return Word(self.letters + other.letters)

    def __str__(self) -> str:
        if not self.letters:
            return "∅"
        if max(self.letters) < 10:
            return "".join(str(i) for i in self.letters)
        return ",".join(str(i) for i in self.letters)

    @classmethod
    def parse(cls, text: str) -> "Word":
        """Inverse of ``str``: ``"∅"``, ``"121"`` or ``"1,12,3"``."""
        text = text.strip()
        if text in ("∅", ""):
            return cls(())
        if "," in text:
            return cls(tuple(int(t) for t in text.split(",")))
        return cls(tuple(int(t) for t in text))

    def check_alphabet(self, n: int) -> None:
        if any(i > n for i in self.letters):
            raise ValueError(f"word {self} has letters outside 1..{n}")


def n_words(n: int, N: int) -> int:
    """Number of words of length ``0..N`` over ``n`` letters."""
    return sum(n**k for k in range(N + 1))


def enumerate_words(n: int, N: int) -> list[Word]:
    """All words of length at most ``N`` in (length, lex) order.

    The position of a word in the returned list is its global feature index.
    """
    if n < 1 or N < 0:
        raise ValueError("need n >= 1 and N >= 0")
    words = []
    for k in range(N + 1):
        words.extend(Word(w) for w in product(range(1, n + 1), repeat=k))
    return words


def word_index(word: Word | Sequence[int], n: int) -> int:
    """Global (length, lex) rank of ``word`` over an alphabet of size ``n``."""
    letters = tuple(word)
    m = len(letters)
    offset = sum(n**k for k in range(m))
    pos = 0
    for i in letters:
        if not 1 <= i <= n:
            raise ValueError(f"letter {i} outside 1..{n}")
        pos = pos * n + (i - 1)
    return offset + pos


class WordSum(dict):
    """Integer linear combination of words; zero coefficients are dropped."""

    def __setitem__(self, key: Word, value: int):
        if value == 0:
            self.pop(key, None)
        else:
            super().__setitem__(key, int(value))

    def add(self, word: Word, coeff: int = 1) -> None:
        self[word] = self.get(word, 0) + coeff

    def mass(self) -> int:
        """Sum of all coefficients."""
        return sum(self.values())

    def evaluate(self, tensor: "TruncatedTensor") -> float:
        """Pair with a tensor: ``sum_w coeff_w * <e_w, tensor>``."""
        return float(sum(c * tensor[w] for w, c in self.items()))


def _shuffle_letters(a: tuple[int, ...], b: tuple[int, ...], memo: dict) -> dict:
    key = (a, b)
    if key in memo:
        return memo[key]
    if not a:
        out = {b: 1}
    elif not b:
        out = {a: 1}
    else:
        # (u.i) sh (v.j) = (u sh v.j).i + (u.i sh v).j
        out: dict = {}
        for w, c in _shuffle_letters(a[:-1], b, memo).items():
            out[w + a[-1:]] = out.get(w + a[-1:], 0) + c
        for w, c in _shuffle_letters(a, b[:-1], memo).items():
            out[w + b[-1:]] = out.get(w + b[-1:], 0) + c
    memo[key] = out
    return out


def shuffle(I: Word | Sequence[int], J: Word | Sequence[int]) -> WordSum:
    """Shuffle product of two words, with multiplicities."""
    result = WordSum()
    for w, c in _shuffle_letters(tuple(I), tuple(J), {}).items():
        result.add(Word(w), c)
    return result


class TruncatedTensor:
    """An element of the truncated tensor algebra T^N(R^n).

    Parameters
    ----------
    levels : sequence of array_like
        ``levels[k]`` holds the ``n**k`` coefficients of level ``k`` in
        lexicographic word order.  ``levels[0]`` has a single entry.
    n : int
        Alphabet size (dimension of the underlying space).
    """

    __slots__ = ("n", "N", "levels")

    def __init__(self, levels: Sequence[np.ndarray], n: int):
        self.n = int(n)
        self.N = len(levels) - 1
        lv = []
        for k, a in enumerate(levels):
            a = np.array(a, dtype=float).reshape(-1)
            if a.size != self.n**k:
                raise ValueError(f"level {k} needs {self.n**k} entries, got {a.size}")
            a.setflags(write=False)
            lv.append(a)
        self.levels = tuple(lv)

    @classmethod
    def zero(cls, n: int, N: int) -> "TruncatedTensor":
        return cls([np.zeros(n**k) for k in range(N + 1)], n)

    @classmethod
    def one(cls, n: int, N: int) -> "TruncatedTensor":
        levels = [np.zeros(n**k) for k in range(N + 1)]
        levels[0][0] = 1.0
        return cls(levels, n)

    @classmethod
    def from_vector(cls, vec: np.ndarray, n: int, N: int) -> "TruncatedTensor":
        vec = np.asarray(vec, dtype=float)
        if vec.size != n_words(n, N):
            raise ValueError("vector length does not match (n, N)")
        levels, start = [], 0
        for k in range(N + 1):
            levels.append(vec[start:start + n**k])
            start += n**k
        return cls(levels, n)

    @classmethod
    def from_increment(cls, v: Sequence[float], N: int) -> "TruncatedTensor":
        """The Lie element ``(0, v, 0, ..., 0)``."""
        v = np.asarray(v, dtype=float).reshape(-1)
        n = v.size
        levels = [np.zeros(n**k) for k in range(N + 1)]
        if N >= 1:
            levels[1] = v.copy()
        return cls(levels, n)

    def to_vector(self) -> np.ndarray:
        return np.concatenate(self.levels)

    def __getitem__(self, word: Word | Sequence[int]) -> float:
        letters = tuple(word)
        k = len(letters)
        if k > self.N:
            raise KeyError(f"word of length {k} beyond truncation level {self.N}")
        pos = 0
        for i in letters:
            if not 1 <= i <= self.n:
                raise KeyError(f"letter {i} outside 1..{self.n}")
            pos = pos * self.n + (i - 1)
        return float(self.levels[k][pos])

    def _check_compatible(self, other: "TruncatedTensor") -> None:
        if self.n != other.n or self.N != other.N:
            raise ValueError(
                f"dimension mismatch: (n={self.n}, N={self.N}) vs (n={other.n}, N={other.N})"
            )

    def __add__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        self._check_compatible(other)
        return TruncatedTensor([a + b for a, b in zip(self.levels, other.levels)], self.n)

    def __sub__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        self._check_compatible(other)
        return TruncatedTensor([a - b for a, b in zip(self.levels, other.levels)], self.n)

    def __neg__(self) -> "TruncatedTensor":
        return TruncatedTensor([-a for a in self.levels], self.n)

    def __mul__(self, scalar: float) -> "TruncatedTensor":
        return TruncatedTensor([scalar * a for a in self.levels], self.n)

    __rmul__ = __mul__

    def __matmul__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        return tensor_mul(self, other)

    def max_abs_diff(self, other: "TruncatedTensor") -> float:
        self._check_compatible(other)
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.levels, other.levels))

    def __repr__(self) -> str:
        return f"TruncatedTensor(n={self.n}, N={self.N}, level0={self.levels[0][0]:g})"


def _mul_levels(a: Sequence[np.ndarray], b: Sequence[np.ndarray], N: int) -> list[np.ndarray]:
    return [
        sum(np.outer(a[j], b[k - j]).reshape(-1) for j in range(k + 1))
        for k in range(N + 1)
    ]


def tensor_mul(a: TruncatedTensor, b: TruncatedTensor) -> TruncatedTensor:
    """Truncated tensor product ``c_k = sum_j a_j (x) b_{k-j}``."""
    a._check_compatible(b)
    return TruncatedTensor(_mul_levels(a.levels, b.levels, a.N), a.n)


def tensor_exp(a: TruncatedTensor) -> TruncatedTensor:
    """Truncated exponential of an element with zero scalar part."""
    if a.levels[0][0] != 0.0:
        raise ValueError("tensor_exp needs a level-0 entry equal to 0")
    result = TruncatedTensor.one(a.n, a.N)
    power = TruncatedTensor.one(a.n, a.N)
    for k in range(1, a.N + 1):
        power = tensor_mul(power, a)
        result = result + power * (1.0 / factorial(k))
    return result


def group_inverse(g: TruncatedTensor) -> TruncatedTensor:
    """Inverse in the truncated tensor group, ``sum_k (1 - g)^k``."""
    if g.levels[0][0] != 1.0:
        raise ValueError("group_inverse needs a level-0 entry equal to 1")
    one = TruncatedTensor.one(g.n, g.N)
    x = one - g
    result = one
    power = one
    # x has zero scalar part, so x^k vanishes beyond k = N
    for _ in range(g.N):
        power = tensor_mul(power, x)
        result = result + power
    return result


def words_of_length(n: int, k: int) -> Iterable[Word]:
    return (Word(w) for w in product(range(1, n + 1), repeat=k))
