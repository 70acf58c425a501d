from itertools import combinations, product
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sigportfolio.tensor import (
    TruncatedTensor,
    Word,
    WordSum,
    enumerate_words,
    group_inverse,
    n_words,
    shuffle,
    tensor_exp,
    tensor_mul,
    word_index,
)


def random_tensor(rng, n, N, group=False):
    t = TruncatedTensor([rng.normal(size=n**k) for k in range(N + 1)], n)
    levels = [a.copy() for a in t.levels]
    levels[0][0] = 1.0 if group else levels[0][0]
    return TruncatedTensor(levels, n)


def lie(rng, n, N):
    levels = [rng.normal(size=n**k) for k in range(N + 1)]
    levels[0][0] = 0.0
    return TruncatedTensor(levels, n)


def brute_shuffle(I, J):
    out = {}
    m = len(I) + len(J)
    for pos in combinations(range(m), len(I)):
        word, a, b = [], iter(I), iter(J)
        for k in range(m):
            word.append(next(a) if k in pos else next(b))
        out[tuple(word)] = out.get(tuple(word), 0) + 1
    return out


def naive_mul(a, b):
    n, N = a.n, a.N
    levels = [np.zeros(n**k) for k in range(N + 1)]
    for k in range(N + 1):
        for j in range(k + 1):
            for u in product(range(1, n + 1), repeat=j):
                for v in product(range(1, n + 1), repeat=k - j):
                    w = u + v
                    pos = 0
                    for i in w:
                        pos = pos * n + i - 1
                    levels[k][pos] += a[u] * b[v]
    return TruncatedTensor(levels, n)


class TestWords:
    def test_small_enumerations(self):
        assert [str(w) for w in enumerate_words(2, 1)] == ["∅", "1", "2"]
        assert [w.letters for w in enumerate_words(2, 2)] == [
            (), (1,), (2,), (1, 1), (1, 2), (2, 1), (2, 2)]
        assert len(enumerate_words(3, 3)) == 40 == n_words(3, 3)

    def test_order_and_index_agree(self):
        words = enumerate_words(3, 3)
        assert words == sorted(words)
        assert [word_index(w, 3) for w in words] == list(range(len(words)))

    def test_parse_roundtrip(self):
        for w in enumerate_words(3, 3):
            assert Word.parse(str(w)) == w
        assert Word.parse("1,12,3") == Word((1, 12, 3))
        assert str(Word((1, 12))) == "1,12"

    def test_invalid(self):
        with pytest.raises(ValueError):
            Word((0, 1))
        with pytest.raises(ValueError):
            enumerate_words(0, 2)
        with pytest.raises(ValueError):
            Word((3,)).check_alphabet(2)


class TestShuffle:
    def test_base_cases(self):
        assert shuffle((1,), (2,)) == {Word((1, 2)): 1, Word((2, 1)): 1}
        assert shuffle((1,), ()) == {Word((1,)): 1}

    def test_against_brute_force(self):
        got = {w.letters: c for w, c in shuffle((1, 2), (1,)).items()}
        assert got == brute_shuffle((1, 2), (1,))

    def test_mass_and_commutativity_exhaustive(self):
        words = [w.letters for w in enumerate_words(4, 2)] + [(1, 2, 3), (4, 4, 1, 2), (2, 2, 2)]
        for I in words:
            for J in words:
                if len(I) + len(J) > 8:
                    continue
                s = shuffle(I, J)
                assert s.mass() == comb(len(I) + len(J), len(I))
                assert s == shuffle(J, I)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(1, 4), max_size=4), st.lists(st.integers(1, 4), max_size=4))
    def test_matches_interleavings(self, I, J):
        got = {w.letters: c for w, c in shuffle(I, J).items()}
        assert got == brute_shuffle(tuple(I), tuple(J))

    def test_wordsum_drops_zeros(self):
        s = WordSum()
        s.add(Word((1,)), 2)
        s.add(Word((1,)), -2)
        assert len(s) == 0


class TestTensorArithmetic:
    def test_unit(self, rng):
        a = random_tensor(rng, 3, 3)
        assert tensor_mul(a, TruncatedTensor.one(3, 3)).max_abs_diff(a) == 0.0

    def test_level_two_product(self, rng):
        v, w = rng.normal(size=2), rng.normal(size=2)
        a = TruncatedTensor([[1.0], v, np.zeros(4)], 2)
        b = TruncatedTensor([[1.0], w, np.zeros(4)], 2)
        np.testing.assert_allclose(tensor_mul(a, b).levels[2], np.outer(v, w).ravel(), atol=1e-15)

    def test_matches_naive_loop(self, rng):
        a, b = random_tensor(rng, 2, 3), random_tensor(rng, 2, 3)
        assert tensor_mul(a, b).max_abs_diff(naive_mul(a, b)) <= 1e-12

    def test_associative(self, rng):
        for _ in range(20):
            a, b, c = (random_tensor(rng, 3, 3) for _ in range(3))
            lhs = tensor_mul(tensor_mul(a, b), c)
            rhs = tensor_mul(a, tensor_mul(b, c))
            assert lhs.max_abs_diff(rhs) <= 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            tensor_mul(TruncatedTensor.one(2, 2), TruncatedTensor.one(3, 2))
        with pytest.raises(ValueError):
            tensor_mul(TruncatedTensor.one(2, 2), TruncatedTensor.one(2, 3))

    def test_exp_of_zero_and_increment(self, rng):
        assert tensor_exp(TruncatedTensor.zero(3, 3)).max_abs_diff(TruncatedTensor.one(3, 3)) == 0
        v = rng.normal(size=3)
        e = tensor_exp(TruncatedTensor.from_increment(v, 2))
        np.testing.assert_allclose(e.levels[1], v)
        np.testing.assert_allclose(e.levels[2], np.outer(v, v).ravel() / 2, atol=1e-15)

    def test_exp_rejects_constant(self):
        with pytest.raises(ValueError):
            tensor_exp(TruncatedTensor.one(2, 2))

    def test_inverse_roundtrips(self, rng):
        one = TruncatedTensor.one(3, 3)
        assert group_inverse(one).max_abs_diff(one) == 0
        for _ in range(20):
            a = lie(rng, 3, 3)
            assert group_inverse(tensor_exp(a)).max_abs_diff(tensor_exp(-a)) <= 1e-12
            g = tensor_exp(a)
            assert tensor_mul(g, group_inverse(g)).max_abs_diff(one) <= 1e-12
            g = random_tensor(rng, 3, 3, group=True)
            assert tensor_mul(g, group_inverse(g)).max_abs_diff(one) <= 1e-12
            assert tensor_mul(group_inverse(g), g).max_abs_diff(one) <= 1e-12

    def test_inverse_rejects_non_group(self):
        with pytest.raises(ValueError):
            group_inverse(TruncatedTensor.zero(2, 2))

    def test_vector_roundtrip_and_indexing(self, rng):
        a = random_tensor(rng, 2, 3)
        b = TruncatedTensor.from_vector(a.to_vector(), 2, 3)
        assert b.max_abs_diff(a) == 0
        assert a[(2, 1)] == a.levels[2][2]
        with pytest.raises(KeyError):
            a[(1, 1, 1, 1)]
        with pytest.raises(ValueError):
            TruncatedTensor([[1.0], [1.0]], 2)
