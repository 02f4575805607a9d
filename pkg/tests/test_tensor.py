import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gecko.tensor import WORD_BITS, BitMatrix, OpCounter, SeededRng, matmul, pack_signs, unpack_signs, words_per_row


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def random_signs(rng, rows, cols):
    return np.where(rng.random((rows, cols)) < 0.5, -1.0, 1.0)


def test_pack_all_ones_and_all_minus():
    assert int(pack_signs(np.ones((1, 4))).words[0, 0]) == 0b1111
    assert int(pack_signs(-np.ones((1, 4))).words[0, 0]) == 0


def test_unpack_direct_decode():
    b = BitMatrix(1, 4, np.array([[0b0101]], dtype=np.uint64))
    np.testing.assert_array_equal(unpack_signs(b), [[1, -1, 1, -1]])
    zero = BitMatrix(2, 5, np.zeros((2, 1), dtype=np.uint64))
    np.testing.assert_array_equal(unpack_signs(zero), -np.ones((2, 5)))


def test_pack_rejects_non_sign_entries():
    with pytest.raises(ValueError, match="0.5"):
        pack_signs(np.array([[1.0, 0.5]]))
    with pytest.raises(ValueError):
        pack_signs(np.array([[0.0]]))


def test_word_layout_and_padding():
    m = np.ones((3, 70))
    b = pack_signs(m)
    assert b.words.shape == (3, words_per_row(70)) == (3, 2)
    assert int(b.words[0, 1]) == (1 << (70 - WORD_BITS)) - 1
    assert not np.any(b.words[:, -1] & b.padding_mask()[-1])


def test_constructor_clears_padding():
    b = BitMatrix(1, 3, np.array([[0xFF]], dtype=np.uint64))
    assert int(b.words[0, 0]) == 0b111
    np.testing.assert_array_equal(unpack_signs(b), [[1, 1, 1]])


def test_bitmatrix_is_immutable():
    b = pack_signs(np.ones((2, 2)))
    with pytest.raises(ValueError):
        b.words[0, 0] = 0


@settings(max_examples=300, deadline=None)
@given(rows=st.integers(0, 6), cols=st.integers(1, 140), seed=st.integers(0, 2**32 - 1))
def test_pack_unpack_round_trip(rows, cols, seed):
    m = random_signs(np.random.default_rng(seed), rows, cols)
    b = pack_signs(m)
    np.testing.assert_array_equal(unpack_signs(b), m)
    assert not np.any(b.words & b.padding_mask())


@settings(max_examples=200, deadline=None)
@given(rows=st.integers(1, 5), cols=st.integers(1, 140), seed=st.integers(0, 2**32 - 1))
def test_unpack_pack_round_trip(rows, cols, seed):
    rng = np.random.default_rng(seed)
    words = rng.integers(0, 2**64, (rows, words_per_row(cols)), dtype=np.uint64)
    b = BitMatrix(rows, cols, words)
    assert pack_signs(unpack_signs(b)) == b


def test_matmul_hand_cases():
    m = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(matmul(np.eye(2), m), m)
    np.testing.assert_array_equal(matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]])), [[11.0]])


def test_matmul_against_naive_oracle():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 3))
    np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), rtol=1e-12, atol=0)


@pytest.mark.parametrize("n", [1, 16, 64])
def test_matmul_naive_agreement_up_to_64(n):
    rng = np.random.default_rng(n)
    a, b = rng.normal(size=(n, n)), rng.normal(size=(n, n))
    ref = naive_matmul(a, b)
    got = matmul(a, b)
    scale = np.abs(a) @ np.abs(b)
    assert np.all(np.abs(got - ref) <= 1e-12 * scale)


def test_matmul_counter_and_mismatch():
    c = OpCounter()
    matmul(np.ones((4, 3)), np.ones((3, 5)), c)
    assert c.macs == 60
    with pytest.raises(ValueError, match="mismatch"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_seeded_rng_reproducible():
    a, b = SeededRng(42), SeededRng(42)
    np.testing.assert_array_equal(a.random(10_000), b.random(10_000))
    assert not np.array_equal(SeededRng(1).random(10), SeededRng(2).random(10))
    np.testing.assert_array_equal(a.spawn(3).random(5), b.spawn(3).random(5))
