import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsilo.hashing import (
    Hash256,
    ahash256,
    dct2d,
    hamming,
    inverse_dct2d,
    is_duplicate_pair,
    phash256,
    resize_bilinear,
    to_luminance,
)

hash_values = st.integers(min_value=0, max_value=(1 << 256) - 1)


# ---------------------------------------------------------------- Hash256 ----

def test_hex_roundtrip_is_64_lowercase_chars():
    h = Hash256((1 << 255) | 0xBEEF)
    text = h.to_hex()
    assert len(text) == 64 and text == text.lower()
    assert Hash256.from_hex(text) == h


@given(hash_values)
def test_hex_roundtrip_random(value):
    h = Hash256(value)
    assert Hash256.from_hex(h.to_hex()) == h


def test_from_hex_rejects_malformed():
    with pytest.raises(ValueError):
        Hash256.from_hex("abc")
    with pytest.raises(ValueError):
        Hash256.from_hex("G" * 64)
    with pytest.raises(ValueError):
        Hash256.from_hex("A" * 64)  # uppercase is rejected


def test_bit_order_row_major_msb_first():
    bits = np.zeros(256, dtype=np.uint8)
    bits[0] = 1  # grid cell (0, 0) must be the most significant bit
    h = Hash256.from_bits(bits)
    assert h.to_hex()[0] == "8"
    assert h.bits()[0, 0] == 1 and h.bits().sum() == 1


@given(hash_values)
def test_bits_roundtrip(value):
    h = Hash256(value)
    assert Hash256.from_bits(h.bits()) == h


# ---------------------------------------------------------------- hamming ----

def test_hamming_trivia():
    a = Hash256(0)
    full = Hash256((1 << 256) - 1)
    assert hamming(a, a) == 0
    assert hamming(a, full) == 256
    assert hamming(a, Hash256(1 << 17)) == 1


@given(hash_values, hash_values, hash_values)
def test_hamming_is_a_metric(x, y, z):
    a, b, c = Hash256(x), Hash256(y), Hash256(z)
    assert hamming(a, b) >= 0
    assert (hamming(a, b) == 0) == (x == y)
    assert hamming(a, b) == hamming(b, a)
    assert hamming(a, c) <= hamming(a, b) + hamming(b, c)


# ------------------------------------------------------------ to_luminance ----

def test_luminance_white_red_gray():
    white = np.full((3, 4, 3), 255.0)
    assert np.allclose(to_luminance(white), 255.0)
    red = np.zeros((2, 2, 3))
    red[..., 0] = 255.0
    assert np.allclose(to_luminance(red), 76.245)  # 0.299 * 255
    gray = np.full((5, 7, 3), 93.0)
    assert np.allclose(to_luminance(gray), 93.0)


def test_luminance_rejects_bad_input():
    with pytest.raises(ValueError):
        to_luminance(np.zeros((0, 4, 3)))
    with pytest.raises(ValueError):
        to_luminance(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        to_luminance(np.full((2, 2, 3), 300.0))


# --------------------------------------------------------- resize_bilinear ----

def test_resize_constant_and_identity():
    const = np.full((9, 5), 42.0)
    assert np.allclose(resize_bilinear(const, 3, 17), 42.0)
    m = np.arange(12, dtype=float).reshape(3, 4)
    assert np.array_equal(resize_bilinear(m, 3, 4), m)


def test_resize_2x2_to_1x1_averages_center():
    m = np.array([[0.0, 255.0], [0.0, 255.0]])
    out = resize_bilinear(m, 1, 1)
    assert out.shape == (1, 1)
    assert out[0, 0] == pytest.approx(127.5)


def test_resize_output_within_input_range():
    rng = np.random.default_rng(5)
    for _ in range(20):
        m = rng.random((rng.integers(1, 30), rng.integers(1, 30))) * 255
        out = resize_bilinear(m, int(rng.integers(1, 40)), int(rng.integers(1, 40)))
        assert out.min() >= m.min() - 1e-9 and out.max() <= m.max() + 1e-9


def test_resize_rejects_zero_output():
    with pytest.raises(ValueError):
        resize_bilinear(np.zeros((4, 4)), 0, 4)


# ----------------------------------------------------------------- ahash ----

def test_ahash_constant_image_all_zero_bits():
    for size in (1, 7, 16, 50):
        h = ahash256(np.full((size, size), 200.0))
        assert h.value == 0


def test_ahash_checkerboard_matches_pattern():
    board = np.indices((16, 16)).sum(axis=0) % 2 * 255.0
    h = ahash256(board)
    # mean is 127.5; the 255 cells are exactly the odd-parity cells
    assert np.array_equal(h.bits(), (board > 127.5).astype(np.uint8))


# ------------------------------------------------------------------- dct ----

def _dct2d_reference(m):
    # Direct evaluation of the orthonormal type-II DCT definition.
    n = m.shape[0]
    out = np.zeros_like(m, dtype=float)
    for k in range(n):
        for l in range(n):
            sk = np.sqrt(1.0 / n) if k == 0 else np.sqrt(2.0 / n)
            sl = np.sqrt(1.0 / n) if l == 0 else np.sqrt(2.0 / n)
            acc = 0.0
            for x in range(n):
                for y in range(n):
                    acc += (
                        m[x, y]
                        * np.cos(np.pi * (2 * x + 1) * k / (2 * n))
                        * np.cos(np.pi * (2 * y + 1) * l / (2 * n))
                    )
            out[k, l] = sk * sl * acc
    return out


def test_dct_2x2_ones_dc_term():
    coeffs = dct2d(np.ones((2, 2)))
    assert coeffs[0, 0] == pytest.approx(2.0, abs=1e-12)
    assert np.allclose(np.delete(coeffs.ravel(), 0), 0.0, atol=1e-12)


def test_dct_matches_direct_definition():
    rng = np.random.default_rng(11)
    for n in (2, 4, 6, 8):
        m = rng.random((n, n)) * 255
        assert np.allclose(dct2d(m), _dct2d_reference(m), atol=1e-9)


def test_dct_roundtrip_and_parseval():
    rng = np.random.default_rng(3)
    for n in (2, 8, 16, 32, 64):
        m = rng.random((n, n)) * 255
        coeffs = dct2d(m)
        assert np.allclose(inverse_dct2d(coeffs), m, rtol=1e-9, atol=1e-9)
        assert np.square(m).sum() == pytest.approx(np.square(coeffs).sum(), rel=1e-9)


def test_dct_rejects_odd_or_rectangular():
    with pytest.raises(ValueError):
        dct2d(np.ones((3, 3)))
    with pytest.raises(ValueError):
        dct2d(np.ones((4, 6)))


# ----------------------------------------------------------------- phash ----

def test_phash_constant_image():
    h = phash256(np.full((30, 30), 100.0))
    # only the DC bit survives: positive DC, all AC coefficients zero
    expected = np.zeros((16, 16), dtype=np.uint8)
    expected[0, 0] = 1
    assert np.array_equal(h.bits(), expected)
    assert phash256(np.zeros((10, 10))).value == 0


def test_hashes_resolution_invariant_for_constant_images():
    for size in (8, 16, 33, 128):
        assert ahash256(np.full((size, size), 77.0)) == ahash256(np.full((16, 16), 77.0))
        assert phash256(np.full((size, size), 77.0)) == phash256(np.full((16, 16), 77.0))


def test_phash_noise_pairs_far_apart():
    rng = np.random.default_rng(17)
    distances = []
    for _ in range(1000):
        a = phash256(rng.random((64, 64)) * 255)
        b = phash256(rng.random((64, 64)) * 255)
        distances.append(hamming(a, b))
    assert min(distances) > 64


def test_hashes_survive_downsampling_on_smooth_images():
    from fedsilo.synthcorpus import downsample_half, smooth_gray_image

    rng_seed = 0
    from fedsilo.datagen import rng_stream

    for i in range(25):
        img = smooth_gray_image(rng_stream(rng_seed, "hash-smooth", client=i), size=256)
        small = downsample_half(img)
        assert hamming(ahash256(img.astype(float)), ahash256(small.astype(float))) <= 5
        assert hamming(phash256(img.astype(float)), phash256(small.astype(float))) <= 5


# ----------------------------------------------------- is_duplicate_pair ----

class _Rec:
    def __init__(self, ahash, phash):
        self.ahash = ahash
        self.phash = phash


def _with_flips(value, flips):
    for bit in flips:
        value ^= 1 << bit
    return Hash256(value)


def test_duplicate_predicate_boundary():
    base = Hash256((1 << 256) - (1 << 128))
    a = _Rec(base, base)
    five = _Rec(_with_flips(base.value, range(5)), _with_flips(base.value, range(100, 105)))
    six = _Rec(_with_flips(base.value, range(6)), base)
    assert is_duplicate_pair(a, five, threshold=5)       # distances (5, 5)
    assert not is_duplicate_pair(a, six, threshold=5)    # distances (6, 0)
    assert is_duplicate_pair(a, a, threshold=0)          # identical
    assert is_duplicate_pair(five, a, threshold=5)       # symmetric


def test_duplicate_predicate_rejects_negative_threshold():
    a = _Rec(Hash256(0), Hash256(0))
    with pytest.raises(ValueError):
        is_duplicate_pair(a, a, threshold=-1)


@settings(max_examples=25)
@given(hash_values, hash_values, hash_values, hash_values)
def test_duplicate_predicate_symmetric(a1, p1, a2, p2):
    r1, r2 = _Rec(Hash256(a1), Hash256(p1)), _Rec(Hash256(a2), Hash256(p2))
    assert is_duplicate_pair(r1, r2) == is_duplicate_pair(r2, r1)
