"""256-bit perceptual image hashes (average hash and DCT hash) and the
dual-hash near-duplicate predicate.

All functions are pure: they take luminance matrices (2-D float arrays with
values in [0, 255]) and return new values. Bit order everywhere is row-major
over the 16x16 grid, most-significant bit first, so a hash serializes to 64
lowercase hex characters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HASH_BITS = 256
GRID_SIZE = 16        # ahash grid; also the low-frequency block kept by phash
PHASH_DCT_SIZE = 64   # input resolution for the DCT stage
DEFAULT_DUP_THRESHOLD = 5

# ITU-R BT.601 luma weights
_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

_HEX_DIGITS = frozenset("0123456789abcdef")


@dataclass(frozen=True)
class Hash256:
    """A 256-bit fingerprint stored as a non-negative int (MSB = bit (0,0))."""

    value: int

    def __post_init__(self) -> None:
        if not 0 <= self.value < (1 << HASH_BITS):
            raise ValueError("Hash256 value must fit in 256 bits")

    @classmethod
    def from_bits(cls, bits: np.ndarray) -> "Hash256":
        """Pack a row-major sequence of 256 0/1 values, first bit most significant."""
        flat = np.asarray(bits).ravel()
        if flat.size != HASH_BITS:
            raise ValueError(f"expected {HASH_BITS} bits, got {flat.size}")
        packed = np.packbits(flat.astype(bool))
        return cls(int.from_bytes(packed.tobytes(), "big"))

    @classmethod
    def from_hex(cls, text: str) -> "Hash256":
        if len(text) != 64 or not set(text) <= _HEX_DIGITS:
            raise ValueError(f"hash must be 64 lowercase hex characters, got {text!r}")
        return cls(int(text, 16))

    def to_hex(self) -> str:
        return format(self.value, "064x")

    def bits(self) -> np.ndarray:
        """Unpack to a (16, 16) uint8 array of 0/1 values."""
        raw = np.frombuffer(self.value.to_bytes(HASH_BITS // 8, "big"), dtype=np.uint8)
        return np.unpackbits(raw).reshape(GRID_SIZE, GRID_SIZE)


def to_luminance(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luminance of an (H, W, 3) image with channel values in [0, 255]."""
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) RGB array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must have at least one pixel")
    if not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 255:
        raise ValueError("channel values must be finite and within [0, 255]")
    return arr @ _LUMA_WEIGHTS


def _check_luminance(m: np.ndarray) -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D luminance matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 255:
        raise ValueError("luminance values must be finite and within [0, 255]")
    return arr


def _axis_coords(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Pixel-center alignment: output sample i lands at (i + 0.5) * in/out - 0.5,
    # clamped to the border.
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(m: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    """Bilinear resize with pixel-center alignment and border clamping."""
    arr = _check_luminance(m)
    if out_rows < 1 or out_cols < 1:
        raise ValueError("output dimensions must be at least 1")
    if arr.shape == (out_rows, out_cols):
        return arr.copy()
    rlo, rhi, rfrac = _axis_coords(arr.shape[0], out_rows)
    clo, chi, cfrac = _axis_coords(arr.shape[1], out_cols)
    # a + (b - a) * f form so flat regions interpolate bit-exactly
    top = arr[rlo][:, clo]
    top = top + (arr[rlo][:, chi] - top) * cfrac
    bot = arr[rhi][:, clo]
    bot = bot + (arr[rhi][:, chi] - bot) * cfrac
    return top + (bot - top) * rfrac[:, None]


def ahash256(m: np.ndarray) -> Hash256:
    """Average hash: 16x16 downscale, one bit per cell, set iff strictly above the mean."""
    small = resize_bilinear(m, GRID_SIZE, GRID_SIZE)
    return Hash256.from_bits(small > small.mean())


_DCT_BASIS: dict[int, np.ndarray] = {}


def _dct_matrix(n: int) -> np.ndarray:
    # Orthonormal type-II DCT basis; D @ D.T = I so the inverse is the transpose.
    if n not in _DCT_BASIS:
        k = np.arange(n)[:, None]
        x = np.arange(n)[None, :]
        basis = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * x + 1) * k / (2.0 * n))
        basis[0, :] = np.sqrt(1.0 / n)
        _DCT_BASIS[n] = basis
    return _DCT_BASIS[n]


def dct2d(m: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D type-II DCT of a square, even-sized matrix."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] % 2 != 0:
        raise ValueError(f"dct2d requires a square matrix of even size, got shape {arr.shape}")
    basis = _dct_matrix(arr.shape[0])
    return basis @ arr @ basis.T


def inverse_dct2d(coeffs: np.ndarray) -> np.ndarray:
    arr = np.asarray(coeffs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] % 2 != 0:
        raise ValueError(f"inverse_dct2d requires a square matrix of even size, got shape {arr.shape}")
    basis = _dct_matrix(arr.shape[0])
    return basis.T @ arr @ basis


def phash256(m: np.ndarray) -> Hash256:
    """DCT hash: 64x64 downscale, keep the 16x16 low-frequency block, threshold
    every coefficient against the median of the block excluding the DC term."""
    small = resize_bilinear(m, PHASH_DCT_SIZE, PHASH_DCT_SIZE)
    block = dct2d(small)[:GRID_SIZE, :GRID_SIZE].copy()
    # The separable transform leaves ~1e-13 residue where the exact
    # coefficient is zero (flat images); snap it so those bits stay
    # deterministic.
    peak = np.abs(block).max()
    if peak > 0:
        block[np.abs(block) < 1e-9 * peak] = 0.0
    median = np.median(block.ravel()[1:])
    return Hash256.from_bits(block > median)


def hamming(a: Hash256, b: Hash256) -> int:
    """Number of differing bit positions, in [0, 256]."""
    return (a.value ^ b.value).bit_count()


def is_duplicate_pair(a, b, threshold: int = DEFAULT_DUP_THRESHOLD) -> bool:
    """Dual-hash near-duplicate predicate over two records carrying ``ahash``
    and ``phash`` attributes: both Hamming distances must be <= threshold."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    return (
        hamming(a.ahash, b.ahash) <= threshold
        and hamming(a.phash, b.phash) <= threshold
    )
