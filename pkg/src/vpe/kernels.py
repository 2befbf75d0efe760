"""The six benchmark kernels, in integer/fixed-point form.

All kernels are pure functions and deterministic, so any execution target
produces bit-identical results. Accumulations are 64-bit; input elements are
assumed bounded by 2^15 in magnitude, which makes every accumulation
overflow-free for the supported sizes.
"""

from __future__ import annotations

import numpy as np

from .errors import ArgumentError
from .values import ValueKind

_COMPLEMENT = bytes.maketrans(b"ACGT", b"TGCA")
_DNA = b"ACGT"


def _check_dna(seq: bytes, what: str) -> None:
    if seq.translate(None, _DNA):
        raise ArgumentError(f"{what} contains symbols outside ACGT")


def complement(seq: bytes) -> bytes:
    """Complementary nucleotide sequence: A<->T, C<->G."""
    _check_dna(seq, "sequence")
    return seq.translate(_COMPLEMENT)


def dot(a: np.ndarray, b: np.ndarray) -> int:
    """Dot product of two int32 vectors, accumulated in 64 bits."""
    if a.shape != b.shape:
        raise ArgumentError(f"vector lengths differ: {len(a)} vs {len(b)}")
    return int(np.dot(a.astype(np.int64), b.astype(np.int64)))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two int32 matrices, 64-bit elements."""
    if a.shape[1] != b.shape[0]:
        raise ArgumentError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a.astype(np.int64) @ b.astype(np.int64)


def convolve2d(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Valid-mode 2D cross-correlation with a square odd kernel, 64-bit output."""
    kh, kw = kernel.shape
    h, w = image.shape
    if kh != kw:
        raise ArgumentError(f"kernel must be square, got {kh}x{kw}")
    if kh % 2 == 0:
        raise ArgumentError(f"kernel side must be odd, got {kh}")
    if kh > min(h, w):
        raise ArgumentError(f"kernel {kh}x{kw} larger than input {h}x{w}")
    oh, ow = h - kh + 1, w - kw + 1
    img = image.astype(np.int64)
    out = np.zeros((oh, ow), dtype=np.int64)
    for i in range(kh):
        for j in range(kw):
            out += int(kernel[i, j]) * img[i : i + oh, j : j + ow]
    return out


def pattern_count(haystack: bytes, needle: bytes) -> int:
    """Number of (overlapping) occurrences of needle in haystack."""
    if not needle:
        raise ArgumentError("needle must be non-empty")
    _check_dna(haystack, "haystack")
    _check_dna(needle, "needle")
    count = 0
    start = 0
    while True:
        i = haystack.find(needle, start)
        if i < 0:
            return count
        count += 1
        start = i + 1


# Q15 fixed point: int16 with scale 2^-15. Multiplies round half away from
# zero; each butterfly stage scales by 1/2, so the output carries a total
# factor of 1/N. Intermediates are held in int64 and clipped to int16 once at
# the end.

_TWIDDLE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _q15_twiddles(n: int) -> tuple[np.ndarray, np.ndarray]:
    cached = _TWIDDLE_CACHE.get(n)
    if cached is not None:
        return cached
    k = np.arange(n // 2, dtype=np.float64)
    ang = -2.0 * np.pi * k / n
    wr = _round_half_away(np.cos(ang) * 32768.0)
    wi = _round_half_away(np.sin(ang) * 32768.0)
    wr = np.clip(wr, -32768, 32767).astype(np.int64)
    wi = np.clip(wi, -32768, 32767).astype(np.int64)
    _TWIDDLE_CACHE[n] = (wr, wi)
    return wr, wi


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _rshift_round(v: np.ndarray, bits: int) -> np.ndarray:
    # round-half-away-from-zero arithmetic shift on int64 arrays
    half = 1 << (bits - 1)
    return np.sign(v) * ((np.abs(v) + half) >> bits)


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n, dtype=np.int64)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def fft_fixed(x: np.ndarray) -> np.ndarray:
    """Radix-2 DIT FFT on interleaved Q15 complex data, per-stage 1/2 scaling."""
    if len(x) % 2 != 0:
        raise ArgumentError("interleaved complex vector must have even length")
    n = len(x) // 2
    if n == 0 or n & (n - 1) != 0:
        raise ArgumentError(f"transform length must be a power of two, got {n}")
    re = x[0::2].astype(np.int64)
    im = x[1::2].astype(np.int64)
    if n > 1:
        perm = _bit_reverse_indices(n)
        re, im = re[perm], im[perm]
        wr_all, wi_all = _q15_twiddles(n)
        half = 1
        while half < n:
            stride = n // (2 * half)
            wr = wr_all[::stride][:half]
            wi = wi_all[::stride][:half]
            re2 = re.reshape(-1, 2 * half)
            im2 = im.reshape(-1, 2 * half)
            ar, ai = re2[:, :half], im2[:, :half]
            br, bi = re2[:, half:], im2[:, half:]
            tr = _rshift_round(br * wr, 15) - _rshift_round(bi * wi, 15)
            ti = _rshift_round(br * wi, 15) + _rshift_round(bi * wr, 15)
            re = np.concatenate([_rshift_round(ar + tr, 1), _rshift_round(ar - tr, 1)], axis=1).reshape(-1)
            im = np.concatenate([_rshift_round(ai + ti, 1), _rshift_round(ai - ti, 1)], axis=1).reshape(-1)
            half *= 2
    out = np.empty(2 * n, dtype=np.int16)
    out[0::2] = np.clip(re, -32768, 32767).astype(np.int16)
    out[1::2] = np.clip(im, -32768, 32767).astype(np.int16)
    return out


# Benchmark kernel signatures, used by the CLI and the worker's load table.
BENCH_SIGNATURES: dict[str, tuple[list[ValueKind], ValueKind]] = {
    "complement": ([ValueKind.BYTES], ValueKind.BYTES),
    "convolution": ([ValueKind.I32MAT, ValueKind.I32MAT], ValueKind.I64MAT),
    "dot": ([ValueKind.I32VEC, ValueKind.I32VEC], ValueKind.I64),
    "matmul": ([ValueKind.I32MAT, ValueKind.I32MAT], ValueKind.I64MAT),
    "pattern": ([ValueKind.BYTES, ValueKind.BYTES], ValueKind.I64),
    "fft": ([ValueKind.Q15VEC], ValueKind.Q15VEC),
}

BENCH_FUNCTIONS = {
    "complement": complement,
    "convolution": convolve2d,
    "dot": dot,
    "matmul": matmul,
    "pattern": pattern_count,
    "fft": fft_fixed,
}

# Fixed wire ids for the worker's preloaded kernel table.
WIRE_KERNEL_IDS: dict[str, int] = {
    "complement": 1,
    "convolution": 2,
    "dot": 3,
    "matmul": 4,
    "pattern": 5,
    "fft": 6,
}
