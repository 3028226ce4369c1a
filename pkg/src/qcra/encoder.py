"""Systematic encoding by back-substitution through the accumulator.

Codewords are laid out ``[message (K) | parity (M)]`` and held as ``uint8``
arrays of 0/1. Extended codes append their extra parity bits after ``M``.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .codebook import QcRaCode


def _as_bits(word: ArrayLike, length: int, what: str) -> NDArray[np.uint8]:
    arr = np.asarray(word)
    if arr.ndim != 1 or arr.size != length:
        raise ValueError(f"{what} must have length {length}, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if np.any((arr != 0) & (arr != 1)):
            raise ValueError(f"{what} must contain only 0/1")
        arr = arr.astype(np.uint8)
    return arr


def check_sums(code: QcRaCode, msg: NDArray[np.uint8]) -> NDArray[np.uint8]:
    """Per-row XOR of the message bits selected by ``H1``."""
    return (code.h1 @ msg.astype(np.int32) & 1).astype(np.uint8)


def encode(code, msg: ArrayLike) -> NDArray[np.uint8]:
    """Encode ``msg`` (length ``k``) into a codeword of length ``code.n``.

    Parity follows ``p_0 = s_0`` and ``p_i = p_{i-1} ^ s_i`` where ``s_i`` is
    the XOR of the message bits on row ``i`` of ``H1``. Extended codes
    (anything with a ``base`` attribute) get their extra parity bits appended.
    """
    base = getattr(code, "base", None)
    if base is not None:
        u = _as_bits(msg, code.k, "message")
        return np.concatenate([encode(base, u), code.extra_parity(u)])
    u = _as_bits(msg, code.k, "message")
    parity = np.bitwise_xor.accumulate(check_sums(code, u))
    return np.concatenate([u, parity])


def syndrome(code, word: ArrayLike) -> NDArray[np.uint8]:
    c = _as_bits(word, code.n, "word")
    return (code.parity_check_matrix @ c.astype(np.int32) & 1).astype(np.uint8)


def syndrome_weight(code, word: ArrayLike) -> int:
    """Number of unsatisfied parity checks."""
    return int(syndrome(code, word).sum())


def pack_bits(bits: ArrayLike) -> bytes:
    """Pack 0/1 values into bytes, least-significant bit first."""
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()


def unpack_bits(data: bytes, length: int) -> NDArray[np.uint8]:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if bits.size < length:
        raise ValueError(f"need {length} bits, buffer holds {bits.size}")
    return bits[:length]
