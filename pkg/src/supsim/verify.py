"""Verification kernels: exact field arithmetic, keyed digests and item
tags, majority resolution, and the randomized matrix-product check.

Matrix entries live in the prime field mod p = 2^61 - 1 so that equality
tests are exact; there are no floating-point tolerance questions anywhere.
Digests and item tags are keyed per run and the key never crosses the
adversary-facing API, which models collision resistance and unforgeability
at simulation fidelity without public-key machinery.

Canonical serialization (documented for cross-implementation
reproducibility): a matrix digest is computed over
``b"M1" + rows.to_bytes(8,"little") + cols.to_bytes(8,"little")`` followed
by the entries row-major as little-endian 64-bit words, hashed with keyed
blake2b truncated to 128 bits.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .metrics import Metrics

P = np.uint64((1 << 61) - 1)
_MASK31 = np.uint64((1 << 31) - 1)
_MASK30 = np.uint64((1 << 30) - 1)
_U31 = np.uint64(31)
_U30 = np.uint64(30)
_U61 = np.uint64(61)
_TWO = np.uint64(2)

MODULUS = int(P)


def f_reduce(x: np.ndarray | np.uint64) -> np.ndarray | np.uint64:
    """Reduce values below 2^64 into [0, p)."""
    x = (x & P) + (x >> _U61)
    x = (x & P) + (x >> _U61)
    return np.where(x >= P, x - P, x)


def f_add(a, b):
    return f_reduce(a + b)


def f_mul(a, b):
    """Exact (a*b) mod p on uint64 arrays via 31-bit limb decomposition.

    With a = a1·2^31 + a0 and b = b1·2^31 + b0, the product decomposes into
    a1·b1·2^62 + (a1·b0 + a0·b1)·2^31 + a0·b0; every partial term fits in
    64 bits, and 2^61 ≡ 1 (mod p) turns the shifts into cheap folds.
    """
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    a1, a0 = a >> _U31, a & _MASK31
    b1, b0 = b >> _U31, b & _MASK31
    hi = a1 * b1  # < 2^60; times 2^62 ≡ 2 (mod p)
    mid = a1 * b0 + a0 * b1  # < 2^62
    lo = a0 * b0  # < 2^62
    mid_folded = ((mid & _MASK30) << _U31) + (mid >> _U30)
    lo_folded = (lo & P) + (lo >> _U61)
    return f_reduce(_TWO * hi + f_reduce(mid_folded) + lo_folded)


def _chunked_sum_mod(terms: np.ndarray, axis: int) -> np.ndarray:
    """Sum values < 2^62 along an axis without leaving the field.

    Tree reduction: each pass sums groups of four (safe in 64 bits,
    since the addends are reduced to < 2^61 after the first pass) and
    reduces once, so only a logarithmic number of passes touch the data.
    """
    arr = np.moveaxis(np.asarray(terms, dtype=np.uint64), axis, -1)
    if arr.shape[-1] == 0:
        return np.zeros(arr.shape[:-1], dtype=np.uint64)
    while arr.shape[-1] > 1:
        pad = (-arr.shape[-1]) % 4
        if pad:
            arr = np.concatenate(
                [arr, np.zeros(arr.shape[:-1] + (pad,), dtype=np.uint64)],
                axis=-1,
            )
        grouped = arr.reshape(arr.shape[:-1] + (-1, 4))
        arr = f_reduce(grouped.sum(axis=-1, dtype=np.uint64))
    return arr[..., 0]


def f_matmul(
    a: np.ndarray,
    b: np.ndarray,
    metrics: Metrics | None = None,
    role: str = "worker",
) -> np.ndarray:
    """Schoolbook matrix product over the field; charges r·c·inner madds."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"incompatible shapes {a.shape} x {b.shape}")
    rows, inner = a.shape
    cols = b.shape[1]
    # blocks of the inner dimension keep the broadcast product buffers small
    out = np.zeros((rows, cols), dtype=np.uint64)
    step = max(1, (1 << 22) // max(1, rows * cols))
    for t0 in range(0, inner, step):
        part = f_mul(a[:, t0 : t0 + step, np.newaxis], b[np.newaxis, t0 : t0 + step, :])
        out = f_reduce(out + _chunked_sum_mod(part, axis=1))
    if metrics is not None:
        metrics.charge_comp(role, rows * cols * inner)
    return out


def f_matvec(
    a: np.ndarray,
    x: np.ndarray,
    metrics: Metrics | None = None,
    role: str = "worker",
) -> np.ndarray:
    """Matrix-vector product over the field; charges rows·cols madds."""
    if a.ndim != 2 or x.ndim != 1 or a.shape[1] != x.shape[0]:
        raise ValueError(f"incompatible shapes {a.shape} x {x.shape}")
    prods = f_mul(a, x[np.newaxis, :])
    if metrics is not None:
        metrics.charge_comp(role, a.shape[0] * a.shape[1])
    return _chunked_sum_mod(prods, axis=1)


def masked_column_sum(m: np.ndarray, rbits: np.ndarray) -> np.ndarray:
    """m · r for a 0/1 vector r: a sum of selected columns, no multiplies."""
    sel = m[:, rbits.astype(bool)]
    if sel.shape[1] == 0:
        return np.zeros(m.shape[0], dtype=np.uint64)
    return _chunked_sum_mod(sel, axis=1)


def freivalds(
    a_i: np.ndarray,
    b_j: np.ndarray,
    c: np.ndarray,
    tau: int,
    rng: np.random.Generator,
    metrics: Metrics | None = None,
    role: str = "worker",
) -> bool:
    """Randomized check that a_i · b_j = c, with τ independent repetitions.

    Each repetition draws a fresh 0/1 vector r, computes x = b_j·r,
    y = a_i·x and z = c·r, and compares y to z.  A correct product always
    passes; a wrong one passes a single repetition with probability at most
    1/2, hence at most 2^-τ overall.  Only the y-stage performs
    multiply-adds (the other two stages are masked column sums); cost is
    τ·rows(a_i)·cols(a_i) multiply-adds, far below the full product.
    """
    if tau < 1:
        raise ValueError(f"need at least one repetition, got tau={tau}")
    rows, inner = a_i.shape
    if b_j.shape[0] != inner or b_j.shape[1] != rows or c.shape != (rows, rows):
        raise ValueError(
            f"incompatible shapes a={a_i.shape} b={b_j.shape} c={c.shape}"
        )
    for _ in range(tau):
        r = rng.integers(0, 2, size=rows, dtype=np.uint64)
        if not freivalds_once(a_i, b_j, c, r, metrics, role):
            return False
    return True


def freivalds_once(
    a_i: np.ndarray,
    b_j: np.ndarray,
    c: np.ndarray,
    r: np.ndarray,
    metrics: Metrics | None = None,
    role: str = "worker",
) -> bool:
    """One repetition with a caller-supplied 0/1 vector r."""
    x = masked_column_sum(b_j, r)
    y = f_matvec(a_i, x, metrics, role)
    z = masked_column_sum(c, r)
    return bool(np.array_equal(y, z))


# ---------------------------------------------------------------------------
# Keyed digests


def serialize_matrix(m: np.ndarray) -> bytes:
    if m.ndim != 2:
        raise ValueError("matrix serialization requires a 2-d array")
    rows, cols = m.shape
    return (
        b"M1"
        + rows.to_bytes(8, "little")
        + cols.to_bytes(8, "little")
        + np.ascontiguousarray(m, dtype="<u8").tobytes()
    )


def digest(data: bytes, key: bytes) -> bytes:
    """128-bit keyed digest over a canonical byte serialization."""
    return hashlib.blake2b(data, key=key, digest_size=16).digest()


def majority_digest(ds: list[bytes]) -> bytes | None:
    """Strict-majority value of a digest list, or None if there is none."""
    if not ds:
        return None
    value, count = Counter(ds).most_common(1)[0]
    return value if 2 * count > len(ds) else None


# ---------------------------------------------------------------------------
# Item tags: keyed 128-bit authenticators over (value, index) pairs.


def _mix64(x: np.ndarray) -> np.ndarray:
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@dataclass(frozen=True)
class SigningKey:
    """Run-secret tag key.  Held by the source; never handed to strategies."""

    k0: int
    k1: int

    @classmethod
    def generate(cls, rng: np.random.Generator) -> "SigningKey":
        k = rng.integers(0, 1 << 63, size=2, dtype=np.uint64)
        return cls(int(k[0]) | 1, int(k[1]) | 1)


def sign_items(
    values: np.ndarray, indices: np.ndarray, key: SigningKey
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized 128-bit tags binding each (value, index) pair to the key."""
    v = np.asarray(values, dtype=np.uint64)
    i = np.asarray(indices, dtype=np.uint64)
    t0 = _mix64(v ^ _mix64(i ^ np.uint64(key.k0)))
    t1 = _mix64(v ^ _mix64(i + np.uint64(key.k1)) ^ np.uint64(key.k1))
    return t0, t1


def verify_items(
    values: np.ndarray,
    indices: np.ndarray,
    t0: np.ndarray,
    t1: np.ndarray,
    key: SigningKey,
) -> np.ndarray:
    """Boolean mask of items whose tags are genuine."""
    e0, e1 = sign_items(values, indices, key)
    return (np.asarray(t0, dtype=np.uint64) == e0) & (
        np.asarray(t1, dtype=np.uint64) == e1
    )


def sign_item(value: int, index: int, key: SigningKey) -> tuple[int, int]:
    t0, t1 = sign_items(np.uint64([value]), np.uint64([index]), key)
    return int(t0[0]), int(t1[0])


def verify_item(value: int, index: int, tag: tuple[int, int], key: SigningKey) -> bool:
    ok = verify_items(
        np.uint64([value]), np.uint64([index]),
        np.uint64([tag[0]]), np.uint64([tag[1]]), key,
    )
    return bool(ok[0])
