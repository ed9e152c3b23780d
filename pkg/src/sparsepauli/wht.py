"""Walsh-Hadamard transforms in natural and symplectic ordering.

In natural ordering the kernel is ``(-1)^{i.j}`` with the ordinary dot product.
In symplectic ordering an index of ``k`` bits is read as an ``(x|z)`` pair of
``k/2`` bits each and the kernel is ``(-1)^{<i,j>}`` with the symplectic form,
so a rate vector indexed by Pauli labels maps to eigenvalues indexed by the
same labels.
"""

from __future__ import annotations

import numpy as np

from .pauli import swap_halves_array

ORDERINGS = ("natural", "symplectic")


def _log2_length(m: int) -> int:
    k = m.bit_length() - 1
    if m < 1 or (1 << k) != m:
        raise ValueError(f"length {m} is not a power of two")
    return k


def half_swap_permutation(k: int) -> np.ndarray:
    """Index map j -> J j on k-bit indices (an involution)."""
    if k % 2:
        raise ValueError("symplectic ordering needs an even number of index bits")
    return swap_halves_array(np.arange(1 << k, dtype=np.uint64), k // 2).astype(np.intp)


def _kernel_parity(i: np.ndarray, j: np.ndarray, k: int, ordering: str) -> np.ndarray:
    if ordering == "symplectic":
        i = swap_halves_array(i, k // 2)
    return np.bitwise_count(i[:, None] & j[None, :]) & 1


def wht_brute(v, ordering: str = "symplectic", rows=None) -> np.ndarray:
    """Quadratic-time transform straight from the definition.

    ``rows`` optionally restricts the output to a subset of indices, which keeps
    the oracle usable on long vectors.
    """
    v = np.asarray(v, dtype=np.float64)
    k = _log2_length(v.size)
    if ordering not in ORDERINGS:
        raise ValueError(f"unknown ordering {ordering!r}")
    if ordering == "symplectic" and k % 2:
        raise ValueError("symplectic ordering needs an even number of index bits")
    out_idx = np.arange(v.size, dtype=np.uint64) if rows is None else np.asarray(rows, dtype=np.uint64)
    j = np.arange(v.size, dtype=np.uint64)
    out = np.empty(out_idx.size)
    chunk = max(1, (1 << 22) // v.size)
    for s in range(0, out_idx.size, chunk):
        par = _kernel_parity(out_idx[s:s + chunk], j, k, ordering)
        out[s:s + chunk] = (1.0 - 2.0 * par) @ v
    return out


def _butterfly(a: np.ndarray) -> None:
    """In-place natural-order transform along the last axis."""
    m = a.shape[-1]
    lead = a.shape[:-1]
    h = 1
    while h < m:
        view = a.reshape(*lead, m // (2 * h), 2, h)
        lo = view[..., 0, :].copy()
        hi = view[..., 1, :]
        view[..., 0, :] += hi
        np.subtract(lo, hi, out=view[..., 1, :])
        h *= 2


def wht_fast_inplace(v: np.ndarray, ordering: str = "symplectic") -> np.ndarray:
    """Fast O(k 2^k) transform along the last axis.

    The natural butterfly runs in place on ``v`` when it is a contiguous float64
    array.  Symplectic ordering is the natural result read through the half-swap
    permutation, which needs one gather, so the returned array is a new buffer in
    that case.
    """
    if ordering not in ORDERINGS:
        raise ValueError(f"unknown ordering {ordering!r}")
    if not (isinstance(v, np.ndarray) and v.dtype == np.float64 and v.flags.c_contiguous):
        v = np.ascontiguousarray(v, dtype=np.float64)
    k = _log2_length(v.shape[-1])
    _butterfly(v)
    if ordering == "symplectic":
        return v[..., half_swap_permutation(k)]
    return v


def wht(v, ordering: str = "symplectic") -> np.ndarray:
    """Out-of-place fast transform."""
    return wht_fast_inplace(np.array(v, dtype=np.float64, copy=True), ordering)


def inverse_wht(lam, ordering: str = "symplectic") -> np.ndarray:
    """Inverse transform: the forward transform scaled by 1/N."""
    out = wht(lam, ordering)
    out /= out.shape[-1]
    return out
