"""Pauli labels, GF(2) bit matrices and the symplectic form.

A Pauli on ``n`` qubits is stored as a ``2n``-bit integer.  The low ``n`` bits
hold the x-half (bit ``i`` is qubit ``i``) and the high ``n`` bits hold the
z-half.  Qubit 0 is the leftmost character of a Pauli word, so ``"XZ"`` has
x-half ``10`` and z-half ``01`` and renders as ``"10|01"`` in bit-string form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

_CHAR_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_CHAR = {v: k for k, v in _CHAR_BITS.items()}


class DimensionError(ValueError):
    """Raised when labels or matrices have incompatible sizes."""


def _parity(x: int) -> int:
    return x.bit_count() & 1


def swap_halves(bits: int, n: int) -> int:
    """Exchange the x- and z-halves of a 2n-bit label (the map ``a -> J a``)."""
    mask = (1 << n) - 1
    return ((bits & mask) << n) | ((bits >> n) & mask)


def swap_halves_array(bits: np.ndarray, n: int) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint64)
    mask = np.uint64((1 << n) - 1)
    sh = np.uint64(n)
    return ((bits & mask) << sh) | ((bits >> sh) & mask)


@dataclass(frozen=True, order=True)
class PauliLabel:
    """A Pauli operator modulo phase, as a 2n-bit integer."""

    bits: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise DimensionError("n must be at least 1")
        if not 0 <= self.bits < (1 << (2 * self.n)):
            raise DimensionError(f"label {self.bits} does not fit in {2 * self.n} bits")

    @property
    def x(self) -> int:
        return self.bits & ((1 << self.n) - 1)

    @property
    def z(self) -> int:
        return self.bits >> self.n

    def word(self) -> str:
        return label_to_string(self.bits, self.n)

    def xz(self) -> str:
        return label_to_xz(self.bits, self.n)

    def __str__(self) -> str:
        return self.word()


def label_from_string(s: str) -> PauliLabel:
    """Parse a Pauli word such as ``"IXYZ"`` or a bit string such as ``"10|01"``."""
    s = s.strip()
    if "|" in s:
        xs, zs = s.split("|")
        if len(xs) != len(zs) or not xs or set(xs + zs) - {"0", "1"}:
            raise ValueError(f"malformed x|z label {s!r}")
        n = len(xs)
        bits = 0
        for q in range(n):
            bits |= int(xs[q]) << q
            bits |= int(zs[q]) << (q + n)
        return PauliLabel(bits, n)
    if not s:
        raise ValueError("empty Pauli word")
    n = len(s)
    bits = 0
    for q, ch in enumerate(s.upper()):
        try:
            bx, bz = _CHAR_BITS[ch]
        except KeyError:
            raise ValueError(f"invalid Pauli character {ch!r} in {s!r}") from None
        bits |= bx << q
        bits |= bz << (q + n)
    return PauliLabel(bits, n)


def parse_label(s: str, n: int | None = None) -> int:
    """Parse either text format to raw bits, checking the qubit count if given."""
    lab = label_from_string(s)
    if n is not None and lab.n != n:
        raise DimensionError(f"label {s!r} has {lab.n} qubits, expected {n}")
    return lab.bits


def label_to_string(bits: int, n: int) -> str:
    return "".join(
        _BITS_CHAR[((bits >> q) & 1, (bits >> (q + n)) & 1)] for q in range(n)
    )


def label_to_xz(bits: int, n: int) -> str:
    xs = "".join(str((bits >> q) & 1) for q in range(n))
    zs = "".join(str((bits >> (q + n)) & 1) for q in range(n))
    return f"{xs}|{zs}"


def _bits_and_n(a, b) -> tuple[int, int, int]:
    if isinstance(a, PauliLabel) and isinstance(b, PauliLabel):
        if a.n != b.n:
            raise DimensionError(f"qubit counts differ: {a.n} vs {b.n}")
        return a.bits, b.bits, a.n
    raise TypeError("expected two PauliLabel values; use symplectic_bits for raw ints")


def symplectic_product(a: PauliLabel, b: PauliLabel) -> int:
    """Return 0 if the two Paulis commute and 1 if they anticommute."""
    x, y, n = _bits_and_n(a, b)
    return symplectic_bits(x, y, n)


def symplectic_bits(a: int, b: int, n: int) -> int:
    return _parity(swap_halves(a, n) & b)


def symplectic_array(a, b, n: int) -> np.ndarray:
    """Vectorised symplectic product over broadcastable uint64 arrays (n <= 32)."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    return (np.bitwise_count(swap_halves_array(a, n) & b) & 1).astype(np.uint8)


def weight(a: PauliLabel | int, n: int | None = None) -> int:
    """Number of qubits on which the Pauli acts non-trivially."""
    if isinstance(a, PauliLabel):
        bits, n = a.bits, a.n
    else:
        bits = int(a)
    mask = (1 << n) - 1
    return ((bits & mask) | (bits >> n)).bit_count()


def support_pattern(bits: int, n: int) -> int:
    """n-bit mask of qubits on which the Pauli is not the identity."""
    return (bits & ((1 << n) - 1)) | (bits >> n)


def pauli_matrix(bits: int, n: int) -> np.ndarray:
    """Dense matrix i^{a_x.a_z} X^{a_x} Z^{a_z}, qubit 0 as the leftmost factor."""
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    Z = np.array([[1, 0], [0, -1]], dtype=complex)
    out = np.ones((1, 1), dtype=complex)
    for q in range(n):
        bx = (bits >> q) & 1
        bz = (bits >> (q + n)) & 1
        f = np.linalg.matrix_power(X, bx) @ np.linalg.matrix_power(Z, bz)
        if bx and bz:
            f = 1j * f
        out = np.kron(out, f)
    return out


@dataclass(frozen=True)
class Gf2Matrix:
    """Dense GF(2) matrix with rows packed into Python ints (bit j = column j)."""

    rows: tuple[int, ...]
    ncols: int

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(int(r) for r in self.rows))
        lim = 1 << self.ncols
        for r in self.rows:
            if not 0 <= r < lim:
                raise DimensionError(f"row {r} wider than {self.ncols} columns")

    @property
    def nrows(self) -> int:
        return len(self.rows)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @classmethod
    def identity(cls, k: int) -> "Gf2Matrix":
        return cls(tuple(1 << i for i in range(k)), k)

    @classmethod
    def zeros(cls, r: int, c: int) -> "Gf2Matrix":
        return cls((0,) * r, c)

    @classmethod
    def from_array(cls, a) -> "Gf2Matrix":
        a = np.asarray(a, dtype=np.uint8) & 1
        if a.ndim != 2:
            raise DimensionError("expected a 2-D array")
        rows = tuple(int(sum(int(v) << j for j, v in enumerate(row))) for row in a)
        return cls(rows, a.shape[1])

    @classmethod
    def from_columns(cls, cols: Sequence[int], nrows: int) -> "Gf2Matrix":
        return cls(tuple(cols), nrows).T

    def to_array(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.uint8)
        for i, r in enumerate(self.rows):
            for j in range(self.ncols):
                out[i, j] = (r >> j) & 1
        return out

    @property
    def T(self) -> "Gf2Matrix":
        cols = []
        for j in range(self.ncols):
            c = 0
            for i, r in enumerate(self.rows):
                c |= ((r >> j) & 1) << i
            cols.append(c)
        return Gf2Matrix(tuple(cols), self.nrows)

    def columns(self) -> tuple[int, ...]:
        return self.T.rows

    def matvec(self, v: int) -> int:
        """Product with a column vector packed as an int; result packed the same way."""
        out = 0
        for i, r in enumerate(self.rows):
            out |= _parity(r & v) << i
        return out

    def __matmul__(self, other: "Gf2Matrix") -> "Gf2Matrix":
        return gf2_matmul(self, other)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Gf2Matrix)
            and self.ncols == other.ncols
            and self.rows == other.rows
        )

    def __hash__(self) -> int:
        return hash((self.rows, self.ncols))

    def rank(self) -> int:
        return gf2_rank(self)

    def row_strings(self) -> list[str]:
        return ["".join(str((r >> j) & 1) for j in range(self.ncols)) for r in self.rows]

    @classmethod
    def from_row_strings(cls, rows: Iterable[str]) -> "Gf2Matrix":
        rows = list(rows)
        if not rows:
            raise DimensionError("cannot infer width of an empty matrix")
        width = len(rows[0])
        packed = []
        for s in rows:
            if len(s) != width or set(s) - {"0", "1"}:
                raise ValueError(f"malformed bit row {s!r}")
            packed.append(sum(int(ch) << j for j, ch in enumerate(s)))
        return cls(tuple(packed), width)


def gf2_matmul(A: Gf2Matrix, B: Gf2Matrix) -> Gf2Matrix:
    if A.ncols != B.nrows:
        raise DimensionError(f"cannot multiply {A.shape} by {B.shape}")
    rows = []
    for r in A.rows:
        acc = 0
        k = 0
        while r:
            if r & 1:
                acc ^= B.rows[k]
            r >>= 1
            k += 1
        rows.append(acc)
    return Gf2Matrix(tuple(rows), B.ncols)


def _echelon(rows: Sequence[int]) -> list[int]:
    """Reduced basis of the row space (xor-basis keyed by leading bit)."""
    basis: dict[int, int] = {}
    for r in rows:
        while r:
            lead = r.bit_length() - 1
            if lead in basis:
                r ^= basis[lead]
            else:
                basis[lead] = r
                break
    return list(basis.values())


def gf2_rank(A: Gf2Matrix) -> int:
    return len(_echelon(A.rows))


def gf2_solve_nullspace(A: Gf2Matrix) -> list[int]:
    """Basis of {x : A x = 0}, each vector packed as an int of A.ncols bits."""
    rows = list(A.rows)
    ncols = A.ncols
    pivots = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(rows)) if (rows[i] >> c) & 1), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        for i in range(len(rows)):
            if i != r and (rows[i] >> c) & 1:
                rows[i] ^= rows[r]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        v = 1 << f
        for i, p in enumerate(pivots):
            if (rows[i] >> f) & 1:
                v |= 1 << p
        basis.append(v)
    return basis


def symplectic_form(n: int) -> Gf2Matrix:
    """The 2n x 2n matrix J_n that swaps x- and z-halves."""
    return Gf2Matrix(tuple(1 << ((i + n) % (2 * n)) for i in range(2 * n)), 2 * n)


def bin_form(b: int) -> Gf2Matrix:
    """Bilinear form used on bin indices: the half swap for even b, identity for odd b."""
    if b % 2 == 0:
        return symplectic_form(b // 2)
    return Gf2Matrix.identity(b)


def bin_form_apply(v: int, b: int) -> int:
    return swap_halves(v, b // 2) if b % 2 == 0 else v


def is_stabilizer_group(S: Gf2Matrix) -> bool:
    """True iff the rows of S (each a 2n-bit label) commute pairwise and are independent."""
    if S.ncols % 2:
        return False
    n = S.ncols // 2
    rows = S.rows
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            if symplectic_bits(rows[i], rows[j], n):
                return False
    return gf2_rank(S) == len(rows)


def span(generators: Sequence[int]) -> np.ndarray:
    """All 2^k XOR combinations of the generators, ordered by combination index."""
    out = np.zeros(1, dtype=np.uint64)
    for g in generators:
        out = np.concatenate([out, out ^ np.uint64(g)])
    return out
