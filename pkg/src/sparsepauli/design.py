"""Subsampling matrices, offset sets and local-stabilizer experiment designs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .pauli import (
    Gf2Matrix,
    bin_form_apply,
    gf2_rank,
    is_stabilizer_group,
    label_from_string,
    label_to_xz,
    parse_label,
    span,
    swap_halves,
)

# The five mutually unbiased two-qubit stabilizer groups, as generator pairs.
# The third elements are XX, YY, ZZ, XY and YX.
PAIR_GROUPS: tuple[tuple[str, str], ...] = (
    ("IX", "XI"),
    ("IY", "YI"),
    ("ZI", "IZ"),
    ("ZX", "YZ"),
    ("ZY", "XZ"),
)
SINGLE_GROUPS: tuple[tuple[str], ...] = (("X",), ("Y",), ("Z",))

KINDS = ("random", "coded", "basis")


def _rand_bits(rng: np.random.Generator, width: int, count: int) -> list[int]:
    mask = (1 << width) - 1
    return [int(v) & mask for v in rng.bit_generator.random_raw(count).tolist()]


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# ---------------------------------------------------------------- offsets


@dataclass(frozen=True, eq=False)
class OffsetSet:
    """Ordered offsets for one subsampling group.

    Layout is ``random`` entries, then ``coded`` entries, then ``basis`` entries.
    ``replicas`` tags repeated measurements of an identical offset so they get
    independent oracle noise.
    """

    n: int
    labels: np.ndarray
    kinds: tuple[str, ...]
    replicas: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.uint64)
        reps = np.asarray(self.replicas, dtype=np.int64)
        if labels.ndim != 1 or labels.shape != reps.shape or len(self.kinds) != labels.size:
            raise ValueError("offset labels, kinds and replicas must align")
        if any(k not in KINDS for k in self.kinds):
            raise ValueError(f"unknown offset kind in {set(self.kinds)}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "replicas", reps)

    @property
    def P(self) -> int:
        return int(self.labels.size)

    @property
    def P1(self) -> int:
        return self.kinds.count("random")

    @property
    def P2(self) -> int:
        return self.kinds.count("coded")

    def positions(self, kind: str) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.kinds) if k == kind], dtype=np.intp)

    @cached_property
    def basis_positions(self) -> tuple[int, np.ndarray]:
        """Position of the zero basis offset and of each e_i (-1 when absent)."""
        zero = -1
        pos = np.full(2 * self.n, -1, dtype=np.intp)
        for t in self.positions("basis"):
            v = int(self.labels[t])
            if v == 0:
                zero = int(t) if zero < 0 else zero
            elif v & (v - 1) == 0:
                i = v.bit_length() - 1
                if pos[i] < 0:
                    pos[i] = t
        return zero, pos

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, OffsetSet)
            and self.n == other.n
            and self.kinds == other.kinds
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.replicas, other.replicas)
        )


def basis_offsets(n: int, qubits: Sequence[int] | None = None) -> list[int]:
    """Zero followed by the unit offsets on the given qubits (x-bits first, then z-bits)."""
    qs = range(n) if qubits is None else sorted(qubits)
    return [0] + [1 << q for q in qs] + [1 << (q + n) for q in qs]


def make_offsets(n: int, P1: int, code=None, include_basis: bool = False, seed=0) -> OffsetSet:
    """Random offsets, then rows of the offset code, then optionally the basis offsets."""
    if P1 < 1:
        raise ValueError("at least one random offset is required")
    rng = _rng(seed)
    labels = _rand_bits(rng, 2 * n, P1)
    kinds = ["random"] * P1
    reps = [0] * P1
    if code is not None:
        if code.n != n:
            raise ValueError(f"code is for {code.n} qubits, design has {n}")
        labels += list(code.rows)
        kinds += ["coded"] * len(code.rows)
        reps += list(code.replicas)
    if include_basis:
        b = basis_offsets(n)
        labels += b
        kinds += ["basis"] * len(b)
        reps += [0] * len(b)
    return OffsetSet(n, np.array(labels, dtype=np.uint64), tuple(kinds), np.array(reps))


# ---------------------------------------------------------------- subsampling


def random_subsampling_matrix(n: int, b: int, seed) -> Gf2Matrix:
    """Uniform 2n x b matrix of full column rank, by rejection."""
    if not 0 < b <= 2 * n:
        raise ValueError(f"need 0 < b <= 2n, got b={b}, n={n}")
    rng = _rng(seed)
    while True:
        cols = _rand_bits(rng, 2 * n, b)
        if len(set(cols)) == b and gf2_rank(Gf2Matrix(tuple(cols), 2 * n)) == b:
            return Gf2Matrix.from_columns(cols, 2 * n)


def _bin_perm(k: int, b: int) -> int:
    """Index of the unit vector K_b e_k."""
    if b % 2:
        return k
    h = b // 2
    return (k + h) % b


@dataclass(frozen=True, eq=False)
class GroupDesign:
    """One subsampling group: hash matrix M (2n x b) and its offsets."""

    n: int
    M: Gf2Matrix
    offsets: OffsetSet
    physical: bool = False

    def __post_init__(self):
        if self.M.nrows != 2 * self.n:
            raise ValueError(f"M has {self.M.nrows} rows, expected {2 * self.n}")
        if gf2_rank(self.M) != self.M.ncols:
            raise ValueError("subsampling matrix is not full column rank")

    @property
    def b(self) -> int:
        return self.M.ncols

    @property
    def B(self) -> int:
        return 1 << self.b

    @cached_property
    def hash_columns(self) -> np.ndarray:
        """Columns of M as labels; bin bit i of M^T m is the dot parity with column i."""
        return np.array(self.M.columns(), dtype=np.uint64)

    @cached_property
    def coset_columns(self) -> list[int]:
        """Columns of M' = J_n M K_b: the generators of the queried subspace."""
        cols = self.M.columns()
        return [swap_halves(cols[_bin_perm(k, self.b)], self.n) for k in range(self.b)]

    @cached_property
    def coset(self) -> np.ndarray:
        """M' l for every bin-space index l, ordered by l."""
        return span(self.coset_columns)

    def hash(self, m) -> np.ndarray | int:
        """Bin index M^T m, for a label or an array of labels."""
        if np.ndim(m) == 0:
            m = int(m)
            return sum(((int(c) & m).bit_count() & 1) << i for i, c in enumerate(self.hash_columns))
        m = np.asarray(m, dtype=np.uint64)
        out = np.zeros(m.shape, dtype=np.int64)
        for i, c in enumerate(self.hash_columns):
            out |= (np.bitwise_count(m & c) & 1).astype(np.int64) << i
        return out

    def query_indices(self) -> np.ndarray:
        """P x B array of the indices M' l + d_t."""
        return self.coset[None, :] ^ self.offsets.labels[:, None]

    def in_coset_span(self, v: int) -> int | None:
        """Bin-space l with M' l = v, or None if v is outside the column space."""
        basis: dict[int, tuple[int, int]] = {}
        for k, c in enumerate(self.coset_columns):
            r, tag = c, 1 << k
            while r:
                lead = r.bit_length() - 1
                if lead in basis:
                    br, bt = basis[lead]
                    r ^= br
                    tag ^= bt
                else:
                    basis[lead] = (r, tag)
                    break
        tag = 0
        r = v
        while r:
            lead = r.bit_length() - 1
            if lead not in basis:
                return None
            br, bt = basis[lead]
            r ^= br
            tag ^= bt
        return tag

    @classmethod
    def from_generators(cls, n: int, gens: Sequence[int], offsets: OffsetSet, physical: bool = True) -> "GroupDesign":
        """Build the group whose queried subspace is spanned by ``gens`` (so M' = gens)."""
        b = len(gens)
        cols = [0] * b
        for k in range(b):
            cols[_bin_perm(k, b)] = swap_halves(gens[k], n)
        return cls(n, Gf2Matrix.from_columns(cols, 2 * n), offsets, physical)


@dataclass(frozen=True, eq=False)
class SubsamplingDesign:
    n: int
    groups: tuple[GroupDesign, ...]

    def __post_init__(self):
        if not self.groups:
            raise ValueError("a design needs at least one group")
        bs = {g.b for g in self.groups}
        if len(bs) != 1:
            raise ValueError("all groups must share the bin count")

    @property
    def C(self) -> int:
        return len(self.groups)

    @property
    def b(self) -> int:
        return self.groups[0].b

    @property
    def B(self) -> int:
        return 1 << self.b

    @property
    def P(self) -> int:
        return max(g.offsets.P for g in self.groups)


def random_design(n: int, b: int, C: int, P1: int, code=None, include_basis: bool = False, seed=0) -> SubsamplingDesign:
    """Independent random hash matrices and offsets for C groups."""
    seqs = np.random.SeedSequence(seed).spawn(C)
    groups = []
    for ss in seqs:
        rng = np.random.default_rng(ss)
        M = random_subsampling_matrix(n, b, rng)
        D = make_offsets(n, P1, code, include_basis, rng)
        groups.append(GroupDesign(n, M, D, physical=False))
    return SubsamplingDesign(n, tuple(groups))


def design_query_set(d: SubsamplingDesign) -> tuple[np.ndarray, np.ndarray]:
    """All indices the binning stage queries (with multiplicity) and the distinct set."""
    every = np.concatenate([g.query_indices().ravel() for g in d.groups])
    return every, np.unique(every)


# ---------------------------------------------------------------- local designs


def _embed(word: str, qubits: Sequence[int], n: int) -> int:
    lab = label_from_string(word)
    bits = 0
    for pos, q in enumerate(qubits):
        bits |= ((lab.bits >> pos) & 1) << q
        bits |= ((lab.bits >> (pos + lab.n)) & 1) << (q + n)
    return bits


def block_generators(block: Sequence[int], choice: int, n: int) -> list[int]:
    table = PAIR_GROUPS if len(block) == 2 else SINGLE_GROUPS
    return [_embed(w, block, n) for w in table[choice]]


def pairing(n: int, shift: int) -> tuple[tuple[int, ...], ...]:
    """Blocks of adjacent qubits; shift 1 starts the pairs one qubit later."""
    blocks: list[tuple[int, ...]] = []
    q = 0
    if shift % 2 and n > 1:
        blocks.append((0,))
        q = 1
    while q + 1 < n:
        blocks.append((q, q + 1))
        q += 2
    if q < n:
        blocks.append((q,))
    return tuple(blocks)


@dataclass(frozen=True)
class Experiment:
    """One circuit family: a local stabilizer group chosen per qubit block."""

    blocks: tuple[tuple[int, ...], ...]
    choice: tuple[int, ...]
    group: int
    role: str

    def generators(self, n: int) -> list[int]:
        gens: list[int] = []
        for blk, ch in zip(self.blocks, self.choice):
            gens += block_generators(blk, ch, n)
        return gens

    def stabilizer(self, n: int) -> Gf2Matrix:
        return Gf2Matrix(tuple(self.generators(n)), 2 * n)

    def index_set(self, n: int) -> np.ndarray:
        return span(self.generators(n))

    def words(self) -> list[str]:
        out = []
        for blk, ch in zip(self.blocks, self.choice):
            table = PAIR_GROUPS if len(blk) == 2 else SINGLE_GROUPS
            out.append(",".join(table[ch]))
        return out


@dataclass(frozen=True)
class ExperimentDesign:
    n: int
    kind: str
    experiments: tuple[Experiment, ...]
    nominal_count: int
    subsampling: SubsamplingDesign | None = field(default=None, compare=False)

    @property
    def count(self) -> int:
        """Experiment count by the design's counting rule."""
        return self.nominal_count

    @property
    def distinct_count(self) -> int:
        return len({(e.blocks, e.choice) for e in self.experiments})

    def coverage(self) -> np.ndarray:
        return np.unique(np.concatenate([e.index_set(self.n) for e in self.experiments]))


def type1_count(n: int, C: int) -> int:
    return C * (2 * n + 1)


def type2_count(n: int) -> int:
    return 1 + 8 * n * (n - 2)


def type2_distinct_count(n: int) -> int:
    return 1 + 2 * n * (n - 1)


def _alternatives(block: Sequence[int], base: int) -> list[int]:
    size = len(PAIR_GROUPS) if len(block) == 2 else len(SINGLE_GROUPS)
    return [g for g in range(size) if g != base]


def local_stabilizer_design(n: int, C: int = 2, seed=0) -> tuple[SubsamplingDesign, ExperimentDesign]:
    """Type I design: per group, random local base groups cycled block by block.

    Group c pairs qubits with a one-qubit shift when c is odd, so the two
    hashes do not share block boundaries.  The queried subspace of each group is
    the base stabilizer group (b = n) and the offsets are zero plus all 2n unit
    offsets.
    """
    if n < 1 or C < 1:
        raise ValueError("need n >= 1 and C >= 1")
    rng = _rng(seed)
    groups, experiments = [], []
    offs = basis_offsets(n)
    D = OffsetSet(n, np.array(offs, dtype=np.uint64), ("basis",) * len(offs), np.zeros(len(offs), dtype=np.int64))
    for c in range(C):
        blocks = pairing(n, c)
        base = tuple(
            int(rng.integers(len(PAIR_GROUPS) if len(b) == 2 else len(SINGLE_GROUPS))) for b in blocks
        )
        exp0 = Experiment(blocks, base, c, "base")
        experiments.append(exp0)
        for i, blk in enumerate(blocks):
            for alt in _alternatives(blk, base[i]):
                ch = base[:i] + (alt,) + base[i + 1:]
                experiments.append(Experiment(blocks, ch, c, f"block {i} -> {alt}"))
        groups.append(GroupDesign.from_generators(n, exp0.generators(n), D, physical=True))
    sub = SubsamplingDesign(n, tuple(groups))
    return sub, ExperimentDesign(n, "type1", tuple(experiments), len(experiments), sub)


def type2_design(n: int, seed=0) -> ExperimentDesign:
    """Type II design: one group per qubit pair, spanning that pair's full Pauli space.

    Each group queries the full two-qubit Pauli space on its pair and the base
    stabilizer elsewhere (b = n + 2), with unit offsets on the other n - 2
    qubits.  The experiment list holds each distinct configuration once;
    ``count`` reports the nominal formula.
    """
    if n < 4 or n % 2:
        raise ValueError("Type II designs need an even n >= 4")
    rng = _rng(seed)
    blocks = pairing(n, 0)
    k = len(blocks)
    base = tuple(int(rng.integers(len(PAIR_GROUPS))) for _ in blocks)
    experiments = [Experiment(blocks, base, -1, "base")]
    for p in range(k):
        for a in _alternatives(blocks[p], base[p]):
            ch = base[:p] + (a,) + base[p + 1:]
            experiments.append(Experiment(blocks, ch, p, f"pair {p} -> {a}"))
    for p in range(k):
        for q in range(p + 1, k):
            for a in _alternatives(blocks[p], base[p]):
                for c2 in _alternatives(blocks[q], base[q]):
                    ch = list(base)
                    ch[p], ch[q] = a, c2
                    experiments.append(Experiment(blocks, tuple(ch), p, f"pairs {p},{q} -> {a},{c2}"))
    groups = []
    for p, blk in enumerate(blocks):
        gens = [1 << blk[0], 1 << (blk[0] + n), 1 << blk[1], 1 << (blk[1] + n)]
        for i, other in enumerate(blocks):
            if i != p:
                gens += block_generators(other, base[i], n)
        rest = [q for q in range(n) if q not in blk]
        offs = basis_offsets(n, rest)
        D = OffsetSet(n, np.array(offs, dtype=np.uint64), ("basis",) * len(offs), np.zeros(len(offs), dtype=np.int64))
        groups.append(GroupDesign.from_generators(n, gens, D, physical=False))
    sub = SubsamplingDesign(n, tuple(groups))
    return ExperimentDesign(n, "type2", tuple(experiments), type2_count(n), sub)


def check_pair_groups() -> bool:
    """Self-test: each listed group is a stabilizer group and the 15 elements are distinct."""
    seen = set()
    for gens in PAIR_GROUPS:
        g = [label_from_string(w).bits for w in gens]
        if not is_stabilizer_group(Gf2Matrix(tuple(g), 4)):
            return False
        seen.update([g[0], g[1], g[0] ^ g[1]])
    return len(seen) == 15 and 0 not in seen


# ---------------------------------------------------------------- JSON


def _offsets_to_json(D: OffsetSet) -> list[dict]:
    return [
        {"pauli": label_to_xz(int(v), D.n), "kind": k, "replica": int(r)}
        for v, k, r in zip(D.labels.tolist(), D.kinds, D.replicas.tolist())
    ]


def design_to_dict(sub: SubsamplingDesign | None, exp: ExperimentDesign | None = None, extra=None) -> dict:
    d: dict = {}
    if sub is not None:
        d["n"] = sub.n
        d["b"] = sub.b
        d["C"] = sub.C
        d["groups"] = [
            {"M": g.M.row_strings(), "physical": g.physical, "offsets": _offsets_to_json(g.offsets)}
            for g in sub.groups
        ]
    if exp is not None:
        d["n"] = exp.n
        d["design_type"] = exp.kind
        d["experiment_count"] = exp.count
        d["distinct_experiments"] = exp.distinct_count
        d["experiments"] = [
            {"group": e.group, "role": e.role, "blocks": [list(b) for b in e.blocks], "stabilizers": e.words()}
            for e in exp.experiments
        ]
    if extra:
        d.update(extra)
    return d


def save_design(path, sub: SubsamplingDesign | None, exp: ExperimentDesign | None = None, extra=None) -> None:
    Path(path).write_text(json.dumps(design_to_dict(sub, exp, extra), indent=1) + "\n")


def load_subsampling_design(path) -> SubsamplingDesign:
    d = json.loads(Path(path).read_text())
    n = int(d["n"])
    groups = []
    for g in d["groups"]:
        M = Gf2Matrix.from_row_strings(g["M"])
        offs = g["offsets"]
        D = OffsetSet(
            n,
            np.array([parse_label(o["pauli"], n) for o in offs], dtype=np.uint64),
            tuple(o["kind"] for o in offs),
            np.array([o.get("replica", 0) for o in offs], dtype=np.int64),
        )
        groups.append(GroupDesign(n, M, D, bool(g.get("physical", False))))
    return SubsamplingDesign(n, tuple(groups))
