import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparsepauli.binning import bin_observation_bruteforce
from sparsepauli.channel import SparsePauliChannel
from sparsepauli.design import OffsetSet, basis_offsets, make_offsets, random_design
from sparsepauli.detector import (
    MULTI,
    SINGLE,
    ZERO,
    BinVerdict,
    OffsetCodeSpec,
    basis_readout_pattern,
    code_decode,
    code_encode,
    detect,
    detect_batch,
    estimate_index_basis,
    singleton_flip_probability,
)
from sparsepauli.pauli import label_from_string, symplectic_array
from test_binning import example_design


def L(w):
    return label_from_string(w).bits


def basis_set(n):
    offs = basis_offsets(n)
    return OffsetSet(n, np.array(offs, dtype=np.uint64), ("basis",) * len(offs), np.zeros(len(offs)))


def signs_for(D, m):
    return 1.0 - 2.0 * symplectic_array(D.labels, m, D.n)


def test_all_zero_bin():
    code = OffsetCodeSpec(3, 3)
    D = make_offsets(3, 8, code, seed=0)
    assert detect(np.zeros(D.P), D, 1.0, 1e-8, code=code).kind == ZERO
    assert detect(np.zeros(5), basis_set(2), 1.0, 0.0).kind == ZERO


def test_worked_sign_pattern():
    # zero offset +, then e_1..e_4 with signs (+, -, -, +)
    U = 0.001 * np.array([1, 1, -1, -1, 1])
    v = detect(U, basis_set(2), 1.0, 0.0)
    assert v.kind == SINGLE
    assert v.label == label_from_string("10|01").bits
    assert math.isclose(v.rate, 0.001, rel_tol=1e-12)
    assert basis_readout_pattern(v.label, 2) == "0110"
    assert estimate_index_basis(U[1:], U[0], 2) == v.label


def test_two_error_bin_is_multi():
    d = example_design()
    ch = SparsePauliChannel(2, {"II": 0.97, "IY": 0.01, "XY": 0.02})
    bins = bin_observation_bruteforce(ch, d)
    g1, g2 = d.groups
    j = g1.hash(L("IY"))
    assert detect(bins.U[0, :, j], g1.offsets, 1.0, 0.0).kind == MULTI
    v = detect(bins.U[1, :, g2.hash(L("IY"))], g2.offsets, 1.0, 0.0)
    assert (v.kind, v.label) == (SINGLE, L("IY"))


def test_two_error_bin_is_multi_with_code():
    n = 6
    code = OffsetCodeSpec(n, 5)
    D = make_offsets(n, 16, code, seed=3)
    m1, m2 = L("XIZIYI"), L("IZZXII")
    U = 0.01 * signs_for(D, m1) + 0.02 * signs_for(D, m2)
    assert detect(U, D, 1.0, 1e-12, code=code).kind == MULTI


def test_basis_readout_random_cases():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        D = basis_set(n)
        m = int(rng.integers(0, 4 ** n))
        p = float(rng.uniform(1e-4, 0.1))
        v = detect(p * signs_for(D, m), D, 1.0, 0.0)
        if m == 0:
            assert v.label == 0
        assert (v.kind, v.label) == (SINGLE, m)
        assert math.isclose(v.rate, p, rel_tol=1e-12)


def test_coded_readout_random_cases():
    rng = np.random.default_rng(1)
    for _ in range(300):
        n = int(rng.integers(1, 9))
        code = OffsetCodeSpec(n, 3)
        D = make_offsets(n, 8, code, seed=int(rng.integers(1 << 30)))
        m = int(rng.integers(0, 4 ** n))
        v = detect(0.01 * signs_for(D, m), D, 1.0, 0.0, code=code)
        assert (v.kind, v.label) == (SINGLE, m)


def test_identity_reads_as_identity():
    U = np.full(2 * 5 + 1, 0.3)
    assert estimate_index_basis(U[1:], U[0], 5) == 0


def test_one_flipped_offset_gives_one_wrong_bit():
    n, m = 4, L("XYZI")
    D = basis_set(n)
    U = 0.01 * signs_for(D, m)
    for i in range(2 * n):
        V = U.copy()
        V[1 + i] *= -1
        got = estimate_index_basis(V[1:], V[0], n)
        assert bin(got ^ m).count("1") == 1


def test_repetition_decode():
    n, r = 3, 5
    spec = OffsetCodeSpec(n, r)
    m = L("XZY")
    bits = code_encode(m, spec)
    assert code_decode(bits, spec) == (m, True)
    one = bits.copy().reshape(2 * n, r)
    one[:, 0] ^= 1
    assert code_decode(one.ravel(), spec) == (m, True)
    three = bits.copy().reshape(2 * n, r)
    three[2, :3] ^= 1
    got, ok = code_decode(three.ravel(), spec)
    assert ok and bin(got ^ m).count("1") == 1


def test_even_repetition_tie_fails():
    spec = OffsetCodeSpec(1, 2)
    assert code_decode(np.array([0, 1, 0, 0]), spec)[1] is False


def test_custom_code_needs_full_rank():
    with pytest.raises(ValueError):
        OffsetCodeSpec(1, scheme="custom", custom_rows=(1, 1), custom_decoder=lambda s: (0, True))


def test_noisy_singleton_decode_rate():
    # r = 9 and nu = p / 6: every vote flips with tiny probability
    n, r, p = 8, 9, 0.01
    nu = p / 6
    code = OffsetCodeSpec(n, r)
    D = make_offsets(n, 16, code, seed=2)
    rng = np.random.default_rng(4)
    trials = 10_000
    ms = rng.integers(0, 4 ** n, trials).astype(np.uint64)
    clean = p * (1.0 - 2.0 * symplectic_array(D.labels[:, None], ms[None, :], n))
    U = clean + nu * rng.standard_normal(clean.shape)
    kinds, labels, _ = detect_batch(U, D, 1.0, nu ** 2, code=code)
    assert np.mean(labels == ms) >= 0.99


def test_flip_probability_values():
    assert math.isclose(singleton_flip_probability(1.0, 1.0, 1.0), math.exp(-0.5) / math.sqrt(2 * math.pi))
    assert round(singleton_flip_probability(1.0, 1.0, 1.0), 4) == 0.2420
    assert singleton_flip_probability(1.0, 1.0, 0.0) == 0.0
    assert singleton_flip_probability(1.0, 1.0, 1e-4) < 1e-200
    with pytest.raises(ValueError):
        singleton_flip_probability(0.0, 1.0, 1.0)


@pytest.mark.parametrize("ratio", [0.5, 1, 2, 4, 8])
def test_flip_bound_dominates_gaussian_tail(ratio):
    exact = 0.5 * math.erfc(ratio / math.sqrt(2))
    assert exact <= singleton_flip_probability(ratio, 1.0, 1.0)


def test_batch_matches_scalar():
    n = 5
    code = OffsetCodeSpec(n, 3)
    D = make_offsets(n, 8, code, seed=1)
    rng = np.random.default_rng(3)
    cols = []
    for k in range(40):
        m = int(rng.integers(0, 4 ** n))
        u = 0.01 * signs_for(D, m) + 1e-3 * rng.standard_normal(D.P)
        if k % 3 == 0:
            u += 0.02 * signs_for(D, int(rng.integers(0, 4 ** n)))
        if k % 7 == 0:
            u = 1e-5 * rng.standard_normal(D.P)
        cols.append(u)
    U = np.stack(cols, axis=1)
    T = rng.uniform(1, 2, 40)
    kinds, labels, rates = detect_batch(U, D, T, 1e-6, code=code, eps0=0.005)
    for k in range(40):
        v = detect(U[:, k], D, T[k], 1e-6, code=code, eps0=0.005)
        assert v.kind == (ZERO, SINGLE, MULTI)[kinds[k]]
        if v.kind == SINGLE:
            assert v.label == labels[k] and v.rate == rates[k]


def test_verdict_validation():
    with pytest.raises(ValueError):
        BinVerdict(SINGLE)
    with pytest.raises(ValueError):
        BinVerdict(ZERO, 1, 0.1)
    with pytest.raises(ValueError):
        BinVerdict(SINGLE, 1, -0.1)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.integers(1, 7), st.integers(0, 2 ** 31))
def test_repetition_corrects_minority_flips(n, r, seed):
    spec = OffsetCodeSpec(n, r)
    rng = np.random.default_rng(seed)
    m = int(rng.integers(0, 4 ** n))
    bits = code_encode(m, spec).reshape(2 * n, r).copy()
    for row in bits:
        k = int(rng.integers(0, (r + 1) // 2))  # strictly fewer than r / 2
        row[rng.choice(r, k, replace=False)] ^= 1
    assert code_decode(bits.ravel(), spec) == (m, True)
