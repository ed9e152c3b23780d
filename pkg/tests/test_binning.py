import numpy as np
import pytest

from sparsepauli.binning import (
    BinTensor,
    bin_observation_bruteforce,
    bin_transform,
    query_values,
    subsample_bins,
)
from sparsepauli.channel import EigenvalueOracle, SparsePauliChannel, random_sparse_channel
from sparsepauli.design import GroupDesign, OffsetSet, SubsamplingDesign, basis_offsets, random_design
from sparsepauli.detector import OffsetCodeSpec
from sparsepauli.pauli import label_from_string, symplectic_bits
from sparsepauli.wht import wht_brute


def L(w):
    return label_from_string(w).bits


def example_design():
    """Two groups on two qubits with stabilizers {IX, XI} and {ZY, XZ}."""
    offs = basis_offsets(2)
    D = OffsetSet(2, np.array(offs, dtype=np.uint64), ("basis",) * 5, np.zeros(5))
    g1 = GroupDesign.from_generators(2, [L("IX"), L("XI")], D)
    g2 = GroupDesign.from_generators(2, [L("ZY"), L("XZ")], D)
    return SubsamplingDesign(2, (g1, g2))


def test_example_collisions():
    d = example_design()
    g1, g2 = d.groups
    assert set(g1.coset.tolist()) == {L(w) for w in ("II", "IX", "XI", "XX")}
    assert set(g2.coset.tolist()) == {L(w) for w in ("II", "ZY", "XZ", "YX")}
    assert g1.hash(L("IY")) == g1.hash(L("XY"))
    assert g2.hash(L("IY")) != g2.hash(L("XY"))
    assert g2.hash(L("IY")) not in {g2.hash(L(w)) for w in ("II", "XY", "ZZ")}


def test_bins_group_by_commutation_pattern():
    # labels share a bin exactly when they commute alike with the queried stabilizers
    d = example_design()
    for g in d.groups:
        gens = g.coset_columns
        for a in range(16):
            for b in range(16):
                same = all(symplectic_bits(a, x, 2) == symplectic_bits(b, x, 2) for x in gens)
                assert (g.hash(a) == g.hash(b)) == same


def test_identity_channel_bins():
    ch = SparsePauliChannel(5, {0: 1.0})
    d = random_design(5, 4, 2, 3, seed=1)
    bins = subsample_bins(EigenvalueOracle(ch), d)
    expect = np.zeros_like(bins.U)
    expect[:, :, 0] = 1.0
    assert np.max(np.abs(bins.U - expect)) < 1e-15
    assert np.max(np.abs(bins.U - bin_observation_bruteforce(ch, d).U)) < 1e-15


def test_single_error_channel():
    n, m = 6, L("XYZIZX")
    ch = SparsePauliChannel(n, {0: 0.97, m: 0.03})
    d = random_design(n, 5, 2, 4, seed=3)
    bins = subsample_bins(EigenvalueOracle(ch), d)
    for c, g in enumerate(d.groups):
        j = g.hash(m)
        assert j != 0
        signs = np.array([(-1) ** symplectic_bits(int(t), m, n) for t in g.offsets.labels])
        assert np.allclose(bins.U[c, :, j], 0.03 * signs, atol=1e-15)
        assert np.allclose(bins.U[c, :, 0], 0.97, atol=1e-15)
        others = np.delete(bins.U[c], [0, j], axis=1)
        assert np.max(np.abs(others)) < 1e-15


def test_zero_offset_has_no_signs():
    ch = random_sparse_channel(5, 20, 1e-3, 0.7, 2)
    D = OffsetSet(5, np.zeros(1, dtype=np.uint64), ("random",), np.zeros(1))
    g = random_design(5, 4, 1, 1, seed=0).groups[0]
    d = SubsamplingDesign(5, (GroupDesign(5, g.M, D),))
    U = subsample_bins(EigenvalueOracle(ch), d).U[0, 0]
    ref = np.bincount(g.hash(ch.labels), weights=ch.probs, minlength=16)
    assert np.max(np.abs(U - ref)) < 1e-15


@pytest.mark.parametrize("fast", [True, False])
def test_subsampling_matches_bruteforce(fast):
    rng = np.random.default_rng(7)
    for trial in range(10):
        n = int(rng.integers(2, 5))
        ch = random_sparse_channel(n, int(rng.integers(2, 12)), 1e-3, 0.6, trial)
        d = random_design(n, int(rng.integers(1, 2 * n + 1)), 2, 3, OffsetCodeSpec(n, 3), seed=trial)
        got = subsample_bins(EigenvalueOracle(ch, fast_cosets=fast), d).U
        assert np.max(np.abs(got - bin_observation_bruteforce(ch, d).U)) < 1e-12


def test_transform_matches_brute_with_bin_form():
    # even b: symplectic kernel on bin space; odd b: plain inner product
    rng = np.random.default_rng(0)
    for b in (3, 4):
        v = rng.normal(size=1 << b)
        ordering = "symplectic" if b % 2 == 0 else "natural"
        assert np.allclose(bin_transform(v, b), wht_brute(v, ordering) / (1 << b), atol=1e-14)


def test_noise_variance_of_zero_bins():
    ch = SparsePauliChannel(6, {0: 1.0})
    xi, samples = 1e-3, []
    for seed in range(8):
        d = random_design(6, 6, 1, 20, seed=seed)
        bins = subsample_bins(EigenvalueOracle(ch, xi, seed), d)
        samples.append(bins.U[0, :, 1:].ravel())
    s = np.concatenate(samples)
    assert s.size >= 10_000
    assert abs(s.var() / (xi ** 2 / 64) - 1) < 0.1
    assert bins.nu2 == pytest.approx(xi ** 2 / 64)


def test_query_accounting():
    ch = random_sparse_channel(6, 10, 1e-3, 0.8, 1)
    d = random_design(6, 5, 2, 4, OffsetCodeSpec(6, 3), seed=2)
    orc = EigenvalueOracle(ch, 1e-3, 0)
    bins = subsample_bins(orc, d)
    assert bins.queries <= d.C * d.P * d.B
    assert bins.calls == d.C * d.P * d.B


def test_query_values_match_fast_path():
    ch = random_sparse_channel(7, 30, 1e-4, 0.8, 4)
    d = random_design(7, 6, 2, 4, OffsetCodeSpec(7, 3), seed=5)
    slow = query_values(EigenvalueOracle(ch, 1e-3, 1, fast_cosets=False), d)
    orc = EigenvalueOracle(ch, 1e-3, 1)
    fast = np.stack([orc.query_coset(g.coset_columns, g.offsets.labels, g.offsets.replicas) for g in d.groups])
    assert np.max(np.abs(slow - fast)) < 1e-14


def test_bin_tensor_round_trip(tmp_path):
    U = np.random.default_rng(0).normal(size=(2, 3, 8))
    bt = BinTensor(U, np.ones((2, 8)) * 1.5, 2.5e-9, 123)
    path = tmp_path / "bins.bin"
    bt.save(path)
    back = BinTensor.load(path)
    assert np.array_equal(back.U, U) and np.array_equal(back.T, bt.T)
    assert back.nu2 == bt.nu2 and back.queries == 123
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        BinTensor.load(path)


def test_bin_tensor_shape_check():
    with pytest.raises(ValueError):
        BinTensor(np.zeros((2, 3, 8)), np.ones((2, 4)), 0.0)
