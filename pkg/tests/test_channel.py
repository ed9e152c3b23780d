import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparsepauli.channel import (
    EigenvalueOracle,
    NormalizationError,
    SparsePauliChannel,
    channel_from_dict,
    channel_to_dict,
    coset_eigenvalues,
    eigenvalue,
    eigenvalues,
    extrapolate_local_averages,
    keyed_normals,
    load_channel,
    load_eigenvalues,
    local_averages,
    parse_eigenvalue_row,
    plant_paulis,
    random_plants,
    random_sparse_channel,
    save_channel,
    save_eigenvalues,
    tail_counts,
    tail_profile_channel,
)
from sparsepauli.pauli import DimensionError, label_from_string, span, symplectic_bits
from sparsepauli.wht import wht_brute


def test_identity_eigenvalue_is_one():
    ch = random_sparse_channel(5, 20, 1e-4, 0.9, 1)
    assert math.isclose(eigenvalue(ch, 0), 1.0, abs_tol=1e-14)


def test_single_qubit_example():
    ch = SparsePauliChannel(1, {"I": 0.9, "X": 0.1})
    assert math.isclose(eigenvalue(ch, "Z"), 0.8, abs_tol=1e-15)
    assert math.isclose(eigenvalue(ch, "X"), 1.0, abs_tol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_eigenvalues_match_brute_transform(seed):
    ch = random_sparse_channel(3, 12, 1e-3, 0.5, seed)
    lam = wht_brute(ch.dense(), "symplectic")
    assert np.max(np.abs(eigenvalues(ch, np.arange(64)) - lam)) < 1e-14


def test_eigenvalue_direct_sum_oracle():
    # independent oracle: the defining sum over the support
    ch = random_sparse_channel(9, 40, 1e-4, 0.7, 3)
    ks = np.random.default_rng(0).integers(0, 4 ** 9, 50)
    for k in ks.tolist():
        ref = sum(p * (-1) ** symplectic_bits(k, m, 9) for m, p in ch.rates.items())
        assert math.isclose(eigenvalue(ch, k), ref, abs_tol=1e-14)


def test_coset_eigenvalues_match_direct():
    ch = random_sparse_channel(6, 30, 1e-4, 0.6, 2)
    rng = np.random.default_rng(5)
    gens = [int(v) for v in rng.integers(1, 4 ** 6, 5)]
    offs = rng.integers(0, 4 ** 6, 4).astype(np.uint64)
    fast = coset_eigenvalues(ch, gens, offs)
    idx = span(gens)[None, :] ^ offs[:, None]
    direct = eigenvalues(ch, idx.ravel()).reshape(idx.shape)
    assert np.max(np.abs(fast - direct)) < 1e-13


def test_sparsity_one_is_identity():
    ch = random_sparse_channel(4, 1, 1e-3, 0.9, 0)
    assert ch.rates == {0: 1.0}


def test_generator_determinism():
    a = random_sparse_channel(8, 30, 1e-5, 0.9, 11)
    b = random_sparse_channel(8, 30, 1e-5, 0.9, 11)
    c = random_sparse_channel(8, 30, 1e-5, 0.9, 12)
    assert a == b
    assert set(a.rates) != set(c.rates)


def test_generator_floor_and_mass():
    ch = random_sparse_channel(10, 64, 1e-5, 0.9, 4)
    assert ch.sparsity == 64
    assert math.isclose(ch.identity_rate, 0.9, abs_tol=1e-12)
    assert min(ch.rates.values()) >= 1e-5 * (1 - 1e-12)


def test_infeasible_generator():
    with pytest.raises(ValueError):
        random_sparse_channel(4, 100, 0.01, 0.9, 0)


def test_tail_profile_decade_counts():
    ch = tail_profile_channel(14, 0.86, seed=7)
    counts = tail_counts(ch)
    assert counts[1e-5] == 200
    assert counts[1e-6] == 600
    assert math.isclose(ch.identity_rate, 0.86, abs_tol=1e-12)


def test_plants_distribution():
    plants = random_plants(14, 4000, seed=3)
    rates = np.array([r for _, r in plants])
    assert np.all(rates > 0)
    assert abs(rates.mean() - 0.005) < 1e-4
    assert abs(rates.std() - 0.001) < 1e-4
    assert len({k for k, _ in plants}) == 4000


def test_plant_empty_and_replace():
    ch = random_sparse_channel(4, 10, 1e-3, 0.9, 2)
    assert plant_paulis(ch, []) is ch
    k = next(k for k in ch.rates if k)
    out = plant_paulis(ch, [(k, 0.02)])
    assert out.rates[k] == 0.02
    assert abs(math.fsum(out.rates.values()) - 1.0) < 1e-12
    with pytest.raises(ValueError):
        plant_paulis(ch, [(0, 0.1)])


def test_extrapolation_examples():
    one = extrapolate_local_averages({"0000": 1.0}, 4, 0)
    assert one.rates == {0: 1.0}
    ch = extrapolate_local_averages({"0": 0.9, "1": 0.1}, 1, 5)
    assert set(ch.rates) <= {0, 1, 2, 3}
    assert math.isclose(math.fsum(v for k, v in ch.rates.items() if k), 0.1, abs_tol=1e-15)


def test_extrapolation_marginal_round_trip():
    rng = np.random.default_rng(2)
    patterns = {0: 0.8}
    for t in rng.choice(1 << 14, 60, replace=False).tolist():
        if t and bin(t).count("1") <= 3:
            patterns[t] = 0.0
    keys = [t for t in patterns if t]
    w = rng.dirichlet(np.ones(len(keys))) * 0.2
    patterns.update(zip(keys, w.tolist()))
    patterns[0] = 1.0 - math.fsum(w)
    ch = extrapolate_local_averages(patterns, 14, 9)
    back = local_averages(ch)
    for t, v in patterns.items():
        assert math.isclose(back.get(t, 0.0), v, rel_tol=1e-12, abs_tol=1e-15)


def test_normalization_error_carries_deficit():
    with pytest.raises(NormalizationError) as info:
        SparsePauliChannel(2, {"II": 0.9, "XI": 0.08})
    assert math.isclose(info.value.deficit, 0.02, abs_tol=1e-12)


def test_channel_label_checks():
    with pytest.raises(DimensionError):
        SparsePauliChannel(1, {0: 0.5, 7: 0.5})
    with pytest.raises(ValueError):
        SparsePauliChannel(1, {0: 1.1, 1: -0.1})


def test_oracle_exact_and_noisy():
    ch = random_sparse_channel(6, 10, 1e-3, 0.8, 1)
    exact = EigenvalueOracle(ch, 0.0, 3)
    assert exact.query(17) == eigenvalue(ch, 17)
    noisy = EigenvalueOracle(ch, 1e-3, 3)
    a, b = noisy.query(17), noisy.query(17)
    assert a == b
    assert noisy.query(17, replica=1) != a


def test_oracle_noise_std():
    ch = SparsePauliChannel(12, {0: 1.0})
    orc = EigenvalueOracle(ch, 1e-3, 42)
    ks = np.arange(1, 100_001, dtype=np.uint64)
    noise = orc.query(ks) - 1.0
    assert abs(noise.std() / 1e-3 - 1) < 0.02
    assert abs(noise.mean()) < 3 * 1e-3 / math.sqrt(ks.size)


def test_keyed_normals_are_pure_functions():
    a = keyed_normals(5, np.arange(1000), 0)
    assert np.array_equal(a, keyed_normals(5, np.arange(1000), 0))
    assert not np.array_equal(a, keyed_normals(6, np.arange(1000), 0))
    assert not np.array_equal(a, keyed_normals(5, np.arange(1000), 1))


def test_oracle_query_counting():
    ch = random_sparse_channel(4, 5, 1e-3, 0.9, 1)
    orc = EigenvalueOracle(ch, 1e-3, 0)
    orc.query([1, 2, 1], [0, 1, 0])
    orc.query([2], [1])
    assert orc.calls == 4
    assert orc.queries == 2
    raw = EigenvalueOracle(ch, 1e-3, 0, dedup=False)
    raw.query([1, 1])
    assert raw.queries == 2


def test_oracle_coset_fast_path_matches_individual_queries():
    ch = random_sparse_channel(5, 20, 1e-3, 0.8, 8)
    gens = [3, 96, 515]
    offs = np.array([0, 5, 77], dtype=np.uint64)
    reps = np.array([0, 1, 2])
    a = EigenvalueOracle(ch, 1e-3, 9).query_coset(gens, offs, reps)
    idx = span(gens)[None, :] ^ offs[:, None]
    b = EigenvalueOracle(ch, 1e-3, 9).query(idx.ravel(), np.repeat(reps, idx.shape[1])).reshape(idx.shape)
    assert np.max(np.abs(a - b)) < 1e-14


def test_channel_json_round_trip(tmp_path):
    ch = random_sparse_channel(7, 25, 1e-4, 0.9, 6)
    path = tmp_path / "ch.json"
    save_channel(ch, path)
    assert load_channel(path) == ch
    d = json.loads(path.read_text())
    assert set(d) == {"n", "identity", "rates"}
    assert channel_from_dict(channel_to_dict(ch)) == ch


def test_channel_json_deficit(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"n": 1, "identity": 0.9, "rates": [{"pauli": "X", "p": 0.08}]}))
    with pytest.raises(NormalizationError) as info:
        load_channel(path)
    assert math.isclose(info.value.deficit, 0.02, abs_tol=1e-12)


def test_eigenvalue_csv(tmp_path):
    lab, v = parse_eigenvalue_row(["10|01", "0.9987"])
    assert lab == label_from_string("XZ")
    assert v == 0.9987
    path = tmp_path / "eig.csv"
    ks = np.array([0, 5, 9], dtype=np.uint64)
    vals = np.array([1.0, 0.5, -0.25])
    save_eigenvalues(path, ks, vals, 2)
    assert path.read_text().splitlines()[0] == "index,value"
    k2, v2, n = load_eigenvalues(path)
    assert n == 2 and np.array_equal(k2, ks) and np.array_equal(v2, vals)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 30), st.integers(0, 2 ** 31))
def test_eigenvalues_bounded_and_parseval(n, s, seed):
    s = min(s, 4 ** n)
    ch = random_sparse_channel(n, s, 1e-3 / s, 0.5, seed) if s > 1 else SparsePauliChannel(n, {0: 1.0})
    lam = eigenvalues(ch, np.arange(4 ** n))
    assert np.all(np.abs(lam) <= 1 + 1e-12)
    assert math.isclose((lam ** 2).sum(), 4 ** n * (ch.probs ** 2).sum(), rel_tol=1e-10)
