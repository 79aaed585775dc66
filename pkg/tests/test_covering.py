import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ibexp.config import ValidationError
from ibexp.covering import (CoveringCode, Permutation, bin_count, bin_covering_code, bin_sizes,
                            build_type_covering, codebook_size, degree_profile,
                            find_covering_permutations, find_simultaneous_covering, floor_exp,
                            joint_counts, lemma_budget, unique_codeword_bounds,
                            unique_codeword_fraction, verify_permutation_cover,
                            verify_type_covering)
from ibexp.types_core import TypeVector, type_class_sequences

from oracles import min_set_cover_milp, min_set_cover_size, unique_count_cdf

perms = st.integers(1, 8).flatmap(lambda n: st.permutations(list(range(n))))


# ---------------------------------------------------------------- permutations


def test_permutation_semantics():
    p = Permutation((2, 0, 1))
    assert p.apply(np.array([10, 20, 30])).tolist() == [30, 10, 20]
    assert Permutation.identity(3).apply([[1, 2, 3]]).tolist() == [[1, 2, 3]]
    with pytest.raises(ValidationError):
        Permutation((0, 0, 1))


@given(st.integers(1, 7).flatmap(lambda n: st.tuples(*[st.permutations(list(range(n)))] * 3)))
def test_composition_associative_and_acts_in_order(triple):
    a, b, c = (Permutation(tuple(m)) for m in triple)
    assert (a @ b) @ c == a @ (b @ c)
    x = np.arange(len(triple[0])) * 7
    assert ((a @ b).apply(x) == a.apply(b.apply(x))).all()


@given(perms)
def test_inverse_and_bijectivity(m):
    p = Permutation(tuple(m))
    e = Permutation.identity(p.n)
    assert p @ p.inverse() == e and p.inverse() @ p == e
    assert sorted(p.apply(np.arange(p.n)).tolist()) == list(range(p.n))


# -------------------------------------------------------------- type covering


def test_identity_type_covering_is_the_class():
    q = TypeVector((2, 2))
    code = build_type_covering(q, [[2, 0], [0, 2]])
    assert len(code.sequences) == 6
    assert {tuple(u) for u in code.sequences} == {tuple(y) for y in type_class_sequences(q)}
    assert verify_type_covering(code) == 0


def test_degenerate_u_single_sequence():
    code = build_type_covering(TypeVector((3, 2)), [[3], [2]])
    assert code.sequences.tolist() == [[0, 0, 0, 0, 0]]


def test_inconsistent_conditional_counts_rejected():
    with pytest.raises(ValidationError):
        build_type_covering(TypeVector((2, 2)), [[1, 0], [0, 2]])
    with pytest.raises(ValidationError):
        build_type_covering(TypeVector((2, 2)), [[2, 0], [0, 2]], n=5)


def _exact_cover_sets(q, J):
    ys = type_class_sequences(q)
    b, c = J.shape
    us = np.array(list(itertools.product(range(c), repeat=q.n)))
    hit = (joint_counts(ys, us, b, c) == J).all(axis=(2, 3))
    return len(ys), [frozenset(np.flatnonzero(r).tolist()) for r in hit if r.any()]


@pytest.mark.parametrize("J", [[[1, 1], [0, 2]], [[1, 1], [1, 1]], [[2, 0], [1, 1]]])
def test_greedy_type_cover_vs_exhaustive_minimum(J):
    q = TypeVector((2, 2))
    J = np.array(J)
    code = build_type_covering(q, J)
    T, sets = _exact_cover_sets(q, J)
    opt = min_set_cover_size(T, sets)
    assert opt <= len(code.sequences)
    d = code.diagnostics
    assert d["log_size"] <= d["n_I"] + 2 * math.log(q.n + 1) + 1e-12
    assert verify_type_covering(code) == 0


@pytest.mark.parametrize("counts,J", [((3, 3), [[2, 1], [1, 2]]), ((4, 2), [[3, 1], [0, 2]]),
                                      ((2, 2, 2), [[2, 0], [1, 1], [0, 2]])])
def test_type_cover_exact_joint_type(counts, J):
    q = TypeVector(counts)
    code = build_type_covering(q, J, seed=3)
    ys = type_class_sequences(q)
    J = np.array(J)
    hit = (joint_counts(ys, code.sequences, *J.shape) == J).all(axis=(2, 3))
    assert hit.any(axis=0).all()


# -------------------------------------------------------------------- binning


def _code_of(k, n=4):
    seqs = np.zeros((k, n), dtype=np.int64)
    return CoveringCode(TypeVector((n,)), ((n,),), seqs, {0: list(range(k))})


@pytest.mark.parametrize("k,bins,sizes", [(6, 3, [2, 2, 2]), (5, 3, [2, 2, 1])])
def test_round_robin_bins(k, bins, sizes):
    code = bin_covering_code(_code_of(k), math.log(bins) / 4)
    assert code.n_bins == bins
    assert bin_sizes(code) == sizes


def test_large_B_bins_hold_at_most_one():
    code = bin_covering_code(_code_of(6), 5.0)
    assert max(bin_sizes(code)) <= 1
    assert sorted(code.bin_of().tolist()) == list(range(6))


@given(st.integers(1, 40), st.floats(0, 2))
def test_bin_sizes_balanced(k, B):
    code = bin_covering_code(_code_of(k), B)
    s = bin_sizes(code)
    assert max(s) - min(s) <= 1
    assert max(s) <= math.ceil(k / code.n_bins)
    assert sum(s) == k


def test_floor_exp_guards():
    assert floor_exp(math.log(4)) == 4
    assert floor_exp(-3.0) == 1
    assert bin_count(8, 0.0) == 1
    assert floor_exp(1000.0) >= 2 ** 1000


def test_covering_code_json_roundtrip():
    code = bin_covering_code(build_type_covering(TypeVector((2, 2)), [[1, 1], [1, 1]]), 0.2)
    back = CoveringCode.from_json(code.to_json())
    assert back.output_type == code.output_type and back.cond_type == code.cond_type
    assert (back.sequences == code.sequences).all() and back.bins == code.bins
    assert back.n_bins == code.n_bins


# ----------------------------------------------------------- permutation cover


def test_two_element_class():
    cov = find_covering_permutations([[0, 1]], (1, 1))
    assert cov.success and len(cov) == 2 and cov.budget == 3
    assert {m.mapping for m in cov} == {(0, 1), (1, 0)}


def test_self_cover_is_identity():
    A = type_class_sequences((2, 2))
    cov = find_covering_permutations(A, (2, 2))
    assert len(cov) == 1 and cov.permutations[0] == Permutation.identity(4)


def test_rejects_foreign_members():
    with pytest.raises(ValidationError):
        find_covering_permutations([[0, 0]], (1, 1))


def test_failure_is_reported():
    cov = find_covering_permutations([[0, 0, 1, 1]], (2, 2), max_k=2, restarts=0)
    assert not cov.success and cov.uncovered > 0


def _image_sets(A, q):
    T = type_class_sequences(q)
    index = {tuple(x): i for i, x in enumerate(T.tolist())}
    n = q.n
    return len(T), [frozenset(index[tuple(x)] for x in np.asarray(A)[:, list(m)].tolist())
                    for m in itertools.permutations(range(n))]


@pytest.mark.parametrize("seed", range(5))
def test_n6_cover_within_budget_vs_exact_minimum(seed):
    q = TypeVector((3, 3))
    T = type_class_sequences(q)
    rng = np.random.default_rng(seed)
    A = T[rng.choice(len(T), 4, replace=False)]
    cov = find_covering_permutations(A, q, seed=seed)
    assert cov.budget == math.ceil(20 / 4 * math.log(20)) + 1 == 16
    assert cov.success and len(cov) <= 16
    assert verify_permutation_cover(A, q, cov.permutations) == 0
    size, sets = _image_sets(A, q)
    assert min_set_cover_milp(size, sets) <= len(cov)


def test_lemma_budget_formula():
    assert lemma_budget(20, 4) == 16
    assert lemma_budget(20, 5, delta=0.5) == math.ceil(4 * math.log(40)) + 1


# --------------------------------------------------------- simultaneous cover


def test_simultaneous_self_family():
    sim = find_simultaneous_covering([type_class_sequences((2, 2))], (2, 2))
    assert sim.covered_fraction == 1 and len(sim.permutations) == 1


def test_simultaneous_singletons_two_element_class():
    sim = find_simultaneous_covering([[[0, 1]], [[1, 0]]], (1, 1))
    assert sim.covered_fraction == 1 and len(sim.permutations) == 2


def test_simultaneous_codebook_with_repeats_uses_unique_words():
    cb = [[0, 1, 1], [0, 1, 1], [1, 1, 0]]
    sim = find_simultaneous_covering([cb], (1, 2))
    assert sim.covered_fraction == 1


def test_simultaneous_random_family_reaches_half():
    q = TypeVector((3, 3))
    T = type_class_sequences(q)
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        fam = [T[rng.choice(20, 5, replace=False)] for _ in range(40)]
        sim = find_simultaneous_covering(fam, q, seed=seed)
        assert sim.covered_fraction >= 0.5
        assert len(sim.permutations) <= sim.budget


# ------------------------------------------------------------------- degrees


def test_degree_examples():
    deg = degree_profile([[0, 1]], (1, 1))
    assert deg == {(0, 1): 1, (1, 0): 1}
    deg = degree_profile([[0, 0, 1], [1, 0, 0]], (2, 1))
    assert set(deg.values()) == {4}
    full = degree_profile(type_class_sequences((2, 2)), (2, 2))
    assert set(full.values()) == {24}


@pytest.mark.parametrize("counts", [(2, 2), (3, 1), (3, 3), (2, 2, 1)])
def test_degree_uniform_random_sets(counts):
    T = type_class_sequences(counts)
    rng = np.random.default_rng(sum(counts))
    A = T[rng.choice(len(T), max(1, len(T) // 3), replace=False)]
    deg = degree_profile(A, counts)
    n = sum(counts)
    assert set(deg.values()) == {len(A) * math.factorial(n) // len(T)}


# --------------------------------------------------------- unique codewords


def test_unique_single_codeword():
    frac, _ = unique_codeword_fraction(8, 0.0, (4, 4), trials=100)
    assert frac == 0.0


def test_unique_precondition():
    with pytest.raises(ValidationError):
        unique_codeword_fraction(4, 0.2, (4, 0), trials=10)


@pytest.mark.parametrize("n,counts", [(8, (4, 4)), (6, (3, 3)), (10, (5, 5))])
def test_valid_bounds_dominate_exact_probability(n, counts):
    rate = math.log(4) / n
    b = unique_codeword_bounds(n, rate, counts)
    M = codebook_size(n, rate)
    exact = unique_count_cdf(math.comb(n, counts[0]), M, M // 2)
    assert exact <= b["counting"] + 1e-15
    assert exact <= b["type_class"] + 1e-15


def test_empirical_fraction_matches_occupancy_law():
    n, counts = 8, (4, 4)
    rate = math.log(4) / n
    frac, _ = unique_codeword_fraction(n, rate, counts, trials=200_000, seed=1)
    exact = unique_count_cdf(70, 4, 2)
    sigma = math.sqrt(exact * (1 - exact) / 200_000)
    assert abs(frac - exact) <= 4 * sigma
