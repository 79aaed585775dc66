import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ibexp.config import ResourceError, ValidationError, get_caps, set_caps
from ibexp.types_core import (CondPmf, JointPmf, Pmf, TypeVector, all_sequences, channel_mi,
                              class_index, conditional_entropy, conditional_type,
                              empirical_types, entropy, enumerate_types, kl_conditional,
                              kl_divergence, mutual_information, rank_in_type_class,
                              type_class_log_size, type_class_sequences, type_class_size,
                              unrank_in_type_class)


def pmfs(k_min=1, k_max=5):
    return st.integers(k_min, k_max).flatmap(
        lambda k: st.lists(st.floats(0, 1), min_size=k, max_size=k)
        .filter(lambda v: sum(v) > 1e-3)
        .map(lambda v: np.asarray(v) / sum(v)))


def joints(dims=(2, 3, 2)):
    size = int(np.prod(dims))
    return st.lists(st.floats(0, 1), min_size=size, max_size=size) \
        .filter(lambda v: sum(v) > 1e-3) \
        .map(lambda v: (np.asarray(v) / sum(v)).reshape(dims))


# ------------------------------------------------------------------ pmfs


def test_pmf_rejects_bad_mass_and_negatives():
    with pytest.raises(ValidationError):
        Pmf(np.array([0.5, 0.6]))
    with pytest.raises(ValidationError):
        Pmf(np.array([1.5, -0.5]))
    assert Pmf(np.array([0.25, 0.75])).alphabet_size == 2


def test_pmf_tolerance_is_not_renormalized():
    p = np.array([0.5, 0.5 + 5e-13])
    assert Pmf(p).probs[1] == p[1]
    with pytest.raises(ValidationError):
        Pmf(np.array([0.5, 0.5 + 1e-9]))


def test_condpmf_and_joint_shapes():
    w = CondPmf(np.array([[0.9, 0.1, 0.0], [0.2, 0.3, 0.5]]))
    assert (w.input_size, w.output_size) == (2, 3)
    with pytest.raises(ValidationError):
        CondPmf(np.array([[0.9, 0.2]]))
    j = JointPmf(np.full((2, 3, 2), 1 / 12))
    assert np.allclose(j.marginal(1), 1 / 3)
    assert np.allclose(j.marginal((0, 2)), 1 / 4)


# --------------------------------------------------------------- measures


def test_entropy_examples():
    assert entropy([1.0, 0.0]) == 0.0
    assert entropy([0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)
    assert entropy(np.full(5, 0.2)) == pytest.approx(math.log(5), abs=1e-14)
    with pytest.raises(ValidationError):
        entropy([0.3, 0.3])


@given(pmfs())
def test_entropy_range(p):
    h = entropy(p)
    assert -1e-15 <= h <= math.log(len(p)) + 1e-12


def test_kl_examples():
    assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))
    with pytest.raises(ValidationError):
        kl_divergence([1.0], [0.5, 0.5])


@given(pmfs(2, 4).flatmap(lambda p: st.tuples(st.just(p), pmfs(len(p), len(p)))))
def test_kl_nonnegative_and_zero_on_self(pq):
    q, p = pq
    assert kl_divergence(q, p) >= 0
    assert kl_divergence(q, q) == pytest.approx(0.0, abs=1e-12)


def test_kl_conditional_weights_rows():
    q = np.array([[1.0, 0.0], [0.5, 0.5]])
    p = np.array([[0.5, 0.5], [0.5, 0.5]])
    assert kl_conditional(q, p, [0.25, 0.75]) == pytest.approx(0.25 * math.log(2))
    assert kl_conditional(q, p, [0.0, 1.0]) == 0.0


def test_mutual_information_examples():
    assert mutual_information(np.diag([0.5, 0.5])) == pytest.approx(math.log(2))
    assert mutual_information(np.full((2, 2), 0.25)) == 0.0
    # BSC(0.1) with uniform input: log 2 - h(0.1)
    h01 = -(0.1 * math.log(0.1) + 0.9 * math.log(0.9))
    assert channel_mi([0.5, 0.5], [[0.9, 0.1], [0.1, 0.9]]) == pytest.approx(math.log(2) - h01,
                                                                             abs=1e-15)


@settings(max_examples=200)
@given(joints())
def test_chain_identity(j):
    # I(X;U) - I(Y;U) + I(Y;U|X) = I(X;U|Y), axes (X, Y, U) = (0, 1, 2)
    lhs = (mutual_information(j, (0, 2)) - mutual_information(j, (1, 2))
           + mutual_information(j, (1, 2), given=0))
    rhs = mutual_information(j, (0, 2), given=1)
    assert lhs == pytest.approx(rhs, abs=1e-10)


@given(joints((3, 2)))
def test_mi_entropy_relations(j):
    hx = entropy(j.sum(1))
    assert mutual_information(j) == pytest.approx(hx - conditional_entropy(j, 0, (1,)), abs=1e-12)
    assert mutual_information(j) <= min(hx, entropy(j.sum(0))) + 1e-12


def test_mutual_information_bad_axes():
    with pytest.raises(ValidationError):
        mutual_information(np.full((2, 2), 0.25), axes=(0, 0))
    with pytest.raises(ValidationError):
        mutual_information(np.full((2, 2), 0.25), axes=(0, 2))


# ------------------------------------------------------------------ types


def test_enumerate_types_small():
    assert [t.counts for t in enumerate_types(2, 2)] == [(0, 2), (1, 1), (2, 0)]
    assert len(enumerate_types(5, 3)) == math.comb(7, 2)
    assert [t.counts for t in enumerate_types(3, 1)] == [(3,)]


@given(st.integers(1, 9), st.integers(1, 4))
def test_enumerate_types_count_order_unique(n, k):
    ts = [t.counts for t in enumerate_types(n, k)]
    assert len(ts) == math.comb(n + k - 1, k - 1)
    assert ts == sorted(ts) and len(set(ts)) == len(ts)
    assert all(sum(t) == n for t in ts)


def test_enumerate_types_cap():
    old = get_caps()
    try:
        set_caps(max_types=10)
        with pytest.raises(ResourceError):
            enumerate_types(10, 3)
    finally:
        set_caps(**old.__dict__)


def test_type_class_sizes():
    assert type_class_size((2, 2)) == 6
    assert type_class_size((1, 1, 1)) == 6
    assert type_class_log_size((4, 4)) == pytest.approx(math.log(70), abs=1e-12)


@pytest.mark.parametrize("n,k", [(1, 2), (4, 2), (6, 3), (5, 4), (8, 2)])
def test_type_class_sizes_partition_all_sequences(n, k):
    assert sum(type_class_size(t) for t in enumerate_types(n, k)) == k ** n


@given(st.lists(st.integers(0, 12), min_size=1, max_size=4).filter(lambda c: sum(c) > 0))
def test_type_class_size_sandwich(counts):
    t = TypeVector(tuple(counts))
    nh = t.n * entropy(t.pmf())
    ls = type_class_log_size(t)
    assert -t.k * math.log(t.n + 1) + nh - 1e-9 <= ls <= nh + 1e-9
    assert ls == pytest.approx(math.log(type_class_size(t)), abs=1e-9)


def test_empirical_and_conditional_types():
    assert empirical_types([0, 1, 1, 2]).counts == (1, 2, 1)
    j = empirical_types([0, 0, 1, 1], [0, 1, 1, 1], 3, 2)
    assert j.tolist() == [[1, 1], [0, 2], [0, 0]]
    cond, visited = conditional_type([0, 0, 1, 1], [0, 1, 1, 1], 3, 2)
    assert cond.tolist() == [[0.5, 0.5], [0.0, 1.0], [0.0, 0.0]]
    assert visited.tolist() == [True, True, False]
    with pytest.raises(ValidationError):
        empirical_types([0, 1], [0])
    with pytest.raises(ValidationError):
        empirical_types([0, 3], x_size=2)


@given(st.lists(st.integers(0, 2), min_size=1, max_size=20), st.data())
def test_joint_type_counts_match_occurrences(x, data):
    y = data.draw(st.lists(st.integers(0, 1), min_size=len(x), max_size=len(x)))
    j = empirical_types(x, y, 3, 2)
    for a, b in itertools.product(range(3), range(2)):
        assert j[a, b] == sum(1 for u, v in zip(x, y) if (u, v) == (a, b))


def test_type_class_sequences_lex_and_complete():
    seqs = type_class_sequences((1, 2))
    assert seqs.tolist() == [[0, 1, 1], [1, 0, 1], [1, 1, 0]]
    brute = sorted(s for s in all_sequences(5, 3) if np.bincount(s, minlength=3).tolist() == [2, 2, 1])
    assert [tuple(r) for r in type_class_sequences((2, 2, 1)).tolist()] == brute


@pytest.mark.parametrize("counts", [(3, 3), (2, 0, 3), (2, 2, 2), (5, 1), (1,), (4, 3, 1)])
def test_rank_unrank_roundtrip(counts):
    seqs = type_class_sequences(counts)
    r = rank_in_type_class(seqs, counts)
    assert r.tolist() == list(range(len(seqs)))
    assert (unrank_in_type_class(r, counts) == seqs).all()
    idx = class_index(counts)
    assert (idx.rank(seqs) == r).all() and (idx.unrank(r) == seqs).all()


@given(st.integers(1, 12), st.data())
def test_binary_rank_matches_generic_positional_rank(n, data):
    z = data.draw(st.integers(0, n))
    counts = (z, n - z)
    seqs = type_class_sequences(counts)
    # the ternary path with an empty third symbol shares no code with the binary one
    generic = rank_in_type_class(seqs, counts + (0,))
    assert (rank_in_type_class(seqs, counts) == generic).all()


def test_rank_flags_foreign_sequences():
    counts = (2, 2)
    bad = np.array([[0, 0, 0, 1], [0, 1, 2, 1], [1, 1, 0, 0]])
    assert rank_in_type_class(bad, counts).tolist() == [-1, -1, 5]
    assert class_index(counts).rank(bad).tolist() == [-1, -1, 5]
    with pytest.raises(ValidationError):
        unrank_in_type_class([6], counts)
