import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ibexp.config import ValidationError
from ibexp.ensemble import (PrefixLaw, cc_conditional, cc_marginal,
                            prefix_suffix_typical_probability, replacement_rhs, robust_close,
                            verify_replacement_bound, window_atypical_probability)
from ibexp.types_core import enumerate_types


def brute_class(counts):
    """Type class by filtering all k^n sequences (independent of the library enumerator)."""
    k, n = len(counts), sum(counts)
    return [s for s in itertools.product(range(k), repeat=n)
            if all(s.count(a) == c for a, c in enumerate(counts))]


def small_compositions(n_max=7, k_max=3):
    for n in range(1, n_max + 1):
        for k in range(1, k_max + 1):
            for t in enumerate_types(n, k):
                yield t.counts


# ------------------------------------------------------------ exact laws


def test_marginal_examples():
    assert cc_marginal((2, 1), 2).probs == (Fraction(2, 3), Fraction(1, 3))
    assert cc_marginal((0, 1), 1).probs == (Fraction(0), Fraction(1))
    assert cc_marginal((2, 2), 4).probs == (Fraction(1, 2), Fraction(1, 2))
    with pytest.raises(ValidationError):
        cc_marginal((2, 1), 4)


def test_conditional_examples():
    assert cc_conditional(PrefixLaw((2, 1), (0,))).probs == (Fraction(1, 2), Fraction(1, 2))
    assert cc_conditional(PrefixLaw((2, 1), (1,))).probs == (Fraction(1), Fraction(0))
    with pytest.raises(ValidationError):
        cc_conditional(PrefixLaw((2, 1), (0, 1, 0)))
    with pytest.raises(ValidationError):
        cc_conditional(PrefixLaw((2, 1), (1, 1)))
    assert not PrefixLaw((2, 1), (1, 1)).supported


@pytest.mark.parametrize("counts", list(small_compositions()))
def test_marginal_and_conditional_match_enumeration(counts):
    seqs = brute_class(counts)
    n, k = sum(counts), len(counts)
    for i in range(1, n + 1):
        c = Counter(s[i - 1] for s in seqs)
        assert cc_marginal(counts, i).probs == tuple(Fraction(c[a], len(seqs)) for a in range(k))
    for i in range(n):
        groups: dict = {}
        for s in seqs:
            groups.setdefault(s[:i], Counter())[s[i]] += 1
        for pre, c in groups.items():
            tot = sum(c.values())
            expect = tuple(Fraction(c[a], tot) for a in range(k))
            assert cc_conditional(PrefixLaw(counts, pre)).probs == expect


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=2, max_size=3).filter(lambda c: 2 <= sum(c) <= 10),
       st.data(), st.sampled_from([Fraction(1, 10), Fraction(1, 4), Fraction(1, 2)]))
def test_almost_independent_conditional(counts, data, delta):
    # whenever the suffix type is delta-close to P_X, so is the next-symbol law
    n = sum(counts)
    seq = data.draw(st.permutations(sum(([a] * c for a, c in enumerate(counts)), [])))
    i = data.draw(st.integers(0, n - 1))
    law = PrefixLaw(counts, tuple(seq[:i]))
    p = [Fraction(c, n) for c in counts]
    cond = cc_conditional(law).probs
    if robust_close(law.suffix_type().probs, p, delta):
        assert robust_close(cond, p, delta)


# ---------------------------------------------------- concentration bounds


def hypergeom_atypical(counts, i, delta):
    """P{window of length i is not delta-typical} from the multivariate hypergeometric law."""
    n = sum(counts)
    p = [Fraction(c, n) for c in counts]
    total = Fraction(0)
    for w in itertools.product(*[range(min(c, i) + 1) for c in counts]):
        if sum(w) != i:
            continue
        prob = Fraction(math.prod(math.comb(c, x) for c, x in zip(counts, w)), math.comb(n, i))
        typical = all(abs(Fraction(x, i) - pa) <= delta * pa for x, pa in zip(w, p))
        if not typical:
            total += prob
    return total


def test_window_example_n8():
    r = window_atypical_probability((4, 4), 4, 1, Fraction(1, 4))
    assert r.exact == hypergeom_atypical((4, 4), 4, Fraction(1, 4))
    assert r.exact == Fraction(34, 70)


def test_window_degenerate_cases():
    assert window_atypical_probability((3, 5), 8, 1, Fraction(1, 100)).exact == 0
    assert window_atypical_probability((3, 5), 3, 2, 10).exact == 0
    with pytest.raises(ValidationError):
        window_atypical_probability((3, 5), 4, 6, Fraction(1, 4))


@pytest.mark.parametrize("counts", [(4, 4), (6, 2), (3, 3, 2), (5, 0, 5), (2, 3, 4), (10,)])
@pytest.mark.parametrize("delta", [Fraction(1, 4), Fraction(1, 2), Fraction(1), Fraction(3)])
def test_window_exact_equals_hypergeometric_and_bound_holds(counts, delta):
    n = sum(counts)
    for i in range(1, n + 1):
        for k in (1, n - i + 1):
            r = window_atypical_probability(counts, i, k, delta)
            assert r.exact == hypergeom_atypical(counts, i, delta)
            if not r.vacuous:
                assert r.exact <= r.bound


def test_window_bound_non_vacuous_somewhere():
    hits = [window_atypical_probability((10,), i, 1, Fraction(3)).vacuous for i in range(1, 11)]
    assert not all(hits)


def test_prefix_suffix_examples():
    assert prefix_suffix_typical_probability((9, 0), 3).exact == 1
    r = prefix_suffix_typical_probability((6, 3), 3)
    assert r.vacuous and r.bound < 0
    brute = brute_class((6, 3))
    p = [Fraction(2, 3), Fraction(1, 3)]
    d = Fraction(9 ** -0.125)

    def typ(seg):
        m = len(seg)
        return all(abs(Fraction(seg.count(a), m) - pa) <= d * pa for a, pa in enumerate(p))

    assert r.exact == Fraction(sum(typ(s[:3]) and typ(s[3:]) for s in brute), len(brute))
    with pytest.raises(ValidationError):
        prefix_suffix_typical_probability((6, 3), 2)


@pytest.mark.parametrize("delta", [Fraction(1), Fraction(2), Fraction(6)])
def test_prefix_suffix_user_delta(delta):
    r = prefix_suffix_typical_probability((6, 3), 3, delta)
    if not r.vacuous:
        assert r.exact >= r.bound
    r = prefix_suffix_typical_probability((9,), 3, delta)
    assert r.exact == 1


# -------------------------------------------------------- replacement lemma


def test_replacement_independent_is_exact():
    rng = np.random.default_rng(0)
    px, py = rng.dirichlet([1, 1, 1]), rng.dirichlet([1, 1])
    z = rng.dirichlet([1, 1, 1], size=(3, 2))
    joint = px[:, None, None] * py[None, :, None] * z
    r = verify_replacement_bound(joint, [0, 1, 2], 0.1)
    assert r.lhs_gap == pytest.approx(0, abs=1e-12) and r.rhs_bound >= 0 and r.holds


def test_replacement_empty_subset_bound_dominates():
    rng = np.random.default_rng(1)
    joint = rng.dirichlet(np.ones(8)).reshape(2, 2, 2)
    r = verify_replacement_bound(joint, [], 0.3)
    assert r.rhs_bound >= math.log(2) and r.holds


def test_replacement_precondition_reports_offender():
    joint = np.zeros((2, 2, 1))
    joint[0, 0, 0] = 0.5
    joint[1, 1, 0] = 0.5
    with pytest.raises(ValidationError, match=r"\[0, 1\]"):
        verify_replacement_bound(joint, [0, 1], 0.1)


def test_replacement_rhs_formula():
    d, ly = 0.1, math.log(3)
    expect = 0.25 * ly + d * ly - (2 * d * 1.1 / 0.9) * math.log(2 * d / (0.9 * 3))
    assert replacement_rhs(0.75, d, 3) == pytest.approx(expect, rel=1e-14)


def _close_instance(rng, delta):
    """Random P_XYZ on 2x2x2 whose rows P_Y|X(.|x), x in E, are delta-close to P_Y."""
    while True:
        px = rng.dirichlet([1, 1])
        E = [x for x in range(2) if rng.random() < 0.7]
        base = rng.dirichlet([2, 2])
        cond = rng.dirichlet([1, 1], size=2)
        for x in E:
            t = rng.uniform(-1, 1) * delta * 0.5 * base.min()
            cond[x] = base + np.array([t, -t])
        py = px @ cond
        if all(np.all(np.abs(cond[x] - py) <= delta * py) for x in E):
            z = rng.dirichlet([1, 1], size=(2, 2))
            return px[:, None, None] * cond[:, :, None] * z, E


def test_replacement_bound_on_1000_instances():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        joint, E = _close_instance(rng, 0.1)
        r = verify_replacement_bound(joint, E, 0.1)
        assert r.holds, (r, E)
