"""Exact laws of the constant-composition codeword distribution and checks of its concentration bounds.

A codeword is uniform on the type class T_n(P_X).  All laws here are
rational (counts are integers) and kept as ``fractions.Fraction`` until the
reporting boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from .config import ResourceError, ValidationError, VerificationError, get_caps
from .types_core import Pmf, TypeVector, check_joint, type_class_sequences, type_class_size


@dataclass(frozen=True)
class ExactPmf:
    probs: tuple[Fraction, ...]

    def __post_init__(self):
        if sum(self.probs) != 1 or any(p < 0 for p in self.probs):
            raise ValidationError("exact pmf must be non-negative and sum to 1")

    def to_pmf(self) -> Pmf:
        return Pmf(np.array([float(p) for p in self.probs]))

    def __getitem__(self, a: int) -> Fraction:
        return self.probs[a]

    def __len__(self):
        return len(self.probs)


def _as_type(t) -> TypeVector:
    return t if isinstance(t, TypeVector) else TypeVector(tuple(t))


def robust_close(q: Sequence, p: Sequence, delta) -> bool:
    """|q(a) - p(a)| <= delta p(a) for every a (exact when given Fractions)."""
    return all(abs(qa - pa) <= delta * pa for qa, pa in zip(q, p))


def cc_marginal(composition, i: int) -> ExactPmf:
    """Law of the i-th symbol (1-based) of a uniform codeword: the composition itself."""
    q = _as_type(composition)
    if not 1 <= i <= q.n:
        raise ValidationError(f"index {i} outside [1, {q.n}]")
    return ExactPmf(tuple(Fraction(c, q.n) for c in q.counts))


@dataclass(frozen=True)
class PrefixLaw:
    composition: TypeVector
    prefix: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "composition", _as_type(self.composition))
        p = tuple(int(a) for a in self.prefix)
        if any(not 0 <= a < self.composition.k for a in p):
            raise ValidationError("prefix symbol outside the alphabet")
        if len(p) > self.composition.n:
            raise ValidationError("prefix longer than n")
        object.__setattr__(self, "prefix", p)

    @property
    def i(self) -> int:
        return len(self.prefix)

    @property
    def suffix_counts(self) -> tuple[int, ...]:
        used = np.bincount(np.asarray(self.prefix, dtype=np.int64), minlength=self.composition.k)
        return tuple(int(c - u) for c, u in zip(self.composition.counts, used))

    @property
    def supported(self) -> bool:
        return all(c >= 0 for c in self.suffix_counts)

    def suffix_type(self) -> ExactPmf:
        m = self.composition.n - self.i
        if m == 0:
            raise ValidationError("prefix is the whole codeword; the suffix is empty")
        return ExactPmf(tuple(Fraction(c, m) for c in self.suffix_counts))


def cc_conditional(law: PrefixLaw) -> ExactPmf:
    """Law of the next symbol given a prefix: the type of the remaining suffix."""
    if not law.supported:
        raise ValidationError("prefix is not extendable to the type class (negative suffix count)")
    return law.suffix_type()


class BoundCheck(NamedTuple):
    exact: Fraction
    bound: float
    vacuous: bool


def _enum_cap(q: TypeVector):
    if type_class_size(q.counts) > get_caps().max_type_class:
        raise ResourceError("type class exceeds the enumeration cap")


def _typical_rows(seqs: np.ndarray, p: Sequence[Fraction], delta) -> np.ndarray:
    """Row-wise robust typicality of segments, evaluated exactly in integers."""
    m = seqs.shape[1]
    k = len(p)
    counts = (seqs[..., None] == np.arange(k)).sum(axis=1).astype(object)  # exact big ints
    ok = np.ones(len(seqs), dtype=bool)
    # |c/m - p| <= delta p with p = num/den and delta = dn/dd, in integers
    dlt = Fraction(delta)
    for a, pa in enumerate(p):
        lhs = np.abs(counts[:, a] * pa.denominator * dlt.denominator
                     - m * pa.numerator * dlt.denominator)
        rhs = dlt.numerator * m * pa.numerator
        ok &= lhs <= rhs
    return ok


def _p_min(q: TypeVector) -> float:
    return min(c for c in q.counts if c > 0) / q.n


def window_atypical_probability(composition, i: int, k: int, delta) -> BoundCheck:
    """P{window X_k..X_{k+i-1} is not delta-typical} by enumeration, against the concentration bound.

    bound = 2|X| exp(|X| log(n+1) - i delta^2 P_min^2).  Raises if the exact
    value exceeds a non-vacuous bound.
    """
    q = _as_type(composition)
    n = q.n
    if i < 1 or k < 1 or k + i - 1 > n:
        raise ValidationError("window [k, k+i-1] must lie inside [1, n]")
    if not delta > 0:
        raise ValidationError("delta must be positive")
    _enum_cap(q)
    seqs = type_class_sequences(q)
    p = [Fraction(c, n) for c in q.counts]
    ok = _typical_rows(seqs[:, k - 1:k - 1 + i], p, delta)
    exact = Fraction(int((~ok).sum()), len(seqs))
    X = q.k
    bound = 2 * X * math.exp(X * math.log(n + 1) - i * float(delta) ** 2 * _p_min(q) ** 2)
    vacuous = bound >= 1
    if not vacuous and exact > bound:
        raise VerificationError(f"window bound violated: {float(exact)} > {bound}")
    return BoundCheck(exact, bound, vacuous)


def prefix_suffix_typical_probability(composition, i: int, delta=None) -> BoundCheck:
    """P{prefix X^i and suffix X_{i+1}^n both delta-typical}, default delta = n^{-1/8}.

    bound = 1 - 4|X| exp(|X| log(n+1) - sqrt(n) delta^2 P_min^2), which at the
    default delta is 1 - 4|X| exp(|X| log(n+1) - n^{1/4} P_min^2).
    """
    q = _as_type(composition)
    n = q.n
    if not (math.sqrt(n) <= i <= n - math.sqrt(n)):
        raise ValidationError(f"i must satisfy sqrt(n) <= i <= n - sqrt(n); got i={i}, n={n}")
    if delta is None:
        delta = Fraction(n ** -0.125)
    elif not delta > 0:
        raise ValidationError("delta must be positive")
    _enum_cap(q)
    seqs = type_class_sequences(q)
    p = [Fraction(c, n) for c in q.counts]
    ok = _typical_rows(seqs[:, :i], p, delta) & _typical_rows(seqs[:, i:], p, delta)
    exact = Fraction(int(ok.sum()), len(seqs))
    X = q.k
    bound = 1 - 4 * X * math.exp(X * math.log(n + 1)
                                 - math.sqrt(n) * float(delta) ** 2 * _p_min(q) ** 2)
    vacuous = bound <= 0
    if not vacuous and exact < bound:
        raise VerificationError(f"prefix/suffix bound violated: {float(exact)} < {bound}")
    return BoundCheck(exact, bound, vacuous)


# ------------------------------------------------------------ replacement lemma


def _cond_entropy_y_given_zx(j: np.ndarray) -> float:
    """H(Y | Z, X) for a joint indexed [x, y, z]."""
    pzx = j.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(j > 0, j / np.where(pzx > 0, pzx, 1.0), 1.0)
        return float(-(np.where(j > 0, j * np.log(r), 0.0)).sum())


class ReplacementCheck(NamedTuple):
    lhs_gap: float
    rhs_bound: float
    holds: bool


def replacement_rhs(p_e: float, delta: float, y_size: int) -> float:
    """(1 - P_X[E]) log|Y| + delta log|Y| - (2 delta (1+delta)/(1-delta)) log(2 delta / ((1-delta)|Y|))."""
    ly = math.log(y_size)
    tail = 0.0
    if delta > 0:
        tail = -(2 * delta * (1 + delta) / (1 - delta)) * math.log(2 * delta / ((1 - delta) * y_size))
    return (1 - p_e) * ly + delta * ly + tail


def verify_replacement_bound(joint, subset_E: Sequence[int], delta: float) -> ReplacementCheck:
    """Entropy change when Y is replaced by an independent copy with law P_Y.

    joint is P_XYZ indexed [x, y, z].  The replaced law is P_X P_Y P_{Z|YX};
    where P_{Z|YX}(.|y,x) is undefined (P_XY(x,y)=0) it is taken uniform on Z.
    Precondition: P_{Y|X}(.|x) is delta-close to P_Y for every x in E.
    """
    j = check_joint(np.asarray(joint, dtype=float), "joint")
    if j.ndim != 3:
        raise ValidationError("joint must be indexed [x, y, z]")
    if not 0 <= delta < 1:
        raise ValidationError("delta must lie in [0, 1)")
    E = sorted(set(int(x) for x in subset_E))
    if any(not 0 <= x < j.shape[0] for x in E):
        raise ValidationError("subset E outside the X alphabet")
    px = j.sum(axis=(1, 2))
    pxy = j.sum(axis=2)
    py = pxy.sum(axis=0)
    bad = []
    for x in E:
        if px[x] <= 0:
            continue
        cond = pxy[x] / px[x]
        if np.any(np.abs(cond - py) > delta * py + 1e-15):
            bad.append(x)
    if bad:
        raise ValidationError(f"P_Y|X(.|x) is not delta-close to P_Y for x in {bad}")
    with np.errstate(divide="ignore", invalid="ignore"):
        z_given = np.where(pxy[..., None] > 0, j / np.where(pxy > 0, pxy, 1.0)[..., None],
                           1.0 / j.shape[2])
    tilde = px[:, None, None] * py[None, :, None] * z_given
    gap = abs(_cond_entropy_y_given_zx(j) - _cond_entropy_y_given_zx(tilde))
    rhs = replacement_rhs(float(px[E].sum()) if E else 0.0, delta, j.shape[1])
    return ReplacementCheck(gap, rhs, gap <= rhs + 1e-12)
