"""Finite-alphabet probability objects, information measures and type combinatorics.

All information quantities are in nats. ``0 log 0`` is taken as 0 and a
divergence with a support failure is ``math.inf``.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.special import gammaln

from .config import PMF_TOL, ResourceError, ValidationError, get_caps

INF = math.inf


def _xlogx(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log(p[pos])
    return out


def check_pmf(p, name: str = "pmf") -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValidationError(f"{name} has negative or non-finite entries")
    if abs(arr.sum() - 1.0) > PMF_TOL:
        raise ValidationError(f"{name} sums to {arr.sum()!r}, not 1")
    return arr


def check_channel(w, name: str = "channel") -> np.ndarray:
    arr = np.asarray(w, dtype=float)
    if arr.ndim != 2 or arr.size == 0:
        raise ValidationError(f"{name} must be a non-empty matrix")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValidationError(f"{name} has negative or non-finite entries")
    bad = np.abs(arr.sum(axis=1) - 1.0) > PMF_TOL
    if np.any(bad):
        raise ValidationError(f"{name} rows {np.flatnonzero(bad).tolist()} do not sum to 1")
    return arr


def check_joint(j, name: str = "joint") -> np.ndarray:
    arr = np.asarray(j, dtype=float)
    if arr.ndim < 1:
        raise ValidationError(f"{name} must have at least one axis")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValidationError(f"{name} has negative or non-finite entries")
    if abs(arr.sum() - 1.0) > PMF_TOL:
        raise ValidationError(f"{name} has total mass {arr.sum()!r}")
    return arr


@dataclass(frozen=True)
class Pmf:
    probs: np.ndarray

    def __post_init__(self):
        arr = check_pmf(self.probs)
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    @property
    def alphabet_size(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class CondPmf:
    rows: np.ndarray

    def __post_init__(self):
        arr = check_channel(self.rows)
        arr.setflags(write=False)
        object.__setattr__(self, "rows", arr)

    @property
    def input_size(self) -> int:
        return self.rows.shape[0]

    @property
    def output_size(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class JointPmf:
    tensor: np.ndarray

    def __post_init__(self):
        arr = check_joint(self.tensor)
        arr.setflags(write=False)
        object.__setattr__(self, "tensor", arr)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.tensor.shape

    def marginal(self, axes: int | Sequence[int]) -> np.ndarray:
        if isinstance(axes, int):
            axes = (axes,)
        drop = tuple(a for a in range(self.tensor.ndim) if a not in axes)
        return self.tensor.sum(axis=drop)


@dataclass(frozen=True)
class TypeVector:
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if not counts or any(c < 0 for c in counts):
            raise ValidationError("type counts must be non-negative and non-empty")
        if sum(counts) < 1:
            raise ValidationError("type must have n >= 1")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def k(self) -> int:
        return len(self.counts)

    def pmf(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.n


def _arr(x) -> np.ndarray:
    if isinstance(x, Pmf):
        return x.probs
    if isinstance(x, CondPmf):
        return x.rows
    if isinstance(x, JointPmf):
        return x.tensor
    if isinstance(x, TypeVector):
        return x.pmf()
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------- measures


def entropy(p) -> float:
    p = check_pmf(_arr(p))
    return float(max(0.0, -_xlogx(p).sum()))


def kl_divergence(q, p) -> float:
    q = check_pmf(_arr(q), "q")
    p = check_pmf(_arr(p), "p")
    if q.shape != p.shape:
        raise ValidationError(f"alphabet mismatch {q.shape} vs {p.shape}")
    s = q > 0
    if np.any(p[s] == 0):
        return INF
    return float(max(0.0, np.sum(q[s] * (np.log(q[s]) - np.log(p[s])))))


def kl_conditional(q_cond, p_cond, p_x) -> float:
    """D(Q_{Y|X} || P_{Y|X} | P_X) = sum_x P_X(x) D(Q(.|x) || P(.|x))."""
    q = check_channel(_arr(q_cond), "Q")
    p = check_channel(_arr(p_cond), "P")
    px = check_pmf(_arr(p_x), "P_X")
    if q.shape != p.shape or q.shape[0] != px.size:
        raise ValidationError("dimension mismatch in conditional divergence")
    total = 0.0
    for x in np.flatnonzero(px > 0):
        d = kl_divergence(q[x], p[x])
        if d == INF:
            return INF
        total += px[x] * d
    return float(total)


def _entropy_of(t: np.ndarray) -> float:
    return float(-_xlogx(t).sum())


def mutual_information(joint, axes: tuple[int, int] = (0, 1), given: int | None = None) -> float:
    """I(A;B) or I(A;B|C) for axes of a joint tensor; other axes are summed out."""
    j = check_joint(_arr(joint))
    nd = j.ndim
    keep = set(axes) | ({given} if given is not None else set())
    if len(set(axes)) != 2 or any(a < 0 or a >= nd for a in keep):
        raise ValidationError(f"bad axes {axes} / given {given} for a {nd}-axis joint")

    def h(sub: set[int]) -> float:
        if not sub:
            return 0.0
        drop = tuple(a for a in range(nd) if a not in sub)
        return _entropy_of(j.sum(axis=drop))

    a, b = axes
    if given is None:
        val = h({a}) + h({b}) - h({a, b})
    else:
        c = given
        val = h({a, c}) + h({b, c}) - h({a, b, c}) - h({c})
    return float(max(0.0, val))


def conditional_entropy(joint, target: int, given: Sequence[int]) -> float:
    j = check_joint(_arr(joint))
    given = tuple(given)
    both = tuple(a for a in range(j.ndim) if a not in (target, *given))
    jt = j.sum(axis=both) if both else j
    marg = j.sum(axis=tuple(a for a in range(j.ndim) if a not in given)) if given else np.array(1.0)
    return float(max(0.0, _entropy_of(jt) - _entropy_of(np.atleast_1d(marg))))


def channel_mi(p_x, w) -> float:
    """I(P_X, W) for an input pmf and a row-stochastic channel."""
    px = check_pmf(_arr(p_x), "P_X")
    w = check_channel(_arr(w))
    return mutual_information(px[:, None] * w)


# ------------------------------------------------------------------- types


def enumerate_types(n: int, k: int) -> list[TypeVector]:
    """All compositions of n into k parts in lexicographic order."""
    if n < 1 or k < 1:
        raise ValidationError("need n >= 1 and k >= 1")
    count = math.comb(n + k - 1, k - 1)
    if count > get_caps().max_types:
        raise ResourceError(f"{count} types exceed cap {get_caps().max_types}")
    return [TypeVector(c) for c in _compositions(n, k)]


def _compositions(n: int, k: int) -> Iterator[tuple[int, ...]]:
    if k == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, k - 1):
            yield (first, *rest)


def type_class_log_size(t: TypeVector | Sequence[int]) -> float:
    counts = np.asarray(t.counts if isinstance(t, TypeVector) else t, dtype=float)
    n = counts.sum()
    return float(gammaln(n + 1) - gammaln(counts + 1).sum())


def type_class_size(t: TypeVector | Sequence[int]) -> int:
    """Exact multinomial coefficient (big integer)."""
    counts = t.counts if isinstance(t, TypeVector) else tuple(int(c) for c in t)
    out = math.factorial(sum(counts))
    for c in counts:
        out //= math.factorial(c)
    return out


def empirical_types(x: Sequence[int], y: Sequence[int] | None = None, x_size: int | None = None,
                    y_size: int | None = None):
    """Type of x, or joint count matrix of (x, y) when y is given."""
    xa = np.asarray(x, dtype=int)
    if xa.ndim != 1 or xa.size == 0:
        raise ValidationError("x must be a non-empty sequence")
    kx = x_size if x_size is not None else int(xa.max()) + 1
    if xa.min() < 0 or xa.max() >= kx:
        raise ValidationError("symbol outside the x alphabet")
    if y is None:
        return TypeVector(tuple(np.bincount(xa, minlength=kx).tolist()))
    ya = np.asarray(y, dtype=int)
    if ya.shape != xa.shape:
        raise ValidationError("sequence lengths differ")
    ky = y_size if y_size is not None else int(ya.max()) + 1
    if ya.min() < 0 or ya.max() >= ky:
        raise ValidationError("symbol outside the y alphabet")
    return np.bincount(xa * ky + ya, minlength=kx * ky).reshape(kx, ky)


def conditional_type(x: Sequence[int], y: Sequence[int], x_size: int | None = None,
                     y_size: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Empirical P_{y|x} rows and a mask of visited x symbols (unvisited rows are zero)."""
    joint = empirical_types(x, y, x_size, y_size)
    row = joint.sum(axis=1)
    visited = row > 0
    cond = np.zeros(joint.shape)
    cond[visited] = joint[visited] / row[visited, None]
    return cond, visited


def type_class_sequences(t: TypeVector | Sequence[int]) -> np.ndarray:
    """All sequences of a type class in lexicographic order, as an (N, n) int array."""
    counts = list(t.counts if isinstance(t, TypeVector) else t)
    size = type_class_size(counts)
    if size > get_caps().max_type_class:
        raise ResourceError(f"type class of size {size} exceeds cap")
    n = sum(counts)
    out = np.empty((size, n), dtype=np.int64)
    row = 0
    buf = [0] * n

    def rec(pos: int):
        nonlocal row
        if pos == n:
            out[row] = buf
            row += 1
            return
        for a, c in enumerate(counts):
            if c:
                counts[a] -= 1
                buf[pos] = a
                rec(pos + 1)
                counts[a] += 1

    rec(0)
    return out


def all_sequences(n: int, k: int) -> Iterator[tuple[int, ...]]:
    return itertools.product(range(k), repeat=n)


def _check_rankable(counts: Sequence[int]) -> int:
    size = type_class_size(counts)
    if size * max(1, sum(counts)) >= 2**62:
        raise ResourceError("type class too large for 64-bit ranking")
    return size


def rank_in_type_class(seqs, counts: Sequence[int]) -> np.ndarray:
    """Lexicographic ranks of sequences inside T(counts); vectorized over rows.

    Ranks agree with the row order of ``type_class_sequences``. Rows that do
    not belong to the class get rank -1.
    """
    counts = tuple(int(c) for c in counts)
    size = _check_rankable(counts)
    s = np.atleast_2d(np.asarray(seqs, dtype=np.int64))
    N, n = s.shape
    k = len(counts)
    if n != sum(counts):
        raise ValidationError("sequence length does not match the type")
    if k == 2:
        return _rank_binary(s, counts)
    rem = np.tile(np.asarray(counts, dtype=np.int64), (N, 1))
    mult = np.full(N, size, dtype=np.int64)
    rank = np.zeros(N, dtype=np.int64)
    ok = (s >= 0).all(axis=1) & (s < k).all(axis=1)
    sc = np.clip(s, 0, k - 1)
    idx = np.arange(N)
    for i in range(n):
        r = n - i
        sym = sc[:, i]
        for b in range(k - 1):
            below = sym > b
            rank += np.where(below, mult * rem[:, b] // r, 0)
        have = rem[idx, sym]
        ok &= have > 0
        mult = np.where(have > 0, mult * np.maximum(have, 1) // r, mult)
        rem[idx, sym] -= 1
    rank[~ok] = -1
    return rank


@functools.lru_cache(maxsize=64)
def _binom_table(n: int) -> np.ndarray:
    """t[m, j + 1] = C(m, j) for 0 <= m <= n, with t[m, 0] = C(m, -1) = 0."""
    t = np.zeros((n + 1, n + 2), dtype=np.int64)
    for m in range(n + 1):
        for j in range(m + 1):
            t[m, j + 1] = math.comb(m, j)
    return t


def _rank_binary(s: np.ndarray, counts: tuple[int, ...]) -> np.ndarray:
    """Binary fast path: add C(n-i-1, zeros_left - 1) at every position holding a 1."""
    N, n = s.shape
    z = counts[0]
    ok = ((s == 0) | (s == 1)).all(axis=1) & ((s == 0).sum(axis=1) == z)
    zeros_before = np.cumsum(s == 0, axis=1) - (s == 0)
    left = np.clip(z - zeros_before, 0, n)
    rest = n - 1 - np.arange(n)
    tab = _binom_table(n)
    terms = np.where(s == 1, tab[rest[None, :], left], 0)
    rank = terms.sum(axis=1)
    rank[~ok] = -1
    return rank


def unrank_in_type_class(ranks, counts: Sequence[int]) -> np.ndarray:
    """Inverse of ``rank_in_type_class``."""
    counts = tuple(int(c) for c in counts)
    size = _check_rankable(counts)
    r_in = np.atleast_1d(np.asarray(ranks, dtype=np.int64)).copy()
    if np.any(r_in < 0) or np.any(r_in >= size):
        raise ValidationError("rank out of range")
    N = r_in.size
    n = sum(counts)
    k = len(counts)
    rem = np.tile(np.asarray(counts, dtype=np.int64), (N, 1))
    mult = np.full(N, size, dtype=np.int64)
    out = np.empty((N, n), dtype=np.int64)
    for i in range(n):
        r = n - i
        chosen = np.full(N, -1, dtype=np.int64)
        for b in range(k):
            block = mult * rem[:, b] // r
            take = (chosen < 0) & (r_in < block)
            chosen[take] = b
            skip = chosen < 0
            r_in[skip] -= block[skip]
        idx = np.arange(N)
        mult = mult * rem[idx, chosen] // r
        rem[idx, chosen] -= 1
        out[:, i] = chosen
    return out


_DENSE_CODE_LIMIT = 1 << 24


class ClassIndex:
    """Rank/unrank for one type class backed by precomputed tables when they fit.

    The full class is materialized once (capped by ``max_type_class``); when
    k**n is small a dense code->rank table replaces the positional ranking.
    Falls back to ``rank_in_type_class``/``unrank_in_type_class`` otherwise.
    """

    def __init__(self, counts: Sequence[int]):
        self.counts = tuple(int(c) for c in counts)
        self.n = sum(self.counts)
        self.k = len(self.counts)
        self.size = type_class_size(self.counts)
        self.seqs = None
        self._table = None
        if self.size <= get_caps().max_type_class:
            self.seqs = type_class_sequences(self.counts)
            if self.k ** self.n <= _DENSE_CODE_LIMIT:
                self._pow = self.k ** np.arange(self.n - 1, -1, -1, dtype=np.int64)
                self._table = np.full(self.k ** self.n, -1, dtype=np.int64)
                self._table[self.seqs @ self._pow] = np.arange(self.size)

    def rank(self, seqs) -> np.ndarray:
        s = np.atleast_2d(np.asarray(seqs, dtype=np.int64))
        if self._table is None or s.shape[1] != self.n:
            return rank_in_type_class(s, self.counts)
        ok = ((s >= 0) & (s < self.k)).all(axis=1)
        out = self._table[np.where(ok[:, None], s, 0) @ self._pow]
        out[~ok] = -1
        return out

    def unrank(self, ranks) -> np.ndarray:
        r = np.atleast_1d(np.asarray(ranks, dtype=np.int64))
        if self.seqs is None:
            return unrank_in_type_class(r, self.counts)
        if np.any(r < 0) or np.any(r >= self.size):
            raise ValidationError("rank out of range")
        return self.seqs[r]


@functools.lru_cache(maxsize=32)
def class_index(counts: tuple[int, ...]) -> ClassIndex:
    return ClassIndex(counts)
