"""Covering of type classes: auxiliary-sequence covers, binning and permutation covers.

Sequences inside a type class are handled through their lexicographic ranks
(see ``types_core.rank_in_type_class``), so a cover is a boolean mask over
``range(|T|)``.  Every constructive routine here is followed by an
independent membership sweep over the full type class; nothing is assumed
from the probabilistic existence arguments.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .config import ResourceError, ValidationError, VerificationError, get_caps
from .types_core import (TypeVector, class_index, entropy, rank_in_type_class,
                         type_class_log_size, type_class_sequences, type_class_size)

# ------------------------------------------------------------------ permutations


@dataclass(frozen=True)
class Permutation:
    """Bijection on positions; ``p.apply(x)[i] = x[p.mapping[i]]``."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        m = tuple(int(i) for i in self.mapping)
        if sorted(m) != list(range(len(m))):
            raise ValidationError("mapping is not a bijection on [n]")
        object.__setattr__(self, "mapping", m)

    @property
    def n(self) -> int:
        return len(self.mapping)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    def apply(self, seqs) -> np.ndarray:
        s = np.asarray(seqs)
        return s[..., list(self.mapping)]

    def compose(self, other: "Permutation") -> "Permutation":
        """self o other, acting as self[other[x]]."""
        if other.n != self.n:
            raise ValidationError("length mismatch")
        return Permutation(tuple(other.mapping[i] for i in self.mapping))

    __matmul__ = compose

    def inverse(self) -> "Permutation":
        inv = [0] * self.n
        for i, j in enumerate(self.mapping):
            inv[j] = i
        return Permutation(tuple(inv))


def _as_type(t) -> TypeVector:
    return t if isinstance(t, TypeVector) else TypeVector(tuple(t))


def _member_array(A, q: TypeVector) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(sorted(set(map(tuple, np.asarray(A).tolist()))), dtype=np.int64))
    if arr.size == 0:
        raise ValidationError("set must be non-empty")
    if arr.shape[1] != q.n:
        raise ValidationError("sequence length does not match the type")
    if np.any(rank_in_type_class(arr, q.counts) < 0):
        raise ValidationError("set is not contained in the type class")
    return arr


def _matching_perms(src, dst, rng) -> np.ndarray:
    """Random mappings m with src[b][m[b]] == dst[b] row-wise (rows of equal type)."""
    src = np.atleast_2d(src)
    dst = np.atleast_2d(dst)
    ps = np.argsort(src + rng.random(src.shape), axis=1, kind="stable")
    pd = np.argsort(dst + rng.random(dst.shape), axis=1, kind="stable")
    m = np.empty_like(ps)
    np.put_along_axis(m, pd, ps, axis=1)
    return m


def _candidates(n, members, targets, n_random, rng, identity=False) -> np.ndarray:
    """Identity (optional), targeted mappings members[i] -> targets[i], then uniform permutations."""
    parts = []
    if identity:
        parts.append(np.arange(n)[None])
    if len(targets):
        parts.append(_matching_perms(members, targets, rng))
    if n_random > 0:
        parts.append(np.argsort(rng.random((n_random, n)), axis=1))
    return np.concatenate(parts)


def lemma_budget(T_size: int, A_size: int, delta: float | None = None) -> int:
    """ceil(|T|/|A| log|T|) + 1, or with log((1-delta)^-1 |T|) for simultaneous covering."""
    if delta is None:
        return math.ceil(T_size / A_size * math.log(T_size)) + 1
    return math.ceil(T_size / A_size * math.log(T_size / (1.0 - delta))) + 1


@dataclass
class PermutationCover:
    permutations: list[Permutation]
    success: bool
    uncovered: int
    budget: int
    restarts: int = 0

    def __len__(self):
        return len(self.permutations)

    def __iter__(self):
        return iter(self.permutations)


def verify_permutation_cover(A, Q_X, perms: Sequence[Permutation]) -> int:
    """Number of sequences of T(Q_X) missed by the union of pi[A] (tuple-set sweep)."""
    q = _as_type(Q_X)
    A = np.asarray(A)
    image = set()
    for p in perms:
        image.update(map(tuple, p.apply(A).tolist()))
    return sum(1 for x in type_class_sequences(q).tolist() if tuple(x) not in image)


def find_covering_permutations(A, Q_X, max_k: int | None = None, seed: int = 0,
                               batch: int = 16, restarts: int = 4) -> PermutationCover:
    """Permutations whose images of A cover T(Q_X).

    Each round draws a batch of candidates (uniform permutations plus ones
    sending a random member of A onto a random uncovered sequence) and keeps
    the one covering the most new sequences.  A failed attempt restarts with
    a fresh stream; after ``restarts`` attempts the best partial cover is
    reported with success=False.
    """
    q = _as_type(Q_X)
    arr = _member_array(A, q)
    T = type_class_size(q.counts)
    budget = lemma_budget(T, len(arr))
    max_k = budget if max_k is None else int(max_k)
    n = q.n
    idx = class_index(q.counts)
    best = None
    for attempt in range(restarts + 1):
        rng = np.random.default_rng([seed, attempt])
        covered = np.zeros(T, dtype=bool)
        perms: list[np.ndarray] = []
        first = attempt == 0
        unc = np.arange(T)
        while not covered.all() and len(perms) < max_k:
            pick = rng.choice(unc, size=min(2 * batch, len(unc)))
            pick = pick[~covered[pick]]
            if len(pick) < batch // 2:
                unc = np.flatnonzero(~covered)
                pick = rng.choice(unc, size=min(batch // 2, len(unc)))
            targets = type_class_sequences_at(q, pick[: batch // 2])
            srcs = arr[rng.integers(len(arr), size=len(targets))]
            cands = _candidates(n, srcs, targets, batch - len(targets) - first, rng, first)
            first = False
            ranks = idx.rank(arr[:, cands].transpose(1, 0, 2).reshape(-1, n)).reshape(len(cands), -1)
            gains = (~covered[ranks]).sum(axis=1)
            j = int(np.argmax(gains))
            if gains[j] == 0:
                break
            perms.append(cands[j])
            covered[ranks[j]] = True
        miss = int((~covered).sum())
        if best is None or miss < best[1]:
            best = (perms, miss, attempt)
        if miss == 0:
            break
    perms, miss, attempt = best
    out = [Permutation(tuple(m)) for m in perms]
    if miss == 0 and verify_permutation_cover(arr, q, out) != 0:
        raise VerificationError("permutation cover failed the membership sweep")
    return PermutationCover(out, miss == 0, miss, budget, attempt)


def type_class_sequences_at(q: TypeVector, ranks) -> np.ndarray:
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.size == 0:
        return np.empty((0, q.n), dtype=np.int64)
    return class_index(q.counts).unrank(ranks)


@dataclass
class SimultaneousCover:
    permutations: list[Permutation]
    covered_fraction: float
    success: bool
    budget: int
    fully_covered: list[bool] = field(default_factory=list)


def find_simultaneous_covering(family: Sequence, Q_X, max_k: int | None = None, seed: int = 0,
                               delta: float = 0.5, batch: int = 24) -> SimultaneousCover:
    """One permutation sequence covering T(Q_X) from as many family members as possible.

    Members may be sets or codebooks with repeated codewords; only unique
    codewords matter.  Candidates are scored by the number of fully covered
    members, ties broken by newly covered (member, sequence) pairs.  Search
    stops at full coverage of every member or when the budget is used.
    """
    q = _as_type(Q_X)
    if not family:
        raise ValidationError("family must be non-empty")
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")
    members = [_member_array(m, q) for m in family]
    T = type_class_size(q.counts)
    a_min = min(len(m) for m in members)
    budget = lemma_budget(T, a_min, delta)
    max_k = budget if max_k is None else int(max_k)
    n = q.n
    J = len(members)
    allm = np.concatenate(members)
    owner = np.repeat(np.arange(J), [len(m) for m in members])
    rng = np.random.default_rng(seed)
    cov = np.zeros((J, T), dtype=bool)
    perms: list[np.ndarray] = []
    first = True
    while len(perms) < max_k and not cov.all():
        open_j = np.flatnonzero(~cov.all(axis=1))
        js = rng.choice(open_j, size=batch // 2)
        targets = type_class_sequences_at(q, [rng.choice(np.flatnonzero(~cov[j])) for j in js])
        srcs = np.array([members[j][rng.integers(len(members[j]))] for j in js])
        cands = _candidates(n, srcs, targets, batch - len(js) - first, rng, first)
        first = False
        cm = cands
        ranks = class_index(q.counts).rank(
            allm[:, cm].transpose(1, 0, 2).reshape(-1, n)).reshape(len(cm), -1)
        best = None
        for m, r in zip(cm, ranks):
            new = cov.copy()
            new[owner, r] = True
            score = (int(new.all(axis=1).sum()), int(new.sum() - cov.sum()))
            if best is None or score > best[0]:
                best = (score, m, new)
        if best[0][1] == 0:
            break
        perms.append(best[1])
        cov = best[2]
    out = [Permutation(tuple(m)) for m in perms]
    full = [verify_permutation_cover(mem, q, out) == 0 for mem in members]
    if full != cov.all(axis=1).tolist():
        raise VerificationError("simultaneous cover disagrees with the membership sweep")
    frac = sum(full) / J
    return SimultaneousCover(out, frac, frac >= delta and len(out) <= budget, budget, full)


def degree_profile(A, Q_X) -> dict[tuple[int, ...], int]:
    """deg(x) = #{permutations pi of [n] : x in pi[A]} for every x in T(Q_X), by full enumeration."""
    q = _as_type(Q_X)
    arr = _member_array(A, q)
    T = type_class_size(q.counts)
    if T * math.factorial(q.n) > get_caps().max_permutation_enum:
        raise ResourceError("n! x |T| exceeds the permutation enumeration cap")
    deg = np.zeros(T, dtype=np.int64)
    for m in itertools.permutations(range(q.n)):
        deg[rank_in_type_class(arr[:, list(m)], q.counts)] += 1
    seqs = type_class_sequences(q)
    return {tuple(s): int(d) for s, d in zip(seqs.tolist(), deg)}


# ------------------------------------------------------------- type covering


@dataclass
class CoveringCode:
    output_type: TypeVector
    cond_type: tuple[tuple[int, ...], ...]
    sequences: np.ndarray
    bins: dict[int, list[int]] = field(default_factory=dict)
    B: float = math.inf
    n_bins: int = 1
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.output_type.n

    def to_json(self) -> str:
        d = {
            "output_type": list(self.output_type.counts),
            "cond_type": [list(r) for r in self.cond_type],
            "sequences": np.asarray(self.sequences).tolist(),
            "bins": {str(k): v for k, v in sorted(self.bins.items())},
            "B": "inf" if math.isinf(self.B) else self.B,
            "n_bins": self.n_bins,
            "diagnostics": self.diagnostics,
        }
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "CoveringCode":
        d = json.loads(s)
        return cls(TypeVector(tuple(d["output_type"])), tuple(tuple(r) for r in d["cond_type"]),
                   np.asarray(d["sequences"], dtype=np.int64),
                   {int(k): list(v) for k, v in d["bins"].items()},
                   math.inf if d["B"] == "inf" else float(d["B"]), int(d["n_bins"]),
                   d.get("diagnostics", {}))

    def bin_of(self) -> np.ndarray:
        out = np.zeros(len(self.sequences), dtype=np.int64)
        for b, idx in self.bins.items():
            out[idx] = b
        return out


def _onehot(seqs: np.ndarray, k: int) -> np.ndarray:
    return (seqs[..., None] == np.arange(k)).astype(np.int64)


def joint_counts(ys: np.ndarray, us: np.ndarray, b: int, c: int) -> np.ndarray:
    """Joint type counts of every (u, y) pair: shape (len(us), len(ys), b, c)."""
    return np.einsum("ynb,mnc->mybc", _onehot(ys, b), _onehot(us, c))


def _check_cond_counts(q: TypeVector, counts) -> np.ndarray:
    J = np.asarray(counts, dtype=np.int64)
    if J.ndim != 2 or J.shape[0] != q.k or np.any(J < 0):
        raise ValidationError("conditional counts must be a non-negative |Y| x |U| integer matrix")
    if not np.array_equal(J.sum(axis=1), np.asarray(q.counts)):
        raise ValidationError("conditional counts do not sum to n Q_Y(y) for every y")
    return J


def _placement(y: np.ndarray, J: np.ndarray, rng=None) -> np.ndarray:
    """u with joint type J against y: canonical (sorted) or random placement per y-symbol."""
    u = np.empty_like(y)
    for b in range(J.shape[0]):
        pos = np.flatnonzero(y == b)
        syms = np.repeat(np.arange(J.shape[1]), J[b])
        if rng is not None:
            syms = rng.permutation(syms)
        u[pos] = syms
    return u


def verify_type_covering(code: CoveringCode) -> int:
    """Number of y in T(Q_Y) with no u in the code at the exact joint type (independent sweep)."""
    q = code.output_type
    J = np.asarray(code.cond_type, dtype=np.int64)
    target = {tuple(r) for r in [tuple(J.ravel())]}
    us = [tuple(u) for u in np.asarray(code.sequences).tolist()]
    missed = 0
    for y in type_class_sequences(q).tolist():
        ok = False
        for u in us:
            cnt = [0] * J.size
            for a, b in zip(y, u):
                cnt[a * J.shape[1] + b] += 1
            if tuple(cnt) in target:
                ok = True
                break
        missed += not ok
    return missed


def build_type_covering(Q_Y, P_UY, n: int | None = None, seed: int = 0,
                        random_per_y: int = 4) -> CoveringCode:
    """Greedy cover of T(Q_Y) by u-sequences at the exact joint type Q_Y x P_{U|Y}.

    ``P_UY`` holds integer counts: row y lists how the n Q_Y(y) positions with
    that y-symbol are split over U.  Candidates for each round are built from
    uncovered y's by canonical and random symbol placement; the one covering
    the most uncovered y's is kept.
    """
    q = _as_type(Q_Y)
    if n is not None and n != q.n:
        raise ValidationError("n does not match the output type")
    J = _check_cond_counts(q, P_UY)
    b, c = J.shape
    ys = type_class_sequences(q)
    T = len(ys)
    if T * T > get_caps().max_grid_points * 10:
        raise ResourceError("type class too large for the greedy cover")
    rng = np.random.default_rng(seed)
    covered = np.zeros(T, dtype=bool)
    chosen: list[np.ndarray] = []
    seen: set[tuple] = set()
    while not covered.all():
        unc = np.flatnonzero(~covered)
        picks = unc if len(unc) <= 32 else rng.choice(unc, size=32, replace=False)
        cands = []
        for i in picks:
            cands.append(_placement(ys[i], J))
            cands.extend(_placement(ys[i], J, rng) for _ in range(random_per_y))
        cands = np.unique(np.array(cands), axis=0)
        hits = (joint_counts(ys[unc], cands, b, c) == J).all(axis=(2, 3))
        gain = hits.sum(axis=1)
        k = int(np.argmax(gain))
        if gain[k] == 0:  # cannot happen: canonical placement covers its own y
            raise VerificationError("greedy cover stalled")
        u = cands[k]
        if tuple(u) not in seen:
            seen.add(tuple(u))
            chosen.append(u)
        covered[unc[hits[k]]] = True
    seqs = np.array(chosen, dtype=np.int64)
    code = CoveringCode(q, tuple(tuple(int(v) for v in r) for r in J), seqs,
                        {0: list(range(len(seqs)))}, math.inf, 1)
    if verify_type_covering(code) != 0:
        raise VerificationError("type cover failed the membership sweep")
    py = np.asarray(q.counts, float) / q.n
    cond = J / np.maximum(J.sum(axis=1, keepdims=True), 1)
    joint = py[:, None] * cond
    i_yu = entropy(joint.sum(axis=0)) + entropy(py) - entropy(joint.ravel())
    nI = q.n * i_yu
    log_size = math.log(len(seqs))
    code.diagnostics = {
        "size": len(seqs),
        "log_size": log_size,
        "n_I": nI,
        "poly_constant": (log_size - nI) / math.log(q.n + 1),
    }
    return code


def floor_exp(x: float) -> int:
    """max(1, floor(e^x)); a relative 1e-9 guard absorbs rounding of exact integers like e^{log 4}."""
    if x > 700:
        return 2 ** 1000  # effectively unbounded
    return max(1, math.floor(math.exp(x) * (1 + 1e-9)))


def bin_count(n: int, B: float) -> int:
    """floor(e^{nB}) clamped to >= 1."""
    return floor_exp(n * B)


def bin_covering_code(code: CoveringCode, B: float) -> CoveringCode:
    """Round-robin assignment of the covering sequences to floor(e^{nB}) bins."""
    if B < 0:
        raise ValidationError("B must be non-negative")
    nb = bin_count(code.n, B)
    bins: dict[int, list[int]] = {}
    for i in range(len(code.sequences)):
        bins.setdefault(i % nb, []).append(i)
    return CoveringCode(code.output_type, code.cond_type, code.sequences, bins, float(B), nb,
                        dict(code.diagnostics))


def bin_sizes(code: CoveringCode) -> list[int]:
    """Sizes of all bins, including empty ones when there are fewer sequences than bins."""
    k = min(code.n_bins, max(len(code.sequences), 1))
    sizes = [len(code.bins.get(i, [])) for i in range(k)]
    return sizes


# ------------------------------------------------------------- unique codewords


def unique_codeword_bounds(n: int, rate: float, Q_X, delta: float = 0.5) -> dict:
    """Bounds on P{#unique codewords <= delta M} for M = e^{n rate} i.i.d. uniform codewords on T(Q_X).

    closed_form:  exp{(1-delta) M (delta/(1-delta) - n H(Q_X) + log M + log delta)}
    type_class:   e^{delta M} |T|^{(delta-1) M} (delta M)^{(1-delta) M}
    counting:     C(|T|, h) (h/|T|)^M with h = floor(delta M)

    closed_form replaces |T| by e^{nH}, which is an upper bound on |T|, so it
    is not a valid bound in general; the other two are.
    """
    q = _as_type(Q_X)
    M = codebook_size(n, rate)
    logT = type_class_log_size(q)
    H = entropy(q.pmf())
    logM = math.log(M)
    dm = delta * M
    closed = (1 - delta) * M * (delta / (1 - delta) - n * H + logM + math.log(delta))
    tc = dm + (delta - 1) * M * logT + (1 - delta) * M * math.log(dm)
    h = math.floor(dm + 1e-12)
    if h == 0:
        cnt = -math.inf
    else:
        T = math.exp(logT)
        lbin = math.lgamma(T + 1) - math.lgamma(h + 1) - math.lgamma(T - h + 1) if h <= T else -math.inf
        cnt = lbin + M * (math.log(h) - logT)
    f = lambda v: math.exp(min(v, 0.0)) if v > -math.inf else 0.0  # noqa: E731
    return {"closed_form": f(closed), "type_class": f(tc), "counting": f(cnt), "M": M,
            "log_closed_form": closed}


def codebook_size(n: int, rate: float) -> int:
    """M = floor(e^{n rate}) clamped to >= 1."""
    return floor_exp(n * rate)


def unique_codeword_fraction(n: int, rate: float, Q_X, trials: int, seed: int = 0,
                             delta: float = 0.5) -> tuple[float, float]:
    """(empirical fraction of codebooks with <= delta M unique codewords, closed-form bound)."""
    q = _as_type(Q_X)
    if q.n != n:
        raise ValidationError("type does not match n")
    if not entropy(q.pmf()) > rate:
        raise ValidationError("requires H(Q_X) > rate")
    M = codebook_size(n, rate)
    T = type_class_size(q.counts)
    rng = np.random.default_rng(seed)
    hits = 0
    chunk = max(1, 2_000_000 // M)
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        r = np.sort(rng.integers(0, T, size=(m, M)), axis=1)
        uniq = 1 + (np.diff(r, axis=1) != 0).sum(axis=1)
        hits += int((uniq <= delta * M + 1e-12).sum())
        done += m
    return hits / trials, unique_codeword_bounds(n, rate, q, delta)["closed_form"]


def iter_binary_types(n_max: int) -> Iterable[TypeVector]:
    for n in range(1, n_max + 1):
        for k in range(n + 1):
            yield TypeVector((k, n - k))
