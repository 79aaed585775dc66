"""Grid-plus-refinement engine for min over Q_Y of max over P_{U|Y} programs.

The outer variable Q_Y is searched on simplex lattices (coarse first, then
finer lattices around the incumbent, then continuous coordinate moves). The
middle variable P_{U|Y} is searched over a fixed, seeded candidate set shared
by every Q_Y, plus coordinatewise local refinement with halving steps.

Points are expanded lazily: each Q_Y carries a cheap lower bound on its
middle-max value and only points whose bound is below the current incumbent
are solved. Several objectives that share the inner evaluator but differ in
which P_{U|Y} are admissible (e.g. with and without a bottleneck constraint)
are computed from one candidate pool per Q_Y, so the ordering between them is
exact on every evaluated point.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..config import ResourceError, get_caps
from .inner import ent


@dataclass(frozen=True)
class SearchConfig:
    grid_resolution: int = 60
    refinement_rounds: int = 4
    coarse_points: int = 100
    middle_lattice_points: int = 400
    n_random: int = 32
    top_k: int = 2
    prune_chunk: int = 8
    batch: int = 24
    seed: int = 20240917


def mi_yu(qy: np.ndarray, p: np.ndarray) -> np.ndarray:
    """I(Q_Y, P_{U|Y}) for batches qy (K, b), p (K, b, c)."""
    j = qy[:, :, None] * p
    return np.maximum(ent(qy, 1) + ent(j.sum(axis=1), 1) - ent(j, (1, 2)), 0.0)


# ---------------------------------------------------------------- lattices


def simplex_lattice(dim: int, denom: int) -> np.ndarray:
    """All points of the probability simplex with coordinates in (1/denom)Z."""
    count = math.comb(denom + dim - 1, dim - 1)
    if count > get_caps().max_grid_points:
        raise ResourceError(f"simplex lattice of {count} points exceeds cap")
    pts = np.array(list(_comps(denom, dim)), dtype=float) / denom
    return pts.reshape(-1, dim)


def _comps(n, k):
    if k == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _comps(n - first, k - 1):
            yield (first, *rest)


def lattice_neighbors(point: np.ndarray, denom: int, radius: int = 1) -> np.ndarray:
    """Lattice points at denominator `denom` near `point` (mass moves of up to radius/denom)."""
    dim = point.size
    base = np.round(point * denom).astype(int)
    diff = denom - base.sum()
    if diff:
        base[np.argmax(point * denom - base) if diff > 0 else np.argmax(base)] += diff
    out = {tuple(base)}
    frontier = [base]
    for _ in range(radius):
        nxt = []
        for v in frontier:
            for i, j in itertools.permutations(range(dim), 2):
                if v[i] > 0:
                    w = v.copy()
                    w[i] -= 1
                    w[j] += 1
                    t = tuple(w)
                    if t not in out:
                        out.add(t)
                        nxt.append(w)
        frontier = nxt
    return np.array(sorted(out), dtype=float) / denom


def coarse_denominator(dim: int, res: int, target: int) -> int:
    d = 1
    while d < res and math.comb(d + 1 + dim - 1, dim - 1) <= target:
        d += 1
    return max(1, min(d, res))


# ------------------------------------------------------- middle candidates


def _set_partitions_labels(b: int, c: int):
    """Canonical maps y -> u (first-occurrence labeling) using at most c labels."""

    def rec(prefix, used):
        if len(prefix) == b:
            yield tuple(prefix)
            return
        for lab in range(min(used + 1, c)):
            yield from rec(prefix + [lab], max(used, lab + 1))

    yield from rec([], 0)


def middle_candidates(b: int, c: int, cfg: SearchConfig) -> np.ndarray:
    """Seeded candidate set of test channels P_{U|Y}, shape (K, b, c)."""
    cands = []
    for f in _set_partitions_labels(b, c):
        det = np.zeros((b, c))
        det[np.arange(b), f] = 1.0
        cands.append(det)
        blocks = max(f) + 1
        if blocks == 1:
            continue
        for t in (0.05, 0.15, 0.3, 0.5):
            cands.append((1 - t) * det + t / c)
            spread = np.zeros((b, c))
            spread[:, :blocks] = 1.0 / blocks
            cands.append((1 - t) * det + t * spread)
            if blocks < c:
                er = (1 - t) * det
                er[:, blocks] += t
                cands.append(er)
    row_pts = None
    m = 6
    while m >= 1:
        row_pts = simplex_lattice(c, m)
        if len(row_pts) ** b <= cfg.middle_lattice_points:
            break
        m -= 1
    if m >= 2:
        for combo in itertools.product(range(len(row_pts)), repeat=b):
            cands.append(row_pts[list(combo)])
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.n_random):
        cands.append(rng.dirichlet(np.full(c, 0.6), size=b))
    arr = np.array(cands)
    _, idx = np.unique(np.round(arr.reshape(len(arr), -1), 12), axis=0, return_index=True)
    return arr[np.sort(idx)]


def local_moves(p: np.ndarray, step: float) -> np.ndarray:
    """All single mass transfers of size <= step within one row of P (b, c)."""
    b, c = p.shape
    out = []
    for y in range(b):
        for u, v in itertools.permutations(range(c), 2):
            t = min(step, p[y, u])
            if t <= 0:
                continue
            q = p.copy()
            q[y, u] -= t
            q[y, v] += t
            out.append(q)
    return np.array(out) if out else np.empty((0, b, c))


def project_bottleneck(qy: np.ndarray, p: np.ndarray, B: float, iters: int = 40) -> np.ndarray:
    """Mix infeasible P toward the constant map until I(Q_Y, P) <= B.

    The constant map keeps the output marginal of P, so the mixture path has
    mutual information convex and decreasing to 0.
    """
    i0 = mi_yu(qy, p)
    bad = i0 > B
    if not np.any(bad):
        return p
    p = p.copy()
    qb, pb = qy[bad], p[bad]
    qu = np.einsum("kb,kbc->kc", qb, pb)
    const = np.broadcast_to(qu[:, None, :], pb.shape)
    lo = np.zeros(len(qb))
    hi = np.ones(len(qb))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        mix = (1 - mid)[:, None, None] * pb + mid[:, None, None] * const
        ok = mi_yu(qb, mix) <= B
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    p[bad] = (1 - hi)[:, None, None] * pb + hi[:, None, None] * const
    return p


# ------------------------------------------------------------------- engine


@dataclass
class Objective:
    name: str
    bottleneck: float | None  # None: every P admissible; else I(Q_Y,P) <= value


@dataclass
class _Point:
    qy: np.ndarray
    lower: float
    pool_p: list = field(default_factory=list)
    pool_v: list = field(default_factory=list)
    pool_w: list = field(default_factory=list)
    pool_i: list = field(default_factory=list)
    stage: int = 0


class MinMaxEngine:
    """Runs the min over Q_Y / max over P_{U|Y} search for an inner evaluator.

    The evaluator must provide:
      lower(qy (M,b)) -> (M,) lower bounds of every inner value at Q_Y,
      upper(qy (K,b), p (K,b,c)) -> (K,) cheap upper bounds (inf allowed),
      exact(qy (K,b), p (K,b,c)) -> (values (K,), witnesses list).
    """

    def __init__(self, evaluator, objectives: list[Objective], b: int, c: int,
                 cfg: SearchConfig, slack: float = 1e-9):
        self.ev = evaluator
        self.objs = objectives
        self.b, self.c = b, c
        self.cfg = cfg
        self.slack = slack
        self.cands = middle_candidates(b, c, cfg)
        self.points: list[_Point] = []
        self.keys: dict[tuple, int] = {}
        self.exact_evals = 0
        self.upper_evals = 0
        self.fast_evals = 0

    # ---- bookkeeping
    def add_points(self, qys: np.ndarray):
        fresh = []
        for q in np.atleast_2d(qys):
            q = np.clip(q, 0.0, None)
            q = q / q.sum()
            key = tuple(np.round(q, 13))
            if key in self.keys:
                continue
            self.keys[key] = len(self.points)
            self.points.append(_Point(q, 0.0))
            fresh.append(len(self.points) - 1)
        if fresh:
            lows = self.ev.lower(np.array([self.points[i].qy for i in fresh]))
            for i, lo in zip(fresh, lows):
                self.points[i].lower = float(lo)
        return fresh

    def _admissible(self, obj: Objective, qy, p) -> np.ndarray:
        if obj.bottleneck is None:
            return np.ones(len(p), dtype=bool)
        return mi_yu(np.broadcast_to(qy, (len(p), qy.size)), p) <= obj.bottleneck + self.slack

    def value(self, idx: int, obj: Objective):
        pt = self.points[idx]
        if not pt.pool_v:
            return -math.inf, None
        ok = np.array([i <= obj.bottleneck + self.slack if obj.bottleneck is not None else True
                       for i in pt.pool_i])
        vals = np.array(pt.pool_v)
        vals = np.where(ok, vals, -np.inf)
        k = int(np.argmax(vals))
        if not np.isfinite(vals[k]) and vals[k] < 0:
            return -math.inf, None
        return float(vals[k]), k

    # ---- evaluation of a batch of points
    def _exact_batch(self, jobs):
        """jobs: list of (point index, P array (K,b,c)); appends results to pools."""
        jobs = [(i, p) for i, p in jobs if len(p)]
        if not jobs:
            return
        qy = np.concatenate([np.broadcast_to(self.points[i].qy, (len(p), self.b)) for i, p in jobs])
        ps = np.concatenate([p for _, p in jobs])
        vals, wits = self.ev.exact(qy, ps)
        ius = mi_yu(qy, ps)
        self.exact_evals += len(ps)
        pos = 0
        for i, p in jobs:
            pt = self.points[i]
            for k in range(len(p)):
                pt.pool_p.append(p[k])
                pt.pool_v.append(float(vals[pos + k]))
                pt.pool_w.append(wits[pos + k])
                pt.pool_i.append(float(ius[pos + k]))
            pos += len(p)

    def _candidates_for(self, idx: int) -> np.ndarray:
        qy = self.points[idx].qy
        sets = [self.cands]
        # transplant incumbents' best test channels from solved points
        extra = [self.points[j].pool_p[self.value(j, o)[1]] for j in self._solved_best()
                 for o in self.objs if self.value(j, o)[1] is not None]
        if extra:
            sets.append(np.array(extra))
        allc = np.concatenate(sets)
        for obj in self.objs:
            if obj.bottleneck is not None:
                allc = np.concatenate([allc, project_bottleneck(
                    np.broadcast_to(qy, (len(allc), self.b)), allc, obj.bottleneck)])
        _, first = np.unique(np.round(allc.reshape(len(allc), -1), 11), axis=0, return_index=True)
        return allc[np.sort(first)]

    def _solved_best(self, m: int = 3):
        solved = [i for i, p in enumerate(self.points) if p.stage == 2]
        if not solved:
            return []
        out = set()
        for obj in self.objs:
            vals = sorted(solved, key=lambda i: self.value(i, obj)[0])
            out.update(vals[:m])
        return sorted(out)

    def screen_points(self, idxs: list[int]):
        """Middle max over the shared candidate set, pruned by cheap upper bounds."""
        if not idxs:
            return
        cands = {i: self._candidates_for(i) for i in idxs}
        ubs = {}
        for i in idxs:
            qy = np.broadcast_to(self.points[i].qy, (len(cands[i]), self.b))
            ubs[i] = self.ev.upper(qy, cands[i])
            self.upper_evals += len(cands[i])
        order = {i: list(np.argsort(-ubs[i], kind="stable")) for i in idxs}
        admissible = {i: [self._admissible(o, self.points[i].qy, cands[i]) for o in self.objs]
                      for i in idxs}
        while True:
            jobs = []
            for i in idxs:
                take = []
                rest = []
                bests = [self.value(i, obj)[0] for obj in self.objs]
                for k in order[i]:
                    need = False
                    for oi in range(len(self.objs)):
                        if admissible[i][oi][k] and (ubs[i][k] > bests[oi] + 1e-12 or bests[oi] == -math.inf):
                            need = True
                    if need and len(take) < self.cfg.prune_chunk:
                        take.append(k)
                    elif need:
                        rest.append(k)
                order[i] = rest
                if take:
                    jobs.append((i, cands[i][take]))
            if not jobs:
                break
            self._exact_batch(jobs)
        for i in idxs:
            self.points[i].stage = 1

    def refine_points(self, idxs: list[int]):
        if not idxs:
            return
        self._refine_middle(idxs)
        for i in idxs:
            self.points[i].stage = 2

    def _refine_middle(self, idxs):
        step = 0.25
        for _ in range(max(1, self.cfg.refinement_rounds)):
            for _ in range(3):
                jobs = []
                for i in idxs:
                    pt = self.points[i]
                    moves_all = []
                    bests = []
                    for obj in self.objs:
                        vals = np.array(pt.pool_v)
                        if obj.bottleneck is not None:
                            ok = np.array(pt.pool_i) <= obj.bottleneck + self.slack
                            vals = np.where(ok, vals, -np.inf)
                        best = float(np.max(vals)) if len(vals) else -math.inf
                        bests.append(best)
                        if not math.isfinite(best):
                            continue
                        tops = np.argsort(-vals, kind="stable")[: self.cfg.top_k]
                        for t in tops:
                            if not np.isfinite(vals[t]):
                                continue
                            mv = local_moves(pt.pool_p[t], step)
                            if obj.bottleneck is not None and len(mv):
                                mv = project_bottleneck(np.broadcast_to(pt.qy, (len(mv), self.b)),
                                                        mv, obj.bottleneck)
                            if len(mv) == 0:
                                continue
                            ub = self.ev.upper(np.broadcast_to(pt.qy, (len(mv), self.b)), mv)
                            self.upper_evals += len(mv)
                            mv = mv[ub > best + 1e-12]
                            if len(mv):
                                moves_all.append(mv)
                    if moves_all:
                        mv = np.concatenate(moves_all)
                        known = {tuple(np.round(p.ravel(), 11)) for p in pt.pool_p}
                        keep, seen = [], set()
                        for k in range(len(mv)):
                            key = tuple(np.round(mv[k].ravel(), 11))
                            if key not in known and key not in seen:
                                seen.add(key)
                                keep.append(k)
                        if keep:
                            jobs.append((i, mv[keep], bests))
                if not jobs:
                    break
                # cheap screening: primal values of a short solve bound the exact value from above
                qy = np.concatenate([np.broadcast_to(self.points[i].qy, (len(m), self.b)) for i, m, _ in jobs])
                ps = np.concatenate([m for _, m, _ in jobs])
                fast = self.ev.fast(qy, ps)
                self.fast_evals += len(ps)
                ius = mi_yu(qy, ps)
                exact_jobs = []
                pos = 0
                for i, m, bests in jobs:
                    f = fast[pos:pos + len(m)]
                    iu = ius[pos:pos + len(m)]
                    pos += len(m)
                    pick = set()
                    for oi, obj in enumerate(self.objs):
                        ok = np.ones(len(m), bool) if obj.bottleneck is None else iu <= obj.bottleneck + self.slack
                        cand = np.flatnonzero(ok & (f > bests[oi] + 1e-12))
                        cand = cand[np.argsort(-f[cand], kind="stable")][: self.cfg.top_k + 1]
                        pick.update(cand.tolist())
                    if pick:
                        exact_jobs.append((i, m[sorted(pick)]))
                if not exact_jobs:
                    break
                before = {i: [self.value(i, o)[0] for o in self.objs] for i, _ in exact_jobs}
                self._exact_batch(exact_jobs)
                improved = any(self.value(i, o)[0] > before[i][k] + 1e-12
                               for i, _ in exact_jobs for k, o in enumerate(self.objs))
                if not improved:
                    break
            step /= 2

    # ---- outer lazy minimization
    def incumbent(self, obj: Objective):
        best, arg = math.inf, None
        for i, pt in enumerate(self.points):
            if pt.stage == 2:
                v = self.value(i, obj)[0]
                if v < best or arg is None:
                    best, arg = v, i
        return best, arg

    def _key(self, i: int, obj: Objective) -> float:
        pt = self.points[i]
        if pt.stage == 0:
            return pt.lower
        return max(pt.lower, self.value(i, obj)[0])

    def settle(self):
        """Advance points until every non-final point's lower bound exceeds the incumbents.

        Keys only increase from stage to stage (D0-type bound, screened
        middle max, refined middle max), so the final minimum is exact with
        respect to the refined values.
        """
        while True:
            incs = [self.incumbent(o)[0] for o in self.objs]
            todo = []
            for i, pt in enumerate(self.points):
                if pt.stage == 2:
                    continue
                keys = [self._key(i, o) for o in self.objs]
                if any(k < inc - 1e-12 for k, inc in zip(keys, incs)):
                    todo.append((min(keys), pt.stage, i))
            if not todo:
                return
            todo.sort()
            stage0 = [i for _, st, i in todo if st == 0][: self.cfg.batch]
            if stage0:
                self.screen_points(stage0)
                continue
            stage1 = [i for _, st, i in todo if st == 1][: max(1, self.cfg.batch // 4)]
            self.refine_points(stage1)

    def witness(self, obj: Objective):
        v, i = self.incumbent(obj)
        if i is None:
            return v, None, None, None
        _, k = self.value(i, obj)
        pt = self.points[i]
        if k is None:
            return v, pt.qy, None, None
        return v, pt.qy, pt.pool_p[k], pt.pool_w[k]


def run_outer(engine: MinMaxEngine, support: np.ndarray, anchors: list[np.ndarray],
              cfg: SearchConfig) -> dict:
    """Coarse lattice, nested finer lattices, then continuous refinement of Q_Y.

    support: indices of Y symbols Q_Y may use; anchors: extra Q_Y points.
    Returns diagnostics including the refinement gap of the last round.
    """
    b = engine.b
    dim = len(support)

    def embed(pts):
        full = np.zeros((len(pts), b))
        full[:, support] = pts
        return full

    res = cfg.grid_resolution
    d0 = coarse_denominator(dim, res, cfg.coarse_points)
    engine.add_points(embed(simplex_lattice(dim, d0)))
    for a in anchors:
        engine.add_points(a[None])
    engine.settle()

    denoms = []
    d = d0
    while d < res:
        d = min(2 * d, res)
        denoms.append(d)
    if res not in denoms and res != d0:
        denoms.append(res)
    for d in denoms:
        for _ in range(4):
            centers = {engine.incumbent(o)[1] for o in engine.objs}
            new = []
            for ci in centers:
                if ci is None:
                    continue
                sub = engine.points[ci].qy[support]
                new.extend(engine.add_points(embed(lattice_neighbors(sub, d, radius=1))))
            engine.settle()
            if not new:
                break

    history = [[engine.incumbent(o)[0] for o in engine.objs]]
    h = 1.0 / res
    for _ in range(cfg.refinement_rounds):
        h /= 2
        for _ in range(4):
            centers = {engine.incumbent(o)[1] for o in engine.objs}
            new = []
            for ci in centers:
                if ci is None:
                    continue
                q = engine.points[ci].qy
                pts = []
                for i, j in itertools.permutations(support, 2):
                    t = min(h, q[i])
                    if t > 0:
                        r = q.copy()
                        r[i] -= t
                        r[j] += t
                        pts.append(r)
                if pts:
                    new.extend(engine.add_points(np.array(pts)))
            engine.settle()
            if not new:
                break
        history.append([engine.incumbent(o)[0] for o in engine.objs])
    gaps = [abs(a - b) if math.isfinite(a) and math.isfinite(b) else 0.0
            for a, b in zip(history[-2], history[-1])] if len(history) > 1 else [0.0] * len(engine.objs)
    return {"refinement_gap": gaps, "outer_points": len(engine.points),
            "solved_points": sum(p.stage == 2 for p in engine.points)}
