"""Bottleneck capacity max I(X;U) s.t. I(Y;U) <= B over P_X and P_{U|Y}.

For a fixed input law the middle problem is the information-bottleneck
tradeoff.  Candidates come from self-consistent IB iterations over a sweep
of the tradeoff parameter and several seeded initializations, plus the
deterministic maps y -> u.  Candidates above the bottleneck are pulled back
onto it by mixing toward the constant map.  Every evaluated (P_X, P_{U|Y})
is kept in one pool, so the value for a list of B is a monotone staircase by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .inner import TINY, ent
from .search import _set_partitions_labels, mi_yu, project_bottleneck, simplex_lattice


@dataclass(frozen=True)
class CapacityConfig:
    betas: int = 40
    inits: int = 6
    ib_iters: int = 150
    px_resolution: int = 20
    px_rounds: int = 6
    seed: int = 20240917


def _ib_iterate(pxy, p0, beta, iters):
    """Tishby-style updates of P_{U|Y} for a batch; pxy (a,b), p0 (N,b,c), beta (N,)."""
    py = pxy.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.where(py[None] > 0, pxy / np.where(py > 0, py, 1.0)[None], 0.0)  # p(x|y)
    log_post = np.log(np.maximum(post, TINY))
    h_post = (post * log_post).sum(axis=0)  # sum_x p(x|y) log p(x|y), (b,)
    p = p0
    for _ in range(iters):
        pu = np.einsum("b,nbc->nc", py, p)
        pxu = np.einsum("ab,nbc->nac", pxy, p)
        px_u = pxu / np.maximum(pu, TINY)[:, None, :]
        cross = np.einsum("ab,nac->nbc", post, np.log(np.maximum(px_u, TINY)))
        kl = h_post[None, :, None] - cross
        logits = np.log(np.maximum(pu, TINY))[:, None, :] - beta[:, None, None] * kl
        logits -= logits.max(axis=2, keepdims=True)
        e = np.exp(logits)
        p = e / e.sum(axis=2, keepdims=True)
    return p


def _ixu(px, w, p):
    pxu = px[None, :, None] * np.matmul(w, p)
    return np.maximum(ent(pxu.sum(axis=2), 1) + ent(pxu.sum(axis=1), 1) - ent(pxu, (1, 2)), 0.0)


class CapacityPool:
    """Pool of evaluated (P_X, P_{U|Y}) pairs with their (I(Y;U), I(X;U))."""

    def __init__(self, w, c, cfg: CapacityConfig):
        self.w = np.asarray(w, dtype=float)
        self.c = c
        self.cfg = cfg
        a, b = self.w.shape
        self.b = b
        dets = []
        for f in _set_partitions_labels(b, c):
            d = np.zeros((b, c))
            d[np.arange(b), f] = 1.0
            dets.append(d)
        self.dets = np.array(dets)
        self.entries = []  # (px, p array, iyu, ixu)
        self.evaluations = 0
        self.max_change = 0.0

    def add_px(self, px, Bs):
        px = np.asarray(px, dtype=float)
        for e in self.entries:
            if np.array_equal(e[0], px):
                return
        w = self.w
        py = px @ w
        pxy = px[:, None] * w
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed)
        betas = np.geomspace(0.5, 500.0, cfg.betas)
        inits = [rng.dirichlet(np.ones(self.c), size=self.b) for _ in range(cfg.inits)]
        bb = np.repeat(betas, len(inits))
        p0 = np.array([inits[i] for _ in betas for i in range(len(inits))])
        p = _ib_iterate(pxy, p0, bb, cfg.ib_iters)
        p_next = _ib_iterate(pxy, p, bb, 1)
        self.max_change = max(self.max_change, float(np.abs(p_next - p).max()))
        cands = [self.dets, p]
        qy = np.broadcast_to(py, (len(self.dets) + len(p), self.b))
        base = np.concatenate(cands)
        for B in Bs:
            cands.append(project_bottleneck(qy, base, B))
        allp = np.concatenate(cands)
        qy = np.broadcast_to(py, (len(allp), self.b))
        iyu = mi_yu(np.ascontiguousarray(qy), allp)
        ixu = _ixu(px, w, allp)
        self.evaluations += len(allp)
        self.entries.append((px, allp, iyu, ixu))

    def best(self, B, px=None, slack=1e-12):
        """(value, px, P) maximizing I(X;U) with I(Y;U) <= B over the pool."""
        best = (-math.inf, None, None)
        for e_px, allp, iyu, ixu in self.entries:
            if px is not None and not np.array_equal(e_px, px):
                continue
            ok = iyu <= B + slack
            if not np.any(ok):
                continue
            k = int(np.argmax(np.where(ok, ixu, -np.inf)))
            if ixu[k] > best[0]:
                best = (float(ixu[k]), e_px, allp[k])
        return best


def search_input(pool: CapacityPool, Bs, fixed_px=None):
    """Grid plus local refinement of P_X for every B in Bs, filling the pool."""
    a = pool.w.shape[0]
    if fixed_px is not None:
        pool.add_px(fixed_px, Bs)
        return
    cfg = pool.cfg
    for px in simplex_lattice(a, cfg.px_resolution):
        pool.add_px(px, Bs)
    for B in Bs:
        _, px, _ = pool.best(B)
        if px is None:
            continue
        h = 1.0 / cfg.px_resolution
        for _ in range(cfg.px_rounds):
            h /= 2
            for _ in range(8):
                cur = pool.best(B)[0]
                _, center, _ = pool.best(B)
                moves = []
                for i in range(a):
                    for j in range(a):
                        if i != j and center[i] > 0:
                            t = min(h, center[i])
                            q = center.copy()
                            q[i] -= t
                            q[j] += t
                            moves.append(q)
                for q in moves:
                    pool.add_px(q, [B])
                if pool.best(B)[0] <= cur + 1e-15:
                    break
