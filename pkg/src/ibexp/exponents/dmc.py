"""Constant-composition DMC exponents by direct grid search (reference oracle).

    E_r  = min_Q D(Q||W|P_X) + |I(P_X, Q) - R|^+
    E_sp = min_{Q : I(P_X, Q) <= R} D(Q||W|P_X)

Q_{Y|X} is searched over a product of row lattices, then a box grid around
the incumbent is zoomed in with halving spacing.  Nothing here shares code
with the min-max engine, which is what makes it usable as an oracle.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from ..config import get_caps


def _rows(b, res):
    pts = [c for c in itertools.product(range(res + 1), repeat=b - 1) if sum(c) <= res]
    arr = np.array([list(c) + [res - sum(c)] for c in pts], dtype=float) / res
    return arr


def _evaluate(Q, w, px):
    """D(Q||W|P_X) and I(P_X, Q) for a stack of channels Q (N, a, b)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(Q > 0, Q / w[None], 1.0)
        bad = ((Q > 0) & (w[None] <= 0)).any(axis=(1, 2))
        d = (px[None, :, None] * np.where(Q > 0, Q * np.log(ratio), 0.0)).sum(axis=(1, 2))
        d = np.where(bad, np.inf, np.maximum(d, 0.0))
        j = px[None, :, None] * Q
        qy = j.sum(axis=1)
        denom = px[None, :, None] * qy[:, None, :]
        i = np.where(j > 0, j * np.log(np.where(j > 0, j / np.where(denom > 0, denom, 1.0), 1.0)), 0.0)
        i = np.maximum(i.sum(axis=(1, 2)), 0.0)
    return d, i


def _objective(kind, d, i, R):
    if kind == "r":
        return d + np.maximum(i - R, 0.0)
    return np.where(i <= R + 1e-12, d, np.inf)


def _search(kind, w, px, R, res, zoom_rounds=30):
    a, b = w.shape
    rows = _rows(b, res)
    total = len(rows) ** a
    budget = get_caps().max_grid_points
    if total > budget:
        r = res
        while len(_rows(b, r)) ** a > budget and r > 1:
            r -= 1
        rows = _rows(b, r)
    best_v, best_q = math.inf, None
    chunk = max(1, 200_000 // max(1, len(rows)))
    # enumerate the product grid in chunks over the first row index
    idx_iter = itertools.product(range(len(rows)), repeat=a)
    while True:
        block = list(itertools.islice(idx_iter, chunk * len(rows)))
        if not block:
            break
        Q = rows[np.array(block)]
        d, i = _evaluate(Q, w, px)
        v = _objective(kind, d, i, R)
        k = int(np.argmin(v))
        if v[k] < best_v:
            best_v, best_q = float(v[k]), Q[k].copy()
    # the true channel is always a candidate
    d, i = _evaluate(w[None], w, px)
    v = _objective(kind, d, i, R)
    if v[0] <= best_v:
        best_v, best_q = float(v[0]), w.copy()
    if best_q is None:
        return math.inf, None
    free = a * (b - 1)
    if free == 0:
        return best_v, best_q
    span = max(1, int(math.floor((4000 ** (1.0 / free) - 1) / 2)))
    offsets = np.array(list(itertools.product(range(-span, span + 1), repeat=free)), dtype=float)
    half_width = 2.0 / res
    for _ in range(zoom_rounds):
        step = half_width / span
        half_width *= 0.6
        base = best_q[:, : b - 1].reshape(-1)
        cand = base[None] + offsets * step
        cand = cand.reshape(-1, a, b - 1)
        last = 1.0 - cand.sum(axis=2, keepdims=True)
        Q = np.concatenate([cand, last], axis=2)
        ok = (Q >= -1e-15).all(axis=(1, 2))
        Q = np.clip(Q[ok], 0.0, 1.0)
        d, i = _evaluate(Q, w, px)
        v = _objective(kind, d, i, R)
        k = int(np.argmin(v))
        if v[k] < best_v:
            best_v, best_q = float(v[k]), Q[k].copy()
    return best_v, best_q


def dmc_exponents(w, px, R, res=100):
    """(E_r_dmc, E_sp_dmc, witnesses) for a channel w (a, b) and composition px."""
    w = np.asarray(w, dtype=float)
    px = np.asarray(px, dtype=float)
    er, qr = _search("r", w, px, R, res)
    esp, qs = _search("sp", w, px, R, res)
    return er, esp, {"Q_r": qr, "Q_sp": qs}
