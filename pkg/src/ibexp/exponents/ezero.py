"""E_0 kernel of the generalized (alpha) decoder for the log-metric family.

For a joint Q(x,u) with marginals Q_X, Q_U and a metric q(x,u) >= 0,

    E_0 = min I(Q') over Q' with Q'_X = Q_X, Q'_U = Q_U, E_Q'[log q] >= E_Q[log q].

The minimizer is an I-projection of Q_X x Q_U onto a linear family, so it has
the form Q'(x,u) ~ Q_X(x) Q_U(u) q(x,u)^s e^{f(x) + g(u)} with s >= 0.  We
find it by Sinkhorn scaling at fixed s and bisection on s.  Metric zeros are
handled as forbidden cells (log q = -inf): a Q' touching them would score
-inf and can never satisfy the constraint unless Q does too.
"""

from __future__ import annotations

import numpy as np

from .inner import LOG_FLOOR, TINY, _lse, xlogx

S_MAX = 2.0 ** 12
FEAS_TOL = 1e-12


def _scale(log_m, log_row, log_col, f, g, iters):
    with np.errstate(invalid="ignore"):
        return _scale_loop(log_m, log_row, log_col, f, g, iters)


def _scale_loop(log_m, log_row, log_col, f, g, iters):
    for _ in range(iters):
        f = log_row - _lse(log_m + g[:, None, :], axis=2)
        f = np.where(np.isfinite(f), f, LOG_FLOOR)
        g = log_col - _lse(log_m + f[:, :, None], axis=1)
        g = np.where(np.isfinite(g), g, LOG_FLOOR)
    m = np.exp(log_m + f[:, :, None] + g[:, None, :])
    return np.nan_to_num(m, nan=0.0), f, g


def _mi(j):
    jx = j.sum(axis=2)
    ju = j.sum(axis=1)
    v = (xlogx(j).sum(axis=(1, 2)) - xlogx(jx).sum(axis=1) - xlogx(ju).sum(axis=1))
    return np.maximum(v, 0.0)


class _Family:
    """Shared pieces of the exponential family for a batch of joints."""

    def __init__(self, qxu, log_q):
        qxu = np.asarray(qxu, dtype=float)
        self.qxu = qxu
        self.qx = qxu.sum(axis=2)
        self.qu = qxu.sum(axis=1)
        self.mask = np.isfinite(log_q) & (np.asarray(log_q) > -np.inf)
        self.lq = np.where(self.mask, log_q, 0.0)
        with np.errstate(divide="ignore"):
            self.log_row = np.where(self.qx > 0, np.log(np.maximum(self.qx, TINY)), -np.inf)
            self.log_col = np.where(self.qu > 0, np.log(np.maximum(self.qu, TINY)), -np.inf)
        base = self.log_row[:, :, None] + self.log_col[:, None, :]
        self.base = np.where(self.mask[None], base, -np.inf)
        off = (qxu > 0) & ~self.mask[None]
        self.vacuous = off.any(axis=(1, 2))  # E_Q log q = -inf: constraint always met
        self.gamma = np.where(self.vacuous, -np.inf, (qxu * self.lq[None]).sum(axis=(1, 2)))

    def at(self, s, f, g, iters):
        log_m = self.base + s[:, None, None] * self.lq[None]
        return _scale(log_m, self.log_row, self.log_col, f, g, iters)

    def score(self, m):
        return (m * self.lq[None]).sum(axis=(1, 2))


def lm_projection(qxu, log_q, *, steps=50, iters=300):
    """Accurate E_0 and its minimizer for a batch of joints (N, a, c).

    Returns (values (N,), Q' joints (N, a, c)).  The value is never above
    I(Q) because Q itself is feasible and is kept as a fallback.
    """
    fam = _Family(qxu, log_q)
    N, a, c = fam.qxu.shape
    i_q = _mi(fam.qxu)
    best = i_q.copy()
    best_m = fam.qxu.copy()

    def offer(m, ok):
        nonlocal best, best_m
        res = np.maximum(np.abs(m.sum(axis=2) - fam.qx).max(axis=1),
                         np.abs(m.sum(axis=1) - fam.qu).max(axis=1))
        ok = ok & (res < 1e-9)
        v = _mi(m)
        upd = ok & (v < best)
        best = np.where(upd, v, best)
        best_m = np.where(upd[:, None, None], m, best_m)

    f = np.zeros((N, a))
    g = np.zeros((N, c))
    s = np.zeros(N)
    m0, f0, g0 = fam.at(s, f, g, iters)
    ok0 = fam.vacuous | (fam.score(m0) >= fam.gamma - FEAS_TOL)
    offer(m0, ok0)
    todo = ~ok0
    if np.any(todo):
        lo = np.zeros(N)
        hi = np.ones(N)
        f, g = f0.copy(), g0.copy()
        found = np.zeros(N, dtype=bool)
        while np.any(todo & ~found) and hi[todo & ~found].max() <= S_MAX:
            act = todo & ~found
            m, f_a, g_a = fam.at(np.where(act, hi, 0.0), f, g, iters)
            okh = fam.score(m) >= fam.gamma - FEAS_TOL
            offer(m, act & okh)
            found = found | (act & okh)
            lo = np.where(act & ~okh, hi, lo)
            hi = np.where(act & ~okh, hi * 2, hi)
            f = np.where(act[:, None], f_a, f)
            g = np.where(act[:, None], g_a, g)
        sel = todo & found
        if np.any(sel):
            for _ in range(steps):
                mid = 0.5 * (lo + hi)
                m, f, g = fam.at(np.where(sel, mid, 0.0), f, g, iters // 3)
                okm = fam.score(m) >= fam.gamma - FEAS_TOL
                offer(m, sel & okm)
                hi = np.where(sel & okm, mid, hi)
                lo = np.where(sel & ~okm, mid, lo)
    return best, best_m


class LMTracker:
    """Cheap warm-started estimate of log Q'(x|u) for use inside fixed-point loops.

    Each call runs a few Sinkhorn sweeps and one safeguarded Newton step on s;
    it does not need to be exact because every reported value is re-evaluated
    with lm_projection.
    """

    def __init__(self, log_q, sweeps=8):
        self.log_q = log_q
        self.sweeps = sweeps
        self.s = None
        self.f = None
        self.g = None

    def __call__(self, qxu):
        fam = _Family(qxu, self.log_q)
        N, a, c = qxu.shape
        if self.s is None or len(self.s) != N:
            self.s = np.ones(N)
            self.f = np.zeros((N, a))
            self.g = np.zeros((N, c))
        m, self.f, self.g = fam.at(self.s, self.f, self.g, self.sweeps)
        sc = fam.score(m)
        mean = sc
        var = (m * fam.lq[None] ** 2).sum(axis=(1, 2)) - mean ** 2
        gap = np.where(fam.vacuous, -np.inf, fam.gamma - sc)
        step = np.clip(gap / np.maximum(var, 1e-6), -self.s * 0.5 - 1e-3, 4.0)
        self.s = np.where(fam.vacuous, 0.0, np.clip(self.s + step, 0.0, S_MAX))
        qu = np.where(fam.qu > 0, fam.qu, 1.0)[:, None, :]
        return np.log(np.maximum(m / qu, np.exp(LOG_FLOOR)))


def e_zero_batch(qxu, log_q):
    """E_0 for each joint; log_q None means the MMI decoder (E_0 = I exactly)."""
    if log_q is None:
        return _mi(np.asarray(qxu, dtype=float))
    return lm_projection(qxu, log_q)[0]
