"""Inner-program evaluators plugged into the min-max engine.

Each evaluator computes, for a batch of (Q_Y, P_{U|Y}) pairs, the value of
the innermost minimization of one exponent program, a cheap upper bound used
for pruning, and a lower bound valid for every P_{U|Y} at a given Q_Y.
"""

from __future__ import annotations

import numpy as np

from .inner import (TINY, ent, sinkhorn_rows_cols, solve_xyu, solve_yx,
                    xlogx, xyu_terms, yx_terms)
from .ezero import LMTracker, lm_projection
from .search import mi_yu

MARGINAL_TOL = 1e-7
BISECT_STEPS = 18
MIX_STEPS = 36  # bisection on the feasibility mixing weight, precision 2^-36
WARM_ITERS = 40


def _pos(a):
    return np.maximum(a, 0.0)


class _Cache:
    def __init__(self):
        self.d = {}

    def get_many(self, qy, fn):
        keys = [r.tobytes() for r in np.ascontiguousarray(qy)]
        missing = [k for k in dict.fromkeys(keys) if k not in self.d]
        if missing:
            arr = np.array([np.frombuffer(k, dtype=float) for k in missing])
            vals = fn(arr)
            for k, v in zip(missing, vals):
                self.d[k] = v
        return [self.d[k] for k in keys]


def iproj_channel(px, w, qy):
    """I-projection of P_X W onto joints with marginals (P_X, Q_Y).

    Returns (D0 (M,), joint (M, a, b)); D0 is inf when the marginals cannot
    be met inside the support of P_X W.
    """
    with np.errstate(divide="ignore"):
        log_m = np.log(px[:, None] * w)
    log_m = np.broadcast_to(log_m, (len(qy),) + w.shape)
    m = sinkhorn_rows_cols(log_m, px, qy, iters=300)
    ok = (np.abs(m.sum(axis=2) - px).max(axis=1) < MARGINAL_TOL) & \
         (np.abs(m.sum(axis=1) - qy).max(axis=1) < MARGINAL_TOL)
    with np.errstate(divide="ignore", invalid="ignore"):
        ref = px[:, None] * w
        d = (xlogx(m) - np.where(m > 0, m * np.log(np.where(ref > 0, ref, 1.0)), 0.0)).sum(axis=(1, 2))
    d = np.where(ok, np.maximum(d, 0.0), np.inf)
    return d, m


class RandomCodingMMI:
    """Inner program of the random-coding exponent with the MMI decoder.

    min over Q_{X|YU} with Q_X = P_X of
    D(Q_{Y|X}||W|P_X) + I(X;U|Y) + | I(X;U) - R - |I(Y;U) - B|^+ |^+.
    """

    def __init__(self, w, px, R, B, c):
        self.w, self.px, self.R, self.B, self.c = w, px, R, B, c
        a, b = w.shape
        with np.errstate(divide="ignore"):
            lk = np.log(px[:, None] * w)
        self.log_ref = lk[None]
        self.log_k = np.broadcast_to(lk[None, :, :, None], (1, a, b, c))
        self.cache = _Cache()

    def _ctx(self, qy):
        def fn(arr):
            d0, m = iproj_channel(self.px, self.w, arr)
            return list(zip(d0, m))
        return self.cache.get_many(qy, fn)

    def lower(self, qy):
        return np.array([d for d, _ in self._ctx(qy)])

    def _markov_terms(self, qy, p):
        ctx = self._ctx(qy)
        d0 = np.array([d for d, _ in ctx])
        m = np.array([mm for _, mm in ctx])  # (K, a, b) joint of X,Y
        qxu = m @ p
        i0 = _pos(ent(qxu.sum(axis=2), 1) + ent(qxu.sum(axis=1), 1) - ent(qxu, (1, 2)))
        return d0, m, i0

    def upper(self, qy, p):
        d0, _, i0 = self._markov_terms(qy, p)
        rp = self.R + _pos(mi_yu(qy, p) - self.B)
        return d0 + _pos(i0 - rp)

    def fast(self, qy, p):
        return self.exact(qy, p, steps=5, warm=15, first=40)[0]

    def exact(self, qy, p, steps=BISECT_STEPS, warm=WARM_ITERS, first=120):
        K = len(qy)
        a, b = self.w.shape
        c = p.shape[2]
        d0, m, i0 = self._markov_terms(qy, p)
        i_yu = mi_yu(qy, p)
        rp = self.R + _pos(i_yu - self.B)
        qyu = qy[:, :, None] * p
        with np.errstate(divide="ignore", invalid="ignore"):
            cond0 = np.where(qy[:, None, :] > 0, m / np.where(qy > 0, qy, 1.0)[:, None, :], 1.0 / a)
        cond0 = np.broadcast_to(cond0[:, :, :, None], (K, a, b, c)).copy()
        best = d0 + _pos(i0 - rp)
        wit = cond0
        need = np.isfinite(d0) & (i0 > rp + 1e-13)
        if np.any(need):
            v, wc = self._solve_rho(qyu[need], rp[need], steps, warm, first)
            upd = v < best[need]
            idx = np.flatnonzero(need)[upd]
            best[idx] = v[upd]
            wit[idx] = wc[upd]
        return best, [(wit[k], rp[k]) for k in range(K)]

    def _primal(self, cond, qyu, rp):
        j = cond * qyu[:, None]
        t = xyu_terms(j, self.log_ref)
        val = t["D"] + t["I_xu_given_y"] + _pos(t["I_xu"] - rp)
        ok = np.abs(t["qx"] - self.px).max(axis=1) < MARGINAL_TOL
        return np.where(ok, val, np.inf), t["I_xu"]

    def _solve_rho(self, qyu, rp, steps, warm, first):
        n = len(qyu)
        best = np.full(n, np.inf)
        wit = np.zeros((n,) + (self.w.shape[0],) + qyu.shape[1:])
        state = None

        def run(rho, state, iters):
            cond, state = solve_xyu(self.log_k, qyu, rho, px=self.px, state=state, iters=iters)
            val, ixu = self._primal(cond, qyu, rp)
            upd = val < best
            best[upd] = val[upd]
            wit[upd] = cond[upd]
            return ixu, state

        ones = np.ones(n)
        ixu, state = run(ones, None, first)
        lo = np.zeros(n)
        hi = np.ones(n)
        active = ixu < rp  # at rho = 1 the constraint term already binds otherwise
        st1 = state.copy()
        if np.any(active):
            st = st1.take(active)
            sub_lo, sub_hi = lo[active], hi[active]
            q_sub, r_sub = qyu[active], rp[active]
            idx = np.flatnonzero(active)
            for _ in range(steps):
                mid = 0.5 * (sub_lo + sub_hi)
                cond, st = solve_xyu(self.log_k, q_sub, mid, px=self.px, state=st, iters=warm)
                val, ixu = self._primal(cond, q_sub, r_sub)
                upd = val < best[idx]
                best[idx[upd]] = val[upd]
                wit[idx[upd]] = cond[upd]
                up = ixu > r_sub
                sub_lo = np.where(up, mid, sub_lo)
                sub_hi = np.where(up, sub_hi, mid)
        return best, wit


class RandomCodingMismatched(RandomCodingMMI):
    """Random-coding inner program with E_0 of a log-metric decoder in place of I(X;U).

    Because E_0 <= I(X;U), the MMI upper bound stays valid for pruning.
    """

    def __init__(self, w, px, R, B, c, log_q):
        super().__init__(w, px, R, B, c)
        self.log_q = log_q

    def fast(self, qy, p):
        return self.exact(qy, p, steps=4, warm=15, first=40)[0]

    def exact(self, qy, p, steps=10, warm=WARM_ITERS, first=120):
        K = len(qy)
        a = self.w.shape[0]
        d0, m, i0 = self._markov_terms(qy, p)
        rp = self.R + _pos(mi_yu(qy, p) - self.B)
        qyu = qy[:, :, None] * p
        with np.errstate(divide="ignore", invalid="ignore"):
            cond0 = np.where(qy[:, None, :] > 0, m / np.where(qy > 0, qy, 1.0)[:, None, :], 1.0 / a)
        cond0 = np.broadcast_to(cond0[:, :, :, None], (K, a) + qyu.shape[1:]).copy()
        best, _ = self._primal(cond0, qyu, rp)
        best = np.where(np.isfinite(d0), best, np.inf)
        wit = cond0
        need = np.isfinite(d0) & (best > d0 + 1e-13)
        if np.any(need):
            v, wc = self._solve_rho(qyu[need], rp[need], steps, warm, first)
            upd = v < best[need]
            idx = np.flatnonzero(need)[upd]
            best[idx] = v[upd]
            wit[idx] = wc[upd]
        return best, [(wit[k], rp[k]) for k in range(K)]

    def _primal(self, cond, qyu, rp):
        j = cond * qyu[:, None]
        t = xyu_terms(j, self.log_ref)
        e0 = lm_projection(j.sum(axis=2), self.log_q)[0]
        val = t["D"] + t["I_xu_given_y"] + _pos(e0 - rp)
        ok = np.abs(t["qx"] - self.px).max(axis=1) < MARGINAL_TOL
        return np.where(ok, val, np.inf), e0

    def _solve_rho(self, qyu, rp, steps, warm, first):
        n = len(qyu)
        best = np.full(n, np.inf)
        wit = np.zeros((n, self.w.shape[0]) + qyu.shape[1:])
        lo, hi = np.zeros(n), np.ones(n)
        st = None
        for it in range(steps + 1):
            rho = hi if it == 0 else 0.5 * (lo + hi)
            tr = LMTracker(self.log_q)
            cond, st = solve_xyu(self.log_k, qyu, rho, px=self.px, state=st,
                                 iters=first if it == 0 else warm, track=tr)
            val, e0 = self._primal(cond, qyu, rp)
            upd = val < best
            best[upd] = val[upd]
            wit[upd] = cond[upd]
            if it == 0:
                if np.all(e0 >= rp):
                    break
                continue
            up = e0 > rp
            lo = np.where(up, rho, lo)
            hi = np.where(up, hi, rho)
        return best, wit


# ------------------------------------------------------------ sphere packing


def _d_joint(m, log_ref):
    """D(m || ref) for joints m (K, a, b) against log_ref (a, b)."""
    fin = np.isfinite(log_ref)
    bad = ((m > 0) & ~fin[None]).any(axis=(1, 2))
    d = (xlogx(m) - np.where(m > 0, m * np.where(fin, log_ref, 0.0)[None], 0.0)).sum(axis=(1, 2))
    return np.where(bad, np.inf, np.maximum(d, 0.0))


def _mi_xu(m, p):
    xu = m @ p
    return _pos(ent(xu.sum(axis=2), 1) + ent(xu.sum(axis=1), 1) - ent(xu, (1, 2)))


class SpherePacking:
    """Inner program of the sphere-packing bound.

    min over Q_{Y|X} with P_X Q = Q_Y and I(P_X, Q P_{U|Y}) <= R of
    D(Q || W | P_X).  Solved through the multiplier s of the information
    constraint; each iterate is made feasible by mixing toward P_X x Q_Y,
    which keeps both marginals and has zero information.
    """

    S_START = 1.0
    S_MAX = 256.0

    def __init__(self, w, px, R):
        self.w, self.px, self.R = w, px, R
        with np.errstate(divide="ignore"):
            self.log_w = np.log(w)
            self.log_ref = np.log(px[:, None] * w)
        self.cache = _Cache()

    def _ctx(self, qy):
        def fn(arr):
            d0, m = iproj_channel(self.px, self.w, arr)
            return list(zip(d0, m))
        return self.cache.get_many(qy, fn)

    def lower(self, qy):
        return np.array([d for d, _ in self._ctx(qy)])

    def _repair(self, m, qy, p):
        """Mix joints toward the product until the information constraint holds."""
        prod = self.px[None, :, None] * qy[:, None, :]
        i_m = _mi_xu(m, p)
        lam = np.zeros(len(m))
        bad = i_m > self.R
        if np.any(bad):
            lo, hi = np.zeros(bad.sum()), np.ones(bad.sum())
            mb, pb, prb = m[bad], p[bad], prod[bad]
            for _ in range(MIX_STEPS):
                mid = 0.5 * (lo + hi)
                mix = (1 - mid)[:, None, None] * mb + mid[:, None, None] * prb
                ok = _mi_xu(mix, pb) <= self.R
                hi = np.where(ok, mid, hi)
                lo = np.where(ok, lo, mid)
            lam[bad] = hi
        out = (1 - lam)[:, None, None] * m + lam[:, None, None] * prod
        return out, _d_joint(out, self.log_ref)

    def _base(self, qy, p):
        ctx = self._ctx(qy)
        d0 = np.array([d for d, _ in ctx])
        m = np.array([mm for _, mm in ctx])
        mix, d = self._repair(m, qy, p)
        d = np.where(np.isfinite(d0), d, np.inf)
        return d0, m, mix, d

    def upper(self, qy, p):
        return self._base(qy, p)[3]

    def fast(self, qy, p):
        return self.exact(qy, p, steps=6, iters=60)[0]

    def exact(self, qy, p, steps=12, iters=150):
        d0, m, best_m, best = self._base(qy, p)
        need = np.isfinite(d0) & (best > d0 + 1e-13)
        if np.any(need):
            idx = np.flatnonzero(need)
            v, mm = self._solve_s(qy[need], p[need], steps, iters)
            upd = v < best[idx]
            best[idx[upd]] = v[upd]
            best_m[idx[upd]] = mm[upd]
        wits = [best_m[k] / np.where(self.px > 0, self.px, 1.0)[:, None] for k in range(len(qy))]
        return best, wits

    def _solve_s(self, qy, p, steps, iters):
        n = len(qy)
        best = np.full(n, np.inf)
        best_m = np.zeros((n,) + self.w.shape)

        def offer(m, qy_, p_, idx):
            t = yx_terms(m, self.log_w, self.px, p_)
            ok_marg = (t["row_res"] < MARGINAL_TOL) & (np.abs(t["qy"] - qy_).max(axis=1) < MARGINAL_TOL)
            feas = ok_marg & (t["I"] <= self.R)
            cand = np.where(feas, t["D"], np.inf)
            mix, dmix = self._repair(m, qy_, p_)
            dmix = np.where(ok_marg, dmix, np.inf)
            use_mix = dmix < cand
            cand = np.minimum(cand, dmix)
            mm = np.where(use_mix[:, None, None], mix, m)
            upd = cand < best[idx]
            best[idx[upd]] = cand[upd]
            best_m[idx[upd]] = mm[upd]
            return t["I"]

        s = np.full(n, self.S_START)
        m, st = solve_yx(self.log_w, self.px, qy, p, s, iters=2 * iters)
        i_s = offer(m, qy, p, np.arange(n))
        lo, hi = np.zeros(n), s.copy()
        over = i_s > self.R
        while np.any(over) and hi[over].max() < self.S_MAX:
            idx = np.flatnonzero(over)
            hi[idx] *= 2
            sub = st.take(over)
            m, sub = solve_yx(self.log_w, self.px, qy[over], p[over], hi[idx], state=sub, iters=iters)
            st.put(over, sub)
            i_s = offer(m, qy[over], p[over], idx)
            lo[idx] = np.where(i_s > self.R, hi[idx], lo[idx])
            over[idx] = i_s > self.R
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            m, st = solve_yx(self.log_w, self.px, qy, p, mid, state=st, iters=iters)
            i_s = offer(m, qy, p, np.arange(n))
            lo = np.where(i_s > self.R, mid, lo)
            hi = np.where(i_s > self.R, hi, mid)
        return best, best_m


class SpherePackingConjectured:
    """Inner program of the strengthened sphere-packing candidate.

    min over Q_{X|YU} with Q_X = P_X and I(X;U) <= R of D(Q_{Y|X}||W|P_X) + I(X;U|Y).
    The multiplier s of I(X;U) enters the X|YU fixed point as its rho weight.
    Iterates are repaired by mixing Q(x|y,u) toward P_X(x), which keeps
    Q_X = P_X and removes all information about U.
    """

    S_MAX = 256.0

    def __init__(self, w, px, R, c):
        self.w, self.px, self.R = w, px, R
        a, b = w.shape
        with np.errstate(divide="ignore"):
            lk = np.log(px[:, None] * w)
        self.log_ref = lk[None]
        self.log_k = np.broadcast_to(lk[None, :, :, None], (1, a, b, c))
        self.cache = _Cache()

    _ctx = SpherePacking._ctx

    def lower(self, qy):
        return np.array([d for d, _ in self._ctx(qy)])

    def _value(self, cond, qyu):
        t = xyu_terms(cond * qyu[:, None], self.log_ref)
        ok = np.abs(t["qx"] - self.px).max(axis=1) < MARGINAL_TOL
        return np.where(ok, t["D"] + t["I_xu_given_y"], np.inf), t["I_xu"]

    def _repair(self, cond, qyu):
        indep = np.broadcast_to(self.px[None, :, None, None], cond.shape)
        _, i0 = self._value(cond, qyu)
        lam = np.zeros(len(cond))
        bad = i0 > self.R
        if np.any(bad):
            lo, hi = np.zeros(bad.sum()), np.ones(bad.sum())
            cb, qb, ib = cond[bad], qyu[bad], indep[bad]
            for _ in range(MIX_STEPS):
                mid = 0.5 * (lo + hi)
                mix = (1 - mid)[:, None, None, None] * cb + mid[:, None, None, None] * ib
                ok = self._value(mix, qb)[1] <= self.R
                hi = np.where(ok, mid, hi)
                lo = np.where(ok, lo, mid)
            lam[bad] = hi
        out = (1 - lam)[:, None, None, None] * cond + lam[:, None, None, None] * indep
        return out, self._value(out, qyu)[0]

    def _base(self, qy, p):
        ctx = self._ctx(qy)
        d0 = np.array([d for d, _ in ctx])
        m = np.array([mm for _, mm in ctx])
        a = self.w.shape[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(qy[:, None, :] > 0, m / np.where(qy > 0, qy, 1.0)[:, None, :], 1.0 / a)
        cond = np.broadcast_to(cond[:, :, :, None], (len(qy), a) + p.shape[1:]).copy()
        qyu = qy[:, :, None] * p
        cond, v = self._repair(cond, qyu)
        return d0, qyu, cond, np.where(np.isfinite(d0), v, np.inf)

    def upper(self, qy, p):
        return self._base(qy, p)[3]

    def fast(self, qy, p):
        return self.exact(qy, p, steps=6, iters=30)[0]

    def exact(self, qy, p, steps=16, iters=WARM_ITERS):
        d0, qyu, wit, best = self._base(qy, p)
        need = np.isfinite(d0) & (best > d0 + 1e-13)
        if np.any(need):
            idx = np.flatnonzero(need)
            q_sub = qyu[need]
            n = len(idx)
            sub_best = best[idx].copy()
            sub_wit = wit[idx].copy()

            def offer(cond):
                v, i_xu = self._value(cond, q_sub)
                v = np.where(i_xu <= self.R, v, np.inf)
                rc, rv = self._repair(cond, q_sub)
                use = rv < v
                v = np.minimum(v, rv)
                cc = np.where(use[:, None, None, None], rc, cond)
                upd = v < sub_best
                sub_best[upd] = v[upd]
                sub_wit[upd] = cc[upd]
                return i_xu

            s = np.ones(n)
            cond, st = solve_xyu(self.log_k, q_sub, s, px=self.px, iters=120)
            i_s = offer(cond)
            lo, hi = np.zeros(n), s.copy()
            while np.any(i_s > self.R) and hi.max() < self.S_MAX:
                over = i_s > self.R
                lo = np.where(over, hi, lo)
                hi = np.where(over, hi * 2, hi)
                cond, st = solve_xyu(self.log_k, q_sub, hi, px=self.px, state=st, iters=iters)
                i_s = np.where(over, offer(cond), 0.0)
            for _ in range(steps):
                mid = 0.5 * (lo + hi)
                cond, st = solve_xyu(self.log_k, q_sub, mid, px=self.px, state=st, iters=iters)
                i_s = offer(cond)
                lo = np.where(i_s > self.R, mid, lo)
                hi = np.where(i_s > self.R, hi, mid)
            best[idx] = sub_best
            wit[idx] = sub_wit
        return best, [wit[k] for k in range(len(qy))]


# ---------------------------------------------------------------------- WAK


class WAKProgram:
    """Inner program of the helper (WAK) source-coding exponent.

    min over Q_{X|YU} with H(Q_X) >= R of
    D(Q_XY || P_XY) + I(X;U|Y) + | R + E_0(Q_X, Q_{U|X}) - H(Q_X) - |I(Y;U) - B|^+ |^+,
    with E_0 = I(X;U) for the MMI decoder (log_q None), so that the last
    term is |R - H(X|U) - |I(Y;U) - B|^+|^+.  The |.|^+ is dualized by rho in
    [0, 1] and the entropy constraint by nu >= 0; iterates are made feasible
    by mixing Q(x|y,u) toward the uniform law on X (H(Q_X) is concave along
    that path).
    """

    NU_MAX = 64.0

    def __init__(self, pxy, R, B, c, log_q=None):
        self.pxy, self.R, self.B, self.log_q = pxy, R, B, log_q
        a, b = pxy.shape
        self.a = a
        with np.errstate(divide="ignore"):
            lk = np.log(pxy)
        self.log_ref = lk[None]
        self.log_k = np.broadcast_to(lk[None, :, :, None], (1, a, b, c))
        py = pxy.sum(axis=0)
        self.py = py
        with np.errstate(divide="ignore", invalid="ignore"):
            self.post = np.where(py[None] > 0, pxy / np.where(py > 0, py, 1.0)[None], 1.0 / a)

    def lower(self, qy):
        with np.errstate(divide="ignore"):
            lp = np.where(self.py > 0, np.log(np.maximum(self.py, TINY)), -np.inf)
        bad = ((qy > 0) & (self.py[None] <= 0)).any(axis=1)
        d = (xlogx(qy) - np.where(qy > 0, qy * np.where(np.isfinite(lp), lp, 0.0), 0.0)).sum(axis=1)
        out = np.where(bad, np.inf, np.maximum(d, 0.0))
        if self.R > np.log(self.a) + 1e-12:
            out = np.full(len(qy), np.inf)
        return out

    def _terms(self, cond, qyu, off):
        j = cond * qyu[:, None]
        t = xyu_terms(j, self.log_ref)
        if self.log_q is None:
            e0 = t["I_xu"]
        else:
            e0 = lm_projection(j.sum(axis=2), self.log_q)[0]
        pen = self.R + e0 - t["H_x"] - off
        val = t["D"] + t["I_xu_given_y"] + _pos(pen)
        feas = t["H_x"] >= self.R - 1e-12
        return np.where(feas, val, np.inf), pen, t["H_x"]

    def _repair(self, cond, qyu, off):
        uni = np.full_like(cond, 1.0 / self.a)
        h = xyu_terms(cond * qyu[:, None], self.log_ref)["H_x"]
        lam = np.zeros(len(cond))
        bad = h < self.R
        if np.any(bad):
            lo, hi = np.zeros(bad.sum()), np.ones(bad.sum())
            cb, qb = cond[bad], qyu[bad]
            for _ in range(MIX_STEPS):
                mid = 0.5 * (lo + hi)
                mix = (1 - mid)[:, None, None, None] * cb + mid[:, None, None, None] / self.a
                ok = xyu_terms(mix * qb[:, None], self.log_ref)["H_x"] >= self.R
                hi = np.where(ok, mid, hi)
                lo = np.where(ok, lo, mid)
            lam[bad] = hi
        out = (1 - lam)[:, None, None, None] * cond + lam[:, None, None, None] * uni
        v, pen, _ = self._terms(out, qyu, off)
        return out, v

    def _base(self, qy, p):
        off = _pos(mi_yu(qy, p) - self.B)
        qyu = qy[:, :, None] * p
        cond = np.broadcast_to(self.post[None, :, :, None], (len(qy), self.a) + p.shape[1:]).copy()
        if self.R > np.log(self.a) + 1e-12:
            return off, qyu, cond, np.full(len(qy), np.inf)
        cond, v = self._repair(cond, qyu, off)
        return off, qyu, cond, v

    def upper(self, qy, p):
        if self.log_q is not None:
            # E_0 <= I(X;U): the MMI value of the same point bounds the mismatched one
            saved, self.log_q = self.log_q, None
            try:
                return self._base(qy, p)[3]
            finally:
                self.log_q = saved
        return self._base(qy, p)[3]

    def fast(self, qy, p):
        return self.exact(qy, p, steps=5, nu_steps=5, iters=20)[0]

    def exact(self, qy, p, steps=12, nu_steps=10, iters=WARM_ITERS):
        off, qyu, wit, best = self._base(qy, p)
        low = self.lower(qy)
        need = np.isfinite(best) & (best > low + 1e-13)
        if np.any(need):
            idx = np.flatnonzero(need)
            v, w = self._solve(qyu[need], off[need], steps, nu_steps, iters)
            upd = v < best[idx]
            best[idx[upd]] = v[upd]
            wit[idx[upd]] = w[upd]
        return best, [(wit[k], off[k]) for k in range(len(qy))]

    def _solve(self, qyu, off, steps, nu_steps, iters):
        n = len(qyu)
        best = np.full(n, np.inf)
        wit = np.zeros((n, self.a) + qyu.shape[1:])

        def offer(cond, sel):
            v, pen, h = self._terms(cond, qyu[sel], off[sel])
            rc, rv = self._repair(cond, qyu[sel], off[sel])
            use = rv < v
            v = np.minimum(v, rv)
            cc = np.where(use[:, None, None, None], rc, cond)
            ids = np.flatnonzero(sel)
            upd = v < best[ids]
            best[ids[upd]] = v[upd]
            wit[ids[upd]] = cc[upd]
            return pen, h

        def at_rho(rho, st):
            track = None if self.log_q is None else LMTracker(self.log_q)
            nu = np.zeros(n)
            everything = np.ones(n, dtype=bool)
            cond, st = solve_xyu(self.log_k, qyu, rho, nu=nu, state=st, iters=iters, track=track)
            pen, h = offer(cond, everything)
            short = h < self.R - 1e-12
            if np.any(short):
                lo, hi = np.zeros(n), np.full(n, 0.5)
                grow = short.copy()
                while np.any(grow) and hi.max() < self.NU_MAX:
                    hi = np.where(grow, hi * 2, hi)
                    sub = st.take(short)
                    c2, sub = solve_xyu(self.log_k, qyu[short], rho[short], nu=hi[short], state=sub,
                                        iters=iters, track=track if track is None else LMTracker(self.log_q))
                    st.put(short, sub)
                    p2, h2 = offer(c2, short)
                    hs = np.full(n, np.inf)
                    hs[short] = h2
                    lo = np.where(grow & (hs < self.R), hi, lo)
                    grow = grow & (hs < self.R)
                    pen[short] = p2
                for _ in range(nu_steps):
                    mid = 0.5 * (lo + hi)
                    sub = st.take(short)
                    c2, sub = solve_xyu(self.log_k, qyu[short], rho[short], nu=mid[short], state=sub,
                                        iters=iters, track=track if track is None else LMTracker(self.log_q))
                    st.put(short, sub)
                    p2, h2 = offer(c2, short)
                    hs = np.full(n, np.inf)
                    hs[short] = h2
                    lo = np.where(short & (hs < self.R), mid, lo)
                    hi = np.where(short & (hs >= self.R), mid, hi)
                    pen[short] = p2
            return pen, st

        rho = np.ones(n)
        pen, st = at_rho(rho, None)
        lo, hi = np.zeros(n), np.ones(n)
        active = pen < 0
        if np.any(active):
            for _ in range(steps):
                mid = np.where(active, 0.5 * (lo + hi), 1.0)
                pen, st = at_rho(mid, st)
                up = pen > 0
                lo = np.where(active & up, mid, lo)
                hi = np.where(active & ~up, mid, hi)
        return best, wit
