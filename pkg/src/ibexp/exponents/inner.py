"""Batched solvers for the innermost minimizations.

Every solver works on a leading batch axis N so that many (Q_Y, P_{U|Y})
candidates are handled by one sequence of numpy operations.

Two inner problems appear:

* over Q_{X|YU} with the (Y,U) marginal fixed, objective
  ``-E log K(X,Y) + sum Q log Q(x|y,u) + rho * sum Q(x,u) log Q(x|u)``
  and either a fixed X marginal or a lower bound on H(Q_X);
* over Q_{Y|X} with fixed X and Y marginals, objective
  ``D(Q || W | P_X) + s * I(P_X, Q P_{U|Y})``.

The constrained versions are handled by bisection on the scalar multiplier,
warm-starting each solve from the previous one.
"""

from __future__ import annotations

import numpy as np

LOG_FLOOR = -700.0
TINY = 1e-300


def xlogx(a: np.ndarray) -> np.ndarray:
    # 0 log 0 = 0 falls out of the floor: 0 * log(TINY) == 0
    return a * np.log(np.maximum(a, TINY))


def ent(p: np.ndarray, axis) -> np.ndarray:
    return -xlogx(p).sum(axis=axis)


def _softmax_x(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(logits - m)
    s = e.sum(axis=1, keepdims=True)
    return e / np.where(s > 0, s, 1.0)


def _safe_log(a: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(a, np.exp(LOG_FLOOR)))


# ------------------------------------------------------------------ X|YU core


class XYUState:
    """Warm-start state for the Q_{X|YU} fixed-point iteration."""

    __slots__ = ("log_t", "lam", "log_qx")

    def __init__(self, log_t, lam, log_qx):
        self.log_t = log_t
        self.lam = lam
        self.log_qx = log_qx

    def copy(self) -> "XYUState":
        return XYUState(self.log_t.copy(), self.lam.copy(), self.log_qx.copy())

    def take(self, mask) -> "XYUState":
        return XYUState(self.log_t[mask], self.lam[mask], self.log_qx[mask])

    def put(self, mask, other: "XYUState"):
        self.log_t[mask] = other.log_t
        self.lam[mask] = other.lam
        self.log_qx[mask] = other.log_qx


def xyu_joint(cond: np.ndarray, qyu: np.ndarray) -> np.ndarray:
    return cond * qyu[:, None, :, :]


def solve_xyu(log_k, qyu, rho, *, px=None, nu=None, state=None, iters=80, track=None,
              tol=1e-10):
    """Fixed-point iteration for the Q_{X|YU} problem at fixed multipliers.

    log_k: (N|1, a, b, c) log kernel, -inf where forbidden.
    qyu:   (N, b, c) fixed (Y,U) joint.
    rho:   (N,) weight of sum Q(x,u) log Q(x|u).
    px:    (a,) or (N, a) target X marginal (fixed-marginal mode), or None.
    nu:    (N,) weight of sum Q_x log Q_x (entropy-constraint mode), or None.
    track: optional map from the (X,U) joint (N, a, c) to the log-target that
           replaces log Q(x|u) in the rho term (used for mismatched metrics,
           where the gradient of E_0 is log Q'(x|u) of its minimizer Q').
    Stops early once the iterate and the X-marginal residual move by less than `tol`.
    Returns (cond, state) where cond is Q(x|y,u) of shape (N, a, b, c).
    """
    N, b, c = qyu.shape
    a = log_k.shape[1]
    rho = np.asarray(rho, dtype=float).reshape(N)
    if state is None:
        state = XYUState(np.full((N, a, c), -np.log(a)), np.zeros((N, a)),
                         np.full((N, a), -np.log(a)))
    log_t, lam, log_qx = state.log_t, state.lam, state.log_qx
    if px is not None:
        px = np.broadcast_to(np.asarray(px, dtype=float), (N, a))
        log_px = np.where(px > 0, np.log(np.maximum(px, TINY)), LOG_FLOOR)
    if nu is not None:
        nu = np.asarray(nu, dtype=float).reshape(N)
    eta_t = (1.0 / (1.0 + rho))[:, None, None]
    qu = qyu.sum(axis=1)  # (N, c)
    qu_safe = np.where(qu > 0, qu, 1.0)[:, None, :]
    rho4 = rho[:, None, None, None]
    cond = None
    for _ in range(iters):
        logits = log_k - rho4 * log_t[:, :, None, :]
        if px is not None:
            logits = logits - lam[:, :, None, None]
        if nu is not None:
            logits = logits - (nu[:, None] * log_qx)[:, :, None, None]
        cond = _softmax_x(logits)
        joint = cond * qyu[:, None, :, :]
        qxu = joint.sum(axis=2)
        qx = qxu.sum(axis=2)
        if px is not None:
            lam = lam + (_safe_log(qx) - log_px)
            lam = lam - lam.mean(axis=1, keepdims=True)
        if nu is not None:
            eta_x = (1.0 / (1.0 + rho + nu))[:, None]
            log_qx = (1 - eta_x) * log_qx + eta_x * _safe_log(qx)
        target = _safe_log(qxu / qu_safe) if track is None else track(qxu)
        step = eta_t * (target - log_t)
        log_t = log_t + step
        if np.abs(step).max() < tol and (px is None or np.abs(_safe_log(qx) - log_px).max() < tol):
            break
    state.log_t, state.lam, state.log_qx = log_t, lam, log_qx
    return cond, state


def xyu_terms(joint: np.ndarray, log_ref: np.ndarray):
    """Information terms of a batch of Q_{XYU} joints.

    log_ref is log of the reference for the divergence term, (N|1, a, b):
    P_X W for channel problems and P_XY for source problems.
    Returns dict with D, I_xu_given_y, I_xu, H_x_given_u, H_x, I_yu, qx.
    """
    qxy = joint.sum(axis=3)
    qxu = joint.sum(axis=2)
    qyu = joint.sum(axis=1)
    qx = qxy.sum(axis=2)
    qy = qxy.sum(axis=1)
    qu = qyu.sum(axis=1)
    h_xyu = ent(joint, (1, 2, 3))
    h_xy = ent(qxy, (1, 2))
    h_yu = ent(qyu, (1, 2))
    h_xu = ent(qxu, (1, 2))
    h_x = ent(qx, 1)
    h_y = ent(qy, 1)
    h_u = ent(qu, 1)
    bad = (qxy > 0) & ~np.isfinite(log_ref)
    cross = np.where(qxy > 0, qxy * np.where(np.isfinite(log_ref), log_ref, 0.0), 0.0).sum(axis=(1, 2))
    d = -h_xy - cross
    d = np.where(bad.any(axis=(1, 2)), np.inf, np.maximum(d, 0.0))
    i_xu_y = np.maximum(h_xy + h_yu - h_xyu - h_y, 0.0)
    i_xu = np.maximum(h_x + h_u - h_xu, 0.0)
    i_yu = np.maximum(h_y + h_u - h_yu, 0.0)
    return {
        "D": d,
        "I_xu_given_y": i_xu_y,
        "I_xu": i_xu,
        "H_x_given_u": np.maximum(h_xu - h_u, 0.0),
        "H_x": h_x,
        "I_yu": i_yu,
        "qx": qx,
    }


# ------------------------------------------------------------------ Y|X core


def sinkhorn_rows_cols(log_m, row, col, iters=200):
    """Scale exp(log_m) (N, a, b) to row sums `row` (a,) and column sums `col` (N, b)."""
    N, a, b = log_m.shape
    log_row = np.where(row > 0, np.log(np.maximum(row, TINY)), -np.inf)
    log_col = np.where(col > 0, np.log(np.maximum(col, TINY)), -np.inf)
    f = np.zeros((N, a))
    g = np.zeros((N, b))
    for _ in range(iters):
        z = log_m + g[:, None, :]
        f = log_row[None, :] - _lse(z, axis=2)
        z = log_m + f[:, :, None]
        g = log_col - _lse(z, axis=1)
    m = np.exp(log_m + f[:, :, None] + g[:, None, :])
    return np.nan_to_num(m, nan=0.0)


def _lse(z, axis):
    m = z.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.exp(z - m).sum(axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        out = np.log(s) + m
    return np.squeeze(out, axis=axis)


class YXState:
    __slots__ = ("g_hat", "f", "g")

    def __init__(self, g_hat, f, g):
        self.g_hat, self.f, self.g = g_hat, f, g

    def copy(self) -> "YXState":
        return YXState(self.g_hat.copy(), self.f.copy(), self.g.copy())

    def take(self, mask) -> "YXState":
        return YXState(self.g_hat[mask], self.f[mask], self.g[mask])

    def put(self, mask, other: "YXState"):
        self.g_hat[mask] = other.g_hat
        self.f[mask] = other.f
        self.g[mask] = other.g


def solve_yx(log_w, px, qy, p_uy, s, *, state=None, iters=120, sinkhorn_steps=3, tol=1e-10):
    """Minimize D(Q||W|P_X) + s I(P_X, Q P_{U|Y}) over Q_{Y|X} with P_X Q = Q_Y.

    log_w: (a, b) log channel; px: (a,); qy: (N, b); p_uy: (N, b, c); s: (N,).
    Scaling is multiplicative on a row-shifted kernel; the linearized
    information gradient is damped with weight 1/(1+s).  Stops early once
    the gradient estimate moves by less than `tol`.
    Returns (joint M(x,y) of shape (N, a, b), state).
    """
    N, b = qy.shape
    a = px.size
    s = np.asarray(s, dtype=float).reshape(N)
    base = np.where(np.isfinite(log_w), log_w, -np.inf)[None]
    if state is None:
        state = YXState(np.zeros((N, a, b)), np.ones((N, a)), np.ones((N, b)))
    g_hat, f, g = state.g_hat, state.f, state.g
    eta = (1.0 / (1.0 + s))[:, None, None]
    s3 = s[:, None, None]
    px_row = px[None, :]
    px_safe = np.where(px > 0, px, 1.0)[None, :, None]
    p_t = np.swapaxes(p_uy, 1, 2)
    m = None
    for _ in range(iters):
        log_m = base - s3 * g_hat
        log_m = log_m - log_m.max(axis=2, keepdims=True)
        k = np.exp(log_m)
        for _ in range(sinkhorn_steps):
            f = px_row / np.maximum((k @ g[:, :, None])[..., 0], TINY)
            g = qy / np.maximum((f[:, None, :] @ k)[:, 0, :], TINY)
        m = f[:, :, None] * k * g[:, None, :]
        v = (m / px_safe) @ p_uy  # (N, a, c)
        vu = px @ v
        lv = _safe_log(v) - _safe_log(vu)[:, None, :]
        grad = lv @ p_t  # (N, a, b)
        new = (1 - eta) * g_hat + eta * grad
        delta = np.abs(new - g_hat).max()
        g_hat = new
        if delta < tol:
            break
    # finish the scaling so the marginals are tight for the returned joint
    log_m = base - s3 * g_hat
    k = np.exp(log_m - log_m.max(axis=2, keepdims=True))
    for _ in range(50):
        f = px_row / np.maximum((k @ g[:, :, None])[..., 0], TINY)
        g = qy / np.maximum((f[:, None, :] @ k)[:, 0, :], TINY)
    m = f[:, :, None] * k * g[:, None, :]
    state.g_hat, state.f, state.g = g_hat, f, g
    return m, state


def yx_terms(m, log_w, px, p_uy):
    """D(Q||W|P_X), I(P_X, Q P_{U|Y}) and marginal residuals for joints m (N, a, b)."""
    log_ref = np.where(np.isfinite(log_w), log_w, 0.0)[None] + _safe_log(px)[None, :, None]
    bad = ((m > 1e-300) & ~np.isfinite(log_w)[None]).any(axis=(1, 2))
    d = (xlogx(m) - np.where(m > 0, m * log_ref, 0.0)).sum(axis=(1, 2))
    d = np.where(bad, np.inf, np.maximum(d, 0.0))
    xu = m @ p_uy  # (N, a, c)
    i_xu = np.maximum(ent(xu.sum(axis=2), 1) + ent(xu.sum(axis=1), 1) - ent(xu, (1, 2)), 0.0)
    row_res = np.abs(m.sum(axis=2) - px[None]).max(axis=1)
    return {"D": d, "I": i_xu, "row_res": row_res, "qy": m.sum(axis=1)}
