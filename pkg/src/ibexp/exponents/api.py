"""Public entry points for capacities, exponents and rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..config import ValidationError
from ..types_core import CondPmf, JointPmf, Pmf, check_channel, check_joint, check_pmf
from .capacity import CapacityConfig, CapacityPool, search_input
from .dmc import dmc_exponents
from .evaluators import (RandomCodingMismatched, RandomCodingMMI, SpherePacking,
                         SpherePackingConjectured, WAKProgram)
from .ezero import lm_projection
from .inner import ent
from .search import (MinMaxEngine, Objective, SearchConfig, local_moves, mi_yu,
                     project_bottleneck, run_outer, simplex_lattice)

INF = math.inf


@dataclass(frozen=True)
class ExponentQuery:
    """Parameters of one exponent evaluation (rates in nats per symbol)."""

    channel: Any
    B: float
    R: float
    input_dist: Any = "optimize"
    u_size: int | None = None
    metric: Any = None
    grid_resolution: int = 60
    refinement_rounds: int = 4
    seed: int = 20240917

    def validated(self) -> "ExponentQuery":
        w = check_channel(_raw(self.channel))
        if not (self.B >= 0 and self.R >= 0):
            raise ValidationError("B and R must be non-negative")
        if self.grid_resolution < 1 or self.refinement_rounds < 0:
            raise ValidationError("grid_resolution >= 1 and refinement_rounds >= 0 required")
        if self.u_size is not None and self.u_size < 1:
            raise ValidationError("u_size must be positive")
        px = self.input_dist
        if not (isinstance(px, str) and px == "optimize"):
            px = check_pmf(_raw(px), "input_dist")
            if px.size != w.shape[0]:
                raise ValidationError("input_dist does not match the channel input alphabet")
        metric = self.metric
        if metric is not None and not (isinstance(metric, str) and metric.upper() == "MMI"):
            metric = np.asarray(metric, dtype=float)
            if metric.ndim != 2 or metric.shape[0] != w.shape[0] or np.any(metric < 0) or \
                    not np.all(np.isfinite(metric)):
                raise ValidationError("metric must be a non-negative |X| x |U| matrix")
        else:
            metric = None
        return ExponentQuery(w, float(self.B), float(self.R), px, self.u_size, metric,
                             int(self.grid_resolution), int(self.refinement_rounds), int(self.seed))


@dataclass
class ExponentResult:
    value: float
    witnesses: dict = field(default_factory=dict)
    grid_points_evaluated: int = 0
    refinement_gap: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)

    def to_json(self) -> dict:
        return {
            "value": _num(self.value),
            "witnesses": {k: _tolist(v) for k, v in self.witnesses.items()},
            "grid_points_evaluated": int(self.grid_points_evaluated),
            "refinement_gap": _num(self.refinement_gap),
            "diagnostics": {k: _tolist(v) for k, v in self.diagnostics.items()},
        }


def _num(v):
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _tolist(v):
    if isinstance(v, np.ndarray):
        if v.dtype.kind == "f":
            return [_tolist(x) for x in v] if v.ndim else _num(v)
        return v.tolist()
    if isinstance(v, (float, np.floating)):
        return _num(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, dict):
        return {k: _tolist(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_tolist(x) for x in v]
    return v


def _raw(x):
    if isinstance(x, Pmf):
        return x.probs
    if isinstance(x, CondPmf):
        return x.rows
    if isinstance(x, JointPmf):
        return x.tensor
    return np.asarray(x, dtype=float)


def _clamp(v: float) -> float:
    """Exponents are non-negative; report solver-level negatives as exact zero."""
    if math.isinf(v):
        return v
    return 0.0 if v < 1e-12 else float(v)


# ----------------------------------------------------------------- capacity


def capacity_curve(channel, Bs, u_size: int | None = None, input_dist="optimize",
                   config: CapacityConfig | None = None) -> list[ExponentResult]:
    """Capacity for several bottleneck values from one shared candidate pool."""
    w = check_channel(_raw(channel))
    Bs = [float(B) for B in Bs]
    if any(B < 0 for B in Bs):
        raise ValidationError("B must be non-negative")
    c = u_size if u_size is not None else w.shape[1] + 1
    if c < 1:
        raise ValidationError("u_size must be at least 1")
    cfg = config or CapacityConfig()
    fixed = None
    if not (isinstance(input_dist, str) and input_dist == "optimize"):
        fixed = check_pmf(_raw(input_dist), "input_dist")
    pool = CapacityPool(w, c, cfg)
    search_input(pool, [B for B in Bs if B > 0] or [0.0], fixed_px=fixed)
    out = []
    for B in Bs:
        if B == 0:
            px = fixed if fixed is not None else np.full(w.shape[0], 1.0 / w.shape[0])
            p = np.zeros((w.shape[1], c))
            p[:, 0] = 1.0
            out.append(ExponentResult(0.0, {"P_X": px, "P_U|Y": p}, len(pool.entries), 0.0,
                                      {"converged": True, "pool_size": pool.evaluations}))
            continue
        v, px, p = pool.best(B)
        out.append(ExponentResult(
            _clamp(v), {"P_X": px, "P_U|Y": p}, len(pool.entries), 0.0,
            {"converged": pool.max_change < 1e-6, "ib_max_change": pool.max_change,
             "pool_size": pool.evaluations,
             "I_YU": float(mi_yu((px @ w)[None], p[None])[0])}))
    return out


def capacity_ib(channel, B: float, u_size: int | None = None, input_dist="optimize",
                config: CapacityConfig | None = None) -> ExponentResult:
    """max over P_X, P_{U|Y} of I(X;U) subject to I(Y;U) <= B (Markov X - Y - U)."""
    return capacity_curve(channel, [B], u_size, input_dist, config)[0]


# ------------------------------------------------------------------- E_0


def e_zero(p_x, q_ux, metric="MMI") -> float:
    """E_0(P_X, Q_{U|X}) for the MMI decoder or a log-metric q(x,u) >= 0."""
    px = check_pmf(_raw(p_x), "P_X")
    q = check_channel(_raw(q_ux), "Q_U|X")
    if q.shape[0] != px.size:
        raise ValidationError("Q_U|X rows must match P_X")
    joint = px[:, None] * q
    if isinstance(metric, str):
        if metric.upper() != "MMI":
            raise ValidationError(f"unknown metric {metric!r}")
        return float(max(0.0, ent(joint.sum(1)[None], 1)[0] + ent(joint.sum(0)[None], 1)[0]
                         - ent(joint[None], (1, 2))[0]))
    m = np.asarray(metric, dtype=float)
    if m.shape != q.shape:
        raise ValidationError("metric must have the shape of Q_U|X")
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise ValidationError("metric entries must be non-negative and finite")
    with np.errstate(divide="ignore"):
        log_q = np.log(m)
    return float(lm_projection(joint[None], log_q)[0][0])


# ------------------------------------------------------- min-max programs


def _engine_run(ev, objectives, b, c, support, anchors, cfg):
    eng = MinMaxEngine(ev, objectives, b, c, cfg)
    diag = run_outer(eng, support, anchors, cfg)
    return eng, diag


def _search_cfg(q: ExponentQuery) -> SearchConfig:
    return SearchConfig(grid_resolution=q.grid_resolution, refinement_rounds=q.refinement_rounds,
                        seed=q.seed)


def _support(px, w):
    """Output symbols that Q_Y may charge with finite divergence."""
    reach = (px[:, None] * w).sum(axis=0) > 0
    return np.flatnonzero(reach)


def _embed_x(wit, keep, fill=None):
    """Re-insert input letters that were dropped because P_X gives them no mass."""
    full = np.zeros((keep.size,) + wit.shape[1:]) if fill is None else np.array(fill, dtype=float)
    full[keep] = wit
    return full


_RC_CACHE: dict = {}


def _rc_pair(q: ExponentQuery, px: np.ndarray):
    key = ("rc", q.channel.tobytes(), q.channel.shape, px.tobytes(), q.R, q.B, q.u_size,
           None if q.metric is None else q.metric.tobytes(), q.grid_resolution,
           q.refinement_rounds, q.seed)
    if key in _RC_CACHE:
        return _RC_CACHE[key]
    keep = px > 0
    w, px_s = q.channel[keep], px[keep]
    b = w.shape[1]
    c = q.u_size or b + 1
    if q.metric is None:
        ev = RandomCodingMMI(w, px_s, q.R, q.B, c)
    else:
        if q.metric.shape[1] != c:
            raise ValidationError(f"metric has {q.metric.shape[1]} columns but u_size is {c}")
        with np.errstate(divide="ignore"):
            ev = RandomCodingMismatched(w, px_s, q.R, q.B, c, np.log(q.metric[keep]))
    objs = [Objective("rc", None), Objective("nb", q.B)]
    cfg = _search_cfg(q)
    eng, diag = _engine_run(ev, objs, b, c, _support(px_s, w), [px_s @ w], cfg)
    out = []
    for k, obj in enumerate(objs):
        v, qy, p, wit = eng.witness(obj)
        wits = {"P_X": px, "Q_Y": qy, "P_U|Y": p}
        if wit is not None:
            wits["Q_X|YU"] = _embed_x(wit[0], keep)
        out.append(ExponentResult(_clamp(v), wits, diag["outer_points"], diag["refinement_gap"][k],
                                  {"objective": obj.name, "exact_evaluations": eng.exact_evals,
                                   "upper_evaluations": eng.upper_evals,
                                   "screen_evaluations": eng.fast_evals,
                                   "solved_points": diag["solved_points"], "u_size": c}))
    if len(_RC_CACHE) > 256:
        _RC_CACHE.clear()
    _RC_CACHE[key] = out
    return out


def _optimize_input(q: ExponentQuery, fn) -> ExponentResult:
    """max over P_X of fn(P_X): simplex lattice, then halving local moves."""
    a = q.channel.shape[0]
    res = 10 if a == 2 else 4
    cache = {}

    def val(px):
        k = tuple(np.round(px, 12))
        if k not in cache:
            cache[k] = fn(px)
        return cache[k]

    best_px = max(simplex_lattice(a, res), key=lambda p: (val(p).value, -np.abs(p - 1 / a).sum()))
    h = 1.0 / res
    for _ in range(max(1, q.refinement_rounds)):
        h /= 2
        moves = []
        for i in range(a):
            for j in range(a):
                if i != j and best_px[i] > 0:
                    r = best_px.copy()
                    t = min(h, r[i])
                    r[i] -= t
                    r[j] += t
                    moves.append(r)
        for r in moves:
            if val(r).value > val(best_px).value + 1e-12:
                best_px = r
    res_best = val(best_px)
    res_best.diagnostics["input_search_points"] = len(cache)
    return res_best


def _with_input(q: ExponentQuery, pick: int) -> ExponentResult:
    if isinstance(q.input_dist, str):
        return _optimize_input(q, lambda px: _rc_pair(q, px)[pick])
    return _rc_pair(q, q.input_dist)[pick]


def exponent_random_coding(query: ExponentQuery) -> ExponentResult:
    """min_{Q_Y} max_{P_U|Y} min_{Q_X|YU: Q_X=P_X} D + I(X;U|Y) + |E_0 - R - |I(Y;U)-B|^+|^+."""
    return _with_input(query.validated(), 0)


def exponent_no_binning(query: ExponentQuery) -> ExponentResult:
    """Same program with P_U|Y restricted to I(Q_Y, P_U|Y) <= B and no bin-size term.

    Computed on the same candidate pools as exponent_random_coding, so the
    ordering between the two is exact.
    """
    return _with_input(query.validated(), 1)


def _sp_common(query: ExponentQuery, conjectured: bool) -> ExponentResult:
    q = query.validated()
    if isinstance(q.input_dist, str):
        raise ValidationError("sphere packing needs a fixed input composition P_X")
    w_full, px = q.channel, q.input_dist
    a, b = w_full.shape
    c = q.u_size or a * b + b + 1
    keep = px > 0
    w, px_s = w_full[keep], px[keep]
    ev = SpherePackingConjectured(w, px_s, q.R, c) if conjectured else SpherePacking(w, px_s, q.R)
    obj = Objective("sp", q.B)
    eng, diag = _engine_run(ev, [obj], b, c, _support(px_s, w), [px_s @ w], _search_cfg(q))
    v, qy, p, wit = eng.witness(obj)
    wits = {"P_X": px, "Q_Y": qy, "P_U|Y": p}
    if wit is not None:
        if conjectured:
            wits["Q_X|YU"] = _embed_x(np.asarray(wit), keep)
        else:
            wits["Q_Y|X"] = _embed_x(np.asarray(wit), keep, fill=w_full)
    diagn = {"exact_evaluations": eng.exact_evals, "upper_evaluations": eng.upper_evals,
             "screen_evaluations": eng.fast_evals, "solved_points": diag["solved_points"],
             "u_size": c, "infeasible": bool(math.isinf(v))}
    if conjectured:
        diagn["experimental"] = True
    return ExponentResult(_clamp(v), wits, diag["outer_points"], diag["refinement_gap"][0], diagn)


def exponent_sphere_packing(query: ExponentQuery) -> ExponentResult:
    """min_{Q_Y} max_{P_U|Y: I<=B} min_{Q_Y|X: P_X Q=Q_Y, I(P_X, Q P_U|Y)<=R} D(Q||W|P_X)."""
    return _sp_common(query, False)


def exponent_sphere_packing_conjectured(query: ExponentQuery) -> ExponentResult:
    """Candidate strengthening with the extra I(X;U|Y) term; reported as experimental."""
    return _sp_common(query, True)


def exponent_wak(source, B: float, R: float, u_size: int | None = None, metric="MMI",
                 grid_resolution: int = 60, refinement_rounds: int = 4,
                 seed: int = 20240917) -> ExponentResult:
    """Helper source-coding exponent for a joint source P_XY (rows X, columns Y)."""
    pxy = check_joint(_raw(source), "source")
    if pxy.ndim != 2:
        raise ValidationError("source must be a |X| x |Y| joint pmf")
    if B < 0 or R < 0:
        raise ValidationError("B and R must be non-negative")
    a, b = pxy.shape
    c = u_size or b + 1
    log_q = None
    if not (isinstance(metric, str) and metric.upper() == "MMI"):
        m = np.asarray(metric, dtype=float)
        if m.shape != (a, c) or np.any(m < 0):
            raise ValidationError("metric must be a non-negative |X| x u_size matrix")
        with np.errstate(divide="ignore"):
            log_q = np.log(m)
    ev = WAKProgram(pxy, float(R), float(B), c, log_q)
    cfg = SearchConfig(grid_resolution=grid_resolution, refinement_rounds=refinement_rounds, seed=seed)
    py = pxy.sum(axis=0)
    obj = Objective("wak", None)
    eng, diag = _engine_run(ev, [obj], b, c, np.flatnonzero(py > 0), [py], cfg)
    v, qy, p, wit = eng.witness(obj)
    wits = {"Q_Y": qy, "P_U|Y": p}
    if wit is not None:
        wits["Q_X|YU"] = wit[0]
    return ExponentResult(_clamp(v), wits, diag["outer_points"], diag["refinement_gap"][0],
                          {"exact_evaluations": eng.exact_evals, "u_size": c,
                           "infeasible": bool(math.isinf(v))})


# ----------------------------------------------------------------- LM rates


def _best_e0(px, w, cands, log_q, B, refine_rounds=4):
    """max of E_0(P_X, W P) over P with I(P_Y, P) <= B, seeded by `cands`."""
    py = px @ w

    def score(ps):
        ps = project_bottleneck(np.broadcast_to(py, (len(ps), py.size)).copy(), ps, B)
        qxu = px[None, :, None] * np.matmul(w, ps)
        if log_q is None:
            v = np.maximum(ent(qxu.sum(2), 1) + ent(qxu.sum(1), 1) - ent(qxu, (1, 2)), 0.0)
        else:
            v = lm_projection(qxu, log_q)[0]
        return ps, v

    ps, v = score(cands)
    k = int(np.argmax(v))
    best_p, best_v = ps[k], float(v[k])
    step = 0.25
    for _ in range(refine_rounds):
        for _ in range(6):
            mv = local_moves(best_p, step)
            if not len(mv):
                break
            mp, mvv = score(mv)
            j = int(np.argmax(mvv))
            if mvv[j] <= best_v + 1e-13:
                break
            best_p, best_v = mp[j], float(mvv[j])
        step /= 2
    return best_v, best_p


def lm_rate(mode: str, model, B: float, metric="MMI", u_size: int | None = None,
            config: CapacityConfig | None = None) -> ExponentResult:
    """LM rate of the bottleneck channel (mode 'IB') or the helper source problem ('WAK').

    IB:  max_{P_X, P_U|Y} E_0(P_X, P_U|X) s.t. I(P_Y, P_U|Y) <= B.
    WAK: H(P_X) - max_{P_U|Y} E_0(P_X, P_U|X) s.t. I(P_Y, P_U|Y) <= B.
    """
    mode = mode.upper()
    if B < 0:
        raise ValidationError("B must be non-negative")
    mmi = isinstance(metric, str)
    if mmi and metric.upper() != "MMI":
        raise ValidationError(f"unknown metric {metric!r}")
    if mode == "IB":
        w = check_channel(_raw(model))
        pxs = None
    elif mode == "WAK":
        pxy = check_joint(_raw(model), "source")
        px = pxy.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(px[:, None] > 0, pxy / np.where(px > 0, px, 1.0)[:, None], 1.0 / pxy.shape[1])
        pxs = px
    else:
        raise ValidationError("mode must be 'IB' or 'WAK'")
    a, b = w.shape
    c = u_size or b + 1
    log_q = None
    if not mmi:
        m = np.asarray(metric, dtype=float)
        if m.shape != (a, c) or np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValidationError("metric must be a non-negative |X| x u_size matrix")
        with np.errstate(divide="ignore"):
            log_q = np.log(m)
    cfg = config or CapacityConfig()
    pool = CapacityPool(w, c, cfg)
    search_input(pool, [B], fixed_px=pxs)
    if mode == "IB" and B == 0:
        return ExponentResult(0.0, {}, len(pool.entries), 0.0, {"mode": mode})
    # E_0 <= I(X;U), so entries whose best admissible I(X;U) is below the
    # incumbent cannot improve it; visit entries in decreasing order of that bound.
    ranked = []
    for e_px, allp, iyu, ixu in pool.entries:
        ok = iyu <= B + 1e-12
        if np.any(ok):
            ranked.append((float(np.max(np.where(ok, ixu, -np.inf))), e_px, allp, ok, ixu))
    ranked.sort(key=lambda r: -r[0])
    best = (-INF, None, None)
    for bound, e_px, allp, ok, ixu in ranked:
        if bound <= best[0] + 1e-13:
            break
        if mmi:
            k = int(np.argmax(np.where(ok, ixu, -np.inf)))
            v, p = float(ixu[k]), allp[k]
        else:
            order = np.argsort(-np.where(ok, ixu, -np.inf), kind="stable")[:24]
            v, p = _best_e0(e_px, w, allp[order], log_q, B, refine_rounds=0)
        if v > best[0]:
            best = (v, e_px, p)
    if not mmi and best[1] is not None:
        v, p = _best_e0(best[1], w, best[2][None], log_q, B)
        if v > best[0]:
            best = (v, best[1], p)
    v, px, p = best
    wits = {"P_X": px, "P_U|Y": p}
    if mode == "WAK":
        hx = float(ent(px[None], 1)[0])
        return ExponentResult(max(0.0, hx - v), wits, len(pool.entries), 0.0,
                              {"mode": mode, "max_E0": v, "H_X": hx})
    return ExponentResult(_clamp(v), wits, len(pool.entries), 0.0, {"mode": mode})


# ---------------------------------------------------------------- DMC oracle


def dmc_reference_exponents(channel, R: float, p_x, resolution: int = 100):
    """(E_r_dmc, E_sp_dmc) of the plain DMC by direct grid search with zooming."""
    w = check_channel(_raw(channel))
    px = check_pmf(_raw(p_x), "P_X")
    if R < 0:
        raise ValidationError("R must be non-negative")
    er, esp, _ = dmc_exponents(w, px, float(R), resolution)
    return _clamp(er), _clamp(esp)
